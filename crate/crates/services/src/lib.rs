//! Services around the shelfwatch core: the edge agent that turns landmark
//! streams into suspicion events, the cloud service that corroborates them
//! against inventory, and the HTTP protocol between the two.

pub mod cloud;
pub mod control;
pub mod edge;
pub mod http;
