//! In-memory product database with a write-ahead log.
//!
//! Sales decrement the expected shelf count as they arrive; shelf
//! observations record what is actually there. Reconciliation compares
//! the two. The catalog is fixed when the store is opened.
//!
//! Locks are always taken in the order product, transaction set, audit
//! log, write-ahead log.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, DecodeError};
use crate::model::{ProductRecord, ReconciliationResult, SaleTransaction, ShelfObservation, Timestamp};

pub const DEFAULT_STALENESS_MS: i64 = 60_000;

/// Per-product outcomes of reconciling one zone, in catalog order.
pub type ZoneReconciliation = Vec<(String, Result<ReconciliationResult, InventoryError>)>;

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("unknown product {0}")]
    UnknownProduct(String),
    #[error("unknown zone {0}")]
    UnknownZone(String),
    #[error("product {product_id} is not stocked in zone {zone_id}")]
    UnknownPairing { zone_id: String, product_id: String },
    #[error("oversell of {product_id}: requested {requested}, expected stock {available}")]
    Oversell {
        product_id: String,
        requested: u32,
        available: u32,
    },
    #[error("no observation of {0}")]
    NoObservation(String),
    #[error("latest observation of {product_id} is {age_ms} ms old (bound {bound_ms} ms)")]
    Stale {
        product_id: String,
        age_ms: i64,
        bound_ms: i64,
    },
    #[error("duplicate product {0} in catalog")]
    DuplicateProduct(String),
    #[error("catalog: {0}")]
    Catalog(DecodeError),
    #[error("write-ahead log line {line}: {source}")]
    Log { line: usize, source: DecodeError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl InventoryError {
    /// True for errors meaning "cannot corroborate right now" rather than
    /// a bad request.
    pub fn is_staleness(&self) -> bool {
        matches!(self, InventoryError::Stale { .. } | InventoryError::NoObservation(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InventoryConfig {
    pub staleness_ms: i64,
}

impl Default for InventoryConfig {
    fn default() -> Self {
        Self {
            staleness_ms: DEFAULT_STALENESS_MS,
        }
    }
}

/// Initial product table; `products` in file order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub products: Vec<ProductRecord>,
}

impl Catalog {
    pub fn load(path: &Path) -> Result<Self, InventoryError> {
        let bytes = std::fs::read(path)?;
        codec::decode(&bytes).map_err(InventoryError::Catalog)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaleReceipt {
    pub record: ProductRecord,
    /// False when `tx_id` had already been applied.
    pub applied: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AuditEntry {
    Sale {
        tx: SaleTransaction,
        expected_before: u32,
        expected_after: u32,
    },
    Observation {
        obs: ShelfObservation,
        /// False when a newer observation for the pair was already held.
        became_latest: bool,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum WalRecord {
    Sale(SaleTransaction),
    Observation(ShelfObservation),
}

struct ProductState {
    record: ProductRecord,
    latest: Option<ShelfObservation>,
}

pub struct Inventory {
    products: HashMap<String, Mutex<ProductState>>,
    /// Zone to product ids, catalog order.
    zones: BTreeMap<String, Vec<String>>,
    seen_tx: Mutex<HashMap<String, String>>,
    audit: Mutex<Vec<AuditEntry>>,
    wal: Option<Mutex<BufWriter<File>>>,
    config: InventoryConfig,
}

impl Inventory {
    pub fn new(catalog: Catalog, config: InventoryConfig) -> Result<Self, InventoryError> {
        let mut products = HashMap::new();
        let mut zones: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for record in catalog.products {
            if products.contains_key(&record.product_id) {
                return Err(InventoryError::DuplicateProduct(record.product_id));
            }
            zones
                .entry(record.zone_id.clone())
                .or_default()
                .push(record.product_id.clone());
            products.insert(
                record.product_id.clone(),
                Mutex::new(ProductState { record, latest: None }),
            );
        }
        Ok(Self {
            products,
            zones,
            seen_tx: Mutex::new(HashMap::new()),
            audit: Mutex::new(Vec::new()),
            wal: None,
            config,
        })
    }

    /// Opens a store backed by `wal_path`, replaying any records already in
    /// it on top of `catalog`.
    pub fn open(
        catalog: Catalog,
        config: InventoryConfig,
        wal_path: impl Into<PathBuf>,
    ) -> Result<Self, InventoryError> {
        let wal_path = wal_path.into();
        let mut inventory = Self::new(catalog, config)?;
        if wal_path.exists() {
            let reader = BufReader::new(File::open(&wal_path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: WalRecord =
                    codec::decode_str(&line).map_err(|source| InventoryError::Log { line: i + 1, source })?;
                match record {
                    WalRecord::Sale(tx) => {
                        inventory.apply_sale(&tx)?;
                    }
                    WalRecord::Observation(obs) => inventory.record_observation(&obs)?,
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&wal_path)?;
        inventory.wal = Some(Mutex::new(BufWriter::new(file)));
        Ok(inventory)
    }

    pub fn config(&self) -> &InventoryConfig {
        &self.config
    }

    fn product(&self, product_id: &str) -> Result<MutexGuard<'_, ProductState>, InventoryError> {
        self.products
            .get(product_id)
            .map(|m| m.lock().expect("product lock poisoned"))
            .ok_or_else(|| InventoryError::UnknownProduct(product_id.to_owned()))
    }

    fn log(&self, record: &WalRecord) -> Result<(), InventoryError> {
        if let Some(wal) = &self.wal {
            let mut wal = wal.lock().expect("wal lock poisoned");
            wal.write_all(&codec::encode(record))?;
            wal.write_all(b"\n")?;
            wal.flush()?;
        }
        Ok(())
    }

    /// Applies a sale. Replaying a `tx_id` returns the current record
    /// without touching it; an oversell changes nothing.
    pub fn apply_sale(&self, tx: &SaleTransaction) -> Result<SaleReceipt, InventoryError> {
        let mut product = self.product(&tx.product_id)?;
        let mut seen = self.seen_tx.lock().expect("tx lock poisoned");
        if seen.contains_key(&tx.tx_id) {
            return Ok(SaleReceipt {
                record: product.record.clone(),
                applied: false,
            });
        }
        let available = product.record.expected_count;
        if tx.quantity > available {
            return Err(InventoryError::Oversell {
                product_id: tx.product_id.clone(),
                requested: tx.quantity,
                available,
            });
        }
        self.log(&WalRecord::Sale(tx.clone()))?;
        seen.insert(tx.tx_id.clone(), tx.product_id.clone());
        drop(seen);
        product.record.expected_count = available - tx.quantity;
        self.audit.lock().expect("audit lock poisoned").push(AuditEntry::Sale {
            tx: tx.clone(),
            expected_before: available,
            expected_after: product.record.expected_count,
        });
        Ok(SaleReceipt {
            record: product.record.clone(),
            applied: true,
        })
    }

    /// Stores a shelf count. The newest timestamp wins regardless of
    /// arrival order; every observation stays in the audit log.
    pub fn record_observation(&self, obs: &ShelfObservation) -> Result<(), InventoryError> {
        let mut product = self.product(&obs.product_id)?;
        if product.record.zone_id != obs.zone_id {
            return Err(InventoryError::UnknownPairing {
                zone_id: obs.zone_id.clone(),
                product_id: obs.product_id.clone(),
            });
        }
        self.log(&WalRecord::Observation(obs.clone()))?;
        let became_latest = product
            .latest
            .as_ref()
            .is_none_or(|latest| obs.timestamp >= latest.timestamp);
        if became_latest {
            product.latest = Some(obs.clone());
        }
        self.audit
            .lock()
            .expect("audit lock poisoned")
            .push(AuditEntry::Observation {
                obs: obs.clone(),
                became_latest,
            });
        Ok(())
    }

    pub fn get_product(&self, product_id: &str) -> Result<ProductRecord, InventoryError> {
        Ok(self.product(product_id)?.record.clone())
    }

    pub fn latest_observation(&self, product_id: &str) -> Result<Option<ShelfObservation>, InventoryError> {
        Ok(self.product(product_id)?.latest.clone())
    }

    pub fn products_in_zone(&self, zone_id: &str) -> Result<&[String], InventoryError> {
        self.zones
            .get(zone_id)
            .map(Vec::as_slice)
            .ok_or_else(|| InventoryError::UnknownZone(zone_id.to_owned()))
    }

    pub fn zones(&self) -> impl Iterator<Item = &str> {
        self.zones.keys().map(String::as_str)
    }

    /// Compares expected stock with the latest observation, which must be
    /// at most `staleness_ms` older than `now`.
    pub fn reconcile(&self, product_id: &str, now: Timestamp) -> Result<ReconciliationResult, InventoryError> {
        let product = self.product(product_id)?;
        let Some(latest) = &product.latest else {
            return Err(InventoryError::NoObservation(product_id.to_owned()));
        };
        let age_ms = now - latest.timestamp;
        if age_ms > self.config.staleness_ms {
            return Err(InventoryError::Stale {
                product_id: product_id.to_owned(),
                age_ms,
                bound_ms: self.config.staleness_ms,
            });
        }
        Ok(ReconciliationResult::compare(
            product_id,
            product.record.expected_count,
            latest.observed_count,
        ))
    }

    /// Reconciles every product in the zone, in catalog order.
    pub fn reconcile_zone(&self, zone_id: &str, now: Timestamp) -> Result<ZoneReconciliation, InventoryError> {
        Ok(self
            .products_in_zone(zone_id)?
            .iter()
            .map(|p| (p.clone(), self.reconcile(p, now)))
            .collect())
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        self.audit.lock().expect("audit lock poisoned").clone()
    }
}
