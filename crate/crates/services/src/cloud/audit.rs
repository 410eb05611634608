//! Consistency checks over a ledger, used by tests and the simulator.

use std::collections::HashMap;

use shelfwatch_core::AlertStatus;

use super::ledger::{CloudLedger, EventOutcome};

/// Checks that alerts exist exactly when an anomaly met a stock deficit.
///
/// Every alert must come from a processed event whose recorded
/// reconciliation of the same product showed the alert's deficit, and
/// every recorded deficit must have produced an alert or been suppressed.
/// Returns one message per violation.
pub fn audit_conjunction(ledger: &CloudLedger) -> Vec<String> {
    let mut problems = Vec::new();
    let records: HashMap<&str, _> = ledger.events.iter().map(|r| (r.event.event_id.as_str(), r)).collect();
    for alert in &ledger.alerts {
        let Some(record) = records.get(alert.event.event_id.as_str()) else {
            problems.push(format!("{} has no processed event", alert.alert_id));
            continue;
        };
        match &record.outcome {
            EventOutcome::Corroborated { alert_ids, .. } if alert_ids.contains(&alert.alert_id) => {}
            _ => problems.push(format!("{} is not listed by its event", alert.alert_id)),
        }
        let matching = record.reconciliations.iter().find(|r| r.product_id == alert.product_id);
        match matching {
            Some(r) if r.mismatch && r.deficit == alert.deficit && r.expected_count == alert.expected_count => {}
            _ => problems.push(format!(
                "{} for {} lacks a matching deficit",
                alert.alert_id, alert.product_id
            )),
        }
    }
    for record in &ledger.events {
        let deficits: Vec<_> = record
            .reconciliations
            .iter()
            .filter(|r| r.mismatch)
            .map(|r| r.product_id.as_str())
            .collect();
        match &record.outcome {
            EventOutcome::Uncorroborated { .. } if !deficits.is_empty() => {
                problems.push(format!("{} had deficits but raised nothing", record.event.event_id));
            }
            EventOutcome::Corroborated { alert_ids, suppressed } => {
                let covered: Vec<_> = alert_ids
                    .iter()
                    .filter_map(|id| ledger.alert(id))
                    .map(|a| a.product_id.as_str())
                    .chain(suppressed.iter().map(String::as_str))
                    .collect();
                for product in &deficits {
                    if !covered.contains(product) {
                        problems.push(format!("{} missed deficit on {product}", record.event.event_id));
                    }
                }
                if deficits.is_empty() {
                    problems.push(format!("{} corroborated without deficit", record.event.event_id));
                }
            }
            _ => {}
        }
    }
    problems
}

/// Checks that each alert has at most one verdict and that its status
/// matches it.
pub fn audit_feedback(ledger: &CloudLedger) -> Vec<String> {
    let mut problems = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for fb in &ledger.feedback {
        *counts.entry(fb.alert_id.as_str()).or_default() += 1;
    }
    for alert in &ledger.alerts {
        let n = counts.get(alert.alert_id.as_str()).copied().unwrap_or(0);
        let expected = match ledger.feedback_for(&alert.alert_id) {
            Some(fb) => fb.verdict.into(),
            None => AlertStatus::Open,
        };
        if n > 1 {
            problems.push(format!("{} has {n} verdicts", alert.alert_id));
        }
        if alert.status != expected {
            problems.push(format!(
                "{} is {:?}, expected {:?}",
                alert.alert_id, alert.status, expected
            ));
        }
    }
    problems
}
