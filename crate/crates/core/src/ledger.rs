//! Device-side privacy accounting.
//!
//! A device accumulates the per-TC losses broadcast by nodes it passes
//! (deduplicated by TC id) and spends a per-epoch budget on cross-locality
//! reports. The two components use different privacy units; they are kept
//! separately and also summed for display.
//!
//! Broadcast losses are kept per TC and summed in TC id order, so the
//! accumulated value does not depend on delivery order.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::model::{Seconds, TcId};
use crate::query::BroadcastMessage;

pub const EPOCH_SECONDS: Seconds = 604_800;

/// Relative slack when comparing a charge against the remaining budget, so
/// that e.g. ten charges of 0.1 fit a budget of 1.0.
const CHARGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("broadcast loss must be non-negative and finite, got {0}")]
    NegativeLoss(f64),
    #[error("report charge must be positive and finite, got {0}")]
    InvalidCharge(f64),
    #[error("epoch capacity must be non-negative, got {0}")]
    InvalidCapacity(f64),
    #[error("cannot write ledger: {0}")]
    Io(String),
}

/// Week index of simulation time `t`.
pub fn epoch_of(t: Seconds) -> u64 {
    t / EPOCH_SECONDS
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochBudget {
    pub epoch_id: u64,
    pub capacity: f64,
    pub spent: f64,
}

impl EpochBudget {
    pub fn remaining(&self) -> f64 {
        self.capacity - self.spent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportOutcome {
    Real,
    /// Budget exhausted; the device sends a null record instead.
    Null,
}

#[derive(Debug, Clone)]
pub struct DeviceLedger {
    device_id: String,
    seen: BTreeMap<TcId, f64>,
    epochs: BTreeMap<u64, EpochBudget>,
    default_capacity: f64,
}

impl DeviceLedger {
    /// `epoch_capacity` may be `f64::INFINITY`.
    pub fn new(device_id: impl Into<String>, epoch_capacity: f64) -> Result<Self, LedgerError> {
        if epoch_capacity.is_nan() || epoch_capacity < 0.0 {
            return Err(LedgerError::InvalidCapacity(epoch_capacity));
        }
        Ok(DeviceLedger {
            device_id: device_id.into(),
            seen: BTreeMap::new(),
            epochs: BTreeMap::new(),
            default_capacity: epoch_capacity,
        })
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    /// Accumulated node-broadcast loss.
    pub fn epsilon_acc(&self) -> f64 {
        self.seen.values().fold(0.0, |acc, r| acc + r)
    }

    /// Total report budget spent across epochs.
    pub fn report_loss(&self) -> f64 {
        self.epochs.values().map(|e| e.spent).sum()
    }

    pub fn total_loss(&self) -> f64 {
        self.epsilon_acc() + self.report_loss()
    }

    pub fn seen_tcs(&self) -> usize {
        self.seen.len()
    }

    pub fn epoch(&self, epoch_id: u64) -> Option<&EpochBudget> {
        self.epochs.get(&epoch_id)
    }

    pub fn epochs(&self) -> impl Iterator<Item = &EpochBudget> {
        self.epochs.values()
    }

    /// Records a node broadcast. Returns whether it was new (counted).
    pub fn receive_broadcast(&mut self, msg: &BroadcastMessage) -> Result<bool, LedgerError> {
        if !(msg.rho_node.is_finite() && msg.rho_node >= 0.0) {
            return Err(LedgerError::NegativeLoss(msg.rho_node));
        }
        if self.seen.contains_key(&msg.tc_id) {
            return Ok(false);
        }
        self.seen.insert(msg.tc_id.clone(), msg.rho_node);
        Ok(true)
    }

    /// Charges `eps_rep` against `epoch_id`, all or nothing.
    pub fn charge_report(&mut self, epoch_id: u64, eps_rep: f64) -> Result<ReportOutcome, LedgerError> {
        if !(eps_rep.is_finite() && eps_rep > 0.0) {
            return Err(LedgerError::InvalidCharge(eps_rep));
        }
        let cap = self.default_capacity;
        let b = self.epochs.entry(epoch_id).or_insert(EpochBudget {
            epoch_id,
            capacity: cap,
            spent: 0.0,
        });
        let after = b.spent + eps_rep;
        if after > b.capacity * (1.0 + CHARGE_TOLERANCE) {
            return Ok(ReportOutcome::Null);
        }
        b.spent = after.min(b.capacity);
        Ok(ReportOutcome::Real)
    }
}

fn write_err(e: impl ToString) -> LedgerError {
    LedgerError::Io(e.to_string())
}

/// Writes `device_id,epsilon_acc,epoch_id,spent,capacity`, one row per
/// (device, epoch); a device with no epochs gets one row with empty epoch
/// fields.
pub fn write_ledgers<'a, W: Write>(ledgers: impl IntoIterator<Item = &'a DeviceLedger>, out: W) -> Result<(), LedgerError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device_id", "epsilon_acc", "epoch_id", "spent", "capacity"])
        .map_err(write_err)?;
    for l in ledgers {
        let acc = l.epsilon_acc().to_string();
        if l.epochs.is_empty() {
            w.write_record([l.device_id.as_str(), &acc, "", "", ""])
                .map_err(write_err)?;
        }
        for e in l.epochs.values() {
            w.write_record([
                l.device_id.clone(),
                acc.clone(),
                e.epoch_id.to_string(),
                e.spent.to_string(),
                e.capacity.to_string(),
            ])
            .map_err(write_err)?;
        }
    }
    w.flush().map_err(write_err)
}
