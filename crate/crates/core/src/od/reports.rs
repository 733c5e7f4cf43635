use rayon::prelude::*;

use super::{OdError, Trip};
use crate::ledger::{epoch_of, DeviceLedger, ReportOutcome};
use crate::model::Seconds;

pub const DEFAULT_EPS_REP: f64 = 0.5;

/// A registered cross-locality measurement: entry nodes tell devices to note
/// the entry, exit nodes ask for a trip report charged `eps_rep`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub id: String,
    pub eps_rep: f64,
}

impl Measurement {
    pub fn new(id: impl Into<String>, eps_rep: f64) -> Result<Self, OdError> {
        if !(eps_rep.is_finite() && eps_rep > 0.0) {
            return Err(OdError::Config(format!("eps_rep must be positive, got {eps_rep}")));
        }
        Ok(Measurement { id: id.into(), eps_rep })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Report {
    Trip {
        entry_station: u16,
        exit_station: u16,
        elapsed: Seconds,
    },
    /// Sent in place of a trip when the epoch budget is exhausted.
    Null { exit_station: u16 },
}

/// A rider's phone following a measurement's instructions.
#[derive(Debug, Clone)]
pub struct Device {
    ledger: DeviceLedger,
    entry: Option<(u16, Seconds)>,
}

impl Device {
    pub fn new(id: impl Into<String>, epoch_capacity: f64) -> Result<Self, OdError> {
        Ok(Device {
            ledger: DeviceLedger::new(id, epoch_capacity)?,
            entry: None,
        })
    }

    pub fn ledger(&self) -> &DeviceLedger {
        &self.ledger
    }

    /// Entry instruction: remember station and time on the device only.
    pub fn record_entry(&mut self, station: u16, time: Seconds) {
        self.entry = Some((station, time));
    }

    /// Exit instruction: report the trip if the epoch budget allows.
    pub fn report_exit(&mut self, m: &Measurement, station: u16, time: Seconds) -> Result<Report, OdError> {
        let (entry_station, entry_time) = self.entry.take().ok_or(OdError::ExitWithoutEntry)?;
        Ok(match self.ledger.charge_report(epoch_of(time), m.eps_rep)? {
            ReportOutcome::Real => Report::Trip {
                entry_station,
                exit_station: station,
                elapsed: time.saturating_sub(entry_time),
            },
            ReportOutcome::Null => Report::Null { exit_station: station },
        })
    }
}

/// Which trips produced real reports, per rider and in trip order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSet {
    pub reported: Vec<Vec<bool>>,
}

impl ReportSet {
    pub fn count_reported(&self) -> usize {
        self.reported.iter().flatten().filter(|&&r| r).count()
    }

    pub fn count_suppressed(&self) -> usize {
        self.reported.iter().flatten().filter(|&&r| !r).count()
    }
}

/// Runs every rider's device through its trips in chronological order with
/// a per-epoch capacity of `epoch_capacity`.
pub fn simulate_reports(trips: &[Vec<Trip>], epoch_capacity: f64, eps_rep: f64) -> Result<ReportSet, OdError> {
    let m = Measurement::new("od", eps_rep)?;
    let reported = trips
        .par_iter()
        .enumerate()
        .map(|(rider, ts)| {
            let mut dev = Device::new(rider.to_string(), epoch_capacity)?;
            ts.iter()
                .map(|t| {
                    dev.record_entry(t.origin, t.entry_time);
                    Ok(matches!(dev.report_exit(&m, t.dest, t.exit_time)?, Report::Trip { .. }))
                })
                .collect::<Result<Vec<bool>, OdError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReportSet { reported })
}
