//! Cross-locality origin-destination measurement over a subway network:
//! rider trip generation, budgeted on-device reports, noisy OD histograms
//! and the transfer self-identification error model.

mod histogram;
mod population;
mod reports;
mod selfid;

use thiserror::Error;

use crate::dp::DpError;
use crate::ledger::LedgerError;

pub use histogram::{aggregate_od, expected_rmsre, rmsre, Batch, OdHistogram, RmsreSummary};
pub use population::{generate_trips, RiderPopulation, Trip, DIURNAL_WEIGHTS, WEEKLY_TRIP_PMF};
pub use reports::{simulate_reports, Device, Measurement, Report, ReportSet, DEFAULT_EPS_REP};
pub use selfid::{f1_score, selfid_expected_error, selfid_sweep, SelfIdModel, SelfIdRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdError {
    #[error("population has no riders")]
    EmptyPopulation,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("exit reported without a recorded entry")]
    ExitWithoutEntry,
    #[error("histogram shapes differ")]
    ShapeMismatch,
    #[error("every truth bin is zero; relative error undefined")]
    AllZeroTruth,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Dp(#[from] DpError),
}
