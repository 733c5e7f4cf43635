use super::{aggregate_od, expected_rmsre, rmsre, OdError, OdHistogram};
use crate::dp::NoiseSpec;

/// Exit detection with recall `a` (false-positive rate `1 - a`), where a
/// fraction `p` of transfer traffic passes close to exit nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfIdModel {
    pub a: f64,
    pub p: f64,
}

impl SelfIdModel {
    pub fn new(a: f64, p: f64) -> Result<Self, OdError> {
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&p) {
            return Err(OdError::Config(format!("self-id parameters out of [0,1]: a={a}, p={p}")));
        }
        Ok(SelfIdModel { a, p })
    }
}

/// Expected signed per-bin error: missed true exits plus false exits from
/// transfers.
pub fn selfid_expected_error(m: SelfIdModel, n_true: f64, n_transfer: f64) -> f64 {
    (m.a - 1.0) * n_true + (1.0 - m.a) * m.p * n_transfer
}

/// F1 of exit detection given total true exits and total transfer volume.
/// Zero when precision and recall are both zero.
pub fn f1_score(m: SelfIdModel, total_true: f64, total_transfer: f64) -> f64 {
    let tp = m.a * total_true;
    let fp = (1.0 - m.a) * m.p * total_transfer;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = m.a;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfIdRow {
    pub a: f64,
    pub p: f64,
    pub f1: f64,
    /// Expected RMSRE including the Laplace noise floor.
    pub rmsre: f64,
    /// RMSRE of one noisy draw (noise paired across the grid).
    pub sampled_rmsre: f64,
}

/// Perturbs `truth` by the expected self-id error and scores it, for every
/// `(a, p)` pair in grid order (`a` outer).
pub fn selfid_sweep(
    truth: &OdHistogram,
    transfers: &OdHistogram,
    a_grid: &[f64],
    p_grid: &[f64],
    noise: &NoiseSpec,
) -> Result<Vec<SelfIdRow>, OdError> {
    if a_grid.is_empty() || p_grid.is_empty() {
        return Err(OdError::Config("self-id grids must be non-empty".into()));
    }
    if truth.counts.len() != transfers.counts.len() {
        return Err(OdError::ShapeMismatch);
    }
    let b = match noise.kind {
        crate::dp::NoiseKind::Laplace => noise.scale,
        crate::dp::NoiseKind::None => 0.0,
        crate::dp::NoiseKind::Gaussian => {
            return Err(OdError::Config("self-id sweep uses Laplace noise".into()));
        }
    };
    let total_true = truth.total();
    let total_transfer = transfers.total();
    let mut rows = Vec::with_capacity(a_grid.len() * p_grid.len());
    for &a in a_grid {
        for &p in p_grid {
            let m = SelfIdModel::new(a, p)?;
            let mut perturbed = truth.clone();
            for (c, &tr) in perturbed.counts.iter_mut().zip(&transfers.counts) {
                *c += selfid_expected_error(m, *c, tr);
            }
            let noisy = aggregate_od(&perturbed, noise)?;
            rows.push(SelfIdRow {
                a,
                p,
                f1: f1_score(m, total_true, total_transfer),
                rmsre: expected_rmsre(&perturbed, truth, b)?,
                sampled_rmsre: rmsre(&noisy, truth)?.rmsre,
            });
        }
    }
    Ok(rows)
}
