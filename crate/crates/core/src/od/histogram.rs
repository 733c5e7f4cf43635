use std::fmt;
use std::str::FromStr;

use super::{OdError, ReportSet, Trip};
use crate::dp::NoiseSpec;
use crate::model::Seconds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Batch {
    Hour,
    Day,
    Week,
}

impl Batch {
    pub const ALL: [Batch; 3] = [Batch::Hour, Batch::Day, Batch::Week];

    pub fn seconds(self) -> Seconds {
        match self {
            Batch::Hour => 3600,
            Batch::Day => 86_400,
            Batch::Week => 604_800,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Batch::Hour => "hour",
            Batch::Day => "day",
            Batch::Week => "week",
        }
    }
}

impl fmt::Display for Batch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Batch {
    type Err = OdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Batch::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| OdError::Config(format!("unknown batch {s:?}")))
    }
}

/// OD counts for every batch of a horizon, indexed `[batch][entry][exit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdHistogram {
    pub stations: usize,
    pub batch: Batch,
    pub n_batches: usize,
    pub counts: Vec<f64>,
}

impl OdHistogram {
    pub fn zeros(stations: usize, batch: Batch, horizon: Seconds) -> Self {
        let n_batches = horizon.div_ceil(batch.seconds()).max(1) as usize;
        OdHistogram {
            stations,
            batch,
            n_batches,
            counts: vec![0.0; n_batches * stations * stations],
        }
    }

    pub fn index(&self, batch_idx: usize, from: usize, to: usize) -> usize {
        (batch_idx * self.stations + from) * self.stations + to
    }

    pub fn get(&self, batch_idx: usize, from: usize, to: usize) -> f64 {
        self.counts[self.index(batch_idx, from, to)]
    }

    fn add(&mut self, t: Seconds, from: usize, to: usize, w: f64) {
        let b = ((t / self.batch.seconds()) as usize).min(self.n_batches - 1);
        let k = self.index(b, from, to);
        self.counts[k] += w;
    }

    /// Trips reported under `reports` (all trips when `None`), binned by exit
    /// time, each weighted by `rider_weight`.
    pub fn from_trips(
        trips: &[Vec<Trip>],
        reports: Option<&ReportSet>,
        stations: usize,
        batch: Batch,
        horizon: Seconds,
        rider_weight: f64,
    ) -> Self {
        let mut h = Self::zeros(stations, batch, horizon);
        for (r, ts) in trips.iter().enumerate() {
            for (k, t) in ts.iter().enumerate() {
                if reports.is_none_or(|rep| rep.reported[r][k]) {
                    h.add(t.exit_time, t.origin as usize, t.dest as usize, rider_weight);
                }
            }
        }
        h
    }

    /// Transfer volume `(entry station, hub)`: riders who change lines at
    /// `hub` and could be mistaken for exits there. Binned by exit time.
    pub fn transfers(
        trips: &[Vec<Trip>],
        reports: Option<&ReportSet>,
        stations: usize,
        batch: Batch,
        horizon: Seconds,
        rider_weight: f64,
    ) -> Self {
        let mut h = Self::zeros(stations, batch, horizon);
        for (r, ts) in trips.iter().enumerate() {
            for (k, t) in ts.iter().enumerate() {
                if let Some(hub) = t.transfer_hub {
                    if reports.is_none_or(|rep| rep.reported[r][k]) {
                        h.add(t.exit_time, t.origin as usize, hub as usize, rider_weight);
                    }
                }
            }
        }
        h
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn mean_positive_bin(&self) -> f64 {
        let pos: Vec<f64> = self.counts.iter().copied().filter(|&c| c > 0.0).collect();
        if pos.is_empty() {
            0.0
        } else {
            pos.iter().sum::<f64>() / pos.len() as f64
        }
    }

    fn same_shape(&self, other: &OdHistogram) -> bool {
        self.stations == other.stations && self.batch == other.batch && self.counts.len() == other.counts.len()
    }
}

/// Adds one draw of `noise` to every bin, in index order, so that two calls
/// with the same seed perturb matching bins identically.
pub fn aggregate_od(hist: &OdHistogram, noise: &NoiseSpec) -> Result<OdHistogram, OdError> {
    let mut s = noise.sampler()?;
    let mut out = hist.clone();
    for c in &mut out.counts {
        *c += s.sample();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsreSummary {
    pub rmsre: f64,
    /// Sum of `|noisy|` over bins whose truth is zero.
    pub zero_bin_mass: f64,
    pub bins_used: usize,
}

fn positive_bins(truth: &OdHistogram) -> Result<usize, OdError> {
    let n = truth.counts.iter().filter(|&&c| c > 0.0).count();
    if n == 0 {
        return Err(OdError::AllZeroTruth);
    }
    Ok(n)
}

/// Root mean square relative error over the bins with positive truth.
pub fn rmsre(noisy: &OdHistogram, truth: &OdHistogram) -> Result<RmsreSummary, OdError> {
    if !noisy.same_shape(truth) {
        return Err(OdError::ShapeMismatch);
    }
    let n = positive_bins(truth)?;
    let mut sq = 0.0;
    let mut zero_mass = 0.0;
    for (&x, &t) in noisy.counts.iter().zip(&truth.counts) {
        if t > 0.0 {
            let r = (x - t) / t;
            sq += r * r;
        } else {
            zero_mass += x.abs();
        }
    }
    Ok(RmsreSummary {
        rmsre: (sq / n as f64).sqrt(),
        zero_bin_mass: zero_mass,
        bins_used: n,
    })
}

/// Expected RMSRE of `estimate + Laplace(b)` against `truth`: per bin the
/// mean squared error is `(estimate - truth)^2 + 2 b^2`.
pub fn expected_rmsre(estimate: &OdHistogram, truth: &OdHistogram, b: f64) -> Result<f64, OdError> {
    if !estimate.same_shape(truth) {
        return Err(OdError::ShapeMismatch);
    }
    let n = positive_bins(truth)?;
    let noise = 2.0 * b * b;
    let sq: f64 = estimate
        .counts
        .iter()
        .zip(&truth.counts)
        .filter(|(_, &t)| t > 0.0)
        .map(|(&e, &t)| ((e - t) * (e - t) + noise) / (t * t))
        .sum();
    Ok((sq / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(counts: Vec<f64>) -> OdHistogram {
        let s = (counts.len() as f64).sqrt() as usize;
        OdHistogram {
            stations: s,
            batch: Batch::Week,
            n_batches: 1,
            counts,
        }
    }

    #[test]
    fn identical_is_zero() {
        let h = hist(vec![0.0, 3.0, 4.0, 0.0]);
        let r = rmsre(&h, &h).unwrap();
        assert_eq!(r.rmsre, 0.0);
        assert_eq!(r.bins_used, 2);
    }

    #[test]
    fn single_bin() {
        let r = rmsre(&hist(vec![11.0]), &hist(vec![10.0])).unwrap();
        assert!((r.rmsre - 0.1).abs() < 1e-12);
    }

    #[test]
    fn all_zero_truth_rejected() {
        assert_eq!(rmsre(&hist(vec![1.0]), &hist(vec![0.0])), Err(OdError::AllZeroTruth));
    }

    #[test]
    fn zero_bins_reported_separately() {
        let r = rmsre(&hist(vec![2.0, -1.5, 5.0, 5.0]), &hist(vec![0.0, 0.0, 5.0, 5.0])).unwrap();
        assert_eq!(r.rmsre, 0.0);
        assert_eq!(r.zero_bin_mass, 3.5);
    }

    #[test]
    fn noiseless_aggregation_is_identity() {
        let h = hist(vec![0.0, 3.0, 4.0, 0.0]);
        assert_eq!(aggregate_od(&h, &NoiseSpec::none()).unwrap(), h);
    }

    #[test]
    fn noise_mse_matches_closed_form() {
        let h = OdHistogram {
            stations: 1,
            batch: Batch::Hour,
            n_batches: 100_000,
            counts: vec![0.0; 100_000],
        };
        let noisy = aggregate_od(&h, &NoiseSpec::laplace(2.0, 17)).unwrap();
        let mse = noisy.counts.iter().map(|x| x * x).sum::<f64>() / 1e5;
        assert!((mse / 8.0 - 1.0).abs() < 0.02, "{mse}");
        let pos = noisy.counts.iter().filter(|&&x| x > 0.0).count() as f64;
        assert!((pos / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn uniform_floor() {
        let truth = hist(vec![1140.0; 6400]);
        let e = expected_rmsre(&truth, &truth, 2.0).unwrap();
        assert!((e - 8f64.sqrt() / 1140.0).abs() < 1e-15);
        assert!((e - 0.0025).abs() / 0.0025 < 0.01);
    }

    #[test]
    fn batch_binning() {
        let trips = vec![vec![
            Trip {
                entry_time: 0,
                exit_time: 100,
                origin: 0,
                dest: 1,
                transfer_hub: None,
            },
            Trip {
                entry_time: 90_000,
                exit_time: 90_500,
                origin: 1,
                dest: 0,
                transfer_hub: Some(0),
            },
        ]];
        let h = OdHistogram::from_trips(&trips, None, 2, Batch::Day, 604_800, 3.0);
        assert_eq!(h.n_batches, 7);
        assert_eq!(h.get(0, 0, 1), 3.0);
        assert_eq!(h.get(1, 1, 0), 3.0);
        assert_eq!(h.total(), 6.0);
        let tr = OdHistogram::transfers(&trips, None, 2, Batch::Day, 604_800, 3.0);
        assert_eq!(tr.get(1, 1, 0), 3.0);
        assert_eq!(tr.total(), 3.0);
        assert_eq!("day".parse::<Batch>().unwrap(), Batch::Day);
    }
}
