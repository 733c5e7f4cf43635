use rand::Rng;
use rayon::prelude::*;

use super::OdError;
use crate::model::Seconds;
use crate::rng::{derive_seed, rng_from_seed};
use crate::ledger::EPOCH_SECONDS;

/// Weekly trips per rider: `(trips, probability)`. 93% of riders make at
/// most 10 trips a week; the mean is 6.64.
pub const WEEKLY_TRIP_PMF: [(u32, f64); 13] = [
    (1, 0.06),
    (2, 0.12),
    (3, 0.05),
    (4, 0.10),
    (5, 0.05),
    (6, 0.10),
    (7, 0.05),
    (8, 0.12),
    (9, 0.05),
    (10, 0.23),
    (11, 0.03),
    (13, 0.025),
    (15, 0.015),
];

/// Relative trip intensity by hour of day (morning and evening peaks).
pub const DIURNAL_WEIGHTS: [f64; 24] = [
    1.0, 0.5, 0.3, 0.3, 0.5, 2.0, 5.0, 9.0, 10.0, 7.0, 5.0, 5.0, 5.0, 5.0, 5.0, 6.0, 8.0, 10.0, 9.0, 6.0, 4.0,
    3.0, 2.0, 1.5,
];

#[derive(Debug, Clone, PartialEq)]
pub struct RiderPopulation {
    pub riders: usize,
    pub trip_pmf: Vec<(u32, f64)>,
    pub stations: usize,
    /// Row-major `stations x stations` weights; `None` is uniform over
    /// distinct station pairs.
    pub od_weights: Option<Vec<f64>>,
    /// Real riders represented by each simulated rider.
    pub rider_weight: u32,
    /// The first `hub_count` stations are transfer hubs.
    pub hub_count: usize,
    /// Expected transfers per trip.
    pub transfer_ratio: f64,
}

impl Default for RiderPopulation {
    fn default() -> Self {
        RiderPopulation {
            riders: 100_000,
            trip_pmf: WEEKLY_TRIP_PMF.to_vec(),
            stations: 80,
            od_weights: None,
            rider_weight: 11,
            hub_count: 6,
            transfer_ratio: 13.6 / 29.2,
        }
    }
}

impl RiderPopulation {
    pub fn validate(&self) -> Result<(), OdError> {
        if self.riders == 0 {
            return Err(OdError::EmptyPopulation);
        }
        if self.stations < 2 || self.stations > u16::MAX as usize {
            return Err(OdError::Config(format!("station count {}", self.stations)));
        }
        if self.trip_pmf.is_empty() || self.trip_pmf.iter().any(|&(_, p)| !(p >= 0.0 && p.is_finite())) {
            return Err(OdError::Config("trip distribution must be non-empty and non-negative".into()));
        }
        if self.rider_weight == 0 {
            return Err(OdError::Config("rider weight must be positive".into()));
        }
        if self.hub_count > self.stations || !(0.0..=1.0).contains(&self.transfer_ratio) {
            return Err(OdError::Config("hub settings out of range".into()));
        }
        if let Some(w) = &self.od_weights {
            let s = self.stations;
            if w.len() != s * s || w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(OdError::Config("od weights must be stations^2 non-negative values".into()));
            }
            for row in w.chunks(s) {
                if row.iter().sum::<f64>() <= 0.0 {
                    return Err(OdError::Config("every od weight row needs positive mass".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mean_weekly_trips(&self) -> f64 {
        let total: f64 = self.trip_pmf.iter().map(|&(_, p)| p).sum();
        self.trip_pmf.iter().map(|&(k, p)| k as f64 * p).sum::<f64>() / total
    }

    /// Row-normalized propensity `P(dest | origin)`.
    pub fn od_propensity(&self) -> Vec<f64> {
        let s = self.stations;
        let raw = match &self.od_weights {
            Some(w) => w.clone(),
            None => (0..s * s).map(|k| if k / s == k % s { 0.0 } else { 1.0 }).collect(),
        };
        raw.chunks(s)
            .flat_map(|row| {
                let t: f64 = row.iter().sum();
                row.iter().map(move |x| x / t).collect::<Vec<_>>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trip {
    pub entry_time: Seconds,
    pub exit_time: Seconds,
    pub origin: u16,
    pub dest: u16,
    /// Hub where the rider changes lines without exiting, if any.
    pub transfer_hub: Option<u16>,
}

fn sample_cdf<R: Rng>(rng: &mut R, cdf: &[f64]) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(w: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    w.into_iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// Per-rider trip sequences over `weeks`, in chronological order.
pub fn generate_trips(pop: &RiderPopulation, weeks: u32, seed: u64) -> Result<Vec<Vec<Trip>>, OdError> {
    pop.validate()?;
    let s = pop.stations;
    let count_cdf = cumulative(pop.trip_pmf.iter().map(|&(_, p)| p));
    let hour_cdf = cumulative(DIURNAL_WEIGHTS);
    let prop = pop.od_propensity();
    let origin_cdf = cumulative((0..s).map(|_| 1.0));
    let dest_cdfs: Vec<Vec<f64>> = prop.chunks(s).map(|row| cumulative(row.iter().copied())).collect();
    let horizon = u64::from(weeks) * EPOCH_SECONDS;

    let trips = (0..pop.riders)
        .into_par_iter()
        .map(|rider| {
            let mut rng = rng_from_seed(derive_seed(seed, rider as u64));
            let mut trips = Vec::new();
            for week in 0..u64::from(weeks) {
                let k = pop.trip_pmf[sample_cdf(&mut rng, &count_cdf)].0;
                for _ in 0..k {
                    let day = rng.random_range(0..7u64);
                    let hour = sample_cdf(&mut rng, &hour_cdf) as u64;
                    let entry = week * EPOCH_SECONDS + day * 86_400 + hour * 3600 + rng.random_range(0..3600u64);
                    let duration = rng.random_range(300..3600u64);
                    let origin = sample_cdf(&mut rng, &origin_cdf);
                    let dest = sample_cdf(&mut rng, &dest_cdfs[origin]);
                    let transfer_hub = if pop.hub_count > 0 && rng.random::<f64>() < pop.transfer_ratio {
                        let candidates: Vec<usize> =
                            (0..pop.hub_count).filter(|&h| h != origin && h != dest).collect();
                        (!candidates.is_empty())
                            .then(|| candidates[rng.random_range(0..candidates.len())] as u16)
                    } else {
                        None
                    };
                    trips.push(Trip {
                        entry_time: entry,
                        exit_time: (entry + duration).min(horizon - 1),
                        origin: origin as u16,
                        dest: dest as u16,
                        transfer_hub,
                    });
                }
            }
            trips.sort_by_key(|t| (t.exit_time, t.entry_time));
            trips
        })
        .collect();
    Ok(trips)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_shape() {
        let pop = RiderPopulation::default();
        assert!((pop.mean_weekly_trips() - 6.64).abs() < 1e-9);
        let le10: f64 = WEEKLY_TRIP_PMF.iter().filter(|(k, _)| *k <= 10).map(|(_, p)| p).sum();
        assert!((le10 - 0.93).abs() < 1e-12);
    }

    #[test]
    fn rows_normalize() {
        let pop = RiderPopulation {
            stations: 5,
            ..Default::default()
        };
        let p = pop.od_propensity();
        for (o, row) in p.chunks(5).enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(row[o], 0.0);
        }
    }

    #[test]
    fn single_rider_single_trip() {
        let pop = RiderPopulation {
            riders: 1,
            trip_pmf: vec![(1, 1.0)],
            ..Default::default()
        };
        let t = generate_trips(&pop, 1, 3).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].len(), 1);
        assert_ne!(t[0][0].origin, t[0][0].dest);
    }

    #[test]
    fn empty_population_rejected() {
        let pop = RiderPopulation {
            riders: 0,
            ..Default::default()
        };
        assert_eq!(generate_trips(&pop, 1, 0), Err(OdError::EmptyPopulation));
    }

    #[test]
    fn weekly_counts_follow_distribution() {
        let pop = RiderPopulation::default();
        let trips = generate_trips(&pop, 1, 9).unwrap();
        let le10 = trips.iter().filter(|t| t.len() <= 10).count() as f64 / trips.len() as f64;
        assert!((le10 - 0.93).abs() < 0.01, "{le10}");
        let total: usize = trips.iter().map(Vec::len).sum();
        assert!((total as f64 / 1e5 - 6.64).abs() < 0.05);
        assert!(trips.iter().all(|t| t.windows(2).all(|w| w[0].exit_time <= w[1].exit_time)));
    }

    #[test]
    fn deterministic() {
        let pop = RiderPopulation {
            riders: 50,
            ..Default::default()
        };
        assert_eq!(generate_trips(&pop, 2, 1).unwrap(), generate_trips(&pop, 2, 1).unwrap());
    }
}
