//! Windowed counting accuracy under the trusted and untrusted sensitivity
//! models.

use std::f64::consts::PI;
use std::str::FromStr;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::{config_err, fmt_f64, ExperimentConfig, ExperimentError, Table};
use crate::dp::{estimate_interval, BinaryTree, NoiseSpec, ReleaseLog, ToeplitzCalibration, ToeplitzState};
use crate::rng::{derive_seed, rng_from_seed};

const BINS_PER_HOUR: usize = 4;

const KNOWN: &[&str] = &[
    "windows",
    "mechanism",
    "days",
    "rate_per_hour",
    "amplitude",
    "peak_hour",
    "epsilon",
    "epsilon_low",
    "delta_trusted",
    "delta_untrusted",
    "bin_cap",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMechanism {
    Toeplitz,
    Tree,
}

impl FromStr for CountMechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toeplitz" => Ok(CountMechanism::Toeplitz),
            "tree" => Ok(CountMechanism::Tree),
            _ => Err(format!("unknown mechanism {s:?} (toeplitz|tree)")),
        }
    }
}

/// 15-minute counts over `days`: Poisson around a daily sinusoid peaking at
/// `peak_hour` with mean `rate_per_hour`.
pub fn count_accuracy_stream(days: usize, rate_per_hour: f64, amplitude: f64, peak_hour: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let n = days * 24 * BINS_PER_HOUR;
    (0..n)
        .map(|k| {
            let hour = k as f64 / BINS_PER_HOUR as f64;
            let phase = 2.0 * PI * (hour - peak_hour + 6.0) / 24.0;
            let lambda = rate_per_hour / BINS_PER_HOUR as f64 * (1.0 + amplitude * phase.sin());
            if lambda <= 0.0 {
                0.0
            } else {
                Poisson::new(lambda).expect("positive rate").sample(&mut rng)
            }
        })
        .collect()
}

struct Setting {
    label: String,
    untrusted: bool,
    epsilon: f64,
    delta: f64,
}

fn window_sums(bins: &[f64], w_hours: usize) -> Vec<f64> {
    bins.chunks_exact(w_hours * BINS_PER_HOUR).map(|c| c.iter().sum()).collect()
}

/// Per-window noisy estimates from one mechanism run.
fn release_windows(
    mech: CountMechanism,
    sums: &[f64],
    w_hours: usize,
    delta: f64,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<f64>, ExperimentError> {
    match mech {
        CountMechanism::Toeplitz => {
            let mut st = ToeplitzState::calibrated(ToeplitzCalibration::default(), delta, epsilon, seed)
                .map_err(config_err)?;
            let mut prev = 0.0;
            sums.iter()
                .map(|&y| {
                    let p = st.release(y).map_err(config_err)?;
                    let est = p - prev;
                    prev = p;
                    Ok(est)
                })
                .collect()
        }
        CountMechanism::Tree => {
            let n = (24 / w_hours) as u64;
            let b = (f64::from(n.trailing_zeros()) + 2.0) * delta / epsilon;
            let mut tree = BinaryTree::new(n, NoiseSpec::laplace(b, seed).sampler().map_err(config_err)?)
                .map_err(config_err)?;
            let mut log = ReleaseLog::new(n);
            let full = sums.len() - sums.len() % n as usize;
            for &y in &sums[..full] {
                log.extend(tree.push(y).map_err(config_err)?);
            }
            (0..full as u64)
                .map(|k| Ok(estimate_interval(&log, k, k).map_err(config_err)?.value))
                .collect()
        }
    }
}

fn rmsre(est: &[f64], truth: &[f64]) -> f64 {
    let (sq, n) = est
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t > 0.0)
        .fold((0.0, 0usize), |(s, n), (&e, &t)| (s + ((e - t) / t).powi(2), n + 1));
    if n == 0 {
        0.0
    } else {
        (sq / n as f64).sqrt()
    }
}

/// Columns: `window_hours,config,mode,epsilon,sensitivity,mean_rmsre`.
pub fn run_count_accuracy(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let p = &cfg.params;
    p.check_known(KNOWN)?;
    let windows: Vec<usize> = p.get_list("windows", (1..=12).collect())?;
    let mech: CountMechanism = p.get("mechanism", CountMechanism::Toeplitz)?;
    let days: usize = p.get("days", 30)?;
    let rate: f64 = p.get("rate_per_hour", 72.0)?;
    let amplitude: f64 = p.get("amplitude", 0.5)?;
    let peak_hour: f64 = p.get("peak_hour", 17.0)?;
    let eps: f64 = p.get("epsilon", 1.0)?;
    let eps_low: f64 = p.get("epsilon_low", 0.1)?;
    let d_trusted: f64 = p.get("delta_trusted", 9.0)?;
    let d_untrusted: f64 = p.get("delta_untrusted", 100.0)?;
    let bin_cap: f64 = p.get("bin_cap", 100.0)?;

    if days == 0 || !(rate > 0.0) || !(0.0..1.0).contains(&amplitude) {
        return Err(config_err("days and rate must be positive, amplitude in [0,1)"));
    }
    for &w in &windows {
        if w == 0 || w > days * 24 {
            return Err(config_err(format!("window of {w} h does not fit {days} days")));
        }
        match mech {
            CountMechanism::Toeplitz => {
                let steps = days * 24 / w;
                if steps > ToeplitzCalibration::default().t_max {
                    return Err(config_err(format!("{steps} releases exceed the Toeplitz horizon")));
                }
            }
            CountMechanism::Tree => {
                if 24 % w != 0 || !(24 / w).is_power_of_two() || 24 / w < 2 {
                    return Err(config_err(format!(
                        "window of {w} h is not dyadic within a 1-day container"
                    )));
                }
            }
        }
    }

    let settings = [
        Setting {
            label: format!("trusted-eps{}", fmt_f64(eps)),
            untrusted: false,
            epsilon: eps,
            delta: d_trusted,
        },
        Setting {
            label: format!("trusted-eps{}", fmt_f64(eps_low)),
            untrusted: false,
            epsilon: eps_low,
            delta: d_trusted,
        },
        Setting {
            label: format!("untrusted-eps{}", fmt_f64(eps)),
            untrusted: true,
            epsilon: eps,
            delta: d_untrusted,
        },
    ];

    let bins = count_accuracy_stream(days, rate, amplitude, peak_hour, derive_seed(cfg.seed, u64::MAX));
    let clamped: Vec<f64> = bins.iter().map(|b| b.clamp(0.0, bin_cap)).collect();

    let mut table = Table::new(&["window_hours", "config", "mode", "epsilon", "sensitivity", "mean_rmsre"]);
    for (wi, &w) in windows.iter().enumerate() {
        let truth = window_sums(&bins, w);
        let inputs = [window_sums(&bins, w), window_sums(&clamped, w)];
        // Trial t of window w uses one noise seed for all settings.
        let per_trial: Vec<Vec<f64>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(derive_seed(cfg.seed, wi as u64), u64::from(t));
                settings
                    .iter()
                    .map(|s| {
                        let input = &inputs[usize::from(s.untrusted)];
                        let est = release_windows(mech, input, w, s.delta, s.epsilon, seed)?;
                        Ok(rmsre(&est, &truth[..est.len()]))
                    })
                    .collect::<Result<Vec<f64>, ExperimentError>>()
            })
            .collect::<Result<_, _>>()?;
        for (si, s) in settings.iter().enumerate() {
            let mean = per_trial.iter().map(|r| r[si]).sum::<f64>() / f64::from(cfg.trials);
            table.push(vec![
                w.to_string(),
                s.label.clone(),
                if s.untrusted { "untrusted" } else { "trusted" }.to_string(),
                fmt_f64(s.epsilon),
                fmt_f64(s.delta),
                fmt_f64(mean),
            ]);
        }
    }
    Ok(table)
}
