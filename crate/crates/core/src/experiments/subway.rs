use super::{config_err, fmt_f64, ExperimentConfig, ExperimentError, Params, Table};
use crate::dp::NoiseSpec;
use crate::ledger::EPOCH_SECONDS;
use crate::od::{
    aggregate_od, expected_rmsre, generate_trips, rmsre, simulate_reports, Batch, OdHistogram, ReportSet,
    RiderPopulation, Trip, DEFAULT_EPS_REP,
};
use crate::rng::derive_seed;

pub(crate) const POPULATION_KEYS: &[&str] = &[
    "riders",
    "stations",
    "weeks",
    "rider_weight",
    "hub_count",
    "transfer_ratio",
    "eps_rep",
    "b",
];

/// Seed of the OD noise for `trial`, shared by every experiment that adds
/// noise to OD histograms so that matching runs are paired.
pub fn od_noise_seed(master: u64, trial: u32) -> u64 {
    derive_seed(derive_seed(master, 0x0d), u64::from(trial))
}

/// Population, generated trips and noise settings shared by the OD
/// experiments.
#[derive(Debug, Clone)]
pub struct OdSetup {
    pub pop: RiderPopulation,
    pub weeks: u32,
    pub eps_rep: f64,
    pub b: f64,
    pub trips: Vec<Vec<Trip>>,
}

impl OdSetup {
    pub fn from_params(p: &Params, seed: u64) -> Result<Self, ExperimentError> {
        let d = RiderPopulation::default();
        let pop = RiderPopulation {
            riders: p.get("riders", d.riders)?,
            stations: p.get("stations", d.stations)?,
            rider_weight: p.get("rider_weight", d.rider_weight)?,
            hub_count: p.get("hub_count", d.hub_count)?,
            transfer_ratio: p.get("transfer_ratio", d.transfer_ratio)?,
            ..d
        };
        let weeks: u32 = p.get("weeks", 4)?;
        let eps_rep: f64 = p.get("eps_rep", DEFAULT_EPS_REP)?;
        let b: f64 = p.get("b", 2.0)?;
        if weeks == 0 || !(b >= 0.0 && b.is_finite()) {
            return Err(config_err("weeks must be positive and b non-negative"));
        }
        let trips = generate_trips(&pop, weeks, derive_seed(seed, 0x7e1)).map_err(config_err)?;
        Ok(OdSetup {
            pop,
            weeks,
            eps_rep,
            b,
            trips,
        })
    }

    pub fn horizon(&self) -> u64 {
        u64::from(self.weeks) * EPOCH_SECONDS
    }

    pub fn noise(&self, master: u64, trial: u32) -> NoiseSpec {
        if self.b > 0.0 {
            NoiseSpec::laplace(self.b, od_noise_seed(master, trial))
        } else {
            NoiseSpec::none()
        }
    }

    pub fn reports(&self, epsilon: f64) -> Result<ReportSet, ExperimentError> {
        simulate_reports(&self.trips, epsilon, self.eps_rep).map_err(config_err)
    }

    pub fn histogram(&self, reports: Option<&ReportSet>, batch: Batch) -> OdHistogram {
        OdHistogram::from_trips(
            &self.trips,
            reports,
            self.pop.stations,
            batch,
            self.horizon(),
            f64::from(self.pop.rider_weight),
        )
    }

    pub fn transfers(&self, reports: Option<&ReportSet>, batch: Batch) -> OdHistogram {
        OdHistogram::transfers(
            &self.trips,
            reports,
            self.pop.stations,
            batch,
            self.horizon(),
            f64::from(self.pop.rider_weight),
        )
    }

    pub fn total_trips(&self) -> usize {
        self.trips.iter().map(Vec::len).sum()
    }
}

fn default_epsilons() -> Vec<f64> {
    (1..=10).map(f64::from).chain([f64::INFINITY]).collect()
}

/// Columns: `epsilon,batch,rmsre,sampled_rmsre,zero_bin_mass,reported_fraction,mean_bin_count`.
///
/// `rmsre` is the expected value over the Laplace noise; `sampled_rmsre` and
/// `zero_bin_mass` average `trials` paired noise draws. Truth is the full
/// trip volume.
pub fn run_subway_od(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let p = &cfg.params;
    let known: Vec<&str> = POPULATION_KEYS.iter().copied().chain(["epsilons", "batches"]).collect();
    p.check_known(&known)?;
    let epsilons: Vec<f64> = p.get_list("epsilons", default_epsilons())?;
    if epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(config_err("epsilons must be positive"));
    }
    let batches: Vec<Batch> = p
        .get_list::<String>("batches", Batch::ALL.iter().map(|b| b.to_string()).collect())?
        .iter()
        .map(|s| s.parse().map_err(config_err))
        .collect::<Result<_, _>>()?;
    let setup = OdSetup::from_params(p, cfg.seed)?;
    let total = setup.total_trips() as f64;

    let mut table = Table::new(&[
        "epsilon",
        "batch",
        "rmsre",
        "sampled_rmsre",
        "zero_bin_mass",
        "reported_fraction",
        "mean_bin_count",
    ]);
    for &eps in &epsilons {
        let reports = setup.reports(eps)?;
        let fraction = reports.count_reported() as f64 / total;
        for &batch in &batches {
            let truth = setup.histogram(None, batch);
            let reported = setup.histogram(Some(&reports), batch);
            let expected = expected_rmsre(&reported, &truth, setup.b).map_err(config_err)?;
            let (mut sampled, mut zero_mass) = (0.0, 0.0);
            for t in 0..cfg.trials {
                let noisy = aggregate_od(&reported, &setup.noise(cfg.seed, t)).map_err(config_err)?;
                let s = rmsre(&noisy, &truth).map_err(config_err)?;
                sampled += s.rmsre;
                zero_mass += s.zero_bin_mass;
            }
            let n = f64::from(cfg.trials);
            table.push(vec![
                fmt_f64(eps),
                batch.to_string(),
                fmt_f64(expected),
                fmt_f64(sampled / n),
                fmt_f64(zero_mass / n),
                fmt_f64(fraction),
                fmt_f64(truth.mean_positive_bin()),
            ]);
        }
    }
    Ok(table)
}
