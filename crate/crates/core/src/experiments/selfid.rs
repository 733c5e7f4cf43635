use super::subway::{OdSetup, POPULATION_KEYS};
use super::{config_err, fmt_f64, ExperimentConfig, ExperimentError, Table};
use crate::od::{selfid_sweep, Batch};

fn default_a_grid() -> Vec<f64> {
    (0..=10).map(|k| f64::from(k) / 10.0).collect()
}

/// Columns: `a,p,f1,rmsre,sampled_rmsre`.
///
/// The reference histogram is what the budgeted pipeline would report at
/// `epsilon` with perfect exit detection; with `a = 1` the sampled column
/// reproduces that pipeline's noisy histogram exactly (same noise seed).
pub fn run_selfid(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let p = &cfg.params;
    let known: Vec<&str> = POPULATION_KEYS
        .iter()
        .copied()
        .chain(["epsilon", "batch", "a_grid", "p_grid"])
        .collect();
    p.check_known(&known)?;
    let eps: f64 = p.get("epsilon", f64::INFINITY)?;
    let batch: Batch = p.get_str("batch").unwrap_or("week").parse().map_err(config_err)?;
    let a_grid: Vec<f64> = p.get_list("a_grid", default_a_grid())?;
    let p_grid: Vec<f64> = p.get_list("p_grid", vec![0.0, 0.5, 1.0])?;
    let setup = OdSetup::from_params(p, cfg.seed)?;
    let reports = setup.reports(eps)?;
    let truth = setup.histogram(Some(&reports), batch);
    let transfers = setup.transfers(Some(&reports), batch);

    let mut sums: Option<Vec<(f64, f64, f64, f64, f64)>> = None;
    for t in 0..cfg.trials {
        let rows = selfid_sweep(&truth, &transfers, &a_grid, &p_grid, &setup.noise(cfg.seed, t)).map_err(config_err)?;
        let acc = sums.get_or_insert_with(|| rows.iter().map(|r| (r.a, r.p, r.f1, r.rmsre, 0.0)).collect());
        for (a, r) in acc.iter_mut().zip(&rows) {
            a.4 += r.sampled_rmsre;
        }
    }
    let mut table = Table::new(&["a", "p", "f1", "rmsre", "sampled_rmsre"]);
    for (a, pp, f1, r, s) in sums.unwrap_or_default() {
        table.push(vec![
            fmt_f64(a),
            fmt_f64(pp),
            fmt_f64(f1),
            fmt_f64(r),
            fmt_f64(s / f64::from(cfg.trials)),
        ]);
    }
    Ok(table)
}
