use super::{config_err, fmt_f64, ExperimentConfig, ExperimentError, Table};
use crate::attack::{
    generate_traffic, sniff_sweep, AttackerProfile, CityGrid, ProfileKind, TrafficConfig, DEFAULT_MAX_EC_SWEEP,
};
use crate::rng::derive_seed;

const KNOWN: &[&str] = &[
    "rows",
    "cols",
    "row_spacing",
    "col_spacing",
    "intensity",
    "hub_peak",
    "hub_radius",
    "fluctuation",
    "duration",
    "max_ec",
    "profiles",
];

/// Columns: `profile,max_ec_seconds,capture_fraction,intersections_visited`.
/// With several trials the capture fraction is averaged over traffic seeds;
/// routes do not depend on traffic.
pub fn run_sniff(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let p = &cfg.params;
    p.check_known(KNOWN)?;
    let d = CityGrid::default();
    let grid = CityGrid::new(
        p.get("rows", d.rows)?,
        p.get("cols", d.cols)?,
        p.get("row_spacing", d.row_spacing)?,
        p.get("col_spacing", d.col_spacing)?,
    )
    .map_err(config_err)?;
    let td = TrafficConfig::default();
    let tcfg = TrafficConfig {
        intensity: p.get("intensity", td.intensity)?,
        hub_peak: p.get("hub_peak", td.hub_peak)?,
        hub_radius: p.get("hub_radius", td.hub_radius)?,
        fluctuation: p.get("fluctuation", td.fluctuation)?,
        duration: p.get("duration", td.duration)?,
    };
    let max_ecs: Vec<u64> = p.get_list("max_ec", DEFAULT_MAX_EC_SWEEP.to_vec())?;
    if max_ecs.contains(&0) {
        return Err(config_err("max_ec values must be positive"));
    }
    let kinds: Vec<ProfileKind> = p
        .get_list::<String>("profiles", ProfileKind::ALL.iter().map(|k| k.to_string()).collect())?
        .iter()
        .map(|s| s.parse().map_err(config_err))
        .collect::<Result<_, _>>()?;
    let profiles: Vec<AttackerProfile> = kinds.iter().map(|&k| AttackerProfile::new(k, grid.hub)).collect();

    let mut acc: Vec<(f64, usize)> = Vec::new();
    let mut cells = Vec::new();
    for t in 0..cfg.trials {
        let traffic = generate_traffic(&grid, &tcfg, derive_seed(cfg.seed, u64::from(t))).map_err(config_err)?;
        let rows = sniff_sweep(&grid, &traffic, &profiles, &max_ecs).map_err(config_err)?;
        if acc.is_empty() {
            acc = vec![(0.0, 0); rows.len()];
            cells = rows.iter().map(|r| (r.profile, r.max_ec_seconds)).collect();
        }
        for (a, r) in acc.iter_mut().zip(&rows) {
            a.0 += r.capture_fraction;
            a.1 = r.intersections_visited;
        }
    }
    let mut table = Table::new(&["profile", "max_ec_seconds", "capture_fraction", "intersections_visited"]);
    for ((kind, m), (sum, visited)) in cells.into_iter().zip(acc) {
        table.push(vec![
            kind.to_string(),
            m.to_string(),
            fmt_f64(sum / f64::from(cfg.trials)),
            visited.to_string(),
        ]);
    }
    Ok(table)
}
