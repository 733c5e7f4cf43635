use rand::Rng;
use rayon::prelude::*;

use super::{config_err, ExperimentConfig, ExperimentError, Table};
use crate::model::LocalityId;
use crate::rng::{derive_seed, rng_from_seed};
use crate::runtime::{ContainerConfig, EventKind, OutputBuffer, RecordId, Role, RoleLimits, RotationEvent, RuntimeError, Slot};

const KNOWN: &[&str] = &["steps", "max_ec_max"];

/// What a run of one slot configuration observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RotationReport {
    pub min_ec: u64,
    pub max_ec: u64,
    pub steps: u64,
    /// Smallest and largest visible window after warm-up.
    pub min_window: usize,
    pub max_window: usize,
    /// Age of the oldest visible frame (0 = current frame).
    pub max_age: u64,
    pub max_live: usize,
    pub teardowns: u64,
    /// Records whose producer was torn down and that still read back.
    pub readable_after_teardown: u64,
    /// Tumbling mode: every frame seen by exactly one torn-down instance of
    /// exactly `max_ec` frames. Always true otherwise.
    pub tumbling_partition: bool,
}

impl RotationReport {
    pub fn violations(&self) -> u64 {
        let mut v = 0;
        // The lower bound is unattainable with two instances when
        // min_ec > max_ec / 2; such configs only promise the upper bound.
        let min_ok = self.min_window >= self.min_ec as usize || 2 * self.min_ec > self.max_ec;
        if self.steps > self.min_ec && (!min_ok || self.max_window > self.max_ec as usize) {
            v += 1;
        }
        if self.max_age >= self.max_ec {
            v += 1;
        }
        if self.max_live > 2 {
            v += 1;
        }
        if self.readable_after_teardown > 0 {
            v += 1;
        }
        if !self.tumbling_partition {
            v += 1;
        }
        v
    }
}

/// Drives one slot for `steps` frames, emitting an output every frame and
/// checking the visibility, liveness and eviction properties as it goes.
pub fn check_rotation(min_ec: u64, max_ec: u64, steps: u64) -> Result<RotationReport, RuntimeError> {
    let mut slot = Slot::new(0, ContainerConfig::new(min_ec, max_ec, Role::Application), &RoleLimits::default())?;
    let mut buf = OutputBuffer::new(LocalityId::from("rot"));
    let mut emitted: Vec<(RecordId, crate::runtime::InstanceId)> = Vec::new();
    let mut r = RotationReport {
        min_ec,
        max_ec,
        steps,
        min_window: usize::MAX,
        max_window: 0,
        max_age: 0,
        max_live: 0,
        teardowns: 0,
        readable_after_teardown: 0,
        tumbling_partition: true,
    };
    let mut covered = 0u64;
    for i in 0..steps {
        let events = slot.advance_frame(i);
        buf.apply_events(&events);
        for ev in &events {
            if let EventKind::TornDown { frames_seen } = ev.kind {
                r.teardowns += 1;
                if min_ec == 0 {
                    r.tumbling_partition &= frames_seen as u64 == max_ec;
                    covered += frames_seen as u64;
                }
                for (id, producer) in &emitted {
                    if *producer == ev.instance && buf.read(*id).is_ok() {
                        r.readable_after_teardown += 1;
                    }
                }
                emitted.retain(|(_, p)| *p != ev.instance);
            }
        }
        let win = slot.visible_window();
        if !win.warming {
            r.min_window = r.min_window.min(win.len());
            r.max_window = r.max_window.max(win.len());
        }
        if let Some(&oldest) = win.frames.first() {
            r.max_age = r.max_age.max(i - oldest);
        }
        if min_ec == 0 && win.first_frame as u64 != covered {
            r.tumbling_partition = false;
        }
        r.max_live = r.max_live.max(slot.live_instances());
        let producer = slot.active_instance().expect("slot started");
        emitted.push((buf.emit_active(&slot, i.to_le_bytes().to_vec())?, producer));
    }
    if r.min_window == usize::MAX {
        r.min_window = 0;
    }
    Ok(r)
}

/// Rotation events of one slot over `frames` frames.
pub fn trace_rotations(min_ec: u64, max_ec: u64, frames: u64) -> Result<Vec<RotationEvent>, RuntimeError> {
    let mut slot = Slot::new(0, ContainerConfig::new(min_ec, max_ec, Role::Application), &RoleLimits::default())?;
    Ok((0..frames).flat_map(|i| slot.advance_frame(i)).collect())
}

/// One row per random `(min_ec, max_ec)` configuration. Columns:
/// `config,min_ec,max_ec,steps,min_window,max_window,max_age,max_live,teardowns,violations`.
pub fn run_rotation_props(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let p = &cfg.params;
    p.check_known(KNOWN)?;
    let steps: u64 = p.get("steps", 10_000)?;
    let max_ec_max: u64 = p.get("max_ec_max", 200)?;
    if steps == 0 || max_ec_max == 0 {
        return Err(config_err("steps and max_ec_max must be positive"));
    }
    let reports: Vec<RotationReport> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, u64::from(t)));
            let max_ec = rng.random_range(1..=max_ec_max);
            // A quarter of the configurations are tumbling.
            let min_ec = if rng.random_bool(0.25) { 0 } else { rng.random_range(0..max_ec) };
            check_rotation(min_ec, max_ec, steps).map_err(config_err)
        })
        .collect::<Result<_, _>>()?;
    let mut table = Table::new(&[
        "config",
        "min_ec",
        "max_ec",
        "steps",
        "min_window",
        "max_window",
        "max_age",
        "max_live",
        "teardowns",
        "violations",
    ]);
    for (k, r) in reports.iter().enumerate() {
        table.push(vec![
            k.to_string(),
            r.min_ec.to_string(),
            r.max_ec.to_string(),
            r.steps.to_string(),
            r.min_window.to_string(),
            r.max_window.to_string(),
            r.max_age.to_string(),
            r.max_live.to_string(),
            r.teardowns.to_string(),
            r.violations().to_string(),
        ]);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_config_is_clean() {
        let r = check_rotation(2, 10, 1000).unwrap();
        assert_eq!(r.violations(), 0, "{r:?}");
        assert_eq!(r.max_live, 2);
        assert_eq!((r.min_window, r.max_window), (2, 10));
    }

    #[test]
    fn tumbling_partitions() {
        let r = check_rotation(0, 7, 700).unwrap();
        assert!(r.tumbling_partition);
        assert_eq!(r.max_live, 1);
        assert_eq!(r.teardowns, 99);
    }

    #[test]
    fn wide_overlap_keeps_max_bound() {
        let r = check_rotation(7, 10, 1000).unwrap();
        assert!(r.max_window <= 10 && r.max_age < 10, "{r:?}");
        assert_eq!(r.violations(), 0);
    }
}
