//! Synthetic detection streams with imperfect tracking: each ground-truth
//! individual is split into one or more track ids within a TC.

use rand::Rng;

use super::QueryError;
use crate::model::{Detection, DetectionRecord, Frame, ObjectType, TrackId};
use crate::rng::rng_from_seed;

/// Track ids per person, for 1..=9 ids (sums to 1).
pub const TRACK_MULTIPLICITY_PMF: [f64; 9] = [0.565, 0.205, 0.115, 0.05, 0.034, 0.011, 0.012, 0.005, 0.003];

/// `TRACK_MULTIPLICITY_PMF` truncated to at most `floor(rho_track)` ids and
/// renormalized.
pub fn multiplicity_pmf(rho_track: f64) -> Result<Vec<f64>, QueryError> {
    if !(rho_track.is_finite() && rho_track >= 1.0) {
        return Err(QueryError::InvalidRhoTrack(rho_track));
    }
    let cap = (rho_track.floor() as usize).min(TRACK_MULTIPLICITY_PMF.len());
    let head = &TRACK_MULTIPLICITY_PMF[..cap];
    let total: f64 = head.iter().sum();
    Ok(head.iter().map(|p| p / total).collect())
}

fn sample_index<R: Rng>(rng: &mut R, pmf: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    pmf.len() - 1
}

/// One person visible during frames `first_frame..=last_frame` of a TC.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub object_type: ObjectType,
    pub value: f64,
    pub first_frame: usize,
    pub last_frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frames_per_tc: usize,
    pub tcs: Vec<Vec<Individual>>,
}

impl Scenario {
    /// Random ground truth: up to `2 * mean_individuals` people per TC, each
    /// with a random type, value in `[0, v_max]` and presence interval.
    pub fn synthetic(n_tcs: usize, frames_per_tc: usize, mean_individuals: usize, v_max: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let tcs = (0..n_tcs)
            .map(|_| {
                let k = rng.random_range(0..=2 * mean_individuals);
                (0..k)
                    .map(|_| {
                        let a = rng.random_range(0..frames_per_tc);
                        let b = rng.random_range(a..frames_per_tc);
                        Individual {
                            object_type: ObjectType::ALL[rng.random_range(0..ObjectType::ALL.len())],
                            value: rng.random_range(0.0..=v_max),
                            first_frame: a,
                            last_frame: b,
                        }
                    })
                    .collect()
            })
            .collect();
        Scenario { frames_per_tc, tcs }
    }
}

#[derive(Debug, Clone)]
pub struct TrackedStream {
    /// One record per TC; `aw` holds the TC index.
    pub records: Vec<DetectionRecord>,
    /// Track ids assigned to each individual, per TC.
    pub ids: Vec<Vec<Vec<TrackId>>>,
}

impl TrackedStream {
    pub fn frames(&self, tc: usize) -> Vec<Frame> {
        self.records[tc].frames.clone()
    }
}

/// Renders `scenario` as detection records, splitting each individual's
/// presence into `m` contiguous segments with fresh ids, `m` drawn from the
/// multiplicity distribution truncated at `rho_track`. Ids are never reused.
pub fn tracked_detection_stream(
    scenario: &Scenario,
    rho_track: f64,
    v_max: f64,
    seed: u64,
) -> Result<TrackedStream, QueryError> {
    let pmf = multiplicity_pmf(rho_track)?;
    let mut rng = rng_from_seed(seed);
    let mut next_id = 0u64;
    let mut records = Vec::with_capacity(scenario.tcs.len());
    let mut all_ids = Vec::with_capacity(scenario.tcs.len());
    for (tc, people) in scenario.tcs.iter().enumerate() {
        let mut frames: Vec<Frame> = vec![Vec::new(); scenario.frames_per_tc];
        let mut tc_ids = Vec::with_capacity(people.len());
        for person in people {
            if person.first_frame > person.last_frame || person.last_frame >= scenario.frames_per_tc {
                return Err(QueryError::BadScenario(format!(
                    "presence {}..={} outside {} frames",
                    person.first_frame, person.last_frame, scenario.frames_per_tc
                )));
            }
            let span = person.last_frame - person.first_frame + 1;
            let m = (sample_index(&mut rng, &pmf) + 1).min(span);
            let ids: Vec<TrackId> = (0..m)
                .map(|k| TrackId(next_id + k as u64))
                .collect();
            next_id += m as u64;
            for off in 0..span {
                let seg = off * m / span;
                frames[person.first_frame + off].push(Detection {
                    track_id: ids[seg],
                    object_type: person.object_type,
                    value: person.value,
                });
            }
            tc_ids.push(ids);
        }
        records.push(DetectionRecord::new(tc as u64, v_max, frames)?);
        all_ids.push(tc_ids);
    }
    Ok(TrackedStream {
        records,
        ids: all_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn pmf_sums_to_one() {
        let s: f64 = TRACK_MULTIPLICITY_PMF.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(multiplicity_pmf(1.0).unwrap(), vec![1.0]);
        assert_eq!(multiplicity_pmf(20.0).unwrap().len(), 9);
        assert!(multiplicity_pmf(0.9).is_err());
    }

    #[test]
    fn perfect_tracking_one_id_each() {
        let sc = Scenario::synthetic(20, 10, 5, 30.0, 3);
        let st = tracked_detection_stream(&sc, 1.0, 30.0, 4).unwrap();
        for tc in &st.ids {
            assert!(tc.iter().all(|ids| ids.len() == 1));
        }
    }

    #[test]
    fn ids_never_repeat_across_tcs() {
        let sc = Scenario::synthetic(100, 12, 6, 30.0, 5);
        let st = tracked_detection_stream(&sc, 9.0, 30.0, 6).unwrap();
        let mut owner = std::collections::HashMap::new();
        for (tc, rec) in st.records.iter().enumerate() {
            for d in rec.frames.iter().flatten() {
                assert_eq!(*owner.entry(d.track_id).or_insert(tc), tc);
            }
        }
        let distinct: HashSet<_> = st.ids.iter().flatten().flatten().collect();
        let total: usize = st.ids.iter().flatten().map(Vec::len).sum();
        assert_eq!(distinct.len(), total);
    }

    #[test]
    fn empirical_multiplicity_fractions() {
        let people: Vec<Individual> = (0..100_000)
            .map(|_| Individual {
                object_type: ObjectType::Pedestrian,
                value: 1.0,
                first_frame: 0,
                last_frame: 19,
            })
            .collect();
        let sc = Scenario {
            frames_per_tc: 20,
            tcs: vec![people],
        };
        let st = tracked_detection_stream(&sc, 9.0, 1.0, 7).unwrap();
        let mut hist = [0usize; 9];
        for ids in &st.ids[0] {
            hist[ids.len() - 1] += 1;
        }
        for (k, &c) in hist.iter().enumerate() {
            let frac = c as f64 / 100_000.0;
            assert!((frac - TRACK_MULTIPLICITY_PMF[k]).abs() < 0.02, "m={} frac={frac}", k + 1);
        }
    }
}
