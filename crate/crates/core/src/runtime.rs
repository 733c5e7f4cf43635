//! Ephemeral container rotation and the localized-release output buffer.
//!
//! A [`Slot`] runs one logical application over a frame stream. The active
//! instance sees at most `max_ec` frames; `min_ec` frames before it expires a
//! shadow instance is launched and fed the same frames, and once the shadow
//! holds `min_ec` frames it takes over and the old instance is destroyed.
//!
//! Outputs live in a node-level [`OutputBuffer`] and are evicted when the
//! instance that produced them is torn down.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::model::LocalityId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("max_ec must be positive")]
    ZeroMaxEc,
    #[error("min_ec ({min_ec}) must be strictly below max_ec ({max_ec})")]
    MinNotBelowMax { min_ec: u64, max_ec: u64 },
    #[error("max_ec {max_ec} exceeds the {role} bound {bound}")]
    RoleBoundExceeded { role: Role, max_ec: u64, bound: u64 },
    #[error("slot has no running instance yet")]
    NoActiveInstance,
    #[error("instance {0} is a warming shadow and cannot emit")]
    ShadowCannotEmit(InstanceId),
    #[error("instance {0} has been torn down")]
    InstanceTornDown(InstanceId),
    #[error("instance {0} does not belong to this slot")]
    UnknownInstance(InstanceId),
    #[error("record {0} was evicted")]
    RecordEvicted(RecordId),
    #[error("record {0} is unknown to this buffer")]
    UnknownRecord(RecordId),
    #[error("cannot write rotation trace: {0}")]
    Trace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Application,
    System,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Application => "application",
            Role::System => "system",
        })
    }
}

/// Upper bounds on `max_ec` per role, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleLimits {
    pub max_ec_app: u64,
    pub max_ec_sys: u64,
}

impl Default for RoleLimits {
    fn default() -> Self {
        RoleLimits {
            max_ec_app: u64::MAX,
            max_ec_sys: u64::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerConfig {
    pub min_ec: u64,
    pub max_ec: u64,
    pub role: Role,
}

/// Non-fatal configuration findings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigWarning {
    /// `min_ec > max_ec / 2`: instances overlap for more than half their life.
    WideOverlap,
}

impl ContainerConfig {
    pub fn new(min_ec: u64, max_ec: u64, role: Role) -> Self {
        ContainerConfig {
            min_ec,
            max_ec,
            role,
        }
    }

    /// Converts second-denominated bounds to frames at `fps`.
    pub fn from_seconds(min_ec_s: f64, max_ec_s: f64, fps: f64, role: Role) -> Self {
        ContainerConfig {
            min_ec: (min_ec_s * fps).round() as u64,
            max_ec: (max_ec_s * fps).round() as u64,
            role,
        }
    }

    pub fn validate(&self, limits: &RoleLimits) -> Result<Option<ConfigWarning>, RuntimeError> {
        if self.max_ec == 0 {
            return Err(RuntimeError::ZeroMaxEc);
        }
        if self.min_ec >= self.max_ec {
            return Err(RuntimeError::MinNotBelowMax {
                min_ec: self.min_ec,
                max_ec: self.max_ec,
            });
        }
        let bound = match self.role {
            Role::Application => limits.max_ec_app,
            Role::System => limits.max_ec_sys,
        };
        if self.max_ec > bound {
            return Err(RuntimeError::RoleBoundExceeded {
                role: self.role,
                max_ec: self.max_ec,
                bound,
            });
        }
        Ok((self.min_ec > self.max_ec / 2).then_some(ConfigWarning::WideOverlap))
    }
}

/// Instance ids are `(slot, sequence)` pairs, unique as long as slot ids are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId {
    pub slot: u32,
    pub seq: u64,
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.slot, self.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceState {
    Warming,
    Active,
    TornDown,
}

#[derive(Debug, Clone)]
struct Instance<F> {
    id: InstanceId,
    first_frame: u64,
    frames: Vec<F>,
}

impl<F> Instance<F> {
    fn count(&self) -> u64 {
        self.frames.len() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// The slot's first instance came up.
    Started,
    ShadowLaunched,
    Switched,
    TornDown { frames_seen: u64 },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Started => "started",
            EventKind::ShadowLaunched => "shadow_launched",
            EventKind::Switched => "switched",
            EventKind::TornDown { .. } => "torn_down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RotationEvent {
    pub frame_index: u64,
    pub kind: EventKind,
    pub instance: InstanceId,
}

/// The frames visible to the application right now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleWindow<'a, F> {
    /// Global index of `frames[0]`.
    pub first_frame: u64,
    pub frames: &'a [F],
    /// Set until the first instance has accumulated `min_ec` frames.
    pub warming: bool,
}

impl<F> VisibleWindow<'_, F> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Slot<F> {
    id: u32,
    config: ContainerConfig,
    active: Option<Instance<F>>,
    shadow: Option<Instance<F>>,
    next_seq: u64,
    frame_index: u64,
    warmed: bool,
}

impl<F: Clone> Slot<F> {
    pub fn new(id: u32, config: ContainerConfig, limits: &RoleLimits) -> Result<Self, RuntimeError> {
        config.validate(limits)?;
        Ok(Slot {
            id,
            config,
            active: None,
            shadow: None,
            next_seq: 0,
            frame_index: 0,
            warmed: config.min_ec == 0,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn config(&self) -> &ContainerConfig {
        &self.config
    }

    /// Number of frames processed so far (the index of the next frame).
    pub fn frames_processed(&self) -> u64 {
        self.frame_index
    }

    fn spawn(&mut self) -> Instance<F> {
        let id = InstanceId {
            slot: self.id,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        Instance {
            id,
            first_frame: self.frame_index,
            frames: Vec::new(),
        }
    }

    fn try_switch(&mut self, events: &mut Vec<RotationEvent>) {
        // A full active instance forces the switch: with min_ec > max_ec / 2
        // the shadow cannot warm up in time and max_ec takes precedence.
        let active_full = self
            .active
            .as_ref()
            .is_some_and(|a| a.count() >= self.config.max_ec);
        let ready = self
            .shadow
            .as_ref()
            .is_some_and(|s| s.count() >= self.config.min_ec || active_full);
        if !ready {
            return;
        }
        let shadow = self.shadow.take().expect("checked above");
        let mut old = self.active.replace(shadow).expect("shadow implies active");
        let frames_seen = old.count();
        old.frames.clear();
        old.frames.shrink_to_fit();
        let fi = self.frame_index;
        let new_id = self.active.as_ref().expect("just set").id;
        events.push(RotationEvent {
            frame_index: fi,
            kind: EventKind::Switched,
            instance: new_id,
        });
        events.push(RotationEvent {
            frame_index: fi,
            kind: EventKind::TornDown { frames_seen },
            instance: old.id,
        });
    }

    /// Processes one frame and reports any rotation that happened before it
    /// was delivered.
    pub fn advance_frame(&mut self, frame: F) -> Vec<RotationEvent> {
        let mut events = Vec::new();
        let fi = self.frame_index;
        if self.active.is_none() {
            let inst = self.spawn();
            events.push(RotationEvent {
                frame_index: fi,
                kind: EventKind::Started,
                instance: inst.id,
            });
            self.active = Some(inst);
        }
        self.try_switch(&mut events);
        let launch_at = self.config.max_ec - self.config.min_ec;
        if self.shadow.is_none() && self.active.as_ref().is_some_and(|a| a.count() >= launch_at) {
            let inst = self.spawn();
            events.push(RotationEvent {
                frame_index: fi,
                kind: EventKind::ShadowLaunched,
                instance: inst.id,
            });
            self.shadow = Some(inst);
            // With min_ec = 0 the fresh shadow is immediately ready.
            self.try_switch(&mut events);
        }
        if let Some(s) = self.shadow.as_mut() {
            s.frames.push(frame.clone());
        }
        let active = self.active.as_mut().expect("active exists after start");
        active.frames.push(frame);
        if active.count() >= self.config.min_ec {
            self.warmed = true;
        }
        self.frame_index += 1;
        events
    }

    pub fn visible_window(&self) -> VisibleWindow<'_, F> {
        match &self.active {
            Some(a) => VisibleWindow {
                first_frame: a.first_frame,
                frames: &a.frames,
                warming: !self.warmed,
            },
            None => VisibleWindow {
                first_frame: 0,
                frames: &[],
                warming: true,
            },
        }
    }

    pub fn active_instance(&self) -> Option<InstanceId> {
        self.active.as_ref().map(|a| a.id)
    }

    pub fn shadow_instance(&self) -> Option<InstanceId> {
        self.shadow.as_ref().map(|s| s.id)
    }

    pub fn live_instances(&self) -> usize {
        usize::from(self.active.is_some()) + usize::from(self.shadow.is_some())
    }

    pub fn instance_state(&self, id: InstanceId) -> Option<InstanceState> {
        if id.slot != self.id || id.seq >= self.next_seq {
            return None;
        }
        if self.active_instance() == Some(id) {
            Some(InstanceState::Active)
        } else if self.shadow_instance() == Some(id) {
            Some(InstanceState::Warming)
        } else {
            Some(InstanceState::TornDown)
        }
    }

    /// Frame count held by a live instance (torn-down instances hold none).
    pub fn instance_frames(&self, id: InstanceId) -> usize {
        [self.active.as_ref(), self.shadow.as_ref()]
            .into_iter()
            .flatten()
            .find(|i| i.id == id)
            .map_or(0, |i| i.frames.len())
    }

    fn check_emitter(&self, id: InstanceId) -> Result<(), RuntimeError> {
        match self.instance_state(id) {
            None => Err(RuntimeError::UnknownInstance(id)),
            Some(InstanceState::Active) => Ok(()),
            Some(InstanceState::Warming) => Err(RuntimeError::ShadowCannotEmit(id)),
            Some(InstanceState::TornDown) => Err(RuntimeError::InstanceTornDown(id)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId(pub u64);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputRecord {
    pub id: RecordId,
    pub payload: Vec<u8>,
    pub producer: InstanceId,
    pub evict_at_teardown_of: InstanceId,
    pub hop_budget: u32,
    pub origin: LocalityId,
    /// Emitted before the slot finished its initial warmup.
    pub warming: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardOutcome {
    Delivered(OutputRecord),
    Denied(DenyReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    NotPermitted,
    HopBudgetExhausted,
}

#[derive(Debug, Clone)]
enum Entry {
    Live(OutputRecord),
    Evicted,
}

/// A node's localized-release buffer. Readers only ever see records whose
/// producer is still alive.
#[derive(Debug, Clone)]
pub struct OutputBuffer {
    locality: LocalityId,
    next_id: u64,
    entries: BTreeMap<RecordId, Entry>,
}

impl OutputBuffer {
    pub fn new(locality: LocalityId) -> Self {
        OutputBuffer {
            locality,
            next_id: 0,
            entries: BTreeMap::new(),
        }
    }

    pub fn locality(&self) -> &LocalityId {
        &self.locality
    }

    /// Emits from `producer`, which must be the slot's active instance.
    pub fn emit<F: Clone>(
        &mut self,
        slot: &Slot<F>,
        producer: InstanceId,
        payload: Vec<u8>,
        hop_budget: u32,
    ) -> Result<RecordId, RuntimeError> {
        slot.check_emitter(producer)?;
        let id = RecordId(self.next_id);
        self.next_id += 1;
        let rec = OutputRecord {
            id,
            payload,
            producer,
            evict_at_teardown_of: producer,
            hop_budget,
            origin: self.locality.clone(),
            warming: slot.visible_window().warming,
        };
        self.entries.insert(id, Entry::Live(rec));
        Ok(id)
    }

    /// Emits from the slot's current active instance with no forwarding budget.
    pub fn emit_active<F: Clone>(
        &mut self,
        slot: &Slot<F>,
        payload: Vec<u8>,
    ) -> Result<RecordId, RuntimeError> {
        let producer = slot.active_instance().ok_or(RuntimeError::NoActiveInstance)?;
        self.emit(slot, producer, payload, 0)
    }

    pub fn read(&self, id: RecordId) -> Result<&OutputRecord, RuntimeError> {
        match self.entries.get(&id) {
            Some(Entry::Live(r)) => Ok(r),
            Some(Entry::Evicted) => Err(RuntimeError::RecordEvicted(id)),
            None => Err(RuntimeError::UnknownRecord(id)),
        }
    }

    /// Evicts everything tied to `instance`; returns the number of records dropped.
    pub fn evict_producer(&mut self, instance: InstanceId) -> usize {
        let mut n = 0;
        for e in self.entries.values_mut() {
            if matches!(e, Entry::Live(r) if r.evict_at_teardown_of == instance) {
                *e = Entry::Evicted;
                n += 1;
            }
        }
        n
    }

    /// Applies the teardowns in a batch of rotation events.
    pub fn apply_events(&mut self, events: &[RotationEvent]) {
        for ev in events {
            if matches!(ev.kind, EventKind::TornDown { .. }) {
                self.evict_producer(ev.instance);
            }
        }
    }

    /// Prepares a copy for the neighbouring node, spending one hop.
    pub fn forward(&self, id: RecordId, admin_permitted: bool) -> Result<ForwardOutcome, RuntimeError> {
        let rec = self.read(id)?;
        if !admin_permitted {
            return Ok(ForwardOutcome::Denied(DenyReason::NotPermitted));
        }
        if rec.hop_budget == 0 {
            return Ok(ForwardOutcome::Denied(DenyReason::HopBudgetExhausted));
        }
        Ok(ForwardOutcome::Delivered(OutputRecord {
            hop_budget: rec.hop_budget - 1,
            ..rec.clone()
        }))
    }

    /// Accepts a forwarded record; it is stored under a fresh local id.
    pub fn deliver(&mut self, mut rec: OutputRecord) -> RecordId {
        let id = RecordId(self.next_id);
        self.next_id += 1;
        rec.id = id;
        self.entries.insert(id, Entry::Live(rec));
        id
    }

    pub fn live_count(&self) -> usize {
        self.entries
            .values()
            .filter(|e| matches!(e, Entry::Live(_)))
            .count()
    }
}

/// Writes `frame_index,event,instance_id` rows.
pub fn write_rotation_trace<W: Write>(events: &[RotationEvent], out: W) -> Result<(), RuntimeError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| RuntimeError::Trace(e.to_string());
    w.write_record(["frame_index", "event", "instance_id"]).map_err(err)?;
    for ev in events {
        w.write_record([
            ev.frame_index.to_string(),
            ev.kind.name().to_owned(),
            ev.instance.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| RuntimeError::Trace(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(min_ec: u64, max_ec: u64) -> Slot<u64> {
        Slot::new(0, ContainerConfig::new(min_ec, max_ec, Role::Application), &RoleLimits::default())
            .unwrap()
    }

    fn run(s: &mut Slot<u64>, frames: std::ops::Range<u64>) -> Vec<RotationEvent> {
        frames.flat_map(|f| s.advance_frame(f)).collect()
    }

    #[test]
    fn hand_traced_rotation() {
        let mut s = slot(2, 10);
        let events = run(&mut s, 0..12);
        let at = |k: &str| {
            events
                .iter()
                .filter(|e| e.kind.name() == k)
                .map(|e| e.frame_index)
                .collect::<Vec<_>>()
        };
        assert_eq!(at("shadow_launched"), vec![8]);
        assert_eq!(at("switched"), vec![10]);
        let torn: Vec<_> = events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::TornDown { frames_seen } => Some((e.frame_index, e.instance.seq, frames_seen)),
                _ => None,
            })
            .collect();
        assert_eq!(torn, vec![(10, 0, 10)]);
        assert_eq!(s.instance_state(InstanceId { slot: 0, seq: 0 }), Some(InstanceState::TornDown));
        assert_eq!(s.instance_frames(InstanceId { slot: 0, seq: 0 }), 0);
    }

    #[test]
    fn window_after_eleven_frames() {
        let mut s = slot(2, 10);
        run(&mut s, 0..5);
        assert_eq!(s.visible_window().frames, &[0, 1, 2, 3, 4]);
        run(&mut s, 5..11);
        let w = s.visible_window();
        assert_eq!(w.first_frame, 8);
        assert_eq!(w.frames, &[8, 9, 10]);
        assert!(!w.warming);
    }

    #[test]
    fn warming_flag() {
        let mut s = slot(3, 10);
        assert!(s.visible_window().warming);
        run(&mut s, 0..2);
        assert!(s.visible_window().warming);
        run(&mut s, 2..3);
        assert!(!s.visible_window().warming);
    }

    #[test]
    fn tumbling_tiles_without_overlap() {
        let mut s = slot(0, 4);
        let events = run(&mut s, 0..12);
        let starts: Vec<_> = events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Started | EventKind::Switched))
            .map(|e| e.frame_index)
            .collect();
        assert_eq!(starts, vec![0, 4, 8]);
        assert!(s.shadow_instance().is_none());
    }

    #[test]
    fn half_overlap_launch_offsets() {
        let n = 8;
        let mut s = slot(n / 2, n);
        let events = run(&mut s, 0..3 * n);
        let launches: Vec<_> = events
            .iter()
            .filter(|e| e.kind == EventKind::ShadowLaunched)
            .map(|e| e.frame_index)
            .collect();
        let resets: Vec<_> = events
            .iter()
            .filter(|e| e.kind == EventKind::Switched)
            .map(|e| e.frame_index)
            .collect();
        assert_eq!(launches.len(), resets.len() + 1);
        for (l, r) in launches.iter().zip(&resets) {
            assert_eq!(r - l, n / 2);
        }
    }

    #[test]
    fn config_validation() {
        let lim = RoleLimits {
            max_ec_app: 100,
            max_ec_sys: 1000,
        };
        assert!(ContainerConfig::new(5, 5, Role::Application).validate(&lim).is_err());
        assert!(matches!(
            ContainerConfig::new(1, 200, Role::Application).validate(&lim),
            Err(RuntimeError::RoleBoundExceeded { .. })
        ));
        assert_eq!(ContainerConfig::new(1, 200, Role::System).validate(&lim), Ok(None));
        assert_eq!(
            ContainerConfig::new(60, 100, Role::Application).validate(&lim),
            Ok(Some(ConfigWarning::WideOverlap))
        );
        assert_eq!(
            ContainerConfig::from_seconds(2.0, 300.0, 30.0, Role::Application),
            ContainerConfig::new(60, 9000, Role::Application)
        );
    }

    #[test]
    fn emission_and_eviction() {
        let mut s = slot(2, 6);
        let mut buf = OutputBuffer::new("x1".into());
        assert_eq!(buf.emit_active(&s, vec![1]), Err(RuntimeError::NoActiveInstance));
        run(&mut s, 0..1);
        let r0 = buf.emit_active(&s, vec![1]).unwrap();
        assert!(buf.read(r0).unwrap().warming);
        run(&mut s, 1..5);
        let shadow = s.shadow_instance().unwrap();
        assert_eq!(
            buf.emit(&s, shadow, vec![9], 0),
            Err(RuntimeError::ShadowCannotEmit(shadow))
        );
        let first = s.active_instance().unwrap();
        let mut traced = Vec::new();
        for f in 5..7 {
            let ev = s.advance_frame(f);
            buf.apply_events(&ev);
            traced.extend(ev);
        }
        assert_eq!(buf.read(r0), Err(RuntimeError::RecordEvicted(r0)));
        assert_eq!(
            buf.emit(&s, first, vec![2], 0),
            Err(RuntimeError::InstanceTornDown(first))
        );
        let r1 = buf.emit_active(&s, vec![3]).unwrap();
        assert!(buf.read(r1).is_ok());
        let mut csv_out = Vec::new();
        write_rotation_trace(&traced, &mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert!(text.starts_with("frame_index,event,instance_id\n"));
        assert!(text.contains("6,torn_down,0.0"));
    }

    #[test]
    fn forwarding_rules() {
        let mut s = slot(0, 4);
        run(&mut s, 0..1);
        let mut a = OutputBuffer::new("a".into());
        let id = a.emit(&s, s.active_instance().unwrap(), vec![7], 1).unwrap();
        assert_eq!(
            a.forward(id, false).unwrap(),
            ForwardOutcome::Denied(DenyReason::NotPermitted)
        );
        match a.forward(id, true).unwrap() {
            ForwardOutcome::Delivered(r) => assert_eq!(r.hop_budget, 0),
            other => panic!("unexpected {other:?}"),
        }
        let zero = a.emit_active(&s, vec![8]).unwrap();
        assert_eq!(
            a.forward(zero, true).unwrap(),
            ForwardOutcome::Denied(DenyReason::HopBudgetExhausted)
        );
        a.evict_producer(s.active_instance().unwrap());
        assert_eq!(a.forward(id, true), Err(RuntimeError::RecordEvicted(id)));
    }
}
