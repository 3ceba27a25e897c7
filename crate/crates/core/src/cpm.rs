//! Per-vehicle CPM generation state machine.
//!
//! Implements the ETSI trigger rules (check every T_GenCpm; include an
//! object when it is new or when ΔP > 4 m, ΔS > 0.5 m/s or ΔT > 1 s since
//! its last inclusion) and the look-ahead extension, which anticipates
//! objects whose predicted deltas
//!
//!   NextΔP = ΔP + S·T + A·T²/2
//!   NextΔS = ΔS + A·T
//!   NextΔT = ΔT + T
//!
//! would cross a threshold within the horizon T. All threshold comparisons
//! are strict. A fallback CPM goes out when nothing triggered for 1 s, and
//! the sensor-information container rides along at most once per second.

use std::collections::BTreeMap;

use crate::config::{CpmConfig, Policy};
use crate::model::{SimTime, Vec2, VehicleId};
use crate::sensing::PerceivedObject;

/// Measurement snapshot stored when an object was last put in a CPM.
#[derive(Debug, Clone, Copy)]
struct InclusionRef {
    position: Vec2,
    speed: f64,
    time: SimTime,
}

/// Bookkeeping for one detected object.
#[derive(Debug, Clone, Copy)]
struct TrackedObjectRecord {
    inclusion: Option<InclusionRef>,
    last_seen: SimTime,
}

/// Trigger thresholds and variant selection.
#[derive(Debug, Clone, Copy)]
pub struct GenerationPolicy {
    pub variant: Policy,
    pub pos_threshold_m: f64,
    pub speed_threshold_mps: f64,
    pub time_threshold: SimTime,
    pub t_gen_cpm: SimTime,
    /// Prediction horizon in Eqs. (1)-(3); zero reduces the look-ahead
    /// variant to the baseline rules.
    pub lookahead_horizon_s: f64,
}

impl GenerationPolicy {
    pub fn from_config(cpm: &CpmConfig, variant: Policy) -> Self {
        GenerationPolicy {
            variant,
            pos_threshold_m: cpm.pos_threshold_m,
            speed_threshold_mps: cpm.speed_threshold_mps,
            time_threshold: SimTime::from_secs_f64(cpm.time_threshold_s),
            t_gen_cpm: SimTime::from_secs_f64(cpm.t_gen_cpm_s),
            lookahead_horizon_s: cpm.lookahead_horizon_s,
        }
    }
}

/// Byte-size accounting for assembled CPMs.
#[derive(Debug, Clone, Copy)]
pub struct CpmSizeModel {
    pub lower_layer_bytes: u32,
    pub base_container_bytes: u32,
    pub sic_bytes: u32,
    pub object_bytes: u32,
    pub max_objects: u32,
}

impl CpmSizeModel {
    pub fn from_config(cpm: &CpmConfig) -> Self {
        CpmSizeModel {
            lower_layer_bytes: cpm.lower_layer_bytes,
            base_container_bytes: cpm.base_container_bytes,
            sic_bytes: cpm.sic_bytes,
            object_bytes: cpm.object_bytes,
            max_objects: cpm.max_objects_per_cpm,
        }
    }

    pub fn size_bytes(&self, object_count: usize, sic: bool) -> u32 {
        self.lower_layer_bytes
            + self.base_container_bytes
            + if sic { self.sic_bytes } else { 0 }
            + self.object_bytes * object_count as u32
    }
}

/// One assembled collective perception message.
#[derive(Debug, Clone)]
pub struct Cpm {
    pub sender: VehicleId,
    pub generated_at: SimTime,
    pub sic_present: bool,
    pub objects: Vec<PerceivedObject>,
    pub size_bytes: u32,
}

/// Why each object made it into the CPM; kept for logs and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InclusionReason {
    New,
    Position,
    Speed,
    Time,
    Anticipated,
}

/// Per-vehicle generation state machine. The scheduler calls
/// [`CpmGenerator::on_check`] once every T_GenCpm with the current
/// detection set.
#[derive(Debug)]
pub struct CpmGenerator {
    policy: GenerationPolicy,
    sizes: CpmSizeModel,
    records: BTreeMap<VehicleId, TrackedObjectRecord>,
    last_cpm: Option<SimTime>,
    last_sic: Option<SimTime>,
    /// Record retention after detection loss.
    grace: SimTime,
    sic_period: SimTime,
    fallback_period: SimTime,
    started_at: Option<SimTime>,
}

impl CpmGenerator {
    pub fn new(cfg: &CpmConfig, variant: Policy) -> Self {
        CpmGenerator {
            policy: GenerationPolicy::from_config(cfg, variant),
            sizes: CpmSizeModel::from_config(cfg),
            records: BTreeMap::new(),
            last_cpm: None,
            last_sic: None,
            grace: SimTime::from_secs_f64(1.0),
            sic_period: SimTime::from_secs_f64(cfg.sic_period_s),
            fallback_period: SimTime::from_secs_f64(cfg.time_threshold_s),
            started_at: None,
        }
    }

    pub fn policy(&self) -> &GenerationPolicy {
        &self.policy
    }

    /// Generation check. Returns the CPM to transmit, if any, together with
    /// the per-object inclusion reasons (same order as `cpm.objects`).
    pub fn on_check(
        &mut self,
        sender: VehicleId,
        detections: &[PerceivedObject],
        now: SimTime,
    ) -> Option<(Cpm, Vec<InclusionReason>)> {
        if self.started_at.is_none() {
            self.started_at = Some(now);
        }
        self.purge_expired(now);
        for obj in detections {
            self.records
                .entry(obj.id)
                .and_modify(|r| r.last_seen = now)
                .or_insert(TrackedObjectRecord {
                    inclusion: None,
                    last_seen: now,
                });
        }

        let mut include: Vec<(PerceivedObject, InclusionReason)> = Vec::new();
        for obj in detections {
            if let Some(reason) = self.etsi_reason(obj, now) {
                include.push((*obj, reason));
            }
        }
        let triggered = !include.is_empty();

        if triggered && self.policy.variant == Policy::LookAhead {
            for obj in detections {
                if include.iter().any(|(o, _)| o.id == obj.id) {
                    continue;
                }
                if self.anticipates(obj, now) {
                    include.push((*obj, InclusionReason::Anticipated));
                }
            }
        }

        if !triggered && !self.fallback_due(now) {
            return None;
        }

        Some(self.assemble(sender, include, now))
    }

    /// ETSI conditions for one object: new, or any delta strictly above its
    /// threshold.
    fn etsi_reason(&self, obj: &PerceivedObject, now: SimTime) -> Option<InclusionReason> {
        let record = self.records.get(&obj.id).expect("record inserted above");
        let Some(incl) = record.inclusion else {
            return Some(InclusionReason::New);
        };
        let dp = obj.position.distance(incl.position);
        if dp > self.policy.pos_threshold_m {
            return Some(InclusionReason::Position);
        }
        let ds = (obj.speed - incl.speed).abs();
        if ds > self.policy.speed_threshold_mps {
            return Some(InclusionReason::Speed);
        }
        if now.since(incl.time) > self.policy.time_threshold.as_nanos() {
            return Some(InclusionReason::Time);
        }
        None
    }

    /// Look-ahead prediction (Eqs. 1-3) for an object that did not meet the
    /// ETSI conditions. Uses the object's current speed and acceleration.
    fn anticipates(&self, obj: &PerceivedObject, now: SimTime) -> bool {
        let record = self.records.get(&obj.id).expect("record inserted above");
        let Some(incl) = record.inclusion else {
            // New objects are always in the ETSI set already.
            return false;
        };
        let t = self.policy.lookahead_horizon_s;
        if t <= 0.0 {
            return false;
        }
        let dp = obj.position.distance(incl.position);
        let next_dp = dp + obj.speed * t + 0.5 * obj.acceleration * t * t;
        if next_dp > self.policy.pos_threshold_m {
            return true;
        }
        let ds = (obj.speed - incl.speed).abs();
        let next_ds = ds + obj.acceleration * t;
        if next_ds > self.policy.speed_threshold_mps {
            return true;
        }
        let dt_ns = now.since(incl.time);
        let horizon_ns = SimTime::from_secs_f64(t).as_nanos();
        dt_ns + horizon_ns > self.policy.time_threshold.as_nanos()
    }

    fn fallback_due(&self, now: SimTime) -> bool {
        let reference = self.last_cpm.or(self.started_at).unwrap_or(SimTime::ZERO);
        now.since(reference) >= self.fallback_period.as_nanos()
    }

    fn sic_due(&self, now: SimTime) -> bool {
        match self.last_sic {
            None => true,
            Some(t) => now.since(t) >= self.sic_period.as_nanos(),
        }
    }

    fn assemble(
        &mut self,
        sender: VehicleId,
        mut include: Vec<(PerceivedObject, InclusionReason)>,
        now: SimTime,
    ) -> (Cpm, Vec<InclusionReason>) {
        let max = self.sizes.max_objects as usize;
        if include.len() > max {
            log::warn!(
                "{sender} CPM at {now} overflows {} objects; keeping the {max} stalest",
                include.len()
            );
            // Stalest (largest ΔT) first; never-included objects are the
            // stalest of all. Vehicle id breaks ties deterministically.
            include.sort_by(|(a, _), (b, _)| {
                let age = |o: &PerceivedObject| match self.records[&o.id].inclusion {
                    None => u64::MAX,
                    Some(incl) => now.since(incl.time),
                };
                age(b).cmp(&age(a)).then(a.id.cmp(&b.id))
            });
            include.truncate(max);
        }
        include.sort_by_key(|(o, _)| o.id);

        let sic = self.sic_due(now);
        for (obj, _) in &include {
            let record = self.records.get_mut(&obj.id).expect("record exists");
            record.inclusion = Some(InclusionRef {
                position: obj.position,
                speed: obj.speed,
                time: now,
            });
        }
        self.last_cpm = Some(now);
        if sic {
            self.last_sic = Some(now);
        }
        let size = self.sizes.size_bytes(include.len(), sic);
        let (objects, reasons): (Vec<_>, Vec<_>) = include.into_iter().unzip();
        (
            Cpm {
                sender,
                generated_at: now,
                sic_present: sic,
                objects,
                size_bytes: size,
            },
            reasons,
        )
    }

    /// Drop records whose object has been out of detection for longer than
    /// the grace period; such an object counts as new on re-entry.
    fn purge_expired(&mut self, now: SimTime) {
        let grace = self.grace.as_nanos();
        self.records.retain(|_, r| now.since(r.last_seen) <= grace);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn cpm_cfg() -> CpmConfig {
        ScenarioConfig::default_highway().cpm
    }

    fn obj(id: u32, x: f64, speed: f64, accel: f64, now: SimTime) -> PerceivedObject {
        PerceivedObject {
            id: VehicleId(id),
            position: Vec2::new(x, 0.0),
            speed,
            acceleration: accel,
            measured_at: now,
        }
    }

    fn t(secs: f64) -> SimTime {
        SimTime::from_secs_f64(secs)
    }

    #[test]
    fn new_object_triggers_immediately() {
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::Etsi);
        let (cpm, reasons) = g
            .on_check(VehicleId(0), &[obj(1, 10.0, 20.0, 0.0, t(0.0))], t(0.0))
            .unwrap();
        assert_eq!(cpm.objects.len(), 1);
        assert_eq!(reasons, vec![InclusionReason::New]);
        assert!(cpm.sic_present);
    }

    #[test]
    fn position_threshold_is_strict() {
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::Etsi);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 20.0, 0.0, t(0.0))], t(0.0))
            .unwrap();
        // Exactly 4.0 m: not included; 4.1 m: included.
        assert!(g
            .on_check(VehicleId(0), &[obj(1, 4.0, 20.0, 0.0, t(0.1))], t(0.1))
            .is_none());
        let (cpm, reasons) = g
            .on_check(VehicleId(0), &[obj(1, 4.1, 20.0, 0.0, t(0.2))], t(0.2))
            .unwrap();
        assert_eq!(cpm.objects[0].position.x, 4.1);
        assert_eq!(reasons, vec![InclusionReason::Position]);
    }

    #[test]
    fn below_all_thresholds_stays_silent() {
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::Etsi);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 20.0, 0.0, t(0.0))], t(0.0))
            .unwrap();
        // 3.9 m, 0.4 m/s, 0.9 s: nothing met.
        assert!(g
            .on_check(VehicleId(0), &[obj(1, 3.9, 20.4, 0.0, t(0.9))], t(0.9))
            .is_none());
    }

    #[test]
    fn highway_speed_gives_300ms_cadence() {
        // 70 km/h = 19.44 m/s; at T_GenCpm = 0.1 s the position delta first
        // exceeds 4 m on the third check after an inclusion.
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::Etsi);
        let v = 70.0 / 3.6;
        let mut inclusions = Vec::new();
        for k in 0..10 {
            let now = t(k as f64 * 0.1);
            let x = v * now.as_secs_f64();
            if g.on_check(VehicleId(0), &[obj(1, x, v, 0.0, now)], now).is_some() {
                inclusions.push(k);
            }
        }
        assert_eq!(inclusions, vec![0, 3, 6, 9]);
    }

    #[test]
    fn speed_and_time_triggers_fire() {
        let cfg = cpm_cfg();
        let mut g = CpmGenerator::new(&cfg, Policy::Etsi);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 20.0, 0.0, t(0.0))], t(0.0))
            .unwrap();
        let (_, reasons) = g
            .on_check(VehicleId(0), &[obj(1, 1.0, 20.6, 0.0, t(0.1))], t(0.1))
            .unwrap();
        assert_eq!(reasons, vec![InclusionReason::Speed]);
        // Time trigger: strict >, so at 1.0 s elapsed the object is not
        // included (only the empty fallback goes out); at 1.1 s it is.
        let mut g = CpmGenerator::new(&cfg, Policy::Etsi);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 0.0, 0.0, t(0.0))], t(0.0))
            .unwrap();
        let (cpm, _) = g
            .on_check(VehicleId(0), &[obj(1, 0.0, 0.0, 0.0, t(1.0))], t(1.0))
            .unwrap();
        assert!(cpm.objects.is_empty());
        let (_, reasons) = g
            .on_check(VehicleId(0), &[obj(1, 0.0, 0.0, 0.0, t(1.1))], t(1.1))
            .unwrap();
        assert_eq!(reasons, vec![InclusionReason::Time]);
    }

    #[test]
    fn lookahead_anticipates_position_crossing() {
        // ΔP = 3.5 m, S = 19.44 m/s, A = 0 → NextΔP = 5.44 m > 4.
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::LookAhead);
        let v = 19.44;
        g.on_check(
            VehicleId(0),
            &[obj(1, 0.0, v, 0.0, t(0.0)), obj(2, 0.0, v, 0.0, t(0.0))],
            t(0.0),
        )
        .unwrap();
        // Trigger the CPM with a new object; object 1 sits at ΔP = 3.5 m.
        let dets = [obj(1, 3.5, v, 0.0, t(0.1)), obj(3, 0.0, v, 0.0, t(0.1))];
        let (cpm, reasons) = g.on_check(VehicleId(0), &dets, t(0.1)).unwrap();
        let ids: Vec<u32> = cpm.objects.iter().map(|o| o.id.0).collect();
        assert_eq!(ids, vec![1, 3]);
        assert!(reasons.contains(&InclusionReason::Anticipated));
        // The anticipated object carries its current measurement.
        assert_eq!(cpm.objects[0].position.x, 3.5);
    }

    #[test]
    fn lookahead_anticipates_speed_crossing() {
        // ΔS = 0.45, A = 1.0, T = 0.1 → NextΔS = 0.55 > 0.5.
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::LookAhead);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 20.0, 1.0, t(0.0))], t(0.0))
            .unwrap();
        let dets = [obj(1, 1.0, 20.45, 1.0, t(0.1)), obj(9, 0.0, 0.0, 0.0, t(0.1))];
        let (cpm, reasons) = g.on_check(VehicleId(0), &dets, t(0.1)).unwrap();
        assert!(cpm.objects.iter().any(|o| o.id == VehicleId(1)));
        assert_eq!(reasons[0], InclusionReason::Anticipated);
    }

    #[test]
    fn lookahead_leaves_fresh_object_alone() {
        // Stationary object, ΔT = 0.5 → NextΔT = 0.6 ≤ 1: not anticipated.
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::LookAhead);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 0.0, 0.0, t(0.0))], t(0.0))
            .unwrap();
        let dets = [obj(1, 0.0, 0.0, 0.0, t(0.5)), obj(9, 0.0, 0.0, 0.0, t(0.5))];
        let (cpm, _) = g.on_check(VehicleId(0), &dets, t(0.5)).unwrap();
        let ids: Vec<u32> = cpm.objects.iter().map(|o| o.id.0).collect();
        assert_eq!(ids, vec![9]);
    }

    #[test]
    fn lookahead_not_run_without_etsi_trigger() {
        // Object predicted to cross, but nothing triggered: no CPM.
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::LookAhead);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 19.44, 0.0, t(0.0))], t(0.0))
            .unwrap();
        assert!(g
            .on_check(VehicleId(0), &[obj(1, 3.5, 19.44, 0.0, t(0.1))], t(0.1))
            .is_none());
    }

    #[test]
    fn size_model_matches_worked_examples() {
        let sizes = CpmSizeModel::from_config(&cpm_cfg());
        assert_eq!(sizes.size_bytes(6, false), 411);
        assert_eq!(sizes.size_bytes(0, true), 215);
        assert_eq!(sizes.size_bytes(2, false), 271);
    }

    #[test]
    fn fallback_emits_empty_cpm_every_second() {
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::Etsi);
        let mut times = Vec::new();
        for k in 0..=25 {
            let now = t(k as f64 * 0.1);
            if let Some((cpm, _)) = g.on_check(VehicleId(0), &[], now) {
                assert!(cpm.objects.is_empty());
                times.push(k);
            }
        }
        // First check primes the timer; fallbacks land 1 s apart.
        assert_eq!(times, vec![10, 20]);
    }

    #[test]
    fn fallback_not_due_at_900ms() {
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::Etsi);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 0.0, 0.0, t(0.0))], t(0.0))
            .unwrap();
        assert!(g.on_check(VehicleId(0), &[], t(0.9)).is_none());
        let (cpm, _) = g.on_check(VehicleId(0), &[], t(1.0)).unwrap();
        assert!(cpm.objects.is_empty());
        // A full second has passed since the first SIC, so it rides along.
        assert!(cpm.sic_present);
    }

    #[test]
    fn sic_rides_once_per_second() {
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::Etsi);
        let v = 25.0; // fast enough to trigger every check
        let mut sic_times = Vec::new();
        for k in 0..=12 {
            let now = t(k as f64 * 0.1);
            let x = v * now.as_secs_f64();
            if let Some((cpm, _)) = g.on_check(VehicleId(0), &[obj(1, x, v, 0.0, now)], now) {
                if cpm.sic_present {
                    sic_times.push(k);
                }
            }
        }
        assert_eq!(sic_times, vec![0, 10]);
    }

    #[test]
    fn overflow_keeps_stalest_objects() {
        let mut cfg = cpm_cfg();
        cfg.max_objects_per_cpm = 2;
        let mut g = CpmGenerator::new(&cfg, Policy::Etsi);
        // Three objects at t=0; only two fit. All new → stalest ties broken
        // by id, so 1 and 2 go out and 3 waits.
        let dets: Vec<_> = (1..=3).map(|i| obj(i, 0.0, 0.0, 0.0, t(0.0))).collect();
        let (cpm, _) = g.on_check(VehicleId(0), &dets, t(0.0)).unwrap();
        let ids: Vec<u32> = cpm.objects.iter().map(|o| o.id.0).collect();
        assert_eq!(ids, vec![1, 2]);
        // Next check: 3 is still never-included (stalest), goes out first.
        let dets: Vec<_> = (1..=3).map(|i| obj(i, 5.0, 0.0, 0.0, t(0.1))).collect();
        let (cpm, _) = g.on_check(VehicleId(0), &dets, t(0.1)).unwrap();
        let ids: Vec<u32> = cpm.objects.iter().map(|o| o.id.0).collect();
        assert_eq!(ids, vec![1, 3]);
    }

    #[test]
    fn reentry_after_grace_counts_as_new() {
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::Etsi);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 0.0, 0.0, t(0.0))], t(0.0))
            .unwrap();
        // Object vanishes for 1.2 s (> 1 s grace), returns at the same spot.
        for k in 1..=12 {
            g.on_check(VehicleId(0), &[], t(k as f64 * 0.1));
        }
        let (_, reasons) = g
            .on_check(VehicleId(0), &[obj(1, 0.0, 0.0, 0.0, t(1.3))], t(1.3))
            .unwrap();
        assert_eq!(reasons, vec![InclusionReason::New]);
    }

    #[test]
    fn short_absence_keeps_record() {
        let mut g = CpmGenerator::new(&cpm_cfg(), Policy::Etsi);
        g.on_check(VehicleId(0), &[obj(1, 0.0, 0.0, 0.0, t(0.0))], t(0.0))
            .unwrap();
        // Gone for 0.5 s, returns unmoved: record survives, no trigger.
        for k in 1..=5 {
            g.on_check(VehicleId(0), &[], t(k as f64 * 0.1));
        }
        assert!(g
            .on_check(VehicleId(0), &[obj(1, 0.0, 0.0, 0.0, t(0.6))], t(0.6))
            .is_none());
    }

    #[test]
    fn zero_horizon_lookahead_matches_etsi_schedule() {
        let mut cfg = cpm_cfg();
        cfg.lookahead_horizon_s = 0.0;
        let mut etsi = CpmGenerator::new(&cfg, Policy::Etsi);
        let mut la = CpmGenerator::new(&cfg, Policy::LookAhead);
        for k in 0..60 {
            let now = t(k as f64 * 0.1);
            let dets: Vec<_> = (1..4)
                .map(|i| {
                    let v = 5.0 + i as f64;
                    obj(i, v * now.as_secs_f64(), v, 0.1, now)
                })
                .collect();
            let a = etsi.on_check(VehicleId(0), &dets, now);
            let b = la.on_check(VehicleId(0), &dets, now);
            match (&a, &b) {
                (None, None) => {}
                (Some((ca, _)), Some((cb, _))) => {
                    let ia: Vec<_> = ca.objects.iter().map(|o| o.id).collect();
                    let ib: Vec<_> = cb.objects.iter().map(|o| o.id).collect();
                    assert_eq!(ia, ib);
                    assert_eq!(ca.size_bytes, cb.size_bytes);
                }
                _ => panic!("schedules diverged at check {k}"),
            }
        }
    }
}
