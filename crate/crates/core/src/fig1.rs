//! Scripted single-vehicle scenarios used for the generation-rule
//! regression: an ego vehicle with six neighbors at 70 km/h, either all
//! detected at once (scenario 1) or two new neighbors per check over
//! 300 ms (scenario 2). The CPM schedule of each policy is returned for
//! inspection.

use crate::config::{CpmConfig, Policy, ScenarioConfig};
use crate::cpm::CpmGenerator;
use crate::model::{SimTime, Vec2, VehicleId};
use crate::sensing::PerceivedObject;

/// One emitted CPM in a scripted run.
#[derive(Debug, Clone)]
pub struct ScheduleEntry {
    pub time: SimTime,
    pub objects: Vec<VehicleId>,
    pub size_bytes: u32,
    pub sic_present: bool,
}

const SPEED_MPS: f64 = 70.0 / 3.6;

fn run_script(
    policy: Policy,
    cfg: &CpmConfig,
    duration_s: f64,
    first_seen: &[(VehicleId, f64)],
) -> Vec<ScheduleEntry> {
    let mut gen = CpmGenerator::new(cfg, policy);
    let step = SimTime::from_secs_f64(cfg.t_gen_cpm_s);
    let end = SimTime::from_secs_f64(duration_s);
    let mut schedule = Vec::new();
    let mut now = SimTime::ZERO;
    while now <= end {
        let t = now.as_secs_f64();
        let detections: Vec<PerceivedObject> = first_seen
            .iter()
            .filter(|(_, t0)| t >= *t0)
            .map(|(id, _)| PerceivedObject {
                id: *id,
                position: Vec2::new(id.0 as f64 * 10.0 + SPEED_MPS * t, 0.0),
                speed: SPEED_MPS,
                acceleration: 0.0,
                measured_at: now,
            })
            .collect();
        if let Some((cpm, _)) = gen.on_check(VehicleId(0), &detections, now) {
            schedule.push(ScheduleEntry {
                time: now,
                objects: cpm.objects.iter().map(|o| o.id).collect(),
                size_bytes: cpm.size_bytes,
                sic_present: cpm.sic_present,
            });
        }
        now += step;
    }
    schedule
}

/// Scenario 1: all six neighbors detected in the same check interval.
pub fn scenario1(policy: Policy, duration_s: f64) -> Vec<ScheduleEntry> {
    let cfg = ScenarioConfig::default_highway().cpm;
    let first_seen: Vec<_> = (1..=6).map(|i| (VehicleId(i), 0.0)).collect();
    run_script(policy, &cfg, duration_s, &first_seen)
}

/// Scenario 2: two new neighbors per check over the first 300 ms.
pub fn scenario2(policy: Policy, duration_s: f64) -> Vec<ScheduleEntry> {
    let cfg = ScenarioConfig::default_highway().cpm;
    let first_seen: Vec<_> = (1..=6)
        .map(|i| (VehicleId(i), ((i - 1) / 2) as f64 * 0.1))
        .collect();
    run_script(policy, &cfg, duration_s, &first_seen)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times(schedule: &[ScheduleEntry]) -> Vec<u64> {
        schedule.iter().map(|e| e.time.as_nanos() / 1_000_000).collect()
    }

    fn counts(schedule: &[ScheduleEntry]) -> Vec<usize> {
        schedule.iter().map(|e| e.objects.len()).collect()
    }

    #[test]
    fn scenario1_etsi_six_objects_every_300ms() {
        let s = scenario1(Policy::Etsi, 1.5);
        assert_eq!(times(&s), vec![0, 300, 600, 900, 1200, 1500]);
        assert!(counts(&s).iter().all(|&c| c == 6));
    }

    #[test]
    fn scenario2_etsi_two_objects_every_100ms() {
        let s = scenario2(Policy::Etsi, 1.0);
        let expect: Vec<u64> = (0..=10).map(|k| k * 100).collect();
        assert_eq!(times(&s), expect);
        assert!(counts(&s).iter().all(|&c| c == 2));
    }

    #[test]
    fn scenario2_lookahead_consolidates() {
        let s = scenario2(Policy::LookAhead, 1.6);
        assert_eq!(times(&s), vec![0, 100, 200, 400, 700, 1000, 1300, 1600]);
        assert_eq!(counts(&s), vec![2, 2, 4, 6, 6, 6, 6, 6]);
    }

    #[test]
    fn scenario1_lookahead_equals_etsi() {
        // All six move in lockstep, so anticipation changes nothing.
        let e = scenario1(Policy::Etsi, 1.5);
        let l = scenario1(Policy::LookAhead, 1.5);
        assert_eq!(times(&e), times(&l));
        assert_eq!(counts(&e), counts(&l));
    }
}
