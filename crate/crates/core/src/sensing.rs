//! Onboard sensor model: which vehicles does an observer currently detect.
//!
//! Detection is range AND line-of-sight; measurements are exact unless the
//! optional Gaussian position noise is enabled. Vehicle-body occlusion is
//! available behind a flag and off by default.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::SensingConfig;
use crate::geometry::Layout;
use crate::model::{SimTime, Vec2, VehicleId, VehicleState};

/// One sensed vehicle as reported by the sensor at a generation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceivedObject {
    pub id: VehicleId,
    pub position: Vec2,
    pub speed: f64,
    pub acceleration: f64,
    pub measured_at: SimTime,
}

/// Effective half-width of a vehicle body for the occlusion option.
const OCCLUSION_RADIUS_M: f64 = 1.0;

/// All objects the observer's 360-degree sensor currently detects, in
/// ascending vehicle-id order.
///
/// `noise_rng` is only consumed when position noise is configured, so runs
/// with the default exact sensor draw nothing from it.
pub fn detect(
    observer: &VehicleState,
    all_vehicles: &[VehicleState],
    layout: &Layout,
    cfg: &SensingConfig,
    now: SimTime,
    noise_rng: &mut ChaCha8Rng,
) -> Vec<PerceivedObject> {
    let mut out = Vec::new();
    let range_sq = cfg.range_m * cfg.range_m;
    for target in all_vehicles {
        if target.id == observer.id {
            continue;
        }
        if observer.position.distance_sq(target.position) > range_sq {
            continue;
        }
        if !layout.line_of_sight(observer.position, target.position) {
            continue;
        }
        if cfg.vehicle_occlusion
            && occluded(observer.position, target.position, target.id, all_vehicles, observer.id)
        {
            continue;
        }
        let mut position = target.position;
        if cfg.noise_sigma_m > 0.0 {
            let normal = Normal::new(0.0, cfg.noise_sigma_m).expect("sigma validated");
            position.x += normal.sample(noise_rng);
            position.y += normal.sample(noise_rng);
        }
        out.push(PerceivedObject {
            id: target.id,
            position,
            speed: target.speed,
            acceleration: target.acceleration,
            measured_at: now,
        });
    }
    out
}

pub fn line_of_sight(a: Vec2, b: Vec2, layout: &Layout) -> bool {
    layout.line_of_sight(a, b)
}

/// True when some third vehicle body sits on the sightline strictly between
/// observer and target.
fn occluded(
    from: Vec2,
    to: Vec2,
    target: VehicleId,
    all_vehicles: &[VehicleState],
    observer: VehicleId,
) -> bool {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        return false;
    }
    all_vehicles.iter().any(|v| {
        if v.id == target || v.id == observer {
            return false;
        }
        let t = ((v.position.x - from.x) * dx + (v.position.y - from.y) * dy) / len_sq;
        if t <= 0.0 || t >= 1.0 {
            return false;
        }
        let px = from.x + t * dx;
        let py = from.y + t * dy;
        let d_sq = (v.position.x - px).powi(2) + (v.position.y - py).powi(2);
        d_sq < OCCLUSION_RADIUS_M * OCCLUSION_RADIUS_M
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridGeometry, Rect};
    use rand::SeedableRng;

    fn cfg() -> SensingConfig {
        SensingConfig {
            range_m: 150.0,
            noise_sigma_m: 0.0,
            vehicle_occlusion: false,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn veh(id: u32, x: f64, y: f64) -> VehicleState {
        VehicleState::new(VehicleId(id), Vec2::new(x, y), 20.0, 0.0, 0)
    }

    #[test]
    fn object_inside_range_detected() {
        let layout = Layout::Highway { length: 1000.0, lanes: 1 };
        let obs = veh(0, 0.0, 0.0);
        let all = vec![obs, veh(1, 149.0, 0.0)];
        let got = detect(&obs, &all, &layout, &cfg(), SimTime::ZERO, &mut rng());
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].id, VehicleId(1));
        assert_eq!(got[0].speed, 20.0);
    }

    #[test]
    fn object_outside_range_not_detected() {
        let layout = Layout::Highway { length: 1000.0, lanes: 1 };
        let obs = veh(0, 0.0, 0.0);
        let all = vec![obs, veh(1, 151.0, 0.0)];
        let got = detect(&obs, &all, &layout, &cfg(), SimTime::ZERO, &mut rng());
        assert!(got.is_empty());
    }

    #[test]
    fn building_blocks_detection() {
        let grid = GridGeometry::new(2, 2, 100.0, 100.0, 10.0);
        let layout = Layout::Grid(grid);
        // Observer on a vertical street, target around the corner on a
        // horizontal street; diagonal clips the block interior.
        let obs = veh(0, 5.0, 60.0);
        let target = veh(1, 60.0, 5.0);
        let all = vec![obs, target];
        let got = detect(&obs, &all, &layout, &cfg(), SimTime::ZERO, &mut rng());
        assert!(got.is_empty());
    }

    #[test]
    fn occlusion_flag_hides_shadowed_vehicle() {
        let layout = Layout::Open { bounds: Rect::new(0.0, 0.0, 400.0, 10.0) };
        let obs = veh(0, 0.0, 0.0);
        let blocker = veh(1, 50.0, 0.0);
        let far = veh(2, 100.0, 0.0);
        let all = vec![obs, blocker, far];
        let mut on = cfg();
        on.vehicle_occlusion = true;
        let got = detect(&obs, &all, &layout, &on, SimTime::ZERO, &mut rng());
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].id, VehicleId(1));
        // Off by default: both detected.
        let got = detect(&obs, &all, &layout, &cfg(), SimTime::ZERO, &mut rng());
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn noise_perturbs_position_only_when_enabled() {
        let layout = Layout::Highway { length: 1000.0, lanes: 1 };
        let obs = veh(0, 0.0, 0.0);
        let all = vec![obs, veh(1, 100.0, 0.0)];
        let exact = detect(&obs, &all, &layout, &cfg(), SimTime::ZERO, &mut rng());
        assert_eq!(exact[0].position, Vec2::new(100.0, 0.0));
        let mut noisy_cfg = cfg();
        noisy_cfg.noise_sigma_m = 1.0;
        let noisy = detect(&obs, &all, &layout, &noisy_cfg, SimTime::ZERO, &mut rng());
        assert_ne!(noisy[0].position, Vec2::new(100.0, 0.0));
        assert!(noisy[0].position.distance(Vec2::new(100.0, 0.0)) < 10.0);
    }
}
