//! Shared scenario builders for the benchmarks.

use cpsim_core::sensing::PerceivedObject;
use cpsim_core::{ScenarioConfig, SimTime, Vec2, VehicleId};

/// A ring of `n` objects around the origin, all doing 20 m/s.
pub fn detection_ring(n: usize, now: SimTime) -> Vec<PerceivedObject> {
    (0..n)
        .map(|i| {
            let angle = i as f64 / n as f64 * std::f64::consts::TAU;
            PerceivedObject {
                id: VehicleId(i as u32 + 1),
                position: Vec2::new(80.0 * angle.cos(), 80.0 * angle.sin()),
                speed: 20.0,
                acceleration: 0.0,
                measured_at: now,
            }
        })
        .collect()
}

/// A short, light highway run: 1 km at 20 veh/km for 10 s.
pub fn short_highway() -> ScenarioConfig {
    let text = "[scenario]\nkind = \"highway\"\nduration_s = 10.0\nwarmup_s = 1.0\nseed = 1\n\n\
                [highway]\nlength_m = 1000.0\ndensity_veh_per_km = 20.0\n";
    ScenarioConfig::from_toml_str(text).expect("benchmark config parses")
}
