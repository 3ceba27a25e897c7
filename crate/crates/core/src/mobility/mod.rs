//! Vehicle mobility: synthetic highway and Manhattan-grid models plus
//! trajectory-trace replay, all advanced on a fixed 0.1 s step.

pub mod highway;
pub mod manhattan;
pub mod trace;

use crate::config::{ScenarioConfig, ScenarioKind};
use crate::error::Result;
use crate::geometry::{Layout, Rect};
use crate::model::{SimTime, VehicleState};
use crate::rng::SimRng;

/// State update interval; matches the finest generation-check period.
pub const MOBILITY_STEP: SimTime = SimTime(100_000_000);

/// Comfortable deceleration bound, m/s^2.
pub const MAX_DECEL: f64 = 3.0;
/// Cruise-recovery acceleration bound, m/s^2.
pub const MAX_ACCEL: f64 = 1.5;

pub trait Mobility {
    /// Advance the fleet to `now`. Called on the mobility step grid in
    /// non-decreasing time order; states hold between calls.
    fn advance_to(&mut self, now: SimTime);

    /// Current state of every vehicle in the roster, indexed by vehicle id.
    fn states(&self) -> &[VehicleState];

    /// Which roster slots are currently on the road. Synthetic scenarios
    /// keep everyone alive; trace replay toggles entries.
    fn alive(&self) -> &[bool];
}

/// Build the mobility model named by the configuration.
pub fn build(cfg: &ScenarioConfig, rng: &SimRng) -> Result<(Box<dyn Mobility>, Layout)> {
    match &cfg.kind {
        ScenarioKind::Highway(h) => {
            let model = highway::HighwayMobility::new(h, rng)?;
            let layout = Layout::Highway {
                length: h.length_m,
                lanes: h.lanes,
            };
            Ok((Box::new(model), layout))
        }
        ScenarioKind::Manhattan(m) => {
            let model = manhattan::ManhattanMobility::new(m, rng)?;
            let layout = Layout::Grid(m.grid());
            Ok((Box::new(model), layout))
        }
        ScenarioKind::Trace(t) => {
            let model = trace::TraceMobility::load(std::path::Path::new(&t.path))?;
            let bounds = model.bounds();
            Ok((Box::new(model), Layout::Open { bounds }))
        }
    }
}

/// Count of roster vehicles currently inside `region`.
pub fn population_in(states: &[VehicleState], alive: &[bool], region: &Rect) -> usize {
    states
        .iter()
        .zip(alive)
        .filter(|(s, &a)| a && region.contains(s.position))
        .count()
}
