//! Straight multi-lane highway with wrap-around.
//!
//! Lanes are split between the two travel directions and assigned evenly
//! spaced nominal speeds across the configured range; each vehicle jitters
//! its nominal by up to 5%. Motion is constant-speed cruise with a
//! safe-gap governor: close up on a slower leader and you decelerate to
//! its speed until the gap opens again.

use rand::Rng;

use crate::config::HighwayConfig;
use crate::error::{Result, SimError};
use crate::model::{SimTime, Vec2, VehicleId, VehicleState};
use crate::rng::{SimRng, Stream};

use super::{Mobility, MAX_ACCEL, MAX_DECEL, MOBILITY_STEP};

const LANE_WIDTH_M: f64 = 3.5;
/// Time-gap the governor defends, seconds.
const SAFE_GAP_S: f64 = 1.5;
/// Hard floor on bumper-to-bumper spacing, meters.
const MIN_GAP_M: f64 = 8.0;

struct Car {
    lane: u32,
    /// +1 or -1 along x.
    direction: f64,
    nominal_speed: f64,
}

pub struct HighwayMobility {
    length: f64,
    cars: Vec<Car>,
    states: Vec<VehicleState>,
    alive: Vec<bool>,
    /// Position/speed scratch for the synchronous update.
    next: Vec<(f64, f64)>,
    now: SimTime,
    /// Roster indices per lane, kept sorted by position each step.
    lane_order: Vec<Vec<usize>>,
}

impl HighwayMobility {
    pub fn new(cfg: &HighwayConfig, rng: &SimRng) -> Result<Self> {
        let n = (cfg.density_veh_per_km * cfg.length_m / 1000.0).round() as usize;
        let lanes = cfg.lanes as usize;
        let mut per_lane = vec![0usize; lanes];
        for i in 0..n {
            per_lane[i % lanes] += 1;
        }
        for (lane, &count) in per_lane.iter().enumerate() {
            if count > 1 && cfg.length_m / (count as f64) < 2.0 * cfg.vehicle_length_m {
                return Err(SimError::config(format!(
                    "highway density leaves lane {lane} spacing under twice the vehicle length"
                )));
            }
        }

        // Half the lanes head +x, the rest -x; nominal speeds are evenly
        // spaced across the configured range within each direction group.
        let forward_lanes = lanes.div_ceil(2);
        let group_speed = |index: usize, group: usize| {
            if group <= 1 {
                (cfg.speed_min_mps + cfg.speed_max_mps) / 2.0
            } else {
                cfg.speed_min_mps
                    + (cfg.speed_max_mps - cfg.speed_min_mps) * index as f64 / (group - 1) as f64
            }
        };
        let lane_speed: Vec<f64> = (0..lanes)
            .map(|lane| {
                if lane < forward_lanes {
                    group_speed(lane, forward_lanes)
                } else {
                    group_speed(lane - forward_lanes, lanes - forward_lanes)
                }
            })
            .collect();

        let mut cars = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        let mut id = 0u32;
        for (lane, &count) in per_lane.iter().enumerate() {
            let direction = if lane < forward_lanes { 1.0 } else { -1.0 };
            let y = LANE_WIDTH_M * (0.5 + lane as f64);
            let spacing = cfg.length_m / count.max(1) as f64;
            for k in 0..count {
                let mut veh_rng = rng.per_entity(Stream::Mobility, id as u64);
                let jitter = 1.0 + veh_rng.gen_range(-0.05..=0.05);
                let nominal = (lane_speed[lane] * jitter)
                    .clamp(cfg.speed_min_mps, cfg.speed_max_mps);
                let x = k as f64 * spacing;
                cars.push(Car {
                    lane: lane as u32,
                    direction,
                    nominal_speed: nominal,
                });
                let heading = if direction > 0.0 { 0.0 } else { std::f64::consts::PI };
                states.push(VehicleState::new(
                    VehicleId(id),
                    Vec2::new(x, y),
                    nominal,
                    heading,
                    lane as u32,
                ));
                id += 1;
            }
        }

        let mut lane_order = vec![Vec::new(); lanes];
        for (idx, car) in cars.iter().enumerate() {
            lane_order[car.lane as usize].push(idx);
        }

        let alive = vec![true; n];
        let next = vec![(0.0, 0.0); n];
        Ok(HighwayMobility {
            length: cfg.length_m,
            cars,
            states,
            alive,
            next,
            now: SimTime::ZERO,
            lane_order,
        })
    }

    fn step(&mut self, dt: f64) {
        // Synchronous update: targets computed from the previous snapshot.
        for lane in &mut self.lane_order {
            let states = &self.states;
            lane.sort_by(|&a, &b| {
                states[a]
                    .position
                    .x
                    .partial_cmp(&states[b].position.x)
                    .unwrap()
                    .then(a.cmp(&b))
            });
        }
        for lane in &self.lane_order {
            let m = lane.len();
            for (pos_in_lane, &idx) in lane.iter().enumerate() {
                let car = &self.cars[idx];
                let state = &self.states[idx];
                // Leader is the next vehicle along the travel direction,
                // wrapping around the ring.
                let gap = if m <= 1 {
                    f64::INFINITY
                } else {
                    let leader_idx = if car.direction > 0.0 {
                        lane[(pos_in_lane + 1) % m]
                    } else {
                        lane[(pos_in_lane + m - 1) % m]
                    };
                    let raw =
                        (self.states[leader_idx].position.x - state.position.x) * car.direction;
                    raw.rem_euclid(self.length)
                };
                let leader_speed = if m <= 1 {
                    f64::INFINITY
                } else {
                    let leader_idx = if car.direction > 0.0 {
                        lane[(pos_in_lane + 1) % m]
                    } else {
                        lane[(pos_in_lane + m - 1) % m]
                    };
                    self.states[leader_idx].speed
                };
                let target = if gap < MIN_GAP_M {
                    leader_speed.min(car.nominal_speed) * 0.8
                } else if gap < state.speed * SAFE_GAP_S {
                    leader_speed.min(car.nominal_speed)
                } else {
                    car.nominal_speed
                };
                let accel = ((target - state.speed) / dt).clamp(-MAX_DECEL, MAX_ACCEL);
                let speed = state.speed + accel * dt;
                let x = (state.position.x + car.direction * speed * dt).rem_euclid(self.length);
                self.next[idx] = (x, speed);
                // Rate of change of speed magnitude, the A of Eq. (2).
                self.states[idx].acceleration = accel;
            }
        }
        for (idx, &(x, speed)) in self.next.iter().enumerate() {
            self.states[idx].position.x = x;
            self.states[idx].speed = speed;
        }
    }
}

impl Mobility for HighwayMobility {
    fn advance_to(&mut self, now: SimTime) {
        let step_ns = MOBILITY_STEP.as_nanos();
        while self.now + MOBILITY_STEP <= now {
            self.now += MOBILITY_STEP;
            self.step(step_ns as f64 / 1e9);
        }
    }

    fn states(&self) -> &[VehicleState] {
        &self.states
    }

    fn alive(&self) -> &[bool] {
        &self.alive
    }
}
