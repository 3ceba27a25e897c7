//! Manhattan-grid mobility.
//!
//! Vehicles cruise along the street lattice, slow to the configured turn
//! speed ahead of intersections where they have decided to turn, and pick
//! left/straight/right by the configured weights. Turns pivot where the
//! old and new lane lines cross, so positions stay continuous through the
//! corner. Each street wraps around at its ends, which conserves density
//! and makes straight-only routing stay on its street forever.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::ManhattanConfig;
use crate::error::Result;
use crate::geometry::{Axis, GridGeometry};
use crate::model::{SimTime, Vec2, VehicleId, VehicleState};
use crate::rng::{SimRng, Stream};

use super::{Mobility, MAX_ACCEL, MAX_DECEL, MOBILITY_STEP};

const MIN_GAP_M: f64 = 8.0;
const SAFE_GAP_S: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Straight,
    Left,
    Right,
}

#[derive(Debug)]
struct GridCar {
    street: usize,
    /// +1.0 or -1.0 along the street axis.
    dir: f64,
    lane_k: u32,
    /// Longitudinal coordinate along the street axis, in [0, length).
    s: f64,
    nominal: f64,
    /// Decision for the next armed intersection.
    action: Action,
    /// Travel distance remaining to that intersection's execution point.
    dist_to_trigger: f64,
    /// Street and direction to switch onto when the action is a turn.
    target_street: usize,
    target_dir: f64,
    rng: ChaCha8Rng,
}

pub struct ManhattanMobility {
    grid: GridGeometry,
    lane_width: f64,
    lanes: u32,
    turn_speed: f64,
    p_weights: [f64; 3],
    cars: Vec<GridCar>,
    states: Vec<VehicleState>,
    alive: Vec<bool>,
    now: SimTime,
    /// Scratch: speed after the synchronous governor pass.
    next_speed: Vec<f64>,
    /// Cross streets per axis: (center, street index), ascending center.
    crosses_for_x: Vec<(f64, usize)>,
    crosses_for_y: Vec<(f64, usize)>,
}

/// Lanes serving direction `dir` on any street.
fn lanes_per_dir(lanes: u32, dir: f64) -> u32 {
    if dir > 0.0 {
        lanes.div_ceil(2)
    } else {
        lanes / 2
    }
}

/// Perpendicular offset of lane `k` for travel direction `dir` on a street
/// of the given axis (right-hand traffic).
fn lane_offset(axis: Axis, dir: f64, k: u32, lane_width: f64) -> f64 {
    let magnitude = lane_width * (0.5 + k as f64);
    match axis {
        Axis::X => -dir * magnitude,
        Axis::Y => dir * magnitude,
    }
}

fn heading_of(axis: Axis, dir: f64) -> f64 {
    match (axis, dir > 0.0) {
        (Axis::X, true) => 0.0,
        (Axis::X, false) => std::f64::consts::PI,
        (Axis::Y, true) => std::f64::consts::FRAC_PI_2,
        (Axis::Y, false) => -std::f64::consts::FRAC_PI_2,
    }
}

impl ManhattanMobility {
    pub fn new(cfg: &ManhattanConfig, rng: &SimRng) -> Result<Self> {
        let grid = cfg.grid();
        let mut crosses_for_x: Vec<(f64, usize)> = Vec::new();
        let mut crosses_for_y: Vec<(f64, usize)> = Vec::new();
        for (i, s) in grid.streets.iter().enumerate() {
            match s.axis {
                // A street along X crosses the Y-axis streets and vice versa.
                Axis::Y => crosses_for_x.push((s.center, i)),
                Axis::X => crosses_for_y.push((s.center, i)),
            }
        }
        crosses_for_x.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        crosses_for_y.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let total_length_m: f64 = grid.streets.iter().map(|s| s.length).sum();
        let n = (cfg.density_veh_per_km * total_length_m / 1000.0).round() as usize;

        let mut mobility = ManhattanMobility {
            grid,
            lane_width: cfg.lane_width_m,
            lanes: cfg.lanes,
            turn_speed: cfg.turn_speed_mps,
            p_weights: [cfg.p_left, cfg.p_straight, cfg.p_right],
            cars: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            alive: vec![true; n],
            now: SimTime::ZERO,
            next_speed: vec![0.0; n],
            crosses_for_x,
            crosses_for_y,
        };

        // Spread vehicles evenly along the concatenated street lattice,
        // alternating direction and lane.
        let spacing = total_length_m / n.max(1) as f64;
        let street_spans: Vec<(f64, usize)> = {
            let mut acc = 0.0;
            mobility
                .grid
                .streets
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let start = acc;
                    acc += s.length;
                    (start, i)
                })
                .collect()
        };
        for v in 0..n {
            let offset = (v as f64 + 0.5) * spacing;
            let (street, s_local) = street_spans
                .iter()
                .rev()
                .find(|(start, _)| *start <= offset)
                .map(|(start, i)| (*i, offset - start))
                .unwrap();
            let dir = if v % 2 == 0 { 1.0 } else { -1.0 };
            let lane_k = (v / 2) as u32 % lanes_per_dir(cfg.lanes, dir);
            let mut veh_rng = rng.per_entity(Stream::Mobility, v as u64);
            let nominal = cfg.max_speed_mps * (0.9 + 0.1 * veh_rng.gen::<f64>());
            let mut car = GridCar {
                street,
                dir,
                lane_k,
                s: s_local.rem_euclid(mobility.grid.streets[street].length),
                nominal,
                action: Action::Straight,
                dist_to_trigger: f64::INFINITY,
                target_street: street,
                target_dir: dir,
                rng: veh_rng,
            };
            mobility.plan_next(&mut car);
            // Spawn no faster than the armed plan allows braking for.
            let spawn_speed = if car.action == Action::Straight {
                nominal
            } else {
                let vt = cfg.turn_speed_mps;
                let d = (car.dist_to_trigger - nominal * 0.1).max(0.0);
                nominal.min((vt * vt + 2.0 * MAX_DECEL * d).sqrt())
            };
            let state = VehicleState::new(
                VehicleId(v as u32),
                mobility.position_of(&car),
                spawn_speed,
                heading_of(mobility.grid.streets[street].axis, dir),
                lane_k,
            );
            mobility.cars.push(car);
            mobility.states.push(state);
        }
        Ok(mobility)
    }

    fn crosses(&self, axis: Axis) -> &[(f64, usize)] {
        match axis {
            Axis::X => &self.crosses_for_x,
            Axis::Y => &self.crosses_for_y,
        }
    }

    fn position_of(&self, car: &GridCar) -> Vec2 {
        let street = &self.grid.streets[car.street];
        let off = lane_offset(street.axis, car.dir, car.lane_k, self.lane_width);
        match street.axis {
            Axis::X => Vec2::new(car.s, street.center + off),
            Axis::Y => Vec2::new(street.center + off, car.s),
        }
    }

    fn plan_next(&self, car: &mut GridCar) {
        plan_car(
            &self.grid,
            self.lanes,
            self.lane_width,
            self.p_weights,
            self.crosses(self.grid.streets[car.street].axis),
            car,
        );
    }

    fn step(&mut self, dt: f64) {
        // Same-lane follow-the-leader, synchronous like the highway model.
        let mut groups: std::collections::BTreeMap<(usize, i8, u32), Vec<usize>> =
            std::collections::BTreeMap::new();
        for (idx, car) in self.cars.iter().enumerate() {
            groups
                .entry((car.street, car.dir as i8, car.lane_k))
                .or_default()
                .push(idx);
        }
        let mut leader_info: Vec<Option<(f64, f64)>> = vec![None; self.cars.len()];
        for ((street, dir, _), members) in &groups {
            let length = self.grid.streets[*street].length;
            let m = members.len();
            if m <= 1 {
                continue;
            }
            let mut ordered = members.clone();
            ordered.sort_by(|&a, &b| {
                self.cars[a].s.partial_cmp(&self.cars[b].s).unwrap().then(a.cmp(&b))
            });
            for (pos, &idx) in ordered.iter().enumerate() {
                let leader_idx = if *dir > 0 {
                    ordered[(pos + 1) % m]
                } else {
                    ordered[(pos + m - 1) % m]
                };
                let raw = (self.cars[leader_idx].s - self.cars[idx].s) * *dir as f64;
                let gap = raw.rem_euclid(length);
                leader_info[idx] = Some((gap, self.states[leader_idx].speed));
            }
        }

        for idx in 0..self.cars.len() {
            let car = &self.cars[idx];
            let state = &self.states[idx];
            let mut target = car.nominal;
            if let Some((gap, leader_speed)) = leader_info[idx] {
                if gap < MIN_GAP_M {
                    target = target.min(leader_speed * 0.8);
                } else if gap < state.speed * SAFE_GAP_S {
                    target = target.min(leader_speed);
                }
            }
            if car.action != Action::Straight && state.speed > self.turn_speed {
                let v = state.speed;
                let brake_dist =
                    (v * v - self.turn_speed * self.turn_speed) / (2.0 * MAX_DECEL) + v * dt;
                if car.dist_to_trigger <= brake_dist {
                    target = target.min(self.turn_speed);
                }
            }
            let accel = ((target - state.speed) / dt).clamp(-MAX_DECEL, MAX_ACCEL);
            self.next_speed[idx] = state.speed + accel * dt;
            self.states[idx].acceleration = accel;
        }

        let ManhattanMobility {
            grid,
            lane_width,
            lanes,
            p_weights,
            cars,
            states,
            next_speed,
            crosses_for_x,
            crosses_for_y,
            ..
        } = self;
        for (idx, car) in cars.iter_mut().enumerate() {
            let speed = next_speed[idx];
            let moved = speed * dt;
            car.dist_to_trigger -= moved;

            if car.dist_to_trigger <= 0.0 {
                let overshoot = -car.dist_to_trigger;
                if car.action != Action::Straight {
                    // Pivot at the lane-line corner, keep the overshoot.
                    let old_street = &grid.streets[car.street];
                    let off_old = lane_offset(old_street.axis, car.dir, car.lane_k, *lane_width);
                    let pivot_perp = old_street.center + off_old;
                    let new_dir = car.target_dir;
                    let new_len = grid.streets[car.target_street].length;
                    car.lane_k = car.lane_k.min(lanes_per_dir(*lanes, new_dir) - 1);
                    car.street = car.target_street;
                    car.dir = new_dir;
                    car.s = (pivot_perp + new_dir * overshoot).rem_euclid(new_len);
                } else {
                    let length = grid.streets[car.street].length;
                    car.s = (car.s + car.dir * moved).rem_euclid(length);
                }
                let crosses = match grid.streets[car.street].axis {
                    Axis::X => &crosses_for_x[..],
                    Axis::Y => &crosses_for_y[..],
                };
                plan_car(grid, *lanes, *lane_width, *p_weights, crosses, car);
            } else {
                let length = grid.streets[car.street].length;
                car.s = (car.s + car.dir * moved).rem_euclid(length);
            }

            states[idx].speed = speed;
        }

        for idx in 0..self.cars.len() {
            let car = &self.cars[idx];
            let street = &self.grid.streets[car.street];
            self.states[idx].position = self.position_of(car);
            self.states[idx].heading = heading_of(street.axis, car.dir);
            self.states[idx].lane = car.lane_k;
        }
    }

}

/// Arm the next intersection ahead of `car`: pick the nearest cross center
/// along the travel direction (wrapping around the street end), draw the
/// action, and store the travel distance to its execution point.
fn plan_car(
    grid: &GridGeometry,
    lanes: u32,
    lane_width: f64,
    p_weights: [f64; 3],
    crosses: &[(f64, usize)],
    car: &mut GridCar,
) {
    let street = &grid.streets[car.street];
    let length = street.length;
    // Clearance keeps the intersection just traversed from re-arming; it
    // exceeds any in-intersection offset.
    let clearance = grid.street_width / 2.0;
    let (center_dist, cross_street) = crosses
        .iter()
        .map(|(c, i)| {
            let raw = (c - car.s) * car.dir;
            let ahead = if raw > clearance { raw } else { raw + length };
            (ahead, *i)
        })
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .expect("grid has cross streets");

    let w = p_weights;
    let total = w[0] + w[1] + w[2];
    let draw = car.rng.gen::<f64>() * total;
    let action = if draw < w[0] {
        Action::Left
    } else if draw < w[0] + w[1] {
        Action::Straight
    } else {
        Action::Right
    };

    match action {
        Action::Straight => {
            car.action = Action::Straight;
            car.dist_to_trigger = center_dist;
            car.target_street = car.street;
            car.target_dir = car.dir;
        }
        Action::Left | Action::Right => {
            let target_dir = match (street.axis, action) {
                (Axis::X, Action::Left) => car.dir,
                (Axis::X, Action::Right) => -car.dir,
                (Axis::Y, Action::Left) => -car.dir,
                (Axis::Y, Action::Right) => car.dir,
                _ => unreachable!(),
            };
            let target_axis = match street.axis {
                Axis::X => Axis::Y,
                Axis::Y => Axis::X,
            };
            let lane_new = car.lane_k.min(lanes_per_dir(lanes, target_dir) - 1);
            let off_new = lane_offset(target_axis, target_dir, lane_new, lane_width);
            // The corner sits where the new lane line crosses this street:
            // off_new along the travel axis from the center.
            car.action = action;
            car.dist_to_trigger = center_dist + off_new * car.dir;
            car.target_street = cross_street;
            car.target_dir = target_dir;
        }
    }
    debug_assert!(car.dist_to_trigger > 0.0);
}

impl Mobility for ManhattanMobility {
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
