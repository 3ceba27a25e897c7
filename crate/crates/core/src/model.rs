//! Shared domain types: simulation time, vehicle identities and kinematic state.
//!
//! All quantities are SI internally (meters, meters per second, seconds,
//! milliwatts for power arithmetic). Unit conversions happen exactly once,
//! at the configuration boundary.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Dense vehicle index, stable for the lifetime of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl VehicleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Simulation time as integer nanoseconds since run start.
///
/// Integer time keeps the event queue total order exact: generation checks
/// land on their 100 ms grid bit-for-bit, and MAC timing (microsecond scale)
/// never drifts against it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> Self {
        debug_assert!(secs >= 0.0 && secs.is_finite());
        SimTime((secs * NANOS_PER_SEC as f64).round() as u64)
    }

    pub fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    /// Saturating difference, as a duration in nanoseconds.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// Simulation clock, advanced only by the event scheduler.
#[derive(Debug, Default)]
pub struct SimClock {
    now: SimTime,
}

impl SimClock {
    pub fn new() -> Self {
        SimClock { now: SimTime::ZERO }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Advance to `t`. Panics if time would run backwards; the event queue
    /// is expected to deliver events in nondecreasing timestamp order.
    pub fn advance(&mut self, t: SimTime) {
        assert!(
            t >= self.now,
            "clock must be monotonic: now={} requested={}",
            self.now,
            t
        );
        self.now = t;
    }
}

/// 2-D point / vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn distance(self, other: Vec2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn distance_sq(self, other: Vec2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Kinematic state of one vehicle at an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub position: Vec2,
    /// Scalar speed along the heading, m/s. Never negative.
    pub speed: f64,
    /// Scalar acceleration along the heading, m/s².
    pub acceleration: f64,
    /// Heading in radians, measured from +x counter-clockwise.
    pub heading: f64,
    /// Lane index within the vehicle's current road.
    pub lane: u32,
}

impl VehicleState {
    pub fn new(id: VehicleId, position: Vec2, speed: f64, heading: f64, lane: u32) -> Self {
        debug_assert!(speed >= 0.0);
        VehicleState {
            id,
            position,
            speed,
            acceleration: 0.0,
            heading,
            lane,
        }
    }
}

/// Convert km/h to m/s. Applied once when a configuration is loaded.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Convert dBm to linear milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Convert linear milliwatts to dBm.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}
