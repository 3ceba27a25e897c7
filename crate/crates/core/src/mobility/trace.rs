//! Trajectory replay from a whitespace-separated text trace.
//!
//! Line format: `time_s vehicle_id x_m y_m [speed_mps] [heading_rad]`.
//! Lines starting with `#` and a leading header row are skipped. Vehicle
//! ids are arbitrary tokens, mapped to dense indices in order of first
//! appearance. Positions are interpolated linearly between samples; speed
//! follows the speed column when present (linear, so acceleration is the
//! segment slope) and otherwise the segment's average speed (constant, so
//! acceleration is zero). A vehicle exists only between its first and
//! last sample.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Result, SimError};
use crate::geometry::Rect;
use crate::model::{SimTime, Vec2, VehicleId, VehicleState};

use super::Mobility;

#[derive(Debug, Clone, Copy)]
struct Sample {
    t: f64,
    pos: Vec2,
    speed: Option<f64>,
    heading: Option<f64>,
}

#[derive(Debug)]
pub struct TraceMobility {
    tracks: Vec<Vec<Sample>>,
    states: Vec<VehicleState>,
    alive: Vec<bool>,
    bounds: Rect,
}

impl TraceMobility {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut index_of: BTreeMap<String, usize> = BTreeMap::new();
        let mut tracks: Vec<Vec<Sample>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0].parse::<f64>().is_err() && tracks.is_empty() {
                continue; // header row
            }
            if !(4..=6).contains(&fields.len()) {
                return Err(SimError::trace(format!(
                    "line {}: expected 4 to 6 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i].parse::<f64>().map_err(|_| {
                    SimError::trace(format!(
                        "line {}: field {} ({:?}) is not a number",
                        lineno + 1,
                        i + 1,
                        fields[i]
                    ))
                })
            };
            let t = num(0)?;
            let id = fields[1].to_string();
            let pos = Vec2::new(num(2)?, num(3)?);
            let speed = if fields.len() >= 5 { Some(num(4)?) } else { None };
            let heading = if fields.len() >= 6 { Some(num(5)?) } else { None };

            let next_index = tracks.len();
            let idx = *index_of.entry(id.clone()).or_insert(next_index);
            if idx == tracks.len() {
                tracks.push(Vec::new());
            }
            let track = &mut tracks[idx];
            if let Some(last) = track.last() {
                if t <= last.t {
                    return Err(SimError::trace(format!(
                        "line {}: vehicle {:?} goes back in time ({} after {})",
                        lineno + 1,
                        id,
                        t,
                        last.t
                    )));
                }
            }
            track.push(Sample {
                t,
                pos,
                speed,
                heading,
            });
        }
        if tracks.is_empty() {
            return Err(SimError::trace("no samples".to_string()));
        }

        let mut x_min = f64::INFINITY;
        let mut y_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for s in tracks.iter().flatten() {
            x_min = x_min.min(s.pos.x);
            y_min = y_min.min(s.pos.y);
            x_max = x_max.max(s.pos.x);
            y_max = y_max.max(s.pos.y);
        }

        let states = tracks
            .iter()
            .enumerate()
            .map(|(v, track)| {
                let first = &track[0];
                VehicleState::new(
                    VehicleId(v as u32),
                    first.pos,
                    first.speed.unwrap_or(0.0),
                    first.heading.unwrap_or(0.0),
                    0,
                )
            })
            .collect();
        let alive = vec![false; tracks.len()];
        Ok(TraceMobility {
            tracks,
            states,
            alive,
            bounds: Rect::new(x_min, y_min, x_max, y_max),
        })
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    fn eval(track: &[Sample], t: f64) -> Option<VehicleState> {
        let first = track.first()?;
        let last = track.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        if track.len() == 1 {
            let s = first;
            let mut state = VehicleState::new(
                VehicleId(0),
                s.pos,
                s.speed.unwrap_or(0.0),
                s.heading.unwrap_or(0.0),
                0,
            );
            state.acceleration = 0.0;
            return Some(state);
        }
        let hi = track.partition_point(|s| s.t <= t).min(track.len() - 1);
        let (a, b) = (&track[hi - 1], &track[hi]);
        let dt = b.t - a.t;
        let frac = ((t - a.t) / dt).clamp(0.0, 1.0);
        let pos = Vec2::new(
            a.pos.x + frac * (b.pos.x - a.pos.x),
            a.pos.y + frac * (b.pos.y - a.pos.y),
        );
        let seg_speed = a.pos.distance(b.pos) / dt;
        let (speed, accel) = match (a.speed, b.speed) {
            (Some(sa), Some(sb)) => (sa + frac * (sb - sa), (sb - sa) / dt),
            (Some(sa), None) => (sa, 0.0),
            (None, Some(sb)) => (sb, 0.0),
            (None, None) => (seg_speed, 0.0),
        };
        let heading = a.heading.unwrap_or_else(|| {
            let dx = b.pos.x - a.pos.x;
            let dy = b.pos.y - a.pos.y;
            if dx == 0.0 && dy == 0.0 {
                0.0
            } else {
                dy.atan2(dx)
            }
        });
        let mut state = VehicleState::new(VehicleId(0), pos, speed, heading, 0);
        state.acceleration = accel;
        Some(state)
    }
}

impl Mobility for TraceMobility {
    fn advance_to(&mut self, now: SimTime) {
        let t = now.as_secs_f64();
        for (v, track) in self.tracks.iter().enumerate() {
            match Self::eval(track, t) {
                Some(mut state) => {
                    state.id = VehicleId(v as u32);
                    self.states[v] = state;
                    self.alive[v] = true;
                }
                None => {
                    self.alive[v] = false;
                }
            }
        }
    }

    fn states(&self) -> &[VehicleState] {
        &self.states
    }

    fn alive(&self) -> &[bool] {
        &self.alive
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_position_and_derives_speed() {
        let mut m = TraceMobility::parse(
            "time_s vehicle_id x_m y_m\n\
             0.0 a 0.0 0.0\n\
             1.0 a 10.0 0.0\n",
        )
        .unwrap();
        m.advance_to(SimTime::from_millis(500));
        assert!(m.alive()[0]);
        let s = &m.states()[0];
        assert!((s.position.x - 5.0).abs() < 1e-9);
        assert!((s.speed - 10.0).abs() < 1e-9);
        assert!((s.heading - 0.0).abs() < 1e-9);
        assert_eq!(s.acceleration, 0.0);
    }

    #[test]
    fn uses_speed_column_when_present() {
        let mut m = TraceMobility::parse("0.0 7 0 0 0.0\n2.0 7 10 0 10.0\n").unwrap();
        m.advance_to(SimTime::from_millis(1000));
        let s = &m.states()[0];
        assert!((s.speed - 5.0).abs() < 1e-9);
        assert!((s.acceleration - 5.0).abs() < 1e-9);
    }

    #[test]
    fn vehicle_absent_outside_sample_span() {
        let mut m = TraceMobility::parse("1.0 a 0 0\n2.0 a 5 0\n0.0 b 1 1\n3.0 b 2 2\n").unwrap();
        m.advance_to(SimTime::from_millis(500));
        assert!(!m.alive()[0], "before first sample");
        assert!(m.alive()[1]);
        m.advance_to(SimTime::from_millis(2500));
        assert!(!m.alive()[0], "after last sample");
        assert!(m.alive()[1]);
    }

    #[test]
    fn first_appearance_order_assigns_ids() {
        let m = TraceMobility::parse("0 zeta 0 0\n0 alpha 5 5\n1 zeta 1 0\n1 alpha 6 5\n").unwrap();
        assert!((m.states()[0].position.x - 0.0).abs() < 1e-9);
        assert!((m.states()[1].position.x - 5.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_time_reversal() {
        let err = TraceMobility::parse("1.0 a 0 0\n0.5 a 1 0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"a\""), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn rejects_empty_trace() {
        assert!(TraceMobility::parse("# nothing here\n").is_err());
    }

    #[test]
    fn bounds_cover_all_samples() {
        let m = TraceMobility::parse("0 a -5 2\n1 a 15 22\n").unwrap();
        let b = m.bounds();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (-5.0, 2.0, 15.0, 22.0));
    }
}
