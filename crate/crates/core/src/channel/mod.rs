//! Broadcast channel: frame records with frozen per-receiver powers,
//! carrier sensing, and SINR reception decisions.
//!
//! When a frame starts, the received power at every vehicle is computed
//! once (path loss by LOS class plus a per-link shadowing draw) and frozen
//! for the frame's airtime; frames are short relative to mobility steps.
//! The sender's own entry holds its transmit power, which makes receivers
//! that transmit during an overlap fail decoding without a special case.
//!
//! Reception is evaluated at frame end: a receiver decodes iff its SINR
//! stays at or above the decode threshold for the whole airtime, with the
//! interference term tracking every overlapping frame, including ones too
//! weak to sense on their own.

pub mod mac;
pub mod pathloss;

use rand_distr::{Distribution, Normal};

use crate::config::ScenarioConfig;
use crate::cpm::Cpm;
use crate::geometry::Layout;
use crate::model::{dbm_to_mw, mw_to_dbm, SimTime, VehicleId, VehicleState};
use crate::rng::{SimRng, Stream};
use mac::MacConfig;
use pathloss::WinnerB1;

/// How long finished frames are retained for interference lookups; far
/// longer than any frame airtime.
const RETENTION: SimTime = SimTime(50_000_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Decoded,
    CollisionLoss,
    BelowSensitivity,
}

/// One reception decision, reported per candidate receiver at frame end.
#[derive(Debug, Clone, Copy)]
pub struct Reception {
    pub receiver: VehicleId,
    pub outcome: Outcome,
    pub rx_power_dbm: f64,
    pub sinr_db: f64,
    pub distance_m: f64,
    pub los: bool,
}

/// A transmitted frame with its frozen propagation snapshot.
#[derive(Debug)]
pub struct FrameRecord {
    pub seq: u64,
    pub sender: VehicleId,
    pub sender_idx: usize,
    pub start: SimTime,
    pub end: SimTime,
    pub cpm: Cpm,
    rx_power_mw: Vec<f64>,
    distance_m: Vec<f64>,
    los: Vec<bool>,
    active: bool,
}

#[derive(Debug)]
pub struct Channel {
    pub mac_cfg: MacConfig,
    model: WinnerB1,
    tx_power_dbm: f64,
    sensing_threshold_mw: f64,
    sensitivity_mw: f64,
    noise_mw: f64,
    decode_snr_lin: f64,
    max_eval_distance_m: f64,
    frames: Vec<FrameRecord>,
    next_seq: u64,
}

impl Channel {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let street_width = match &cfg.kind {
            crate::config::ScenarioKind::Manhattan(m) => m.street_width_m(),
            _ => 0.0,
        };
        Channel {
            mac_cfg: MacConfig::from_radio(&cfg.radio),
            model: WinnerB1::new(&cfg.pathloss, &cfg.radio, street_width),
            tx_power_dbm: cfg.radio.tx_power_dbm,
            sensing_threshold_mw: dbm_to_mw(cfg.radio.sensing_threshold_dbm),
            sensitivity_mw: dbm_to_mw(cfg.radio.sensitivity_dbm),
            noise_mw: dbm_to_mw(cfg.radio.noise_floor_dbm()),
            decode_snr_lin: 10f64.powf(cfg.radio.decode_snr_db / 10.0),
            max_eval_distance_m: cfg.metrics.max_distance_m,
            frames: Vec::new(),
            next_seq: 0,
        }
    }

    pub fn model(&self) -> &WinnerB1 {
        &self.model
    }

    /// Start transmitting a frame now. Freezes distances, LOS flags and
    /// received powers against the current vehicle states and returns the
    /// frame sequence number and its end time.
    pub fn start_frame(
        &mut self,
        sender_idx: usize,
        cpm: Cpm,
        now: SimTime,
        states: &[VehicleState],
        alive: &[bool],
        layout: &Layout,
        rng: &SimRng,
    ) -> (u64, SimTime) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let tx = states[sender_idx].position;
        let n = states.len();
        let mut rx_power_mw = vec![0.0; n];
        let mut distance_m = vec![f64::INFINITY; n];
        let mut los = vec![false; n];
        let mut shadow_rng = rng.per_entity(Stream::Shadowing, seq);
        for i in 0..n {
            if i == sender_idx {
                rx_power_mw[i] = dbm_to_mw(self.tx_power_dbm);
                distance_m[i] = 0.0;
                los[i] = true;
                continue;
            }
            if !alive[i] {
                continue;
            }
            let rx = states[i].position;
            let is_los = layout.line_of_sight(tx, rx);
            let sigma = self.model.shadowing_sigma_db(is_los);
            let shadow_db = Normal::new(0.0, sigma)
                .expect("sigma validated non-negative")
                .sample(&mut shadow_rng);
            let pl_db = self.model.path_loss_db(tx, rx, is_los) + shadow_db;
            rx_power_mw[i] = dbm_to_mw(self.tx_power_dbm - pl_db);
            distance_m[i] = tx.distance(rx);
            los[i] = is_los;
        }
        let airtime = self.mac_cfg.airtime(cpm.size_bytes);
        let end = now + airtime;
        self.frames.push(FrameRecord {
            seq,
            sender: states[sender_idx].id,
            sender_idx,
            start: now,
            end,
            cpm,
            rx_power_mw,
            distance_m,
            los,
            active: true,
        });
        (seq, end)
    }

    /// Aggregate power sensed by vehicle `idx` from other senders' active
    /// frames, in mW.
    pub fn sensed_power_mw(&self, idx: usize) -> f64 {
        self.frames
            .iter()
            .filter(|f| f.active && f.sender_idx != idx)
            .map(|f| f.rx_power_mw[idx])
            .sum()
    }

    /// Carrier-sense verdict at vehicle `idx` (own transmissions excluded).
    pub fn is_busy_for(&self, idx: usize) -> bool {
        self.sensed_power_mw(idx) >= self.sensing_threshold_mw
    }

    /// True when vehicle `idx` itself is currently on air.
    pub fn is_transmitting(&self, idx: usize) -> bool {
        self.frames.iter().any(|f| f.active && f.sender_idx == idx)
    }

    /// Busy verdict for channel-load accounting: own transmissions count.
    pub fn is_busy_for_cbr(&self, idx: usize) -> bool {
        self.is_transmitting(idx) || self.is_busy_for(idx)
    }

    /// Finish frame `seq`: decide reception at every live vehicle within
    /// the evaluation range, deactivate the frame, and drop records too old
    /// to overlap anything current.
    pub fn end_frame(&mut self, seq: u64, alive: &[bool]) -> (Vec<Reception>, Cpm, VehicleId) {
        let f_idx = self
            .frames
            .iter()
            .position(|f| f.seq == seq)
            .expect("ending an unknown frame");
        self.frames[f_idx].active = false;
        let now = self.frames[f_idx].end;

        let mut receptions = Vec::new();
        let frame = &self.frames[f_idx];
        for idx in 0..frame.rx_power_mw.len() {
            if idx == frame.sender_idx || !alive[idx] {
                continue;
            }
            if frame.distance_m[idx] > self.max_eval_distance_m {
                continue;
            }
            let rx_mw = frame.rx_power_mw[idx];
            let rx_dbm = mw_to_dbm(rx_mw);
            let outcome;
            let sinr_db;
            if rx_mw < self.sensitivity_mw {
                outcome = Outcome::BelowSensitivity;
                sinr_db = f64::NEG_INFINITY;
            } else {
                let peak_interference = self.peak_interference_mw(f_idx, idx);
                let sinr = rx_mw / (self.noise_mw + peak_interference);
                sinr_db = 10.0 * sinr.log10();
                outcome = if sinr >= self.decode_snr_lin {
                    Outcome::Decoded
                } else {
                    Outcome::CollisionLoss
                };
            }
            receptions.push(Reception {
                receiver: crate::model::VehicleId(idx as u32),
                outcome,
                rx_power_dbm: rx_dbm,
                sinr_db,
                distance_m: frame.distance_m[idx],
                los: frame.los[idx],
            });
        }

        let sender = frame.sender;
        let cpm = frame.cpm.clone();
        self.frames
            .retain(|f| f.active || f.end + RETENTION > now);
        (receptions, cpm, sender)
    }

    /// Highest aggregate interference power seen at `rx_idx` at any instant
    /// of the frame's airtime. Piecewise-constant sweep over the start/end
    /// edges of overlapping frames.
    fn peak_interference_mw(&self, f_idx: usize, rx_idx: usize) -> f64 {
        let f = &self.frames[f_idx];
        let mut edges: Vec<(SimTime, f64)> = Vec::new();
        let mut base = 0.0;
        for g in &self.frames {
            if g.seq == f.seq {
                continue;
            }
            if g.start >= f.end || g.end <= f.start {
                continue;
            }
            let p = g.rx_power_mw[rx_idx];
            if p <= 0.0 {
                continue;
            }
            if g.start <= f.start {
                base += p;
            } else {
                edges.push((g.start, p));
            }
            if g.end < f.end {
                edges.push((g.end, -p));
            }
        }
        if edges.is_empty() {
            return base;
        }
        edges.sort_by_key(|(t, _)| *t);
        let mut level = base;
        let mut peak = base;
        for (_, delta) in edges {
            level += delta;
            if level > peak {
                peak = level;
            }
        }
        peak
    }

    /// Active frame count, used by scheduler sanity checks.
    pub fn active_frames(&self) -> usize {
        self.frames.iter().filter(|f| f.active).count()
    }
}
