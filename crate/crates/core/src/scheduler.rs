//! Discrete-event loop tying mobility, sensing, CPM generation, the MAC,
//! and the channel together.
//!
//! Events at the same instant run in a fixed class order: frame ends
//! first (the channel clears and receptions land), then MAC timers, then
//! the mobility step, generation checks, and last the metrics tick, which
//! samples the fully settled state. Ties inside a class break on the
//! vehicle or sequence number, so a run is a pure function of the
//! configuration.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::mac::{MacEntity, TimerOutcome};
use crate::channel::Channel;
use crate::config::{Policy, ScenarioConfig};
use crate::cpm::CpmGenerator;
use crate::error::Result;
use crate::geometry::{Layout, Rect};
use crate::metrics::{MetricsStore, RunMetrics};
use crate::mobility::{self, Mobility, MOBILITY_STEP};
use crate::model::{SimTime, VehicleId, VehicleState};
use crate::rng::{SimRng, Stream};
use crate::sensing;

const CLASS_FRAME_END: u8 = 0;
const CLASS_MAC_TIMER: u8 = 1;
const CLASS_MOBILITY: u8 = 2;
const CLASS_GEN_CHECK: u8 = 3;
const CLASS_METRICS: u8 = 4;

#[derive(Debug, Clone, Copy)]
enum EventKind {
    FrameEnd { seq: u64 },
    MacTimer { vehicle: usize, generation: u64 },
    MobilityStep,
    GenCheck { vehicle: usize },
    MetricsTick,
}

type EventKey = (SimTime, u8, u64, u64);

pub struct Simulation {
    cfg: ScenarioConfig,
    layout: Layout,
    region: Rect,
    mobility: Box<dyn Mobility>,
    channel: Channel,
    macs: Vec<MacEntity>,
    generators: Vec<CpmGenerator>,
    sense_rngs: Vec<ChaCha8Rng>,
    rng: SimRng,
    metrics: MetricsStore,
    queue: BTreeMap<EventKey, EventKind>,
    event_counter: u64,
    now: SimTime,
    end: SimTime,
    check_period: SimTime,

    /// States of live vehicles only, refreshed after each mobility step;
    /// what the sensors scan.
    alive_states: Vec<VehicleState>,
    /// Carrier-sense state per vehicle as last reported to its MAC.
    was_busy: Vec<bool>,
    /// Channel-load state per vehicle (own transmissions included).
    cbr_busy_since: Vec<Option<SimTime>>,
    cbr_busy_ns: Vec<u64>,
    /// Whether the sender stood inside the stats region at frame start.
    frame_in_region: BTreeMap<u64, bool>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, policy: Policy) -> Result<Self> {
        let rng = SimRng::new(cfg.seed);
        let (mut mobility, layout) = mobility::build(&cfg, &rng)?;
        mobility.advance_to(SimTime::ZERO);
        let n = mobility.states().len();
        let region = match &layout {
            // Trace bounds are only known after loading.
            Layout::Open { bounds } => cfg.metrics.region.unwrap_or(*bounds),
            _ => cfg.stats_region(),
        };

        let channel = Channel::new(&cfg);
        let macs = (0..n)
            .map(|v| MacEntity::new(channel.mac_cfg, rng.per_entity(Stream::Backoff, v as u64)))
            .collect();
        let generators = (0..n).map(|_| CpmGenerator::new(&cfg.cpm, policy)).collect();
        let sense_rngs = (0..n)
            .map(|v| rng.per_entity(Stream::Sensing, v as u64))
            .collect();

        let check_period = SimTime::from_secs_f64(cfg.cpm.t_gen_cpm_s);
        let end = SimTime::from_secs_f64(cfg.duration_s);
        let metrics = MetricsStore::new(&cfg, policy, n);

        let mut sim = Simulation {
            cfg,
            layout,
            region,
            mobility,
            channel,
            macs,
            generators,
            sense_rngs,
            rng,
            metrics,
            queue: BTreeMap::new(),
            event_counter: 0,
            now: SimTime::ZERO,
            end,
            check_period,
            alive_states: Vec::new(),
            was_busy: vec![false; n],
            cbr_busy_since: vec![None; n],
            cbr_busy_ns: vec![0; n],
            frame_in_region: BTreeMap::new(),
        };
        sim.refresh_alive_states();

        // Generation checks start at a per-vehicle phase inside the first
        // check period, decoupling the fleet's CPM clocks.
        for v in 0..n {
            let mut phase_rng = sim.rng.per_entity(Stream::Phase, v as u64);
            let phase =
                SimTime((phase_rng.gen::<f64>() * check_period.as_nanos() as f64) as u64);
            sim.schedule(phase, CLASS_GEN_CHECK, v as u64, EventKind::GenCheck { vehicle: v });
        }
        sim.schedule(MOBILITY_STEP, CLASS_MOBILITY, 0, EventKind::MobilityStep);
        sim.schedule(MOBILITY_STEP, CLASS_METRICS, 0, EventKind::MetricsTick);
        Ok(sim)
    }

    fn schedule(&mut self, at: SimTime, class: u8, key: u64, kind: EventKind) {
        self.event_counter += 1;
        self.queue.insert((at, class, key, self.event_counter), kind);
    }

    fn refresh_alive_states(&mut self) {
        let states = self.mobility.states();
        let alive = self.mobility.alive();
        self.alive_states.clear();
        self.alive_states
            .extend(states.iter().zip(alive).filter(|(_, &a)| a).map(|(s, _)| *s));
    }

    fn in_region(&self, v: usize) -> bool {
        self.region.contains(self.mobility.states()[v].position)
    }

    /// Propagate carrier-sense and channel-load transitions after any
    /// frame started or ended.
    fn refresh_busy(&mut self, now: SimTime) {
        let n = self.was_busy.len();
        for v in 0..n {
            if !self.mobility.alive()[v] {
                continue;
            }
            let busy = self.channel.is_busy_for(v);
            if busy != self.was_busy[v] {
                self.was_busy[v] = busy;
                if busy {
                    self.macs[v].on_busy(now);
                } else if let Some((at, generation)) = self.macs[v].on_idle(now) {
                    self.schedule(
                        at,
                        CLASS_MAC_TIMER,
                        v as u64,
                        EventKind::MacTimer { vehicle: v, generation },
                    );
                }
            }
            let busy_cbr = self.channel.is_busy_for_cbr(v);
            match (self.cbr_busy_since[v], busy_cbr) {
                (None, true) => self.cbr_busy_since[v] = Some(now),
                (Some(since), false) => {
                    self.cbr_busy_ns[v] += now.since(since);
                    self.cbr_busy_since[v] = None;
                }
                _ => {}
            }
        }
    }

    fn on_gen_check(&mut self, v: usize, now: SimTime) {
        let next = now + self.check_period;
        self.schedule(next, CLASS_GEN_CHECK, v as u64, EventKind::GenCheck { vehicle: v });
        if !self.mobility.alive()[v] {
            return;
        }
        let observer = self.mobility.states()[v];
        let detections = sensing::detect(
            &observer,
            &self.alive_states,
            &self.layout,
            &self.cfg.sensing,
            now,
            &mut self.sense_rngs[v],
        );
        let in_region = self.region.contains(observer.position);
        if let Some((cpm, _reasons)) = self.generators[v].on_check(VehicleId(v as u32), &detections, now)
        {
            self.metrics.note_cpm(&cpm, in_region, now);
            let busy = self.channel.is_busy_for(v);
            if let Some((at, generation)) = self.macs[v].enqueue(cpm, now, busy) {
                self.schedule(
                    at,
                    CLASS_MAC_TIMER,
                    v as u64,
                    EventKind::MacTimer { vehicle: v, generation },
                );
            }
        }
    }

    fn on_mac_timer(&mut self, v: usize, generation: u64, now: SimTime) {
        match self.macs[v].on_timer(generation) {
            TimerOutcome::Stale => {}
            TimerOutcome::Transmit(cpm) => {
                let in_region = self.in_region(v);
                self.metrics.note_frame_sent(in_region, now);
                let bytes = cpm.size_bytes;
                let (seq, end) = self.channel.start_frame(
                    v,
                    cpm,
                    now,
                    self.mobility.states(),
                    self.mobility.alive(),
                    &self.layout,
                    &self.rng,
                );
                self.metrics.note_frame_started(seq, VehicleId(v as u32), now, end, bytes);
                self.frame_in_region.insert(seq, in_region);
                self.schedule(end, CLASS_FRAME_END, seq, EventKind::FrameEnd { seq });
                self.refresh_busy(now);
            }
        }
    }

    fn on_frame_end(&mut self, seq: u64, now: SimTime) {
        let (receptions, cpm, sender) = self.channel.end_frame(seq, self.mobility.alive());
        let sv = sender.index();
        let sender_in_region = self.frame_in_region.remove(&seq).unwrap_or(false);
        let in_region_flags: Vec<bool> = (0..self.was_busy.len())
            .map(|v| self.in_region(v))
            .collect();
        self.metrics.note_frame_receptions(
            seq,
            sender,
            &cpm,
            &receptions,
            sender_in_region,
            self.mobility.states(),
            &in_region_flags,
            now,
        );
        let busy_for_sender = self.channel.is_busy_for(sv);
        if let Some((at, generation)) = self.macs[sv].on_tx_complete(now, busy_for_sender) {
            self.schedule(
                at,
                CLASS_MAC_TIMER,
                sv as u64,
                EventKind::MacTimer { vehicle: sv, generation },
            );
        }
        self.refresh_busy(now);
    }

    fn on_metrics_tick(&mut self, now: SimTime) {
        self.schedule(now + MOBILITY_STEP, CLASS_METRICS, 0, EventKind::MetricsTick);
        let n = self.was_busy.len();
        let alive = self.mobility.alive().to_vec();
        for v in 0..n {
            // Close the vehicle's channel-load window.
            if let Some(since) = self.cbr_busy_since[v] {
                self.cbr_busy_ns[v] += now.since(since);
                self.cbr_busy_since[v] = Some(now);
            }
            let counts = alive[v] && self.in_region(v);
            self.metrics
                .note_cbr_window(self.cbr_busy_ns[v], MOBILITY_STEP, now, counts);
            self.cbr_busy_ns[v] = 0;
        }
        let in_region_flags: Vec<bool> = (0..n).map(|v| self.in_region(v)).collect();
        self.metrics.note_tick(
            self.mobility.states(),
            &alive,
            &in_region_flags,
            &self.layout,
            now,
        );
    }

    /// Run to the configured duration and aggregate the metrics.
    pub fn run(mut self) -> RunMetrics {
        while let Some((&(at, class, key, counter), _)) = self.queue.first_key_value() {
            if at >= self.end {
                break;
            }
            let kind = self.queue.remove(&(at, class, key, counter)).unwrap();
            self.now = at;
            match kind {
                EventKind::FrameEnd { seq } => self.on_frame_end(seq, at),
                EventKind::MacTimer { vehicle, generation } => {
                    self.on_mac_timer(vehicle, generation, at)
                }
                EventKind::MobilityStep => {
                    self.mobility.advance_to(at);
                    self.refresh_alive_states();
                    self.schedule(at + MOBILITY_STEP, CLASS_MOBILITY, 0, EventKind::MobilityStep);
                }
                EventKind::GenCheck { vehicle } => self.on_gen_check(vehicle, at),
                EventKind::MetricsTick => self.on_metrics_tick(at),
            }
        }
        let check_period = self.check_period;
        self.metrics.finalize(check_period)
    }

    pub fn vehicle_count(&self) -> usize {
        self.mobility.states().len()
    }
}

/// Build and run one scenario under the given policy.
pub fn run_scenario(cfg: &ScenarioConfig, policy: Policy) -> Result<RunMetrics> {
    Ok(Simulation::new(cfg.clone(), policy)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioKind;

    fn tiny_highway(n_per_km: f64, length: f64, duration: f64, seed: u64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default_highway();
        if let ScenarioKind::Highway(h) = &mut cfg.kind {
            h.length_m = length;
            h.density_veh_per_km = n_per_km;
        }
        cfg.duration_s = duration;
        cfg.warmup_s = 1.0;
        cfg.seed = seed;
        cfg
    }

    #[test]
    fn isolated_vehicle_sends_one_hertz_exactly() {
        let cfg = tiny_highway(1.0, 1000.0, 11.0, 7);
        let sim = Simulation::new(cfg.clone(), Policy::Etsi).unwrap();
        assert_eq!(sim.vehicle_count(), 1);
        let out = sim.run();
        // Window [1 s, 11 s): ten fallback CPMs, all empty.
        assert_eq!(out.cpm_count, 10);
        assert!((out.cpm_rate_hz - 1.0).abs() < 1e-12);
        assert!((out.mean_objects_per_cpm - 0.0).abs() < 1e-12);
        assert_eq!(out.frames_sent, 10);
        // Nobody within 500 m, so no reception rows at all.
        assert_eq!(out.frames_decoded + out.frames_collided + out.frames_below_sensitivity, 0);
    }

    #[test]
    fn two_close_vehicles_reach_each_other() {
        let cfg = tiny_highway(2.0, 1000.0, 10.0, 3);
        let sim = Simulation::new(cfg.clone(), Policy::Etsi).unwrap();
        assert_eq!(sim.vehicle_count(), 2);
        let out = sim.run();
        assert!(out.frames_sent > 0);
        // 500 m apart on a 1 km ring is 500 m each way; decodes may be
        // sparse, but receptions must at least be evaluated.
        assert!(out.frames_decoded + out.frames_collided + out.frames_below_sensitivity > 0);
        assert!(out.mean_cbr >= 0.0 && out.mean_cbr < 0.05);
    }

    #[test]
    fn dense_highway_etsi_runs_and_loads_channel() {
        let cfg = tiny_highway(40.0, 1000.0, 8.0, 1);
        let out = run_scenario(&cfg, Policy::Etsi).unwrap();
        assert!(out.cpm_rate_hz > 5.0, "rate {}", out.cpm_rate_hz);
        assert!(out.mean_objects_per_cpm > 1.0);
        assert!(out.mean_cbr > 0.001, "cbr {}", out.mean_cbr);
        assert!(out.frames_decoded > 0);
        assert!(out.mean_opr > 0.1, "opr {}", out.mean_opr);
        let pdr = out.pdr_curve(true);
        assert!(!pdr.is_empty());
        // Delivery degrades with distance overall.
        let near = pdr.first().unwrap().1;
        let far = pdr.last().unwrap().1;
        assert!(near > far, "near {near} far {far}");
    }

    #[test]
    fn same_seed_same_metrics() {
        let cfg = tiny_highway(20.0, 1000.0, 6.0, 9);
        let a = run_scenario(&cfg, Policy::LookAhead).unwrap();
        let b = run_scenario(&cfg, Policy::LookAhead).unwrap();
        assert_eq!(a.cpm_count, b.cpm_count);
        assert_eq!(a.frames_decoded, b.frames_decoded);
        assert_eq!(a.mean_cbr.to_bits(), b.mean_cbr.to_bits());
        assert_eq!(a.mean_opr.to_bits(), b.mean_opr.to_bits());
    }

    #[test]
    fn different_seeds_differ() {
        let a = run_scenario(&tiny_highway(20.0, 1000.0, 6.0, 1), Policy::Etsi).unwrap();
        let b = run_scenario(&tiny_highway(20.0, 1000.0, 6.0, 2), Policy::Etsi).unwrap();
        // Same fleet size, different phases and speeds.
        assert_ne!(a.mean_cbr.to_bits(), b.mean_cbr.to_bits());
    }
}
