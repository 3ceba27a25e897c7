//! CSMA/CA broadcast MAC, one entity per vehicle.
//!
//! A pending frame waits for the channel to be idle for the arbitration
//! gap. If the channel was busy at any point since the frame was queued,
//! the entity draws a backoff (once per frame) and counts down idle slots,
//! freezing the countdown whenever the channel turns busy. Broadcast mode:
//! no acknowledgments, no retransmissions, frames are only ever deferred.
//!
//! The scheduler owns channel sensing; it calls `on_busy` / `on_idle` on
//! sensed transitions at the entity's position and dispatches the timers
//! this module hands back. Timers carry a generation counter so stale ones
//! are recognized and dropped.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::RadioConfig;
use crate::cpm::Cpm;
use crate::model::SimTime;

#[derive(Debug, Clone, Copy)]
pub struct MacConfig {
    pub aifs: SimTime,
    pub slot: SimTime,
    pub cw: u32,
    pub preamble: SimTime,
    pub datarate_bps: u64,
}

impl MacConfig {
    pub fn from_radio(radio: &RadioConfig) -> Self {
        MacConfig {
            aifs: SimTime::from_micros(radio.aifs_us),
            slot: SimTime::from_micros(radio.slot_us),
            cw: radio.cw,
            preamble: SimTime::from_micros(radio.preamble_us),
            datarate_bps: radio.datarate_bps as u64,
        }
    }

    /// Preamble plus payload serialization, rounded up to the nanosecond.
    pub fn airtime(&self, size_bytes: u32) -> SimTime {
        let bits = size_bytes as u64 * 8;
        let payload_ns = (bits as u128 * 1_000_000_000).div_ceil(self.datarate_bps as u128);
        self.preamble + SimTime(payload_ns as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MacState {
    Idle,
    /// Channel idle since enqueue; transmit when the timer fires.
    InitialAifs,
    /// Channel busy; countdown frozen with this many slots left.
    Deferred { slots_left: u32 },
    /// Channel idle; AIFS ends at `aifs_end`, then slots count down. The
    /// pending timer fires at aifs_end + slots_left x slot.
    BackoffWait { aifs_end: SimTime, slots_left: u32 },
    Transmitting,
}

/// Timer handle: fire time plus the generation it belongs to.
pub type MacTimer = (SimTime, u64);

#[derive(Debug)]
pub enum TimerOutcome {
    /// Superseded by a channel transition; ignore.
    Stale,
    /// Begin transmitting this frame now.
    Transmit(Cpm),
}

#[derive(Debug)]
pub struct MacEntity {
    cfg: MacConfig,
    rng: ChaCha8Rng,
    state: MacState,
    generation: u64,
    queue: VecDeque<Cpm>,
}

impl MacEntity {
    pub fn new(cfg: MacConfig, rng: ChaCha8Rng) -> Self {
        MacEntity {
            cfg,
            rng,
            state: MacState::Idle,
            generation: 0,
            queue: VecDeque::new(),
        }
    }

    pub fn is_transmitting(&self) -> bool {
        self.state == MacState::Transmitting
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Queue a frame. Returns a timer to schedule when the attempt starts
    /// immediately (idle channel, no attempt in flight).
    pub fn enqueue(&mut self, cpm: Cpm, now: SimTime, busy: bool) -> Option<MacTimer> {
        self.queue.push_back(cpm);
        if self.state == MacState::Idle {
            self.begin_attempt(now, busy)
        } else {
            None
        }
    }

    fn begin_attempt(&mut self, now: SimTime, busy: bool) -> Option<MacTimer> {
        debug_assert!(!self.queue.is_empty());
        if busy {
            let slots = self.rng.gen_range(0..=self.cfg.cw);
            self.state = MacState::Deferred { slots_left: slots };
            None
        } else {
            self.state = MacState::InitialAifs;
            self.generation += 1;
            Some((now + self.cfg.aifs, self.generation))
        }
    }

    /// Channel turned busy at this entity's position.
    pub fn on_busy(&mut self, now: SimTime) {
        match self.state {
            MacState::InitialAifs => {
                // First deferral of this frame: draw the backoff.
                let slots = self.rng.gen_range(0..=self.cfg.cw);
                self.state = MacState::Deferred { slots_left: slots };
                self.generation += 1;
            }
            MacState::BackoffWait { aifs_end, slots_left } => {
                let consumed = if now <= aifs_end {
                    0
                } else {
                    ((now.since(aifs_end)) / self.cfg.slot.as_nanos()) as u32
                };
                self.state = MacState::Deferred {
                    slots_left: slots_left.saturating_sub(consumed),
                };
                self.generation += 1;
            }
            _ => {}
        }
    }

    /// Channel turned idle at this entity's position.
    pub fn on_idle(&mut self, now: SimTime) -> Option<MacTimer> {
        if let MacState::Deferred { slots_left } = self.state {
            let aifs_end = now + self.cfg.aifs;
            self.state = MacState::BackoffWait { aifs_end, slots_left };
            self.generation += 1;
            let fire = aifs_end + SimTime(slots_left as u64 * self.cfg.slot.as_nanos());
            Some((fire, self.generation))
        } else {
            None
        }
    }

    /// A previously returned timer fired.
    pub fn on_timer(&mut self, generation: u64) -> TimerOutcome {
        if generation != self.generation {
            return TimerOutcome::Stale;
        }
        match self.state {
            MacState::InitialAifs | MacState::BackoffWait { .. } => {
                let cpm = self.queue.pop_front().expect("attempt implies queued frame");
                self.state = MacState::Transmitting;
                self.generation += 1;
                TimerOutcome::Transmit(cpm)
            }
            _ => TimerOutcome::Stale,
        }
    }

    /// Own transmission finished; start on the next queued frame, if any.
    pub fn on_tx_complete(&mut self, now: SimTime, busy: bool) -> Option<MacTimer> {
        debug_assert_eq!(self.state, MacState::Transmitting);
        self.state = MacState::Idle;
        if self.queue.is_empty() {
            None
        } else {
            self.begin_attempt(now, busy)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VehicleId;
    use rand::SeedableRng;

    fn cfg() -> MacConfig {
        MacConfig {
            aifs: SimTime::from_micros(110),
            slot: SimTime::from_micros(13),
            cw: 15,
            preamble: SimTime::from_micros(40),
            datarate_bps: 6_000_000,
        }
    }

    fn dummy_cpm() -> Cpm {
        Cpm {
            sender: VehicleId(0),
            generated_at: SimTime::ZERO,
            sic_present: false,
            objects: Vec::new(),
            size_bytes: 411,
        }
    }

    fn entity(seed: u64) -> MacEntity {
        MacEntity::new(cfg(), ChaCha8Rng::seed_from_u64(seed))
    }

    fn t(us: u64) -> SimTime {
        SimTime::from_micros(us)
    }

    #[test]
    fn airtime_matches_size_model() {
        // 411 bytes at 6 Mbps = 548 us payload + 40 us preamble.
        assert_eq!(cfg().airtime(411), t(588));
        // 215 bytes = 1720 bits -> 286666.67 us serialization, rounded up.
        assert_eq!(cfg().airtime(215), t(40) + SimTime(286_667));
    }

    #[test]
    fn idle_channel_transmits_after_aifs() {
        let mut mac = entity(0);
        let timer = mac.enqueue(dummy_cpm(), t(1000), false).unwrap();
        assert_eq!(timer.0, t(1110));
        match mac.on_timer(timer.1) {
            TimerOutcome::Transmit(cpm) => assert_eq!(cpm.size_bytes, 411),
            other => panic!("expected transmit, got {other:?}"),
        }
        assert!(mac.is_transmitting());
    }

    #[test]
    fn busy_enqueue_defers_with_backoff() {
        let mut mac = entity(1);
        assert!(mac.enqueue(dummy_cpm(), t(0), true).is_none());
        let (fire, generation) = mac.on_idle(t(500)).unwrap();
        // AIFS plus an integer number of slots in [0, 15].
        let wait = fire.since(t(500));
        let aifs = 110_000;
        assert!(wait >= aifs);
        assert_eq!((wait - aifs) % 13_000, 0);
        assert!((wait - aifs) / 13_000 <= 15);
        assert!(matches!(mac.on_timer(generation), TimerOutcome::Transmit(_)));
    }

    #[test]
    fn busy_during_aifs_invalidates_timer() {
        let mut mac = entity(2);
        let stale = mac.enqueue(dummy_cpm(), t(0), false).unwrap();
        mac.on_busy(t(50));
        assert!(matches!(mac.on_timer(stale.1), TimerOutcome::Stale));
        let (fire, generation) = mac.on_idle(t(700)).unwrap();
        assert!(fire >= t(700 + 110));
        assert!(matches!(mac.on_timer(generation), TimerOutcome::Transmit(_)));
    }

    #[test]
    fn backoff_drawn_once_and_frozen() {
        // Find a seed whose first draw has at least two slots so both the
        // no-consumption and the slot-consumption branches are exercised.
        let (mut mac, k) = (0..100)
            .find_map(|seed| {
                let mut mac = entity(seed);
                mac.enqueue(dummy_cpm(), t(0), true);
                let (fire, _) = mac.on_idle(t(0)).unwrap();
                let k = (fire.since(t(0)) - 110_000) / 13_000;
                (k >= 2).then_some((mac, k))
            })
            .expect("some seed draws >= 2 slots");

        // Busy again during AIFS: nothing consumed, no redraw.
        mac.on_busy(t(60));
        let (fire, _) = mac.on_idle(t(1000)).unwrap();
        assert_eq!(fire.since(t(1000)), 110_000 + k * 13_000);

        // Busy after one full slot beyond AIFS: exactly one slot consumed.
        mac.on_busy(t(1000 + 110 + 13));
        let (fire, generation) = mac.on_idle(t(2000)).unwrap();
        assert_eq!(fire.since(t(2000)), 110_000 + (k - 1) * 13_000);
        assert!(matches!(mac.on_timer(generation), TimerOutcome::Transmit(_)));
    }

    #[test]
    fn queued_frame_starts_after_tx_complete() {
        let mut mac = entity(3);
        let timer = mac.enqueue(dummy_cpm(), t(0), false).unwrap();
        assert!(mac.enqueue(dummy_cpm(), t(20), false).is_none());
        assert!(matches!(mac.on_timer(timer.1), TimerOutcome::Transmit(_)));
        assert_eq!(mac.queue_len(), 1);
        let next = mac.on_tx_complete(t(698), false).unwrap();
        assert_eq!(next.0, t(698 + 110));
        assert!(matches!(mac.on_timer(next.1), TimerOutcome::Transmit(_)));
        assert!(mac.on_tx_complete(t(1400), false).is_none());
    }

    #[test]
    fn stale_generations_ignored() {
        let mut mac = entity(4);
        let first = mac.enqueue(dummy_cpm(), t(0), false).unwrap();
        mac.on_busy(t(10));
        mac.on_idle(t(100));
        // Both the pre-busy timer and a made-up generation are stale.
        assert!(matches!(mac.on_timer(first.1), TimerOutcome::Stale));
        assert!(matches!(mac.on_timer(9999), TimerOutcome::Stale));
    }
}
