//! Run metrics: CPM generation statistics, channel load, packet delivery,
//! and perception quality, binned over transmitter-receiver distance.
//!
//! Counters are integers wherever a ratio must come out exact; everything
//! is keyed through `BTreeMap` so two runs with the same seed render
//! byte-identical CSV files.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use crate::channel::{Outcome, Reception};
use crate::config::{Policy, ScenarioConfig};
use crate::cpm::Cpm;
use crate::error::{Result, SimError};
use crate::geometry::Layout;
use crate::model::{SimTime, VehicleId, VehicleState, NANOS_PER_SEC};

/// Distance bins of `width` meters centered on multiples of the width,
/// covering [0, max]. With the 25 m default, bin k spans
/// [25k - 12.5, 25k + 12.5).
#[derive(Debug, Clone, Copy)]
pub struct BinGrid {
    width: f64,
    count: usize,
}

impl BinGrid {
    pub fn new(width_m: f64, max_m: f64) -> Self {
        BinGrid {
            width: width_m,
            count: (max_m / width_m).round() as usize + 1,
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn center(&self, i: usize) -> f64 {
        i as f64 * self.width
    }

    pub fn index(&self, d: f64) -> Option<usize> {
        if !d.is_finite() || d < 0.0 {
            return None;
        }
        let i = (d / self.width + 0.5).floor() as usize;
        (i < self.count).then_some(i)
    }
}

fn relation_name(code: u8) -> &'static str {
    match code {
        0 => "same_street",
        _ => "perpendicular",
    }
}

#[derive(Debug, Clone)]
pub struct PdrRow {
    pub bin_center_m: f64,
    pub los: bool,
    pub attempts: u64,
    pub successes: u64,
    /// Pooled ratio over all links in the bin.
    pub pdr: f64,
    /// Mean over transmitters of each transmitter's own ratio.
    pub pdr_mean_tx: f64,
}

#[derive(Debug, Clone)]
pub struct OprRow {
    pub bin_center_m: f64,
    pub relation: u8,
    pub covered: u64,
    pub total: u64,
    pub opr: f64,
}

#[derive(Debug, Clone)]
pub struct UpdateGapRow {
    pub bin_center_m: f64,
    pub count: u64,
    pub mean_gap_s: f64,
}

/// One transmitted frame, recorded when frame logging is enabled.
#[derive(Debug, Clone)]
pub struct FrameLogRow {
    pub seq: u64,
    pub sender: u32,
    pub start: SimTime,
    pub end: SimTime,
    pub bytes: u32,
}

/// One reception decision, recorded when frame logging is enabled.
#[derive(Debug, Clone)]
pub struct ReceptionLogRow {
    pub seq: u64,
    pub receiver: u32,
    pub outcome: Outcome,
    pub distance_m: f64,
    pub los: bool,
}

/// Aggregated results of one simulation run.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub policy: Policy,
    pub seed: u64,
    pub config_hash: String,
    pub cpm_count: u64,
    pub vehicle_seconds: f64,
    pub cpm_rate_hz: f64,
    pub mean_objects_per_cpm: f64,
    pub mean_cpm_bytes: f64,
    pub objects_hist: Vec<(u32, u64)>,
    pub mean_cbr: f64,
    pub cbr_series: Vec<(f64, f64)>,
    pub frames_sent: u64,
    pub frames_decoded: u64,
    pub frames_collided: u64,
    pub frames_below_sensitivity: u64,
    pub pdr: Vec<PdrRow>,
    pub opr: Vec<OprRow>,
    pub update_gaps: Vec<UpdateGapRow>,
    pub mean_opr: f64,
    pub mean_update_gap_s: f64,
    /// Populated only when `metrics.log_frames` is set.
    pub frame_log: Vec<FrameLogRow>,
    pub reception_log: Vec<ReceptionLogRow>,
}

impl RunMetrics {
    fn comment(&self) -> String {
        format!(
            "# config_hash={} seed={} policy={}",
            self.config_hash, self.seed, self.policy
        )
    }

    /// Overall PDR-vs-distance curve restricted to one LOS class; bins with
    /// no attempts are skipped.
    pub fn pdr_curve(&self, los: bool) -> Vec<(f64, f64)> {
        self.pdr
            .iter()
            .filter(|r| r.los == los && r.attempts > 0)
            .map(|r| (r.bin_center_m, r.pdr))
            .collect()
    }

    /// OPR-vs-distance curve pooled over street relations.
    pub fn opr_curve(&self) -> Vec<(f64, f64)> {
        let mut per_bin: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        for r in &self.opr {
            let e = per_bin.entry(r.bin_center_m.to_bits()).or_insert((0, 0));
            e.0 += r.covered;
            e.1 += r.total;
        }
        per_bin
            .into_iter()
            .filter(|(_, (_, tot))| *tot > 0)
            .map(|(bits, (cov, tot))| (f64::from_bits(bits), cov as f64 / tot as f64))
            .collect()
    }

    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| SimError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let write = |name: &str, body: String| -> Result<()> {
            let path = dir.join(name);
            let mut file = std::fs::File::create(&path).map_err(|source| SimError::Io {
                path: path.display().to_string(),
                source,
            })?;
            file.write_all(body.as_bytes()).map_err(|source| SimError::Io {
                path: path.display().to_string(),
                source,
            })
        };

        let mut summary = String::new();
        summary.push_str(&self.comment());
        summary.push('\n');
        summary.push_str(
            "cpm_rate_hz,mean_objects_per_cpm,mean_cpm_bytes,mean_cbr,mean_opr,\
             mean_update_gap_s,cpm_count,frames_sent,frames_decoded,frames_collided,\
             frames_below_sensitivity,vehicle_seconds\n",
        );
        summary.push_str(&format!(
            "{:.6},{:.6},{:.3},{:.6},{:.6},{:.6},{},{},{},{},{},{:.1}\n",
            self.cpm_rate_hz,
            self.mean_objects_per_cpm,
            self.mean_cpm_bytes,
            self.mean_cbr,
            self.mean_opr,
            self.mean_update_gap_s,
            self.cpm_count,
            self.frames_sent,
            self.frames_decoded,
            self.frames_collided,
            self.frames_below_sensitivity,
            self.vehicle_seconds,
        ));
        write("summary.csv", summary)?;

        let mut pdr = String::new();
        pdr.push_str(&self.comment());
        pdr.push('\n');
        pdr.push_str("bin_center_m,los,attempts,successes,pdr,pdr_mean_tx\n");
        for r in &self.pdr {
            pdr.push_str(&format!(
                "{:.1},{},{},{},{:.6},{:.6}\n",
                r.bin_center_m,
                if r.los { "los" } else { "nlos" },
                r.attempts,
                r.successes,
                r.pdr,
                r.pdr_mean_tx,
            ));
        }
        write("pdr.csv", pdr)?;

        let mut opr = String::new();
        opr.push_str(&self.comment());
        opr.push('\n');
        opr.push_str("bin_center_m,relation,covered,total,opr\n");
        for r in &self.opr {
            opr.push_str(&format!(
                "{:.1},{},{},{},{:.6}\n",
                r.bin_center_m,
                relation_name(r.relation),
                r.covered,
                r.total,
                r.opr,
            ));
        }
        write("opr.csv", opr)?;

        let mut upd = String::new();
        upd.push_str(&self.comment());
        upd.push('\n');
        upd.push_str("bin_center_m,count,mean_gap_s\n");
        for r in &self.update_gaps {
            upd.push_str(&format!(
                "{:.1},{},{:.6}\n",
                r.bin_center_m, r.count, r.mean_gap_s,
            ));
        }
        write("update_gaps.csv", upd)?;

        let mut hist = String::new();
        hist.push_str(&self.comment());
        hist.push('\n');
        hist.push_str("objects,cpm_count\n");
        for (objects, count) in &self.objects_hist {
            hist.push_str(&format!("{objects},{count}\n"));
        }
        write("objects_hist.csv", hist)?;

        let mut cbr = String::new();
        cbr.push_str(&self.comment());
        cbr.push('\n');
        cbr.push_str("window_end_s,mean_cbr\n");
        for (t, value) in &self.cbr_series {
            cbr.push_str(&format!("{t:.1},{value:.6}\n"));
        }
        write("cbr.csv", cbr)?;

        if !self.frame_log.is_empty() {
            let mut frames = String::new();
            frames.push_str(&self.comment());
            frames.push('\n');
            frames.push_str("seq,sender,start_ns,end_ns,bytes\n");
            for f in &self.frame_log {
                frames.push_str(&format!(
                    "{},{},{},{},{}\n",
                    f.seq,
                    f.sender,
                    f.start.as_nanos(),
                    f.end.as_nanos(),
                    f.bytes,
                ));
            }
            write("frames.csv", frames)?;

            let mut rx = String::new();
            rx.push_str(&self.comment());
            rx.push('\n');
            rx.push_str("frame_seq,receiver,outcome,distance_m,los\n");
            for r in &self.reception_log {
                let outcome = match r.outcome {
                    Outcome::Decoded => "decoded",
                    Outcome::CollisionLoss => "collision",
                    Outcome::BelowSensitivity => "below_sensitivity",
                };
                rx.push_str(&format!(
                    "{},{},{},{:.3},{}\n",
                    r.seq,
                    r.receiver,
                    outcome,
                    r.distance_m,
                    if r.los { "los" } else { "nlos" },
                ));
            }
            write("receptions.csv", rx)?;
        }
        Ok(())
    }
}

/// Live accumulator fed by the scheduler during a run.
#[derive(Debug)]
pub struct MetricsStore {
    policy: Policy,
    seed: u64,
    config_hash: String,
    warmup: SimTime,
    bins: BinGrid,
    max_distance_m: f64,
    check_period: SimTime,
    pos_threshold_m: f64,
    update_cap: SimTime,

    cpm_count: u64,
    object_count: u64,
    byte_count: u64,
    objects_hist: BTreeMap<u32, u64>,
    vehicle_ticks: u64,

    cbr_sum: f64,
    cbr_windows: u64,
    cbr_series: BTreeMap<u64, (f64, u32)>,

    frames_sent: u64,
    frames_decoded: u64,
    frames_collided: u64,
    frames_below_sensitivity: u64,
    /// (transmitter, bin, los) -> (successes, attempts).
    pdr_cells: BTreeMap<(u32, usize, bool), (u64, u64)>,
    /// (bin, relation) -> (covered ticks, total ticks).
    opr_cells: BTreeMap<(usize, u8), (u64, u64)>,
    /// bin -> (gap sum ns, gap count), pooled over street relations.
    gap_cells: BTreeMap<usize, (u128, u64)>,

    log_frames: bool,
    frame_log: Vec<FrameLogRow>,
    reception_log: Vec<ReceptionLogRow>,

    /// last_update[perceiver][object]: when the perceiver last got data
    /// about the object, by own sensing or a decoded CPM.
    last_update: Vec<Vec<Option<SimTime>>>,
}

impl MetricsStore {
    pub fn new(cfg: &ScenarioConfig, policy: Policy, n_vehicles: usize) -> Self {
        MetricsStore {
            policy,
            seed: cfg.seed,
            config_hash: cfg.hash(),
            warmup: SimTime::from_secs_f64(cfg.warmup_s),
            bins: BinGrid::new(cfg.metrics.bin_width_m, cfg.metrics.max_distance_m),
            max_distance_m: cfg.metrics.max_distance_m,
            check_period: SimTime::from_secs_f64(cfg.cpm.t_gen_cpm_s),
            pos_threshold_m: cfg.cpm.pos_threshold_m,
            update_cap: SimTime::from_secs_f64(cfg.cpm.time_threshold_s),
            cpm_count: 0,
            object_count: 0,
            byte_count: 0,
            objects_hist: BTreeMap::new(),
            vehicle_ticks: 0,
            cbr_sum: 0.0,
            cbr_windows: 0,
            cbr_series: BTreeMap::new(),
            frames_sent: 0,
            frames_decoded: 0,
            frames_collided: 0,
            frames_below_sensitivity: 0,
            pdr_cells: BTreeMap::new(),
            opr_cells: BTreeMap::new(),
            gap_cells: BTreeMap::new(),
            log_frames: cfg.metrics.log_frames,
            frame_log: Vec::new(),
            reception_log: Vec::new(),
            last_update: vec![vec![None; n_vehicles]; n_vehicles],
        }
    }

    fn counting(&self, now: SimTime) -> bool {
        now >= self.warmup
    }

    /// Freshness requirement for an object moving at `speed`: the time to
    /// accumulate a threshold-sized position change, rounded up to the
    /// check grid and capped at the CPM time threshold.
    pub fn required_interval(&self, speed: f64) -> SimTime {
        if speed <= 0.0 {
            return self.update_cap;
        }
        let ticks = (self.pos_threshold_m / speed / self.check_period.as_secs_f64()).ceil();
        let req = SimTime((ticks as u64).max(1) * self.check_period.as_nanos());
        req.min(self.update_cap)
    }

    pub fn note_cpm(&mut self, cpm: &Cpm, sender_in_region: bool, now: SimTime) {
        if !self.counting(now) || !sender_in_region {
            return;
        }
        self.cpm_count += 1;
        self.object_count += cpm.objects.len() as u64;
        self.byte_count += cpm.size_bytes as u64;
        *self.objects_hist.entry(cpm.objects.len() as u32).or_insert(0) += 1;
    }

    pub fn note_frame_sent(&mut self, sender_in_region: bool, now: SimTime) {
        if self.counting(now) && sender_in_region {
            self.frames_sent += 1;
        }
    }

    /// Record a frame's airtime for the log; not warmup-gated, so a
    /// replay can reconstruct busy intervals across the warmup boundary.
    pub fn note_frame_started(
        &mut self,
        seq: u64,
        sender: VehicleId,
        start: SimTime,
        end: SimTime,
        bytes: u32,
    ) {
        if self.log_frames {
            self.frame_log.push(FrameLogRow { seq, sender: sender.0, start, end, bytes });
        }
    }

    /// Record one finished frame: delivery counters for the transmitter and
    /// awareness updates at every receiver that decoded it.
    #[allow(clippy::too_many_arguments)]
    pub fn note_frame_receptions(
        &mut self,
        seq: u64,
        sender: VehicleId,
        cpm: &Cpm,
        receptions: &[Reception],
        sender_in_region: bool,
        states: &[VehicleState],
        in_region: &[bool],
        now: SimTime,
    ) {
        let counting = self.counting(now);
        for r in receptions {
            if self.log_frames {
                self.reception_log.push(ReceptionLogRow {
                    seq,
                    receiver: r.receiver.0,
                    outcome: r.outcome,
                    distance_m: r.distance_m,
                    los: r.los,
                });
            }
            if counting && sender_in_region {
                match r.outcome {
                    Outcome::Decoded => self.frames_decoded += 1,
                    Outcome::CollisionLoss => self.frames_collided += 1,
                    Outcome::BelowSensitivity => self.frames_below_sensitivity += 1,
                }
                if let Some(bin) = self.bins.index(r.distance_m) {
                    let cell = self
                        .pdr_cells
                        .entry((sender.0, bin, r.los))
                        .or_insert((0, 0));
                    cell.1 += 1;
                    if r.outcome == Outcome::Decoded {
                        cell.0 += 1;
                    }
                }
            }
            if r.outcome != Outcome::Decoded {
                continue;
            }
            // Perception freshness counts only object data delivered over
            // the air: the receiver's own sensor and the sender's ego data
            // are not collective perception.
            let p = r.receiver.index();
            let p_pos = states[p].position;
            let p_counting = counting && in_region[p];
            for obj in &cpm.objects {
                if obj.id.index() == p {
                    continue;
                }
                let d = p_pos.distance(obj.position);
                self.touch(p, obj.id.index(), d, p_counting, now);
            }
        }
    }

    /// Refresh last_update[p][o] and account the gap since the previous
    /// update into the distance bin of the current separation.
    fn touch(&mut self, p: usize, o: usize, distance: f64, counting: bool, now: SimTime) {
        let prev = self.last_update[p][o];
        self.last_update[p][o] = Some(now);
        if !counting || distance > self.max_distance_m {
            return;
        }
        let Some(prev) = prev else { return };
        if prev < self.warmup || now <= prev {
            return;
        }
        if let Some(bin) = self.bins.index(distance) {
            let cell = self.gap_cells.entry(bin).or_insert((0, 0));
            cell.0 += now.since(prev) as u128;
            cell.1 += 1;
        }
    }

    /// Close one CBR window for a vehicle.
    pub fn note_cbr_window(
        &mut self,
        busy_ns: u64,
        window: SimTime,
        window_end: SimTime,
        vehicle_counts: bool,
    ) {
        if window_end < self.warmup + window || !vehicle_counts {
            return;
        }
        let cbr = busy_ns as f64 / window.as_nanos() as f64;
        self.cbr_sum += cbr;
        self.cbr_windows += 1;
        let cell = self.cbr_series.entry(window_end.as_nanos()).or_insert((0.0, 0));
        cell.0 += cbr;
        cell.1 += 1;
    }

    /// Per-tick sampling: region population for the CPM rate denominator
    /// and the object perception ratio over all pairs in range.
    pub fn note_tick(
        &mut self,
        states: &[VehicleState],
        alive: &[bool],
        in_region: &[bool],
        layout: &Layout,
        now: SimTime,
    ) {
        if !self.counting(now) {
            return;
        }
        let n = states.len();
        self.vehicle_ticks += (0..n).filter(|&v| alive[v] && in_region[v]).count() as u64;

        // Street membership per vehicle, for the urban relation split.
        let street_sets: Option<Vec<Vec<usize>>> = match layout {
            Layout::Grid(g) => Some(
                states
                    .iter()
                    .enumerate()
                    .map(|(v, s)| {
                        if alive[v] {
                            g.streets_containing(s.position)
                        } else {
                            Vec::new()
                        }
                    })
                    .collect(),
            ),
            _ => None,
        };

        for p in 0..n {
            if !alive[p] || !in_region[p] {
                continue;
            }
            for o in 0..n {
                if o == p || !alive[o] {
                    continue;
                }
                let d = states[p].position.distance(states[o].position);
                if d > self.max_distance_m {
                    continue;
                }
                let Some(bin) = self.bins.index(d) else { continue };
                let relation = match &street_sets {
                    Some(sets) => {
                        if sets[p].iter().any(|i| sets[o].contains(i)) {
                            0
                        } else {
                            1
                        }
                    }
                    None => 0,
                };
                let req = self.required_interval(states[o].speed);
                let covered = match self.last_update[p][o] {
                    Some(t) => now.since(t) <= req.as_nanos(),
                    None => false,
                };
                let cell = self.opr_cells.entry((bin, relation)).or_insert((0, 0));
                cell.1 += 1;
                if covered {
                    cell.0 += 1;
                }
            }
        }
    }

    pub fn finalize(self, check_period: SimTime) -> RunMetrics {
        let vehicle_seconds = self.vehicle_ticks as f64 * check_period.as_secs_f64();
        let cpm_rate_hz = if vehicle_seconds > 0.0 {
            self.cpm_count as f64 / vehicle_seconds
        } else {
            0.0
        };
        let mean_objects_per_cpm = if self.cpm_count > 0 {
            self.object_count as f64 / self.cpm_count as f64
        } else {
            0.0
        };
        let mean_cpm_bytes = if self.cpm_count > 0 {
            self.byte_count as f64 / self.cpm_count as f64
        } else {
            0.0
        };
        let mean_cbr = if self.cbr_windows > 0 {
            self.cbr_sum / self.cbr_windows as f64
        } else {
            0.0
        };
        let cbr_series = self
            .cbr_series
            .iter()
            .map(|(end_ns, (sum, count))| {
                (
                    *end_ns as f64 / NANOS_PER_SEC as f64,
                    if *count > 0 { sum / *count as f64 } else { 0.0 },
                )
            })
            .collect();

        // Pooled and per-transmitter-mean PDR per (bin, los).
        let mut pooled: BTreeMap<(usize, bool), (u64, u64)> = BTreeMap::new();
        let mut tx_ratios: BTreeMap<(usize, bool), (f64, u64)> = BTreeMap::new();
        for ((_, bin, los), (ok, tot)) in &self.pdr_cells {
            let cell = pooled.entry((*bin, *los)).or_insert((0, 0));
            cell.0 += ok;
            cell.1 += tot;
            if *tot > 0 {
                let r = tx_ratios.entry((*bin, *los)).or_insert((0.0, 0));
                r.0 += *ok as f64 / *tot as f64;
                r.1 += 1;
            }
        }
        let pdr = pooled
            .iter()
            .map(|((bin, los), (ok, tot))| {
                let (ratio_sum, tx_count) = tx_ratios[&(*bin, *los)];
                PdrRow {
                    bin_center_m: self.bins.center(*bin),
                    los: *los,
                    attempts: *tot,
                    successes: *ok,
                    pdr: if *tot > 0 { *ok as f64 / *tot as f64 } else { 0.0 },
                    pdr_mean_tx: if tx_count > 0 { ratio_sum / tx_count as f64 } else { 0.0 },
                }
            })
            .collect();

        let mut opr_covered = 0u64;
        let mut opr_total = 0u64;
        let opr = self
            .opr_cells
            .iter()
            .map(|((bin, rel), (cov, tot))| {
                opr_covered += cov;
                opr_total += tot;
                OprRow {
                    bin_center_m: self.bins.center(*bin),
                    relation: *rel,
                    covered: *cov,
                    total: *tot,
                    opr: if *tot > 0 { *cov as f64 / *tot as f64 } else { 0.0 },
                }
            })
            .collect();

        let mut gap_sum = 0u128;
        let mut gap_count = 0u64;
        let update_gaps = self
            .gap_cells
            .iter()
            .map(|(bin, (sum, count))| {
                gap_sum += sum;
                gap_count += count;
                UpdateGapRow {
                    bin_center_m: self.bins.center(*bin),
                    count: *count,
                    mean_gap_s: if *count > 0 {
                        *sum as f64 / *count as f64 / NANOS_PER_SEC as f64
                    } else {
                        0.0
                    },
                }
            })
            .collect();

        RunMetrics {
            policy: self.policy,
            seed: self.seed,
            config_hash: self.config_hash,
            cpm_count: self.cpm_count,
            vehicle_seconds,
            cpm_rate_hz,
            mean_objects_per_cpm,
            mean_cpm_bytes,
            objects_hist: self.objects_hist.into_iter().collect(),
            mean_cbr,
            cbr_series,
            frames_sent: self.frames_sent,
            frames_decoded: self.frames_decoded,
            frames_collided: self.frames_collided,
            frames_below_sensitivity: self.frames_below_sensitivity,
            pdr,
            opr,
            update_gaps,
            mean_opr: if opr_total > 0 {
                opr_covered as f64 / opr_total as f64
            } else {
                0.0
            },
            mean_update_gap_s: if gap_count > 0 {
                gap_sum as f64 / gap_count as f64 / NANOS_PER_SEC as f64
            } else {
                0.0
            },
            frame_log: self.frame_log,
            reception_log: self.reception_log,
        }
    }
}
