//! Configuration: a TOML document with one section per module, validated
//! into SI units at load time.
//!
//! Defaults reproduce the reference parameter set: 23 dBm tx power,
//! -85 dBm sensing threshold, 6 Mbit/s, 10 MHz, 5.9 GHz, 150 m sensor
//! range, T_GenCpm 0.1 s, and trigger thresholds 4 m / 0.5 m/s / 1 s.
//! Distances, speeds and times are SI internally; km/h fields are converted
//! exactly once here.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SimError};
use crate::geometry::{GridGeometry, Layout, Rect};
use crate::model::kmh_to_mps;

/// CPM generation rule variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Etsi,
    LookAhead,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Etsi => "etsi",
            Policy::LookAhead => "look_ahead",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Policy {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "etsi" => Ok(Policy::Etsi),
            "look_ahead" | "lookahead" => Ok(Policy::LookAhead),
            other => Err(SimError::config(format!(
                "field `policy`: expected `etsi` or `look_ahead`, got `{other}`"
            ))),
        }
    }
}

// === Validated configuration =============================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioKind {
    Highway(HighwayConfig),
    Manhattan(ManhattanConfig),
    Trace(TraceConfig),
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Highway(_) => "highway",
            ScenarioKind::Manhattan(_) => "manhattan",
            ScenarioKind::Trace(_) => "trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayConfig {
    pub length_m: f64,
    pub lanes: u32,
    /// Aggregate density over all lanes, vehicles per km of road.
    pub density_veh_per_km: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub vehicle_length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManhattanConfig {
    pub blocks_x: u32,
    pub blocks_y: u32,
    pub block_length_m: f64,
    pub block_width_m: f64,
    pub lanes: u32,
    pub lane_width_m: f64,
    /// Vehicles per km of street (over the whole street lattice).
    pub density_veh_per_km: f64,
    pub max_speed_mps: f64,
    pub turn_speed_mps: f64,
    /// Turn weights at intersections, renormalized over the moves that stay
    /// inside the grid.
    pub p_left: f64,
    pub p_straight: f64,
    pub p_right: f64,
    pub vehicle_length_m: f64,
}

impl ManhattanConfig {
    pub fn street_width_m(&self) -> f64 {
        self.lanes as f64 * self.lane_width_m
    }

    pub fn grid(&self) -> GridGeometry {
        GridGeometry::new(
            self.blocks_x,
            self.blocks_y,
            self.block_length_m,
            self.block_width_m,
            self.street_width_m(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpmConfig {
    pub t_gen_cpm_s: f64,
    pub pos_threshold_m: f64,
    pub speed_threshold_mps: f64,
    pub time_threshold_s: f64,
    /// Prediction horizon for the look-ahead extension; 0 disables the
    /// extension and reproduces the baseline rules exactly.
    pub lookahead_horizon_s: f64,
    pub max_objects_per_cpm: u32,
    pub lower_layer_bytes: u32,
    pub base_container_bytes: u32,
    pub sic_bytes: u32,
    pub object_bytes: u32,
    pub sic_period_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub sensing_threshold_dbm: f64,
    /// Weakest received power a frame can be decoded at. Sits below the
    /// sensing threshold: receivers recover frames the carrier-sense
    /// machinery would not defer to.
    pub sensitivity_dbm: f64,
    /// Minimum SINR for successful decoding (QPSK 1/2).
    pub decode_snr_db: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub frequency_ghz: f64,
    pub datarate_bps: f64,
    pub preamble_us: u64,
    pub aifs_us: u64,
    pub slot_us: u64,
    /// Fixed contention window; backoff is uniform in [0, cw].
    pub cw: u32,
}

impl RadioConfig {
    /// Thermal noise over the channel bandwidth plus the receiver noise
    /// figure, in dBm.
    pub fn noise_floor_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossConfig {
    pub antenna_height_m: f64,
    pub shadowing_sigma_los_db: f64,
    pub shadowing_sigma_nlos_db: f64,
    pub los_near_coeff: f64,
    pub los_near_intercept: f64,
    pub los_near_freq_coeff: f64,
    pub los_far_coeff: f64,
    pub nlos_loss_offset_db: f64,
    pub nlos_freq_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub range_m: f64,
    /// Gaussian position noise applied to measurements; 0 keeps them exact.
    pub noise_sigma_m: f64,
    /// When true, other vehicle bodies occlude objects behind them.
    pub vehicle_occlusion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub bin_width_m: f64,
    pub max_distance_m: f64,
    pub cbr_window_s: f64,
    /// Statistics region override; scenario-specific default when absent.
    pub region: Option<Rect>,
    /// Record every frame and reception decision. Intended for small
    /// scenarios; the logs grow with traffic.
    pub log_frames: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub seed: u64,
    pub cpm: CpmConfig,
    pub radio: RadioConfig,
    pub pathloss: PathLossConfig,
    pub sensing: SensingConfig,
    pub metrics: MetricsConfig,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        raw.validate()
    }

    /// Hex digest over the canonical serialized form; identifies a
    /// configuration in output files.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Scenario geometry for the synthetic layouts. Trace scenarios get an
    /// open layout with bounds discovered by the trace loader.
    pub fn layout(&self) -> Layout {
        match &self.kind {
            ScenarioKind::Highway(h) => Layout::Highway {
                length: h.length_m,
                lanes: h.lanes,
            },
            ScenarioKind::Manhattan(m) => Layout::Grid(m.grid()),
            ScenarioKind::Trace(_) => Layout::Open {
                bounds: Rect::new(0.0, 0.0, 0.0, 0.0),
            },
        }
    }

    /// Statistics region: explicit override, else the middle 2 km of the
    /// highway or the central 3x3 blocks of the grid.
    pub fn stats_region(&self) -> Rect {
        if let Some(region) = self.metrics.region {
            return region;
        }
        match &self.kind {
            ScenarioKind::Highway(h) => {
                let mid = h.length_m / 2.0;
                let half = (h.length_m / 2.0).min(1000.0);
                Rect::new(mid - half, -100.0, mid + half, h.lanes as f64 * 5.0 + 100.0)
            }
            ScenarioKind::Manhattan(m) => m.grid().central_region(3, 3),
            ScenarioKind::Trace(_) => {
                Rect::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY)
            }
        }
    }

    pub fn default_highway() -> Self {
        RawConfig::default_for("highway").validate().expect("default config valid")
    }

    pub fn default_manhattan() -> Self {
        RawConfig::default_for("manhattan").validate().expect("default config valid")
    }
}

// === Raw document =========================================================

fn err(field: &str, msg: impl fmt::Display) -> SimError {
    SimError::config(format!("field `{field}`: {msg}"))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    highway: RawHighway,
    #[serde(default)]
    manhattan: RawManhattan,
    #[serde(default)]
    trace: RawTrace,
    #[serde(default)]
    cpm: RawCpm,
    #[serde(default)]
    radio: RawRadio,
    #[serde(default)]
    pathloss: RawPathLoss,
    #[serde(default)]
    sensing: RawSensing,
    #[serde(default)]
    metrics: RawMetrics,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    kind: Option<String>,
    duration_s: Option<f64>,
    warmup_s: Option<f64>,
    seed: Option<u64>,
}

impl Default for RawScenario {
    fn default() -> Self {
        RawScenario {
            kind: None,
            duration_s: None,
            warmup_s: None,
            seed: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHighway {
    length_m: Option<f64>,
    lanes: Option<u32>,
    density_veh_per_km: Option<f64>,
    speed_min_kmh: Option<f64>,
    speed_max_kmh: Option<f64>,
    vehicle_length_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManhattan {
    blocks_x: Option<u32>,
    blocks_y: Option<u32>,
    block_length_m: Option<f64>,
    block_width_m: Option<f64>,
    lanes: Option<u32>,
    lane_width_m: Option<f64>,
    density_veh_per_km: Option<f64>,
    max_speed_kmh: Option<f64>,
    turn_speed_kmh: Option<f64>,
    p_left: Option<f64>,
    p_straight: Option<f64>,
    p_right: Option<f64>,
    vehicle_length_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    path: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCpm {
    t_gen_cpm_s: Option<f64>,
    pos_threshold_m: Option<f64>,
    speed_threshold_mps: Option<f64>,
    time_threshold_s: Option<f64>,
    lookahead_horizon_s: Option<f64>,
    max_objects_per_cpm: Option<u32>,
    lower_layer_bytes: Option<u32>,
    base_container_bytes: Option<u32>,
    sic_bytes: Option<u32>,
    object_bytes: Option<u32>,
    sic_period_s: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    tx_power_dbm: Option<f64>,
    sensing_threshold_dbm: Option<f64>,
    sensitivity_dbm: Option<f64>,
    decode_snr_db: Option<f64>,
    noise_figure_db: Option<f64>,
    bandwidth_mhz: Option<f64>,
    frequency_ghz: Option<f64>,
    datarate_mbps: Option<f64>,
    preamble_us: Option<u64>,
    aifs_us: Option<u64>,
    slot_us: Option<u64>,
    cw: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPathLoss {
    antenna_height_m: Option<f64>,
    shadowing_sigma_los_db: Option<f64>,
    shadowing_sigma_nlos_db: Option<f64>,
    los_near_coeff: Option<f64>,
    los_near_intercept: Option<f64>,
    los_near_freq_coeff: Option<f64>,
    los_far_coeff: Option<f64>,
    nlos_loss_offset_db: Option<f64>,
    nlos_freq_coeff: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensing {
    range_m: Option<f64>,
    noise_sigma_m: Option<f64>,
    vehicle_occlusion: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    bin_width_m: Option<f64>,
    max_distance_m: Option<f64>,
    cbr_window_s: Option<f64>,
    region: Option<Rect>,
    log_frames: Option<bool>,
}

impl RawConfig {
    fn default_for(kind: &str) -> Self {
        let mut raw = RawConfig::default();
        raw.scenario.kind = Some(kind.to_string());
        raw
    }

    fn validate(self) -> Result<ScenarioConfig> {
        let kind_name = self.scenario.kind.as_deref().unwrap_or("highway");
        let kind = match kind_name {
            "highway" => ScenarioKind::Highway(self.highway.validate()?),
            "manhattan" => ScenarioKind::Manhattan(self.manhattan.validate()?),
            "trace" => ScenarioKind::Trace(self.trace.validate()?),
            other => {
                return Err(err(
                    "scenario.kind",
                    format!("expected `highway`, `manhattan` or `trace`, got `{other}`"),
                ))
            }
        };

        let duration_s = self.scenario.duration_s.unwrap_or(100.0);
        if !(duration_s > 0.0) {
            return Err(err("scenario.duration_s", "must be positive"));
        }
        let warmup_s = self.scenario.warmup_s.unwrap_or(5.0);
        if !(0.0..duration_s).contains(&warmup_s) {
            return Err(err("scenario.warmup_s", "must be in [0, duration)"));
        }
        let seed = self.scenario.seed.unwrap_or(0);

        let cpm = self.cpm.validate()?;
        let radio = self.radio.validate()?;
        let pathloss = self.pathloss.validate()?;
        let sensing = self.sensing.validate()?;
        let metrics = self.metrics.validate()?;

        Ok(ScenarioConfig {
            kind,
            duration_s,
            warmup_s,
            seed,
            cpm,
            radio,
            pathloss,
            sensing,
            metrics,
        })
    }
}

impl RawHighway {
    fn validate(self) -> Result<HighwayConfig> {
        let cfg = HighwayConfig {
            length_m: self.length_m.unwrap_or(5000.0),
            lanes: self.lanes.unwrap_or(6),
            density_veh_per_km: self.density_veh_per_km.unwrap_or(60.0),
            speed_min_mps: kmh_to_mps(self.speed_min_kmh.unwrap_or(118.0)),
            speed_max_mps: kmh_to_mps(self.speed_max_kmh.unwrap_or(140.0)),
            vehicle_length_m: self.vehicle_length_m.unwrap_or(5.0),
        };
        if !(cfg.length_m > 0.0) {
            return Err(err("highway.length_m", "must be positive"));
        }
        if cfg.lanes == 0 {
            return Err(err("highway.lanes", "must be at least 1"));
        }
        if !(cfg.density_veh_per_km >= 0.0) {
            return Err(err("highway.density_veh_per_km", "must be non-negative"));
        }
        if !(cfg.speed_min_mps > 0.0) || cfg.speed_min_mps > cfg.speed_max_mps {
            return Err(err(
                "highway.speed_min_kmh",
                "must be positive and not above speed_max_kmh",
            ));
        }
        if cfg.density_veh_per_km > 0.0 {
            let per_lane_gap = cfg.lanes as f64 * 1000.0 / cfg.density_veh_per_km;
            if per_lane_gap < 2.0 * cfg.vehicle_length_m {
                return Err(err(
                    "highway.density_veh_per_km",
                    format!(
                        "per-lane spacing {per_lane_gap:.1} m is below twice the vehicle length"
                    ),
                ));
            }
        }
        Ok(cfg)
    }
}

impl RawManhattan {
    fn validate(self) -> Result<ManhattanConfig> {
        let cfg = ManhattanConfig {
            blocks_x: self.blocks_x.unwrap_or(9),
            blocks_y: self.blocks_y.unwrap_or(7),
            block_length_m: self.block_length_m.unwrap_or(433.0),
            block_width_m: self.block_width_m.unwrap_or(250.0),
            lanes: self.lanes.unwrap_or(4),
            lane_width_m: self.lane_width_m.unwrap_or(3.25),
            density_veh_per_km: self.density_veh_per_km.unwrap_or(25.0),
            max_speed_mps: kmh_to_mps(self.max_speed_kmh.unwrap_or(70.0)),
            turn_speed_mps: kmh_to_mps(self.turn_speed_kmh.unwrap_or(30.0)),
            p_left: self.p_left.unwrap_or(0.25),
            p_straight: self.p_straight.unwrap_or(0.5),
            p_right: self.p_right.unwrap_or(0.25),
            vehicle_length_m: self.vehicle_length_m.unwrap_or(5.0),
        };
        if cfg.blocks_x == 0 || cfg.blocks_y == 0 {
            return Err(err("manhattan.blocks_x", "grid needs at least 1x1 blocks"));
        }
        if !(cfg.block_length_m > 0.0) || !(cfg.block_width_m > 0.0) {
            return Err(err("manhattan.block_length_m", "block dimensions must be positive"));
        }
        if cfg.lanes < 2 {
            return Err(err(
                "manhattan.lanes",
                "needs at least 2 so every street carries both directions",
            ));
        }
        if !(cfg.lane_width_m > 0.0) {
            return Err(err("manhattan.lane_width_m", "must be positive"));
        }
        if !(cfg.density_veh_per_km >= 0.0) {
            return Err(err("manhattan.density_veh_per_km", "must be non-negative"));
        }
        if !(cfg.max_speed_mps > 0.0) {
            return Err(err("manhattan.max_speed_kmh", "must be positive"));
        }
        if !(cfg.turn_speed_mps > 0.0) || cfg.turn_speed_mps > cfg.max_speed_mps {
            return Err(err(
                "manhattan.turn_speed_kmh",
                "must be positive and not above max_speed_kmh",
            ));
        }
        let psum = cfg.p_left + cfg.p_straight + cfg.p_right;
        if !(cfg.p_left >= 0.0 && cfg.p_straight >= 0.0 && cfg.p_right >= 0.0 && psum > 0.0) {
            return Err(err(
                "manhattan.p_left",
                "turn weights must be non-negative with a positive sum",
            ));
        }
        Ok(cfg)
    }
}

impl RawTrace {
    fn validate(self) -> Result<TraceConfig> {
        let path = self
            .path
            .ok_or_else(|| err("trace.path", "required for trace scenarios"))?;
        if path.is_empty() {
            return Err(err("trace.path", "must not be empty"));
        }
        Ok(TraceConfig { path })
    }
}

impl RawCpm {
    fn validate(self) -> Result<CpmConfig> {
        let t_gen_cpm_s = self.t_gen_cpm_s.unwrap_or(0.1);
        if !(0.1..=1.0).contains(&t_gen_cpm_s) {
            return Err(err("cpm.t_gen_cpm_s", "must be within [0.1, 1.0]"));
        }
        let cfg = CpmConfig {
            t_gen_cpm_s,
            pos_threshold_m: self.pos_threshold_m.unwrap_or(4.0),
            speed_threshold_mps: self.speed_threshold_mps.unwrap_or(0.5),
            time_threshold_s: self.time_threshold_s.unwrap_or(1.0),
            lookahead_horizon_s: self.lookahead_horizon_s.unwrap_or(t_gen_cpm_s),
            max_objects_per_cpm: self.max_objects_per_cpm.unwrap_or(128),
            lower_layer_bytes: self.lower_layer_bytes.unwrap_or(80),
            base_container_bytes: self.base_container_bytes.unwrap_or(121),
            sic_bytes: self.sic_bytes.unwrap_or(14),
            object_bytes: self.object_bytes.unwrap_or(35),
            sic_period_s: self.sic_period_s.unwrap_or(1.0),
        };
        if !(cfg.pos_threshold_m > 0.0) {
            return Err(err("cpm.pos_threshold_m", "must be positive"));
        }
        if !(cfg.speed_threshold_mps > 0.0) {
            return Err(err("cpm.speed_threshold_mps", "must be positive"));
        }
        if !(cfg.time_threshold_s > 0.0) {
            return Err(err("cpm.time_threshold_s", "must be positive"));
        }
        if !(cfg.lookahead_horizon_s >= 0.0) {
            return Err(err("cpm.lookahead_horizon_s", "must be non-negative"));
        }
        if cfg.max_objects_per_cpm == 0 {
            return Err(err("cpm.max_objects_per_cpm", "must be at least 1"));
        }
        if !(cfg.sic_period_s > 0.0) {
            return Err(err("cpm.sic_period_s", "must be positive"));
        }
        Ok(cfg)
    }
}

impl RawRadio {
    fn validate(self) -> Result<RadioConfig> {
        let cfg = RadioConfig {
            tx_power_dbm: self.tx_power_dbm.unwrap_or(23.0),
            sensing_threshold_dbm: self.sensing_threshold_dbm.unwrap_or(-85.0),
            sensitivity_dbm: self.sensitivity_dbm.unwrap_or(-90.0),
            decode_snr_db: self.decode_snr_db.unwrap_or(5.0),
            noise_figure_db: self.noise_figure_db.unwrap_or(9.0),
            bandwidth_hz: self.bandwidth_mhz.unwrap_or(10.0) * 1e6,
            frequency_ghz: self.frequency_ghz.unwrap_or(5.9),
            datarate_bps: self.datarate_mbps.unwrap_or(6.0) * 1e6,
            preamble_us: self.preamble_us.unwrap_or(40),
            aifs_us: self.aifs_us.unwrap_or(110),
            slot_us: self.slot_us.unwrap_or(13),
            cw: self.cw.unwrap_or(15),
        };
        if !(cfg.bandwidth_hz > 0.0) {
            return Err(err("radio.bandwidth_mhz", "must be positive"));
        }
        if !(cfg.frequency_ghz > 0.0) {
            return Err(err("radio.frequency_ghz", "must be positive"));
        }
        if !(cfg.datarate_bps > 0.0) {
            return Err(err("radio.datarate_mbps", "must be positive"));
        }
        if cfg.preamble_us == 0 || cfg.aifs_us == 0 || cfg.slot_us == 0 {
            return Err(err("radio.preamble_us", "MAC timings must be positive"));
        }
        Ok(cfg)
    }
}

impl RawPathLoss {
    fn validate(self) -> Result<PathLossConfig> {
        let cfg = PathLossConfig {
            antenna_height_m: self.antenna_height_m.unwrap_or(1.5),
            shadowing_sigma_los_db: self.shadowing_sigma_los_db.unwrap_or(3.0),
            shadowing_sigma_nlos_db: self.shadowing_sigma_nlos_db.unwrap_or(4.0),
            los_near_coeff: self.los_near_coeff.unwrap_or(22.7),
            los_near_intercept: self.los_near_intercept.unwrap_or(27.0),
            los_near_freq_coeff: self.los_near_freq_coeff.unwrap_or(20.0),
            los_far_coeff: self.los_far_coeff.unwrap_or(40.0),
            nlos_loss_offset_db: self.nlos_loss_offset_db.unwrap_or(20.0),
            nlos_freq_coeff: self.nlos_freq_coeff.unwrap_or(3.0),
        };
        if !(cfg.antenna_height_m > 1.0) {
            return Err(err(
                "pathloss.antenna_height_m",
                "must exceed the 1 m effective-environment height",
            ));
        }
        if cfg.shadowing_sigma_los_db < 0.0 || cfg.shadowing_sigma_nlos_db < 0.0 {
            return Err(err("pathloss.shadowing_sigma_los_db", "must be non-negative"));
        }
        Ok(cfg)
    }
}

impl RawSensing {
    fn validate(self) -> Result<SensingConfig> {
        let cfg = SensingConfig {
            range_m: self.range_m.unwrap_or(150.0),
            noise_sigma_m: self.noise_sigma_m.unwrap_or(0.0),
            vehicle_occlusion: self.vehicle_occlusion.unwrap_or(false),
        };
        if !(cfg.range_m > 0.0) {
            return Err(err("sensing.range_m", "must be positive"));
        }
        if cfg.noise_sigma_m < 0.0 {
            return Err(err("sensing.noise_sigma_m", "must be non-negative"));
        }
        Ok(cfg)
    }
}

impl RawMetrics {
    fn validate(self) -> Result<MetricsConfig> {
        let cfg = MetricsConfig {
            bin_width_m: self.bin_width_m.unwrap_or(25.0),
            max_distance_m: self.max_distance_m.unwrap_or(500.0),
            cbr_window_s: self.cbr_window_s.unwrap_or(0.1),
            region: self.region,
            log_frames: self.log_frames.unwrap_or(false),
        };
        if !(cfg.bin_width_m > 0.0) {
            return Err(err("metrics.bin_width_m", "must be positive"));
        }
        if cfg.max_distance_m < cfg.bin_width_m {
            return Err(err("metrics.max_distance_m", "must cover at least one bin"));
        }
        if !(cfg.cbr_window_s > 0.0) {
            return Err(err("metrics.cbr_window_s", "must be positive"));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_reference_parameters() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.cpm.t_gen_cpm_s, 0.1);
        assert_eq!(cfg.cpm.pos_threshold_m, 4.0);
        assert_eq!(cfg.cpm.speed_threshold_mps, 0.5);
        assert_eq!(cfg.cpm.time_threshold_s, 1.0);
        assert_eq!(cfg.radio.tx_power_dbm, 23.0);
        assert_eq!(cfg.radio.sensing_threshold_dbm, -85.0);
        assert_eq!(cfg.radio.sensitivity_dbm, -90.0);
        assert_eq!(cfg.radio.decode_snr_db, 5.0);
        assert_eq!(cfg.radio.bandwidth_hz, 10e6);
        assert_eq!(cfg.radio.datarate_bps, 6e6);
        assert_eq!(cfg.radio.frequency_ghz, 5.9);
        assert_eq!(cfg.sensing.range_m, 150.0);
        match cfg.kind {
            ScenarioKind::Highway(h) => {
                assert_eq!(h.length_m, 5000.0);
                assert_eq!(h.lanes, 6);
            }
            _ => panic!("default scenario should be highway"),
        }
    }

    #[test]
    fn tgencpm_below_lower_bound_rejected() {
        let res = ScenarioConfig::from_toml_str("[cpm]\nt_gen_cpm_s = 0.05\n");
        let msg = res.unwrap_err().to_string();
        assert!(msg.contains("cpm.t_gen_cpm_s"), "{msg}");
    }

    #[test]
    fn unknown_field_rejected_with_name() {
        let res = ScenarioConfig::from_toml_str("[radio]\ntx_powr_dbm = 23.0\n");
        let msg = res.unwrap_err().to_string();
        assert!(msg.contains("tx_powr_dbm"), "{msg}");
    }

    #[test]
    fn kmh_converted_once() {
        let cfg = ScenarioConfig::from_toml_str(
            "[scenario]\nkind = \"manhattan\"\n[manhattan]\nmax_speed_kmh = 70.0\n",
        )
        .unwrap();
        match cfg.kind {
            ScenarioKind::Manhattan(m) => {
                assert!((m.max_speed_mps - 70.0 / 3.6).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn density_zero_is_valid() {
        let cfg = ScenarioConfig::from_toml_str("[highway]\ndensity_veh_per_km = 0.0\n").unwrap();
        match cfg.kind {
            ScenarioKind::Highway(h) => assert_eq!(h.density_veh_per_km, 0.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn overdense_highway_rejected() {
        let res = ScenarioConfig::from_toml_str("[highway]\nlanes = 1\ndensity_veh_per_km = 150.0\n");
        assert!(res.is_err());
    }

    #[test]
    fn trace_requires_path() {
        let res = ScenarioConfig::from_toml_str("[scenario]\nkind = \"trace\"\n");
        let msg = res.unwrap_err().to_string();
        assert!(msg.contains("trace.path"), "{msg}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ScenarioConfig::from_toml_str("").unwrap();
        let b = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ScenarioConfig::from_toml_str("[scenario]\nseed = 1\n").unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn lookahead_horizon_defaults_to_generation_period() {
        let cfg = ScenarioConfig::from_toml_str("[cpm]\nt_gen_cpm_s = 0.2\n").unwrap();
        assert_eq!(cfg.cpm.lookahead_horizon_s, 0.2);
    }
}
