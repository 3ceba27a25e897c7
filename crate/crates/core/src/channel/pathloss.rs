//! Winner+ B1 path loss at street level: dual-slope LOS with a breakpoint,
//! an around-the-corner NLOS term, and log-normal shadowing sigmas chosen
//! by LOS class. All coefficients come from configuration.

use crate::config::{PathLossConfig, RadioConfig};
use crate::model::Vec2;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Street-interaction exponent constants of the B1 NLOS term.
const NJ_BASE: f64 = 2.8;
const NJ_SLOPE: f64 = 0.0024;
const NJ_FLOOR: f64 = 1.84;
const NJ_GAIN: f64 = 12.5;

/// Minimum geometric distance fed into any log term.
const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct WinnerB1 {
    freq_ghz: f64,
    breakpoint_m: f64,
    near_coeff: f64,
    /// Near-branch intercept with the frequency term folded in.
    near_intercept_db: f64,
    far_coeff: f64,
    /// Far-branch intercept, set so both branches agree at the breakpoint.
    far_intercept_db: f64,
    nlos_offset_db: f64,
    nlos_freq_term_db: f64,
    street_half_width_m: f64,
    sigma_los_db: f64,
    sigma_nlos_db: f64,
}

impl WinnerB1 {
    /// `street_width_m` bounds the corner distances of the NLOS term; pass
    /// 0 for layouts without NLOS geometry.
    pub fn new(cfg: &PathLossConfig, radio: &RadioConfig, street_width_m: f64) -> Self {
        let freq_ghz = radio.frequency_ghz;
        let h_eff = cfg.antenna_height_m - 1.0;
        let breakpoint_m = 4.0 * h_eff * h_eff * (freq_ghz * 1e9) / SPEED_OF_LIGHT;
        let near_intercept_db = cfg.los_near_intercept + cfg.los_near_freq_coeff * freq_ghz.log10();
        let near_at_bp = cfg.los_near_coeff * breakpoint_m.log10() + near_intercept_db;
        let far_intercept_db = near_at_bp - cfg.los_far_coeff * breakpoint_m.log10();
        WinnerB1 {
            freq_ghz,
            breakpoint_m,
            near_coeff: cfg.los_near_coeff,
            near_intercept_db,
            far_coeff: cfg.los_far_coeff,
            far_intercept_db,
            nlos_offset_db: cfg.nlos_loss_offset_db,
            nlos_freq_term_db: cfg.nlos_freq_coeff * freq_ghz.log10(),
            street_half_width_m: street_width_m / 2.0,
            sigma_los_db: cfg.shadowing_sigma_los_db,
            sigma_nlos_db: cfg.shadowing_sigma_nlos_db,
        }
    }

    pub fn breakpoint_m(&self) -> f64 {
        self.breakpoint_m
    }

    pub fn shadowing_sigma_db(&self, los: bool) -> f64 {
        if los {
            self.sigma_los_db
        } else {
            self.sigma_nlos_db
        }
    }

    /// LOS loss in dB at line distance `d` meters.
    pub fn los_loss_db(&self, d: f64) -> f64 {
        let d = d.max(MIN_DISTANCE_M);
        if d <= self.breakpoint_m {
            self.near_coeff * d.log10() + self.near_intercept_db
        } else {
            self.far_coeff * d.log10() + self.far_intercept_db
        }
    }

    /// NLOS loss between two positions on perpendicular streets: the LOS
    /// run to the corner plus a distance-dependent around-the-corner decay,
    /// minimized over the two travel orderings.
    pub fn nlos_loss_db(&self, tx: Vec2, rx: Vec2) -> f64 {
        let leg_a = (tx.x - rx.x).abs().max(self.street_half_width_m).max(MIN_DISTANCE_M);
        let leg_b = (tx.y - rx.y).abs().max(self.street_half_width_m).max(MIN_DISTANCE_M);
        let one = self.nlos_leg_db(leg_a, leg_b);
        let two = self.nlos_leg_db(leg_b, leg_a);
        one.min(two)
    }

    fn nlos_leg_db(&self, d1: f64, d2: f64) -> f64 {
        let nj = (NJ_BASE - NJ_SLOPE * d1).max(NJ_FLOOR);
        self.los_loss_db(d1) + self.nlos_offset_db - NJ_GAIN * nj
            + 10.0 * nj * d2.log10()
            + self.nlos_freq_term_db
    }

    /// Median path loss (no shadowing) for a tx/rx pair of known LOS class.
    pub fn path_loss_db(&self, tx: Vec2, rx: Vec2, los: bool) -> f64 {
        if los {
            self.los_loss_db(tx.distance(rx))
        } else {
            // NLOS loss can dip under the LOS curve for degenerate
            // geometries (both corners close); never reward losing LOS.
            self.nlos_loss_db(tx, rx).max(self.los_loss_db(tx.distance(rx)))
        }
    }

    pub fn frequency_ghz(&self) -> f64 {
        self.freq_ghz
    }
}
