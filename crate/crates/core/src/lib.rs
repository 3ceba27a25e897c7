//! Discrete-event simulator for V2X collective perception: CPM generation
//! rules (baseline and look-ahead), an 802.11p broadcast channel, and the
//! perception metrics used to compare the two policies.

pub mod channel;
pub mod config;
pub mod cpm;
pub mod error;
pub mod fig1;
pub mod geometry;
pub mod metrics;
pub mod mobility;
pub mod model;
pub mod rng;
pub mod scheduler;
pub mod sensing;

pub use config::{Policy, ScenarioConfig, ScenarioKind};
pub use error::{Result, SimError};
pub use geometry::{Layout, Rect, StreetRelation};
pub use model::{SimTime, Vec2, VehicleId, VehicleState};
