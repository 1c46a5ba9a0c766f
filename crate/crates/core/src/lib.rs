//! Resource allocation for multicasting tiled 360-degree video over an OFDMA
//! downlink.
//!
//! The crate covers the full pipeline for one server and `K` users:
//!
//! - [`geometry`] maps a viewing direction to the tiles covering its field of
//!   view plus a safety margin.
//! - [`grouping`] splits the union of requested tiles into disjoint multicast
//!   groups keyed by the exact set of users requesting them.
//! - [`powermin`] minimizes total transmit power for a given per-tile encoding
//!   rate (dual ascent over per-group multipliers, water-filling repair).
//! - [`qualitymax`] maximizes the common encoding rate under a power budget
//!   (relaxation, greedy integer rounding and bisection).
//! - [`baselines`] implements unicast and equal-subcarrier comparison schemes.
//! - [`oracle`] holds exhaustive solvers for small instances.
//! - [`sim`] generates Zipf view states and Rayleigh channels and runs
//!   Monte-Carlo experiments.
//! - [`cli`] is the command-line front end.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod grouping;
pub mod oracle;
pub mod powermin;
pub mod qualitymax;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{fov_tiles, TileSet, VideoConfig, ViewDirection};
pub use grouping::{partition, required_tiles, Group, GroupPartition, SystemViewState};
pub use powermin::{Allocation, ChannelState, OfdmaConfig, PowerMinResult};
pub use qualitymax::{QualityResult, QualityScenario};
