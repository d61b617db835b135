//! GPS-independent victim localization for disaster-rescue networks.
//!
//! Victims carry simple beacons; rescuers at known positions observe the
//! beacons and a command center estimates every victim position. The crate
//! covers the whole pipeline:
//!
//! - [`scenario`]: fixed victim/rescuer geometry and transmit powers.
//! - [`channel`]: noisy ToA, TDoA, AoA, RSS and RSSD measurement synthesis.
//! - [`solvers`]: one estimator per (measurement, manner) category.
//! - [`oracle`]: brute-force grid search used to certify solver outputs.
//! - [`harness`]: seeded Monte Carlo experiments, sweeps and NRMSE.
//! - [`report`]: TOML configuration, CSV/JSON results and SVG figures.

pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::{distance, Point, Rect};
