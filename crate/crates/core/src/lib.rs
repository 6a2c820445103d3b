//! Desk-scale laboratory for SCSI-assisted uplink DMRS channel estimation.
//!
//! The crate is organised along the processing chain:
//!
//! * [`scene`]: geometric multipath channels and spatially consistent grid scenes.
//! * [`dmrs`]: Type II DMRS resource mapping, cover codes, received-signal synthesis
//!   and the trivial LS/despreading baseline.
//! * [`estimators`]: SCSI-assisted Bayesian estimation in the antenna-frequency domain
//!   (SA-BCE), its beam-delay form and the windowed band-truncated variant (SA-WBCE).
//! * [`database`]: grid-indexed SCSI store with CSV persistence.
//! * [`vstd`]: Vandermonde-structured tensor decomposition that builds one database
//!   record from noisy snapshots.
//! * [`metrics`] and [`harness`]: NMSE / SCSI-accuracy metrics and the Monte-Carlo
//!   experiment runner behind the `scsilab` binary.

pub mod banded;
pub mod config;
pub mod database;
pub mod dmrs;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod scene;
pub mod vstd;
pub mod window;

pub use config::{ConfigError, SystemConfig};
pub use database::{GridLayout, ScsiDatabase, ScsiRecord};
pub use scene::{GridScene, PathParams, PathSet};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix (column-major).
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
