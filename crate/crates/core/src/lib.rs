//! Joint offloading decision, frame-count selection and compute/bandwidth
//! allocation for video DNN inference in a single-cell MEC system.
//!
//! Module map:
//! - [`model`]: delay/energy/accuracy/rate models and per-device costs
//! - [`fit`]: fitting complexity and accuracy models from samples
//! - [`local`]: closed-form optimum for devices that run locally
//! - [`edge`]: resource shares, frame search and the log-domain GP solver
//!   for the offloaded set
//! - [`policy`]: offloading decisions (channel-aware, exhaustive, baselines)
//! - [`admm`]: distributed ADMM solver over all devices
//! - [`scenario`], [`harness`]: seeded scenarios, sweeps and CSV output

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod admm;
pub mod edge;
pub mod error;
pub mod exec;
pub mod fit;
pub mod harness;
pub mod local;
pub mod model;
pub mod policy;
pub mod scenario;

pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{
    AccuracyModel, Allocation, ComplexityModel, DeviceDecision, DeviceProfile, Instance, Metrics, Models, SystemParams,
};
