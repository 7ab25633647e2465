//! Event detection in gridded human-activity data using a small set of
//! optimally placed "sensor" cells.
//!
//! The pipeline is:
//!
//! 1. bin pickup/dropoff points into a regular lat/lon grid and temporal
//!    units, producing an activity matrix with one row per cell and one
//!    column per unit ([`ingest`], [`matrix`]);
//! 2. extract the dominant left singular vectors of that matrix
//!    ([`decomposition`]);
//! 3. pick interpolation rows with the discrete empirical interpolation
//!    method ([`sensors`]);
//! 4. reconstruct the whole field from the sensor rows only, which yields
//!    the "uneventful" baseline ([`simulation`]);
//! 5. compare observation and baseline per cell and unit ([`detection`]),
//!    choosing the sensor count on an external validation set ([`sweep`]).
//!
//! ```
//! use deimsense_core::{decomposition, sensors, simulation};
//! use nalgebra::DMatrix;
//!
//! // rank-1 field: every column is a multiple of the same profile
//! let a = DMatrix::from_fn(6, 4, |i, j| ((i + 1) * (j + 2)) as f64);
//! let basis = decomposition::compute_basis_dense(&a, 1).unwrap();
//! let picked = sensors::select_sensors_deim(&basis, 1).unwrap();
//! let recon = simulation::simulate_dense(&basis, &picked, &a).unwrap();
//! assert!((recon.values.clone() - a).abs().max() < 1e-9);
//! ```

pub mod container;
pub mod decomposition;
pub mod detection;
pub mod error;
pub mod export;
pub mod grid;
pub mod ingest;
pub mod jenks;
mod linalg;
pub mod matrix;
pub mod sensors;
pub mod simulation;
pub mod sweep;
pub mod synthetic;
pub mod temporal;

pub use decomposition::OrthonormalBasis;
pub use detection::EventReport;
pub use error::{Error, Result};
pub use grid::GridSpec;
pub use ingest::{PointRecord, TripSchema};
pub use matrix::ActivityMatrix;
pub use sensors::{SelectionMethod, SensorSet};
pub use simulation::ReconstructedMatrix;
pub use sweep::SweepCurve;
pub use temporal::{TemporalSpec, TimeUnit};
