//! Degree-corrected tensor block model clustering.
//!
//! The mean of an order-`K` data tensor is modeled as
//! `X(i_1,..,i_K) = S(z_1(i_1),..,z_K(i_K)) * θ_1(i_1) * .. * θ_K(i_K)`:
//! a block core `S`, per-mode cluster assignments `z_k` and positive
//! per-node degrees `θ_k`. The estimator clusters each mode in two stages,
//! a spectral initialization ([`initialize`]) and an angle-based refinement
//! ([`refine`]). [`simgen`] generates synthetic data, [`metrics`] scores
//! clusterings and [`experiment`] runs seeded Monte-Carlo sweeps.

pub mod baseline;
pub mod error;
pub mod experiment;
pub mod initialize;
pub mod io;
pub mod kmeans;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod model;
mod par;
pub mod refine;
pub mod rng;
pub mod select;
pub mod simgen;
pub mod tensor;

pub use error::{DtbmError, Result};
pub use initialize::{init_clustering, InitOptions, Observation};
pub use matrix::DenseMatrix;
pub use model::{Clustering, DtbmParams, FitResult};
pub use par::is_parallel;
pub use refine::{angle_refine, fit_dtbm, oracle_refine, RefineOptions};
pub use tensor::DenseTensor;
