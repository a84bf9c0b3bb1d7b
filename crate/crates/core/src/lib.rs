//! Completion of partially observed matrices whose entries are empirical
//! distributions, using Wasserstein nearest neighbors.
//!
//! ```
//! use distmc::{DistNnF64, MatrixF64};
//!
//! let m = MatrixF64::from_rows(vec![
//!     vec![Some(vec![1.0, 2.0]), Some(vec![3.0, 4.0])],
//!     vec![Some(vec![1.1, 2.2]), None],
//!     vec![Some(vec![9.0, 10.0]), Some(vec![30.0, 31.0])],
//! ])?;
//! let result = DistNnF64::new(1.0)?.impute(&m, 1, 1)?;
//! assert_eq!(result.estimate.distribution().samples(), &[3.0, 4.0]);
//! # Ok::<(), distmc::Error>(())
//! ```

pub mod distnn;
pub mod empdist;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod matrix;
pub mod oracle;
pub mod panel;
pub mod rng;
pub mod scalar;
pub mod serde_float;
pub mod synthetic;
pub mod tuning;

pub use distnn::{
    row_distance, CandidatePool, DistNn, Estimate, ImputationResult, Neighbor, NeighborPolicy, NeighborSet, TargetCells,
};
pub use empdist::{
    barycenter, general_barycenter, w2_equal_n, w2_general, w2_sq_equal_n, w2_sq_general, EmpiricalDistribution,
    QuantileGrid, Summaries,
};
pub use error::{Error, Result};
pub use experiments::{
    run_band_coverage, run_denoising, run_quantity_eval, run_scaling, verify_appendix_d, verify_barycenter_rate,
    EtaPolicy, ExperimentSpec, Sweep, SweepVariable,
};
pub use inference::{
    asymptotic_band, bootstrap_band, BandMethod, BootstrapConfig, ConfidenceBand, KernelDensity, SigmaFunction,
};
pub use matrix::{apply_mcar, shared_columns, DistributionalMatrix, MaskSpec};
pub use oracle::{brute_force_w2_sq, check_brute_force, uniform_barycenter_expected_w2_sq, uniform_w2_sq, UniformPair};
pub use panel::Panel;
pub use scalar::Scalar;
pub use synthetic::{generate, BaseFamily, CellLaw, DgpKind, DgpSpec, TrueDistributions};
pub use tuning::{tune_eta, SearchStrategy, TuneConfig, TuneReport};

pub type EmpiricalDistributionF64 = EmpiricalDistribution<f64>;
pub type EmpiricalDistributionF32 = EmpiricalDistribution<f32>;
pub type MatrixF64 = DistributionalMatrix<f64>;
pub type MatrixF32 = DistributionalMatrix<f32>;
pub type DistNnF64 = DistNn<f64>;
pub type DistNnF32 = DistNn<f32>;
pub type PanelF64 = Panel<f64>;
pub type PanelF32 = Panel<f32>;
