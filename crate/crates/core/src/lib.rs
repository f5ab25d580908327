//! Conditional quantile prediction of long-term citation counts.
//!
//! A log-linear quantile regression on the journal impact factor and early
//! citations gives the body of the conditional distribution; a Hill-type
//! Pareto tail extends it beyond the fitted grid. Diagnostics cover pooled
//! and grouped calibration and the Zenga inequality curve, and cohort mean
//! normalization transfers a model between publication years.
//!
//! ```
//! use citeq_core::{generate_synthetic, fit_grid, ModelSpec, QuantileGrid, SyntheticSpec, Variant};
//!
//! let data = generate_synthetic(&SyntheticSpec { n: 2_000, ..Default::default() }).unwrap();
//! let spec = ModelSpec::new(Variant::Full, 0.5)
//!     .unwrap()
//!     .with_grid(QuantileGrid::new(vec![0.5, 0.9]).unwrap());
//! let model = fit_grid(&data, &spec).unwrap();
//! let median = model.predict_quantile(0.5, 2.0, 3.0).unwrap();
//! assert!(median > 0.0);
//! ```

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod json;
pub mod model;
pub mod normalize;
pub mod record;
pub mod solver;
pub mod tail;

pub use data::{generate_synthetic, load_dataset, read_dataset, save_dataset, write_dataset, SyntheticSpec};
pub use diagnostics::{
    calibration_curve, coverage_heatmap, default_zenga_grid, empirical_quantile, group_quantile_comparison,
    group_records, grouped_calibration_error, upper_half_convex, zenga_curve, CalibrationPoint, CalibrationReport, GroupComparison,
    HeatmapCell, PublicationGroup, CONVEXITY_TOL,
};
pub use error::{Error, Result};
pub use model::{
    FitDiagnostics, FittedQuantileModel, ModelSpec, QuantileCoefficients, QuantileFitInfo, QuantileGrid, Variant,
    IF_FLOOR,
};
pub use normalize::{compute_constants, fit_normalized, normalize_dataset, transfer_predict, NormalizationConstants};
pub use record::{Observation, PublicationRecord, ScaledRecord};
pub use solver::{
    default_k0_candidates, fit_grid, fit_single_quantile, pinball_loss, select_k0, DesignMatrix, K0Objective,
    K0Selection, QuantileSolution, ResidualSigns, SolverOptions,
};
pub use tail::{
    c_p_proxy, covariate_adjusted_sample, default_k_range, hill_estimate, hill_scan, hybrid_quantile,
    pareto_quantile, select_threshold, DescendingSample, HillScanRow, TailEstimate,
};
