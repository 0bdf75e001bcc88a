//! Spatial concordance between two co-registered fields: bivariate Matérn and
//! Wendland covariance models, maximum-likelihood fitting, Lin's CCC, the
//! spatial concordance curve with delta-method variances, and a windowed
//! pipeline for large image pairs.

pub mod concordance;
pub mod covariance;
pub mod error;
pub mod experiment;
pub mod fisher;
pub mod format;
pub mod image;
pub mod likelihood;
pub mod linalg;
pub mod local;
pub mod optim;
pub mod simulate;
pub mod special;

pub use covariance::{
    build_covariance_matrix, matern_correlation, matern_half_integer, validate_params,
    wendland_correlation, Component, CovParams, Family, GridSpec, MaternParams, SiteGeometry,
    WendlandParams,
};
pub use concordance::{
    lin_ccc, lin_ccc_level, sccc_estimate, sccc_estimate_with_bands, sccc_gradient, sccc_theoretical,
    sccc_variance, LinResult, ScccCurve,
};
pub use error::{Error, Result};
pub use likelihood::{aic_bic, fit_ml, log_likelihood, observed_information, FitOptions, FittedModel};
pub use image::{ImagePair, RasterImage};
pub use local::{
    fit_windows, global_rho1, global_rho2, partition_image, select_family, WindowPartition, WindowedFit,
};
pub use simulate::{simulate, FieldPair, FieldSimulator, SimulationConfig};
pub use special::bessel_k;
