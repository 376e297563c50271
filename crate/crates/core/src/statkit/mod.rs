//! Statistical kit: incremental least squares and the distribution
//! functions the plausibility tests are built on.

mod dist;
mod ks;
mod ols;

pub use dist::{
    binomial_sf, chi2_cdf, chi2_pdf, chi2_quantile, chi2_sf, kolmogorov_sf, normal_cdf, normal_pdf,
    normal_quantile, normal_sf,
};
pub use ks::{ks_distance, ks_statistic, KsResult, KS_MIN_SAMPLES};
pub use ols::OlsFit;
