//! Numerical building blocks: small dense linear algebra, distribution
//! functions, the KS statistic, and the seeded generator.

pub mod dist;
pub mod ks;
pub mod linalg;
pub mod rng;

pub use dist::{chi2_cdf, chi2_quantile, chi2_sf, normal_cdf, normal_quantile, normal_sf};
pub use ks::{ks_statistic, KsResult};
pub use linalg::{
    eigen_bounds, invert_spd, second_moment, EigenBounds, MatrixD, VectorD,
};
pub use rng::SimRng;
