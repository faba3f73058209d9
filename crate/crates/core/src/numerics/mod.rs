//! Special functions, truncated-normal moments and dense SPD linear algebra.

pub mod eigen;
pub mod quadrature;
pub mod spd;
pub mod special;
pub mod truncnorm;

pub use quadrature::{gauss_legendre, GaussLegendre};
pub use spd::SpdMatrix;
pub use special::{digamma, erfcx, ln_beta, ln_gamma, std_normal_cdf, std_normal_logcdf, std_normal_logpdf};
pub use truncnorm::{truncated_normal_moments, truncated_normal_moments_unchecked, Bound, TruncatedMoments};
