//! Moments of the univariate normal truncated to an interval, computed in
//! log space.

use serde::{Deserialize, Serialize};

use super::quadrature::gauss_legendre;
use super::special::{std_normal_logcdf, std_normal_logpdf, LN_SQRT_2PI};
use crate::error::{Error, Result};

/// One end of a truncation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Unbounded,
    At(f64),
}

impl Bound {
    fn standardize(self, mu: f64, sigma: f64) -> Option<f64> {
        match self {
            Bound::Unbounded => None,
            Bound::At(v) => Some((v - mu) / sigma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMoments {
    /// log of the mass of N(mu, var) inside the interval.
    pub log_z: f64,
    pub mean: f64,
    pub variance: f64,
}

/// log Z below this is reported as [`Error::TailDegenerate`].
pub const LOG_Z_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// Interval width (in standard deviations) below which the moments come from
/// Gauss–Legendre quadrature around the midpoint instead of Φ differences.
const NARROW_WIDTH: f64 = 0.5;
const NARROW_SKEW: f64 = 5.0;
const NARROW_NODES: usize = 20;

/// Moments of N(mu, var) truncated to `[lo, hi]`.
///
/// Returns [`Error::TailDegenerate`] (carrying the moments) when the mass is
/// below 1e-300.
pub fn truncated_normal_moments(mu: f64, var: f64, lo: Bound, hi: Bound) -> Result<TruncatedMoments> {
    let m = truncated_normal_moments_unchecked(mu, var, lo, hi)?;
    if m.log_z < LOG_Z_FLOOR {
        return Err(Error::TailDegenerate(m));
    }
    Ok(m)
}

/// As [`truncated_normal_moments`] but never signals tail degeneracy.
pub fn truncated_normal_moments_unchecked(
    mu: f64,
    var: f64,
    lo: Bound,
    hi: Bound,
) -> Result<TruncatedMoments> {
    if !(var > 0.0) || !var.is_finite() || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "truncated normal needs finite mu and var > 0 (mu={mu}, var={var})"
        )));
    }
    if let (Bound::At(l), Bound::At(h)) = (lo, hi) {
        if !(l < h) {
            return Err(Error::InvalidParameter(format!("empty interval [{l}, {h}]")));
        }
    }
    let sigma = var.sqrt();
    let a = lo.standardize(mu, sigma);
    let b = hi.standardize(mu, sigma);
    let std = standardized(a, b);
    let mut mean = mu + sigma * std.mean;
    if let Bound::At(l) = lo {
        mean = mean.max(l);
    }
    if let Bound::At(h) = hi {
        mean = mean.min(h);
    }
    Ok(TruncatedMoments {
        log_z: std.log_z,
        mean,
        variance: var * std.variance,
    })
}

/// Moments of the standard normal truncated to [a, b]; `None` is infinite.
fn standardized(a: Option<f64>, b: Option<f64>) -> TruncatedMoments {
    match (a, b) {
        (None, None) => TruncatedMoments {
            log_z: 0.0,
            mean: 0.0,
            variance: 1.0,
        },
        (Some(a), Some(b)) if b - a <= NARROW_WIDTH && (0.5 * (a + b)).abs() * (b - a) <= NARROW_SKEW => {
            narrow(a, b)
        }
        (Some(a), None) => {
            // Reflect so the tail is on the left: moments of [−∞, −a], negate mean.
            let m = one_sided_upper(-a);
            TruncatedMoments {
                log_z: m.log_z,
                mean: -m.mean,
                variance: m.variance,
            }
        }
        (None, Some(b)) => one_sided_upper(b),
        (Some(a), Some(b)) => {
            if a >= 0.0 {
                let m = two_sided(-b, -a);
                TruncatedMoments {
                    log_z: m.log_z,
                    mean: -m.mean,
                    variance: m.variance,
                }
            } else {
                two_sided(a, b)
            }
        }
    }
}

/// Standard normal truncated to (−∞, b].
fn one_sided_upper(b: f64) -> TruncatedMoments {
    let log_z = std_normal_logcdf(b);
    let rb = (std_normal_logpdf(b) - log_z).exp();
    let mean = -rb;
    // 1 − b·r_b − r_b² written as 1 − (b − mean)·r_b
    let variance = clamp_variance(1.0 - (b - mean) * rb);
    TruncatedMoments {
        log_z,
        mean: mean.min(b),
        variance,
    }
}

/// Standard normal truncated to [a, b] with a < 0 (so the interval reaches
/// into the left half or straddles zero).
fn two_sided(a: f64, b: f64) -> TruncatedMoments {
    let log_z = if b <= 0.0 {
        let lb = std_normal_logcdf(b);
        let la = std_normal_logcdf(a);
        lb + (-(la - lb).exp()).ln_1p()
    } else {
        // Φ(b) − Φ(a) = 1 − Φ(a) − Φ(−b)
        let tails = std_normal_logcdf(a).exp() + std_normal_logcdf(-b).exp();
        (-tails).ln_1p()
    };
    let ra = (std_normal_logpdf(a) - log_z).exp();
    let rb = (std_normal_logpdf(b) - log_z).exp();
    let mean = ra - rb;
    let variance = clamp_variance(1.0 + (a - mean) * ra - (b - mean) * rb);
    TruncatedMoments {
        log_z,
        mean: mean.clamp(a, b),
        variance,
    }
}

/// Short interval: integrate exp(−z²/2) on [a, b] by quadrature in the
/// offset t = z − c from the midpoint c, which keeps the variance free of
/// cancellation.
fn narrow(a: f64, b: f64) -> TruncatedMoments {
    let rule = gauss_legendre(NARROW_NODES);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let t = h * x;
        let f = w * (-c * t - 0.5 * t * t).exp();
        i0 += f;
        i1 += f * t;
        i2 += f * t * t;
    }
    let m1 = i1 / i0;
    let log_z = -0.5 * c * c - LN_SQRT_2PI + (h * i0).ln();
    TruncatedMoments {
        log_z,
        mean: (c + m1).clamp(a, b),
        variance: clamp_variance(i2 / i0 - m1 * m1),
    }
}

fn clamp_variance(v: f64) -> f64 {
    if v.is_finite() {
        v.clamp(f64::MIN_POSITIVE, 1.0)
    } else {
        f64::MIN_POSITIVE
    }
}
