//! Scalar special functions: digamma, log-gamma, the scaled complementary
//! error function and standard normal log-densities.

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(√(2π))`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

const DIGAMMA_RECURRENCE_THRESHOLD: f64 = 6.0;

/// Digamma function ψ(x) for x > 0.
///
/// Shifts the argument up to `x ≥ 6` with ψ(x) = ψ(x+1) − 1/x, then applies
/// the asymptotic series truncated after the x⁻¹⁴ term.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires finite x > 0, got {x}")));
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < DIGAMMA_RECURRENCE_THRESHOLD {
        shift += 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_2n / (2n x^2n), n = 1..7, Horner in 1/x².
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    Ok(x.ln() - 0.5 * inv - series - shift)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("ln_gamma requires finite x > 0, got {x}")));
    }
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx).
        let s = (std::f64::consts::PI * x).sin();
        return Ok(std::f64::consts::PI.ln() - s.ln() - ln_gamma(1.0 - x)?);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    Ok(LN_SQRT_2PI + (z + 0.5) * t.ln() - t + acc.ln())
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> Result<f64> {
    Ok(ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)?)
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
///
/// Accurate in relative terms for every x ≥ −26; for x > 26 it switches to
/// the asymptotic expansion so the tail never underflows.
pub fn erfcx(x: f64) -> f64 {
    if x < 26.0 {
        // x² split exactly into hi + lo so exp(x²) keeps full relative precision.
        let hi = x * x;
        let lo = x.mul_add(x, -hi);
        libm::erfc(x) * hi.exp() * lo.exp()
    } else {
        let inv2 = 1.0 / (2.0 * x * x);
        // 1 − 1/(2x²) + 3/(2x²)² − 15/(2x²)³ + ...
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..10 {
            term *= -((2 * n - 1) as f64) * inv2;
            sum += term;
        }
        FRAC_1_SQRT_PI / x * sum
    }
}

/// log of the standard normal density.
#[inline]
pub fn std_normal_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// log Φ(z), the log of the standard normal CDF.
///
/// Uses the scaled complementary error function in the left tail, so the
/// result stays finite far below z = −38.
pub fn std_normal_logcdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let t = -z * std::f64::consts::FRAC_1_SQRT_2;
    if z < -1.0 {
        // Φ(z) = ½·erfcx(t)·exp(−t²)
        (0.5 * erfcx(t)).ln() - 0.5 * z * z
    } else if z <= 0.0 {
        (0.5 * libm::erfc(t)).ln()
    } else {
        (-0.5 * libm::erfc(-t)).ln_1p()
    }
}

/// Φ(z).
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digamma_recurrence_step() {
        assert!((digamma(2.0).unwrap() - digamma(1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn digamma_one_is_minus_euler_gamma() {
        assert!((digamma(1.0).unwrap() + 0.577_215_664_901_532_9).abs() < 1e-12);
    }

    #[test]
    fn digamma_half_integer_closed_form() {
        // ψ(½) = −γ − 2 ln 2 is exact; walk up with ψ(x+1) = ψ(x) + 1/x.
        let mut oracle = -EULER_GAMMA - 2.0 * std::f64::consts::LN_2;
        for j in 0..10 {
            oracle += 1.0 / (j as f64 + 0.5);
        }
        assert!((digamma(10.5).unwrap() - oracle).abs() < 1e-12);
        assert!((digamma(0.5).unwrap() - (-EULER_GAMMA - 2.0 * std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn digamma_rejects_non_positive() {
        assert!(matches!(digamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(digamma(-1.5), Err(Error::Domain(_))));
        assert!(digamma(f64::NAN).is_err());
    }

    #[test]
    fn digamma_integers_match_harmonic_numbers() {
        // Kahan-summed harmonic numbers up to 10^6.
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        let checkpoints = [2usize, 3, 10, 57, 1000, 12_345, 1_000_000];
        let mut next = 0;
        for n in 2..=1_000_000usize {
            let y = 1.0 / (n - 1) as f64 - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            if n == checkpoints[next] {
                let oracle = -EULER_GAMMA + sum;
                let got = digamma(n as f64).unwrap();
                assert!((got - oracle).abs() < 1e-10, "n={n}: {got} vs {oracle}");
                next += 1;
            }
        }
        assert_eq!(next, checkpoints.len());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(ln_gamma(2.0).unwrap().abs() < 1e-14);
        assert!((ln_gamma(0.5).unwrap() - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        // ln(9!) = ln 362880
        assert!((ln_gamma(10.0).unwrap() - 362_880f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.1).unwrap() - 2.252_712_651_734_206).abs() < 1e-12);
    }

    /// log Φ(−z) from the asymptotic (Mills ratio) expansion; valid for large z.
    fn logcdf_asymptotic(z: f64) -> f64 {
        let inv2 = 1.0 / (z * z);
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..25 {
            term *= -((2 * n - 1) as f64) * inv2;
            sum += term;
        }
        -0.5 * z * z - z.ln() - LN_SQRT_2PI + sum.ln()
    }

    #[test]
    fn logcdf_reference_points() {
        assert!((std_normal_logcdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        let oracle = logcdf_asymptotic(10.0);
        assert!((oracle + 53.231_285_150_8).abs() < 1e-9);
        assert!(((std_normal_logcdf(-10.0) - oracle) / oracle).abs() < 1e-12);
        for z in [-38.0, -30.0, -27.5, -20.0] {
            let o = logcdf_asymptotic(-z);
            let got = std_normal_logcdf(z);
            assert!(((got - o) / o).abs() < 1e-12, "z={z}: {got} vs {o}");
        }
        let upper = std_normal_logcdf(8.0);
        // Q(8) = ½ erfc(8/√2) = 6.220960574271785e-16
        assert!(((upper + 6.220_960_574_271_785e-16) / 6.220_960_574_271_785e-16).abs() < 1e-12);
    }

    #[test]
    fn logcdf_complement_sums_to_one() {
        let mut z = -6.0;
        while z <= 6.0 {
            let s = std_normal_logcdf(z).exp() + std_normal_logcdf(-z).exp();
            assert!((s - 1.0).abs() < 1e-12, "z={z}: {s}");
            z += 0.01;
        }
    }

    #[test]
    fn logcdf_is_finite_deep_in_the_tail() {
        assert!(std_normal_logcdf(-38.0).is_finite());
        assert!(std_normal_logcdf(-200.0).is_finite());
        assert!(std_normal_logcdf(-200.0) < std_normal_logcdf(-199.0));
    }

    #[test]
    fn erfcx_is_continuous_at_switch() {
        let below = erfcx(26.0 - 1e-12);
        let above = erfcx(26.0);
        assert!(((below - above) / above).abs() < 1e-13);
    }
}
