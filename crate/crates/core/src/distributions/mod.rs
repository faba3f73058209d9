//! Test distributions: seeded samplers, closed-form entropies and
//! density/Hessian oracles.

pub mod sampler;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::SampleSet;
use crate::numerics::eigen::symmetric_eigenvalues;
use crate::numerics::special::LN_2PI;
use crate::numerics::{digamma, ln_beta, ln_gamma, SpdMatrix};
use sampler::NormalSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    GammaProduct { shape: Vec<f64>, scale: Vec<f64> },
    BetaProduct { alpha: Vec<f64>, beta: Vec<f64> },
    /// Columns `[x, y_1, …, y_m]` with `y_i = t_i·x + ν_i`, x ~ N(0, 1),
    /// ν_i ~ N(0, noise_var).
    LinearManifold { times: Vec<f64>, noise_var: f64 },
}

fn ramp(lo: f64, hi: f64, d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![lo];
    }
    (0..d).map(|i| lo + (hi - lo) * i as f64 / (d - 1) as f64).collect()
}

impl DistributionSpec {
    /// Independent zero-mean Gaussian with variances 1.8(i−1)/(d−1) + 0.2.
    pub fn gaussian_ramp(d: usize) -> Self {
        let var = ramp(0.2, 2.0, d);
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { var[i] } else { 0.0 }).collect())
            .collect();
        Self::Gaussian {
            mean: vec![0.0; d],
            cov,
        }
    }

    /// Shapes ramp over [0.5, 5], scales over [1, 2].
    pub fn gamma_ramp(d: usize) -> Self {
        Self::GammaProduct {
            shape: ramp(0.5, 5.0, d),
            scale: ramp(1.0, 2.0, d),
        }
    }

    /// α ascends over [0.5, 5] while β descends over [5, 0.5].
    pub fn beta_ramp(d: usize) -> Self {
        Self::BetaProduct {
            alpha: ramp(0.5, 5.0, d),
            beta: ramp(5.0, 0.5, d),
        }
    }

    /// Zero-mean bivariate normal with unit variances and correlation `r`.
    pub fn correlated_pair(r: f64) -> Self {
        Self::Gaussian {
            mean: vec![0.0, 0.0],
            cov: vec![vec![1.0, r], vec![r, 1.0]],
        }
    }

    /// Observation times 1…m.
    pub fn linear_manifold(m: usize, noise_var: f64) -> Self {
        Self::LinearManifold {
            times: (1..=m).map(|t| t as f64).collect(),
            noise_var,
        }
    }

    /// The three distributions of the parameter-grid study: a correlated
    /// 2-D normal, a 3-D Gamma product and a 4-D Beta product.
    pub fn grid_study_set() -> Vec<Self> {
        vec![
            Self::correlated_pair(0.5),
            Self::GammaProduct {
                shape: vec![1.5, 3.0, 20.0],
                scale: vec![2.0, 2.5, 1.0],
            },
            Self::BetaProduct {
                alpha: vec![2.0, 2.0, 0.5, 5.0],
                beta: vec![2.0, 5.0, 0.5, 1.0],
            },
        ]
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::GammaProduct { .. } => "gamma",
            Self::BetaProduct { .. } => "beta",
            Self::LinearManifold { .. } => "manifold",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::GammaProduct { shape, .. } => shape.len(),
            Self::BetaProduct { alpha, .. } => alpha.len(),
            Self::LinearManifold { times, .. } => times.len() + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            match v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                Some(bad) => Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {bad}"))),
                None => Ok(()),
            }
        };
        let same_len = |a: &[f64], b: &[f64]| -> Result<()> {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    expected: a.len(),
                    got: b.len(),
                });
            }
            Ok(())
        };
        if self.dim() == 0 {
            return Err(Error::InvalidParameter("distribution dimension must be positive".into()));
        }
        match self {
            Self::Gaussian { mean, .. } => {
                if mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite mean".into()));
                }
                self.gaussian_cov()?.factorize()
            }
            Self::GammaProduct { shape, scale } => {
                same_len(shape, scale)?;
                positive("gamma shape", shape)?;
                positive("gamma scale", scale)
            }
            Self::BetaProduct { alpha, beta } => {
                same_len(alpha, beta)?;
                positive("beta alpha", alpha)?;
                positive("beta beta", beta)
            }
            Self::LinearManifold { times, noise_var } => {
                if times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite observation time".into()));
                }
                positive("noise variance", &[*noise_var])
            }
        }
    }

    fn gaussian_cov(&self) -> Result<SpdMatrix> {
        let Self::Gaussian { mean, cov } = self else {
            unreachable!("only called for Gaussian specs")
        };
        let d = mean.len();
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.len(),
            });
        }
        SpdMatrix::new(d, cov.iter().flatten().copied().collect())
    }

    /// Draws `n` rows deterministically from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        self.validate()?;
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 samples, got {n}")));
        }
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normals = NormalSource::default();
        let mut data = Vec::with_capacity(n * d);
        match self {
            Self::Gaussian { mean, .. } => {
                let cov = self.gaussian_cov()?.factorized()?;
                let l = cov.factor()?;
                let mut z = vec![0.0; d];
                for _ in 0..n {
                    z.iter_mut().for_each(|v| *v = normals.sample(&mut rng));
                    for i in 0..d {
                        let lz: f64 = l[i * d..i * d + i + 1].iter().zip(&z).map(|(a, b)| a * b).sum();
                        data.push(mean[i] + lz);
                    }
                }
            }
            Self::GammaProduct { shape, scale } => {
                for _ in 0..n {
                    for (k, th) in shape.iter().zip(scale) {
                        data.push(th * sampler::gamma(&mut rng, &mut normals, *k));
                    }
                }
            }
            Self::BetaProduct { alpha, beta } => {
                for _ in 0..n {
                    for (a, b) in alpha.iter().zip(beta) {
                        data.push(sampler::beta(&mut rng, &mut normals, *a, *b));
                    }
                }
            }
            Self::LinearManifold { times, noise_var } => {
                let sd = noise_var.sqrt();
                for _ in 0..n {
                    let x = normals.sample(&mut rng);
                    data.push(x);
                    for t in times {
                        data.push(t * x + sd * normals.sample(&mut rng));
                    }
                }
            }
        }
        SampleSet::from_flat(d, data)
    }

    /// Closed-form differential entropy in nats.
    pub fn analytic_entropy(&self) -> Result<f64> {
        self.validate()?;
        let d = self.dim() as f64;
        Ok(match self {
            Self::Gaussian { .. } => 0.5 * (d * (LN_2PI + 1.0) + self.gaussian_cov()?.factorized()?.logdet()?),
            Self::GammaProduct { shape, scale } => {
                let mut h = 0.0;
                for (&k, &th) in shape.iter().zip(scale) {
                    h += k + th.ln() + ln_gamma(k)? + (1.0 - k) * digamma(k)?;
                }
                h
            }
            Self::BetaProduct { alpha, beta } => {
                let mut h = 0.0;
                for (&a, &b) in alpha.iter().zip(beta) {
                    let psi_ab = digamma(a + b)?;
                    h += ln_beta(a, b)? - (a - 1.0) * (digamma(a)? - psi_ab) - (b - 1.0) * (digamma(b)? - psi_ab);
                }
                h
            }
            // The joint covariance [[1, tᵀ], [t, ttᵀ + σ²I]] has determinant σ^{2m}.
            Self::LinearManifold { times, noise_var } => {
                let m = times.len() as f64;
                0.5 * (d * (LN_2PI + 1.0) + m * noise_var.ln())
            }
        })
    }

    /// log density at `x`; −∞ outside the support.
    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        self.validate()?;
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            Self::Gaussian { mean, .. } => {
                let cov = self.gaussian_cov()?.factorized()?;
                let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
                -0.5 * (x.len() as f64 * LN_2PI + cov.logdet()? + cov.inv_quad_form(&diff)?)
            }
            Self::GammaProduct { shape, scale } => {
                let mut lp = 0.0;
                for ((&v, &k), &th) in x.iter().zip(shape).zip(scale) {
                    if v <= 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    lp += (k - 1.0) * v.ln() - v / th - ln_gamma(k)? - k * th.ln();
                }
                lp
            }
            Self::BetaProduct { alpha, beta } => {
                let mut lp = 0.0;
                for ((&v, &a), &b) in x.iter().zip(alpha).zip(beta) {
                    if v <= 0.0 || v >= 1.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    lp += (a - 1.0) * v.ln() + (b - 1.0) * (-v).ln_1p() - ln_beta(a, b)?;
                }
                lp
            }
            Self::LinearManifold { times, noise_var } => {
                let x0 = x[0];
                let mut lp = -0.5 * (LN_2PI + x0 * x0);
                for (t, y) in times.iter().zip(&x[1..]) {
                    let r = y - t * x0;
                    lp += -0.5 * (LN_2PI + noise_var.ln() + r * r / noise_var);
                }
                lp
            }
        })
    }

    /// Distance from `x` to the edge of the support along any coordinate.
    fn support_margin(&self, x: &[f64]) -> f64 {
        match self {
            Self::GammaProduct { .. } => x.iter().fold(f64::INFINITY, |m, &v| m.min(v)),
            Self::BetaProduct { .. } => x.iter().fold(f64::INFINITY, |m, &v| m.min(v).min(1.0 - v)),
            _ => f64::INFINITY,
        }
    }
}

/// Density at a point and the extreme eigenvalues of its Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdfHessian {
    pub density: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

const MAX_HESSIAN_DIM: usize = 3;

/// Exact density and Hessian eigen-extremes at an interior point. The
/// Gaussian Hessian is analytic; product families use finite differences.
pub fn analytic_pdf_and_hessian(spec: &DistributionSpec, x: &[f64]) -> Result<PdfHessian> {
    let d = spec.dim();
    if d > MAX_HESSIAN_DIM {
        return Err(Error::Unsupported(format!("Hessian oracle limited to d ≤ {MAX_HESSIAN_DIM}, got {d}")));
    }
    let log_p = spec.log_pdf(x)?;
    let margin = spec.support_margin(x);
    if !(margin > 0.0) || log_p == f64::NEG_INFINITY {
        return Err(Error::Domain(format!("{x:?} is not interior to the support")));
    }
    let density = log_p.exp();
    let hessian = match spec {
        DistributionSpec::Gaussian { mean, .. } => {
            let cov = spec.gaussian_cov()?.factorized()?;
            let inv = cov.inverse()?;
            let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
            let w = cov.solve(&diff)?;
            let mut h = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] = density * (w[i] * w[j] - inv.get(i, j));
                }
            }
            h
        }
        DistributionSpec::LinearManifold { .. } => {
            return Err(Error::Unsupported("Hessian oracle not provided for the linear manifold".into()));
        }
        _ => {
            let h = (0.25 * margin).min(1e-3);
            finite_difference_hessian(|p| spec.log_pdf(p).map(f64::exp).unwrap_or(f64::NAN), x, h)
        }
    };
    let eig = symmetric_eigenvalues(&hessian, d);
    Ok(PdfHessian {
        density,
        lambda_min: eig[0],
        lambda_max: eig[d - 1],
    })
}

/// Central-difference Hessian with one Richardson step (h and h/2),
/// symmetrized, row-major.
pub fn finite_difference_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let mut p = x.to_vec();
    let mut eval = |shifts: &[(usize, f64)]| -> f64 {
        p.copy_from_slice(x);
        for &(i, s) in shifts {
            p[i] += s;
        }
        f(&p)
    };
    let f0 = f(x);
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        let second = |eval: &mut dyn FnMut(&[(usize, f64)]) -> f64, h: f64| {
            (eval(&[(i, h)]) - 2.0 * f0 + eval(&[(i, -h)])) / (h * h)
        };
        let (a, b) = (second(&mut eval, h), second(&mut eval, 0.5 * h));
        out[i * d + i] = (4.0 * b - a) / 3.0;
        for j in 0..i {
            let mixed = |eval: &mut dyn FnMut(&[(usize, f64)]) -> f64, h: f64| {
                (eval(&[(i, h), (j, h)]) - eval(&[(i, h), (j, -h)]) - eval(&[(i, -h), (j, h)])
                    + eval(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h)
            };
            let (a, b) = (mixed(&mut eval, h), mixed(&mut eval, 0.5 * h));
            let v = (4.0 * b - a) / 3.0;
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2PI_E: f64 = LN_2PI + 1.0;

    #[test]
    fn entropy_closed_forms() {
        let g1 = DistributionSpec::Gaussian {
            mean: vec![0.0],
            cov: vec![vec![1.0]],
        };
        assert!((g1.analytic_entropy().unwrap() - 1.418_938_533_204_672_7).abs() < 1e-14);
        let uniform = DistributionSpec::BetaProduct {
            alpha: vec![1.0],
            beta: vec![1.0],
        };
        assert!(uniform.analytic_entropy().unwrap().abs() < 1e-14);
        let pair = DistributionSpec::correlated_pair(0.5);
        let expect = LN_2PI_E + 0.5 * 0.75f64.ln();
        assert!((pair.analytic_entropy().unwrap() - expect).abs() < 1e-13);
        assert!((expect - 2.6940).abs() < 1e-4);
        let man = DistributionSpec::linear_manifold(2, 1e-3);
        let expect = 1.5 * LN_2PI_E + 2.0 * 1e-3f64.sqrt().ln();
        assert!((man.analytic_entropy().unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn manifold_entropy_matches_dense_covariance() {
        let m = 4;
        let s2 = 0.1;
        let t: Vec<f64> = (1..=m).map(|v| v as f64).collect();
        let d = m + 1;
        let cov = SpdMatrix::from_lower_fn(d, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (i, 0) => t[i - 1],
            (i, j) => t[i - 1] * t[j - 1] + if i == j { s2 } else { 0.0 },
        })
        .unwrap()
        .factorized()
        .unwrap();
        let dense = 0.5 * (d as f64 * LN_2PI_E + cov.logdet().unwrap());
        let closed = DistributionSpec::linear_manifold(m, s2).analytic_entropy().unwrap();
        assert!((dense - closed).abs() < 1e-10);
    }

    #[test]
    fn gamma_and_beta_entropy_by_quadrature() {
        // −∫ p log p over a fine midpoint grid.
        let check = |spec: DistributionSpec, lo: f64, hi: f64| {
            let n = 2_000_000;
            let h = (hi - lo) / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let x = lo + (i as f64 + 0.5) * h;
                let lp = spec.log_pdf(&[x]).unwrap();
                if lp.is_finite() {
                    acc -= lp.exp() * lp * h;
                }
            }
            let closed = spec.analytic_entropy().unwrap();
            assert!((acc - closed).abs() < 1e-4, "{spec:?}: {acc} vs {closed}");
        };
        check(
            DistributionSpec::GammaProduct {
                shape: vec![3.0],
                scale: vec![2.0],
            },
            0.0,
            120.0,
        );
        check(
            DistributionSpec::BetaProduct {
                alpha: vec![2.0],
                beta: vec![5.0],
            },
            0.0,
            1.0,
        );
    }

    #[test]
    fn ramps() {
        let DistributionSpec::Gaussian { cov, .. } = DistributionSpec::gaussian_ramp(10) else {
            unreachable!()
        };
        assert!((cov[0][0] - 0.2).abs() < 1e-15 && (cov[9][9] - 2.0).abs() < 1e-15);
        assert!((cov[1][1] - 0.4).abs() < 1e-15);
        let DistributionSpec::BetaProduct { alpha, beta } = DistributionSpec::beta_ramp(4) else {
            unreachable!()
        };
        assert_eq!(alpha, vec![0.5, 2.0, 3.5, 5.0]);
        assert_eq!(beta, vec![5.0, 3.5, 2.0, 0.5]);
        assert_eq!(DistributionSpec::gamma_ramp(1).dim(), 1);
    }

    #[test]
    fn sampler_is_deterministic() {
        for spec in DistributionSpec::grid_study_set() {
            let a = spec.sample(100, 42).unwrap();
            let b = spec.sample(100, 42).unwrap();
            assert_eq!(a.data(), b.data());
            assert_ne!(a.data(), spec.sample(100, 43).unwrap().data());
        }
    }

    #[test]
    fn gaussian_sample_moments() {
        let spec = DistributionSpec::Gaussian {
            mean: vec![0.0],
            cov: vec![vec![1.0]],
        };
        let n = 100_000;
        let s = spec.sample(n, 9).unwrap();
        let m = s.data().iter().sum::<f64>() / n as f64;
        let v = s.data().iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(m.abs() < 4.0 / (n as f64).sqrt());
        assert!((v - 1.0).abs() < 0.05);
    }

    #[test]
    fn gamma_sample_mean() {
        let spec = DistributionSpec::GammaProduct {
            shape: vec![3.0],
            scale: vec![2.0],
        };
        let n = 100_000;
        let s = spec.sample(n, 4).unwrap();
        let m = s.data().iter().sum::<f64>() / n as f64;
        // Var = kθ² = 12
        assert!((m - 6.0).abs() < 3.0 * (12.0 / n as f64).sqrt());
    }

    #[test]
    fn correlated_gaussian_sample_covariance() {
        let spec = DistributionSpec::correlated_pair(0.5);
        let n = 200_000;
        let s = spec.sample(n, 8).unwrap();
        let c: f64 = s.rows().map(|r| r[0] * r[1]).sum::<f64>() / n as f64;
        assert!((c - 0.5).abs() < 4.0 * (1.25 / n as f64).sqrt());
    }

    #[test]
    fn manifold_columns() {
        let spec = DistributionSpec::linear_manifold(3, 1e-3);
        let s = spec.sample(1000, 1).unwrap();
        assert_eq!(s.d(), 4);
        for r in s.rows() {
            for (t, y) in r[1..].iter().enumerate() {
                assert!((y - (t + 1) as f64 * r[0]).abs() < 0.2);
            }
        }
    }

    #[test]
    fn plug_in_entropy_matches_closed_form() {
        // Mean of −log p over exact draws, per family, within 3 standard errors.
        let n = 1_000_000;
        let specs = vec![
            DistributionSpec::correlated_pair(0.5),
            DistributionSpec::gamma_ramp(3),
            DistributionSpec::beta_ramp(3),
            DistributionSpec::linear_manifold(3, 1e-1),
        ];
        for spec in specs {
            let s = spec.sample(n, 17).unwrap();
            let vals: Vec<f64> = s.rows().map(|r| -spec.log_pdf(r).unwrap()).collect();
            let m = vals.iter().sum::<f64>() / n as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (v / n as f64).sqrt();
            let h = spec.analytic_entropy().unwrap();
            assert!((m - h).abs() < 3.0 * se, "{}: {m} vs {h} (se {se})", spec.family_name());
        }
    }

    #[test]
    fn gaussian_hessian_identity() {
        let spec = DistributionSpec::Gaussian {
            mean: vec![0.0],
            cov: vec![vec![1.0]],
        };
        let at0 = analytic_pdf_and_hessian(&spec, &[0.0]).unwrap();
        assert!((at0.density - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((at0.lambda_max + at0.density).abs() < 1e-15);
        let at2 = analytic_pdf_and_hessian(&spec, &[2.0]).unwrap();
        assert!((at2.lambda_min - 3.0 * at2.density).abs() < 1e-15);
        assert!(at2.lambda_min > 0.0);
    }

    #[test]
    fn uniform_hessian_vanishes() {
        let spec = DistributionSpec::BetaProduct {
            alpha: vec![1.0, 1.0],
            beta: vec![1.0, 1.0],
        };
        let r = analytic_pdf_and_hessian(&spec, &[0.3, 0.6]).unwrap();
        assert!((r.density - 1.0).abs() < 1e-14);
        assert!(r.lambda_min.abs() < 1e-8 && r.lambda_max.abs() < 1e-8);
        assert!(analytic_pdf_and_hessian(&spec, &[0.0, 0.5]).is_err());
        assert!(analytic_pdf_and_hessian(&spec, &[0.5, 1.2]).is_err());
    }

    #[test]
    fn finite_difference_matches_gaussian_hessian() {
        for spec in [
            DistributionSpec::Gaussian {
                mean: vec![0.0],
                cov: vec![vec![1.0]],
            },
            DistributionSpec::correlated_pair(0.5),
        ] {
            let d = spec.dim();
            let cov = spec.gaussian_cov().unwrap().factorized().unwrap();
            let inv = cov.inverse().unwrap();
            for i in 0..10 {
                let x: Vec<f64> = (0..d).map(|c| -2.25 + 0.5 * i as f64 + 0.1 * c as f64).collect();
                let p = spec.log_pdf(&x).unwrap().exp();
                let w = cov.solve(&x).unwrap();
                let fd = finite_difference_hessian(|q| spec.log_pdf(q).unwrap().exp(), &x, 1e-3);
                for a in 0..d {
                    for b in 0..d {
                        let exact = p * (w[a] * w[b] - inv.get(a, b));
                        let got = fd[a * d + b];
                        assert!((got - exact).abs() <= 1e-6 * exact.abs(), "x={x:?} ({a},{b}): {got} vs {exact}");
                    }
                }
            }
        }
    }

    #[test]
    fn gamma_hessian_matches_closed_form() {
        // p'' for Gamma(k, θ): p·[((k−1)/x − 1/θ)² − (k−1)/x²]
        let spec = DistributionSpec::GammaProduct {
            shape: vec![3.0],
            scale: vec![2.0],
        };
        for x in [0.5, 2.0, 4.0, 9.0] {
            let r = analytic_pdf_and_hessian(&spec, &[x]).unwrap();
            let a = 2.0 / x - 0.5;
            let exact = r.density * (a * a - 2.0 / (x * x));
            assert!((r.lambda_max - exact).abs() <= 1e-6 * exact.abs().max(r.density), "{x}");
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            DistributionSpec::GammaProduct {
                shape: vec![1.0, -1.0],
                scale: vec![1.0, 1.0],
            },
            DistributionSpec::BetaProduct {
                alpha: vec![1.0],
                beta: vec![1.0, 2.0],
            },
            DistributionSpec::Gaussian {
                mean: vec![0.0, 0.0],
                cov: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            },
            DistributionSpec::LinearManifold {
                times: vec![1.0],
                noise_var: 0.0,
            },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?}");
            assert!(spec.sample(10, 1).is_err());
        }
    }

    #[test]
    fn spec_round_trips_through_serde() {
        let spec = DistributionSpec::beta_ramp(3);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"family\":\"beta_product\""));
        assert_eq!(serde_json::from_str::<DistributionSpec>(&json).unwrap(), spec);
    }
}
