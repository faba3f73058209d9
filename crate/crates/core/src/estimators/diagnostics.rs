//! Self-checks of the estimator ingredients against independent oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{kl_mass_bounds, probability_mass_quadrature, psi_term};
use crate::distributions::{analytic_pdf_and_hessian, DistributionSpec};
use crate::epmgp::{gaussian_box_logmass_with, AxisAlignedBox, EpConfig, GaussianModel};
use crate::error::Result;
use crate::knn::NeighborTable;
use crate::numerics::{truncated_normal_moments_unchecked, Bound, SpdMatrix};
use crate::par::{map_indexed, Execution};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Ensemble mean of (1/N) Σ log P_i with exact masses P_i of the k-th
/// neighbour boxes under a 1-D standard normal, against ψ(k) − ψ(N).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityCheck {
    pub k: usize,
    pub n: usize,
    pub replicates: usize,
    pub mean: f64,
    pub std_error: f64,
    pub target: f64,
}

impl IdentityCheck {
    pub fn z_score(&self) -> f64 {
        (self.mean - self.target) / self.std_error
    }

    pub fn passed(&self) -> bool {
        self.z_score().abs() <= 3.0
    }
}

pub fn digamma_identity_check(
    k: usize,
    n: usize,
    replicates: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<IdentityCheck> {
    let spec = DistributionSpec::Gaussian {
        mean: vec![0.0],
        cov: vec![vec![1.0]],
    };
    let means = map_indexed(exec, replicates, |r| -> Result<f64> {
        let s = spec.sample(n, base_seed.wrapping_add(r as u64))?;
        let table = NeighborTable::build(&s, k, Execution::Sequential)?;
        let mut total = 0.0;
        for i in 0..n {
            let (x, eps) = (s.row(i)[0], table.kth_distance(i, k));
            total += truncated_normal_moments_unchecked(0.0, 1.0, Bound::At(x - eps), Bound::At(x + eps))?.log_z;
        }
        Ok(total / n as f64)
    });
    let means = means.into_iter().collect::<Result<Vec<f64>>>()?;
    let r = replicates as f64;
    let mean = means.iter().sum::<f64>() / r;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1.0);
    Ok(IdentityCheck {
        k,
        n,
        replicates,
        mean,
        std_error: (var / r).sqrt(),
        target: -psi_term(n, k)?,
    })
}

/// Largest |EP − exact| log-mass over random diagonal Gaussians and boxes
/// with d ≤ `max_dim`.
pub fn ep_diagonal_max_error(cases: usize, max_dim: usize, seed: u64, ep: &EpConfig) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = rng.gen_range(1..=max_dim);
        let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let var: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..3.0)).collect();
        let center: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let eps = rng.gen_range(0.05..2.0);
        let g = GaussianModel::new(mean.clone(), SpdMatrix::diagonal(&var)?)?;
        let b = AxisAlignedBox::new(center.clone(), eps)?;
        let ep_val = gaussian_box_logmass_with(&g, &b, ep)?.log_mass;
        let mut exact = 0.0;
        for j in 0..d {
            let (lo, hi) = (Bound::At(center[j] - eps), Bound::At(center[j] + eps));
            exact += truncated_normal_moments_unchecked(mean[j], var[j], lo, hi)?.log_z;
        }
        worst = worst.max((ep_val - exact).abs());
    }
    Ok(worst)
}

/// Correlated 2-D Gaussians with boxes of varied position and size.
pub fn correlated_pair_cases() -> Vec<(GaussianModel, AxisAlignedBox)> {
    let mut out = Vec::new();
    for &(r, s1, s2) in &[(0.5, 1.0, 1.0), (-0.3, 1.5, 0.7), (0.8, 1.0, 2.0), (0.2, 0.5, 0.5)] {
        let cov = SpdMatrix::new(2, vec![s1 * s1, r * s1 * s2, r * s1 * s2, s2 * s2]).expect("symmetric");
        let g = GaussianModel::new(vec![0.0, 0.0], cov).expect("positive definite");
        for &(c, eps) in &[([0.0, 0.0], 1.0), ([0.5, -0.3], 0.4), ([1.0, 1.0], 0.8)] {
            out.push((g.clone(), AxisAlignedBox::new(c.to_vec(), eps).expect("positive width")));
        }
    }
    out
}

/// Largest |EP − quadrature| log-mass over [`correlated_pair_cases`].
pub fn ep_quadrature_max_error(ep: &EpConfig) -> Result<f64> {
    let mut worst = 0.0f64;
    for (g, b) in correlated_pair_cases() {
        let ep_val = gaussian_box_logmass_with(&g, &b, ep)?.log_mass;
        let norm = g.log_normalizer()?;
        let q = probability_mass_quadrature(|x| (g.log_kernel(x).unwrap_or(f64::NEG_INFINITY) - norm).exp(), &b)?;
        worst = worst.max((ep_val - q.ln()).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BracketCheck {
    pub x: f64,
    pub eps: f64,
    /// |P − p(x)·2ε| from quadrature.
    pub error: f64,
    pub lower: f64,
    pub upper: f64,
    /// The Hessian keeps one sign over the whole box.
    pub definite: bool,
}

impl BracketCheck {
    pub fn passed(&self) -> bool {
        self.definite && self.lower <= self.error && self.error <= self.upper
    }
}

/// Brackets the KL mass error of a 1-D standard normal at `x` for ball
/// half-width `eps`. The bounds use the smallest and largest |p''| over the
/// box, found on a grid including the endpoints and the centre.
pub fn kl_bound_bracket(x: f64, eps: f64) -> Result<BracketCheck> {
    let spec = DistributionSpec::Gaussian {
        mean: vec![0.0],
        cov: vec![vec![1.0]],
    };
    let b = AxisAlignedBox::new(vec![x], eps)?;
    let pdf = |v: &[f64]| spec.log_pdf(v).map(f64::exp).unwrap_or(0.0);
    let p = probability_mass_quadrature(pdf, &b)?;
    let p_kl = pdf(&[x]) * 2.0 * eps;
    const GRID: usize = 200;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=GRID {
        let t = x - eps + 2.0 * eps * i as f64 / GRID as f64;
        let h = analytic_pdf_and_hessian(&spec, &[t])?;
        lo = lo.min(h.lambda_min);
        hi = hi.max(h.lambda_max);
    }
    let definite = lo > 0.0 || hi < 0.0;
    let (small, large) = if hi < 0.0 { (hi, lo) } else { (lo, hi) };
    let (lower, upper) = kl_mass_bounds(small, large, eps, 1);
    Ok(BracketCheck {
        x,
        eps,
        error: (p - p_kl).abs(),
        lower,
        upper,
        definite,
    })
}

/// Options for [`run_diagnostics`].
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsOptions {
    pub ep: EpConfig,
    pub seed: u64,
    pub identity_replicates: usize,
    pub execution: Execution,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            ep: EpConfig::default(),
            seed: 1,
            identity_replicates: 500,
            execution: Execution::default(),
        }
    }
}

/// The full self-check suite: digamma identity, EP diagonal exactness, EP
/// against quadrature, and the KL mass error bracket.
pub fn run_diagnostics(opts: &DiagnosticsOptions) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for k in [1, 3, 5] {
        let c = digamma_identity_check(k, 200, opts.identity_replicates, opts.seed, opts.execution)?;
        out.push(CheckResult {
            name: format!("digamma identity k={k} N=200"),
            passed: c.passed(),
            detail: format!(
                "mean log P = {:.6}, ψ(k)−ψ(N) = {:.6}, z = {:.2}",
                c.mean,
                c.target,
                c.z_score()
            ),
        });
    }
    let diag = ep_diagonal_max_error(200, 20, opts.seed, &opts.ep)?;
    out.push(CheckResult {
        name: "EP diagonal exactness".into(),
        passed: diag <= 1e-10,
        detail: format!("max |error| = {diag:.3e} (limit 1e-10)"),
    });
    let corr = ep_quadrature_max_error(&opts.ep)?;
    out.push(CheckResult {
        name: "EP vs quadrature (correlated 2-D)".into(),
        passed: corr <= 1e-3,
        detail: format!("max |error| = {corr:.3e} (limit 1e-3)"),
    });
    for x in [0.0, 2.0] {
        for eps in [0.05, 0.1, 0.2] {
            let c = kl_bound_bracket(x, eps)?;
            out.push(CheckResult {
                name: format!("KL mass bracket x={x} ε={eps}"),
                passed: c.passed(),
                detail: format!("{:.4e} ≤ {:.4e} ≤ {:.4e}", c.lower, c.error, c.upper),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_holds_at_mode_and_tail() {
        for x in [0.0, 2.0] {
            for eps in [0.05, 0.1, 0.2] {
                let c = kl_bound_bracket(x, eps).unwrap();
                assert!(c.passed(), "{c:?}");
            }
        }
    }

    #[test]
    fn bracket_not_definite_across_inflection() {
        let c = kl_bound_bracket(1.0, 0.2).unwrap();
        assert!(!c.definite && !c.passed());
    }

    #[test]
    fn ep_checks_pass_at_defaults() {
        let ep = EpConfig::default();
        assert!(ep_diagonal_max_error(50, 8, 3, &ep).unwrap() <= 1e-10);
        assert!(ep_quadrature_max_error(&ep).unwrap() <= 1e-3);
    }

    #[test]
    fn loose_ep_tolerance_breaks_only_the_correlated_check() {
        let ep = EpConfig {
            tol: 1.0,
            ..EpConfig::default()
        };
        assert!(ep_diagonal_max_error(50, 8, 3, &ep).unwrap() <= 1e-10);
        assert!(ep_quadrature_max_error(&ep).unwrap() > 1e-3);
    }

    #[test]
    fn identity_check_small() {
        let c = digamma_identity_check(3, 200, 100, 9, Execution::Sequential).unwrap();
        assert!(c.passed(), "{c:?}");
    }
}
