//! Nearest-neighbour entropy estimators.
//!
//! Both estimators start from the same identity: with ε_i the L∞ distance
//! from sample i to its k-th neighbour and P_i the probability mass of the
//! box of half-width ε_i around it, E[log P_i] = ψ(k) − ψ(N). Replacing
//! E[log P_i] by its sample mean and writing P_i in terms of the density at
//! x_i gives the estimate. The KL estimator takes P_i ≈ p(x_i)·(2ε_i)^d; the
//! kpN estimator takes P_i ≈ p(x_i)·G_i/g(x_i), where g is a unit-peak
//! Gaussian fitted to the p nearest neighbours and G_i its integral over the
//! box.

pub mod diagnostics;

use serde::{Deserialize, Serialize};

use crate::epmgp::{gaussian_box_logmass_with, AxisAlignedBox, EpConfig, GaussianModel};
use crate::error::{Error, Result};
use crate::knn::{NeighborTable, SampleSet};
use crate::numerics::gauss_legendre;
use crate::numerics::special::LN_2PI;
use crate::numerics::{digamma, SpdMatrix};
use crate::par::{map_indexed, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kl,
    Kpn,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kl => "KL",
            Method::Kpn => "kpN",
        }
    }
}

/// Which rows form the sample of `p` points the local Gaussian is fitted to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalFit {
    /// x_i itself plus its p−1 nearest neighbours.
    #[default]
    IncludeSelf,
    /// The p nearest neighbours of x_i, without x_i.
    ExcludeSelf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Neighbour order defining the ball radius.
    pub k: usize,
    /// Neighbours used to fit the local Gaussian.
    pub p: usize,
    pub jitter_start: f64,
    pub jitter_max: f64,
    pub local_fit: LocalFit,
    pub execution: Execution,
    pub ep: EpConfig,
}

impl EstimatorConfig {
    pub fn new(k: usize, p: usize) -> Self {
        Self {
            k,
            p,
            jitter_start: 1e-12,
            jitter_max: 1e-4,
            local_fit: LocalFit::default(),
            execution: Execution::default(),
            ep: EpConfig::default(),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > self.p || self.p >= n {
            return Err(Error::InvalidParameter(format!(
                "need 1 ≤ k ≤ p ≤ N−1, got k={}, p={}, N={n}",
                self.k, self.p
            )));
        }
        if self.p < 2 {
            return Err(Error::InvalidParameter("a local covariance needs p ≥ 2".into()));
        }
        if !(self.jitter_start > 0.0 && self.jitter_start <= self.jitter_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < jitter_start ≤ jitter_max, got {} and {}",
                self.jitter_start, self.jitter_max
            )));
        }
        Ok(())
    }
}

/// Estimate plus the terms it is the sum of. Terms that do not apply to a
/// method are zero, and `estimate` is exactly
/// `term_psi + mean_log_volume + mean_neg_log_g + mean_log_mass`
/// evaluated left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub method: Method,
    /// Entropy in nats.
    pub estimate: f64,
    /// ψ(N) − ψ(k).
    pub term_psi: f64,
    /// KL: d·ln 2 + (d/N) Σ ln ε_i.
    pub mean_log_volume: f64,
    /// kpN: −(1/N) Σ log g(x_i).
    pub mean_neg_log_g: f64,
    /// kpN: (1/N) Σ log G_i.
    pub mean_log_mass: f64,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub p: Option<usize>,
    pub ep_nonconverged: usize,
}

impl EntropyReport {
    pub fn terms_sum(&self) -> f64 {
        self.term_psi + self.mean_log_volume + self.mean_neg_log_g + self.mean_log_mass
    }
}

/// ψ(N) − ψ(k).
pub fn psi_term(n: usize, k: usize) -> Result<f64> {
    Ok(digamma(n as f64)? - digamma(k as f64)?)
}

fn check_duplicates(table: &NeighborTable, k: usize) -> Result<()> {
    let indices: Vec<usize> = (0..table.len()).filter(|&i| table.kth_distance(i, k) == 0.0).collect();
    if indices.is_empty() {
        Ok(())
    } else {
        Err(Error::DuplicateSamples { indices })
    }
}

fn check_table(s: &SampleSet, table: &NeighborTable, needed: usize) -> Result<()> {
    if table.len() != s.n() || table.m() < needed {
        return Err(Error::InvalidParameter(format!(
            "neighbour table holds {} rows × {} neighbours, need {} × {needed}",
            table.len(),
            table.m(),
            s.n()
        )));
    }
    Ok(())
}

/// Kozachenko–Leonenko estimate with L∞ balls.
pub fn estimate_kl(s: &SampleSet, k: usize) -> Result<EntropyReport> {
    estimate_kl_with(s, k, Execution::default())
}

pub fn estimate_kl_with(s: &SampleSet, k: usize, exec: Execution) -> Result<EntropyReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let table = NeighborTable::build(s, k, exec)?;
    estimate_kl_from_table(s, &table, k)
}

/// KL estimate reusing a neighbour table with at least `k` columns.
pub fn estimate_kl_from_table(s: &SampleSet, table: &NeighborTable, k: usize) -> Result<EntropyReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    check_table(s, table, k)?;
    check_duplicates(table, k)?;
    let (n, d) = (s.n(), s.d());
    let sum_log_eps: f64 = (0..n).map(|i| table.kth_distance(i, k).ln()).sum();
    let term_psi = psi_term(n, k)?;
    let mean_log_volume = d as f64 * std::f64::consts::LN_2 + d as f64 * sum_log_eps / n as f64;
    let mut report = EntropyReport {
        method: Method::Kl,
        estimate: 0.0,
        term_psi,
        mean_log_volume,
        mean_neg_log_g: 0.0,
        mean_log_mass: 0.0,
        n,
        d,
        k,
        p: None,
        ep_nonconverged: 0,
    };
    report.estimate = report.terms_sum();
    Ok(report)
}

/// Per-sample quantities of the kpN estimator.
#[derive(Debug, Clone)]
pub struct NeighborhoodSummary {
    pub eps: f64,
    /// Rows the local Gaussian was fitted to.
    pub neighbor_indices: Vec<usize>,
    pub local_mean: Vec<f64>,
    pub local_cov: SpdMatrix,
    /// Diagonal inflation that made the covariance factorizable (0 if none).
    pub jitter: f64,
    /// log g(x_i) for the unit-peak local Gaussian.
    pub log_g_at_xi: f64,
    /// log ∫_box g, with g unit-peak.
    pub log_mass: f64,
    pub ep_converged: bool,
}

/// Mean and (p−1)-normalized covariance of the given rows.
fn local_moments(s: &SampleSet, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = s.d();
    let p = rows.len();
    let mut mean = vec![0.0; d];
    for &r in rows {
        for (m, v) in mean.iter_mut().zip(s.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= p as f64);
    let mut cov = vec![0.0; d * d];
    let mut c = vec![0.0; d];
    for &r in rows {
        for ((ci, v), m) in c.iter_mut().zip(s.row(r)).zip(&mean) {
            *ci = v - m;
        }
        for i in 0..d {
            let ci = c[i];
            for (o, cj) in cov[i * d..i * d + i + 1].iter_mut().zip(&c[..=i]) {
                *o += ci * cj;
            }
        }
    }
    let denom = (p.max(2) - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    (mean, cov)
}

/// Factorizes `cov`, inflating the diagonal by δ·trace/d with δ growing
/// tenfold from `jitter_start` to `jitter_max` on failure.
fn factorize_with_jitter(index: usize, d: usize, cov: Vec<f64>, cfg: &EstimatorConfig) -> Result<(SpdMatrix, f64)> {
    let base = SpdMatrix::new(d, cov)?;
    let mut m = base.clone();
    if m.factorize().is_ok() {
        return Ok((m, 0.0));
    }
    let scale = base.trace() / d as f64;
    let mut delta = cfg.jitter_start;
    while delta <= cfg.jitter_max * (1.0 + 1e-9) {
        let mut m = base.clone();
        let jitter = delta * scale;
        m.add_to_diagonal(jitter);
        if m.factorize().is_ok() {
            return Ok((m, jitter));
        }
        delta *= 10.0;
    }
    Err(Error::SingularCovariance {
        index,
        jitter: cfg.jitter_max * scale,
    })
}

/// Builds the local Gaussian of sample `i` and integrates it over its box.
pub fn neighborhood_summary(
    s: &SampleSet,
    table: &NeighborTable,
    i: usize,
    cfg: &EstimatorConfig,
) -> Result<NeighborhoodSummary> {
    let d = s.d();
    let eps = table.kth_distance(i, cfg.k);
    let neighbor_indices = match cfg.local_fit {
        LocalFit::IncludeSelf => std::iter::once(i).chain(table.indices(i)[..cfg.p - 1].iter().copied()).collect(),
        LocalFit::ExcludeSelf => table.indices(i)[..cfg.p].to_vec(),
    };
    let (local_mean, cov) = local_moments(s, &neighbor_indices);
    let (local_cov, jitter) = factorize_with_jitter(i, d, cov, cfg)?;
    let x = s.row(i);
    let model = GaussianModel::new(local_mean.clone(), local_cov.clone())?;
    let log_g_at_xi = model.log_kernel(x)?;
    let b = AxisAlignedBox::new(x.to_vec(), eps)?;
    let mass = gaussian_box_logmass_with(&model, &b, &cfg.ep)?;
    let log_mass = mass.log_mass + 0.5 * (d as f64 * LN_2PI + local_cov.logdet()?);
    Ok(NeighborhoodSummary {
        eps,
        neighbor_indices,
        local_mean,
        local_cov,
        jitter,
        log_g_at_xi,
        log_mass,
        ep_converged: mass.converged,
    })
}

/// kpN estimate.
pub fn estimate_kpn(s: &SampleSet, cfg: &EstimatorConfig) -> Result<EntropyReport> {
    cfg.validate(s.n())?;
    let table = NeighborTable::build(s, cfg.p.max(cfg.k), cfg.execution)?;
    estimate_kpn_from_table(s, &table, cfg)
}

/// kpN estimate reusing a neighbour table with at least `max(k, p)` columns.
pub fn estimate_kpn_from_table(s: &SampleSet, table: &NeighborTable, cfg: &EstimatorConfig) -> Result<EntropyReport> {
    cfg.validate(s.n())?;
    check_table(s, table, cfg.p.max(cfg.k))?;
    check_duplicates(table, cfg.k)?;
    let (n, d) = (s.n(), s.d());
    if cfg.p <= d {
        log::warn!(
            "p = {} ≤ d = {d}: local covariances are rank-deficient, relying on jitter",
            cfg.p
        );
    }
    let per_sample = map_indexed(cfg.execution, n, |i| {
        neighborhood_summary(s, table, i, cfg).map(|r| (r.log_g_at_xi, r.log_mass, r.ep_converged))
    });
    let mut sum_log_g = 0.0;
    let mut sum_log_mass = 0.0;
    let mut nonconverged = 0;
    for r in per_sample {
        let (lg, lm, ok) = r?;
        sum_log_g += lg;
        sum_log_mass += lm;
        nonconverged += usize::from(!ok);
    }
    let mut report = EntropyReport {
        method: Method::Kpn,
        estimate: 0.0,
        term_psi: psi_term(n, cfg.k)?,
        mean_log_volume: 0.0,
        mean_neg_log_g: -sum_log_g / n as f64,
        mean_log_mass: sum_log_mass / n as f64,
        n,
        d,
        k: cfg.k,
        p: Some(cfg.p),
        ep_nonconverged: nonconverged,
    };
    report.estimate = report.terms_sum();
    Ok(report)
}

const QUADRATURE_NODES: usize = 64;
const MAX_QUADRATURE_DIM: usize = 3;

/// ∫_box pdf by tensor Gauss–Legendre with 64 nodes per axis, d ≤ 3.
pub fn probability_mass_quadrature(pdf: impl Fn(&[f64]) -> f64, b: &AxisAlignedBox) -> Result<f64> {
    let d = b.dim();
    if d == 0 || d > MAX_QUADRATURE_DIM {
        return Err(Error::Unsupported(format!("quadrature limited to 1 ≤ d ≤ {MAX_QUADRATURE_DIM}, got {d}")));
    }
    let rule = gauss_legendre(QUADRATURE_NODES);
    let half = b.half_width;
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let mut w = 1.0;
        for a in 0..d {
            x[a] = b.center[a] + half * rule.nodes[idx[a]];
            w *= half * rule.weights[idx[a]];
        }
        total += w * pdf(&x);
        let mut a = 0;
        while a < d {
            idx[a] += 1;
            if idx[a] < QUADRATURE_NODES {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
        if a == d {
            return Ok(total);
        }
    }
}

/// Lower and upper bounds on |P − p(x)(2ε)^d| from the Hessian eigenvalue
/// magnitudes: (|λ|/3)·d·2^{d−1}·ε^{d+2}.
pub fn kl_mass_bounds(lambda_min: f64, lambda_max: f64, eps: f64, d: usize) -> (f64, f64) {
    let c = d as f64 * 2f64.powi(d as i32 - 1) * eps.powi(d as i32 + 2) / 3.0;
    (lambda_min.abs() * c, lambda_max.abs() * c)
}
