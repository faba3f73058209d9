//! Probability mass of a multivariate Gaussian inside an axis-aligned box,
//! computed by Expectation Propagation with one truncated-normal site per
//! coordinate.
//!
//! The box constraint factorizes as ∏ⱼ 1[lⱼ ≤ xⱼ ≤ uⱼ]. Each indicator is
//! replaced by a Gaussian site (precision τⱼ, shift νⱼ) chosen so that the
//! approximate posterior matches the zeroth, first and second moments of the
//! tilted distribution "cavity × indicator". Sites are updated in parallel
//! from the posterior at the start of each sweep, damped, and the posterior
//! `(S⁻¹ + diag τ)⁻¹` is refactorized after every sweep. The zeroth moment
//! assembled from the site normalizers is the box mass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::sampler::NormalSource;
use crate::error::{Error, Result};
use crate::numerics::spd::{backward_substitute_transposed, cholesky_in_place, forward_substitute, inverse_diagonal};
use crate::numerics::{truncated_normal_moments, Bound, SpdMatrix, TruncatedMoments};

/// The box `[center − ε, center + ε]` in every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisAlignedBox {
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl AxisAlignedBox {
    pub fn new(center: Vec<f64>, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidParameter(format!("box half-width must be > 0, got {half_width}")));
        }
        Ok(Self { center, half_width })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(v, c)| (v - c).abs() <= self.half_width)
    }

    /// log of the box volume, d·ln(2ε).
    pub fn log_volume(&self) -> f64 {
        self.dim() as f64 * (2.0 * self.half_width).ln()
    }
}

/// Gaussian N(mean, cov) with a factorized covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    mean: Vec<f64>,
    cov: SpdMatrix,
}

impl GaussianModel {
    pub fn new(mean: Vec<f64>, mut cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                got: mean.len(),
            });
        }
        cov.factorize()?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    /// log of the unit-peak kernel exp(−½ (x−μ)ᵀ S⁻¹ (x−μ)).
    pub fn log_kernel(&self, x: &[f64]) -> Result<f64> {
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok(-0.5 * self.cov.inv_quad_form(&diff)?)
    }

    /// log of the normalizing constant of the kernel, ½ log det(2π S).
    pub fn log_normalizer(&self) -> Result<f64> {
        Ok(0.5 * (self.dim() as f64 * crate::numerics::special::LN_2PI + self.cov.logdet()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpConfig {
    /// Weight of the new site value in each update.
    pub damping: f64,
    pub max_sweeps: usize,
    /// Convergence threshold on the largest site change, measured in units
    /// of the prior marginal scale (τⱼ·Sⱼⱼ and νⱼ·√Sⱼⱼ).
    pub tol: f64,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_sweeps: 60,
            tol: 1e-8,
        }
    }
}

/// Final EP iterate, in coordinates centred on the Gaussian mean.
#[derive(Debug, Clone)]
pub struct EpState {
    pub site_precisions: Vec<f64>,
    pub site_shifts: Vec<f64>,
    /// Posterior mean, relative to the Gaussian mean.
    pub approx_mean: Vec<f64>,
    /// Factorized posterior precision S⁻¹ + diag(τ).
    pub approx_precision: SpdMatrix,
    pub log_z: f64,
}

impl EpState {
    /// Posterior covariance (S⁻¹ + diag τ)⁻¹.
    pub fn approx_cov(&self) -> Result<SpdMatrix> {
        self.approx_precision.inverse()
    }
}

#[derive(Debug, Clone)]
pub struct BoxMass {
    /// log of the normalized Gaussian mass inside the box.
    pub log_mass: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// Sites whose tilted mass fell below 1e-300 at the final iterate.
    pub tail_degenerate_sites: usize,
    pub state: EpState,
}

/// log ∫_box N(x; μ, S) dx with the default EP settings.
pub fn gaussian_box_logmass(g: &GaussianModel, b: &AxisAlignedBox) -> Result<BoxMass> {
    gaussian_box_logmass_with(g, b, &EpConfig::default())
}

pub fn gaussian_box_logmass_with(g: &GaussianModel, b: &AxisAlignedBox, cfg: &EpConfig) -> Result<BoxMass> {
    let d = g.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: b.dim(),
        });
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) || cfg.max_sweeps == 0 {
        return Err(Error::InvalidParameter(format!("invalid EP configuration {cfg:?}")));
    }
    // Shift so the prior has zero mean.
    let lo: Vec<f64> = (0..d).map(|j| b.center[j] - b.half_width - g.mean[j]).collect();
    let hi: Vec<f64> = (0..d).map(|j| b.center[j] + b.half_width - g.mean[j]).collect();
    let k = g.cov();
    let k_diag = k.diag();
    let k_inv = k.inverse()?;

    let mut tau = vec![0.0; d];
    let mut nu = vec![0.0; d];
    let mut post = Posterior::prior(&k_diag);
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..d {
            let cav = Cavity::new(&post, j, tau[j], nu[j], k_diag[j]);
            let m = tilted_moments(&cav, lo[j], hi[j])?;
            let tau_target = (1.0 / m.variance - cav.precision).max(0.0);
            let nu_target = m.mean / m.variance - cav.shift;
            let tau_new = (1.0 - cfg.damping) * tau[j] + cfg.damping * tau_target;
            let nu_new = (1.0 - cfg.damping) * nu[j] + cfg.damping * nu_target;
            let change = ((tau_new - tau[j]).abs() * k_diag[j]).max((nu_new - nu[j]).abs() * k_diag[j].sqrt());
            max_change = max_change.max(change);
            tau[j] = tau_new;
            nu[j] = nu_new;
        }
        post.refresh(&k_inv, &tau, &nu)?;
        if max_change < cfg.tol {
            converged = true;
            break;
        }
    }

    // log Z from the final cavities (zero-mean prior, natural-parameter form):
    //   Σ log Ẑⱼ − ½ log|I + T̃^½ K T̃^½| + ½ Σ log(1 + τ̃ⱼ/τ₋ⱼ)
    //   + ½ ν̃ᵀμ − ½ Σ ν̃ⱼ²/(τ₋ⱼ + τ̃ⱼ) + ½ Σ μ₋ⱼ τ₋ⱼ (τ̃ⱼ μ₋ⱼ − 2ν̃ⱼ)/(τ̃ⱼ + τ₋ⱼ)
    let mut log_z = -0.5 * (k.logdet()? + post.logdet_precision());
    let mut tail_degenerate_sites = 0;
    for j in 0..d {
        let cav = Cavity::new(&post, j, tau[j], nu[j], k_diag[j]);
        let m = match truncated_normal_moments(cav.mean(), cav.variance(), Bound::At(lo[j]), Bound::At(hi[j])) {
            Ok(m) => m,
            Err(Error::TailDegenerate(m)) => {
                tail_degenerate_sites += 1;
                m
            }
            Err(e) => return Err(e),
        };
        let (t, n, tc) = (tau[j], nu[j], cav.precision);
        let mc = cav.mean();
        log_z += m.log_z + 0.5 * (t / tc).ln_1p() + 0.5 * n * post.mean[j] - 0.5 * n * n / (tc + t)
            + 0.5 * mc * tc * (t * mc - 2.0 * n) / (t + tc);
    }

    let precision = post.into_precision(d)?;
    Ok(BoxMass {
        log_mass: log_z,
        converged,
        sweeps,
        tail_degenerate_sites,
        state: EpState {
            site_precisions: tau,
            site_shifts: nu,
            approx_mean: precision.1,
            approx_precision: precision.0,
            log_z,
        },
    })
}

fn tilted_moments(cav: &Cavity, lo: f64, hi: f64) -> Result<TruncatedMoments> {
    match truncated_normal_moments(cav.mean(), cav.variance(), Bound::At(lo), Bound::At(hi)) {
        Ok(m) | Err(Error::TailDegenerate(m)) => Ok(m),
        Err(e) => Err(e),
    }
}

/// Marginal of the posterior with site j removed, in natural parameters.
struct Cavity {
    precision: f64,
    shift: f64,
}

impl Cavity {
    fn new(post: &Posterior, j: usize, tau: f64, nu: f64, prior_var: f64) -> Self {
        let v = post.var_diag[j];
        // The cavity is never tighter than the prior marginal; the floor only
        // guards rounding.
        let precision = (1.0 / v - tau).max(f64::EPSILON / prior_var);
        Self {
            precision,
            shift: post.mean[j] / v - nu,
        }
    }

    fn mean(&self) -> f64 {
        self.shift / self.precision
    }

    fn variance(&self) -> f64 {
        1.0 / self.precision
    }
}

/// Posterior marginals plus the Cholesky factor of its precision.
struct Posterior {
    var_diag: Vec<f64>,
    mean: Vec<f64>,
    /// None until the first refresh (posterior equals the prior).
    factor: Option<Vec<f64>>,
}

impl Posterior {
    fn prior(k_diag: &[f64]) -> Self {
        Self {
            var_diag: k_diag.to_vec(),
            mean: vec![0.0; k_diag.len()],
            factor: None,
        }
    }

    fn refresh(&mut self, k_inv: &SpdMatrix, tau: &[f64], nu: &[f64]) -> Result<()> {
        let d = tau.len();
        let mut p = match self.factor.take() {
            Some(mut buf) => {
                buf.copy_from_slice(k_inv.entries());
                buf
            }
            None => k_inv.entries().to_vec(),
        };
        for j in 0..d {
            p[j * d + j] += tau[j];
        }
        cholesky_in_place(&mut p, d)?;
        inverse_diagonal(&p, d, &mut self.var_diag);
        self.mean.copy_from_slice(nu);
        forward_substitute(&p, d, &mut self.mean);
        backward_substitute_transposed(&p, d, &mut self.mean);
        self.factor = Some(p);
        Ok(())
    }

    fn logdet_precision(&self) -> f64 {
        match &self.factor {
            Some(l) => {
                let d = self.mean.len();
                2.0 * (0..d).map(|i| l[i * d + i].ln()).sum::<f64>()
            }
            None => unreachable!("posterior is refreshed after every sweep"),
        }
    }

    fn into_precision(self, d: usize) -> Result<(SpdMatrix, Vec<f64>)> {
        let l = self.factor.expect("posterior is refreshed after every sweep");
        // Rebuild L·Lᵀ so the returned matrix carries its own entries.
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let v: f64 = l[i * d..i * d + j + 1].iter().zip(&l[j * d..j * d + j + 1]).map(|(a, b)| a * b).sum();
                entries[i * d + j] = v;
                entries[j * d + i] = v;
            }
        }
        let m = SpdMatrix::new(d, entries)?.factorized()?;
        Ok((m, self.mean))
    }
}

/// Monte-Carlo estimate of the same log mass: log of the fraction of `n`
/// draws from N(μ, S) that land in the box. Zero hits give −∞.
pub fn gaussian_box_logmass_mc(g: &GaussianModel, b: &AxisAlignedBox, n: usize, seed: u64) -> Result<f64> {
    let d = g.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: b.dim(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one Monte-Carlo draw".into()));
    }
    let l = g.cov().factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normals = NormalSource::default();
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..n {
        for v in z.iter_mut() {
            *v = normals.sample(&mut rng);
        }
        for i in 0..d {
            x[i] = g.mean()[i] + l[i * d..i * d + i + 1].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
        if b.contains(&x) {
            hits += 1;
        }
    }
    if hits == 0 {
        log::warn!("Monte-Carlo box mass: no hits in {n} draws");
        return Ok(f64::NEG_INFINITY);
    }
    Ok((hits as f64 / n as f64).ln())
}
