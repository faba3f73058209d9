//! Dense symmetric positive-definite matrices with a cached Cholesky factor.
//!
//! Storage is row-major `d × d`. The factor keeps the lower triangle `L`
//! with `M = L·Lᵀ`; entries above the diagonal are zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix {
    dim: usize,
    entries: Vec<f64>,
    #[serde(skip)]
    factor: Option<Vec<f64>>,
}

impl SpdMatrix {
    /// Wraps row-major entries, checking shape and symmetry.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("matrix dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite matrix entry {bad}")));
        }
        let scale = entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidParameter(format!(
                        "matrix not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            entries,
            factor: None,
        })
    }

    /// Builds from the lower triangle produced by `f(i, j)`, j ≤ i, mirrored.
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                entries[i * dim + j] = v;
                entries[j * dim + i] = v;
            }
        }
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim]).expect("identity is valid")
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        Self::from_lower_fn(d, |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Adds `delta` to every diagonal entry, dropping any cached factor.
    pub fn add_to_diagonal(&mut self, delta: f64) {
        for i in 0..self.dim {
            self.entries[i * self.dim + i] += delta;
        }
        self.factor = None;
    }

    pub fn is_factorized(&self) -> bool {
        self.factor.is_some()
    }

    /// Computes and caches the Cholesky factor.
    pub fn factorize(&mut self) -> Result<()> {
        if self.factor.is_none() {
            let mut l = self.entries.clone();
            cholesky_in_place(&mut l, self.dim)?;
            self.factor = Some(l);
        }
        Ok(())
    }

    /// Consuming form of [`SpdMatrix::factorize`].
    pub fn factorized(mut self) -> Result<Self> {
        self.factorize()?;
        Ok(self)
    }

    /// Lower-triangular factor, row-major.
    pub fn factor(&self) -> Result<&[f64]> {
        self.factor
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("matrix has not been factorized".into()))
    }

    /// log det M = 2 Σ log L_ii.
    pub fn logdet(&self) -> Result<f64> {
        let l = self.factor()?;
        Ok(2.0 * (0..self.dim).map(|i| l[i * self.dim + i].ln()).sum::<f64>())
    }

    /// Solves M x = v.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        let l = self.factor()?;
        let mut x = v.to_vec();
        forward_substitute(l, self.dim, &mut x);
        backward_substitute_transposed(l, self.dim, &mut x);
        Ok(x)
    }

    /// vᵀ M⁻¹ v, using a single triangular solve.
    pub fn inv_quad_form(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v.len())?;
        let l = self.factor()?;
        let mut y = v.to_vec();
        forward_substitute(l, self.dim, &mut y);
        Ok(y.iter().map(|t| t * t).sum())
    }

    /// M⁻¹ as a fresh (unfactorized) matrix.
    pub fn inverse(&self) -> Result<SpdMatrix> {
        let l = self.factor()?;
        let d = self.dim;
        let w = lower_inverse(l, d);
        // M⁻¹ = Wᵀ W with W = L⁻¹ lower triangular.
        let mut inv = vec![0.0; d * d];
        for k in 0..d {
            let row = &w[k * d..k * d + k + 1];
            for i in 0..=k {
                let wi = row[i];
                let out = &mut inv[i * d..i * d + i + 1];
                for (o, wj) in out.iter_mut().zip(&row[..=i]) {
                    *o += wi * wj;
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                inv[j * d + i] = inv[i * d + j];
            }
        }
        Ok(SpdMatrix {
            dim: d,
            entries: inv,
            factor: None,
        })
    }

    /// M·v.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        let d = self.dim;
        Ok((0..d)
            .map(|i| self.entries[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }
}

/// In-place Cholesky of a row-major symmetric matrix; on success `a` holds
/// L in its lower triangle and zeros above.
pub fn cholesky_in_place(a: &mut [f64], d: usize) -> Result<()> {
    debug_assert_eq!(a.len(), d * d);
    for i in 0..d {
        let (done, rest) = a.split_at_mut(i * d);
        let row_i = &mut rest[..d];
        for j in 0..i {
            let row_j = &done[j * d..j * d + j];
            let dot: f64 = row_i[..j].iter().zip(row_j).map(|(x, y)| x * y).sum();
            row_i[j] = (row_i[j] - dot) / done[j * d + j];
        }
        let sq: f64 = row_i[..i].iter().map(|x| x * x).sum();
        let pivot = row_i[i] - sq;
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: i, value: pivot });
        }
        row_i[i] = pivot.sqrt();
        for v in &mut row_i[i + 1..] {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Solves L y = b in place.
pub fn forward_substitute(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let row = &l[i * d..i * d + i];
        let dot: f64 = row.iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
        b[i] = (b[i] - dot) / l[i * d + i];
    }
}

/// Solves Lᵀ x = y in place.
pub fn backward_substitute_transposed(l: &[f64], d: usize, y: &mut [f64]) {
    for i in (0..d).rev() {
        let xi = y[i] / l[i * d + i];
        y[i] = xi;
        let row = &l[i * d..i * d + i];
        for (t, lij) in y[..i].iter_mut().zip(row) {
            *t -= lij * xi;
        }
    }
}

/// W = L⁻¹ (lower triangular, row-major), built row by row:
/// row_i(W) = (e_i − Σ_{k<i} L_ik row_k(W)) / L_ii.
pub fn lower_inverse(l: &[f64], d: usize) -> Vec<f64> {
    let mut w = vec![0.0; d * d];
    for i in 0..d {
        let (done, rest) = w.split_at_mut(i * d);
        let row_i = &mut rest[..d];
        for k in 0..i {
            let lik = l[i * d + k];
            if lik != 0.0 {
                for (o, wk) in row_i[..=k].iter_mut().zip(&done[k * d..k * d + k + 1]) {
                    *o -= lik * wk;
                }
            }
        }
        row_i[i] += 1.0;
        let inv = 1.0 / l[i * d + i];
        for v in &mut row_i[..=i] {
            *v *= inv;
        }
    }
    w
}

/// diag(M⁻¹) from the Cholesky factor of M: column sums of squares of L⁻¹.
pub fn inverse_diagonal(l: &[f64], d: usize, out: &mut [f64]) {
    let w = lower_inverse(l, d);
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..d {
        for (o, wij) in out[..=i].iter_mut().zip(&w[i * d..i * d + i + 1]) {
            *o += wij * wij;
        }
    }
}
