//! Variate generators driven by any `rand::Rng`.

use rand::Rng;

/// Box–Muller standard normals, keeping the second variate of each pair.
#[derive(Debug, Clone, Default)]
pub struct NormalSource {
    spare: Option<f64>,
}

impl NormalSource {
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Gamma(shape, 1) by Marsaglia–Tsang; shapes below one use
/// Gamma(shape + 1)·U^{1/shape}.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, normals: &mut NormalSource, shape: f64) -> f64 {
    if shape < 1.0 {
        let u = 1.0 - rng.gen::<f64>();
        return gamma(rng, normals, shape + 1.0) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = normals.sample(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.gen();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u > 0.0 && u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Beta(α, β) as X/(X+Y) with X ~ Gamma(α), Y ~ Gamma(β).
pub fn beta<R: Rng + ?Sized>(rng: &mut R, normals: &mut NormalSource, alpha: f64, beta: f64) -> f64 {
    let x = gamma(rng, normals, alpha);
    let y = gamma(rng, normals, beta);
    x / (x + y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let s = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n / v.powf(1.5);
        (m, v, s)
    }

    #[test]
    fn normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut src = NormalSource::default();
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| src.sample(&mut rng)).collect();
        let (m, v, s) = moments(&xs);
        let nf = n as f64;
        assert!(m.abs() < 4.0 / nf.sqrt());
        assert!((v - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
        assert!(s.abs() < 4.0 * (6.0 / nf).sqrt());
    }

    #[test]
    fn gamma_moments_including_small_shape() {
        let n = 1_000_000;
        let nf = n as f64;
        for (seed, k) in [(1u64, 0.5), (2, 3.0), (3, 20.0)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut src = NormalSource::default();
            let xs: Vec<f64> = (0..n).map(|_| gamma(&mut rng, &mut src, k)).collect();
            let (m, v, s) = moments(&xs);
            // Var of the sample mean is k/n; of the sample variance ≈ (μ4 − σ⁴)/n
            // with μ4 = 3k² + 6k for Gamma(k, 1).
            assert!((m - k).abs() < 4.0 * (k / nf).sqrt(), "mean {m} for k={k}");
            let var_se = ((3.0 * k * k + 6.0 * k - k * k) / nf).sqrt();
            assert!((v - k).abs() < 4.0 * var_se, "variance {v} for k={k}");
            let skew = 2.0 / k.sqrt();
            assert!((s - skew).abs() < 0.05 * skew.max(1.0), "skewness {s} vs {skew} for k={k}");
        }
    }

    #[test]
    fn beta_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut src = NormalSource::default();
        let (a, b) = (2.0, 5.0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| beta(&mut rng, &mut src, a, b)).collect();
        let (m, v, _) = moments(&xs);
        let mean = a / (a + b);
        let var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
        assert!((m - mean).abs() < 4.0 * (var / n as f64).sqrt());
        assert!((v - var).abs() < 0.02 * var);
    }
}
