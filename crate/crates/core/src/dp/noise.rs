use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DpError;
use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Laplace,
    Gaussian,
    None,
}

/// `scale` is the Laplace scale `b` or the Gaussian standard deviation; it is
/// ignored for [`NoiseKind::None`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub scale: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn laplace(b: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Laplace,
            scale: b,
            seed,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Gaussian,
            scale: sigma,
            seed,
        }
    }

    pub fn none() -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            scale: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DpError> {
        match self.kind {
            NoiseKind::None => Ok(()),
            _ if self.scale.is_finite() && self.scale > 0.0 => Ok(()),
            _ => Err(DpError::InvalidScale(self.scale)),
        }
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            NoiseKind::Laplace => laplace_variance(self.scale),
            NoiseKind::Gaussian => self.scale * self.scale,
            NoiseKind::None => 0.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn sampler(&self) -> Result<NoiseSampler, DpError> {
        self.validate()?;
        Ok(NoiseSampler {
            spec: *self,
            rng: rng_from_seed(self.seed),
        })
    }
}

pub fn laplace_variance(b: f64) -> f64 {
    2.0 * b * b
}

/// A seeded stream of i.i.d. draws from one [`NoiseSpec`].
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    spec: NoiseSpec,
    rng: SimRng,
}

impl NoiseSampler {
    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn std_dev(&self) -> f64 {
        self.spec.std_dev()
    }

    pub fn sample(&mut self) -> f64 {
        match self.spec.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                z * self.spec.scale
            }
            NoiseKind::Laplace => sample_laplace(&mut self.rng, self.spec.scale),
        }
    }
}

/// Inverse-CDF Laplace draw.
pub(crate) fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -b * u.signum() * tail.ln();
        }
    }
}

/// First draw of the stream defined by `spec`.
pub fn sample_noise(spec: &NoiseSpec) -> Result<f64, DpError> {
    Ok(spec.sampler()?.sample())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(spec: NoiseSpec, n: usize) -> (f64, f64) {
        let mut s = spec.sampler().unwrap();
        let xs: Vec<f64> = (0..n).map(|_| s.sample()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn none_is_zero() {
        assert_eq!(sample_noise(&NoiseSpec::none()).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(NoiseSpec::laplace(0.0, 1).sampler().is_err());
        assert!(NoiseSpec::gaussian(-1.0, 1).sampler().is_err());
        assert!(NoiseSpec::laplace(f64::NAN, 1).sampler().is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_noise(&NoiseSpec::laplace(1.0, 99)).unwrap();
        let b = sample_noise(&NoiseSpec::laplace(1.0, 99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn laplace_variance_matches() {
        let (_, var) = moments(NoiseSpec::laplace(2.0, 11), 1_000_000);
        assert!((var - 8.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn laplace_mean_is_zero() {
        let (mean, _) = moments(NoiseSpec::laplace(1.0, 12), 1_000_000);
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn gaussian_variance_matches() {
        let (mean, var) = moments(NoiseSpec::gaussian(3.0, 13), 400_000);
        assert!(mean.abs() < 0.03);
        assert!((var - 9.0).abs() < 0.1, "var {var}");
    }
}
