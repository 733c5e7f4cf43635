use super::{DpError, NoiseKind, NoiseSampler, NoiseSpec};

/// First `t` coefficients of the square root of the lower-triangular
/// all-ones matrix: `c_0 = 1`, `c_k = c_{k-1} (2k - 1) / (2k)`.
pub fn toeplitz_coefficients(t: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(t);
    let mut cur = 1.0;
    for k in 0..t {
        if k > 0 {
            cur *= (2 * k - 1) as f64 / (2 * k) as f64;
        }
        c.push(cur);
    }
    c
}

/// `out[t] = sum_{k <= t} c[t - k] * z[k]`.
pub fn lower_toeplitz_apply(c: &[f64], z: &[f64]) -> Vec<f64> {
    (0..z.len())
        .map(|t| (0..=t).map(|k| c[t - k] * z[k]).sum())
        .collect()
}

/// Gaussian calibration for the factored mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToeplitzCalibration {
    pub t_max: usize,
    pub delta: f64,
}

impl Default for ToeplitzCalibration {
    fn default() -> Self {
        ToeplitzCalibration {
            t_max: 1440,
            delta: 1e-5,
        }
    }
}

impl ToeplitzCalibration {
    /// Largest l2 column norm of `C` over the horizon (column 0).
    pub fn column_norm(&self) -> f64 {
        toeplitz_coefficients(self.t_max)
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `sigma_g = sensitivity * ||C||_col * sqrt(2 ln(1.25 / delta)) / epsilon`.
    pub fn sigma(&self, sensitivity: f64, epsilon: f64) -> Result<f64, DpError> {
        if self.t_max == 0 || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(DpError::BadCalibration(format!(
                "t_max={} delta={}",
                self.t_max, self.delta
            )));
        }
        if !(sensitivity > 0.0 && epsilon > 0.0) {
            return Err(DpError::BadCalibration(format!(
                "sensitivity={sensitivity} epsilon={epsilon}"
            )));
        }
        Ok(sensitivity * self.column_norm() * (2.0 * (1.25 / self.delta).ln()).sqrt() / epsilon)
    }

    /// Std of the noise on the prefix released at step `t`.
    pub fn marginal_std(&self, sigma_g: f64, t: usize) -> f64 {
        let c = toeplitz_coefficients(t + 1);
        sigma_g * c.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Streaming evaluation of `B (C y + z)` with `B = C`, so that `B C` is the
/// prefix-sum matrix and each release is a noisy running total.
#[derive(Debug, Clone)]
pub struct ToeplitzState {
    coeffs: Vec<f64>,
    ys: Vec<f64>,
    ws: Vec<f64>,
    noise: NoiseSampler,
}

impl ToeplitzState {
    pub fn new(calibration: ToeplitzCalibration, noise: NoiseSampler) -> Result<Self, DpError> {
        if calibration.t_max == 0 {
            return Err(DpError::BadCalibration("t_max=0".into()));
        }
        if noise.spec().kind == NoiseKind::Laplace {
            return Err(DpError::BadCalibration(
                "the factored mechanism is calibrated for gaussian noise".into(),
            ));
        }
        Ok(ToeplitzState {
            coeffs: toeplitz_coefficients(calibration.t_max),
            ys: Vec::new(),
            ws: Vec::new(),
            noise,
        })
    }

    /// Gaussian noise calibrated for `(epsilon, delta)` at `sensitivity`.
    pub fn calibrated(
        calibration: ToeplitzCalibration,
        sensitivity: f64,
        epsilon: f64,
        seed: u64,
    ) -> Result<Self, DpError> {
        let sigma = calibration.sigma(sensitivity, epsilon)?;
        Self::new(calibration, NoiseSpec::gaussian(sigma, seed).sampler()?)
    }

    pub fn t_max(&self) -> usize {
        self.coeffs.len()
    }

    pub fn steps(&self) -> usize {
        self.ys.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Consumes `y_t` and returns the noisy prefix sum through `t`.
    pub fn release(&mut self, y: f64) -> Result<f64, DpError> {
        let t = self.ys.len();
        if t >= self.coeffs.len() {
            return Err(DpError::HorizonExceeded(self.coeffs.len()));
        }
        self.ys.push(y);
        let cy: f64 = (0..=t).map(|k| self.coeffs[t - k] * self.ys[k]).sum();
        self.ws.push(cy + self.noise.sample());
        Ok((0..=t).map(|k| self.coeffs[t - k] * self.ws[k]).sum())
    }
}
