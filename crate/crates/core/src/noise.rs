//! Noise families for the standardized innovations `eta`.
//!
//! Both families have mean zero and unit variance. The Student-t density is
//! the classical t rescaled by `sqrt((nu - 2) / nu)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, RmgError};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian,
    StudentT { nu: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Gaussian
    }
}

impl NoiseModel {
    pub fn student_t(nu: f64) -> Result<Self> {
        let m = NoiseModel::StudentT { nu };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian => Ok(()),
            NoiseModel::StudentT { nu } if nu > 2.0 && nu.is_finite() => Ok(()),
            NoiseModel::StudentT { nu } => Err(RmgError::InvalidParams(format!(
                "student-t tail index must be finite and > 2, got {nu}"
            ))),
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match *self {
            NoiseModel::Gaussian => None,
            NoiseModel::StudentT { nu } => Some(nu),
        }
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        match self {
            NoiseModel::Gaussian => NoiseModel::Gaussian,
            NoiseModel::StudentT { .. } => NoiseModel::StudentT { nu },
        }
    }

    pub fn log_density(&self) -> LogDensity {
        LogDensity::new(*self)
    }

    pub fn sampler(&self) -> NoiseSampler {
        NoiseSampler::new(*self)
    }
}

/// Log-density of one standardized innovation, with the normalizing
/// constant precomputed.
#[derive(Debug, Clone, Copy)]
pub struct LogDensity {
    kind: Kind,
    log_norm: f64,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Gaussian,
    T { half_nu_plus_one: f64, inv_scale2: f64 },
}

impl LogDensity {
    fn new(model: NoiseModel) -> Self {
        match model {
            NoiseModel::Gaussian => LogDensity {
                kind: Kind::Gaussian,
                log_norm: -0.5 * LN_2PI,
            },
            NoiseModel::StudentT { nu } => {
                let log_norm = ln_gamma(0.5 * (nu + 1.0))
                    - ln_gamma(0.5 * nu)
                    - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
                LogDensity {
                    kind: Kind::T {
                        half_nu_plus_one: 0.5 * (nu + 1.0),
                        inv_scale2: 1.0 / (nu - 2.0),
                    },
                    log_norm,
                }
            }
        }
    }

    /// Parameter-independent constant `ln c` in `ln f = ln c + kernel`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// `ln f(eta) - ln c`.
    #[inline]
    pub fn kernel(&self, eta: f64) -> f64 {
        match self.kind {
            Kind::Gaussian => -0.5 * eta * eta,
            Kind::T {
                half_nu_plus_one,
                inv_scale2,
            } => -half_nu_plus_one * (eta * eta * inv_scale2).ln_1p(),
        }
    }

    /// Sum of [`LogDensity::kernel`] over a short block. The Student-t terms
    /// share one logarithm of their product when that cannot overflow.
    #[inline]
    pub fn kernel_sum(&self, eta: &[f64]) -> f64 {
        match self.kind {
            Kind::Gaussian => -0.5 * eta.iter().map(|e| e * e).sum::<f64>(),
            Kind::T {
                half_nu_plus_one,
                inv_scale2,
            } => {
                let prod: f64 = eta.iter().map(|e| 1.0 + e * e * inv_scale2).product();
                if prod.is_finite() && prod < 1e250 {
                    -half_nu_plus_one * prod.ln()
                } else {
                    eta.iter().map(|e| self.kernel(*e)).sum()
                }
            }
        }
    }

    #[inline]
    pub fn eval(&self, eta: f64) -> f64 {
        self.log_norm + self.kernel(eta)
    }
}

/// Draws standardized innovations.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    t: Option<(StudentT<f64>, f64)>,
}

impl NoiseSampler {
    fn new(model: NoiseModel) -> Self {
        let t = match model {
            NoiseModel::Gaussian => None,
            NoiseModel::StudentT { nu } => Some((
                StudentT::new(nu).expect("validated tail index"),
                ((nu - 2.0) / nu).sqrt(),
            )),
        };
        NoiseSampler { t }
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.t {
            None => StandardNormal.sample(rng),
            Some((dist, scale)) => scale * dist.sample(rng),
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = self.draw(rng));
    }
}
