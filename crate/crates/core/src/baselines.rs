//! Univariate GARCH(1,1) per asset, the comparison baseline.
//!
//! `h(t+1) = h(t) + alpha (r_t^2 - h(t)) + gamma (h_bar - h(t))` with `h_bar`
//! fixed by variance targeting.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::estimation::se_from_objective;
use crate::noise::NoiseModel;
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::panel::ReturnsPanel;
use crate::recursion::{ModelParams, Sym2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UvgParams {
    pub alpha: f64,
    pub gamma: f64,
    pub h_bar: f64,
}

impl UvgParams {
    pub fn validate(&self) -> Result<()> {
        let frozen = self.alpha == 0.0 && self.gamma == 0.0;
        let ok = frozen || (self.gamma > 0.0 && self.alpha >= 0.0 && self.alpha + self.gamma < 1.0);
        if !ok || !(self.h_bar > 0.0) {
            return Err(RmgError::InvalidParams(format!(
                "need 0 < gamma < gamma + alpha < 1 and h_bar > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Lower bound `gamma h_bar / (alpha + gamma)` of every `h(t)`.
    pub fn floor(&self) -> f64 {
        if self.alpha + self.gamma == 0.0 {
            self.h_bar
        } else {
            self.gamma * self.h_bar / (self.alpha + self.gamma)
        }
    }
}

/// Conditional variances, `h[0] = h_bar`.
pub fn uvg_filter(series: &[f64], params: &UvgParams) -> Vec<f64> {
    let mut h = Vec::with_capacity(series.len());
    let mut cur = params.h_bar;
    for r in series {
        h.push(cur);
        cur += params.alpha * (r * r - cur) + params.gamma * (params.h_bar - cur);
    }
    h
}

pub fn uvg_loglik(series: &[f64], params: &UvgParams, noise: &NoiseModel) -> f64 {
    let dens = noise.log_density();
    let mut cur = params.h_bar;
    let mut l = 0.0;
    for r in series {
        l += dens.eval(r / cur.sqrt()) - 0.5 * cur.ln();
        cur += params.alpha * (r * r - cur) + params.gamma * (params.h_bar - cur);
    }
    l
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UvgFit {
    pub params: UvgParams,
    pub loglik: f64,
    /// Standard errors of `(alpha, gamma)`.
    pub std_errors: Option<[f64; 2]>,
    pub converged: bool,
}

fn decode(z: &[f64]) -> (f64, f64) {
    let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
    let gamma = logistic(z[0]);
    (logistic(z[1]) * (1.0 - gamma), gamma)
}

/// Maximum likelihood for `(alpha, gamma)`; `h_bar` is the sample second
/// moment, the same moment the multivariate target uses.
pub fn uvg_fit(series: &[f64], noise: &NoiseModel) -> Result<UvgFit> {
    noise.validate()?;
    if series.len() < 100 {
        return Err(RmgError::InvalidInput(format!(
            "univariate fit needs at least 100 observations, got {}",
            series.len()
        )));
    }
    let h_bar = series.iter().map(|r| r * r).sum::<f64>() / series.len() as f64;
    if !(h_bar > 0.0) {
        return Err(RmgError::ConstantVolatility);
    }
    let t_len = series.len() as f64;
    let neg = |z: &[f64]| {
        let (alpha, gamma) = decode(z);
        -uvg_loglik(series, &UvgParams { alpha, gamma, h_bar }, noise) / t_len
    };
    // start at alpha = 0.05, gamma = 0.02
    let z0 = [(0.02f64 / 0.98).ln(), (0.05f64 / 0.93).ln()];
    let opts = NelderMeadOptions {
        ftol: 1e-13,
        xtol: 1e-7,
        ..Default::default()
    };
    let res = nelder_mead(neg, &z0, &opts);
    let (alpha, gamma) = decode(&res.x);
    let params = UvgParams { alpha, gamma, h_bar };
    let x = [alpha, gamma];
    let h: Vec<f64> = x.iter().map(|v| (1e-4 * v).max(1e-7)).collect();
    let inside = |a: f64, g: f64| g > 0.0 && a >= 0.0 && a + g < 1.0;
    let stencil_ok = (-2..=2).all(|k| {
        let k = k as f64;
        inside(alpha + k * h[0], gamma) && inside(alpha, gamma + k * h[1])
    }) && inside(alpha + 2.0 * h[0], gamma + 2.0 * h[1])
        && inside(alpha - 2.0 * h[0], gamma - 2.0 * h[1]);
    let std_errors = if stencil_ok {
        let f = |v: &[f64]| {
            -uvg_loglik(
                series,
                &UvgParams {
                    alpha: v[0],
                    gamma: v[1],
                    h_bar,
                },
                noise,
            )
        };
        se_from_objective(f, &x, &h).std_errors.map(|s| [s[0], s[1]])
    } else {
        None
    };
    Ok(UvgFit {
        params,
        loglik: -res.f * t_len,
        std_errors,
        converged: res.converged,
    })
}

/// Fit every column of `panel` independently.
pub fn uvg_fit_panel(panel: &ReturnsPanel, noise: &NoiseModel) -> Result<Vec<UvgFit>> {
    let cols: Vec<Vec<f64>> = panel.returns().columns().into_iter().map(|c| c.to_vec()).collect();
    cols.par_iter().map(|c| uvg_fit(c, noise)).collect()
}

/// Per-asset CSV: `ticker,alpha,gamma,h_bar,loglik`.
pub fn write_uvg_csv(path: impl AsRef<Path>, assets: &[String], fits: &[UvgFit]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| RmgError::csv(path, e))?;
    w.write_record(["ticker", "alpha", "gamma", "h_bar", "loglik"])
        .map_err(|e| RmgError::csv(path, e))?;
    for (a, f) in assets.iter().zip(fits) {
        w.write_record([
            a.clone(),
            f.params.alpha.to_string(),
            f.params.gamma.to_string(),
            f.params.h_bar.to_string(),
            f.loglik.to_string(),
        ])
        .map_err(|e| RmgError::csv(path, e))?;
    }
    w.flush().map_err(|e| RmgError::io(path, e))
}

/// Two-component orthogonal GARCH as the restriction `alpha_10 = gamma_10 = 0`:
/// beta stays at the target and the two levels follow decoupled recursions.
pub fn ogarch_params(alpha: [f64; 2], gamma: [f64; 2], noise: NoiseModel) -> ModelParams {
    ModelParams::six(
        Sym2::new(alpha[0], alpha[1], 0.0),
        Sym2::new(gamma[0], gamma[1], 0.0),
        noise,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn garch_series(alpha: f64, gamma: f64, t_len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let s = NoiseModel::Gaussian.sampler();
        let mut h: f64 = 1.0;
        (0..t_len)
            .map(|_| {
                let r = h.sqrt() * s.draw(&mut rng);
                h += alpha * (r * r - h) + gamma * (1.0 - h);
                r
            })
            .collect()
    }

    #[test]
    fn frozen_filter() {
        let p = UvgParams {
            alpha: 0.0,
            gamma: 0.0,
            h_bar: 2.0,
        };
        assert!(uvg_filter(&[1.0, -3.0, 0.5], &p).iter().all(|h| *h == 2.0));
    }

    #[test]
    fn zero_returns_decay_geometrically_to_the_floor() {
        let p = UvgParams {
            alpha: 0.1,
            gamma: 0.05,
            h_bar: 1.5,
        };
        let h = uvg_filter(&[0.0; 60], &p);
        let floor = p.floor();
        for (t, ht) in h.iter().enumerate() {
            let want = floor + (p.h_bar - floor) * (1.0 - p.alpha - p.gamma).powi(t as i32);
            assert!((ht - want).abs() < 1e-13);
        }
    }

    #[test]
    fn floor_never_violated() {
        let p = UvgParams {
            alpha: 0.2,
            gamma: 0.01,
            h_bar: 1.0,
        };
        let r = garch_series(0.2, 0.01, 100_000, 5);
        let floor = p.floor();
        assert!(uvg_filter(&r, &p).iter().all(|h| *h >= floor * (1.0 - 1e-12)));
    }

    #[test]
    fn fit_recovers_generator() {
        let r = garch_series(0.05, 0.01, 10_000, 8);
        let f = uvg_fit(&r, &NoiseModel::Gaussian).unwrap();
        let se = f.std_errors.unwrap();
        assert!((f.params.alpha - 0.05).abs() < 4.0 * se[0], "{f:?}");
        assert!((f.params.gamma - 0.01).abs() < 4.0 * se[1], "{f:?}");
    }

    #[test]
    fn iid_series_gives_small_alpha() {
        let r = garch_series(0.0, 0.5, 5_000, 9);
        let f = uvg_fit(&r, &NoiseModel::Gaussian).unwrap();
        assert!(f.params.alpha < 0.02, "{f:?}");
    }

    #[test]
    fn short_series_rejected() {
        assert!(uvg_fit(&[0.1; 50], &NoiseModel::Gaussian).is_err());
    }
}
