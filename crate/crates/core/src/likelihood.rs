//! Analytic `H^{-1/2}`, de-garched noise and the model log-likelihood.

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Result, RmgError};
use crate::noise::{LogDensity, NoiseModel};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::panel::{write_matrix_csv, ReturnsPanel};
use crate::recursion::{step, CovState, ModelParams, StepMode};
use crate::targeting::TargetSpec;
use crate::vecops::dot;

/// `eta = H^{-1/2} r`, written into `out`.
pub fn inv_sqrt_apply_into(state: &CovState, r: &[f64], out: &mut [f64]) {
    let n = state.n() as f64;
    let r_m = dot(&state.beta, r) / n;
    let a = 1.0 / (n * state.v0).sqrt();
    let b = 1.0 / state.v1.sqrt();
    for ((o, ri), bi) in out.iter_mut().zip(r).zip(&state.beta) {
        *o = r_m * a * bi + (ri - r_m * bi) * b;
    }
}

pub fn inv_sqrt_apply(state: &CovState, r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; r.len()];
    inv_sqrt_apply_into(state, r, &mut out);
    out
}

/// `r = H^{1/2} eta`, written into `out`.
pub fn sqrt_apply_into(state: &CovState, eta: &[f64], out: &mut [f64]) {
    let n = state.n() as f64;
    let e_m = dot(&state.beta, eta) / n;
    let a = (n * state.v0).sqrt();
    let b = state.v1.sqrt();
    for ((o, ei), bi) in out.iter_mut().zip(eta).zip(&state.beta) {
        *o = a * e_m * bi + b * (ei - e_m * bi);
    }
}

pub fn sqrt_apply(state: &CovState, eta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; eta.len()];
    sqrt_apply_into(state, eta, &mut out);
    out
}

/// Day contribution split into the density-constant part and the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayLoglik {
    /// Full log-density of `r` under `H`.
    pub raw: f64,
    /// `raw` without the `N ln c` normalizing constant of `f`.
    pub kernel: f64,
}

/// Innovations per logarithm in the Student-t kernel sum.
const BLOCK: usize = 8;

fn day_terms(state: &CovState, r: &[f64], dens: &LogDensity) -> DayLoglik {
    let n = state.n() as f64;
    let r_m = dot(&state.beta, r) / n;
    let a = 1.0 / (n * state.v0).sqrt();
    let b = 1.0 / state.v1.sqrt();
    let mut k = 0.0;
    let mut block = [0.0; BLOCK];
    for (rc, bc) in r.chunks(BLOCK).zip(state.beta.chunks(BLOCK)) {
        for ((e, ri), bi) in block.iter_mut().zip(rc).zip(bc) {
            *e = r_m * a * bi + (ri - r_m * bi) * b;
        }
        k += dens.kernel_sum(&block[..rc.len()]);
    }
    let kernel = k - 0.5 * state.log_det();
    DayLoglik {
        raw: kernel + n * dens.log_norm(),
        kernel,
    }
}

/// `sum_i ln f(eta_i) - ln det H / 2` for one day.
pub fn loglik_day(state: &CovState, r: &[f64], noise: &NoiseModel) -> Result<f64> {
    if r.len() != state.n() {
        return Err(RmgError::DimensionMismatch {
            expected: state.n(),
            actual: r.len(),
        });
    }
    let d = day_terms(state, r, &noise.log_density());
    if !d.raw.is_finite() {
        return Err(RmgError::NonFiniteLikelihood {
            t: state.t,
            v0: state.v0,
            v1: state.v1,
        });
    }
    Ok(d.raw)
}

/// Result of filtering a panel.
#[derive(Debug, Clone)]
pub struct LikelihoodPath {
    pub loglik: f64,
    /// `loglik` without the density constants.
    pub loglik_kernel: f64,
    /// `states[t]` is the conditional state used for row `t`.
    pub states: Vec<CovState>,
}

impl LikelihoodPath {
    pub fn per_t(&self) -> f64 {
        self.loglik / self.states.len() as f64
    }
}

fn run_path(
    returns: ArrayView2<f64>,
    target: &TargetSpec,
    params: &ModelParams,
    mode: StepMode,
    mut visit: impl FnMut(&CovState, &[f64]),
) -> Result<DayLoglik> {
    let (t_len, n) = returns.dim();
    if n != target.n() {
        return Err(RmgError::DimensionMismatch {
            expected: target.n(),
            actual: n,
        });
    }
    let dens = params.noise.log_density();
    let mut state = CovState::initial(target);
    let mut total = DayLoglik { raw: 0.0, kernel: 0.0 };
    let owned;
    let returns = if returns.is_standard_layout() {
        returns
    } else {
        owned = returns.as_standard_layout().into_owned();
        owned.view()
    };
    let flat = returns.as_slice().expect("standard layout");
    for t in 0..t_len {
        let r = &flat[t * n..(t + 1) * n];
        let d = day_terms(&state, r, &dens);
        if !d.raw.is_finite() {
            return Err(RmgError::NonFiniteLikelihood {
                t,
                v0: state.v0,
                v1: state.v1,
            });
        }
        total.raw += d.raw;
        total.kernel += d.kernel;
        visit(&state, r);
        if t + 1 < t_len {
            state = step(mode, &state, target, params, r)
                .map_err(|e| RmgError::RecursionAt { t, source: Box::new(e) })?;
        }
    }
    Ok(total)
}

/// Filter `panel` from the target state and sum the daily log-likelihood.
pub fn loglik_path(
    panel: &ReturnsPanel,
    target: &TargetSpec,
    params: &ModelParams,
    mode: StepMode,
) -> Result<LikelihoodPath> {
    loglik_path_view(panel.returns().view(), target, params, mode)
}

pub fn loglik_path_view(
    returns: ArrayView2<f64>,
    target: &TargetSpec,
    params: &ModelParams,
    mode: StepMode,
) -> Result<LikelihoodPath> {
    let mut states = Vec::with_capacity(returns.nrows());
    let total = run_path(returns, target, params, mode, |s, _| states.push(s.clone()))?;
    Ok(LikelihoodPath {
        loglik: total.raw,
        loglik_kernel: total.kernel,
        states,
    })
}

/// Total log-likelihood without keeping the state path.
pub fn loglik_value(
    returns: ArrayView2<f64>,
    target: &TargetSpec,
    params: &ModelParams,
    mode: StepMode,
) -> Result<f64> {
    Ok(run_path(returns, target, params, mode, |_, _| {})?.raw)
}

/// Pooled de-garched noise and the summed `ln det H` of a filtered path.
/// The state path does not depend on the noise family, so this is all the
/// likelihood needs when only `nu` changes.
#[derive(Debug, Clone)]
pub struct NoisePath {
    pub eta: Vec<f64>,
    pub log_det_sum: f64,
}

impl NoisePath {
    pub fn loglik(&self, noise: &NoiseModel) -> f64 {
        let dens = noise.log_density();
        let k: f64 = self.eta.chunks(BLOCK).map(|c| dens.kernel_sum(c)).sum();
        k + self.eta.len() as f64 * dens.log_norm() - 0.5 * self.log_det_sum
    }
}

pub fn noise_path(
    returns: ArrayView2<f64>,
    target: &TargetSpec,
    params: &ModelParams,
    mode: StepMode,
) -> Result<NoisePath> {
    let (t_len, n) = returns.dim();
    let mut eta = vec![0.0; t_len * n];
    let mut log_det_sum = 0.0;
    let mut t = 0;
    run_path(returns, target, params, mode, |s, r| {
        inv_sqrt_apply_into(s, r, &mut eta[t * n..(t + 1) * n]);
        log_det_sum += s.log_det();
        t += 1;
    })?;
    Ok(NoisePath { eta, log_det_sum })
}

/// Garch-filtered returns: row `t` is `H(t)^{-1/2} r_t`.
pub fn degarch(panel: &ReturnsPanel, states: &[CovState]) -> Result<Array2<f64>> {
    if states.len() != panel.n_obs() {
        return Err(RmgError::DimensionMismatch {
            expected: panel.n_obs(),
            actual: states.len(),
        });
    }
    let n = panel.n_assets();
    let mut out = Array2::zeros((panel.n_obs(), n));
    for (t, (s, mut row)) in states.iter().zip(out.rows_mut()).enumerate() {
        if s.n() != n {
            return Err(RmgError::DimensionMismatch {
                expected: n,
                actual: s.n(),
            });
        }
        let eta = inv_sqrt_apply(s, panel.row(t));
        row.iter_mut().zip(eta).for_each(|(o, e)| *o = e);
    }
    Ok(out)
}

pub fn write_degarch_csv(path: impl AsRef<Path>, panel: &ReturnsPanel, eta: &Array2<f64>) -> Result<()> {
    write_matrix_csv(path, panel.dates(), panel.assets(), eta)
}

/// Maximum-likelihood fit of a classical Student-t with free scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub nu: f64,
    pub scale: f64,
    pub loglik: f64,
}

/// Fit `nu` (restricted to `(2, 200]`) and the scale of a zero-centred
/// Student-t to pooled samples.
pub fn fit_tail_index(samples: &[f64]) -> Result<TailFit> {
    if samples.len() < 10 {
        return Err(RmgError::InvalidInput("need at least 10 samples for a tail fit".into()));
    }
    let var = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
    if !(var > 0.0 && var.is_finite()) {
        return Err(RmgError::InvalidInput("degenerate sample for a tail fit".into()));
    }
    const NU_MAX: f64 = 200.0;
    let decode = |z: &[f64]| {
        let nu = 2.0 + (NU_MAX - 2.0) / (1.0 + (-z[0]).exp());
        let scale = z[1].exp();
        (nu, scale)
    };
    let neg_ll = |z: &[f64]| {
        let (nu, scale) = decode(z);
        // x = scale * eta with eta a unit-variance t
        let dens = NoiseModel::StudentT { nu }.log_density();
        let k: f64 = samples.iter().map(|x| dens.kernel(x / scale)).sum();
        -(k + samples.len() as f64 * (dens.log_norm() - scale.ln()))
    };
    // start at nu = 5 with the sample scale
    let z0_nu = -((NU_MAX - 2.0) / 3.0 - 1.0f64).ln();
    let z0 = [z0_nu, var.sqrt().ln()];
    let res = nelder_mead(neg_ll, &z0, &NelderMeadOptions::default().with_step(0.5));
    let (nu, scale) = decode(&res.x);
    Ok(TailFit {
        nu,
        scale,
        loglik: -res.f,
    })
}
