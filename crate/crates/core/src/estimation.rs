//! Maximum-likelihood fitting of the GARCH parameters, standard errors from
//! the inverse Hessian and the tail-index profile.
//!
//! The covariance target is held fixed. The free parameters are mapped to an
//! unconstrained vector so the simplex search only sees the open box
//! `0 < gamma_vv`, `0 <= alpha_vv`, `alpha_vv + gamma_vv < 1`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::likelihood::{loglik_path_view, loglik_value, noise_path};
use crate::noise::NoiseModel;
use crate::optimize::{golden_section, nelder_mead, NelderMeadOptions};
use crate::panel::ReturnsPanel;
use crate::recursion::{ModelParams, StepMode, Tier};
use crate::targeting::TargetSpec;

/// Unconstrained coordinates for one diagonal pair `(alpha, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    /// `logit(gamma)`, `logit(alpha / (1 - gamma))`.
    #[default]
    AlphaGamma,
    /// `logit(b)`, `logit(alpha / (1 - b))` with `b = 1 - alpha - gamma`.
    AlphaPersistence,
}

/// Admissible range for the off-diagonal entries in the six-parameter tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffDiagBound {
    /// Unbounded; infeasible points are rejected by the recursion itself.
    #[default]
    Free,
    /// `|x_10| < sqrt(x_00 x_11)` (positive semidefinite 2x2 matrix).
    Psd,
    /// `|x_10| < min(x_00, x_11)`.
    MinDiag,
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-300, 1.0 - 1e-16);
    (p / (1.0 - p)).ln()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Scale of the unbounded off-diagonal coordinate.
const OFF_SCALE: f64 = 100.0;
/// Logit magnitude past which a coordinate counts as pressed to its bound.
const ACTIVE_Z: f64 = 12.0;
/// Largest logit magnitude of an optimizer start.
const START_Z: f64 = 8.0;

fn encode_pair(coords: Coordinates, alpha: f64, gamma: f64) -> [f64; 2] {
    match coords {
        Coordinates::AlphaGamma => [logit(gamma), logit(alpha / (1.0 - gamma))],
        Coordinates::AlphaPersistence => {
            let b = 1.0 - alpha - gamma;
            [logit(b), logit(alpha / (1.0 - b))]
        }
    }
}

fn decode_pair(coords: Coordinates, z: [f64; 2]) -> (f64, f64) {
    match coords {
        Coordinates::AlphaGamma => {
            let gamma = logistic(z[0]);
            (logistic(z[1]) * (1.0 - gamma), gamma)
        }
        Coordinates::AlphaPersistence => {
            let b = logistic(z[0]);
            let alpha = (1.0 - b) * logistic(z[1]);
            (alpha, 1.0 - b - alpha)
        }
    }
}

fn off_limit(bound: OffDiagBound, d0: f64, d1: f64) -> Option<f64> {
    match bound {
        OffDiagBound::Free => None,
        OffDiagBound::Psd => Some((d0 * d1).sqrt()),
        OffDiagBound::MinDiag => Some(d0.min(d1)),
    }
}

/// Map between natural free values (tier order) and optimizer coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ParamMap {
    pub tier: Tier,
    pub coords: Coordinates,
    pub bound: OffDiagBound,
}

impl ParamMap {
    pub fn encode(&self, values: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(values.len());
        for pair in values[..values.len().min(4)].chunks(2) {
            z.extend(encode_pair(self.coords, pair[0], pair[1]));
        }
        if self.tier == Tier::Six {
            for k in 0..2 {
                let x = values[4 + k];
                z.push(match off_limit(self.bound, values[k], values[2 + k]) {
                    None => x * OFF_SCALE,
                    Some(lim) => (x / lim).clamp(-1.0 + 1e-16, 1.0 - 1e-16).atanh(),
                });
            }
        }
        z
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(z.len());
        for pair in z[..z.len().min(4)].chunks(2) {
            let (a, g) = decode_pair(self.coords, [pair[0], pair[1]]);
            v.push(a);
            v.push(g);
        }
        if self.tier == Tier::Six {
            for k in 0..2 {
                v.push(match off_limit(self.bound, v[k], v[2 + k]) {
                    None => z[4 + k] / OFF_SCALE,
                    Some(lim) => lim * z[4 + k].tanh(),
                });
            }
        }
        v
    }

    /// Coordinates pressed against a bound of the box.
    pub fn active(&self, z: &[f64]) -> Vec<bool> {
        z.iter()
            .enumerate()
            .map(|(i, zi)| {
                let bounded = i < 4 || self.bound != OffDiagBound::Free;
                bounded && zi.abs() > ACTIVE_Z
            })
            .collect()
    }

    pub fn in_box(&self, values: &[f64]) -> bool {
        if values.iter().any(|x| !x.is_finite()) {
            return false;
        }
        for pair in values[..values.len().min(4)].chunks(2) {
            let (a, g) = (pair[0], pair[1]);
            if !(g > 0.0 && a >= 0.0 && a + g < 1.0) {
                return false;
            }
        }
        if self.tier == Tier::Six {
            for k in 0..2 {
                if let Some(lim) = off_limit(self.bound, values[k], values[2 + k]) {
                    if values[4 + k].abs() >= lim {
                        return false;
                    }
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuProfileOptions {
    pub lo: f64,
    pub hi: f64,
    pub grid_points: usize,
    pub tol: f64,
}

impl Default for NuProfileOptions {
    fn default() -> Self {
        Self {
            lo: 2.1,
            hi: 100.0,
            grid_points: 25,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub mode: StepMode,
    pub coords: Coordinates,
    pub off_diag_bound: OffDiagBound,
    /// Fit the lower tiers first and start each from the previous optimum
    /// (and, as a fallback, from the default point).
    pub warm_start_chain: bool,
    /// Explicit starting point (overrides the chain).
    pub start: Option<ModelParams>,
    pub max_evals: usize,
    pub restarts: usize,
    pub ftol: f64,
    pub xtol: f64,
    /// Estimate the tail index along with the GARCH parameters and polish it
    /// by profiling (Student-t noise only).
    pub estimate_nu: bool,
    /// Rounds of (fit, profile nu).
    pub nu_rounds: usize,
    pub nu_profile: NuProfileOptions,
    pub std_errors: bool,
    /// Relative finite-difference step for the Hessian.
    pub hessian_rel_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mode: StepMode::Exact,
            coords: Coordinates::AlphaGamma,
            off_diag_bound: OffDiagBound::Free,
            warm_start_chain: true,
            start: None,
            max_evals: 3000,
            restarts: 1,
            ftol: 1e-12,
            xtol: 1e-6,
            estimate_nu: true,
            nu_rounds: 1,
            nu_profile: NuProfileOptions::default(),
            std_errors: true,
            hessian_rel_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuProfile {
    pub nu_hat: f64,
    pub loglik: f64,
    pub curve: Vec<(f64, f64)>,
    /// Maximum at the upper end of the search range.
    pub effectively_gaussian: bool,
    /// Curve range below tolerance.
    pub flat: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeReport {
    pub std_errors: Option<Vec<f64>>,
    pub hessian: Option<Vec<Vec<f64>>>,
    pub positive_definite: bool,
    /// A stencil point left the admissible box.
    pub boundary: bool,
    /// Largest relative gap between the `h` and `2h` Hessians.
    pub richardson_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ModelParams,
    pub param_names: Vec<String>,
    pub loglik: f64,
    pub loglik_kernel: f64,
    pub loglik_per_t: f64,
    pub n_obs: usize,
    pub n_assets: usize,
    pub std_errors: Option<Vec<f64>>,
    pub se_flag: Option<String>,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
    pub constraint_active: Vec<bool>,
    pub nu_profile: Option<NuProfile>,
    pub mode: StepMode,
}

impl FitReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| RmgError::io(path, e))
    }

    /// Header matching [`FitReport::table_row`].
    pub fn table_header() -> String {
        format!(
            "{:>5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>7} {:>10}",
            "tier", "a00e2", "g00e2", "a11e2", "g11e2", "a10e2", "g10e2", "nu", "L/(TN)"
        )
    }

    /// Estimates times 10^2, tail index as is, `L / (T N)`; a second line
    /// holds the standard errors on the same scale when available.
    pub fn table_row(&self) -> String {
        let p = &self.params;
        let vals = [p.alpha.d0, p.gamma.d0, p.alpha.d1, p.gamma.d1, p.alpha.off, p.gamma.off];
        let k = p.tier.n_free();
        let cell = |i: usize, v: &[f64]| {
            if i < v.len() {
                format!("{:>9.4}", v[i] * 100.0)
            } else {
                format!("{:>9}", "-")
            }
        };
        let tier = k.to_string();
        let nu = p.noise.nu().map_or("gauss".to_string(), |x| format!("{x:.3}"));
        let per_obs = self.loglik / (self.n_obs * self.n_assets) as f64;
        let mut line = format!("{tier:>5}");
        let free: Vec<f64> = vals[..k].to_vec();
        for i in 0..6 {
            line.push(' ');
            line.push_str(&cell(i, &free));
        }
        line.push_str(&format!(" {nu:>7} {per_obs:>10.5}"));
        if let Some(se) = &self.std_errors {
            line.push('\n');
            line.push_str(&format!("{:>5}", "se"));
            for i in 0..6 {
                line.push(' ');
                line.push_str(&cell(i, se));
            }
        }
        line
    }
}

fn default_start(tier: Tier) -> Vec<f64> {
    let base = [0.05, 0.02, 0.05, 0.02, 0.025, 0.01];
    base[..tier.n_free()].to_vec()
}

/// Embed a lower-tier model into `tier`; the tied entries carry over as is.
pub fn embed(params: &ModelParams, tier: Tier) -> ModelParams {
    ModelParams { tier, ..*params }
}

struct Stage {
    params: ModelParams,
    loglik: f64,
    iterations: usize,
    evals: usize,
    converged: bool,
    active: Vec<bool>,
}

fn fit_stage(
    returns: ArrayView2<f64>,
    target: &TargetSpec,
    start: &ModelParams,
    opts: &FitOptions,
    joint_nu: Option<(f64, f64)>,
) -> Stage {
    let tier = start.tier;
    let map = ParamMap {
        tier,
        coords: opts.coords,
        bound: opts.off_diag_bound,
    };
    let k = tier.n_free();
    // nu rides along as ln(nu - 2), kept inside the profile range
    let nu_range = joint_nu.filter(|_| start.noise.nu().is_some());
    let decode_noise = |z: &[f64]| match nu_range {
        Some(_) => start.noise.with_nu(2.0 + z[k].exp()),
        None => start.noise,
    };
    let t_len = returns.nrows() as f64;
    let objective = |z: &[f64]| {
        let v = map.decode(&z[..k]);
        if !map.in_box(&v) {
            return f64::INFINITY;
        }
        let noise = decode_noise(z);
        if let (Some((lo, hi)), Some(nu)) = (nu_range, noise.nu()) {
            if !(lo..=hi).contains(&nu) {
                return f64::INFINITY;
            }
        }
        let p = ModelParams::from_free(tier, &v, noise);
        match loglik_value(returns, target, &p, opts.mode) {
            Ok(l) => -l / t_len,
            Err(e) => {
                log::debug!("objective rejected {v:?}: {e}");
                f64::INFINITY
            }
        }
    };
    let start_values = start.free_values();
    let start_l = if map.in_box(&start_values) {
        loglik_value(returns, target, start, opts.mode).unwrap_or(f64::NEG_INFINITY)
    } else {
        f64::NEG_INFINITY
    };
    // a start pressed against a logit bound sits where the objective is
    // flat in z; pull it back so the simplex can move
    let mut z0: Vec<f64> = map
        .encode(&start_values)
        .iter()
        .zip(map.active(&vec![f64::INFINITY; start_values.len()]))
        .map(|(z, bounded)| if bounded { z.clamp(-START_Z, START_Z) } else { *z })
        .collect();
    if let (Some((lo, hi)), Some(nu)) = (nu_range, start.noise.nu()) {
        z0.push((nu.clamp(lo, hi) - 2.0).ln());
    }
    let nm = NelderMeadOptions {
        step: 0.25,
        max_evals: opts.max_evals,
        ftol: opts.ftol,
        xtol: opts.xtol,
        restarts: opts.restarts,
    };
    let res = nelder_mead(objective, &z0, &nm);
    let found = ModelParams::from_free(tier, &map.decode(&res.x[..k]), decode_noise(&res.x));
    let found_l = -res.f * t_len;
    // never return a point worse than the start
    let (params, loglik) = if found_l >= start_l || !start_l.is_finite() {
        (found, found_l)
    } else {
        (*start, start_l)
    };
    Stage {
        params,
        loglik,
        iterations: res.iterations,
        evals: res.evals,
        converged: res.converged,
        active: map.active(&map.encode(&params.free_values())),
    }
}

/// Maximum-likelihood fit of `tier` with covariance targeting.
pub fn fit(
    panel: &ReturnsPanel,
    target: &TargetSpec,
    tier: Tier,
    noise: NoiseModel,
    opts: &FitOptions,
) -> Result<FitReport> {
    fit_view(panel.returns().view(), target, tier, noise, opts)
}

pub fn fit_view(
    returns: ArrayView2<f64>,
    target: &TargetSpec,
    tier: Tier,
    noise: NoiseModel,
    opts: &FitOptions,
) -> Result<FitReport> {
    noise.validate()?;
    if returns.ncols() != target.n() {
        return Err(RmgError::DimensionMismatch {
            expected: target.n(),
            actual: returns.ncols(),
        });
    }
    let chain: Vec<Tier> = match (opts.start, opts.warm_start_chain, tier) {
        (Some(_), _, _) | (None, false, _) | (None, true, Tier::Two) => vec![tier],
        (None, true, Tier::Four) => vec![Tier::Two, Tier::Four],
        (None, true, Tier::Six) => vec![Tier::Two, Tier::Four, Tier::Six],
    };
    let mut current = match opts.start {
        Some(p) => {
            let mut p = p;
            if p.noise.nu().is_none() || noise.nu().is_none() {
                p.noise = noise;
            }
            p
        }
        None => ModelParams::from_free(chain[0], &default_start(chain[0]), noise),
    };
    let mut report = None;
    for &stage_tier in &chain {
        let start = if current.tier == stage_tier {
            current
        } else {
            embed(&current, stage_tier)
        };
        let mut r = fit_tier(returns, target, &start, opts)?;
        if start.tier != chain[0] {
            // The embedded optimum can sit against the region where the
            // recursion fails; a second run from the default point guards
            // against stalling there.
            let alt = ModelParams::from_free(stage_tier, &default_start(stage_tier), start.noise);
            if let Ok(r2) = fit_tier(returns, target, &alt, opts) {
                if r2.loglik > r.loglik {
                    r = r2;
                }
            }
        }
        current = r.params;
        report = Some(r);
    }
    let mut report = report.expect("non-empty chain");

    if opts.std_errors {
        let se = hessian_se_view(returns, target, &report.params, opts);
        report.se_flag = if se.boundary {
            Some("boundary".into())
        } else if !se.positive_definite {
            Some("hessian not positive definite".into())
        } else {
            None
        };
        report.std_errors = se.std_errors;
    }
    Ok(report)
}

fn fit_tier(
    returns: ArrayView2<f64>,
    target: &TargetSpec,
    start: &ModelParams,
    opts: &FitOptions,
) -> Result<FitReport> {
    let profile = opts.estimate_nu && start.noise.nu().is_some();
    let rounds = if profile { opts.nu_rounds.max(1) } else { 1 };
    let mut current = *start;
    let (mut iterations, mut evals) = (0, 0);
    let mut stage = None;
    let mut nu_profile = None;
    if profile {
        // GARCH parameters fitted under a badly wrong tail index can run to
        // a bound, so settle nu at the start point first
        if let Ok(prof) = profile_nu_view(returns, target, &current, opts.mode, &opts.nu_profile) {
            let at_start = loglik_value(returns, target, &current, opts.mode).unwrap_or(f64::NEG_INFINITY);
            if prof.loglik >= at_start {
                current.noise = current.noise.with_nu(prof.nu_hat);
            }
        }
    }
    for _ in 0..rounds {
        let joint = profile.then_some((opts.nu_profile.lo, opts.nu_profile.hi));
        let s = fit_stage(returns, target, &current, opts, joint);
        iterations += s.iterations;
        evals += s.evals;
        current = s.params;
        if profile {
            let prof = profile_nu_view(returns, target, &current, opts.mode, &opts.nu_profile)?;
            let with_nu = ModelParams {
                noise: current.noise.with_nu(prof.nu_hat),
                ..current
            };
            // profiling only moves nu when it helps
            if prof.loglik >= s.loglik {
                current = with_nu;
            }
            nu_profile = Some(prof);
        }
        stage = Some(s);
    }
    let s = stage.expect("at least one round");
    let path = loglik_path_view(returns, target, &current, opts.mode)?;
    Ok(FitReport {
        params: current,
        param_names: current.tier.free_names().iter().map(|s| s.to_string()).collect(),
        loglik: path.loglik,
        loglik_kernel: path.loglik_kernel,
        loglik_per_t: path.loglik / returns.nrows() as f64,
        n_obs: returns.nrows(),
        n_assets: returns.ncols(),
        std_errors: None,
        se_flag: None,
        iterations,
        evals,
        converged: s.converged,
        constraint_active: s.active,
        nu_profile,
        mode: opts.mode,
    })
}

/// Maximize the likelihood over the tail index at fixed GARCH parameters.
pub fn profile_nu(
    panel: &ReturnsPanel,
    target: &TargetSpec,
    params: &ModelParams,
    mode: StepMode,
    opts: &NuProfileOptions,
) -> Result<NuProfile> {
    profile_nu_view(panel.returns().view(), target, params, mode, opts)
}

pub fn profile_nu_view(
    returns: ArrayView2<f64>,
    target: &TargetSpec,
    params: &ModelParams,
    mode: StepMode,
    opts: &NuProfileOptions,
) -> Result<NuProfile> {
    let path = noise_path(returns, target, params, mode)?;
    let ll = |nu: f64| path.loglik(&NoiseModel::StudentT { nu });
    let k = opts.grid_points.max(1);
    let grid: Vec<f64> = if k == 1 {
        vec![opts.lo]
    } else {
        // geometric in nu - 2 so the heavy-tail end is resolved
        let (a, b) = ((opts.lo - 2.0).ln(), (opts.hi - 2.0).ln());
        (0..k)
            .map(|i| 2.0 + (a + (b - a) * i as f64 / (k - 1) as f64).exp())
            .collect()
    };
    let curve: Vec<(f64, f64)> = grid.iter().map(|&nu| (nu, ll(nu))).collect();
    let (i_best, &(nu_grid, l_grid)) = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty grid");
    let lo_l = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let flat = (l_grid - lo_l).abs() < opts.tol;
    if k == 1 {
        return Ok(NuProfile {
            nu_hat: nu_grid,
            loglik: l_grid,
            curve,
            effectively_gaussian: false,
            flat,
        });
    }
    if i_best == k - 1 {
        return Ok(NuProfile {
            nu_hat: nu_grid,
            loglik: l_grid,
            curve,
            effectively_gaussian: true,
            flat,
        });
    }
    let a = grid[i_best.saturating_sub(1)];
    let b = grid[(i_best + 1).min(k - 1)];
    let (nu_hat, neg) = golden_section(|nu| -ll(nu), a, b, opts.tol, 200);
    let (nu_hat, loglik) = if -neg >= l_grid { (nu_hat, -neg) } else { (nu_grid, l_grid) };
    Ok(NuProfile {
        nu_hat,
        loglik,
        curve,
        effectively_gaussian: false,
        flat,
    })
}

/// Central finite-difference Hessian of `f` at `x` with per-coordinate steps.
pub fn fd_hessian(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(k, k);
    let mut at = |d: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, s) in d {
            y[i] += s;
        }
        f(&y)
    };
    for i in 0..k {
        let fp = at(&[(i, h[i])]);
        let fm = at(&[(i, -h[i])]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = at(&[(i, h[i]), (j, h[j])]);
            let fpm = at(&[(i, h[i]), (j, -h[j])]);
            let fmp = at(&[(i, -h[i]), (j, h[j])]);
            let fmm = at(&[(i, -h[i]), (j, -h[j])]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Standard errors `sqrt(diag(H^{-1}))` of a minimum of `f`, with the
/// Hessian taken at steps `h` and `2h` and Richardson-extrapolated.
pub fn se_from_objective(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: &[f64]) -> SeReport {
    let h1 = fd_hessian(&mut f, x, h);
    let h2_steps: Vec<f64> = h.iter().map(|s| 2.0 * s).collect();
    let h2 = fd_hessian(&mut f, x, &h2_steps);
    let hess = (&h1 * 4.0 - &h2) / 3.0;
    let finite = hess.iter().all(|v| v.is_finite());
    let scale = hess.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let richardson_gap = if scale > 0.0 {
        (&h1 - &h2).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
    } else {
        f64::INFINITY
    };
    let rows: Vec<Vec<f64>> = (0..hess.nrows()).map(|i| hess.row(i).iter().copied().collect()).collect();
    let chol = if finite { hess.clone().cholesky() } else { None };
    let std_errors = chol.map(|c| {
        let inv = c.inverse();
        (0..x.len()).map(|i| inv[(i, i)].sqrt()).collect::<Vec<f64>>()
    });
    SeReport {
        positive_definite: std_errors.is_some(),
        std_errors,
        hessian: if finite { Some(rows) } else { None },
        boundary: false,
        richardson_gap,
    }
}

fn hessian_steps(values: &[f64], rel: f64) -> Vec<f64> {
    values.iter().map(|v| (rel * v.abs()).max(1e-7)).collect()
}

/// Standard errors of the free parameters of `params` (natural scale).
pub fn hessian_se(
    panel: &ReturnsPanel,
    target: &TargetSpec,
    params: &ModelParams,
    opts: &FitOptions,
) -> SeReport {
    hessian_se_view(panel.returns().view(), target, params, opts)
}

pub fn hessian_se_view(
    returns: ArrayView2<f64>,
    target: &TargetSpec,
    params: &ModelParams,
    opts: &FitOptions,
) -> SeReport {
    let tier = params.tier;
    let map = ParamMap {
        tier,
        coords: opts.coords,
        bound: opts.off_diag_bound,
    };
    let x = params.free_values();
    let h = hessian_steps(&x, opts.hessian_rel_step);
    let boundary_report = || SeReport {
        std_errors: None,
        hessian: None,
        positive_definite: false,
        boundary: true,
        richardson_gap: f64::NAN,
    };
    // the 2h stencil must stay inside the open box
    for i in 0..x.len() {
        for s in [-2.0, 2.0] {
            let mut y = x.clone();
            y[i] += s * h[i];
            if !map.in_box(&y) {
                return boundary_report();
            }
        }
    }
    if map.active(&map.encode(&x)).iter().any(|a| *a) {
        return boundary_report();
    }
    let noise = params.noise;
    let f = |v: &[f64]| {
        let p = ModelParams::from_free(tier, v, noise);
        loglik_value(returns, target, &p, opts.mode).map_or(f64::INFINITY, |l| -l)
    };
    let rep = se_from_objective(f, &x, &h);
    if rep.hessian.is_none() {
        return SeReport {
            boundary: true,
            ..rep
        };
    }
    rep
}

/// Solve `A x = b` for a symmetric positive definite `A`.
pub fn spd_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let c = m.cholesky()?;
    Some(c.solve(&DVector::from_column_slice(b)).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_maps_round_trip() {
        for coords in [Coordinates::AlphaGamma, Coordinates::AlphaPersistence] {
            for (a, g) in [(0.05, 0.04), (0.25, 0.0078), (0.0, 0.3), (0.6, 0.39)] {
                let z = encode_pair(coords, a, g);
                let (a2, g2) = decode_pair(coords, z);
                assert!((a - a2).abs() < 1e-12 && (g - g2).abs() < 1e-12, "{coords:?} {a} {g}");
            }
        }
    }

    #[test]
    fn six_tier_map_round_trip() {
        for bound in [OffDiagBound::Free, OffDiagBound::Psd, OffDiagBound::MinDiag] {
            let map = ParamMap {
                tier: Tier::Six,
                coords: Coordinates::AlphaGamma,
                bound,
            };
            let v = [0.0514, 0.0413, 0.2487, 0.00781, 0.01673, 0.00298];
            assert!(map.in_box(&v));
            let back = map.decode(&map.encode(&v));
            for (x, y) in v.iter().zip(&back) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!(map.active(&map.encode(&v)).iter().all(|a| !a));
        }
    }

    #[test]
    fn quadratic_standard_errors_are_exact() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += 0.5 * (x[i] - 1.0) * a[i][j] * (x[j] - 1.0);
                }
            }
            s
        };
        let rep = se_from_objective(f, &[1.0, 1.0, 1.0], &[1e-3; 3]);
        let inv = DMatrix::from_fn(3, 3, |i, j| a[i][j]).try_inverse().unwrap();
        let se = rep.std_errors.unwrap();
        for i in 0..3 {
            assert!((se[i] - inv[(i, i)].sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn indefinite_hessian_gives_no_errors() {
        let f = |x: &[f64]| x[0] * x[0] - x[1] * x[1];
        let rep = se_from_objective(f, &[0.0, 0.0], &[1e-3, 1e-3]);
        assert!(!rep.positive_definite);
        assert!(rep.std_errors.is_none());
    }

    #[test]
    fn embedding_preserves_model() {
        let p = ModelParams::four(0.05, 0.04, 0.25, 0.008, NoiseModel::Gaussian);
        let e = embed(&p, Tier::Six);
        assert_eq!(e.tier, Tier::Six);
        assert_eq!(e.alpha, p.alpha);
        assert_eq!(e.gamma, p.gamma);
        e.validate().unwrap();
    }
}
