//! One-day advance of the restricted covariance state.
//!
//! The state `(v0, v1, beta)` stands for
//!
//! ```text
//! H = N v0 P0 + v1 (I - P0) = u beta beta' + v1 I,    u = v0 - v1 / N,
//! ```
//!
//! and is advanced by projecting the diagonal vector-GARCH update onto the
//! eigenspaces of `H(t)`:
//!
//! ```text
//! P_a H(t+1) P_b = P_a [H + alpha_ab (r r' - H) + gamma_ab (H_bar - H)] P_b
//! ```
//!
//! Taking `tr(P_a .)/N` of both sides fixes two scalar combinations `A0`,
//! `A1`; applying `P1 (.) beta` fixes the direction `D` in which `beta` turns.
//! The overlap `x = m^2` between consecutive betas solves
//!
//! ```text
//! (Q + d2) x^2 - (Q + 2 d2 / N) x + d2 / N^2 = 0,
//! Q = (A0 - (A0 + A1) / N)^2,    d2 = D'D / N,
//! ```
//!
//! after which `u(t+1) = (A0 - (A0 + A1)/N) / (x - 1/N)`,
//! `v1(t+1) = A0 + A1 - u(t+1)` and
//! `beta(t+1) = sqrt(x) beta + D / (u(t+1) sqrt(x))`.
//!
//! The two roots straddle `1/N`. Of the two, the one with `u(t+1) > 0` is
//! taken when it keeps both levels positive, the other one otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::noise::NoiseModel;
use crate::targeting::TargetSpec;
use crate::vecops::{dot, norm_sq, renormalize};

/// Symmetric 2x2 matrix over the (market, bulk) components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    #[serde(rename = "00")]
    pub d0: f64,
    #[serde(rename = "11")]
    pub d1: f64,
    #[serde(rename = "10")]
    pub off: f64,
}

impl Sym2 {
    pub fn new(d0: f64, d1: f64, off: f64) -> Self {
        Self { d0, d1, off }
    }

    pub fn scalar(x: f64) -> Self {
        Self::new(x, x, x)
    }

    pub fn zero() -> Self {
        Self::scalar(0.0)
    }

    pub fn diag(&self, nu: usize) -> f64 {
        if nu == 0 {
            self.d0
        } else {
            self.d1
        }
    }
}

/// Parameter tying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Every entry of alpha equals `alpha_00`, every entry of gamma `gamma_00`.
    Two,
    /// Off-diagonals tied to `alpha_00`, `gamma_00`; diagonals free.
    Four,
    /// All six entries free.
    Six,
}

impl Tier {
    pub fn n_free(self) -> usize {
        match self {
            Tier::Two => 2,
            Tier::Four => 4,
            Tier::Six => 6,
        }
    }

    pub fn from_count(k: usize) -> Option<Self> {
        match k {
            2 => Some(Tier::Two),
            4 => Some(Tier::Four),
            6 => Some(Tier::Six),
            _ => None,
        }
    }

    pub fn free_names(self) -> &'static [&'static str] {
        const NAMES: [&str; 6] = ["alpha_00", "gamma_00", "alpha_11", "gamma_11", "alpha_10", "gamma_10"];
        &NAMES[..self.n_free()]
    }
}

/// GARCH parameters of the projected recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: Sym2,
    pub gamma: Sym2,
    pub noise: NoiseModel,
    pub tier: Tier,
}

impl ModelParams {
    pub fn two(alpha_00: f64, gamma_00: f64, noise: NoiseModel) -> Self {
        Self {
            alpha: Sym2::scalar(alpha_00),
            gamma: Sym2::scalar(gamma_00),
            noise,
            tier: Tier::Two,
        }
    }

    pub fn four(a00: f64, g00: f64, a11: f64, g11: f64, noise: NoiseModel) -> Self {
        Self {
            alpha: Sym2::new(a00, a11, a00),
            gamma: Sym2::new(g00, g11, g00),
            noise,
            tier: Tier::Four,
        }
    }

    pub fn six(alpha: Sym2, gamma: Sym2, noise: NoiseModel) -> Self {
        Self {
            alpha,
            gamma,
            noise,
            tier: Tier::Six,
        }
    }

    /// All increments vanish: `H(t+1) = H(t)`.
    pub fn frozen(noise: NoiseModel) -> Self {
        Self::six(Sym2::zero(), Sym2::zero(), noise)
    }

    /// Free values in tier order: `alpha_00, gamma_00, alpha_11, gamma_11,
    /// alpha_10, gamma_10`, truncated to the tier's count.
    pub fn free_values(&self) -> Vec<f64> {
        let all = [
            self.alpha.d0,
            self.gamma.d0,
            self.alpha.d1,
            self.gamma.d1,
            self.alpha.off,
            self.gamma.off,
        ];
        all[..self.tier.n_free()].to_vec()
    }

    pub fn from_free(tier: Tier, values: &[f64], noise: NoiseModel) -> Self {
        assert_eq!(values.len(), tier.n_free());
        match tier {
            Tier::Two => Self::two(values[0], values[1], noise),
            Tier::Four => Self::four(values[0], values[1], values[2], values[3], noise),
            Tier::Six => Self::six(
                Sym2::new(values[0], values[2], values[4]),
                Sym2::new(values[1], values[3], values[5]),
                noise,
            ),
        }
    }

    /// Check `0 < gamma_vv`, `0 <= alpha_vv`, `alpha_vv + gamma_vv < 1` and
    /// the tier tying. The all-zero (frozen) model is also accepted.
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        let vals = [
            self.alpha.d0,
            self.alpha.d1,
            self.alpha.off,
            self.gamma.d0,
            self.gamma.d1,
            self.gamma.off,
        ];
        if vals.iter().any(|x| !x.is_finite()) {
            return Err(RmgError::InvalidParams("non-finite parameter".into()));
        }
        let frozen = vals.iter().all(|x| *x == 0.0);
        if !frozen {
            for nu in 0..2 {
                let (a, g) = (self.alpha.diag(nu), self.gamma.diag(nu));
                if !(g > 0.0 && a >= 0.0 && a + g < 1.0) {
                    return Err(RmgError::InvalidParams(format!(
                        "need 0 < gamma_{nu}{nu} < gamma + alpha < 1, got alpha = {a}, gamma = {g}"
                    )));
                }
            }
        }
        let tied = Self::from_free(self.tier, &self.free_values(), self.noise);
        if tied.alpha != self.alpha || tied.gamma != self.gamma {
            return Err(RmgError::InvalidParams(format!(
                "parameters do not respect the {:?} tier tying",
                self.tier
            )));
        }
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RmgError::io(path, e))?;
        let p: ModelParams = serde_json::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }
}

/// State `(v0, v1, beta)` at day `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovState {
    pub t: usize,
    pub v0: f64,
    pub v1: f64,
    pub beta: Vec<f64>,
}

impl CovState {
    /// Start from the target: `v_v = v_bar_v`, `beta = beta_bar`.
    pub fn initial(target: &TargetSpec) -> Self {
        Self {
            t: 0,
            v0: target.v_bar_0,
            v1: target.v_bar_1,
            beta: target.beta_bar.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.beta.len()
    }

    /// Coefficient of `beta beta'` in `H`.
    pub fn u(&self) -> f64 {
        self.v0 - self.v1 / self.n() as f64
    }

    /// Market eigenvalue `N v0`.
    pub fn market_eigenvalue(&self) -> f64 {
        self.n() as f64 * self.v0
    }

    /// `ln det H = ln(N v0) + (N - 1) ln v1`.
    pub fn log_det(&self) -> f64 {
        let n = self.n() as f64;
        (n * self.v0).ln() + (n - 1.0) * self.v1.ln()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0 && self.v1 > 0.0 && self.v0.is_finite() && self.v1.is_finite()) {
            return Err(RmgError::NonPositiveLevel {
                v0: self.v0,
                v1: self.v1,
            });
        }
        let n = self.n() as f64;
        let drift = norm_sq(&self.beta) / n - 1.0;
        if !(drift.abs() <= 1e-8) {
            return Err(RmgError::InvalidInput(format!(
                "beta' beta / N - 1 = {drift:.3e} at t = {}",
                self.t
            )));
        }
        Ok(())
    }
}

/// Returns projected on the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedReturns {
    /// `beta' r / N`.
    pub r_m: f64,
    pub rho2_0: f64,
    pub rho2_1: f64,
    /// `beta_bar' beta / N`.
    pub m_bar: f64,
}

pub fn project_returns(state: &CovState, target: &TargetSpec, r: &[f64]) -> ProjectedReturns {
    let n = state.n() as f64;
    let r_m = dot(&state.beta, r) / n;
    let rho2_0 = r_m * r_m;
    let rho2_1 = (norm_sq(r) / n - rho2_0).max(0.0);
    let m_bar = dot(&target.beta_bar, &state.beta) / n;
    ProjectedReturns {
        r_m,
        rho2_0,
        rho2_1,
        m_bar,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    #[default]
    Exact,
    LargeN,
}

/// Quantities known at day `t` that drive the step.
#[derive(Debug, Clone)]
pub struct StepTerms {
    pub proj: ProjectedReturns,
    /// Projected target levels `tr(H_bar P_v) / N`.
    pub h_bar: [f64; 2],
    pub a: [f64; 2],
    /// Turning direction of beta; orthogonal to `beta(t)`.
    pub d: Vec<f64>,
    pub d_sq: f64,
}

fn check_dims(state: &CovState, target: &TargetSpec, r: &[f64]) -> Result<()> {
    let n = state.n();
    for len in [target.n(), r.len()] {
        if len != n {
            return Err(RmgError::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    Ok(())
}

fn turning_direction(
    state: &CovState,
    target: &TargetSpec,
    r: &[f64],
    r_m: f64,
    m_bar: f64,
    alpha_10: f64,
    gamma_10: f64,
    u_bar: f64,
) -> (Vec<f64>, f64) {
    // D_i = a r_i + b beta_bar_i - c beta_i
    let a = alpha_10 * r_m;
    let b = gamma_10 * m_bar * u_bar;
    let c = alpha_10 * r_m * r_m + gamma_10 * m_bar * m_bar * u_bar;
    let mut d_sq = 0.0;
    let d: Vec<f64> = r
        .iter()
        .zip(&target.beta_bar)
        .zip(&state.beta)
        .map(|((ri, bbi), bi)| {
            let x = a * ri + b * bbi - c * bi;
            d_sq += x * x;
            x
        })
        .collect();
    (d, d_sq)
}

/// Exact-step driving terms.
pub fn step_terms(
    state: &CovState,
    target: &TargetSpec,
    params: &ModelParams,
    r: &[f64],
) -> Result<StepTerms> {
    check_dims(state, target, r)?;
    let n = state.n() as f64;
    let proj = project_returns(state, target, r);
    let (al, ga) = (&params.alpha, &params.gamma);

    let w = [state.v0, (n - 1.0) / n * state.v1];
    let u_bar = target.u_bar();
    let s = 1.0 - proj.m_bar * proj.m_bar;
    let h_bar = [
        target.v_bar_0 - s * u_bar,
        (n - 1.0) / n * target.v_bar_1 + s * u_bar,
    ];
    let rho = [proj.rho2_0, proj.rho2_1];
    let a = [0, 1].map(|nu| {
        let (an, gn) = (al.diag(nu), ga.diag(nu));
        (1.0 - an - gn) * w[nu] + an * rho[nu] + gn * h_bar[nu]
    });
    let (d, d_sq) = turning_direction(state, target, r, proj.r_m, proj.m_bar, al.off, ga.off, u_bar);
    Ok(StepTerms {
        proj,
        h_bar,
        a,
        d,
        d_sq,
    })
}

/// Roots of the overlap quadratic in `x = m^2`, larger first.
pub fn overlap_roots(a0: f64, a1: f64, d_sq: f64, n: f64) -> [f64; 2] {
    let q = a0 - (a0 + a1) / n;
    let qq = q * q;
    let d2 = d_sq / n;
    let a = qq + d2;
    let b = qq + 2.0 * d2 / n;
    let c = d2 / (n * n);
    // b^2 - 4ac simplifies to a sum of nonnegative terms
    let disc = qq * qq + 4.0 * qq * d2 * (n - 1.0) / (n * n);
    let hi = (b + disc.sqrt()) / (2.0 * a);
    let lo = if hi > 0.0 { c / (a * hi) } else { 0.0 };
    [hi, lo]
}

/// The two solutions `(x, u)` of the overlap quadratic, `u > 0` branch first.
///
/// `u = q / (x - 1/N)` is evaluated in a form without the `0/0` at `q = 0`:
/// `u = +-2a / (R +- q (1 - 2/N))`, `R = sqrt(q^2 + 4 d2 (N - 1) / N^2)`.
pub fn overlap_branches(a0: f64, a1: f64, d_sq: f64, n: f64) -> [(f64, f64); 2] {
    let q = a0 - (a0 + a1) / n;
    let d2 = d_sq / n;
    let a = q * q + d2;
    let r = (q * q + 4.0 * d2 * (n - 1.0) / (n * n)).sqrt();
    let g = q * (1.0 - 2.0 / n);
    let u_plus = 2.0 * a / (r + g);
    let u_minus = -2.0 * a / (r - g);
    [(1.0 / n + q / u_plus, u_plus), (1.0 / n + q / u_minus, u_minus)]
}

/// Advance one day with the exact projected recursion.
pub fn step_exact(
    state: &CovState,
    target: &TargetSpec,
    params: &ModelParams,
    r: &[f64],
) -> Result<CovState> {
    let terms = step_terms(state, target, params, r)?;
    let n_usize = state.n();
    let n = n_usize as f64;
    let [a0, a1] = terms.a;

    if terms.d_sq == 0.0 {
        // m = 1, beta unchanged
        let v0 = a0;
        let v1 = if n_usize > 1 { n / (n - 1.0) * a1 } else { state.v1 };
        if !(v0 > 0.0 && v1 > 0.0) {
            return Err(RmgError::NonPositiveLevel { v0, v1 });
        }
        return Ok(CovState {
            t: state.t + 1,
            v0,
            v1,
            beta: state.beta.clone(),
        });
    }

    let inv_n = 1.0 / n;
    let mut chosen = None;
    // market level above the bulk first, so the state is continuous in q
    for (x, u) in overlap_branches(a0, a1, terms.d_sq, n) {
        if !(x > 0.0 && x <= 1.0 + 1e-12) || !u.is_finite() || u == 0.0 {
            continue;
        }
        let x = x.min(1.0);
        let v1 = a0 + a1 - u;
        let v0 = u + v1 * inv_n;
        if v0 > 0.0 && v1 > 0.0 {
            chosen = Some((x, u, v0, v1));
            break;
        }
    }
    let Some((x, u, v0, v1)) = chosen else {
        return Err(RmgError::NoAdmissibleRoot {
            a0,
            a1,
            d_sq: terms.d_sq,
            candidates: overlap_roots(a0, a1, terms.d_sq, n).to_vec(),
        });
    };
    let m = x.sqrt();
    let k = 1.0 / (u * m);
    let mut beta = terms.d;
    beta.iter_mut()
        .zip(&state.beta)
        .for_each(|(b, old)| *b = m * old + k * *b);
    renormalize(&mut beta, n);
    Ok(CovState {
        t: state.t + 1,
        v0,
        v1,
        beta,
    })
}

/// Regression bound for `step_large_n` against `step_exact` at N = 356:
/// relative error in the levels, `1 - |overlap|/N` for the loadings and the
/// relative per-day likelihood along filtered paths. Measured worst case on
/// simulated heavy-tailed panels was 2.3e-3.
pub const TOL_LARGE_N: f64 = 5e-3;

/// Advance one day with the large-N simplification: `w_v = v_v`,
/// `u_bar = v_bar_0`, `m^2 = 1 / (1 + d)` with `d = D'D / (A0^2 N)`.
pub fn step_large_n(
    state: &CovState,
    target: &TargetSpec,
    params: &ModelParams,
    r: &[f64],
) -> Result<CovState> {
    check_dims(state, target, r)?;
    let n = state.n() as f64;
    let proj = project_returns(state, target, r);
    let (al, ga) = (&params.alpha, &params.gamma);
    let s = 1.0 - proj.m_bar * proj.m_bar;
    let v_bar = [target.v_bar_0, target.v_bar_1];
    let v = [state.v0, state.v1];
    let rho = [proj.rho2_0, proj.rho2_1];
    let sign = [1.0, -1.0];
    // A_v with large-N projected targets v_bar_v -+ (1 - m_bar^2) v_bar_0
    let a = [0, 1].map(|nu| {
        let (an, gn) = (al.diag(nu), ga.diag(nu));
        (1.0 - an - gn) * v[nu] + an * rho[nu] + gn * (v_bar[nu] - sign[nu] * s * target.v_bar_0)
    });
    let a0 = a[0];
    if a0 == 0.0 || !a0.is_finite() {
        return Err(RmgError::DegenerateMarketLevel(a0));
    }
    let (mut beta, d_sq) = turning_direction(
        state,
        target,
        r,
        proj.r_m,
        proj.m_bar,
        al.off,
        ga.off,
        target.v_bar_0,
    );
    let d = d_sq / (a0 * a0 * n);
    let v0 = a0 + d * a0;
    let v1 = a[1] - d * a0;
    if !(v0 > 0.0 && v1 > 0.0) {
        return Err(RmgError::NonPositiveLevel { v0, v1 });
    }
    let k = 1.0 / a0.abs();
    let scale = 1.0 / (1.0 + d).sqrt();
    beta.iter_mut()
        .zip(&state.beta)
        .for_each(|(b, old)| *b = scale * (old + k * *b));
    renormalize(&mut beta, n);
    Ok(CovState {
        t: state.t + 1,
        v0,
        v1,
        beta,
    })
}

pub fn step(
    mode: StepMode,
    state: &CovState,
    target: &TargetSpec,
    params: &ModelParams,
    r: &[f64],
) -> Result<CovState> {
    match mode {
        StepMode::Exact => step_exact(state, target, params, r),
        StepMode::LargeN => step_large_n(state, target, params, r),
    }
}

/// Lower bounds `gamma/(gamma + alpha) (m0^2)^(1-v) v_bar_v` that hold while
/// the overlap with the target stays above `m_bar^2 >= (1 + m0^2)/2`.
pub fn positivity_floor(params: &ModelParams, target: &TargetSpec, m0_sq: f64) -> (f64, f64) {
    let ratio = |nu: usize| {
        let (a, g) = (params.alpha.diag(nu), params.gamma.diag(nu));
        g / (g + a)
    };
    (ratio(0) * m0_sq * target.v_bar_0, ratio(1) * target.v_bar_1)
}

pub fn write_states_json(path: impl AsRef<Path>, states: &[CovState]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| RmgError::io(path, e))?;
    serde_json::to_writer(std::io::BufWriter::new(f), states)?;
    Ok(())
}

pub fn read_states_json(path: impl AsRef<Path>) -> Result<Vec<CovState>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| RmgError::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}
