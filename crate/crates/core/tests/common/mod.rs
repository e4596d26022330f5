//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rmg_core::recursion::{CovState, ModelParams, Sym2};
use rmg_core::{NoiseModel, TargetSpec};

pub fn renorm(v: &mut [f64]) {
    let n = v.len() as f64;
    let s: f64 = v.iter().map(|x| x * x).sum();
    let k = (n / s).sqrt();
    v.iter_mut().for_each(|x| *x *= k);
}

pub fn dense_h(state: &CovState) -> DMatrix<f64> {
    let n = state.n();
    let b = DVector::from_column_slice(&state.beta);
    let p0 = &b * b.transpose() / n as f64;
    let p1 = DMatrix::identity(n, n) - &p0;
    p0 * (n as f64 * state.v0) + p1 * state.v1
}

pub fn dense_target(t: &TargetSpec) -> DMatrix<f64> {
    let n = t.n();
    let b = DVector::from_column_slice(&t.beta_bar);
    &b * b.transpose() * t.u_bar() + DMatrix::identity(n, n) * t.v_bar_1
}

pub fn projectors(beta: &[f64]) -> [DMatrix<f64>; 2] {
    let n = beta.len();
    let b = DVector::from_column_slice(beta);
    let p0 = &b * b.transpose() / n as f64;
    let p1 = DMatrix::identity(n, n) - &p0;
    [p0, p1]
}

/// `f(H)` through a full eigendecomposition.
pub fn dense_fn(h: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(h.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Largest gap between the projected blocks of `H(t+1)` and of the dense
/// diagonal-vector update. Blocks (0,0), (0,1), (1,0) entrywise; block (1,1)
/// through its trace, which is all a single bulk level can match.
pub fn r1_residual(
    state: &CovState,
    next: &CovState,
    target: &TargetSpec,
    params: &ModelParams,
    r: &[f64],
) -> f64 {
    let h = dense_h(state);
    let hb = dense_target(target);
    let rv = DVector::from_column_slice(r);
    let rr = &rv * rv.transpose();
    let h1 = dense_h(next);
    let p = projectors(&state.beta);
    let coef = |a: usize, b: usize, m: &Sym2| match (a, b) {
        (0, 0) => m.d0,
        (1, 1) => m.d1,
        _ => m.off,
    };
    let mut worst = 0.0f64;
    for a in 0..2 {
        for b in 0..2 {
            let al = coef(a, b, &params.alpha);
            let ga = coef(a, b, &params.gamma);
            let m = &h + (&rr - &h) * al + (&hb - &h) * ga;
            let lhs = &p[a] * &h1 * &p[b];
            let rhs = &p[a] * m * &p[b];
            let scale = 1.0 + rhs.abs().max();
            let gap = if a == 1 && b == 1 {
                (lhs.trace() - rhs.trace()).abs()
            } else {
                (lhs - rhs).abs().max()
            };
            worst = worst.max(gap / scale);
        }
    }
    worst
}

pub fn random_target(rng: &mut ChaCha20Rng, n: usize) -> TargetSpec {
    let beta: Vec<f64> = (0..n).map(|_| 1.0 + 0.4 * (rng.random::<f64>() - 0.5)).collect();
    let v1 = 0.2 + rng.random::<f64>();
    let v0 = v1 * (1.0 + 4.0 * rng.random::<f64>());
    TargetSpec::new(v0, v1, beta).unwrap()
}

pub fn random_state(rng: &mut ChaCha20Rng, target: &TargetSpec) -> CovState {
    let mut beta: Vec<f64> = target
        .beta_bar
        .iter()
        .map(|b| b + 0.3 * (rng.random::<f64>() - 0.5))
        .collect();
    renorm(&mut beta);
    CovState {
        t: 0,
        v0: target.v_bar_0 * (0.5 + rng.random::<f64>()),
        v1: target.v_bar_1 * (0.5 + rng.random::<f64>()),
        beta,
    }
}

/// Diagonals inside the open box, off-diagonals inside the PSD bound.
pub fn random_params(rng: &mut ChaCha20Rng) -> ModelParams {
    let mut pair = || {
        let g = 0.01 + 0.2 * rng.random::<f64>();
        let a = 0.3 * rng.random::<f64>();
        (a, g)
    };
    let (a0, g0) = pair();
    let (a1, g1) = pair();
    let a10 = (a0 * a1).sqrt() * (2.0 * rng.random::<f64>() - 1.0);
    let g10 = (g0 * g1).sqrt() * (2.0 * rng.random::<f64>() - 1.0);
    ModelParams::six(Sym2::new(a0, a1, a10), Sym2::new(g0, g1, g10), NoiseModel::Gaussian)
}

pub fn random_returns(rng: &mut ChaCha20Rng, state: &CovState) -> Vec<f64> {
    let eta: Vec<f64> = (0..state.n())
        .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng))
        .collect();
    rmg_core::likelihood::sqrt_apply(state, &eta)
}

/// Gaussian log-density of `r` under `N(0, h)` from a Cholesky factor.
pub fn dense_gaussian_logpdf(h: &DMatrix<f64>, r: &[f64]) -> f64 {
    let n = r.len() as f64;
    let chol = h.clone().cholesky().expect("positive definite");
    let rv = DVector::from_column_slice(r);
    let z = chol.solve(&rv);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * rv.dot(&z)
}

/// `(#{x > y} - #{x < y}) / (|x| |y|)` over all pairs.
pub fn brute_cliffs(x: &[f64], y: &[f64]) -> f64 {
    let mut s: i64 = 0;
    for a in x {
        for b in y {
            s += (a > b) as i64 - (a < b) as i64;
        }
    }
    s as f64 / (x.len() * y.len()) as f64
}

/// Six-parameter generator used for recovery runs.
pub fn reference_params(nu: f64) -> ModelParams {
    ModelParams::six(
        Sym2::new(0.0514, 0.2487, 0.01673),
        Sym2::new(0.0413, 0.00781, 0.00298),
        NoiseModel::StudentT { nu },
    )
}

/// Target with betas spread uniformly in `1 +- spread` before normalization.
pub fn spread_target(n: usize, seed: u64, spread: f64, v0: f64, v1: f64) -> TargetSpec {
    use rand::SeedableRng;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..n).map(|_| 1.0 + spread * (2.0 * rng.random::<f64>() - 1.0)).collect();
    TargetSpec::new(v0, v1, beta).unwrap()
}

fn unit_beta(v: Vec<f64>) -> Vec<f64> {
    let mut v = v;
    renorm(&mut v);
    v
}

/// Three sectors of 20 assets. Before `t_star` sector A carries the high
/// betas, from `t_star` on sector B does. Returns the panel, the sector
/// labels and `t_star`.
pub fn planted_sector_switch(seed: u64, t_len: usize) -> (rmg_core::ReturnsPanel, Vec<String>, usize) {
    use rand::SeedableRng;
    let n = 60;
    let sectors: Vec<String> = (0..n).map(|i| ["A", "B", "C"][i / 20].to_string()).collect();
    let levels = |a: f64, b: f64| unit_beta((0..n).map(|i| [a, b, 1.0][i / 20]).collect());
    let (before, after) = (levels(1.3, 0.85), levels(0.85, 1.3));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let t_star = t_len / 3 + rng.random_range(0..t_len / 3);
    let sampler = NoiseModel::StudentT { nu: 5.0 }.sampler();
    let mut r = ndarray::Array2::zeros((t_len, n));
    let mut eta = vec![0.0; n];
    for t in 0..t_len {
        let beta = if t < t_star { before.clone() } else { after.clone() };
        let s = CovState { t, v0: 1.0, v1: 0.1, beta };
        sampler.fill(&mut rng, &mut eta);
        let x = rmg_core::likelihood::sqrt_apply(&s, &eta);
        r.row_mut(t).iter_mut().zip(&x).for_each(|(o, v)| *o = *v);
    }
    (rmg_core::ReturnsPanel::synthetic(r).unwrap(), sectors, t_star)
}

/// Add a drift along `beta(t)` that falls with the trailing month of `v0`.
/// Returns the planted panel.
pub fn plant_leverage(returns: &ndarray::Array2<f64>, states: &[CovState], strength: f64) -> ndarray::Array2<f64> {
    let v0: Vec<f64> = states.iter().map(|s| s.v0).collect();
    let t_len = v0.len();
    let mean = v0.iter().sum::<f64>() / t_len as f64;
    let mut out = returns.clone();
    for t in 1..t_len {
        let lo = t.saturating_sub(21);
        let past = v0[lo..t].iter().sum::<f64>() / (t - lo) as f64;
        let delta = -strength * (past - mean) / mean.sqrt();
        for (o, b) in out.row_mut(t).iter_mut().zip(&states[t].beta) {
            *o += delta * b;
        }
    }
    out
}
