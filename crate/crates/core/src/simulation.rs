//! Monte Carlo panels from the model and pdf comparison statistics.
//!
//! All randomness comes from `ChaCha20Rng` seeded explicitly per call.
//! Parallel loops give every unit of work its own stream so results do not
//! depend on the thread count.

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::likelihood::sqrt_apply_into;
use crate::noise::NoiseModel;
use crate::panel::ReturnsPanel;
use crate::recursion::{step, CovState, ModelParams, StepMode};
use crate::targeting::TargetSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Steps discarded before the first emitted row.
    pub burn_in: usize,
    pub mode: StepMode,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            burn_in: 500,
            mode: StepMode::Exact,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub panel: ReturnsPanel,
    /// `states[t]` generated row `t`.
    pub states: Vec<CovState>,
}

/// Iterate `r_t = H(t)^{1/2} eta_t` and the exact step, starting from the
/// target state. Noise is drawn from `params.noise`.
pub fn simulate_path(
    target: &TargetSpec,
    params: &ModelParams,
    t_len: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimulatedPath> {
    params.validate()?;
    target.validate()?;
    if t_len == 0 {
        return Err(RmgError::InvalidInput("T must be at least 1".into()));
    }
    let n = target.n();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sampler = params.noise.sampler();
    let mut state = CovState::initial(target);
    let mut eta = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut returns = Array2::zeros((t_len, n));
    let mut states = Vec::with_capacity(t_len);
    for k in 0..opts.burn_in + t_len {
        sampler.fill(&mut rng, &mut eta);
        sqrt_apply_into(&state, &eta, &mut r);
        if k >= opts.burn_in {
            let t = k - opts.burn_in;
            returns.row_mut(t).iter_mut().zip(&r).for_each(|(o, x)| *o = *x);
            let mut s = state.clone();
            s.t = t;
            states.push(s);
        }
        if k + 1 < opts.burn_in + t_len {
            state = step(opts.mode, &state, target, params, &r)
                .map_err(|e| RmgError::RecursionAt { t: k, source: Box::new(e) })?;
        }
    }
    Ok(SimulatedPath {
        panel: ReturnsPanel::synthetic(returns)?,
        states,
    })
}

/// Model-implied returns: for every `t`, `replications` draws of
/// `H(t)^{1/2} eta`. Row `t * replications + k` holds draw `k` of day `t`.
pub fn predicted_returns(
    panel: &ReturnsPanel,
    states: &[CovState],
    noise: &NoiseModel,
    replications: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    noise.validate()?;
    if states.len() != panel.n_obs() {
        return Err(RmgError::DimensionMismatch {
            expected: panel.n_obs(),
            actual: states.len(),
        });
    }
    let n = panel.n_assets();
    let t_len = states.len();
    let mut out = Array2::zeros((t_len * replications, n));
    if replications == 0 {
        return Ok(out);
    }
    let sampler = noise.sampler();
    let flat = out.as_slice_mut().expect("fresh array is contiguous");
    flat.par_chunks_mut(replications * n)
        .zip(states.par_iter())
        .enumerate()
        .for_each(|(t, (block, state))| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut eta = vec![0.0; n];
            for row in block.chunks_mut(n) {
                sampler.fill(&mut rng, &mut eta);
                sqrt_apply_into(state, &eta, row);
            }
        });
    Ok(out)
}

pub const DEFAULT_REPLICATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi2Result {
    pub chi2: f64,
    /// Degrees of freedom after merging sparse bins.
    pub n_d: usize,
    pub chi2_per_dof: f64,
}

fn sorted_finite(x: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn histogram(sorted: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let mut h = vec![0.0; bins];
    for &x in sorted {
        if x < lo || x > hi {
            continue;
        }
        let k = (((x - lo) / width) as usize).min(bins - 1);
        h[k] += 1.0;
    }
    h
}

/// Merge adjacent bins (left to right) until each holds at least `min` of
/// `weight`; a short tail joins the last full group.
fn merge_bins(counts: &[Vec<f64>], weight: impl Fn(usize) -> f64, min: f64) -> Vec<Vec<f64>> {
    let k = counts[0].len();
    let mut groups: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut acc = vec![0.0; counts.len()];
    let mut w = 0.0;
    for b in 0..k {
        for (a, c) in acc.iter_mut().zip(counts) {
            *a += c[b];
        }
        w += weight(b);
        if w >= min {
            groups.push((std::mem::replace(&mut acc, vec![0.0; counts.len()]), w));
            w = 0.0;
        }
    }
    if w > 0.0 || acc.iter().any(|a| *a > 0.0) {
        match groups.last_mut() {
            Some((last, lw)) => {
                last.iter_mut().zip(&acc).for_each(|(l, a)| *l += a);
                *lw += w;
            }
            None => groups.push((acc, w)),
        }
    }
    groups.into_iter().map(|g| g.0).collect()
}

/// Two-sample chi-square per degree of freedom between the histograms of
/// `empirical` and `predicted` on their common support.
pub fn pdf_chi2(empirical: &[f64], predicted: &[f64], bins: usize) -> Result<Chi2Result> {
    if bins < 5 {
        return Err(RmgError::InvalidInput(format!("need at least 5 bins, got {bins}")));
    }
    let (a, b) = (sorted_finite(empirical), sorted_finite(predicted));
    if a.is_empty() || b.is_empty() {
        return Err(RmgError::InvalidInput("empty sample".into()));
    }
    let lo = a[0].max(b[0]);
    let hi = a[a.len() - 1].min(b[b.len() - 1]);
    if !(hi > lo) {
        return Err(RmgError::InvalidInput(format!(
            "degenerate common support [{lo}, {hi}]"
        )));
    }
    let ha = histogram(&a, lo, hi, bins);
    let hb = histogram(&b, lo, hi, bins);
    let (na, nb): (f64, f64) = (ha.iter().sum(), hb.iter().sum());
    // expected count of the smaller sample under the pooled distribution
    let n_min = na.min(nb);
    let merged = merge_bins(&[ha.clone(), hb.clone()], |k| (ha[k] + hb[k]) * n_min / (na + nb), 5.0);
    if merged.len() < 2 {
        return Err(RmgError::InvalidInput("too few populated bins".into()));
    }
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let chi2: f64 = merged
        .iter()
        .filter(|g| g[0] + g[1] > 0.0)
        .map(|g| (ka * g[0] - kb * g[1]).powi(2) / (g[0] + g[1]))
        .sum();
    let n_d = merged.len() - 1;
    Ok(Chi2Result {
        chi2,
        n_d,
        chi2_per_dof: chi2 / n_d as f64,
    })
}

/// Pearson chi-square per degree of freedom of `sample` against a
/// distribution given by its CDF, on `bins` equal bins over `[lo, hi]`.
pub fn pdf_chi2_vs_cdf(
    sample: &[f64],
    cdf: impl Fn(f64) -> f64,
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Chi2Result> {
    if bins < 5 || !(hi > lo) {
        return Err(RmgError::InvalidInput("need at least 5 bins on a non-empty range".into()));
    }
    let s = sorted_finite(sample);
    if s.is_empty() {
        return Err(RmgError::InvalidInput("empty sample".into()));
    }
    let h = histogram(&s, lo, hi, bins);
    let n: f64 = h.iter().sum();
    let (c_lo, c_hi) = (cdf(lo), cdf(hi));
    let width = (hi - lo) / bins as f64;
    // expected counts conditional on landing in [lo, hi]
    let expected: Vec<f64> = (0..bins)
        .map(|k| {
            let (a, b) = (lo + k as f64 * width, lo + (k + 1) as f64 * width);
            n * (cdf(b) - cdf(a)) / (c_hi - c_lo)
        })
        .collect();
    let merged = merge_bins(&[h, expected.clone()], |k| expected[k], 5.0);
    if merged.len() < 2 {
        return Err(RmgError::InvalidInput("too few populated bins".into()));
    }
    let chi2: f64 = merged.iter().map(|g| (g[0] - g[1]).powi(2) / g[1]).sum();
    let n_d = merged.len() - 1;
    Ok(Chi2Result {
        chi2,
        n_d,
        chi2_per_dof: chi2 / n_d as f64,
    })
}

/// Single-column CSV with header `value`.
pub fn write_sample_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| RmgError::csv(path, e))?;
    w.write_record(["value"]).map_err(|e| RmgError::csv(path, e))?;
    for v in values {
        w.write_record([v.to_string()]).map_err(|e| RmgError::csv(path, e))?;
    }
    w.flush().map_err(|e| RmgError::io(path, e))
}

/// Read the first column of a CSV with a header row as a sample.
pub fn read_sample_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| RmgError::csv(path, e))?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| RmgError::csv(path, e))?;
        let cell = rec.get(0).unwrap_or("");
        let v: f64 = cell.parse().map_err(|_| RmgError::Load {
            row: k + 2,
            column: "value".into(),
            message: format!("not a number: `{cell}`"),
        })?;
        if !v.is_finite() {
            return Err(RmgError::Load {
                row: k + 2,
                column: "value".into(),
                message: "non-finite value".into(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recursion::Sym2;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn target() -> TargetSpec {
        TargetSpec::new(0.3, 0.7, vec![1.2, 0.8, 1.0, 1.1]).unwrap()
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = ModelParams::four(0.05, 0.04, 0.2, 0.01, NoiseModel::StudentT { nu: 4.0 });
        let a = simulate_path(&target(), &p, 300, 9, &SimOptions::default()).unwrap();
        let b = simulate_path(&target(), &p, 300, 9, &SimOptions::default()).unwrap();
        assert_eq!(a.panel.returns(), b.panel.returns());
        assert_eq!(a.states, b.states);
        let c = simulate_path(&target(), &p, 300, 10, &SimOptions::default()).unwrap();
        assert_ne!(a.panel.returns(), c.panel.returns());
        assert_eq!(a.states.len(), 300);
    }

    #[test]
    fn frozen_dynamics_sample_the_target() {
        let tgt = target();
        let p = ModelParams::frozen(NoiseModel::Gaussian);
        let sim = simulate_path(&tgt, &p, 100_000, 1, &SimOptions::default()).unwrap();
        let r = sim.panel.returns();
        let t = r.nrows() as f64;
        let cov = r.t().dot(r) / t;
        let u = tgt.u_bar();
        for i in 0..4 {
            for j in 0..4 {
                let want = u * tgt.beta_bar[i] * tgt.beta_bar[j] + if i == j { tgt.v_bar_1 } else { 0.0 };
                assert!((cov[[i, j]] - want).abs() < 5.0 * 1.5 / t.sqrt(), "{i}{j}");
            }
        }
    }

    #[test]
    fn t_noise_has_heavy_tails() {
        let p = ModelParams::two(0.05, 0.04, NoiseModel::StudentT { nu: 3.35 });
        let beta: Vec<f64> = (0..30).map(|i| 0.8 + 0.4 * (i as f64 / 29.0)).collect();
        let tgt = TargetSpec::new(0.3, 0.7, beta).unwrap();
        let sim = simulate_path(&tgt, &p, 5_000, 2, &SimOptions::default()).unwrap();
        let x: Vec<f64> = sim.panel.returns().iter().copied().collect();
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let m4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / x.len() as f64;
        assert!(m4 / (m2 * m2) > 6.0);
    }

    #[test]
    fn predicted_returns_shapes_and_identity_states() {
        let tgt = TargetSpec::new(0.25, 1.0, vec![1.0; 4]).unwrap();
        let states = vec![CovState::initial(&tgt); 1000];
        let panel = ReturnsPanel::synthetic(Array2::zeros((1000, 4))).unwrap();
        assert_eq!(predicted_returns(&panel, &states, &NoiseModel::Gaussian, 0, 1).unwrap().nrows(), 0);
        let pr = predicted_returns(&panel, &states, &NoiseModel::Gaussian, DEFAULT_REPLICATIONS, 1).unwrap();
        assert_eq!(pr.dim(), (10_000, 4));
        let pooled: Vec<f64> = pr.iter().copied().collect();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let res = pdf_chi2_vs_cdf(&pooled, |x| normal.cdf(x), 50, -4.0, 4.0).unwrap();
        assert!(res.chi2_per_dof < 2.0, "{res:?}");
        let again = predicted_returns(&panel, &states, &NoiseModel::Gaussian, 10, 1).unwrap();
        assert_eq!(pr, again);
    }

    #[test]
    fn chi2_separates_normal_from_t3() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t3 = NoiseModel::StudentT { nu: 3.0 }.sampler();
        let c: Vec<f64> = (0..100_000).map(|_| t3.draw(&mut rng)).collect();
        let same = pdf_chi2(&a, &b, 50).unwrap();
        assert!((0.5..=2.0).contains(&same.chi2_per_dof), "{same:?}");
        let diff = pdf_chi2(&a, &c, 50).unwrap();
        assert!(diff.chi2_per_dof > 10.0, "{diff:?}");
        assert!(pdf_chi2(&a, &b, 4).is_err());
        assert!(pdf_chi2(&[1.0, 1.0], &[1.0], 10).is_err());
    }

    #[test]
    fn recursion_failure_carries_time() {
        // an enormous off-diagonal makes the first step inadmissible
        let p = ModelParams::six(Sym2::new(0.1, 0.1, 50.0), Sym2::new(0.1, 0.1, 50.0), NoiseModel::Gaussian);
        let err = simulate_path(&target(), &p, 50, 3, &SimOptions { burn_in: 0, ..Default::default() });
        if let Err(e) = err {
            assert!(matches!(e, RmgError::RecursionAt { .. }));
        }
    }

    #[test]
    fn sample_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let v = vec![0.25, -1.5e-3, 7.0, 1.0 / 3.0];
        write_sample_csv(&p, &v).unwrap();
        assert_eq!(read_sample_csv(&p).unwrap(), v);
    }
}
