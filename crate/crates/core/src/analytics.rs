//! Post-fit statistics on a filtered state path: conditional correlations,
//! sector medians, the beta risk measure, leverage asymmetry, autocorrelation
//! of absolute returns and the panel comparison measures.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::recursion::CovState;
use crate::vecops::mean;

/// `H_ij / sqrt(H_ii H_jj)` with `H = u beta beta' + v1 I`.
pub fn conditional_correlation(state: &CovState, i: usize, j: usize) -> f64 {
    if i == j {
        return 1.0;
    }
    let u = state.u();
    let (bi, bj) = (state.beta[i], state.beta[j]);
    let hij = u * bi * bj;
    let hii = u * bi * bi + state.v1;
    let hjj = u * bj * bj + state.v1;
    (hij / (hii * hjj).sqrt()).clamp(-1.0, 1.0)
}

pub fn conditional_correlations(state: &CovState, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs.iter().map(|&(i, j)| conditional_correlation(state, i, j)).collect()
}

/// Equicorrelation implied when every beta is one:
/// `1 / rho = 1 + N v1 / (N v0 - v1)`.
pub fn deco_correlation(state: &CovState) -> f64 {
    let n = state.n() as f64;
    1.0 / (1.0 + n * state.v1 / (n * state.v0 - state.v1))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Distinct labels in order of first appearance and their member indices.
fn groups(labels: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut order: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match order.iter_mut().find(|(s, _)| s == l) {
            Some((_, m)) => m.push(i),
            None => order.push((l.clone(), vec![i])),
        }
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorCorrRow {
    pub window_start: usize,
    pub window_end: usize,
    pub sector_a: String,
    pub sector_b: String,
    pub median_corr: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SectorCorr {
    pub rows: Vec<SectorCorrRow>,
    pub warnings: Vec<String>,
}

pub const DEFAULT_SECTOR_WINDOW: usize = 50;

/// Daily median of the conditional correlation over the pairs of each
/// sector pair, averaged over non-overlapping windows of `window` days.
pub fn sector_median_corr(states: &[CovState], sectors: &[String], window: usize) -> Result<SectorCorr> {
    if window == 0 {
        return Err(RmgError::InvalidInput("window must be positive".into()));
    }
    let n = states.first().map_or(sectors.len(), |s| s.n());
    if sectors.len() != n {
        return Err(RmgError::DimensionMismatch {
            expected: n,
            actual: sectors.len(),
        });
    }
    let mut out = SectorCorr::default();
    let kept: Vec<(String, Vec<usize>)> = groups(sectors)
        .into_iter()
        .filter(|(s, m)| {
            if m.len() < 2 {
                out.warnings.push(format!("sector `{s}` has fewer than 2 members; skipped"));
                false
            } else {
                true
            }
        })
        .collect();
    let mut combos: Vec<(usize, usize, Vec<(usize, usize)>)> = Vec::new();
    for a in 0..kept.len() {
        for b in a..kept.len() {
            let mut pairs = Vec::new();
            for &i in &kept[a].1 {
                for &j in &kept[b].1 {
                    if a != b || i < j {
                        pairs.push((i, j));
                    }
                }
            }
            combos.push((a, b, pairs));
        }
    }
    let mut buf = Vec::new();
    for (w, chunk) in states.chunks(window).enumerate() {
        for (a, b, pairs) in &combos {
            let mut acc = 0.0;
            for s in chunk {
                buf.clear();
                buf.extend(pairs.iter().map(|&(i, j)| conditional_correlation(s, i, j)));
                acc += median(&mut buf);
            }
            out.rows.push(SectorCorrRow {
                window_start: w * window,
                window_end: w * window + chunk.len() - 1,
                sector_a: kept[*a].0.clone(),
                sector_b: kept[*b].0.clone(),
                median_corr: acc / chunk.len() as f64,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskMeasure {
    pub sectors: Vec<String>,
    /// `T x S`; rows sum to one unless flagged.
    pub values: Array2<f64>,
    /// Days on which no beta exceeded the threshold.
    pub empty_rows: Vec<usize>,
}

pub const DEFAULT_BETA_THRESHOLD: f64 = 1.0;
pub const MONTH: usize = 21;

/// Volume-weighted mass of above-threshold betas per sector, normalized to
/// sum to one across sectors at each day.
pub fn risk_measure(
    states: &[CovState],
    threshold: f64,
    volumes: ArrayView2<f64>,
    sectors: &[String],
) -> Result<RiskMeasure> {
    let t_len = states.len();
    if volumes.nrows() != t_len {
        return Err(RmgError::DimensionMismatch {
            expected: t_len,
            actual: volumes.nrows(),
        });
    }
    let n = sectors.len();
    if volumes.ncols() != n {
        return Err(RmgError::DimensionMismatch {
            expected: n,
            actual: volumes.ncols(),
        });
    }
    let g = groups(sectors);
    let mut index = vec![0; n];
    for (k, (_, m)) in g.iter().enumerate() {
        for &i in m {
            index[i] = k;
        }
    }
    let mut values = Array2::zeros((t_len, g.len()));
    let mut empty_rows = Vec::new();
    for (t, s) in states.iter().enumerate() {
        if s.n() != n {
            return Err(RmgError::DimensionMismatch {
                expected: n,
                actual: s.n(),
            });
        }
        let mut row = values.row_mut(t);
        for (i, b) in s.beta.iter().enumerate() {
            if *b > threshold {
                row[index[i]] += b * volumes[[t, i]];
            }
        }
        let total: f64 = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|x| x / total);
        } else {
            row.fill(0.0);
            empty_rows.push(t);
        }
    }
    Ok(RiskMeasure {
        sectors: g.into_iter().map(|(s, _)| s).collect(),
        values,
        empty_rows,
    })
}

/// Centered moving average over `window` rows, truncated at the edges.
pub fn smooth_rows(values: &Array2<f64>, window: usize) -> Array2<f64> {
    let t_len = values.nrows();
    let half_lo = window.saturating_sub(1) / 2;
    let half_hi = window.saturating_sub(1) - half_lo;
    let mut out = Array2::zeros(values.dim());
    for t in 0..t_len {
        let lo = t.saturating_sub(half_lo);
        let hi = (t + half_hi).min(t_len.saturating_sub(1));
        let slab = values.slice(ndarray::s![lo..=hi, ..]);
        let m = slab.mean_axis(ndarray::Axis(0)).expect("non-empty slab");
        out.row_mut(t).assign(&m);
    }
    out
}

/// Index at which `a - b` switches from mostly positive to mostly negative,
/// chosen as the split that misclassifies the fewest days. `None` when the
/// difference never changes sign.
pub fn crossover_time(a: &[f64], b: &[f64]) -> Option<usize> {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if !(d.iter().any(|x| *x > 0.0) && d.iter().any(|x| *x < 0.0)) {
        return None;
    }
    // cost(k) = #{s < k : d < 0} + #{s >= k : d > 0}
    let mut cost: i64 = d.iter().filter(|x| **x > 0.0).count() as i64;
    let (mut best, mut best_cost) = (0, cost);
    for (k, x) in d.iter().enumerate() {
        if *x < 0.0 {
            cost += 1;
        } else if *x > 0.0 {
            cost -= 1;
        }
        if cost < best_cost {
            best = k + 1;
            best_cost = cost;
        }
    }
    Some(best)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Leverage {
    /// Lags `-t_max..=t_max`.
    pub lags: Vec<i64>,
    /// `N x (2 t_max + 1)` correlation curves.
    pub curves: Array2<f64>,
    pub asymmetry: Vec<f64>,
}

pub const DEFAULT_LEVERAGE_LAG: usize = 42;

/// Correlation between the market level `v0` shifted by `t` and each
/// asset's return:
///
/// ```text
/// L_i(t) = sum_t' (v0(t' - t) - mean v0) r_{t' i} / N_L,
/// A_i    = (1 / t_m) sum_{t=1..t_m} (L_i(t) - L_i(-t)),
/// ```
///
/// with sums over the days where both factors exist and `N_L` the product of
/// the two root sums of squares on that support.
pub fn leverage_asymmetry(v0: &[f64], returns: ArrayView2<f64>, t_max: usize) -> Result<Leverage> {
    let t_len = v0.len();
    if returns.nrows() != t_len {
        return Err(RmgError::DimensionMismatch {
            expected: t_len,
            actual: returns.nrows(),
        });
    }
    if t_max == 0 || t_max >= t_len {
        return Err(RmgError::InvalidInput(format!(
            "lag range must satisfy 1 <= t_max < T, got {t_max}"
        )));
    }
    let m = mean(v0);
    let dev: Vec<f64> = v0.iter().map(|x| x - m).collect();
    if dev.iter().all(|x| x.abs() <= 1e-15 * m.abs().max(1e-300)) {
        return Err(RmgError::ConstantVolatility);
    }
    let n = returns.ncols();
    let lags: Vec<i64> = (-(t_max as i64)..=t_max as i64).collect();
    let mut curves = Array2::zeros((n, lags.len()));
    for i in 0..n {
        let r = returns.column(i);
        for (k, &lag) in lags.iter().enumerate() {
            // t' ranges over days with t' - lag inside [0, T)
            let (lo, hi) = if lag >= 0 {
                (lag as usize, t_len)
            } else {
                (0, t_len - (-lag) as usize)
            };
            let (mut num, mut sv, mut sr) = (0.0, 0.0, 0.0);
            for tp in lo..hi {
                let v = dev[(tp as i64 - lag) as usize];
                num += v * r[tp];
                sv += v * v;
                sr += r[tp] * r[tp];
            }
            let norm = (sv * sr).sqrt();
            curves[[i, k]] = if norm > 0.0 { num / norm } else { 0.0 };
        }
    }
    let asymmetry = (0..n)
        .map(|i| {
            (1..=t_max)
                .map(|t| curves[[i, t_max + t]] - curves[[i, t_max - t]])
                .sum::<f64>()
                / t_max as f64
        })
        .collect();
    Ok(Leverage {
        lags,
        curves,
        asymmetry,
    })
}

/// Mean and its standard error.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let m = mean(x);
    if x.len() < 2 {
        return (m, f64::NAN);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

/// Autocorrelation of `|x|` per column, averaged across columns.
pub fn acf_abs(series: ArrayView2<f64>, max_lag: usize) -> Result<Vec<f64>> {
    let t_len = series.nrows();
    if 2 * max_lag >= t_len {
        return Err(RmgError::InvalidInput(format!(
            "max_lag {max_lag} must be below T/2 = {}",
            t_len / 2
        )));
    }
    let mut acc = vec![0.0; max_lag + 1];
    let mut used = 0usize;
    for col in series.columns() {
        let a: Vec<f64> = col.iter().map(|x| x.abs()).collect();
        let m = mean(&a);
        let d: Vec<f64> = a.iter().map(|x| x - m).collect();
        let c0: f64 = d.iter().map(|x| x * x).sum();
        if c0 <= 0.0 {
            continue;
        }
        used += 1;
        for (lag, slot) in acc.iter_mut().enumerate() {
            let c: f64 = d[..t_len - lag].iter().zip(&d[lag..]).map(|(x, y)| x * y).sum();
            *slot += c / c0;
        }
    }
    if used == 0 {
        return Err(RmgError::ConstantVolatility);
    }
    Ok(acc.into_iter().map(|x| x / used as f64).collect())
}

pub const DEFAULT_DELTA_PAIRS: usize = 70;

/// `k` distinct pairs `i < j` drawn uniformly from `n` assets.
pub fn random_pairs(n: usize, k: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    let k = k.min(total);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, k).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|mut idx| {
            // unrank idx into the upper triangle
            let mut i = 0;
            while idx >= n - 1 - i {
                idx -= n - 1 - i;
                i += 1;
            }
            (i, i + 1 + idx)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairDelta {
    pub pairs: Vec<(usize, usize)>,
    pub deltas: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// `Delta_ij = |sum_t (r_ti r_tj)_sim - (r_ti r_tj)_emp| / T`.
pub fn pair_delta(empirical: ArrayView2<f64>, simulated: ArrayView2<f64>, pairs: &[(usize, usize)]) -> Result<PairDelta> {
    if empirical.dim() != simulated.dim() {
        return Err(RmgError::InvalidInput(format!(
            "shape mismatch: {:?} vs {:?}",
            empirical.dim(),
            simulated.dim()
        )));
    }
    let (t_len, n) = empirical.dim();
    if pairs.iter().any(|&(i, j)| i >= n || j >= n) {
        return Err(RmgError::InvalidInput("pair index out of range".into()));
    }
    let deltas: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| {
            let s: f64 = (0..t_len)
                .map(|t| simulated[[t, i]] * simulated[[t, j]] - empirical[[t, i]] * empirical[[t, j]])
                .sum();
            s.abs() / t_len as f64
        })
        .collect();
    let m = mean(&deltas);
    let std = if deltas.len() > 1 {
        (deltas.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (deltas.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(PairDelta {
        pairs: pairs.to_vec(),
        deltas,
        mean: m,
        std,
    })
}

/// Cliff's delta `(#{x > y} - #{x < y}) / (|x| |y|)` by sorting; exact.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(RmgError::InvalidInput("cliffs_delta needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(RmgError::InvalidInput("cliffs_delta got NaN".into()));
    }
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let mut diff: i128 = 0;
    for v in x {
        let below = ys.partition_point(|w| w < v) as i128;
        let above = (ys.len() - ys.partition_point(|w| w <= v)) as i128;
        diff += below - above;
    }
    Ok(diff as f64 / (x.len() as f64 * y.len() as f64))
}

/// Long-format CSV: one header and string rows.
pub fn write_tidy_csv<I>(path: impl AsRef<Path>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| RmgError::csv(path, e))?;
    w.write_record(header).map_err(|e| RmgError::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| RmgError::csv(path, e))?;
    }
    w.flush().map_err(|e| RmgError::io(path, e))
}

/// `t, asset, beta` rows for a state path.
pub fn beta_rows(states: &[CovState], assets: &[String]) -> Vec<Vec<String>> {
    states
        .iter()
        .enumerate()
        .flat_map(|(t, s)| {
            s.beta
                .iter()
                .zip(assets)
                .map(move |(b, a)| vec![t.to_string(), a.clone(), b.to_string()])
        })
        .collect()
}
