//! Covariance targeting by the leading eigenpair of the sample covariance.
//!
//! The unconditional covariance is assumed to be
//! `H_bar = N v_bar_0 e e' + v_bar_1 (I - e e')` with `beta_bar = sqrt(N) e`.
//! The market level follows from the largest eigenvalue of `C = R'R / T`, the
//! bulk level from `tr(C) / N = v_bar_0 + v_bar_1`. `C` itself is never
//! formed; every product `C v` is computed as `R'(R v) / T`.

use std::path::Path;

use chrono::NaiveDate;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmgError};
use crate::panel::ReturnsPanel;
use crate::vecops::{dot, norm_sq};

/// Inclusive calibration window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

/// Unconditional market level, bulk level and target betas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub v_bar_0: f64,
    pub v_bar_1: f64,
    pub beta_bar: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

impl TargetSpec {
    /// Build a target, rescaling `beta_bar` to `beta_bar' beta_bar = N` and
    /// fixing its sign so that `sum beta_bar >= 0`.
    pub fn new(v_bar_0: f64, v_bar_1: f64, mut beta_bar: Vec<f64>) -> Result<Self> {
        let n = beta_bar.len() as f64;
        let ss = norm_sq(&beta_bar);
        if ss <= 0.0 || !ss.is_finite() {
            return Err(RmgError::InvalidInput("beta_bar must be a nonzero finite vector".into()));
        }
        let k = (n / ss).sqrt() * if beta_bar.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        beta_bar.iter_mut().for_each(|b| *b *= k);
        let t = TargetSpec {
            v_bar_0,
            v_bar_1,
            beta_bar,
            window: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_bar_0 > 0.0 && self.v_bar_0.is_finite()) {
            return Err(RmgError::InvalidInput(format!("v_bar_0 = {} must be > 0", self.v_bar_0)));
        }
        if !(self.v_bar_1 > 0.0 && self.v_bar_1.is_finite()) {
            return Err(RmgError::InvalidInput(format!("v_bar_1 = {} must be > 0", self.v_bar_1)));
        }
        let n = self.n() as f64;
        let ss = norm_sq(&self.beta_bar);
        if (ss / n - 1.0).abs() > 1e-10 {
            return Err(RmgError::InvalidInput(format!(
                "beta_bar' beta_bar / N = {} must equal 1",
                ss / n
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.beta_bar.len()
    }

    /// Coefficient of `beta_bar beta_bar'` in `H_bar`: `v_bar_0 - v_bar_1 / N`.
    pub fn u_bar(&self) -> f64 {
        self.v_bar_0 - self.v_bar_1 / self.n() as f64
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RmgError::io(path, e))?;
        let t: TargetSpec = serde_json::from_str(&text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| RmgError::io(path, e))
    }
}

/// `C v` with `C = R'R / T`, computed without forming `C`.
pub fn sample_covariance_apply(panel: &ReturnsPanel, v: &[f64]) -> Result<Vec<f64>> {
    covariance_apply_view(panel.returns().view(), v)
}

pub(crate) fn covariance_apply_view(r: ArrayView2<'_, f64>, v: &[f64]) -> Result<Vec<f64>> {
    let (t, n) = r.dim();
    if v.len() != n {
        return Err(RmgError::DimensionMismatch {
            expected: n,
            actual: v.len(),
        });
    }
    let mut out = vec![0.0; n];
    for row in r.outer_iter() {
        let proj: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
        if proj != 0.0 {
            for (o, a) in out.iter_mut().zip(row.iter()) {
                *o += proj * a;
            }
        }
    }
    let inv_t = 1.0 / t as f64;
    out.iter_mut().for_each(|o| *o *= inv_t);
    Ok(out)
}

/// Largest eigenvalue of the sample covariance with its unit eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    /// Unit vector, sign fixed so that `sum e_i >= 0`.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `|C e - lambda e| / lambda` at exit.
    pub residual: f64,
}

/// Power iteration for the leading eigenpair of `C`. Converged when
/// `|C e - lambda e| <= tol * lambda`.
pub fn leading_eigenpair(panel: &ReturnsPanel, tol: f64, max_iter: usize) -> Result<EigenPair> {
    leading_eigenpair_view(panel.returns().view(), tol, max_iter)
}

pub(crate) fn leading_eigenpair_view(
    r: ArrayView2<'_, f64>,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPair> {
    if !(tol > 0.0) {
        return Err(RmgError::InvalidInput(format!("tol must be > 0, got {tol}")));
    }
    let n = r.ncols();
    // deterministic start with a little asymmetry so it is never orthogonal
    // to a balanced eigenvector
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * ((i % 7) as f64)).collect();
    let nv = norm_sq(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);

    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let w = covariance_apply_view(r, &v)?;
        let lambda = dot(&v, &w);
        let res: f64 = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if lambda <= 0.0 {
            return Err(RmgError::ZeroPanel);
        }
        residual = res / lambda;
        if residual <= tol {
            if v.iter().sum::<f64>() < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            return Ok(EigenPair {
                lambda,
                vector: v,
                iterations: it,
                residual,
            });
        }
        let nw = norm_sq(&w).sqrt();
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(RmgError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

#[derive(Debug, Clone)]
pub struct TargetOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Rows used when no window is given.
    pub default_rows: usize,
}

impl Default for TargetOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            default_rows: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetWarning {
    /// Fewer than `10 N` observations in the window.
    ShortWindow { rows: usize, n: usize },
    /// `N v_bar_0 < 2 v_bar_1`: no separated market eigenvalue.
    WeakMarket { market_eigenvalue: f64, v_bar_1: f64 },
}

#[derive(Debug, Clone)]
pub struct TargetEstimate {
    pub spec: TargetSpec,
    pub lambda_max: f64,
    /// `tr(C) / N`.
    pub trace_per_asset: f64,
    pub iterations: usize,
    pub rows: (usize, usize),
    pub warnings: Vec<TargetWarning>,
}

/// Estimate the target from the rows of `panel` inside `window`. Without a
/// window the first `opts.default_rows` rows are used.
pub fn target_from_panel(
    panel: &ReturnsPanel,
    window: Option<(Option<NaiveDate>, Option<NaiveDate>)>,
    opts: &TargetOptions,
) -> Result<TargetEstimate> {
    let (lo, hi) = match window {
        Some((from, to)) => panel.row_range(from, to),
        None => (0, opts.default_rows.min(panel.n_obs())),
    };
    let n = panel.n_assets();
    let rows = hi - lo;
    if rows < n || rows == 0 {
        return Err(RmgError::InvalidInput(format!(
            "calibration window has {rows} rows, need at least N = {n}"
        )));
    }
    let mut warnings = Vec::new();
    if rows < 10 * n {
        log::warn!("calibration window has {rows} rows, fewer than 10 N = {}", 10 * n);
        warnings.push(TargetWarning::ShortWindow { rows, n });
    }
    let view = panel.returns().slice(ndarray::s![lo..hi, ..]);
    let pair = leading_eigenpair_view(view, opts.tol, opts.max_iter)?;
    let trace_per_asset = view.iter().map(|x| x * x).sum::<f64>() / (rows * n) as f64;

    let nf = n as f64;
    let v_bar_0 = pair.lambda / nf;
    let v_bar_1 = trace_per_asset - v_bar_0;
    if !(v_bar_1 > 0.0) {
        return Err(RmgError::DegenerateSpectrum { v_bar_1 });
    }
    if pair.lambda < 2.0 * v_bar_1 {
        log::warn!(
            "market eigenvalue {:.4} below twice the bulk level {:.4}",
            pair.lambda,
            v_bar_1
        );
        warnings.push(TargetWarning::WeakMarket {
            market_eigenvalue: pair.lambda,
            v_bar_1,
        });
    }
    let scale = nf.sqrt();
    let beta_bar: Vec<f64> = pair.vector.iter().map(|e| e * scale).collect();
    let spec = TargetSpec {
        v_bar_0,
        v_bar_1,
        beta_bar,
        window: Some(Window {
            from: panel.dates()[lo],
            to: panel.dates()[hi - 1],
        }),
    };
    Ok(TargetEstimate {
        spec,
        lambda_max: pair.lambda,
        trace_per_asset,
        iterations: pair.iterations,
        rows: (lo, hi),
        warnings,
    })
}
