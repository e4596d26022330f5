//! Derivative-free minimizers: Nelder-Mead simplex and golden-section search.
//!
//! Both are deterministic. Objective values of `+inf` or NaN mark infeasible
//! points and are never accepted as improvements.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Initial simplex offset along each coordinate.
    pub step: f64,
    pub max_evals: usize,
    /// Stop when the spread of simplex values is below `ftol (|f_best| + ftol)`
    /// and every vertex is within `xtol` of the best one.
    pub ftol: f64,
    pub xtol: f64,
    /// Number of restarts from the best point after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            step: 0.25,
            max_evals: 4000,
            ftol: 1e-10,
            xtol: 1e-7,
            restarts: 1,
        }
    }
}

impl NelderMeadOptions {
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_max_evals(mut self, n: usize) -> Self {
        self.max_evals = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// Minimize `f` starting from `x0`.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> MinResult {
    let mut best = MinResult {
        x: x0.to_vec(),
        f: sanitize(f(x0)),
        iterations: 0,
        evals: 1,
        converged: false,
    };
    for _ in 0..=opts.restarts {
        let budget = opts.max_evals.saturating_sub(best.evals);
        if budget == 0 {
            break;
        }
        let run = nm_run(&mut f, &best.x, opts, budget);
        let improved = run.f < best.f;
        let iterations = best.iterations + run.iterations;
        let evals = best.evals + run.evals;
        let small_gain = (best.f - run.f).abs() <= opts.ftol * (best.f.abs() + opts.ftol);
        if improved || run.f == best.f {
            best.x = run.x;
            best.f = run.f;
        }
        best.iterations = iterations;
        best.evals = evals;
        best.converged = run.converged;
        if run.converged && small_gain {
            break;
        }
    }
    best
}

fn nm_run(f: &mut impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions, budget: usize) -> MinResult {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut iterations = 0;
    let mut converged = false;

    while evals < budget {
        // stable sort keeps ties in insertion order
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let f_best = values[0];
        let f_worst = values[n];
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_best.is_finite()
            && (f_worst - f_best).abs() <= opts.ftol * (f_best.abs() + opts.ftol)
            && x_spread <= opts.xtol
        {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for x in &simplex[..n] {
            centroid.iter_mut().zip(x).for_each(|(c, xi)| *c += xi / n as f64);
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        let x_best = simplex[0].clone();
        for i in 1..=n {
            let xs: Vec<f64> = x_best
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            values[i] = eval(&xs, &mut evals);
            simplex[i] = xs;
        }
    }

    let i_best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    MinResult {
        x: simplex[i_best].clone(),
        f: values[i_best],
        iterations,
        evals,
        converged,
    }
}

/// Minimize a unimodal `f` on `[a, b]`. Returns `(x, f(x))`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sanitize(f(c));
    let mut fd = sanitize(f(d));
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sanitize(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sanitize(f(d));
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 20_000,
            xtol: 1e-10,
            ftol: 1e-16,
            ..Default::default()
        };
        let r = nelder_mead(f, &[-1.2, 1.0], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let f = |x: &[f64]| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 0.7).powi(2) + x[1] * x[1] };
        let r = nelder_mead(f, &[1.0, 1.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 0.7).abs() < 1e-5);
        assert!(r.f.is_finite());
    }

    #[test]
    fn deterministic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(4) + (x[1] + x[0]).powi(2) + x[2].cosh();
        let a = nelder_mead(f, &[0.0, 0.0, 1.0], &NelderMeadOptions::default());
        let b = nelder_mead(f, &[0.0, 0.0, 1.0], &NelderMeadOptions::default());
        assert_eq!(a, b);
    }

    #[test]
    fn golden() {
        let (x, fx) = golden_section(|x| (x - 2.0).powi(2) + 1.0, 0.0, 5.0, 1e-10, 200);
        assert!((x - 2.0).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-15);
    }
}
