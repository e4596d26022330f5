mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rmg_core::recursion::{positivity_floor, project_returns, step_exact, step_large_n, step_terms, CovState, TOL_LARGE_N};
use rmg_core::simulation::{simulate_path, SimOptions};
use rmg_core::{ModelParams, NoiseModel, Sym2};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn exact_step_satisfies_projected_recursion() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (mut worst, mut failures) = (0.0f64, 0);
    for _ in 0..1000 {
        let tgt = random_target(&mut rng, 5);
        let s = random_state(&mut rng, &tgt);
        let p = random_params(&mut rng);
        let r = random_returns(&mut rng, &s);
        match step_exact(&s, &tgt, &p, &r) {
            Ok(next) => worst = worst.max(r1_residual(&s, &next, &tgt, &p, &r)),
            Err(e) => {
                failures += 1;
                eprintln!("{e}");
            }
        }
    }
    eprintln!("worst {worst:e} failures {failures}");
    assert!(worst < 1e-10);
}

// market level at or below the bulk level per asset: q = A0 - (A0 + A1)/N < 0
#[test]
fn market_below_bulk_days_still_solve_the_recursion() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut seen = 0;
    for _ in 0..4000 {
        let n = 6;
        let tgt = random_target(&mut rng, n);
        let mut s = random_state(&mut rng, &tgt);
        s.v0 = s.v1 * (0.05 + 0.3 * rng.random::<f64>()) / n as f64;
        let p = random_params(&mut rng);
        let r = random_returns(&mut rng, &s);
        let terms = step_terms(&s, &tgt, &p, &r).unwrap();
        let q = terms.a[0] - (terms.a[0] + terms.a[1]) / n as f64;
        if q >= 0.0 {
            continue;
        }
        if let Ok(next) = step_exact(&s, &tgt, &p, &r) {
            seen += 1;
            assert!(r1_residual(&s, &next, &tgt, &p, &r) < 1e-10);
        }
    }
    assert!(seen > 100, "only {seen} q < 0 cases");
}

#[test]
fn next_state_is_continuous_through_equal_levels() {
    // sweep the market level through the point where q changes sign
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let n = 8;
    let tgt = random_target(&mut rng, n);
    let base = random_state(&mut rng, &tgt);
    let p = ModelParams::six(Sym2::new(0.05, 0.2, 0.03), Sym2::new(0.002, 0.01, 0.01), NoiseModel::Gaussian);
    let r = random_returns(&mut rng, &base);
    let mut prev: Option<CovState> = None;
    let mut signs = (false, false);
    for k in 0..=2000 {
        let mut s = base.clone();
        s.v0 = base.v1 / n as f64 * (0.2 + 1.6 * k as f64 / 2000.0);
        let terms = step_terms(&s, &tgt, &p, &r).unwrap();
        let q = terms.a[0] - (terms.a[0] + terms.a[1]) / n as f64;
        if q < 0.0 {
            signs.0 = true;
        } else {
            signs.1 = true;
        }
        let next = step_exact(&s, &tgt, &p, &r).unwrap();
        if let Some(pr) = &prev {
            let jump = (next.v0 - pr.v0).abs() + (next.v1 - pr.v1).abs();
            let turn: f64 = next.beta.iter().zip(&pr.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(jump < 1e-2 && turn < 5e-2, "jump {jump} turn {turn} at k = {k}");
        }
        prev = Some(next);
    }
    assert!(signs.0 && signs.1, "sweep did not cross q = 0");
}

#[test]
fn positivity_floor_holds_on_long_paths() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let m0_sq = 0.8;
    for seed in 0..10 {
        let tgt = random_target(&mut rng, 30);
        let p = random_params(&mut rng);
        let opts = SimOptions { burn_in: 0, ..Default::default() };
        let path = simulate_path(&tgt, &p, 3000, seed, &opts).unwrap();
        let (f0, f1) = positivity_floor(&p, &tgt, m0_sq);
        // the bound is inductive: it covers the stretch over which the
        // overlap has stayed above the threshold since the start
        for s in &path.states {
            assert!(s.v0 >= f0 && s.v1 >= f1, "t = {} v = ({}, {}) floor ({f0}, {f1})", s.t, s.v0, s.v1);
            let m = project_returns(s, &tgt, &vec![0.0; 30]).m_bar;
            if m * m < (1.0 + m0_sq) / 2.0 {
                break;
            }
        }
    }
}

#[test]
fn large_n_step_tracks_exact_step() {
    let tgt = spread_target(300, 3, 0.3, 0.3, 0.7);
    let p = reference_params(5.0);
    let path = simulate_path(&tgt, &p, 300, 9, &SimOptions::default()).unwrap();
    let mut worst = 0.0f64;
    for (t, s) in path.states.iter().enumerate().take(299) {
        let r = path.panel.row(t);
        let a = step_exact(s, &tgt, &p, r).unwrap();
        let b = step_large_n(s, &tgt, &p, r).unwrap();
        worst = worst.max(((a.v0 - b.v0) / a.v0).abs()).max(((a.v1 - b.v1) / a.v1).abs());
    }
    assert!(worst < TOL_LARGE_N, "worst {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn step_invariants(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let tgt = random_target(&mut rng, n);
        let s = random_state(&mut rng, &tgt);
        let p = random_params(&mut rng);
        let r = random_returns(&mut rng, &s);
        let terms = step_terms(&s, &tgt, &p, &r).unwrap();
        let d_norm = terms.d_sq.sqrt();
        prop_assert!(dot(&s.beta, &terms.d).abs() <= 1e-10 * d_norm.max(1e-300) * (n as f64).sqrt() + 1e-300);
        if let Ok(next) = step_exact(&s, &tgt, &p, &r) {
            prop_assert!(next.v0 > 0.0 && next.v1 > 0.0);
            prop_assert!((dot(&next.beta, &next.beta) - n as f64).abs() < 1e-10 * n as f64);
            prop_assert!(r1_residual(&s, &next, &tgt, &p, &r) < 1e-9);
            prop_assert_eq!(next.t, s.t + 1);
        }
    }

    #[test]
    fn frozen_parameters_fix_the_state(seed in any::<u64>(), n in 2usize..20) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let tgt = random_target(&mut rng, n);
        let s = random_state(&mut rng, &tgt);
        let r = random_returns(&mut rng, &s);
        let next = step_exact(&s, &tgt, &ModelParams::frozen(NoiseModel::Gaussian), &r).unwrap();
        prop_assert!((next.v0 - s.v0).abs() < 1e-12 * s.v0);
        prop_assert!((next.v1 - s.v1).abs() < 1e-12 * s.v1);
        for (a, b) in next.beta.iter().zip(&s.beta) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
