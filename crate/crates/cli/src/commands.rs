use std::path::Path;

use ndarray::Array2;
use rmg_core::analytics::{
    acf_abs, beta_rows, cliffs_delta, conditional_correlation, deco_correlation, leverage_asymmetry, mean_and_se,
    pair_delta, random_pairs, risk_measure, sector_median_corr, smooth_rows, write_tidy_csv,
};
use rmg_core::baselines::{uvg_fit_panel, write_uvg_csv};
use rmg_core::estimation::{fit, FitOptions};
use rmg_core::likelihood::{degarch, fit_tail_index, loglik_path, write_degarch_csv};
use rmg_core::panel::{load_panel, load_sectors, load_volumes, InputKind, LoadOptions};
use rmg_core::recursion::{read_states_json, write_states_json, CovState, ModelParams, StepMode, Tier};
use rmg_core::simulation::{
    pdf_chi2, predicted_returns, read_sample_csv, simulate_path, write_sample_csv, SimOptions,
};
use rmg_core::targeting::{target_from_panel, TargetOptions, TargetSpec};
use rmg_core::{NoiseModel, Result, ReturnsPanel, RmgError};

use crate::{
    AcfArgs, AnalyzeCommand, BetasArgs, Chi2Args, CliffsArgs, Command, CorrArgs, DegarchArgs, DeltaArgs, FitArgs,
    LeverageArgs, ModeArg, NoiseArg, NoiseArgs, PanelArgs, PredictedArgs, RiskArgs, SectorCorrArgs, SimulateArgs,
    TailArgs, TargetArgs, TickerArgs, TierArg, UvgArgs,
};

pub fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Target(a) => target(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Degarch(a) => degarch_cmd(a),
        Command::Uvg(a) => uvg(a),
        Command::Analyze(op) => match op {
            AnalyzeCommand::Risk(a) => risk(a),
            AnalyzeCommand::Corr(a) => corr(a),
            AnalyzeCommand::SectorCorr(a) => sector_corr(a),
            AnalyzeCommand::Leverage(a) => leverage(a),
            AnalyzeCommand::Acf(a) => acf(a),
            AnalyzeCommand::Delta(a) => delta(a),
            AnalyzeCommand::Cliffs(a) => cliffs(a),
            AnalyzeCommand::Chi2(a) => chi2(a),
            AnalyzeCommand::Predicted(a) => predicted(a),
            AnalyzeCommand::Betas(a) => betas(a),
            AnalyzeCommand::Tail(a) => tail(a),
        },
    }
}

fn kind(prices: bool) -> LoadOptions {
    LoadOptions {
        kind: if prices { InputKind::Prices } else { InputKind::Returns },
    }
}

fn load(a: &PanelArgs) -> Result<ReturnsPanel> {
    let p = load_panel(&a.panel, &kind(a.prices))?;
    if a.normalize {
        p.normalize()
    } else {
        Ok(p)
    }
}

fn mode(m: ModeArg) -> StepMode {
    match m {
        ModeArg::Exact => StepMode::Exact,
        ModeArg::LargeN => StepMode::LargeN,
    }
}

fn noise(a: &NoiseArgs) -> Result<NoiseModel> {
    match a.noise {
        NoiseArg::Gauss => Ok(NoiseModel::Gaussian),
        NoiseArg::T => NoiseModel::student_t(a.nu),
    }
}

fn tier(t: TierArg) -> Tier {
    match t {
        TierArg::Two => Tier::Two,
        TierArg::Four => Tier::Four,
        TierArg::Six => Tier::Six,
    }
}

fn states_for(path: &Path, n_obs: usize) -> Result<Vec<CovState>> {
    let states = read_states_json(path)?;
    if states.len() != n_obs {
        return Err(RmgError::DimensionMismatch {
            expected: n_obs,
            actual: states.len(),
        });
    }
    Ok(states)
}

/// Tickers from the optional panel, synthetic names otherwise.
fn tickers(a: &TickerArgs, n: usize) -> Result<(Vec<String>, Option<ReturnsPanel>)> {
    match &a.panel {
        Some(p) => {
            let panel = load_panel(p, &kind(a.prices))?;
            if panel.n_assets() != n {
                return Err(RmgError::DimensionMismatch {
                    expected: n,
                    actual: panel.n_assets(),
                });
            }
            Ok((panel.assets().to_vec(), Some(panel)))
        }
        None => Ok(((0..n).map(|i| format!("A{i:04}")).collect(), None)),
    }
}

fn first_n(states: &[CovState]) -> Result<usize> {
    states
        .first()
        .map(|s| s.n())
        .ok_or_else(|| RmgError::InvalidInput("empty state path".into()))
}

fn target(a: &TargetArgs) -> Result<()> {
    let panel = load(&a.input)?;
    let window = (a.window_from.is_some() || a.window_to.is_some()).then_some((a.window_from, a.window_to));
    let opts = TargetOptions {
        default_rows: a.default_rows,
        ..Default::default()
    };
    let est = target_from_panel(&panel, window, &opts)?;
    est.spec.write_json(&a.out)?;
    println!(
        "rows {}..{}  lambda_max {:.6}  v_bar_0 {:.6}  v_bar_1 {:.6}",
        est.rows.0, est.rows.1, est.lambda_max, est.spec.v_bar_0, est.spec.v_bar_1
    );
    Ok(())
}

fn fit_cmd(a: &FitArgs) -> Result<()> {
    let panel = load(&a.input)?;
    let target = match &a.target {
        Some(p) => TargetSpec::read_json(p)?,
        None => {
            log::warn!("no --target given; estimating it from the first 1000 rows");
            target_from_panel(&panel, None, &TargetOptions::default())?.spec
        }
    };
    let noise = noise(&a.noise)?;
    let start = a.start.as_ref().map(ModelParams::read_json).transpose()?;
    let opts = FitOptions {
        mode: mode(a.mode),
        warm_start_chain: !a.no_chain,
        start,
        max_evals: a.max_evals,
        estimate_nu: !a.fix_nu,
        std_errors: !a.no_se,
        ..Default::default()
    };
    let report = fit(&panel, &target, tier(a.tier), noise, &opts)?;
    if let Some(out) = &a.out {
        report.write_json(out)?;
    }
    if let Some(path) = &a.states {
        let lp = loglik_path(&panel, &target, &report.params, opts.mode)?;
        write_states_json(path, &lp.states)?;
    }
    if let Some(flag) = &report.se_flag {
        log::warn!("standard errors: {flag}");
    }
    if !report.converged {
        log::warn!("optimizer stopped at the evaluation budget");
    }
    println!("{}", rmg_core::FitReport::table_header());
    println!("{}", report.table_row());
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let target = TargetSpec::read_json(&a.target)?;
    let params = ModelParams::read_json(&a.params)?;
    let opts = SimOptions {
        burn_in: a.burn_in,
        mode: mode(a.mode),
    };
    let path = simulate_path(&target, &params, a.days, a.seed, &opts)?;
    path.panel.write_csv(&a.out)?;
    if let Some(s) = &a.states {
        write_states_json(s, &path.states)?;
    }
    Ok(())
}

fn degarch_cmd(a: &DegarchArgs) -> Result<()> {
    let panel = load(&a.input)?;
    let states = states_for(&a.states, panel.n_obs())?;
    let eta = degarch(&panel, &states)?;
    write_degarch_csv(&a.out, &panel, &eta)
}

fn uvg(a: &UvgArgs) -> Result<()> {
    let panel = load(&a.input)?;
    let fits = uvg_fit_panel(&panel, &noise(&a.noise)?)?;
    write_uvg_csv(&a.out, panel.assets(), &fits)?;
    let total: f64 = fits.iter().map(|f| f.loglik).sum();
    println!(
        "assets {}  total loglik {:.6}  per obs {:.6}",
        fits.len(),
        total,
        total / (panel.n_obs() * panel.n_assets()) as f64
    );
    Ok(())
}

fn risk(a: &RiskArgs) -> Result<()> {
    let states = read_states_json(&a.states)?;
    let n = first_n(&states)?;
    let (assets, panel) = tickers(&a.tickers, n)?;
    let sectors = load_sectors(&a.sectors, &assets)?;
    let volumes = match (&a.volumes, &panel) {
        (Some(v), Some(p)) => load_volumes(v, p)?,
        _ => Array2::ones((states.len(), n)),
    };
    let rm = risk_measure(&states, a.threshold, volumes.view(), &sectors)?;
    if !rm.empty_rows.is_empty() {
        log::warn!("{} days with no beta above {}", rm.empty_rows.len(), a.threshold);
    }
    let smooth = smooth_rows(&rm.values, a.smooth.max(1));
    let rows = (0..states.len()).flat_map(|t| {
        rm.sectors
            .iter()
            .enumerate()
            .map(|(k, s)| {
                vec![
                    t.to_string(),
                    s.clone(),
                    rm.values[[t, k]].to_string(),
                    smooth[[t, k]].to_string(),
                ]
            })
            .collect::<Vec<_>>()
    });
    write_tidy_csv(&a.out, &["t", "sector", "risk", "risk_smoothed"], rows)
}

fn corr(a: &CorrArgs) -> Result<()> {
    let states = read_states_json(&a.states)?;
    let n = first_n(&states)?;
    if let Some((i, j)) = a.pairs.iter().find(|(i, j)| *i >= n || *j >= n) {
        return Err(RmgError::InvalidInput(format!("pair ({i},{j}) out of range for N = {n}")));
    }
    let rows = states.iter().enumerate().flat_map(|(t, s)| {
        let mut out = vec![vec![t.to_string(), "deco".to_string(), deco_correlation(s).to_string()]];
        for &(i, j) in &a.pairs {
            out.push(vec![
                t.to_string(),
                format!("{i}-{j}"),
                conditional_correlation(s, i, j).to_string(),
            ]);
        }
        out
    });
    write_tidy_csv(&a.out, &["t", "series", "value"], rows)
}

fn sector_corr(a: &SectorCorrArgs) -> Result<()> {
    let states = read_states_json(&a.states)?;
    let n = first_n(&states)?;
    let (assets, _) = tickers(&a.tickers, n)?;
    let sectors = load_sectors(&a.sectors, &assets)?;
    let sc = sector_median_corr(&states, &sectors, a.window)?;
    for w in &sc.warnings {
        log::warn!("{w}");
    }
    let rows = sc.rows.iter().map(|r| {
        vec![
            r.window_start.to_string(),
            r.window_end.to_string(),
            r.sector_a.clone(),
            r.sector_b.clone(),
            r.median_corr.to_string(),
        ]
    });
    write_tidy_csv(
        &a.out,
        &["window_start", "window_end", "sector_a", "sector_b", "median_corr"],
        rows,
    )
}

fn leverage(a: &LeverageArgs) -> Result<()> {
    let panel = load(&a.input)?;
    let states = states_for(&a.states, panel.n_obs())?;
    let returns = if a.degarch {
        degarch(&panel, &states)?
    } else {
        panel.returns().clone()
    };
    let v0: Vec<f64> = states.iter().map(|s| s.v0).collect();
    let lev = leverage_asymmetry(&v0, returns.view(), a.t_max)?;
    let assets = panel.assets();
    let rows = assets.iter().enumerate().flat_map(|(i, name)| {
        lev.lags
            .iter()
            .enumerate()
            .map(|(k, lag)| vec![name.clone(), lag.to_string(), lev.curves[[i, k]].to_string()])
            .collect::<Vec<_>>()
    });
    write_tidy_csv(&a.out, &["asset", "lag", "corr"], rows)?;
    if let Some(p) = &a.asymmetry_out {
        let rows = assets
            .iter()
            .zip(&lev.asymmetry)
            .map(|(name, x)| vec![name.clone(), x.to_string()]);
        write_tidy_csv(p, &["asset", "asymmetry"], rows)?;
    }
    let (m, se) = mean_and_se(&lev.asymmetry);
    println!("mean asymmetry {m:.6e}  se {se:.6e}");
    Ok(())
}

fn acf(a: &AcfArgs) -> Result<()> {
    let panel = load(&a.input)?;
    let series = match &a.states {
        Some(p) => degarch(&panel, &states_for(p, panel.n_obs())?)?,
        None => panel.returns().clone(),
    };
    let c = acf_abs(series.view(), a.max_lag)?;
    let rows = c.iter().enumerate().map(|(lag, v)| vec![lag.to_string(), v.to_string()]);
    write_tidy_csv(&a.out, &["lag", "acf"], rows)
}

fn delta(a: &DeltaArgs) -> Result<()> {
    let emp = load(&a.input)?;
    let sim = load_panel(&a.simulated, &LoadOptions::default())?;
    let pairs = random_pairs(emp.n_assets(), a.pairs, a.seed);
    let d = pair_delta(emp.returns().view(), sim.returns().view(), &pairs)?;
    let rows = d
        .pairs
        .iter()
        .zip(&d.deltas)
        .map(|((i, j), x)| vec![i.to_string(), j.to_string(), x.to_string()]);
    write_tidy_csv(&a.out, &["i", "j", "delta"], rows)?;
    println!("pairs {}  mean {:.6e}  std {:.6e}", d.pairs.len(), d.mean, d.std);
    Ok(())
}

fn cliffs(a: &CliffsArgs) -> Result<()> {
    let x = read_sample_csv(&a.x)?;
    let y = read_sample_csv(&a.y)?;
    println!("{}", cliffs_delta(&x, &y)?);
    Ok(())
}

fn chi2(a: &Chi2Args) -> Result<()> {
    let emp = read_sample_csv(&a.empirical)?;
    let pred = read_sample_csv(&a.predicted)?;
    let r = pdf_chi2(&emp, &pred, a.bins)?;
    println!("{}", serde_json::to_string(&r)?);
    Ok(())
}

fn predicted(a: &PredictedArgs) -> Result<()> {
    let panel = load(&a.input)?;
    let states = states_for(&a.states, panel.n_obs())?;
    let draws = predicted_returns(&panel, &states, &noise(&a.noise)?, a.replications, a.seed)?;
    write_sample_csv(&a.out, draws.as_slice().expect("contiguous"))?;
    if let Some(p) = &a.empirical_out {
        let flat: Vec<f64> = panel.returns().iter().copied().collect();
        write_sample_csv(p, &flat)?;
    }
    Ok(())
}

fn betas(a: &BetasArgs) -> Result<()> {
    let states = read_states_json(&a.states)?;
    let n = first_n(&states)?;
    let (assets, _) = tickers(&a.tickers, n)?;
    write_tidy_csv(&a.out, &["t", "asset", "beta"], beta_rows(&states, &assets))
}

fn tail(a: &TailArgs) -> Result<()> {
    let x = read_sample_csv(&a.sample)?;
    let f = fit_tail_index(&x)?;
    let out = serde_json::json!({ "nu": f.nu, "scale": f.scale, "loglik": f.loglik });
    println!("{out}");
    Ok(())
}
