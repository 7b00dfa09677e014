use std::fs;
use std::io::Write;
use std::path::Path;

use exquant::evt::{evi_sample_path, RegimeVerdict};
use exquant::extrapolate::ExtremeQuantileEstimate;
use exquant::fitter::{GacvSelection, LadderOptions, LambdaPolicy, SolverDiagnostics};
use exquant::simlab::{run_study, LambdaChoice, StudyConfig, StudyReport};
use exquant::{
    classify_regime, default_k, default_lambda_grid, estimate_evi, extrapolate_pointwise,
    extrapolate_pooled, fit_intermediate, fit_ladder, select_lambda_gacv, BasisSpec, Error,
    NonpositivePolicy, QuantileFitModel, QuantileLadder, SolverConfig,
};
use log::{info, warn};
use serde::Serialize;

use crate::args::{ClassifyArgs, FitArgs, KArg, LambdaArg, ModelArgs, NonpositiveArg, SimulateArgs, TailArgs};
use crate::data::{read_sample, Sample};
use crate::error::{io_error, CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct DataSummary {
    rows_used: usize,
    rows_dropped: usize,
    x_range: [f64; 2],
}

#[derive(Debug, Serialize)]
struct SelectionSummary {
    grid: Vec<f64>,
    scores: Vec<f64>,
    dfs: Vec<f64>,
}

impl From<&GacvSelection> for SelectionSummary {
    fn from(s: &GacvSelection) -> Self {
        Self {
            grid: s.grid.clone(),
            scores: s.scores.clone(),
            dfs: s.dfs.clone(),
        }
    }
}

/// `model.json`: the fitted model plus provenance.
#[derive(Debug, Serialize)]
struct ModelFile<'a> {
    schema_version: u32,
    #[serde(flatten)]
    model: &'a QuantileFitModel,
    lambda_selection: Option<SelectionSummary>,
    data: DataSummary,
}

fn summary(sample: &Sample) -> DataSummary {
    let (lo, hi) = sample.range();
    DataSummary {
        rows_used: sample.x.len(),
        rows_dropped: sample.dropped,
        x_range: [lo, hi],
    }
}

fn grid(lo: f64, hi: f64, points: usize) -> CliResult<Vec<f64>> {
    if points < 2 {
        return Err(CliError::Config("--grid-points must be at least 2".into()));
    }
    let m = (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / m })
        .collect())
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numeric(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    write_file(path, &bytes)
}

fn basis(args: &ModelArgs, sample: &Sample) -> CliResult<BasisSpec> {
    if args.penalty_order < 1 || args.penalty_order > args.degree {
        return Err(CliError::Config(format!(
            "--penalty-order {} must lie in 1..={} (the degree)",
            args.penalty_order, args.degree
        )));
    }
    let (lo, hi) = sample.range();
    BasisSpec::uniform(lo, hi, args.knots, args.degree).map_err(|e| match e {
        Error::InvalidDomain { .. } => CliError::Data(e.to_string()),
        other => CliError::Config(format!("--knots/--degree: {other}")),
    })
}

fn lambda_grid(args: &ModelArgs, sample: &Sample, spec: &BasisSpec) -> CliResult<Vec<f64>> {
    if args.lambda_candidates == 0 {
        return Err(CliError::Config("--lambda-candidates must be positive".into()));
    }
    Ok(default_lambda_grid(&sample.y, spec, args.lambda_candidates))
}

fn check_level(flag: &str, tau: f64) -> CliResult<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{flag} {tau} is not in (0, 1)")))
    }
}

fn diagnostics_note(d: Option<&SolverDiagnostics>) -> String {
    match d {
        Some(d) if d.converged => format!("converged in {} iterations", d.iterations),
        Some(d) => format!("iteration limit reached ({} iterations)", d.iterations),
        None => String::new(),
    }
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    check_level("--tau", args.tau)?;
    let sample = read_sample(&args.data.input, &args.data.x_col, &args.data.y_col)?;
    let spec = basis(&args.model, &sample)?;
    let cfg = SolverConfig::default();
    let order = args.model.penalty_order;
    let (model, selection) = match args.model.lambda {
        LambdaArg::Fixed(l) => (fit_intermediate(&sample.x, &sample.y, args.tau, l, &spec, order, &cfg)?, None),
        LambdaArg::Gacv => {
            let candidates = lambda_grid(&args.model, &sample, &spec)?;
            let sel = select_lambda_gacv(&sample.x, &sample.y, args.tau, &spec, order, &candidates, &cfg)?;
            (sel.model.clone(), Some(SelectionSummary::from(&sel)))
        }
    };

    let (lo, hi) = sample.range();
    let xs = grid(lo, hi, args.model.grid_points)?;
    let qs = model.predict(&xs)?;
    let dir = &args.model.out_dir;
    prepare_dir(dir)?;
    write_json(
        &dir.join("model.json"),
        &ModelFile {
            schema_version: SCHEMA_VERSION,
            model: &model,
            lambda_selection: selection,
            data: summary(&sample),
        },
    )?;
    write_csv(
        &dir.join("curve.csv"),
        &["x", "q"],
        xs.iter().zip(&qs).map(|(x, q)| vec![x.to_string(), q.to_string()]),
    )?;
    println!(
        "fit tau={} lambda={} on {} rows ({} dropped); {}",
        args.tau,
        model.lambda(),
        sample.x.len(),
        sample.dropped,
        diagnostics_note(model.diagnostics())
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct LadderSummary {
    eta: f64,
    offset: u64,
    k: usize,
    levels: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct TargetSummary {
    tau_e: f64,
    tau_i: f64,
    regime: RegimeVerdict,
    refused_points: usize,
    negative_index_points: usize,
}

#[derive(Debug, Serialize)]
struct TailFile {
    schema_version: u32,
    n: usize,
    data: DataSummary,
    ladder: LadderSummary,
    lambda: f64,
    lambda_selection: Option<SelectionSummary>,
    nonpositive: &'static str,
    gamma_pooled: f64,
    pooled_points: usize,
    pooling_size: usize,
    targets: Vec<TargetSummary>,
}

fn nonpositive_error(e: Error) -> CliError {
    match e {
        Error::NonpositiveQuantiles { points } => {
            let shown: Vec<String> = points.iter().take(10).map(|x| x.to_string()).collect();
            let more = if points.len() > 10 {
                format!(" and {} more", points.len() - 10)
            } else {
                String::new()
            };
            CliError::Numeric(format!(
                "ladder quantile estimates are nonpositive at {} point(s): x = {}{more}; \
                 rerun with --nonpositive mask to pool over the remaining points",
                points.len(),
                shown.join(", ")
            ))
        }
        other => other.into(),
    }
}

pub fn tail(args: &TailArgs) -> CliResult<()> {
    for &t in &args.tau_e {
        check_level("--tau-e", t)?;
    }
    if let Some(t) = args.tau {
        check_level("--tau", t)?;
    }
    let sample = read_sample(&args.data.input, &args.data.x_col, &args.data.y_col)?;
    let spec = basis(&args.model, &sample)?;
    let cfg = SolverConfig::default();
    let order = args.model.penalty_order;
    let n = sample.x.len() as u64;
    let k = match args.k {
        KArg::Auto => default_k(n),
        KArg::Fixed(k) => k,
    };
    let ladder = match args.eta {
        Some(eta) => QuantileLadder::new(n, eta, k)?,
        None => QuantileLadder::for_target_xi(n, args.xi, k)?,
    };
    let policy = match args.model.lambda {
        LambdaArg::Fixed(l) => LambdaPolicy::Fixed(l),
        LambdaArg::Gacv => LambdaPolicy::GacvAtFirst(lambda_grid(&args.model, &sample, &spec)?),
    };
    let options = LadderOptions {
        lambda: policy,
        warm_start: true,
    };
    let fits = fit_ladder(&sample.x, &sample.y, &ladder, &options, &spec, order, &cfg)?;
    let lambda = fits.models[0].lambda();
    let unconverged = fits
        .models
        .iter()
        .filter(|m| m.diagnostics().is_some_and(|d| !d.converged))
        .count();
    if unconverged > 0 {
        warn!(
            "{unconverged} of {} ladder fits stopped at the iteration limit; the best iterate was kept",
            fits.models.len()
        );
    }
    let nonpositive = match args.nonpositive {
        NonpositiveArg::Abort => NonpositivePolicy::Abort,
        NonpositiveArg::Mask => NonpositivePolicy::Mask,
    };

    let (lo, hi) = sample.range();
    let xs = grid(lo, hi, args.model.grid_points)?;
    let evi = estimate_evi(&fits.models, &xs, &sample.x, nonpositive).map_err(nonpositive_error)?;
    let path = evi_sample_path(&fits.models, &sample.x, nonpositive).map_err(nonpositive_error)?;

    let mut extreme_rows = Vec::new();
    let mut targets = Vec::new();
    for &tau_e in &args.tau_e {
        let own;
        let base = match args.tau {
            Some(tau_i) => {
                own = fit_intermediate(&sample.x, &sample.y, tau_i, lambda, &spec, order, &cfg)?;
                &own
            }
            None => fits.models.iter().find(|m| m.tau() < tau_e).ok_or_else(|| {
                CliError::Config(format!(
                    "--tau-e {tau_e} is not above the lowest ladder level {}; pass --tau for the base level",
                    ladder.levels()[ladder.k() - 1]
                ))
            })?,
        };
        let pointwise = extrapolate_pointwise(base, &evi.pointwise_or_pooled(), tau_e, &xs)?;
        let pooled = extrapolate_pooled(base, evi.pooled, tau_e, &xs)?;
        let base_values = base.predict(&xs)?;
        for i in 0..xs.len() {
            extreme_rows.push(vec![
                tau_e.to_string(),
                base.tau().to_string(),
                xs[i].to_string(),
                base_values[i].to_string(),
                pointwise.values[i].to_string(),
                pooled.values[i].to_string(),
                (pointwise.refused[i] as u8).to_string(),
            ]);
        }
        let verdict = classify_regime(tau_e, n, args.threshold)?;
        println!(
            "tau_e={tau_e}: xi={} -> {:?} (threshold {}); base tau_i={}",
            verdict.xi,
            verdict.regime,
            args.threshold,
            base.tau()
        );
        targets.push(target_summary(tau_e, base.tau(), verdict, &pointwise));
    }

    let dir = &args.model.out_dir;
    prepare_dir(dir)?;
    write_csv(
        &dir.join("evi_path.csv"),
        &["k", "gamma_pooled", "valid_points"],
        path.iter().map(|p| vec![p.k.to_string(), p.pooled.to_string(), p.valid_points.to_string()]),
    )?;
    write_csv(
        &dir.join("evi_pointwise.csv"),
        &["x", "gamma", "valid"],
        xs.iter().zip(&evi.pointwise).map(|(x, g)| {
            vec![
                x.to_string(),
                g.map_or(String::new(), |g| g.to_string()),
                (g.is_some() as u8).to_string(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("extreme.csv"),
        &["tau_e", "tau_i", "x", "q_base", "q_pointwise", "q_pooled", "refused"],
        extreme_rows,
    )?;
    write_json(
        &dir.join("tail.json"),
        &TailFile {
            schema_version: SCHEMA_VERSION,
            n: sample.x.len(),
            data: summary(&sample),
            ladder: LadderSummary {
                eta: ladder.eta(),
                offset: ladder.offset(),
                k: ladder.k(),
                levels: ladder.levels().to_vec(),
            },
            lambda,
            lambda_selection: fits.selection.as_ref().map(SelectionSummary::from),
            nonpositive: match nonpositive {
                NonpositivePolicy::Abort => "abort",
                NonpositivePolicy::Mask => "mask",
            },
            gamma_pooled: evi.pooled,
            pooled_points: evi.pooled_points,
            pooling_size: evi.pooling_size,
            targets,
        },
    )?;
    println!(
        "gamma_pooled={} over {}/{} points; ladder k={} offset={}, lambda={lambda}",
        evi.pooled,
        evi.pooled_points,
        evi.pooling_size,
        ladder.k(),
        ladder.offset()
    );
    Ok(())
}

fn target_summary(
    tau_e: f64,
    tau_i: f64,
    regime: RegimeVerdict,
    est: &ExtremeQuantileEstimate,
) -> TargetSummary {
    TargetSummary {
        tau_e,
        tau_i,
        regime,
        refused_points: est.refused_count(),
        negative_index_points: est.negative_index.iter().filter(|b| **b).count(),
    }
}

fn study_config(args: &SimulateArgs) -> StudyConfig {
    StudyConfig {
        scenarios: args.scenario.clone(),
        sample_sizes: args.n_list.clone(),
        levels: args.tau_list.clone(),
        estimators: args.estimators.clone(),
        replications: args.replications,
        root_seed: args.seed,
        segments: args.knots,
        degree: args.degree,
        penalty_order: args.penalty_order,
        lambda: match args.lambda {
            LambdaArg::Fixed(l) => LambdaChoice::Fixed(l),
            LambdaArg::Gacv => LambdaChoice::Gacv {
                candidates: args.lambda_candidates,
            },
        },
        xi: args.xi,
        k: match args.k {
            KArg::Auto => None,
            KArg::Fixed(k) => Some(k),
        },
        parallel: !args.sequential,
        ..StudyConfig::default()
    }
}

fn evi_csv(report: &StudyReport) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    report
        .evi
        .iter()
        .flat_map(|e| {
            e.pooled
                .iter()
                .zip(&e.valid_fraction)
                .enumerate()
                .map(move |(r, (g, v))| {
                    vec![
                        e.scenario.to_string(),
                        e.n.to_string(),
                        e.k.to_string(),
                        r.to_string(),
                        opt(*g),
                        opt(*v),
                    ]
                })
        })
        .collect()
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let cfg = study_config(args);
    let report = run_study(&cfg)?;
    match &args.out_dir {
        Some(dir) => {
            prepare_dir(dir)?;
            write_file(&dir.join("report.csv"), report.to_csv().as_bytes())?;
            write_csv(
                &dir.join("evi.csv"),
                &["scenario", "n", "k", "replication", "gamma_pooled", "valid_fraction"],
                evi_csv(&report),
            )?;
            for c in report.cells.iter().filter(|c| c.failures > 0) {
                println!(
                    "{} n={} tau={} {}: {} of {} replications failed",
                    c.scenario, c.n, c.tau, c.estimator, c.failures, c.replications
                );
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(report.to_csv().as_bytes())
                .map_err(|e| CliError::Data(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

pub fn classify(args: &ClassifyArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    for &tau in &args.tau {
        check_level("--tau", tau)?;
        let v = classify_regime(tau, args.n, args.threshold)?;
        rows.push(format!(
            "{},{},{},{},{}",
            v.tau,
            v.n,
            v.xi,
            v.threshold,
            match v.regime {
                exquant::Regime::Intermediate => "intermediate",
                exquant::Regime::Extreme => "extreme",
            }
        ));
    }
    println!("tau,n,xi,threshold,regime");
    for r in rows {
        println!("{r}");
    }
    Ok(())
}
