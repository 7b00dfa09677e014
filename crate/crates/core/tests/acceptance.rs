//! Acceptance checks, one PASS/FAIL line per criterion. Criteria 5 to 7
//! share one replicated study (scenario A, n ∈ {200, 1000}, τ ∈ {0.9,
//! 0.995}, 100 replications), which takes a few minutes on one core.

use std::process::ExitCode;
use std::time::Instant;

use exquant::evt::floor_power;
use exquant::simlab::{run_study, Estimator, Scenario, StudyConfig, StudyReport};
use exquant::{
    classify_regime, extrapolate_pooled, hill_pointwise, pinball, BasisSpec, QuantileFitModel,
    QuantileLadder, QuantileProblem, SolverConfig,
};
use nalgebra::{DMatrix, SymmetricEigen};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

/// 5-point Gauss-Legendre rule on [-1, 1].
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn integrated_square_of_derivative(spec: &BasisSpec, coef: &[f64], m: usize) -> f64 {
    spec.breakpoints()
        .windows(2)
        .map(|w| {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            GL5.iter()
                .map(|(u, wt)| wt * half * spec.derivative(coef, m, mid + half * u).unwrap().powi(2))
                .sum::<f64>()
        })
        .sum()
}

fn criterion_1() -> Check {
    for k in 2..=40 {
        for p in 1..=3 {
            let spec = BasisSpec::uniform(0.0, 1.0, k, p).map_err(|e| e.to_string())?;
            for i in 0..1000 {
                let total: f64 = spec.eval(i as f64 / 999.0).unwrap().iter().sum();
                ensure((total - 1.0).abs() < 1e-12, format!("partition of unity K={k} p={p}"))?;
            }
        }
    }
    let mut worst: f64 = 0.0;
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
    };
    for (k, p, m) in [(40, 3, 2), (10, 3, 1), (10, 3, 3), (15, 2, 2), (8, 1, 1)] {
        let spec = BasisSpec::uniform(0.0, 1.0, k, p).unwrap();
        let pen = spec.penalty(m).unwrap();
        for _ in 0..50 {
            let coef: Vec<f64> = (0..spec.dim()).map(|_| next()).collect();
            let exact = integrated_square_of_derivative(&spec, &coef, m);
            worst = worst.max((pen.quadratic_form(&coef) - exact).abs() / exact);
        }
        let eig = SymmetricEigen::new(pen.matrix().clone());
        let top = eig.eigenvalues.amax();
        let null = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-10 * top).count();
        ensure(null == m, format!("null space {null} != {m} for K={k} p={p}"))?;
    }
    ensure(worst < 1e-8, format!("penalty rel. err {worst:.2e}"))?;
    Ok(format!("max penalty rel. err {worst:.1e}"))
}

fn criterion_2() -> Check {
    let datasets: [&[f64]; 7] = [
        &[1.0, 2.0, 3.0, 4.0, 5.0],
        &[0.3, -1.2, 4.4, 2.2, 0.0, 7.5, -3.3],
        &[2.0, 2.0, 2.0, 5.0],
        &[10.0, 11.5, 9.0, 30.0, 12.25, 8.5, 10.0, 10.75],
        &[-0.5, -0.5, -0.5],
        &[1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2],
        &[100.0, -100.0, 50.0, -25.0, 12.5, 0.0, 3.0, 7.0, 11.0],
    ];
    let cfg = SolverConfig::default();
    let mut worst: f64 = 0.0;
    for ys in datasets {
        let design = DMatrix::from_element(ys.len(), 1, 1.0);
        let problem = QuantileProblem::from_design(&design, ys, DMatrix::zeros(1, 1)).unwrap();
        for tau in [0.1, 0.5, 0.9] {
            let sol = problem.solve(tau, 0.0, &cfg, None).map_err(|e| e.to_string())?;
            let c = sol.coefficients[0];
            let obj = |c: f64| ys.iter().map(|y| pinball(tau, y - c).unwrap()).sum::<f64>();
            let best = ys.iter().map(|&c| obj(c)).fold(f64::INFINITY, f64::min);
            let minimizers: Vec<f64> = ys
                .iter()
                .copied()
                .filter(|&c| obj(c) <= best + 1e-12 * best.abs().max(1.0))
                .collect();
            let lo = minimizers.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = minimizers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let gap = (lo - c).max(c - hi).max(0.0);
            let tol = sol.diagnostics.final_alpha.max(1e-4);
            ensure(gap <= tol, format!("{ys:?} τ={tau}: {c} outside [{lo}, {hi}]"))?;
            worst = worst.max(gap);
        }
    }
    Ok(format!("21 fits, max distance to minimizer set {worst:.1e}"))
}

fn flat(tau: f64, value: f64) -> QuantileFitModel {
    let spec = BasisSpec::uniform(0.0, 1.0, 2, 1).unwrap();
    QuantileFitModel::from_parts(spec, tau, vec![value; 3], 0.0, 1).unwrap()
}

fn criterion_3() -> Check {
    let mut worst: f64 = 0.0;
    for gamma in [0.1, 0.2, 0.5] {
        for k in [5usize, 10, 50] {
            for n in [100u64, 1000] {
                for eta in [0.1, 0.25, 0.4] {
                    let ladder = QuantileLadder::new(n, eta, k).map_err(|e| e.to_string())?;
                    let models: Vec<_> = ladder
                        .levels()
                        .iter()
                        .map(|&t| flat(t, (1.0 - t).powf(-gamma)))
                        .collect();
                    let got = hill_pointwise(&models, 0.5).map_err(|e| e.to_string())?;
                    let off = floor_power(n, eta);
                    let top = (off + k as u64) as f64;
                    let want = gamma / (k - 1) as f64
                        * (1..=k as u64).map(|j| (top / (off + j) as f64).ln()).sum::<f64>();
                    worst = worst.max((got - want).abs());
                }
            }
        }
    }
    ensure(worst < 1e-12, format!("max abs err {worst:.1e}"))?;
    let ladder = QuantileLadder::new(1000, 0.1, 10).unwrap();
    let models: Vec<_> = ladder
        .levels()
        .iter()
        .map(|&t| flat(t, (1.0 - t).powf(-0.2)))
        .collect();
    let reference = hill_pointwise(&models, 0.5).unwrap();
    ensure(
        (reference - 0.143925441824662657).abs() < 1e-12,
        format!("reference case gave {reference}"),
    )?;
    Ok(format!("max abs err {worst:.1e}, reference {reference:.5}"))
}

fn criterion_4() -> Check {
    let mut worst: f64 = 0.0;
    let grid = [0.0, 0.5, 1.0];
    for gamma in [0.0, 0.1, 0.2, 0.5, 1.0] {
        for (a, b, c) in [(0.9f64, 0.99, 0.999f64), (0.5, 0.95, 0.9995)] {
            let base = (1.0 - a).powf(-gamma);
            let fit = flat(a, base);
            let direct = extrapolate_pooled(&fit, gamma, c, &grid).map_err(|e| e.to_string())?;
            let mid = extrapolate_pooled(&fit, gamma, b, &grid).unwrap();
            let composed = extrapolate_pooled(&flat(b, mid.values[0]), gamma, c, &grid).unwrap();
            let truth = (1.0 - c).powf(-gamma);
            let log_linear = base.ln() + gamma * ((1.0 - a) / (1.0 - c)).ln();
            for i in 0..grid.len() {
                worst = worst
                    .max((direct.values[i] - truth).abs() / truth)
                    .max((composed.values[i] - direct.values[i]).abs() / truth)
                    .max((direct.values[i].ln() - log_linear).abs());
            }
        }
    }
    ensure(worst < 1e-12, format!("max rel err {worst:.1e}"))?;
    Ok(format!("max rel err {worst:.1e}"))
}

fn study_config() -> StudyConfig {
    StudyConfig {
        scenarios: vec![Scenario::A],
        sample_sizes: vec![200, 1000],
        levels: vec![0.9, 0.995],
        replications: 100,
        ..StudyConfig::default()
    }
}

fn quartiles(sorted: &[f64]) -> (f64, f64, f64) {
    let at = |p: f64| {
        let h = (sorted.len() - 1) as f64 * p;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    (at(0.25), at(0.5), at(0.75))
}

fn criterion_5(report: &StudyReport) -> Check {
    let evi = report.evi_for(Scenario::A, 1000).ok_or("no EVI summary for n=1000")?;
    ensure(evi.k == 75, format!("k = {}", evi.k))?;
    let sorted = evi.sorted();
    ensure(sorted.len() >= 90, format!("only {} replications produced γ̂^C", sorted.len()))?;
    let (q1, med, q3) = quartiles(&sorted);
    let iqr = q3 - q1;
    let msg = format!("median γ̂^C {med:.3}, IQR {iqr:.3} over {} replications", sorted.len());
    ensure((0.10..=0.35).contains(&med) && iqr < 0.15, msg.clone())?;
    Ok(msg)
}

fn mise_gap(report: &StudyReport, tau: f64, est: Estimator) -> Check {
    let small = report.cell(Scenario::A, 200, tau, est).ok_or("missing cell")?;
    let large = report.cell(Scenario::A, 1000, tau, est).ok_or("missing cell")?;
    let se = small.mc_stderr.hypot(large.mc_stderr);
    let gap = small.mise - large.mise;
    let msg = format!(
        "{est} τ={tau}: {:.5} ± {:.5} (n=200) vs {:.5} ± {:.5} (n=1000), gap {:.1} SE",
        small.mise,
        small.mc_stderr,
        large.mise,
        large.mc_stderr,
        gap / se
    );
    ensure(gap > 2.0 * se, msg.clone())?;
    Ok(msg)
}

fn criterion_6(report: &StudyReport) -> Check {
    let a = mise_gap(report, 0.9, Estimator::PseI)?;
    let b = mise_gap(report, 0.995, Estimator::PseEp)?;
    Ok(format!("{a}; {b}"))
}

fn criterion_7(report: &StudyReport) -> Check {
    let ep = report.cell(Scenario::A, 200, 0.995, Estimator::PseEp).ok_or("missing cell")?;
    let i = report.cell(Scenario::A, 200, 0.995, Estimator::PseI).ok_or("missing cell")?;
    let msg = format!(
        "n=200 τ=0.995: PSE-Ep {:.5} ({} failures) vs PSE-I {:.5} ({} failures)",
        ep.mise, ep.failures, i.mise, i.failures
    );
    ensure(ep.mise < i.mise, msg.clone())?;
    Ok(msg)
}

fn criterion_8() -> Check {
    let a = classify_regime(0.925, 200, 30.0).map_err(|e| e.to_string())?;
    let b = classify_regime(0.985, 1000, 30.0).map_err(|e| e.to_string())?;
    let msg = format!("ξ(200, 0.925) = {}, ξ(1000, 0.985) = {}", a.xi, b.xi);
    ensure(a.xi == 15.0 && b.xi == 15.0, msg.clone())?;
    Ok(msg)
}

fn criterion_9() -> Check {
    let cfg = StudyConfig {
        sample_sizes: vec![200],
        levels: vec![0.9, 0.995],
        replications: 4,
        root_seed: 77,
        ..StudyConfig::default()
    };
    let first = run_study(&cfg).map_err(|e| e.to_string())?.to_csv();
    let second = run_study(&cfg).map_err(|e| e.to_string())?.to_csv();
    ensure(first == second, "repeated runs differ".into())?;
    let sequential = run_study(&StudyConfig {
        parallel: false,
        ..cfg
    })
    .map_err(|e| e.to_string())?
    .to_csv();
    ensure(first == sequential, "parallel and sequential reports differ".into())?;
    Ok(format!("{} report bytes identical across runs and modes", first.len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, outcome: Check, start: Instant| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n}: {detail} [{secs:.1}s]");
            }
        }
    };
    let t = Instant::now();
    report(1, criterion_1(), t);
    let t = Instant::now();
    report(2, criterion_2(), t);
    let t = Instant::now();
    report(3, criterion_3(), t);
    let t = Instant::now();
    report(4, criterion_4(), t);

    let t = Instant::now();
    match run_study(&study_config()) {
        Ok(study) => {
            println!("study: scenario A, n in {{200, 1000}}, tau in {{0.9, 0.995}}, 100 replications [{:.1}s]", t.elapsed().as_secs_f64());
            print!("{}", study.to_csv());
            let t = Instant::now();
            report(5, criterion_5(&study), t);
            report(6, criterion_6(&study), t);
            report(7, criterion_7(&study), t);
        }
        Err(e) => {
            for n in 5..=7 {
                report(n, Err(format!("study failed: {e}")), t);
            }
        }
    }
    let t = Instant::now();
    report(8, criterion_8(), t);
    let t = Instant::now();
    report(9, criterion_9(), t);

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
