use exquant::fitter::{fit_ladder, LadderOptions, LambdaPolicy};
use exquant::simlab::{generate, Scenario};
use exquant::{
    default_lambda_grid, fit_intermediate, pinball, select_lambda_gacv, BasisSpec, QuantileLadder,
    QuantileProblem, SolverConfig,
};
use nalgebra::DMatrix;

/// Seven small fixed samples, including ties and an even count.
fn small_datasets() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        vec![0.3, -1.2, 4.4, 2.2, 0.0, 7.5, -3.3],
        vec![2.0, 2.0, 2.0, 5.0],
        vec![10.0, 11.5, 9.0, 30.0, 12.25, 8.5, 10.0, 10.75],
        vec![-0.5; 3],
        vec![1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2],
        vec![100.0, -100.0, 50.0, -25.0, 12.5, 0.0, 3.0, 7.0, 11.0],
    ]
}

/// Interval of minimizers of `c ↦ Σ ρ_τ(y_i - c)`; the objective is
/// piecewise linear so its minima include data points.
fn brute_force_minimizers(ys: &[f64], tau: f64) -> (f64, f64) {
    let obj = |c: f64| ys.iter().map(|y| pinball(tau, y - c).unwrap()).sum::<f64>();
    let best = ys.iter().map(|&c| obj(c)).fold(f64::INFINITY, f64::min);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &c in ys {
        if obj(c) <= best + 1e-12 * best.abs().max(1.0) {
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    (lo, hi)
}

#[test]
fn constant_basis_recovers_empirical_quantiles() {
    let cfg = SolverConfig::default();
    for ys in small_datasets() {
        let design = DMatrix::from_element(ys.len(), 1, 1.0);
        let problem = QuantileProblem::from_design(&design, &ys, DMatrix::zeros(1, 1)).unwrap();
        for tau in [0.1, 0.5, 0.9] {
            let sol = problem.solve(tau, 0.0, &cfg, None).unwrap();
            let c = sol.coefficients[0];
            let (lo, hi) = brute_force_minimizers(&ys, tau);
            let tol = sol.diagnostics.final_alpha.max(1e-4);
            assert!(c >= lo - tol && c <= hi + tol, "{ys:?} tau={tau}: {c} not in [{lo}, {hi}]");
        }
    }
}

fn scenario_problem(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, BasisSpec) {
    let d = generate(Scenario::A, n, seed);
    (d.x, d.y, BasisSpec::uniform(0.0, 1.0, 20, 3).unwrap())
}

#[test]
fn solver_improves_on_its_start() {
    let (xs, ys, spec) = scenario_problem(300, 1);
    let problem = QuantileProblem::new(&xs, &ys, &spec, 2).unwrap();
    let cfg = SolverConfig::default();
    for (tau, lambda) in [(0.5, 1e-3), (0.9, 1e-4), (0.99, 1e-2)] {
        let start = vec![0.0; spec.dim()];
        let sol = problem.solve(tau, lambda, &cfg, Some(&start)).unwrap();
        let before = problem.exact_objective(tau, lambda, &start);
        let after = problem.exact_objective(tau, lambda, &sol.coefficients);
        assert!(after < before);
        assert!((sol.diagnostics.objective - after).abs() <= 1e-12 * after);
    }
}

#[test]
fn solution_is_a_fixed_point() {
    let (xs, ys, spec) = scenario_problem(400, 2);
    let problem = QuantileProblem::new(&xs, &ys, &spec, 2).unwrap();
    let cfg = SolverConfig::default();
    let first = problem.solve(0.8, 1e-3, &cfg, None).unwrap();
    let again = problem.solve(0.8, 1e-3, &cfg, Some(&first.coefficients)).unwrap();
    let f0 = first.diagnostics.objective;
    let f1 = again.diagnostics.objective;
    assert!(f1 <= f0 * (1.0 + 1e-9));
    assert!((f1 - f0).abs() <= 1e-6 * f0);
}

#[test]
fn shift_equivariance() {
    let (xs, ys, spec) = scenario_problem(300, 3);
    let cfg = SolverConfig::default();
    let shifted: Vec<f64> = ys.iter().map(|y| y + 2.5).collect();
    let a = fit_intermediate(&xs, &ys, 0.75, 1e-3, &spec, 2, &cfg).unwrap();
    let b = fit_intermediate(&xs, &shifted, 0.75, 1e-3, &spec, 2, &cfg).unwrap();
    for i in 0..=50 {
        let x = i as f64 / 50.0;
        let d = b.value_at(x).unwrap() - a.value_at(x).unwrap() - 2.5;
        assert!(d.abs() < 1e-4, "x={x}: {d}");
    }
}

#[test]
fn scale_equivariance() {
    // loss is homogeneous of degree 1 and the penalty of degree 2, so
    // y -> s·y pairs with λ -> λ/s
    let (xs, ys, spec) = scenario_problem(300, 4);
    let cfg = SolverConfig::default();
    let lambda = 1e-3;
    let base = QuantileProblem::new(&xs, &ys, &spec, 2).unwrap();
    let a = base.solve(0.9, lambda, &cfg, None).unwrap();
    for s in [0.1, 7.0] {
        let scaled: Vec<f64> = ys.iter().map(|y| y * s).collect();
        let problem = QuantileProblem::new(&xs, &scaled, &spec, 2).unwrap();
        let b = problem.solve(0.9, lambda / s, &cfg, None).unwrap();
        let (fa, fb) = (a.diagnostics.objective, b.diagnostics.objective / s);
        assert!((fa - fb).abs() <= 1e-7 * fa, "s={s}: {fa} vs {fb}");
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let va = spec.evaluate(&a.coefficients, x).unwrap();
            let vb = spec.evaluate(&b.coefficients, x).unwrap() / s;
            assert!((va - vb).abs() < 1e-4, "s={s} x={x}: {va} vs {vb}");
        }
    }
}

#[test]
fn prediction_is_continuous_at_knots() {
    let (xs, ys, spec) = scenario_problem(300, 5);
    let fit = fit_intermediate(&xs, &ys, 0.6, 1e-4, &spec, 2, &SolverConfig::default()).unwrap();
    for &k in &spec.breakpoints()[1..spec.segments()] {
        let left = fit.value_at(k - 1e-9).unwrap();
        let right = fit.value_at(k + 1e-9).unwrap();
        assert!((left - right).abs() < 1e-6);
    }
}

#[test]
fn gacv_df_decreases_along_grid_for_linear_data() {
    let xs: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.5 + 2.0 * x).collect();
    let spec = BasisSpec::uniform(0.0, 1.0, 10, 3).unwrap();
    let grid: Vec<f64> = (0..15).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 14.0)).collect();
    let sel = select_lambda_gacv(&xs, &ys, 0.5, &spec, 2, &grid, &SolverConfig::default()).unwrap();
    for pair in sel.dfs.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-6, "{:?}", sel.dfs);
    }
    for i in 0..=20 {
        let x = i as f64 / 20.0;
        assert!((sel.model.value_at(x).unwrap() - (0.5 + 2.0 * x)).abs() < 1e-5);
    }
}

#[test]
fn gacv_ties_go_to_larger_lambda() {
    // Every λ fits linear data exactly, so every score is zero.
    let xs: Vec<f64> = (0..60).map(|i| i as f64 / 59.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 1.0 - x).collect();
    let spec = BasisSpec::uniform(0.0, 1.0, 4, 3).unwrap();
    let grid = [1e-2, 1.0, 100.0];
    let sel = select_lambda_gacv(&xs, &ys, 0.3, &spec, 2, &grid, &SolverConfig::default()).unwrap();
    let best = sel.scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let last_best = grid
        .iter()
        .zip(&sel.scores)
        .filter(|(_, s)| **s == best)
        .map(|(l, _)| *l)
        .fold(0.0, f64::max);
    assert_eq!(sel.lambda, last_best);
}

#[test]
fn warm_and_cold_ladders_agree() {
    let d = generate(Scenario::A, 500, 9);
    let spec = BasisSpec::uniform(0.0, 1.0, 15, 3).unwrap();
    let ladder = QuantileLadder::for_target_xi(500, 3.0, 8).unwrap();
    let cfg = SolverConfig::default();
    let run = |warm| {
        let options = LadderOptions {
            lambda: LambdaPolicy::Fixed(1e-3),
            warm_start: warm,
        };
        fit_ladder(&d.x, &d.y, &ladder, &options, &spec, 2, &cfg).unwrap()
    };
    let (warm, cold) = (run(true), run(false));
    let problem = QuantileProblem::new(&d.x, &d.y, &spec, 2).unwrap();
    for (w, c) in warm.models.iter().zip(&cold.models) {
        assert_eq!(w.tau(), c.tau());
        let fw = problem.exact_objective(w.tau(), 1e-3, w.coefficients());
        let fc = problem.exact_objective(c.tau(), 1e-3, c.coefficients());
        assert!((fw - fc).abs() <= 1e-5 * fc.max(1e-3), "tau={}: {fw} vs {fc}", w.tau());
    }
    let fractions = warm.ordering_fractions(&[0.1, 0.5, 0.9]).unwrap();
    assert_eq!(fractions.len(), 7);
}

#[test]
fn gacv_at_first_reuses_lambda() {
    let d = generate(Scenario::A, 300, 12);
    let spec = BasisSpec::uniform(0.0, 1.0, 10, 3).unwrap();
    let ladder = QuantileLadder::for_target_xi(300, 3.0, 5).unwrap();
    let grid = default_lambda_grid(&d.y, &spec, 6);
    let options = LadderOptions {
        lambda: LambdaPolicy::GacvAtFirst(grid.clone()),
        warm_start: true,
    };
    let fit = fit_ladder(&d.x, &d.y, &ladder, &options, &spec, 2, &SolverConfig::default()).unwrap();
    let chosen = fit.selection.as_ref().unwrap().lambda;
    assert!(grid.contains(&chosen));
    assert!(fit.models.iter().all(|m| m.lambda() == chosen));
    assert_eq!(fit.taus(), ladder.levels());
}
