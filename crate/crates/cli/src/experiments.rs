use advlin::kalman::{
    as_estimation_problem, estimator_risk_study, estimator_sr_closed, kalman_bound_report, kalman_estimator,
    observability_gramian, Formula, Regime,
};
use advlin::risk::sample_risks;
use advlin::training::EVAL_STREAM;
use advlin::{
    astar_gap_bounds, pareto_trace, standard_risk_closed, train, worst_case_perturbation, Branch, EstimationProblem,
    Init, ParetoPoint, RiskEstimate, RngStream,
};
use nalgebra::DMatrix;

use crate::config::{rotation_matrix, ExperimentConfig, ExperimentKind, ParetoTarget};
use crate::error::{CliError, CliResult};
use crate::svg::{line_chart, Series};
use crate::table::ResultTable;

pub const RISK_STREAM: u64 = 0x7269_736b_0000_0000;
pub const DRAW_STREAM: u64 = 0x6472_6177_0000_0000;

/// Runs one experiment. The table carries seed, config hash and version as
/// metadata; nothing is written to disk.
pub fn run_experiment(config: &ExperimentConfig) -> CliResult<ResultTable> {
    config.validate()?;
    let mut table = match config.kind {
        ExperimentKind::Perturb => perturb(config)?,
        ExperimentKind::Risk => risk(config)?,
        ExperimentKind::Bounds => bounds(config)?,
        ExperimentKind::Pareto => pareto(config)?,
        ExperimentKind::KalmanBounds => kalman_bounds(config)?,
        ExperimentKind::FigCondition => fig_condition(config)?,
        ExperimentKind::FigObservability => fig_observability(config)?,
        ExperimentKind::FigKfVsAdv => fig_kf_vs_adv(config)?,
    };
    table.set_meta("kind", config.kind.name());
    table.set_meta("seed", config.seed);
    table.set_meta("n_samples", config.n_samples);
    table.set_meta("config_hash", config.hash());
    table.set_meta("version", env!("CARGO_PKG_VERSION"));
    Ok(table)
}

fn branch_code(b: Branch) -> f64 {
    match b {
        Branch::Easy => 0.0,
        Branch::Hard => 1.0,
        Branch::Degenerate => 2.0,
    }
}

fn perturb(config: &ExperimentConfig) -> CliResult<ResultTable> {
    let problem = config.problem.build(config.seed)?;
    let a = match &config.perturb.a {
        Some(rows) => crate::config::matrix_from_rows(rows, "perturb.a")?,
        None => problem.a_star().clone(),
    };
    let b = match config.perturb.b() {
        Some(b) => b,
        None => {
            if a.shape() != problem.a_star().shape() {
                return Err(CliError::Config(
                    "perturb.b is required when perturb.a differs in shape from A⋆".into(),
                ));
            }
            let s = problem.draw(&RngStream::new(config.seed, DRAW_STREAM), 0);
            &s.target - &a * &s.input
        }
    };
    if b.len() != a.nrows() {
        return Err(CliError::Config(format!(
            "perturb.b has length {}, expected {}",
            b.len(),
            a.nrows()
        )));
    }
    let eps = config.problem.epsilon;
    let res = worst_case_perturbation(&a, &b, eps).map_err(|e| CliError::Config(format!("perturb: {e}")))?;
    let mut header = vec![
        "epsilon".to_string(),
        "objective_gain".into(),
        "dual_lambda".into(),
        "branch".into(),
    ];
    header.extend((0..a.ncols()).map(|i| format!("delta_{i}")));
    let mut table = ResultTable::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let mut row = vec![eps, res.objective_gain, res.dual_lambda, branch_code(res.branch)];
    row.extend(res.delta.iter());
    table.push(row);
    table.set_meta("branch_codes", "0 easy, 1 hard, 2 degenerate");
    Ok(table)
}

fn risk(config: &ExperimentConfig) -> CliResult<ResultTable> {
    let problem = config.problem.build(config.seed)?;
    let a = config.problem.estimator(&problem)?;
    let stream = RngStream::new(config.seed, RISK_STREAM);
    let sr_closed = standard_risk_closed(&a, &problem)?;
    let mut table = ResultTable::new(&[
        "epsilon",
        "sr_closed",
        "sr_mean",
        "sr_stderr",
        "ar_mean",
        "ar_stderr",
        "gap_mean",
        "gap_stderr",
    ]);
    for eps in config.epsilons() {
        let s = advlin::risk::risk_study_with_epsilon(&problem, &a, eps, config.n_samples, &stream)?;
        table.push(vec![
            eps,
            sr_closed,
            s.sr.mean,
            s.sr.std_error,
            s.ar.mean,
            s.ar.std_error,
            s.gap.mean,
            s.gap.std_error,
        ]);
    }
    Ok(table)
}

fn bounds(config: &ExperimentConfig) -> CliResult<ResultTable> {
    let problem = config.problem.build(config.seed)?;
    let a = config.problem.estimator(&problem)?;
    let at_astar = &a == problem.a_star();
    let stream = RngStream::new(config.seed, RISK_STREAM);
    let mut header = vec![
        "epsilon",
        "gap_mean",
        "gap_stderr",
        "lower",
        "upper",
        "cross_term",
        "lambda_min",
        "lambda_max",
    ];
    let closed = if at_astar {
        // Needs isotropic noise; skipped otherwise.
        astar_gap_bounds(&problem).ok()
    } else {
        None
    };
    if closed.is_some() {
        header.extend(["astar_lower", "astar_upper"]);
    }
    let mut table = ResultTable::new(&header);
    for eps in config.epsilons() {
        let s = advlin::risk::risk_study_with_epsilon(&problem, &a, eps, config.n_samples, &stream)?;
        let b = s.bounds();
        let mut row = vec![
            eps,
            s.gap.mean,
            s.gap.std_error,
            b.lower,
            b.upper,
            b.cross_term,
            b.lambda_min,
            b.lambda_max,
        ];
        if closed.is_some() {
            let c = astar_gap_bounds(&problem.with_epsilon(eps)?)?;
            row.extend([c.lower, c.upper]);
        }
        table.push(row);
    }
    Ok(table)
}

fn frontier_rows(table: &mut ResultTable, prefix: &[f64], points: &[ParetoPoint]) {
    for p in points {
        let mut row = prefix.to_vec();
        row.extend([p.lambda, p.sr, p.ar.mean, p.ar.std_error]);
        table.push(row);
    }
}

fn pareto(config: &ExperimentConfig) -> CliResult<ResultTable> {
    let mut table = ResultTable::new(&["lambda", "sr", "ar_mean", "ar_stderr"]);
    let points = match config.pareto_target {
        ParetoTarget::Inverse => {
            let problem = config.problem.build(config.seed)?;
            let cfg = config.training.train_config(0.0, problem.epsilon(), config.seed);
            pareto_trace(&problem, &config.lambda_grid, &cfg, config.n_samples)?
        }
        ParetoTarget::State => {
            let sc = config.base_system()?;
            let problem = as_estimation_problem(&sc.build()?, sc.k, sc.epsilon)?;
            let cfg = config.training.train_config(0.0, sc.epsilon, config.seed);
            pareto_trace(&problem, &config.lambda_grid, &cfg, config.n_samples)?
        }
    };
    frontier_rows(&mut table, &[], &points);
    table.set_meta("target", format!("{:?}", config.pareto_target).to_lowercase());
    Ok(table)
}

fn kalman_bounds(config: &ExperimentConfig) -> CliResult<ResultTable> {
    let mut table = ResultTable::new(&[
        "system-id",
        "sr",
        "ar_mean",
        "ar_stderr",
        "lb_general",
        "lb_kalman",
        "ub_general",
        "ub_kalman",
        "lambda_min_gramian",
        "frob_gramian",
        "gap_mean",
        "gap_stderr",
        "lb_frobenius",
        "sqrt_lambda_min_gramian",
    ]);
    if config.systems.is_empty() {
        return Err(CliError::Config("systems must not be empty".into()));
    }
    let stream = RngStream::new(config.seed, RISK_STREAM);
    for (id, sc) in config.systems.iter().enumerate() {
        let sys = sc.build()?;
        let l = kalman_estimator(&sys, sc.k)?;
        let study = estimator_risk_study(&l, &sys, sc.k, sc.epsilon, config.n_samples, &stream)?;
        let report = kalman_bound_report(&sys, sc.k, sc.epsilon)?;
        let gram = observability_gramian(&sys, sys.horizon());
        table.push(vec![
            id as f64,
            estimator_sr_closed(&l, &sys, sc.k)?,
            study.ar.mean,
            study.ar.std_error,
            report.gap_lower_general,
            report.kalman_gap_lower.unwrap_or(f64::NAN),
            report.gap_upper_general,
            report.kalman_gap_upper.unwrap_or(f64::NAN),
            gram.lambda_min,
            gram.frobenius,
            study.gap.mean,
            study.gap.std_error,
            report.gap_lower_frobenius,
            gram.sqrt_lambda_min,
        ]);
        let regime = match report.regime {
            Regime::HighObservability => "high-observability",
            Regime::LowObservability => "low-observability",
        };
        let formula = match report.formula {
            Formula::Simplified => "simplified",
            Formula::General => "general",
        };
        table.set_meta(
            &format!("system_{id}"),
            format!("k={} regime={regime} formula={formula}", sc.k),
        );
    }
    Ok(table)
}

fn fig_condition(config: &ExperimentConfig) -> CliResult<ResultTable> {
    let mut table = ResultTable::new(&["condition", "lambda", "sr", "ar_mean", "ar_stderr"]);
    for &kappa in &config.figures.conditions {
        // Same stream for every κ: only the spectrum changes between frontiers.
        let pc = crate::config::ProblemConfig {
            condition: kappa,
            a_star: None,
            ..config.problem.clone()
        };
        let problem = pc.build(config.seed)?;
        let cfg = config.training.train_config(0.0, problem.epsilon(), config.seed);
        let points = pareto_trace(&problem, &config.lambda_grid, &cfg, config.n_samples)?;
        frontier_rows(&mut table, &[kappa], &points);
    }
    Ok(table)
}

fn fig_observability(config: &ExperimentConfig) -> CliResult<ResultTable> {
    let mut table = ResultTable::new(&[
        "alpha",
        "k",
        "lambda",
        "sr",
        "ar_mean",
        "ar_stderr",
        "lambda_min_gramian",
        "sqrt_lambda_min_gramian",
    ]);
    let base = config.base_system()?;
    for &alpha in &config.figures.alphas {
        for &k in &config.figures.observability_ks {
            let sys = base.with_dynamics(rotation_matrix(alpha), k).build()?;
            let gram = observability_gramian(&sys, sys.horizon());
            let problem = as_estimation_problem(&sys, k, base.epsilon)?;
            let cfg = config.training.train_config(0.0, base.epsilon, config.seed);
            for p in pareto_trace(&problem, &config.lambda_grid, &cfg, config.n_samples)? {
                table.push(vec![
                    alpha,
                    k as f64,
                    p.lambda,
                    p.sr,
                    p.ar.mean,
                    p.ar.std_error,
                    gram.lambda_min,
                    gram.sqrt_lambda_min,
                ]);
            }
        }
    }
    Ok(table)
}

/// Adversarial risk of two estimators on shared draws, with the paired
/// difference `AR(first) − AR(second)`.
fn paired_ar<P: EstimationProblem>(
    problem: &P,
    first: &DMatrix<f64>,
    second: &DMatrix<f64>,
    n: usize,
    stream: &RngStream,
) -> CliResult<(RiskEstimate, RiskEstimate, RiskEstimate)> {
    let eps = problem.epsilon();
    let a: Vec<f64> = sample_risks(problem, first, eps, n, stream)?
        .iter()
        .map(|s| s.adversarial)
        .collect();
    let b: Vec<f64> = sample_risks(problem, second, eps, n, stream)?
        .iter()
        .map(|s| s.adversarial)
        .collect();
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let seed = stream.seed;
    Ok((
        RiskEstimate::from_values(&a, seed),
        RiskEstimate::from_values(&b, seed),
        RiskEstimate::from_values(&diff, seed),
    ))
}

fn fig_kf_vs_adv(config: &ExperimentConfig) -> CliResult<ResultTable> {
    let mut table = ResultTable::new(&[
        "rho",
        "sr_nominal",
        "ar_nominal_mean",
        "ar_nominal_stderr",
        "sr_robust",
        "ar_robust_mean",
        "ar_robust_stderr",
        "margin_mean",
        "margin_stderr",
        "lambda_min_gramian",
    ]);
    let base = config.base_system()?;
    let k = config.figures.kf_k;
    let eval = RngStream::new(config.seed, EVAL_STREAM);
    for rho in config.figures.rhos() {
        let sys = base.with_dynamics(vec![vec![1.0, rho], vec![0.0, 1.0]], k).build()?;
        let problem = as_estimation_problem(&sys, k, base.epsilon)?;
        let nominal = kalman_estimator(&sys, k)?;
        let mut cfg = config.training.train_config(f64::INFINITY, base.epsilon, config.seed);
        cfg.init = Init::Given(nominal.clone());
        let robust = train(&problem, &cfg)?;
        let (ar_nom, ar_rob, margin) = paired_ar(&problem, &nominal, &robust, config.n_samples, &eval)?;
        table.push(vec![
            rho,
            problem.standard_risk(&nominal)?,
            ar_nom.mean,
            ar_nom.std_error,
            problem.standard_risk(&robust)?,
            ar_rob.mean,
            ar_rob.std_error,
            margin.mean,
            margin.std_error,
            observability_gramian(&sys, sys.horizon()).lambda_min,
        ]);
    }
    table.set_meta("robust_lambda", "inf");
    Ok(table)
}

fn group_series(table: &ResultTable, keys: &[&str], x: &str, y: &str, label: impl Fn(&[f64]) -> String) -> Vec<Series> {
    let idx = |name: &str| table.header.iter().position(|h| h == name);
    let (Some(xi), Some(yi)) = (idx(x), idx(y)) else {
        return vec![];
    };
    let key_idx: Vec<usize> = keys.iter().filter_map(|k| idx(k)).collect();
    let mut out: Vec<(Vec<f64>, Series)> = Vec::new();
    for row in &table.rows {
        let key: Vec<f64> = key_idx.iter().map(|&i| row[i]).collect();
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, s)) => s.points.push((row[xi], row[yi])),
            None => out.push((
                key.clone(),
                Series {
                    name: label(&key),
                    points: vec![(row[xi], row[yi])],
                },
            )),
        }
    }
    out.into_iter().map(|(_, s)| s).collect()
}

/// SVG rendering of a result table, or `None` for kinds without a chart.
pub fn chart_for(kind: ExperimentKind, table: &ResultTable) -> Option<String> {
    let (title, xl, yl, series) = match kind {
        ExperimentKind::Pareto => (
            "Pareto frontier",
            "SR",
            "AR",
            group_series(table, &[], "sr", "ar_mean", |_| "frontier".into()),
        ),
        ExperimentKind::FigCondition => (
            "Frontiers by condition number",
            "SR",
            "AR",
            group_series(table, &["condition"], "sr", "ar_mean", |k| format!("kappa = {}", k[0])),
        ),
        ExperimentKind::FigObservability => (
            "Frontiers by observability",
            "SR",
            "AR",
            group_series(table, &["alpha", "k"], "sr", "ar_mean", |k| {
                format!("alpha = {}, k = {}", k[0], k[1])
            }),
        ),
        ExperimentKind::FigKfVsAdv => {
            let mut s = group_series(table, &[], "sr_nominal", "ar_nominal_mean", |_| "nominal".into());
            s.extend(group_series(table, &[], "sr_robust", "ar_robust_mean", |_| {
                "robust".into()
            }));
            ("Nominal vs robust estimator", "SR", "AR", s)
        }
        ExperimentKind::Risk => {
            let mut s = group_series(table, &[], "epsilon", "sr_mean", |_| "SR".into());
            s.extend(group_series(table, &[], "epsilon", "ar_mean", |_| "AR".into()));
            ("Risk vs budget", "epsilon", "risk", s)
        }
        ExperimentKind::Bounds => {
            let mut s = group_series(table, &[], "epsilon", "lower", |_| "lower".into());
            s.extend(group_series(table, &[], "epsilon", "gap_mean", |_| "gap".into()));
            s.extend(group_series(table, &[], "epsilon", "upper", |_| "upper".into()));
            ("Gap bounds vs budget", "epsilon", "AR - SR", s)
        }
        ExperimentKind::Perturb | ExperimentKind::KalmanBounds => return None,
    };
    Some(line_chart(title, xl, yl, &series))
}
