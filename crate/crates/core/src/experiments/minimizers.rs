use std::time::Instant;

use super::metrics::{error_metrics, mesh_axis, scattered_error};
use super::report::{ErrorReport, ErrorRow};
use super::StudyConfig;
use crate::constraints::ConstraintSet;
use crate::continuum::{
    build_patches, evaluate_on_mesh, minimize_continuum, ContinuumField, ContinuumOptions,
    ContinuumProblem, OuterBoundary,
};
use crate::density::{
    reference_density, sample_density, DensityField, DensityKind, Kde, SplineConfig,
};
use crate::error::Result;
use crate::graph::{
    build_epsilon_graph, build_knn_graph, epsilon_midpoint, minimize_discrete, Acceleration,
    DescentOptions, NodeLabels,
};
use crate::io::GraphKind;
use crate::MinimizerResult;

/// Minimises the local energy for `density` with the patch, boundary and flow settings of `cfg`.
pub fn solve_continuum(
    constraints: &ConstraintSet,
    density: &DensityField,
    cfg: &StudyConfig,
) -> Result<MinimizerResult<ContinuumField>> {
    let domain = build_patches(constraints, cfg.patch_points)?;
    let problem = ContinuumProblem::new(
        domain,
        constraints.clone(),
        density,
        cfg.p,
        cfg.eta,
        OuterBoundary::Natural { beta: cfg.beta },
    )?;
    let opts = ContinuumOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        scheme: cfg.scheme,
        ..Default::default()
    };
    minimize_continuum(&problem, &opts)
}

fn continuum_row<F>(
    method: String,
    n: usize,
    h: f64,
    seed: u64,
    r: &MinimizerResult<F>,
) -> ErrorRow {
    ErrorRow {
        method,
        quantity: "u".into(),
        n,
        h,
        seed,
        l2: 0.0,
        linf: 0.0,
        seconds: r.wall_time.as_secs_f64(),
        solve_seconds: r.wall_time.as_secs_f64(),
        converged: r.converged,
        iterations: r.iterations,
        violations: r.monotonicity_violations(),
    }
}

/// Discrepancy of estimated-density minimisers from the exact-density minimiser `f_∞`.
///
/// For every sample size, bandwidth and seed, the continuum problem is solved with each
/// estimator and compared with `f_∞` on the evaluation mesh; the optional graph minimiser
/// is compared with `f_∞` at its sample points. Pipeline times exclude sampling. Runs that
/// do not converge are kept and marked in the `converged` column.
pub fn minimizer_comparison(cfg: &StudyConfig, constraints: &ConstraintSet) -> Result<ErrorReport> {
    cfg.validate()?;
    let axis = mesh_axis(cfg.mesh);
    let reference = reference_density(cfg.density);
    let truth = solve_continuum(constraints, &DensityField::exact(reference), cfg)?;
    let truth_mesh = truth.field.on_tensor_grid(&axis, &axis)?;
    let mut report = ErrorReport::default();
    report
        .rows
        .push(continuum_row("continuum-exact".into(), 0, 0.0, 0, &truth));
    let spline = SplineConfig::uniform(cfg.t, cfg.lambda)?;
    // Sequential so that per-run wall times are not skewed by sibling cells.
    for &n in &cfg.n_values {
        for &seed in &cfg.seeds {
            let samples = sample_density(&reference, n, seed)?;
            for h in cfg.bandwidth.for_n(n) {
                for kind in cfg.estimators() {
                    let start = Instant::now();
                    let kde = Kde::new(&samples.points, h, cfg.kernel)?;
                    let field = match kind {
                        DensityKind::Skde => {
                            DensityField::skde_from_kde(&kde, &spline, Some(seed))?
                        }
                        _ => DensityField::kde(kde, Some(seed)),
                    };
                    let result = solve_continuum(constraints, &field, cfg)?;
                    let seconds = start.elapsed().as_secs_f64();
                    let e = error_metrics(
                        &result.field.on_tensor_grid(&axis, &axis)?,
                        &truth_mesh,
                        &axis,
                        &cfg.region,
                    )?;
                    report.rows.push(ErrorRow {
                        l2: e.l2,
                        linf: e.linf,
                        seconds,
                        ..continuum_row(format!("continuum-{kind}"), n, h, seed, &result)
                    });
                }
            }
            if cfg.discrete {
                let start = Instant::now();
                let (graph, scale) = match cfg.graph {
                    GraphKind::Epsilon => {
                        let eps = cfg.epsilon.unwrap_or_else(|| epsilon_midpoint(n, cfg.p));
                        (build_epsilon_graph(&samples.points, eps, cfg.eta)?, eps)
                    }
                    GraphKind::Knn => (build_knn_graph(&samples.points, cfg.k)?, 0.0),
                };
                let labels = NodeLabels::from_constraints(&graph, constraints)?;
                let opts = DescentOptions {
                    p: cfg.p,
                    tau: None,
                    tol: cfg.discrete_tol,
                    max_iter: cfg.discrete_max_iter,
                    accel: Acceleration::Nesterov,
                };
                let result = minimize_discrete(&graph, &labels, &opts)?;
                let seconds = start.elapsed().as_secs_f64();
                let reference_values = evaluate_on_mesh(&truth.field, &samples.points)?;
                let e = scattered_error(
                    &samples.points,
                    &result.field,
                    &reference_values,
                    &cfg.region,
                )?;
                report.rows.push(ErrorRow {
                    method: "discrete".into(),
                    quantity: "u".into(),
                    n,
                    h: scale,
                    seed,
                    l2: e.l2,
                    linf: e.linf,
                    seconds,
                    solve_seconds: result.wall_time.as_secs_f64(),
                    converged: result.converged,
                    iterations: result.iterations,
                    violations: result.monotonicity_violations(),
                });
            }
            log::info!("minimiser comparison: n={n} seed={seed} done");
        }
    }
    let mut methods: Vec<String> = cfg
        .estimators()
        .iter()
        .map(|k| format!("continuum-{k}"))
        .collect();
    if cfg.discrete {
        methods.push("discrete".into());
    }
    for m in &methods {
        report.add_trend_flags(m, "u", cfg.trend_margin);
    }
    report.add_dominance_flag("continuum-skde", "continuum-kde", "u");
    let primary = methods
        .iter()
        .find(|m| *m == "continuum-skde")
        .or_else(|| methods.first());
    if let Some(primary) = primary.filter(|m| m.starts_with("continuum")) {
        report.add_timing_flag(primary, |f| f < 4.0, "below_4");
    }
    if cfg.discrete {
        report.add_timing_flag("discrete", |f| f > 10.0, "above_10");
    }
    Ok(report)
}
