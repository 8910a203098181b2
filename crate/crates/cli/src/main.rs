use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use pdirichlet::continuum::{
    build_patches, minimize_continuum, ContinuumOptions, ContinuumProblem, OuterBoundary,
};
use pdirichlet::density::{
    reference_density, sample_density, DensityField, DensityKind, Kde, SampleSet, SplineConfig,
};
use pdirichlet::experiments::{
    constraint_labels, density_error_study, error_metrics, mesh_axis, minimizer_comparison,
    Bandwidth, ErrorReport, StudyConfig,
};
use pdirichlet::graph::{
    build_epsilon_graph, build_knn_graph, epsilon_midpoint, minimize_discrete, Acceleration,
    DescentOptions, NodeLabels,
};
use pdirichlet::io::{
    read_constraints, write_continuum_field, write_csv, write_edges, write_grid_field,
    write_labels, write_manifest, write_samples, Chart, Command, GraphKind, GridField, RunConfig,
    Series,
};
use pdirichlet::{ConstraintSet, Error, Result};

const THREADS_ENV: &str = "PDIRICHLET_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "pdirichlet",
    version,
    about = "Constrained p-Dirichlet label extension on point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// `key=value` configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Also write SVG line charts next to study CSVs.
    #[arg(long, global = true)]
    svg: bool,
    #[command(flatten)]
    keys: KeyArgs,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Draw samples from a reference density.
    Sample,
    /// Estimate the density on the evaluation mesh.
    Density,
    /// Minimise the graph energy on a sample.
    SolveDiscrete,
    /// Minimise the local continuum energy.
    SolveContinuum,
    /// Density-estimation error sweep.
    StudyDensity,
    /// Minimiser discrepancy and timing sweep.
    StudyMinimizers,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::Sample => Command::Sample,
            Sub::Density => Command::Density,
            Sub::SolveDiscrete => Command::SolveDiscrete,
            Sub::SolveContinuum => Command::SolveContinuum,
            Sub::StudyDensity => Command::StudyDensity,
            Sub::StudyMinimizers => Command::StudyMinimizers,
        }
    }
}

/// One flag per configuration key.
#[derive(Args, Debug, Default)]
struct KeyArgs {
    #[arg(long, global = true)]
    density: Option<String>,
    #[arg(long, global = true)]
    estimator: Option<String>,
    #[arg(long, global = true)]
    kernel: Option<String>,
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    h: Option<String>,
    #[arg(long = "T", global = true)]
    t: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    p: Option<String>,
    #[arg(long, global = true)]
    graph: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<String>,
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long, global = true)]
    eta: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, global = true)]
    tol: Option<String>,
    #[arg(long = "max_iter", alias = "max-iter", global = true)]
    max_iter: Option<String>,
    #[arg(long = "discrete_tol", alias = "discrete-tol", global = true)]
    discrete_tol: Option<String>,
    #[arg(long = "discrete_max_iter", alias = "discrete-max-iter", global = true)]
    discrete_max_iter: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    seeds: Option<String>,
    #[arg(long = "n_values", alias = "n-values", global = true)]
    n_values: Option<String>,
    #[arg(long = "h_values", alias = "h-values", global = true)]
    h_values: Option<String>,
    #[arg(long, global = true)]
    mesh: Option<String>,
    #[arg(long = "patch_points", alias = "patch-points", global = true)]
    patch_points: Option<String>,
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    discrete: Option<String>,
    #[arg(long, global = true)]
    constraints: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    threads: Option<String>,
}

impl KeyArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("density", self.density.as_ref()),
            ("estimator", self.estimator.as_ref()),
            ("kernel", self.kernel.as_ref()),
            ("n", self.n.as_ref()),
            ("h", self.h.as_ref()),
            ("T", self.t.as_ref()),
            ("lambda", self.lambda.as_ref()),
            ("p", self.p.as_ref()),
            ("graph", self.graph.as_ref()),
            ("epsilon", self.epsilon.as_ref()),
            ("k", self.k.as_ref()),
            ("eta", self.eta.as_ref()),
            ("beta", self.beta.as_ref()),
            ("tol", self.tol.as_ref()),
            ("max_iter", self.max_iter.as_ref()),
            ("discrete_tol", self.discrete_tol.as_ref()),
            ("discrete_max_iter", self.discrete_max_iter.as_ref()),
            ("seed", self.seed.as_ref()),
            ("seeds", self.seeds.as_ref()),
            ("n_values", self.n_values.as_ref()),
            ("h_values", self.h_values.as_ref()),
            ("mesh", self.mesh.as_ref()),
            ("patch_points", self.patch_points.as_ref()),
            ("scheme", self.scheme.as_ref()),
            ("discrete", self.discrete.as_ref()),
            ("constraints", self.constraints.as_ref()),
            ("out", self.out.as_ref()),
            ("threads", self.threads.as_ref()),
        ]
    }
}

/// Config file, then flags; returns the validated config and the requested thread count.
fn resolve(cli: &Cli) -> Result<(RunConfig, Option<usize>)> {
    let mut cfg = RunConfig::default();
    let mut threads = None;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        cfg.apply_str(&text)?;
        threads = threads_in(&text)?;
    }
    for (key, value) in cli.keys.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.command = Some(cli.command.command());
    cfg.validate()?;
    if let Ok(v) = std::env::var(THREADS_ENV) {
        threads = Some(parse_threads(THREADS_ENV, &v)?);
    }
    if let Some(v) = &cli.keys.threads {
        threads = Some(parse_threads("threads", v)?);
    }
    Ok((cfg, threads))
}

/// Last `threads = N` line of a config file.
fn threads_in(text: &str) -> Result<Option<usize>> {
    text.lines()
        .filter_map(|l| l.split('#').next()?.split_once('='))
        .filter(|(k, _)| k.trim() == "threads")
        .map(|(_, v)| parse_threads("threads", v))
        .try_fold(None, |_, t| t.map(Some))
}

fn parse_threads(key: &str, v: &str) -> Result<usize> {
    match v.trim().parse::<usize>() {
        Ok(t) if t > 0 => Ok(t),
        _ => Err(Error::Parse {
            key: key.into(),
            message: format!("expected a positive integer, got `{v}`"),
        }),
    }
}

fn stage(name: &str, start: Instant, metrics: &[(&str, String)]) {
    let m: Vec<String> = metrics.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{name}: {} time={:.3}s",
        m.join(" "),
        start.elapsed().as_secs_f64()
    );
}

fn constraints(cfg: &RunConfig) -> Result<ConstraintSet> {
    match &cfg.constraints {
        Some(path) => read_constraints(path),
        None => Ok(constraint_labels()),
    }
}

fn draw(cfg: &RunConfig) -> Result<SampleSet> {
    let start = Instant::now();
    let s = sample_density(&reference_density(cfg.density), cfg.n, cfg.seed)?;
    stage(
        "sample",
        start,
        &[
            ("density", cfg.density.to_string()),
            ("n", s.len().to_string()),
        ],
    );
    Ok(s)
}

fn estimate(cfg: &RunConfig, samples: Option<&SampleSet>) -> Result<DensityField> {
    let start = Instant::now();
    let field = match (cfg.estimator, samples) {
        (DensityKind::Exact, _) | (_, None) => DensityField::exact(reference_density(cfg.density)),
        (kind, Some(s)) => {
            let kde = Kde::new(&s.points, cfg.h, cfg.kernel)?;
            if kind == DensityKind::Skde {
                DensityField::skde_from_kde(
                    &kde,
                    &SplineConfig::uniform(cfg.t, cfg.lambda)?,
                    Some(cfg.seed),
                )?
            } else {
                DensityField::kde(kde, Some(cfg.seed))
            }
        }
    };
    stage(
        "estimate",
        start,
        &[
            ("estimator", cfg.estimator.to_string()),
            ("h", cfg.h.to_string()),
        ],
    );
    Ok(field)
}

fn mesh_points(axis: &[f64]) -> Vec<[f64; 2]> {
    axis.iter()
        .flat_map(|&y| axis.iter().map(move |&x| [x, y]))
        .collect()
}

fn run_sample(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let s = draw(cfg)?;
    let path = cfg.out.join("samples.csv");
    write_samples(&path, &s.points)?;
    Ok(vec![("samples".into(), path.display().to_string())])
}

fn run_density(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let samples = if cfg.estimator == DensityKind::Exact {
        None
    } else {
        Some(draw(cfg)?)
    };
    let field = estimate(cfg, samples.as_ref())?;
    let start = Instant::now();
    let axis = mesh_axis(cfg.mesh);
    let values = field.values_on_tensor_grid(&axis, &axis);
    let exact =
        DensityField::exact(reference_density(cfg.density)).values_on_tensor_grid(&axis, &axis);
    let e = error_metrics(
        &values,
        &exact,
        &axis,
        &pdirichlet::experiments::OMEGA_PRIME,
    )?;
    let meta = field.meta();
    let mut kv = vec![
        ("estimator".to_string(), cfg.estimator.to_string()),
        ("density".into(), cfg.density.to_string()),
    ];
    for (k, v) in [("h", meta.h), ("lambda", meta.lambda)] {
        if let Some(v) = v {
            kv.push((k.into(), v.to_string()));
        }
    }
    if let Some(t) = meta.knots {
        kv.push(("T".into(), t.to_string()));
    }
    if let Some(s) = meta.seed {
        kv.push(("seed".into(), s.to_string()));
    }
    let path = cfg.out.join("density.csv");
    write_grid_field(
        &path,
        &GridField {
            points: mesh_points(&axis),
            values,
            meta: kv,
        },
    )?;
    stage(
        "evaluate",
        start,
        &[
            ("mesh", cfg.mesh.to_string()),
            ("l2", format!("{:.4e}", e.l2)),
            ("linf", format!("{:.4e}", e.linf)),
        ],
    );
    Ok(vec![
        ("density".into(), path.display().to_string()),
        ("linf".into(), e.linf.to_string()),
    ])
}

fn run_solve_discrete(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let s = draw(cfg)?;
    let start = Instant::now();
    let graph = match cfg.graph {
        GraphKind::Epsilon => build_epsilon_graph(
            &s.points,
            cfg.epsilon
                .unwrap_or_else(|| epsilon_midpoint(cfg.n, cfg.p)),
            cfg.eta,
        )?,
        GraphKind::Knn => build_knn_graph(&s.points, cfg.k)?,
    };
    let labels = NodeLabels::from_constraints(&graph, &constraints(cfg)?)?;
    stage(
        "graph",
        start,
        &[
            ("edges", graph.nnz().to_string()),
            ("components", graph.component_count().to_string()),
        ],
    );
    let opts = DescentOptions {
        p: cfg.p,
        tau: None,
        tol: cfg.discrete_tol,
        max_iter: cfg.discrete_max_iter,
        accel: Acceleration::Nesterov,
    };
    let start = Instant::now();
    let r = minimize_discrete(&graph, &labels, &opts)?;
    stage(
        "solve",
        start,
        &[
            ("energy", format!("{:.6e}", r.energy)),
            ("iterations", r.iterations.to_string()),
            ("residual", format!("{:.3e}", r.residual)),
            ("converged", r.converged.to_string()),
        ],
    );
    write_samples(cfg.out.join("samples.csv"), &s.points)?;
    write_edges(cfg.out.join("edges.csv"), &graph)?;
    write_labels(cfg.out.join("labels.csv"), &s.points, &r.field)?;
    Ok(vec![
        ("energy".into(), r.energy.to_string()),
        ("iterations".into(), r.iterations.to_string()),
        ("converged".into(), r.converged.to_string()),
        ("violations".into(), r.monotonicity_violations().to_string()),
    ])
}

fn run_solve_continuum(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let samples = if cfg.estimator == DensityKind::Exact {
        None
    } else {
        Some(draw(cfg)?)
    };
    let field = estimate(cfg, samples.as_ref())?;
    let cs = constraints(cfg)?;
    let start = Instant::now();
    let domain = build_patches(&cs, cfg.patch_points)?;
    let problem = ContinuumProblem::new(
        domain,
        cs,
        &field,
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
    let r = minimize_continuum(&problem, &opts)?;
    stage(
        "solve",
        start,
        &[
            ("energy", format!("{:.6e}", r.energy)),
            ("iterations", r.iterations.to_string()),
            ("residual", format!("{:.3e}", r.residual)),
            ("converged", r.converged.to_string()),
        ],
    );
    let axis = mesh_axis(cfg.mesh);
    let values = r.field.on_tensor_grid(&axis, &axis)?;
    write_continuum_field(cfg.out.join("field.csv"), &r.field)?;
    let meta = vec![
        ("estimator".into(), cfg.estimator.to_string()),
        ("p".into(), cfg.p.to_string()),
    ];
    write_grid_field(
        cfg.out.join("field_mesh.csv"),
        &GridField {
            points: mesh_points(&axis),
            values,
            meta,
        },
    )?;
    Ok(vec![
        ("energy".into(), r.energy.to_string()),
        ("iterations".into(), r.iterations.to_string()),
        ("converged".into(), r.converged.to_string()),
        ("violations".into(), r.monotonicity_violations().to_string()),
    ])
}

fn write_report(
    cfg: &RunConfig,
    stem: &str,
    report: &ErrorReport,
) -> Result<Vec<(String, String)>> {
    write_csv(&report.to_table(), cfg.out.join(format!("{stem}.csv")))?;
    write_csv(
        &report.timing_table(),
        cfg.out.join(format!("{stem}_timing.csv")),
    )?;
    write_csv(
        &report.flag_table(),
        cfg.out.join(format!("{stem}_flags.csv")),
    )?;
    for f in &report.flags {
        println!("flag: {} holds={}", f.name, f.holds);
    }
    Ok(report
        .flags
        .iter()
        .map(|f| (format!("flag.{}", f.name), f.holds.to_string()))
        .collect())
}

fn log_chart(title: &str, x: &str, y: &str, series: Vec<Series>) -> Chart {
    Chart {
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        log_x: true,
        log_y: true,
        series,
    }
}

fn run_study_density(cfg: &RunConfig, svg: bool) -> Result<Vec<(String, String)>> {
    let study = StudyConfig::from_run_config(cfg);
    let start = Instant::now();
    let report = density_error_study(&study)?;
    stage(
        "study-density",
        start,
        &[("rows", report.rows.len().to_string())],
    );
    let extra = write_report(cfg, "study_density", &report)?;
    if svg {
        let meds = report.medians(|r| r.linf);
        let mut by_series: BTreeMap<(String, usize), Series> = BTreeMap::new();
        for ((method, q, h, n), v) in meds {
            if q != "rho" {
                continue;
            }
            let s = by_series
                .entry((method.clone(), n))
                .or_insert_with(|| Series {
                    name: format!("{method} n={n}"),
                    xs: Vec::new(),
                    ys: Vec::new(),
                });
            s.xs.push(f64::from_bits(h));
            s.ys.push(v);
        }
        let chart = log_chart(
            "Density error",
            "h",
            "median L-infinity error",
            by_series.into_values().collect(),
        );
        chart.write(cfg.out.join("study_density.svg"))?;
    }
    Ok(extra)
}

fn run_study_minimizers(cfg: &RunConfig, svg: bool) -> Result<Vec<(String, String)>> {
    let study = StudyConfig {
        bandwidth: Bandwidth::Values(vec![cfg.h]),
        ..StudyConfig::from_run_config(cfg)
    };
    let start = Instant::now();
    let report = minimizer_comparison(&study, &constraints(cfg)?)?;
    stage(
        "study-minimizers",
        start,
        &[
            ("rows", report.rows.len().to_string()),
            ("violations", report.total_violations().to_string()),
        ],
    );
    let extra = write_report(cfg, "study_minimizers", &report)?;
    if svg {
        let per_method = |metric: fn(&pdirichlet::experiments::ErrorRow) -> f64| {
            let mut by: BTreeMap<String, Series> = BTreeMap::new();
            for ((method, _, _, n), v) in report.medians(metric) {
                if n == 0 {
                    continue;
                }
                let s = by.entry(method.clone()).or_insert_with(|| Series {
                    name: method,
                    xs: vec![],
                    ys: vec![],
                });
                s.xs.push(n as f64);
                s.ys.push(v);
            }
            by.into_values().collect::<Vec<_>>()
        };
        log_chart(
            "Minimiser discrepancy",
            "n",
            "median L-infinity error",
            per_method(|r| r.linf),
        )
        .write(cfg.out.join("study_minimizers.svg"))?;
        log_chart(
            "Pipeline time",
            "n",
            "median seconds",
            per_method(|r| r.seconds),
        )
        .write(cfg.out.join("study_minimizers_timing.svg"))?;
    }
    Ok(extra)
}

fn run(cli: &Cli) -> Result<()> {
    let (cfg, threads) = resolve(cli)?;
    if let Some(t) = threads {
        // an already initialised pool keeps its size
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    std::fs::create_dir_all(&cfg.out)?;
    let extra = match cli.command {
        Sub::Sample => run_sample(&cfg)?,
        Sub::Density => run_density(&cfg)?,
        Sub::SolveDiscrete => run_solve_discrete(&cfg)?,
        Sub::SolveContinuum => run_solve_continuum(&cfg)?,
        Sub::StudyDensity => run_study_density(&cfg, cli.svg)?,
        Sub::StudyMinimizers => run_study_minimizers(&cfg, cli.svg)?,
    };
    let mut extra = extra;
    extra.push(("threads".into(), rayon::current_num_threads().to_string()));
    write_manifest(manifest_path(&cfg.out), &cfg, &extra)
}

fn manifest_path(out: &Path) -> PathBuf {
    out.join("manifest.txt")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
