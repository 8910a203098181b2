use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdirichlet"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("PDIRICHLET_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn lines(path: impl AsRef<Path>) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn sample_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(
            d.path(),
            &["sample", "--density", "rho1", "--n", "100", "--seed", "1"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("sample: "));
    }
    let sa = std::fs::read(a.path().join("samples.csv")).unwrap();
    assert_eq!(sa, std::fs::read(b.path().join("samples.csv")).unwrap());
    assert_eq!(lines(a.path().join("samples.csv")), 101);
    let manifest = std::fs::read_to_string(a.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("config_hash="));
    assert!(manifest.contains("config.n=100"));
    assert!(manifest.contains("config.lambda=0.000001"));
}

#[test]
fn continuum_with_exact_density_converges() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        &["solve-continuum", "--estimator", "exact", "--mesh", "33"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("converged=true"), "{}", stdout(&o));
    assert!(d.path().join("field.csv").exists());
    assert_eq!(lines(d.path().join("field_mesh.csv")), 33 * 33 + 1);
}

#[test]
fn continuum_rejects_p_at_most_two() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["solve-continuum", "--p", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[config]"));
    assert!(stderr(&o).contains("p > d = 2 required"));
}

#[test]
fn negative_lambda_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["sample", "--lambda", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda"));
}

#[test]
fn missing_constraint_file_is_an_io_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        &[
            "solve-discrete",
            "--n",
            "200",
            "--constraints",
            "/nonexistent/c.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn bad_thread_count_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pdirichlet"))
        .args(["sample", "--n", "10", "--out"])
        .arg(d.path())
        .env("PDIRICHLET_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn discrete_solve_writes_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        &[
            "solve-discrete",
            "--n",
            "300",
            "--density",
            "rho2",
            "--p",
            "2",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("graph: ") && out.contains("solve: "), "{out}");
    assert_eq!(lines(d.path().join("labels.csv")), 301);
    assert!(lines(d.path().join("edges.csv")) > 300);
}

#[test]
fn density_study_has_one_row_per_cell() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        &[
            "study-density",
            "--density",
            "rho2",
            "--n_values",
            "200,400",
            "--h_values",
            "0.05,0.1",
            "--seeds",
            "1,2",
            "--T",
            "64",
            "--mesh",
            "33",
            "--svg",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    // estimators × quantities × n × seeds × h
    assert_eq!(
        lines(d.path().join("study_density.csv")),
        2 * 3 * 2 * 2 * 2 + 1
    );
    assert!(d.path().join("study_density_flags.csv").exists());
    assert!(std::fs::read_to_string(d.path().join("study_density.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn config_file_with_flag_override() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nn = 50\ndensity = rho3\nthreads = 1\n").unwrap();
    let o = run(
        d.path(),
        &["sample", "--config", cfg.to_str().unwrap(), "--n", "70"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(lines(d.path().join("samples.csv")), 71);
    let manifest = std::fs::read_to_string(d.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("config.density=rho3"));
    assert!(manifest.contains("threads=1"));
}

#[test]
fn unknown_key_in_config_names_the_key() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "colour = red\n").unwrap();
    let o = run(d.path(), &["sample", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn zero_threads_in_config_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "threads = 0\n").unwrap();
    let o = run(
        d.path(),
        &["sample", "--n", "10", "--config", cfg.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("threads"));
}
