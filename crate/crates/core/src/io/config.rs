use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::continuum::Scheme;
use crate::density::{DensityId, DensityKind, Kernel, WeightProfile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sample,
    Density,
    SolveDiscrete,
    SolveContinuum,
    StudyDensity,
    StudyMinimizers,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Sample,
        Command::Density,
        Command::SolveDiscrete,
        Command::SolveContinuum,
        Command::StudyDensity,
        Command::StudyMinimizers,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Density => "density",
            Command::SolveDiscrete => "solve-discrete",
            Command::SolveContinuum => "solve-continuum",
            Command::StudyDensity => "study-density",
            Command::StudyMinimizers => "study-minimizers",
        }
    }

    /// Whether the command solves the continuum problem, which needs `p > 2`.
    pub fn uses_continuum(&self) -> bool {
        matches!(self, Command::SolveContinuum | Command::StudyMinimizers)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::Parse {
                key: "command".into(),
                message: format!("unknown command `{s}`"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Epsilon,
    Knn,
}

impl GraphKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GraphKind::Epsilon => "epsilon",
            GraphKind::Knn => "knn",
        }
    }
}

impl FromStr for GraphKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "epsilon" => Ok(GraphKind::Epsilon),
            "knn" => Ok(GraphKind::Knn),
            other => Err(Error::InvalidArgument(format!(
                "unknown graph kind `{other}`"
            ))),
        }
    }
}

/// Every run parameter. Values not given explicitly keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub density: DensityId,
    pub estimator: DensityKind,
    pub kernel: Kernel,
    pub n: usize,
    pub h: f64,
    /// Number of spline knots `T`.
    pub t: usize,
    pub lambda: f64,
    pub p: f64,
    pub graph: GraphKind,
    /// Graph radius; `None` picks the midpoint of the admissible scaling window.
    pub epsilon: Option<f64>,
    pub k: usize,
    pub eta: WeightProfile,
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub discrete_tol: f64,
    pub discrete_max_iter: usize,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub n_values: Vec<usize>,
    pub h_values: Vec<f64>,
    /// Side `D` of the uniform evaluation mesh.
    pub mesh: usize,
    /// Chebyshev points per patch side.
    pub patch_points: usize,
    pub scheme: Scheme,
    /// Include the discrete solver in the minimiser study.
    pub discrete: bool,
    /// Optional `x,y,label` file replacing the default 16-point constraints.
    pub constraints: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            density: DensityId::Rho1,
            estimator: DensityKind::Skde,
            kernel: Kernel::Gaussian,
            n: 4096,
            h: 0.01,
            t: 4096,
            lambda: 1e-6,
            p: 3.0,
            graph: GraphKind::Epsilon,
            epsilon: None,
            k: 10,
            eta: WeightProfile::Indicator,
            beta: 0.01,
            tol: 1e-5,
            max_iter: 500,
            discrete_tol: 1e-5,
            discrete_max_iter: 200_000,
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
            n_values: vec![1024, 4096, 16384],
            h_values: vec![0.005, 0.01, 0.02, 0.03, 0.05, 0.1],
            mesh: 512,
            patch_points: 10,
            scheme: Scheme::Variational,
            discrete: false,
            constraints: None,
            out: PathBuf::from("out"),
        }
    }
}

/// All recognised keys, in serialisation order.
pub const KEYS: [&str; 29] = [
    "command",
    "density",
    "estimator",
    "kernel",
    "n",
    "h",
    "T",
    "lambda",
    "p",
    "graph",
    "epsilon",
    "k",
    "eta",
    "beta",
    "tol",
    "max_iter",
    "discrete_tol",
    "discrete_max_iter",
    "seed",
    "seeds",
    "n_values",
    "h_values",
    "mesh",
    "patch_points",
    "scheme",
    "discrete",
    "constraints",
    "out",
    "threads",
];

fn parse_err(key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        key: key.to_string(),
        message: message.into(),
    }
}

fn num<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| parse_err(key, format!("expected {what}, got `{value}`")))
}

fn list<T: FromStr>(key: &str, value: &str, what: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| num(key, s, what))
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Parses `key=value` lines over the defaults; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` lines without validating.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                parse_err(line, format!("line {}: expected key=value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "command" => {
                self.command = if value.is_empty() {
                    None
                } else {
                    Some(value.parse()?)
                };
            }
            "density" => {
                self.density = value
                    .parse()
                    .map_err(|_| parse_err(key, "expected rho1, rho2 or rho3"))?
            }
            "estimator" => {
                self.estimator = value
                    .parse()
                    .map_err(|_| parse_err(key, "expected exact, kde or skde"))?
            }
            "kernel" => {
                self.kernel = value
                    .parse()
                    .map_err(|_| parse_err(key, "expected gaussian, uniform or epanechnikov"))?
            }
            "n" => self.n = num(key, value, "a positive integer")?,
            "h" => self.h = num(key, value, "a positive number")?,
            "T" => self.t = num(key, value, "a perfect square of at least 4")?,
            "lambda" => self.lambda = num(key, value, "a positive number")?,
            "p" => self.p = num(key, value, "a number above 1")?,
            "graph" => {
                self.graph = value
                    .parse()
                    .map_err(|_| parse_err(key, "expected epsilon or knn"))?
            }
            "epsilon" => {
                self.epsilon = if value.is_empty() || value == "auto" {
                    None
                } else {
                    Some(num(key, value, "a positive number or `auto`")?)
                }
            }
            "k" => self.k = num(key, value, "a positive integer")?,
            "eta" => {
                self.eta = value.parse().map_err(|_| {
                    parse_err(
                        key,
                        "expected indicator, gaussian, zero or algebraic:<decay>",
                    )
                })?
            }
            "beta" => self.beta = num(key, value, "a non-negative number")?,
            "tol" => self.tol = num(key, value, "a positive number")?,
            "max_iter" => self.max_iter = num(key, value, "a positive integer")?,
            "discrete_tol" => self.discrete_tol = num(key, value, "a positive number")?,
            "discrete_max_iter" => self.discrete_max_iter = num(key, value, "a positive integer")?,
            "seed" => self.seed = num(key, value, "a non-negative integer")?,
            "seeds" => self.seeds = list(key, value, "comma-separated non-negative integers")?,
            "n_values" => self.n_values = list(key, value, "comma-separated positive integers")?,
            "h_values" => self.h_values = list(key, value, "comma-separated positive numbers")?,
            "mesh" => self.mesh = num(key, value, "an integer of at least 2")?,
            "patch_points" => self.patch_points = num(key, value, "an integer of at least 3")?,
            "scheme" => {
                self.scheme = value
                    .parse()
                    .map_err(|_| parse_err(key, "expected variational or collocation"))?
            }
            "discrete" => {
                self.discrete = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => {
                        return Err(parse_err(
                            key,
                            format!("expected true or false, got `{value}`"),
                        ))
                    }
                }
            }
            "constraints" => {
                self.constraints = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "out" => self.out = PathBuf::from(value),
            // consumed by the binary; accepted so one file can drive a whole run
            "threads" => {
                num::<usize>(key, value, "a positive integer")?;
            }
            _ => return Err(parse_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks every value against the preconditions of the code that consumes it.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(parse_err(key, format!("must be positive, got {v}")))
            }
        };
        if self.n == 0 {
            return Err(parse_err("n", "must be at least 1"));
        }
        positive("h", self.h)?;
        let side = (self.t as f64).sqrt().round() as usize;
        if side * side != self.t || side < 2 {
            return Err(parse_err(
                "T",
                format!("must be a perfect square of at least 4, got {}", self.t),
            ));
        }
        positive("lambda", self.lambda)?;
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(parse_err("p", format!("must exceed 1, got {}", self.p)));
        }
        if self.command.is_some_and(|c| c.uses_continuum()) && self.p <= 2.0 {
            return Err(parse_err(
                "p",
                format!(
                    "p > d = 2 required for the continuum solver, got {}",
                    self.p
                ),
            ));
        }
        if let Some(e) = self.epsilon {
            positive("epsilon", e)?;
        }
        if self.k == 0 {
            return Err(parse_err("k", "must be at least 1"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(parse_err(
                "beta",
                format!("must be non-negative, got {}", self.beta),
            ));
        }
        positive("tol", self.tol)?;
        positive("discrete_tol", self.discrete_tol)?;
        if self.max_iter == 0 {
            return Err(parse_err("max_iter", "must be at least 1"));
        }
        if self.discrete_max_iter == 0 {
            return Err(parse_err("discrete_max_iter", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(parse_err("seeds", "at least one seed is required"));
        }
        if self.n_values.is_empty()
            || self.n_values[0] == 0
            || self.n_values.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(parse_err(
                "n_values",
                "must be positive and strictly increasing",
            ));
        }
        if self.h_values.is_empty()
            || !(self.h_values[0] > 0.0)
            || self.h_values.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(parse_err(
                "h_values",
                "must be positive and strictly increasing",
            ));
        }
        if self.mesh < 2 {
            return Err(parse_err("mesh", "must be at least 2"));
        }
        if self.patch_points < 3 {
            return Err(parse_err("patch_points", "must be at least 3"));
        }
        Ok(())
    }

    /// `(key, value)` for every setting, defaults included.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            (
                "command",
                self.command.map(|c| c.to_string()).unwrap_or_default(),
            ),
            ("density", self.density.to_string()),
            ("estimator", self.estimator.to_string()),
            ("kernel", self.kernel.to_string()),
            ("n", self.n.to_string()),
            ("h", self.h.to_string()),
            ("T", self.t.to_string()),
            ("lambda", self.lambda.to_string()),
            ("p", self.p.to_string()),
            ("graph", self.graph.as_str().to_string()),
            (
                "epsilon",
                self.epsilon
                    .map(|e| e.to_string())
                    .unwrap_or_else(|| "auto".into()),
            ),
            ("k", self.k.to_string()),
            ("eta", self.eta.to_string()),
            ("beta", self.beta.to_string()),
            ("tol", self.tol.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("discrete_tol", self.discrete_tol.to_string()),
            ("discrete_max_iter", self.discrete_max_iter.to_string()),
            ("seed", self.seed.to_string()),
            ("seeds", join(&self.seeds)),
            ("n_values", join(&self.n_values)),
            ("h_values", join(&self.h_values)),
            ("mesh", self.mesh.to_string()),
            ("patch_points", self.patch_points.to_string()),
            ("scheme", self.scheme.to_string()),
            ("discrete", self.discrete.to_string()),
            (
                "constraints",
                self.constraints
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("out", self.out.display().to_string()),
        ]
    }

    /// Serialises to the `key=value` format accepted by [`RunConfig::parse_str`].
    pub fn to_config_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_gives_defaults() {
        let c = RunConfig::parse_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(
            (c.p, c.h, c.t, c.lambda, c.beta, c.tol, c.patch_points),
            (3.0, 0.01, 4096, 1e-6, 0.01, 1e-5, 10)
        );
    }

    #[test]
    fn comments_and_overrides() {
        let c = RunConfig::parse_str("# run\nn = 200  # small\nT=64\ndensity=rho2\nseeds=3,4\n")
            .unwrap();
        assert_eq!(c.n, 200);
        assert_eq!(c.t, 64);
        assert_eq!(c.density, DensityId::Rho2);
        assert_eq!(c.seeds, vec![3, 4]);
    }

    #[test]
    fn rejects_bad_values() {
        let key = |text: &str| match RunConfig::parse_str(text) {
            Err(Error::Parse { key, message }) => (key, message),
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(key("lambda=-1").0, "lambda");
        assert_eq!(key("colour=red").1, "unknown key");
        assert_eq!(key("n=ten").0, "n");
        assert_eq!(key("T=10").0, "T");
        let (k, m) = key("command=solve-continuum\np=1.5");
        assert_eq!(k, "p");
        assert!(m.contains("p > d = 2 required"));
        assert!(RunConfig::parse_str("command=solve-discrete\np=1.5").is_ok());
    }

    #[test]
    fn roundtrip() {
        let c = RunConfig {
            command: Some(Command::StudyMinimizers),
            epsilon: Some(0.0625),
            h_values: vec![0.1 + 0.2, 0.5],
            constraints: Some(PathBuf::from("pts.csv")),
            eta: WeightProfile::Algebraic { decay: 5.5 },
            scheme: Scheme::Collocation,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse_str(&c.to_config_string()).unwrap(), c);
        assert_eq!(c.entries().len() + 1, KEYS.len());
    }
}
