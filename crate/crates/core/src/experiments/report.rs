use std::collections::BTreeMap;

use super::metrics::{median, non_increasing};
use crate::io::{Table, Value};

/// One measured cell of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    /// Estimator or pipeline, e.g. `kde`, `continuum-skde`, `discrete`.
    pub method: String,
    /// Compared quantity, e.g. `rho`, `rho_x`, `u`.
    pub quantity: String,
    pub n: usize,
    pub h: f64,
    pub seed: u64,
    pub l2: f64,
    pub linf: f64,
    /// Wall time of the whole pipeline producing the estimate.
    pub seconds: f64,
    /// Wall time of the minimiser alone; zero for density estimates.
    pub solve_seconds: f64,
    pub converged: bool,
    pub iterations: usize,
    pub violations: usize,
}

/// A machine-checkable trend: `values` indexed by increasing `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendFlag {
    pub name: String,
    pub values: Vec<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    pub flags: Vec<TrendFlag>,
}

const ERROR_HEADER: [&str; 10] = [
    "method",
    "quantity",
    "n",
    "h",
    "seed",
    "l2",
    "linf",
    "converged",
    "iterations",
    "violations",
];
const TIMING_HEADER: [&str; 6] = ["method", "n", "h", "seed", "seconds", "solve_seconds"];
const FLAG_HEADER: [&str; 3] = ["flag", "holds", "values"];

impl ErrorReport {
    /// Errors and solver diagnostics; deterministic for a fixed configuration.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(ERROR_HEADER);
        t.rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    Value::Text(r.method.clone()),
                    Value::Text(r.quantity.clone()),
                    r.n.into(),
                    r.h.into(),
                    Value::Int(r.seed as i64),
                    r.l2.into(),
                    r.linf.into(),
                    Value::Int(r.converged as i64),
                    r.iterations.into(),
                    r.violations.into(),
                ]
            })
            .collect();
        t
    }

    /// Wall times, one line per distinct pipeline run.
    pub fn timing_table(&self) -> Table {
        let mut t = Table::new(TIMING_HEADER);
        let mut seen = std::collections::HashSet::new();
        for r in &self.rows {
            if seen.insert((r.method.clone(), r.n, r.h.to_bits(), r.seed)) {
                t.rows.push(vec![
                    Value::Text(r.method.clone()),
                    r.n.into(),
                    r.h.into(),
                    Value::Int(r.seed as i64),
                    r.seconds.into(),
                    r.solve_seconds.into(),
                ]);
            }
        }
        t
    }

    pub fn flag_table(&self) -> Table {
        let mut t = Table::new(FLAG_HEADER);
        t.rows = self
            .flags
            .iter()
            .map(|f| {
                let vals = f
                    .values
                    .iter()
                    .map(|v| format!("{v:.6e}"))
                    .collect::<Vec<_>>()
                    .join(";");
                vec![
                    Value::Text(f.name.clone()),
                    Value::Int(f.holds as i64),
                    Value::Text(vals),
                ]
            })
            .collect();
        t
    }

    pub fn flag(&self, name: &str) -> Option<&TrendFlag> {
        self.flags.iter().find(|f| f.name == name)
    }

    /// Median of `metric` over seeds for each `(method, quantity, h, n)`.
    pub fn medians(
        &self,
        metric: impl Fn(&ErrorRow) -> f64,
    ) -> BTreeMap<(String, String, u64, usize), f64> {
        let mut groups: BTreeMap<(String, String, u64, usize), Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            groups
                .entry((r.method.clone(), r.quantity.clone(), r.h.to_bits(), r.n))
                .or_default()
                .push(metric(r));
        }
        groups.into_iter().map(|(k, v)| (k, median(&v))).collect()
    }

    /// Median L∞ over seeds for `(method, quantity)` as a function of `n`.
    ///
    /// Rows are grouped by their position in the per-`n` bandwidth list, so a
    /// bandwidth schedule that changes with `n` still forms one series.
    pub fn median_linf_series(&self, method: &str, quantity: &str) -> Vec<Vec<(usize, f64)>> {
        let mut by_n: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for r in self
            .rows
            .iter()
            .filter(|r| r.method == method && r.quantity == quantity)
        {
            let hs = by_n.entry(r.n).or_default();
            if !hs.contains(&r.h.to_bits()) {
                hs.push(r.h.to_bits());
            }
        }
        let meds = self.medians(|r| r.linf);
        let width = by_n.values().map(Vec::len).max().unwrap_or(0);
        (0..width)
            .map(|slot| {
                by_n.iter()
                    .filter_map(|(&n, hs)| {
                        let mut sorted = hs.clone();
                        sorted.sort_by(|a, b| f64::from_bits(*a).total_cmp(&f64::from_bits(*b)));
                        let h = *sorted.get(slot)?;
                        meds.get(&(method.to_string(), quantity.to_string(), h, n))
                            .map(|&m| (n, m))
                    })
                    .collect()
            })
            .collect()
    }

    /// Adds a non-increasing-in-`n` flag for every bandwidth slot of `(method, quantity)`.
    pub fn add_trend_flags(&mut self, method: &str, quantity: &str, margin: f64) {
        let series = self.median_linf_series(method, quantity);
        let single = series.len() == 1;
        for (slot, s) in series.into_iter().enumerate() {
            if s.len() < 2 {
                continue;
            }
            let values: Vec<f64> = s.iter().map(|v| v.1).collect();
            let name = if single {
                format!("{method}:{quantity}:linf_non_increasing")
            } else {
                format!("{method}:{quantity}:h{slot}:linf_non_increasing")
            };
            let holds = non_increasing(&values, margin);
            self.flags.push(TrendFlag {
                name,
                values,
                holds,
            });
        }
    }

    /// Flags whether the median L∞ of `better` is at most that of `worse` in every shared cell.
    pub fn add_dominance_flag(&mut self, better: &str, worse: &str, quantity: &str) {
        let meds = self.medians(|r| r.linf);
        let mut values = Vec::new();
        let mut holds = true;
        for ((m, q, h, n), &v) in &meds {
            if m != better || q != quantity {
                continue;
            }
            if let Some(&w) = meds.get(&(worse.to_string(), q.clone(), *h, *n)) {
                values.push(v - w);
                holds &= v <= w;
            }
        }
        if !values.is_empty() {
            let name = format!("{better}<={worse}:{quantity}:median_linf");
            self.flags.push(TrendFlag {
                name,
                values,
                holds,
            });
        }
    }

    /// Flags the growth factor of the median pipeline time between the smallest and largest `n`.
    pub fn add_timing_flag(&mut self, method: &str, holds: impl Fn(f64) -> bool, label: &str) {
        let meds = self.medians(|r| r.seconds);
        let mut by_n: BTreeMap<usize, f64> = BTreeMap::new();
        for ((m, _, _, n), &v) in &meds {
            if m == method {
                let e = by_n.entry(*n).or_insert(0.0);
                *e = e.max(v);
            }
        }
        if by_n.len() < 2 {
            return;
        }
        let first = *by_n.values().next().unwrap();
        let last = *by_n.values().last().unwrap();
        let factor = last / first.max(f64::MIN_POSITIVE);
        self.flags.push(TrendFlag {
            name: format!("{method}:time_growth_{label}"),
            values: by_n.values().copied().chain([factor]).collect(),
            holds: holds(factor),
        });
    }

    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, n: usize, h: f64, seed: u64, linf: f64) -> ErrorRow {
        ErrorRow {
            method: method.into(),
            quantity: "rho".into(),
            n,
            h,
            seed,
            l2: 0.5 * linf,
            linf,
            seconds: n as f64,
            solve_seconds: 0.0,
            converged: true,
            iterations: 0,
            violations: 0,
        }
    }

    #[test]
    fn trend_and_dominance_flags() {
        let mut r = ErrorReport::default();
        for (n, base) in [(10, 3.0), (20, 2.0), (40, 2.5)] {
            for (seed, jitter) in [(1, 0.0), (2, 0.1), (3, -0.1)] {
                r.rows.push(row("kde", n, 0.1, seed, base + jitter));
                r.rows
                    .push(row("kde", n, 0.2, seed, 4.0 / n as f64 + jitter));
                r.rows.push(row("skde", n, 0.1, seed, base + jitter - 0.5));
            }
        }
        r.add_trend_flags("kde", "rho", 0.0);
        r.add_trend_flags("skde", "rho", 0.4);
        r.add_dominance_flag("skde", "kde", "rho");
        r.add_timing_flag("kde", |f| f > 3.0, "gt3");
        assert_eq!(
            r.flag("kde:rho:h0:linf_non_increasing").unwrap().values,
            vec![3.0, 2.0, 2.5]
        );
        assert!(!r.flag("kde:rho:h0:linf_non_increasing").unwrap().holds);
        assert!(r.flag("kde:rho:h1:linf_non_increasing").unwrap().holds);
        assert!(r.flag("skde:rho:linf_non_increasing").unwrap().holds);
        assert!(r.flag("skde<=kde:rho:median_linf").unwrap().holds);
        assert_eq!(
            r.flag("kde:time_growth_gt3").unwrap().values.last(),
            Some(&4.0)
        );
        assert_eq!(r.to_table().len(), 27);
        assert_eq!(r.timing_table().len(), 27);
        assert_eq!(r.flag_table().len(), 5);
    }
}
