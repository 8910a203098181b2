//! On-disk formats for every artifact the pipeline produces.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::table::{read_csv, write_csv, Table, Value};
use crate::constraints::{Constraint, ConstraintSet};
use crate::continuum::ContinuumField;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

pub const SAMPLES_HEADER: [&str; 2] = ["x", "y"];
pub const GRID_HEADER: [&str; 3] = ["x", "y", "value"];
pub const EDGES_HEADER: [&str; 3] = ["i", "j", "w"];
pub const LABELS_HEADER: [&str; 4] = ["i", "x", "y", "f"];
pub const FIELD_HEADER: [&str; 4] = ["patch", "x", "y", "u"];
pub const CONSTRAINTS_HEADER: [&str; 3] = ["x", "y", "label"];

fn number(row: &[Value], col: usize, what: &str) -> Result<f64> {
    row[col]
        .as_f64()
        .ok_or_else(|| Error::Malformed(format!("{what} is not a number")))
}

fn index(row: &[Value], col: usize, what: &str) -> Result<usize> {
    row[col]
        .as_i64()
        .and_then(|i| usize::try_from(i).ok())
        .ok_or_else(|| Error::Malformed(format!("{what} is not a non-negative integer")))
}

fn read_with(path: &Path, header: &[&str]) -> Result<Table> {
    let t = read_csv(path)?;
    t.expect_header(header)?;
    Ok(t)
}

pub fn write_samples(path: impl AsRef<Path>, points: &[[f64; 2]]) -> Result<()> {
    let mut t = Table::new(SAMPLES_HEADER);
    t.rows = points
        .iter()
        .map(|p| vec![p[0].into(), p[1].into()])
        .collect();
    write_csv(&t, path)
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<[f64; 2]>> {
    let t = read_with(path.as_ref(), &SAMPLES_HEADER)?;
    t.rows
        .iter()
        .map(|r| Ok([number(r, 0, "x")?, number(r, 1, "y")?]))
        .collect()
}

/// Values on a tensor mesh, with `key=value` provenance in a `.meta` sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub meta: Vec<(String, String)>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_grid_field(path: impl AsRef<Path>, field: &GridField) -> Result<()> {
    if field.points.len() != field.values.len() {
        return Err(Error::Shape(format!(
            "{} points for {} values",
            field.points.len(),
            field.values.len()
        )));
    }
    let path = path.as_ref();
    let mut t = Table::new(GRID_HEADER);
    t.rows = field
        .points
        .iter()
        .zip(&field.values)
        .map(|(p, &v)| vec![p[0].into(), p[1].into(), v.into()])
        .collect();
    write_csv(&t, path)?;
    let mut meta = String::new();
    for (k, v) in &field.meta {
        writeln!(meta, "{k}={v}").expect("writing to a String");
    }
    std::fs::write(meta_path(path), meta)?;
    Ok(())
}

/// Reads a grid dump; a missing sidecar yields empty metadata.
pub fn read_grid_field(path: impl AsRef<Path>) -> Result<GridField> {
    let path = path.as_ref();
    let t = read_with(path, &GRID_HEADER)?;
    let mut points = Vec::with_capacity(t.len());
    let mut values = Vec::with_capacity(t.len());
    for r in &t.rows {
        points.push([number(r, 0, "x")?, number(r, 1, "y")?]);
        values.push(number(r, 2, "value")?);
    }
    let meta = match std::fs::read_to_string(meta_path(path)) {
        Ok(text) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Malformed(format!("metadata line `{l}`")))
            })
            .collect::<Result<_>>()?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(GridField {
        points,
        values,
        meta,
    })
}

/// Each undirected edge once, `i < j`.
pub fn write_edges(path: impl AsRef<Path>, graph: &WeightedGraph) -> Result<()> {
    let mut t = Table::new(EDGES_HEADER);
    t.rows = graph
        .edges()
        .into_iter()
        .map(|(i, j, w)| vec![i.into(), j.into(), w.into()])
        .collect();
    write_csv(&t, path)
}

pub fn read_edges(path: impl AsRef<Path>) -> Result<Vec<(usize, usize, f64)>> {
    let t = read_with(path.as_ref(), &EDGES_HEADER)?;
    t.rows
        .iter()
        .map(|r| Ok((index(r, 0, "i")?, index(r, 1, "j")?, number(r, 2, "w")?)))
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, points: &[[f64; 2]], f: &[f64]) -> Result<()> {
    if points.len() != f.len() {
        return Err(Error::Shape(format!(
            "{} points for {} labels",
            points.len(),
            f.len()
        )));
    }
    let mut t = Table::new(LABELS_HEADER);
    t.rows = points
        .iter()
        .zip(f)
        .enumerate()
        .map(|(i, (p, &v))| vec![i.into(), p[0].into(), p[1].into(), v.into()])
        .collect();
    write_csv(&t, path)
}

/// Points and labels, ordered by the `i` column.
pub fn read_labels(path: impl AsRef<Path>) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    let t = read_with(path.as_ref(), &LABELS_HEADER)?;
    let mut rows = t
        .rows
        .iter()
        .map(|r| {
            Ok((
                index(r, 0, "i")?,
                [number(r, 1, "x")?, number(r, 2, "y")?],
                number(r, 3, "f")?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(k, r)| r.0 != k) {
        return Err(Error::Malformed("node indices are not 0..n".into()));
    }
    Ok(rows.into_iter().map(|(_, p, f)| (p, f)).unzip())
}

pub fn write_continuum_field(path: impl AsRef<Path>, field: &ContinuumField) -> Result<()> {
    let mut t = Table::new(FIELD_HEADER);
    t.rows = field
        .node_rows()
        .into_iter()
        .map(|(pid, x, y, u)| vec![pid.into(), x.into(), y.into(), u.into()])
        .collect();
    write_csv(&t, path)
}

pub fn read_continuum_field(path: impl AsRef<Path>) -> Result<ContinuumField> {
    let t = read_with(path.as_ref(), &FIELD_HEADER)?;
    let rows = t
        .rows
        .iter()
        .map(|r| {
            Ok((
                index(r, 0, "patch")?,
                number(r, 1, "x")?,
                number(r, 2, "y")?,
                number(r, 3, "u")?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    ContinuumField::from_node_rows(&rows)
}

pub fn write_constraints(path: impl AsRef<Path>, constraints: &ConstraintSet) -> Result<()> {
    let mut t = Table::new(CONSTRAINTS_HEADER);
    t.rows = constraints
        .iter()
        .map(|c| vec![c.point[0].into(), c.point[1].into(), c.label.into()])
        .collect();
    write_csv(&t, path)
}

pub fn read_constraints(path: impl AsRef<Path>) -> Result<ConstraintSet> {
    let t = read_with(path.as_ref(), &CONSTRAINTS_HEADER)?;
    let items = t
        .rows
        .iter()
        .map(|r| {
            Ok(Constraint {
                point: [number(r, 0, "x")?, number(r, 1, "y")?],
                label: number(r, 2, "label")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ConstraintSet::new(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuum::build_patches;

    #[test]
    fn grid_field_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.csv");
        let f = GridField {
            points: vec![[0.0, 0.0], [0.5, 1.0]],
            values: vec![1.0 / 3.0, 2.5],
            meta: vec![
                ("estimator".into(), "kde".into()),
                ("h".into(), "0.01".into()),
            ],
        };
        write_grid_field(&path, &f).unwrap();
        assert_eq!(read_grid_field(&path).unwrap(), f);
        std::fs::remove_file(meta_path(&path)).unwrap();
        assert!(read_grid_field(&path).unwrap().meta.is_empty());
    }

    #[test]
    fn labels_and_constraints_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let pts = vec![[0.1, 0.2], [0.3, 0.4], [0.9, 0.0]];
        let f = vec![1.0, -0.5, 1e-17];
        write_labels(dir.path().join("l.csv"), &pts, &f).unwrap();
        assert_eq!(
            read_labels(dir.path().join("l.csv")).unwrap(),
            (pts.clone(), f)
        );
        let cs = ConstraintSet::from_fn(&pts, |x, y| x - y).unwrap();
        write_constraints(dir.path().join("c.csv"), &cs).unwrap();
        assert_eq!(read_constraints(dir.path().join("c.csv")).unwrap(), cs);
    }

    #[test]
    fn continuum_field_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let pts: Vec<[f64; 2]> = (0..16)
            .map(|k| [(k % 4) as f64 / 3.0, (k / 4) as f64 / 3.0])
            .collect();
        let d = build_patches(&ConstraintSet::from_fn(&pts, |x, y| x * y).unwrap(), 6).unwrap();
        let field = ContinuumField::from_fn(&d, |x, y| (x + 2.0 * y).sin());
        let path = dir.path().join("u.csv");
        write_continuum_field(&path, &field).unwrap();
        let back = read_continuum_field(&path).unwrap();
        assert_eq!(back.node_rows(), field.node_rows());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_samples(&path, &[[0.5, 0.5]]).unwrap();
        assert!(matches!(read_edges(&path), Err(Error::Malformed(_))));
        assert_eq!(read_samples(&path).unwrap(), vec![[0.5, 0.5]]);
    }
}
