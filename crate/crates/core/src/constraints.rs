use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint {
    pub point: [f64; 2],
    pub label: f64,
}

/// Labelled points `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    items: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(items: Vec<Constraint>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument(
                "a constraint set needs at least one label".into(),
            ));
        }
        for (i, a) in items.iter().enumerate() {
            if !a.label.is_finite() || !a.point.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "constraint {i} is not finite"
                )));
            }
            for b in &items[i + 1..] {
                if a.point == b.point {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate labelled point ({}, {})",
                        a.point[0], a.point[1]
                    )));
                }
            }
        }
        Ok(Self { items })
    }

    pub fn from_fn(points: &[[f64; 2]], label: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::new(
            points
                .iter()
                .map(|&p| Constraint {
                    point: p,
                    label: label(p[0], p[1]),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Constraint> {
        self.items.iter()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.items.iter().map(|c| c.point).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.items.iter().map(|c| c.label).collect()
    }

    /// `(min, max)` over the labels.
    pub fn label_range(&self) -> (f64, f64) {
        self.items
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                (lo.min(c.label), hi.max(c.label))
            })
    }
}

impl<'a> IntoIterator for &'a ConstraintSet {
    type Item = &'a Constraint;
    type IntoIter = std::slice::Iter<'a, Constraint>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}
