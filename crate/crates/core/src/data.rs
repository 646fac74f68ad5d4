//! Observations `(x, y)` and ordered datasets of them.

use crate::error::{Error, Result};

/// A single labelled observation: an object vector and a real label.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    x: Vec<f64>,
    y: f64,
}

impl Observation {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("observation has no features"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("label"));
        }
        Ok(Observation { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn with_label(&self, y: f64) -> Result<Self> {
        Observation::new(self.x.clone(), y)
    }
}

/// An ordered sequence of observations sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let feature_dim = observations
            .first()
            .map(|o| o.x.len())
            .ok_or(Error::EmptyDataset)?;
        if let Some(bad) = observations.iter().find(|o| o.x.len() != feature_dim) {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                got: bad.x.len(),
            });
        }
        Ok(Dataset {
            observations,
            feature_dim,
        })
    }

    /// Builds a dataset from parallel feature rows and labels.
    pub fn from_rows(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                xs.len(),
                ys.len()
            )));
        }
        let obs = xs
            .into_iter()
            .zip(ys)
            .map(|(x, y)| Observation::new(x, y))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(obs)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn get(&self, i: usize) -> &Observation {
        &self.observations[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.y)
    }

    /// Splits into the first `m` observations and the rest. Both halves
    /// must be nonempty.
    pub fn split_at(&self, m: usize) -> Result<(Dataset, Dataset)> {
        if m == 0 || m >= self.len() {
            return Err(Error::invalid(format!(
                "split index {m} outside 1..={}",
                self.len().saturating_sub(1)
            )));
        }
        let (a, b) = self.observations.split_at(m);
        Ok((
            Dataset {
                observations: a.to_vec(),
                feature_dim: self.feature_dim,
            },
            Dataset {
                observations: b.to_vec(),
                feature_dim: self.feature_dim,
            },
        ))
    }

    /// The observations at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            observations: indices.iter().map(|&i| self.observations[i].clone()).collect(),
            feature_dim: self.feature_dim,
        })
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;

    fn into_iter(self) -> Self::IntoIter {
        self.observations.iter()
    }
}
