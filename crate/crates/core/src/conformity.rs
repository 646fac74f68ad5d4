//! Split conformity measures and their inverses.
//!
//! A conformity measure scores how large a candidate label is relative to
//! a training sequence proper. Split conformal systems need the inverse map
//! too: given a calibration score `alpha_i` and a test object `x`, the label
//! `C_i` at which the test object would get the same score.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::regressors::{FittedRegressor, RegressorSpec};

/// Scoring interface shared by trained measures, idealized measures and
/// test fixtures.
pub trait ConformityMeasure {
    fn score(&self, x: &[f64], y: f64) -> Result<f64>;

    /// Smallest label `y` with `score(x, y) >= target`.
    fn invert(&self, x: &[f64], target: f64) -> Result<f64> {
        let _ = (x, target);
        Err(Error::ScoreNotAttainable("measure has no inverse".into()))
    }

    /// [`invert`](Self::invert) for many targets at the same object.
    fn invert_all(&self, x: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
        targets.iter().map(|&t| self.invert(x, t)).collect()
    }

    fn score_obs(&self, obs: &Observation) -> Result<f64> {
        self.score(obs.x(), obs.y())
    }
}

impl<M: ConformityMeasure + ?Sized> ConformityMeasure for &M {
    fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        (**self).score(x, y)
    }
    fn invert(&self, x: &[f64], target: f64) -> Result<f64> {
        (**self).invert(x, target)
    }
    fn invert_all(&self, x: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
        (**self).invert_all(x, targets)
    }
}

/// The smoothing distribution function used by the Nadaraya-Watson measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// `1{u >= 0}`; weakly isotonic and in general not balanced.
    Heaviside,
    /// `1 / (1 + e^-u)`; strictly increasing with range `(0, 1)`.
    Sigmoid,
}

impl Smoothing {
    fn apply(self, u: f64) -> f64 {
        match self {
            Smoothing::Heaviside => {
                if u >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Smoothing::Sigmoid => 1.0 / (1.0 + (-u).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NwParams {
    pub bandwidth_x: f64,
    pub bandwidth_y: f64,
    pub smoothing: Smoothing,
}

impl NwParams {
    pub fn sigmoid(bandwidth_x: f64, bandwidth_y: f64) -> Self {
        NwParams {
            bandwidth_x,
            bandwidth_y,
            smoothing: Smoothing::Sigmoid,
        }
    }

    pub fn heaviside(bandwidth_x: f64, bandwidth_y: f64) -> Self {
        NwParams {
            bandwidth_x,
            bandwidth_y,
            smoothing: Smoothing::Heaviside,
        }
    }
}

/// Which conformity measure to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformityMeasureSpec {
    /// `y - y_hat`.
    Simple(RegressorSpec),
    /// `(y - y_hat) / sigma_hat`.
    Normalized(RegressorSpec),
    /// Nadaraya-Watson estimate of the conditional distribution function
    /// `F(y | x)` with a Gaussian kernel.
    NadarayaWatson(NwParams),
}

impl ConformityMeasureSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ConformityMeasureSpec::Simple(r) | ConformityMeasureSpec::Normalized(r) => r.validate(),
            ConformityMeasureSpec::NadarayaWatson(p) => {
                let ok = |h: f64| h > 0.0 && h.is_finite();
                if ok(p.bandwidth_x) && ok(p.bandwidth_y) {
                    Ok(())
                } else {
                    Err(Error::invalid("Nadaraya-Watson bandwidths must be positive"))
                }
            }
        }
    }

    pub fn train(&self, proper_train: &Dataset) -> Result<TrainedMeasure> {
        train_measure(self, proper_train)
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Simple(FittedRegressor),
    Normalized(FittedRegressor),
    NadarayaWatson {
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
        params: NwParams,
    },
}

/// A conformity measure fitted to a training sequence proper.
#[derive(Debug, Clone)]
pub struct TrainedMeasure {
    spec: ConformityMeasureSpec,
    inner: Inner,
    proper_training_size: usize,
    feature_dim: usize,
}

pub fn train_measure(spec: &ConformityMeasureSpec, proper_train: &Dataset) -> Result<TrainedMeasure> {
    spec.validate()?;
    if proper_train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let inner = match spec {
        ConformityMeasureSpec::Simple(r) => Inner::Simple(r.fit(proper_train)?),
        ConformityMeasureSpec::Normalized(r) => Inner::Normalized(r.fit(proper_train)?),
        ConformityMeasureSpec::NadarayaWatson(p) => Inner::NadarayaWatson {
            xs: proper_train.iter().map(|o| o.x().to_vec()).collect(),
            ys: proper_train.labels().collect(),
            params: *p,
        },
    };
    Ok(TrainedMeasure {
        spec: spec.clone(),
        inner,
        proper_training_size: proper_train.len(),
        feature_dim: proper_train.feature_dim(),
    })
}

impl TrainedMeasure {
    pub fn spec(&self) -> &ConformityMeasureSpec {
        &self.spec
    }

    pub fn proper_training_size(&self) -> usize {
        self.proper_training_size
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn nw_at(&self, x: &[f64]) -> Option<NwAt<'_>> {
        match &self.inner {
            Inner::NadarayaWatson { xs, ys, params } => Some(NwAt::new(xs, ys, *params, x)),
            _ => None,
        }
    }
}

impl ConformityMeasure for TrainedMeasure {
    fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        self.check(x)?;
        match &self.inner {
            Inner::Simple(f) => Ok(y - f.predict(x)?),
            Inner::Normalized(f) => {
                let (yh, s) = f.predict_with_scale(x)?;
                Ok((y - yh) / s)
            }
            Inner::NadarayaWatson { .. } => Ok(self.nw_at(x).unwrap().cdf(y)),
        }
    }

    fn invert(&self, x: &[f64], target: f64) -> Result<f64> {
        self.invert_all(x, &[target]).map(|v| v[0])
    }

    fn invert_all(&self, x: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        match &self.inner {
            Inner::Simple(f) => {
                let yh = f.predict(x)?;
                Ok(targets.iter().map(|t| yh + t).collect())
            }
            Inner::Normalized(f) => {
                let (yh, s) = f.predict_with_scale(x)?;
                Ok(targets.iter().map(|t| yh + s * t).collect())
            }
            Inner::NadarayaWatson { .. } => {
                let nw = self.nw_at(x).unwrap();
                targets.iter().map(|&t| nw.invert(t)).collect()
            }
        }
    }
}

/// Nadaraya-Watson conditional distribution estimate at one fixed object.
struct NwAt<'a> {
    ys: &'a [f64],
    weights: Vec<f64>,
    total: f64,
    params: NwParams,
}

impl<'a> NwAt<'a> {
    fn new(xs: &[Vec<f64>], ys: &'a [f64], params: NwParams, x: &[f64]) -> Self {
        let h2 = params.bandwidth_x * params.bandwidth_x;
        let log_w: Vec<f64> = xs
            .iter()
            .map(|xi| {
                let d2: f64 = xi.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                -d2 / (2.0 * h2)
            })
            .collect();
        // The ratio is unchanged by a common factor; scaling by the largest
        // weight keeps it away from underflow.
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
        let mut total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            weights = vec![1.0; ys.len()];
            total = ys.len() as f64;
        }
        NwAt {
            ys,
            weights,
            total,
            params,
        }
    }

    fn cdf(&self, y: f64) -> f64 {
        let h = self.params.bandwidth_y;
        let s = self.params.smoothing;
        self.ys
            .iter()
            .zip(&self.weights)
            .map(|(yi, w)| w * s.apply((y - yi) / h))
            .sum::<f64>()
            / self.total
    }

    fn invert(&self, target: f64) -> Result<f64> {
        let unattainable = || {
            Err(Error::ScoreNotAttainable(format!(
                "conditional distribution estimate never reaches {target} at its infimum"
            )))
        };
        if !(target > 0.0 && target <= 1.0) {
            return unattainable();
        }
        match self.params.smoothing {
            Smoothing::Heaviside => {
                let mut labels = self.ys.to_vec();
                labels.sort_by(f64::total_cmp);
                labels.dedup();
                // Step function with steps at the labels: first label that
                // reaches the target, by binary search on the score itself.
                let idx = labels.partition_point(|&y| self.cdf(y) < target);
                match labels.get(idx) {
                    Some(&y) => Ok(y),
                    None => unattainable(),
                }
            }
            Smoothing::Sigmoid => {
                let h = self.params.bandwidth_y;
                let (ymin, ymax) = self
                    .ys
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
                let mut lo = ymin - 10.0 * h;
                let mut hi = ymax + 10.0 * h;
                let mut width = hi - lo;
                let mut tries = 0;
                while self.cdf(lo) >= target {
                    lo -= width;
                    width *= 2.0;
                    tries += 1;
                    if tries > 64 || !lo.is_finite() {
                        return unattainable();
                    }
                }
                width = hi - lo;
                tries = 0;
                while self.cdf(hi) < target {
                    hi += width;
                    width *= 2.0;
                    tries += 1;
                    if tries > 64 || !hi.is_finite() {
                        return unattainable();
                    }
                }
                // Invariant: cdf(lo) < target <= cdf(hi).
                let tol = 1e-10 * h;
                while hi - lo > tol {
                    let mid = lo + 0.5 * (hi - lo);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.cdf(mid) >= target {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(hi)
            }
        }
    }
}

/// True iff the scores at `x` are nondecreasing along the sorted `y_grid`.
pub fn check_isotonic<M: ConformityMeasure + ?Sized>(measure: &M, x: &[f64], y_grid: &[f64]) -> Result<bool> {
    if y_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("label grid must be sorted"));
    }
    let scores = y_grid
        .iter()
        .map(|&y| measure.score(x, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(scores.windows(2).all(|w| w[0] <= w[1]))
}

type ObjectFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A measure `A(x, y) = (y - f(x)) / sigma(x)` with `f` and `sigma` known in
/// advance rather than learned, as in the idealized systems where the
/// regression function is given.
#[derive(Clone)]
pub struct FixedMeasure {
    mean: ObjectFn,
    scale: Option<ObjectFn>,
}

impl FixedMeasure {
    /// `A(x, y) = y - f(x)`.
    pub fn simple(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FixedMeasure {
            mean: Arc::new(f),
            scale: None,
        }
    }

    /// `A(x, y) = (y - f(x)) / sigma(x)`, with `sigma > 0`.
    pub fn normalized(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FixedMeasure {
            mean: Arc::new(f),
            scale: Some(Arc::new(sigma)),
        }
    }

    fn sigma(&self, x: &[f64]) -> Result<f64> {
        let s = self.scale.as_ref().map_or(1.0, |s| s(x));
        if s > 0.0 && s.is_finite() {
            Ok(s)
        } else {
            Err(Error::invalid(format!("scale function returned {s}")))
        }
    }
}

impl fmt::Debug for FixedMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FixedMeasure")
            .field("normalized", &self.scale.is_some())
            .finish()
    }
}

impl ConformityMeasure for FixedMeasure {
    fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok((y - (self.mean)(x)) / self.sigma(x)?)
    }

    fn invert(&self, x: &[f64], target: f64) -> Result<f64> {
        Ok((self.mean)(x) + self.sigma(x)? * target)
    }

    fn invert_all(&self, x: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
        let (m, s) = ((self.mean)(x), self.sigma(x)?);
        Ok(targets.iter().map(|t| m + s * t).collect())
    }
}
