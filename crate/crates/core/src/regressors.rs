//! Underlying point predictors: least squares, ridge regression and
//! k-nearest neighbours, each able to report a scale estimate alongside the
//! point prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    LeastSquares,
    Ridge,
    Knn,
}

/// Which point predictor to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub kind: RegressorKind,
    /// Penalty for [`RegressorKind::Ridge`]; ignored otherwise.
    pub ridge_lambda: f64,
    /// Neighbour count for [`RegressorKind::Knn`]; ignored otherwise.
    pub knn_k: usize,
    /// Fit an unpenalized intercept (linear kinds only).
    pub intercept: bool,
}

impl RegressorSpec {
    pub fn least_squares() -> Self {
        RegressorSpec {
            kind: RegressorKind::LeastSquares,
            ridge_lambda: 0.0,
            knn_k: 1,
            intercept: true,
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        RegressorSpec {
            kind: RegressorKind::Ridge,
            ridge_lambda: lambda,
            ..RegressorSpec::least_squares()
        }
    }

    pub fn knn(k: usize) -> Self {
        RegressorSpec {
            kind: RegressorKind::Knn,
            knn_k: k,
            ..RegressorSpec::least_squares()
        }
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "ridge lambda must be a nonnegative finite number, got {}",
                self.ridge_lambda
            )));
        }
        if self.knn_k == 0 {
            return Err(Error::invalid("knn k must be at least 1"));
        }
        Ok(())
    }

    pub fn fit(&self, train: &Dataset) -> Result<FittedRegressor> {
        fit(self, train)
    }
}

#[derive(Debug, Clone)]
enum Model {
    Linear {
        weights: Vec<f64>,
        intercept: f64,
        sigma: f64,
    },
    Knn {
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
        k: usize,
        floor: f64,
    },
}

/// A trained point predictor. Prediction is a pure function of the stored
/// parameters and the query.
#[derive(Debug, Clone)]
pub struct FittedRegressor {
    spec: RegressorSpec,
    model: Model,
    training_size: usize,
    feature_dim: usize,
}

/// Lower bound for scale estimates: `1e-8` times the training label range,
/// or `1e-8` when all labels coincide.
pub fn scale_floor(labels: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = labels.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
        (lo.min(y), hi.max(y))
    });
    let range = hi - lo;
    1e-8 * if range > 0.0 { range } else { 1.0 }
}

pub fn fit(spec: &RegressorSpec, train: &Dataset) -> Result<FittedRegressor> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = train.len();
    let floor = scale_floor(train.labels());
    let model = match spec.kind {
        RegressorKind::Knn => {
            if spec.knn_k > m {
                return Err(Error::invalid(format!(
                    "knn k = {} exceeds training size {m}",
                    spec.knn_k
                )));
            }
            Model::Knn {
                xs: train.iter().map(|o| o.x().to_vec()).collect(),
                ys: train.labels().collect(),
                k: spec.knn_k,
                floor,
            }
        }
        RegressorKind::LeastSquares => fit_linear(train, 0.0, spec.intercept, floor),
        RegressorKind::Ridge => fit_linear(train, spec.ridge_lambda, spec.intercept, floor),
    };
    Ok(FittedRegressor {
        spec: spec.clone(),
        model,
        training_size: m,
        feature_dim: train.feature_dim(),
    })
}

fn fit_linear(train: &Dataset, lambda: f64, intercept: bool, floor: f64) -> Model {
    let m = train.len();
    let d = train.feature_dim();
    let (x_mean, y_mean) = if intercept {
        let mut xm = vec![0.0; d];
        for o in train {
            for (a, v) in xm.iter_mut().zip(o.x()) {
                *a += v;
            }
        }
        xm.iter_mut().for_each(|a| *a /= m as f64);
        (xm, train.labels().sum::<f64>() / m as f64)
    } else {
        (vec![0.0; d], 0.0)
    };
    let x = DMatrix::from_fn(m, d, |i, j| train.get(i).x()[j] - x_mean[j]);
    let y = DVector::from_iterator(m, train.labels().map(|v| v - y_mean));

    let w = if lambda > 0.0 {
        let mut gram = x.transpose() * &x;
        for j in 0..d {
            gram[(j, j)] += lambda;
        }
        let rhs = x.transpose() * &y;
        // Positive definite for lambda > 0.
        match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => min_norm_solve(gram, &rhs),
        }
    } else {
        min_norm_solve(x.clone(), &y)
    };

    let weights: Vec<f64> = w.iter().copied().collect();
    let b = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    let residual_ms = train
        .iter()
        .map(|o| {
            let r = o.y() - (b + dot(&weights, o.x()));
            r * r
        })
        .sum::<f64>()
        / m as f64;
    Model::Linear {
        weights,
        intercept: b,
        sigma: residual_ms.sqrt().max(floor),
    }
}

/// Minimal-norm least-squares solution of `a w = b` via the SVD, with
/// singular values below the usual rank tolerance treated as zero.
fn min_norm_solve(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (rows, cols) = a.shape();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (smax * rows.max(cols) as f64 * f64::EPSILON).max(f64::MIN_POSITIVE);
    svd.solve(b, eps)
        .expect("svd solve with u and v computed and positive eps")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl FittedRegressor {
    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    pub fn training_size(&self) -> usize {
        self.training_size
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Linear weights and intercept, if this is a linear model.
    pub fn linear_parameters(&self) -> Option<(&[f64], f64)> {
        match &self.model {
            Model::Linear {
                weights, intercept, ..
            } => Some((weights, *intercept)),
            Model::Knn { .. } => None,
        }
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

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.predict_with_scale(x).map(|(y, _)| y)
    }

    /// Point prediction and a strictly positive scale estimate.
    ///
    /// Linear kinds report the in-sample residual root mean square, which
    /// does not depend on `x`. k-NN reports the mean absolute deviation of the
    /// neighbours' labels around their mean. Both are floored by
    /// [`scale_floor`].
    pub fn predict_with_scale(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check(x)?;
        match &self.model {
            Model::Linear {
                weights,
                intercept,
                sigma,
            } => Ok((intercept + dot(weights, x), *sigma)),
            Model::Knn { xs, ys, k, floor } => {
                let mut order: Vec<(f64, usize)> =
                    xs.iter().enumerate().map(|(i, xi)| (sq_dist(xi, x), i)).collect();
                let cmp = |a: &(f64, usize), b: &(f64, usize)| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                };
                if *k < order.len() {
                    order.select_nth_unstable_by(*k - 1, cmp);
                }
                let neighbours = &order[..*k];
                let mean = neighbours.iter().map(|&(_, i)| ys[i]).sum::<f64>() / *k as f64;
                let mad =
                    neighbours.iter().map(|&(_, i)| (ys[i] - mean).abs()).sum::<f64>() / *k as f64;
                Ok((mean, mad.max(*floor)))
            }
        }
    }
}
