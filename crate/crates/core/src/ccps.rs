//! Cross-conformal predictive systems.
//!
//! The training sequence is cut into `K` folds. Fold `k` is scored by a
//! measure trained on the other folds, so every observation contributes a
//! calibration score and the denominator becomes `n + 1`:
//!
//! ```text
//! Q(y, tau) = (sum_k #{i in S_k : alpha_ik < alpha^y_k}
//!              + tau sum_k #{i in S_k : alpha_ik = alpha^y_k} + tau) / (n + 1)
//! ```
//!
//! Unlike split systems this is not guaranteed to be calibrated. Doubling
//! the output p-values ([`conservative_p`]) restores a provable, if
//! conservative, guarantee.

use crate::conformity::{ConformityMeasure, ConformityMeasureSpec, TrainedMeasure};
use crate::data::Dataset;
use crate::distribution::StepDistribution;
use crate::error::{Error, Result};
use crate::metrics::PredictiveSystem;
use crate::scps::{check_tau, count_scores};

/// A partition of `0..n` into `K` nonempty contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPartition {
    n: usize,
    folds: Vec<Vec<usize>>,
}

/// Fold `k` (1-based) holds positions `ceil((k-1) n / K) + 1 ..= ceil(k n / K)`
/// (1-based), without shuffling. Indices in the result are 0-based.
pub fn make_folds(n: usize, k: usize) -> Result<FoldPartition> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("fold count {k} outside 2..={n}")));
    }
    let ceil_div = |a: usize, b: usize| a.div_ceil(b);
    let folds = (1..=k)
        .map(|j| (ceil_div((j - 1) * n, k)..ceil_div(j * n, k)).collect())
        .collect();
    Ok(FoldPartition { n, folds })
}

impl FoldPartition {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of folds `K`.
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn fold(&self, k: usize) -> &[usize] {
        &self.folds[k]
    }

    /// Indices outside fold `k`, in increasing order.
    pub fn complement(&self, k: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }
}

/// A trained cross-conformal predictive system.
#[derive(Debug, Clone)]
pub struct CcpsModel<M = TrainedMeasure> {
    partition: FoldPartition,
    measures: Vec<M>,
    fold_scores: Vec<Vec<f64>>,
    sorted_scores: Vec<Vec<f64>>,
}

pub fn fit_ccps(train: &Dataset, k: usize, spec: &ConformityMeasureSpec) -> Result<CcpsModel> {
    let partition = make_folds(train.len(), k)?;
    fit_ccps_with(train, partition, |d| spec.train(d))
}

/// Fits one measure per fold with `trainer`, each on the complement of its
/// fold, and scores the fold with it.
pub fn fit_ccps_with<M, F>(train: &Dataset, partition: FoldPartition, trainer: F) -> Result<CcpsModel<M>>
where
    M: ConformityMeasure,
    F: Fn(&Dataset) -> Result<M>,
{
    if partition.n() != train.len() {
        return Err(Error::invalid(format!(
            "partition covers {} observations but the training sequence has {}",
            partition.n(),
            train.len()
        )));
    }
    let mut measures = Vec::with_capacity(partition.len());
    let mut fold_scores = Vec::with_capacity(partition.len());
    for k in 0..partition.len() {
        let measure = trainer(&train.subset(&partition.complement(k))?)?;
        let scores = partition
            .fold(k)
            .iter()
            .map(|&i| measure.score_obs(train.get(i)))
            .collect::<Result<Vec<_>>>()?;
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("calibration scores"));
        }
        measures.push(measure);
        fold_scores.push(scores);
    }
    let sorted_scores = fold_scores
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();
    Ok(CcpsModel {
        partition,
        measures,
        fold_scores,
        sorted_scores,
    })
}

/// Per-fold `(strictly below, equal)` counts of calibration scores against
/// the test score of that fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldCounts {
    pub below: usize,
    pub equal: usize,
    pub size: usize,
}

impl<M: ConformityMeasure> CcpsModel<M> {
    pub fn partition(&self) -> &FoldPartition {
        &self.partition
    }

    pub fn measures(&self) -> &[M] {
        &self.measures
    }

    /// Scores `alpha_{i,k}` of fold `k`, in fold order.
    pub fn fold_scores(&self, k: usize) -> &[f64] {
        &self.fold_scores[k]
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    pub fn fold_counts(&self, x: &[f64], y: f64) -> Result<Vec<FoldCounts>> {
        self.measures
            .iter()
            .zip(&self.sorted_scores)
            .map(|(m, sorted)| {
                let a = m.score(x, y)?;
                let (below, equal) = count_scores(sorted, a);
                Ok(FoldCounts {
                    below,
                    equal,
                    size: sorted.len(),
                })
            })
            .collect()
    }

    /// The cross-conformal p-value `p^y` by direct counting.
    pub fn q(&self, x: &[f64], y: f64, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let (below, equal) = self
            .fold_counts(x, y)?
            .iter()
            .fold((0, 0), |(b, e), c| (b + c.below, e + c.equal));
        Ok((below as f64 + tau * equal as f64 + tau) / (self.n() + 1) as f64)
    }

    /// Union of the per-fold inverted scores as one step distribution with
    /// denominator `n + 1`.
    pub fn predict(&self, x: &[f64]) -> Result<StepDistribution> {
        let mut jumps = Vec::with_capacity(self.n());
        for (m, scores) in self.measures.iter().zip(&self.fold_scores) {
            jumps.extend(m.invert_all(x, scores).map_err(|e| match e {
                Error::ScoreNotAttainable(why) => Error::ScoreNotAttainable(format!(
                    "{why}; evaluate the transducer directly (CcpsModel::q)"
                )),
                e => e,
            })?);
        }
        StepDistribution::new(jumps)
    }

    /// The p-value of fold `k` alone (0-based), with denominator `|S_k| + 1`.
    pub fn fold_p_value(&self, k: usize, x: &[f64], y: f64, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        if k >= self.partition.len() {
            return Err(Error::invalid(format!(
                "fold {k} out of range for {} folds",
                self.partition.len()
            )));
        }
        let a = self.measures[k].score(x, y)?;
        let (below, equal) = count_scores(&self.sorted_scores[k], a);
        Ok((below as f64 + tau * equal as f64 + tau) / (self.sorted_scores[k].len() + 1) as f64)
    }

    /// `p^y - [sum_k (|S_k| + 1) / (n + 1) p^y_k - (K - 1) / (n + 1) tau]`,
    /// which vanishes identically.
    pub fn recombine_identity_check(&self, x: &[f64], y: f64, tau: f64) -> Result<f64> {
        let n1 = (self.n() + 1) as f64;
        let p = self.q(x, y, tau)?;
        let mut rhs = 0.0;
        for k in 0..self.partition.len() {
            let weight = (self.partition.fold(k).len() + 1) as f64 / n1;
            rhs += weight * self.fold_p_value(k, x, y, tau)?;
        }
        rhs -= (self.partition.len() - 1) as f64 / n1 * tau;
        Ok(p - rhs)
    }

    /// Crisp value `(1/n) sum_k #{alpha_ik <= alpha^y_k}`.
    pub fn q_crisp(&self, x: &[f64], y: f64) -> Result<f64> {
        let at_or_below: usize = self
            .fold_counts(x, y)?
            .iter()
            .map(|c| c.below + c.equal)
            .sum();
        Ok(at_or_below as f64 / self.n() as f64)
    }

    /// The crisp value written as `sum_k (|S_k| / n) p~_k` with the per-fold
    /// fractions `p~_k = #{alpha_ik <= alpha^y_k} / |S_k|`.
    pub fn q_crisp_by_folds(&self, x: &[f64], y: f64) -> Result<f64> {
        let n = self.n() as f64;
        Ok(self
            .fold_counts(x, y)?
            .iter()
            .map(|c| c.size as f64 / n * ((c.below + c.equal) as f64 / c.size as f64))
            .sum())
    }
}

impl<M: ConformityMeasure> PredictiveSystem for CcpsModel<M> {
    fn q(&self, x: &[f64], y: f64, tau: f64) -> Result<f64> {
        CcpsModel::q(self, x, y, tau)
    }

    fn q_crisp(&self, x: &[f64], y: f64) -> Result<f64> {
        CcpsModel::q_crisp(self, x, y)
    }

    fn predict(&self, x: &[f64]) -> Result<StepDistribution> {
        CcpsModel::predict(self, x)
    }
}

/// `min(2p, 1)`.
pub fn conservative_p(p: f64) -> f64 {
    (2.0 * p).min(1.0)
}
