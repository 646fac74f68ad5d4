//! Split conformal predictive systems.
//!
//! The training sequence is split into a training sequence proper
//! `z_1..z_m`, used to train the conformity measure, and a calibration
//! sequence `z_{m+1}..z_n` whose scores calibrate the output:
//!
//! ```text
//! Q(y, tau) = (#{alpha_i < alpha^y} + tau #{alpha_i = alpha^y} + tau) / (n - m + 1)
//! ```
//!
//! [`ScpsModel::q`] evaluates this count directly. For invertible measures
//! [`ScpsModel::predict`] returns the same function as a
//! [`StepDistribution`] whose jumps are the labels `C_i` with
//! `A(x, C_i) = alpha_i`.

use crate::conformity::{ConformityMeasure, ConformityMeasureSpec, TrainedMeasure};
use crate::data::Dataset;
use crate::distribution::StepDistribution;
use crate::error::{Error, Result};
use crate::metrics::PredictiveSystem;

/// How to choose the size `m` of the training sequence proper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Split {
    /// `m = floor(fraction * n)`.
    Fraction(f64),
    /// `m` given explicitly.
    Index(usize),
}

impl Split {
    pub fn proper_size(self, n: usize) -> Result<usize> {
        let m = match self {
            Split::Fraction(a) => {
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::invalid(format!("split fraction {a} outside (0, 1)")));
                }
                (a * n as f64).floor() as usize
            }
            Split::Index(m) => m,
        };
        if m == 0 || m + 1 > n {
            return Err(Error::invalid(format!(
                "training sequence proper of size {m} leaves no valid split of {n} observations"
            )));
        }
        Ok(m)
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau {tau} outside [0, 1]")))
    }
}

/// `(#{s < a}, #{s = a})` in a sorted score list.
pub(crate) fn count_scores(sorted: &[f64], a: f64) -> (usize, usize) {
    let lt = sorted.partition_point(|&s| s < a);
    let le = lt + sorted[lt..].partition_point(|&s| s <= a);
    (lt, le - lt)
}

fn sorted_copy(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// A trained split conformal predictive system.
#[derive(Debug, Clone)]
pub struct ScpsModel<M = TrainedMeasure> {
    measure: M,
    calibration_scores: Vec<f64>,
    sorted_scores: Vec<f64>,
    label_range: (f64, f64),
}

/// Trains the measure on the first `m` observations and scores the rest.
pub fn fit_scps(train: &Dataset, split: Split, spec: &ConformityMeasureSpec) -> Result<ScpsModel> {
    let m = split.proper_size(train.len())?;
    let (proper, calibration) = train.split_at(m)?;
    let measure = spec.train(&proper)?;
    ScpsModel::from_measure(measure, &calibration)
}

/// The idealized system that uses a known measure and the whole training
/// sequence for calibration (denominator `n + 1`).
pub fn ideal<M: ConformityMeasure>(measure: M, training: &Dataset) -> Result<ScpsModel<M>> {
    ScpsModel::from_measure(measure, training)
}

/// Values of the transducer on a label grid, for measures without an inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEvaluation {
    pub ys: Vec<f64>,
    /// `tau = 0`.
    pub lower: Vec<f64>,
    /// `tau = 1`.
    pub upper: Vec<f64>,
    pub crisp: Vec<f64>,
}

impl<M: ConformityMeasure> ScpsModel<M> {
    /// Calibrates an already trained measure on `calibration`.
    pub fn from_measure(measure: M, calibration: &Dataset) -> Result<Self> {
        let calibration_scores = calibration
            .iter()
            .map(|o| measure.score_obs(o))
            .collect::<Result<Vec<_>>>()?;
        if calibration_scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("calibration scores"));
        }
        let label_range = calibration
            .labels()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        Ok(ScpsModel {
            measure,
            sorted_scores: sorted_copy(&calibration_scores),
            calibration_scores,
            label_range,
        })
    }

    pub fn measure(&self) -> &M {
        &self.measure
    }

    /// Calibration scores in calibration-sequence order.
    pub fn calibration_scores(&self) -> &[f64] {
        &self.calibration_scores
    }

    /// `n - m`.
    pub fn calibration_size(&self) -> usize {
        self.calibration_scores.len()
    }

    /// The predictive distribution at `x`, by inverting every calibration
    /// score.
    pub fn predict(&self, x: &[f64]) -> Result<StepDistribution> {
        let jumps = self.measure.invert_all(x, &self.calibration_scores).map_err(|e| match e {
            Error::ScoreNotAttainable(why) => Error::ScoreNotAttainable(format!(
                "{why}; evaluate the transducer directly (ScpsModel::q or ScpsModel::grid)"
            )),
            e => e,
        })?;
        StepDistribution::new(jumps)
    }

    /// The transducer value at `(x, y)` by direct counting.
    pub fn q(&self, x: &[f64], y: f64, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let a = self.measure.score(x, y)?;
        let (lt, eq) = count_scores(&self.sorted_scores, a);
        Ok((lt as f64 + tau * eq as f64 + tau) / (self.calibration_size() + 1) as f64)
    }

    /// Crisp value: the fraction of calibration scores at or below `alpha^y`.
    pub fn q_crisp(&self, x: &[f64], y: f64) -> Result<f64> {
        let a = self.measure.score(x, y)?;
        let (lt, eq) = count_scores(&self.sorted_scores, a);
        Ok((lt + eq) as f64 / self.calibration_size() as f64)
    }

    /// Evaluates the transducer on `points` labels spanning the calibration
    /// label range padded by 10% on each side.
    pub fn grid(&self, x: &[f64], points: usize) -> Result<GridEvaluation> {
        if points < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        let (lo, hi) = self.label_range;
        let pad = if hi > lo { 0.1 * (hi - lo) } else { 1.0 };
        let (lo, hi) = (lo - pad, hi + pad);
        let ys: Vec<f64> = (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect();
        let mut out = GridEvaluation {
            ys: ys.clone(),
            lower: Vec::with_capacity(points),
            upper: Vec::with_capacity(points),
            crisp: Vec::with_capacity(points),
        };
        for y in ys {
            out.lower.push(self.q(x, y, 0.0)?);
            out.upper.push(self.q(x, y, 1.0)?);
            out.crisp.push(self.q_crisp(x, y)?);
        }
        Ok(out)
    }
}

impl<M: ConformityMeasure> PredictiveSystem for ScpsModel<M> {
    fn q(&self, x: &[f64], y: f64, tau: f64) -> Result<f64> {
        ScpsModel::q(self, x, y, tau)
    }

    fn q_crisp(&self, x: &[f64], y: f64) -> Result<f64> {
        ScpsModel::q_crisp(self, x, y)
    }

    fn predict(&self, x: &[f64]) -> Result<StepDistribution> {
        ScpsModel::predict(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformity::FixedMeasure;
    use crate::regressors::RegressorSpec;

    fn data(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::from_rows(xs.iter().map(|&x| vec![x]).collect(), ys.to_vec()).unwrap()
    }

    fn simple() -> ConformityMeasureSpec {
        ConformityMeasureSpec::Simple(RegressorSpec::least_squares())
    }

    #[test]
    fn split_sizes() {
        assert_eq!(Split::Fraction(0.5).proper_size(4).unwrap(), 2);
        assert_eq!(Split::Index(1).proper_size(2).unwrap(), 1);
        assert!(Split::Fraction(0.01).proper_size(50).is_err());
        assert!(Split::Index(2).proper_size(2).is_err());
        assert!(Split::Fraction(1.0).proper_size(10).is_err());
    }

    #[test]
    fn fit_counts_calibration() {
        let d = data(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 2.0, 3.0]);
        let m = fit_scps(&d, Split::Fraction(0.5), &simple()).unwrap();
        assert_eq!(m.calibration_size(), 2);
        let d = data(&[0.0, 1.0], &[0.0, 1.0]);
        assert_eq!(fit_scps(&d, Split::Index(1), &simple()).unwrap().calibration_size(), 1);
    }

    #[test]
    fn calibration_scores_are_residuals_in_order() {
        // Proper training is a perfect fit of y = 1; calibration labels 0 and 2.
        let d = data(&[0.0, 1.0, 5.0, 6.0], &[1.0, 1.0, 0.0, 2.0]);
        let m = fit_scps(&d, Split::Index(2), &simple()).unwrap();
        let s = m.calibration_scores();
        assert!((s[0] + 1.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_shifts_scores() {
        // y_hat(x) = x[0]: calibration at x = 0 gives scores {-1, 1}
        let cal = data(&[0.0, 0.0], &[-1.0, 1.0]);
        let m = ScpsModel::from_measure(FixedMeasure::simple(|x| x[0]), &cal).unwrap();
        assert_eq!(m.calibration_scores(), &[-1.0, 1.0]);
        let dist = m.predict(&[2.0]).unwrap();
        assert_eq!(dist.jumps(), &[1.0, 3.0]);
        assert_eq!(dist.denominator(), 3);
    }

    #[test]
    fn predict_single_and_normalized() {
        let cal = data(&[0.0], &[0.0]);
        let m = ScpsModel::from_measure(FixedMeasure::simple(|x| x[0]), &cal).unwrap();
        let dist = m.predict(&[5.0]).unwrap();
        assert_eq!((dist.jumps(), dist.denominator()), (&[5.0][..], 2));

        // calibration score 1 at sigma 1; test object with sigma 2 and y_hat 0
        let cal = data(&[1.0], &[1.0]);
        let f = FixedMeasure::normalized(|_| 0.0, |x| if x[0] == 1.0 { 1.0 } else { 2.0 });
        let m = ScpsModel::from_measure(f, &cal).unwrap();
        assert_eq!(m.calibration_scores(), &[1.0]);
        assert_eq!(m.predict(&[7.0]).unwrap().jumps(), &[2.0]);
    }

    #[test]
    fn direct_counts() {
        // one calibration score 0
        let cal = data(&[0.0], &[0.0]);
        let m = ScpsModel::from_measure(FixedMeasure::simple(|_| 0.0), &cal).unwrap();
        assert_eq!(m.q(&[0.0], 1.0, 0.0).unwrap(), 0.5);
        assert_eq!(m.q(&[0.0], 1.0, 0.4).unwrap(), 0.7);
        assert_eq!(m.q(&[0.0], -1.0, 0.0).unwrap(), 0.0);
        assert_eq!(m.q(&[0.0], 0.0, 1.0).unwrap(), 1.0);
        assert!(m.q(&[0.0], 0.0, 1.5).is_err());
    }

    #[test]
    fn crisp_counts() {
        let cal = data(&[0.0, 0.0], &[-1.0, 1.0]);
        let m = ScpsModel::from_measure(FixedMeasure::simple(|_| 0.0), &cal).unwrap();
        assert_eq!(m.q_crisp(&[0.0], 0.0).unwrap(), 0.5);
        assert_eq!(m.q_crisp(&[0.0], 10.0).unwrap(), 1.0);
        assert_eq!(m.q_crisp(&[0.0], -10.0).unwrap(), 0.0);
    }

    #[test]
    fn grid_fallback_for_heaviside_nw() {
        use crate::conformity::NwParams;
        let d = data(&[0.0, 0.1, 0.2, 0.0, 0.1], &[0.0, 1.0, 2.0, -5.0, 0.5]);
        let spec = ConformityMeasureSpec::NadarayaWatson(NwParams::heaviside(1.0, 1.0));
        let m = fit_scps(&d, Split::Index(3), &spec).unwrap();
        // the calibration label -5 is below every proper label: score 0, not invertible
        assert!(matches!(m.predict(&[0.0]), Err(Error::ScoreNotAttainable(_))));
        let g = m.grid(&[0.0], 50).unwrap();
        assert_eq!(g.ys.len(), 50);
        assert!(g.lower.windows(2).all(|w| w[0] <= w[1]));
        assert!(g.lower.iter().zip(&g.upper).all(|(a, b)| a <= b));
    }
}
