//! Split Venn-Abers predictive systems.
//!
//! A regressor trained on the training sequence proper turns every object
//! into a score `s`. To evaluate the system at a candidate label `y`, labels
//! are binarized as `y*_i = 0` if `y_i <= y` and 1 otherwise, an isotonic
//! regression `g` of `y*` on `s` is fitted, and
//!
//! ```text
//! Q(y, tau) = 1 - (#{cal i : g(s_i) = g(s), y*_i = 1} + tau) / (#{cal i : g(s_i) = g(s)} + 1)
//! ```
//!
//! with `tau` in `{0, 1}`. The test point enters the fit with target `tau`,
//! so `tau = 1` can only raise the estimated chance of exceeding `y`: the
//! `tau = 1` curve is the lower one and reaches 0 on the left, the `tau = 0`
//! curve is the upper one and reaches 1 on the right. The three types differ in the points used for
//! the isotonic fit:
//!
//! * type 1: the calibration points plus the test point `(s, tau)`;
//! * type 2: the training points proper only, with `g(t)` read off the
//!   nearest proper score (ties to the smallest index);
//! * type 3: all points plus `(s, tau)`.

use crate::data::Dataset;
use crate::distribution::StepCdf;
use crate::error::{Error, Result};
use crate::isotonic::{IsotonicFit, pava};
use crate::metrics::crps_step;
use crate::regressors::{FittedRegressor, RegressorSpec};
use crate::scps::Split;
use crate::synth::{Generator, generate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvapsType {
    One,
    Two,
    Three,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvapsConfig {
    pub svaps_type: SvapsType,
    pub regressor: RegressorSpec,
    pub split: Split,
}

/// Scored training data for one split.
#[derive(Debug, Clone)]
pub struct SvapsModel {
    svaps_type: SvapsType,
    regressor: Option<FittedRegressor>,
    proper: Vec<(f64, f64)>,
    calibration: Vec<(f64, f64)>,
    nearest: Option<NearestProper>,
}

/// Distinct proper scores with the smallest index attaining each.
#[derive(Debug, Clone)]
struct NearestProper {
    values: Vec<f64>,
    first_index: Vec<usize>,
}

impl NearestProper {
    fn new(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut values: Vec<f64> = Vec::new();
        let mut first_index = Vec::new();
        for i in order {
            if values.last() != Some(&scores[i]) {
                values.push(scores[i]);
                first_index.push(i);
            }
        }
        NearestProper { values, first_index }
    }

    /// The proper score nearest to `t`.
    fn nearest(&self, t: f64) -> f64 {
        let k = self.values.partition_point(|&v| v < t);
        if k == 0 {
            return self.values[0];
        }
        if k == self.values.len() {
            return self.values[k - 1];
        }
        let (lo, hi) = (self.values[k - 1], self.values[k]);
        let (dl, dh) = (t - lo, hi - t);
        if dl < dh || (dl == dh && self.first_index[k - 1] < self.first_index[k]) {
            lo
        } else {
            hi
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau == 0.0 || tau == 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau must be 0 or 1, got {tau}")))
    }
}

impl SvapsModel {
    /// Builds the system from precomputed `(score, label)` pairs.
    pub fn from_scores(
        svaps_type: SvapsType,
        proper: Vec<(f64, f64)>,
        calibration: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if calibration.is_empty() {
            return Err(Error::NoCalibration);
        }
        if svaps_type == SvapsType::Two && proper.is_empty() {
            return Err(Error::invalid("type 2 needs a nonempty training sequence proper"));
        }
        if proper.iter().chain(&calibration).any(|(s, y)| !s.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite("scores or labels"));
        }
        let nearest = (svaps_type == SvapsType::Two)
            .then(|| NearestProper::new(&proper.iter().map(|p| p.0).collect::<Vec<_>>()));
        Ok(SvapsModel {
            svaps_type,
            regressor: None,
            proper,
            calibration,
            nearest,
        })
    }

    pub fn svaps_type(&self) -> SvapsType {
        self.svaps_type
    }

    pub fn calibration_size(&self) -> usize {
        self.calibration.len()
    }

    fn binarize(y_i: f64, y: f64) -> f64 {
        if y_i <= y { 0.0 } else { 1.0 }
    }

    fn fit(&self, s: f64, y: f64, tau: f64) -> Result<IsotonicFit> {
        let bin = |&(si, yi): &(f64, f64)| (si, Self::binarize(yi, y), 1.0);
        let mut pts: Vec<(f64, f64, f64)> = match self.svaps_type {
            SvapsType::One => self.calibration.iter().map(bin).collect(),
            SvapsType::Two => self.proper.iter().map(bin).collect(),
            SvapsType::Three => self.proper.iter().chain(&self.calibration).map(bin).collect(),
        };
        if self.svaps_type != SvapsType::Two {
            pts.push((s, tau, 1.0));
        }
        pava(&pts)
    }

    /// Output for a test object with score `s`.
    pub fn q_at_score(&self, s: f64, y: f64, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        if !s.is_finite() || y.is_nan() {
            return Err(Error::NonFinite("score or label"));
        }
        let g = self.fit(s, y, tau)?;
        let key = |t: f64| match &self.nearest {
            Some(nn) => g.block(nn.nearest(t)),
            None => g.block(t),
        };
        let target = key(s);
        let (mut same, mut above) = (0usize, 0usize);
        for &(si, yi) in &self.calibration {
            if key(si) == target {
                same += 1;
                if yi > y {
                    above += 1;
                }
            }
        }
        Ok(1.0 - (above as f64 + tau) / (same as f64 + 1.0))
    }

    /// Output for a test object, scored by the fitted regressor.
    pub fn q(&self, x: &[f64], y: f64, tau: f64) -> Result<f64> {
        let r = self
            .regressor
            .as_ref()
            .ok_or_else(|| Error::invalid("model was built from scores; use q_at_score"))?;
        self.q_at_score(r.predict(x)?, y, tau)
    }

    /// Lower (`tau = 1`) and upper (`tau = 0`) curves over a sorted grid.
    pub fn band(&self, x: &[f64], y_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if y_grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::invalid("label grid must be sorted"));
        }
        let lower = y_grid.iter().map(|&y| self.q(x, y, 1.0)).collect::<Result<_>>()?;
        let upper = y_grid.iter().map(|&y| self.q(x, y, 0.0)).collect::<Result<_>>()?;
        Ok((lower, upper))
    }
}

/// Trains the regressor on the training sequence proper and scores every
/// training object.
pub fn fit_svaps(config: &SvapsConfig, train: &Dataset) -> Result<SvapsModel> {
    let m = config.split.proper_size(train.len())?;
    let (proper, calibration) = train.split_at(m)?;
    let r = config.regressor.fit(&proper)?;
    let score = |d: &Dataset| d.iter().map(|o| Ok((r.predict(o.x())?, o.y()))).collect::<Result<Vec<_>>>();
    let mut model = SvapsModel::from_scores(config.svaps_type, score(&proper)?, score(&calibration)?)?;
    model.regressor = Some(r);
    Ok(model)
}

pub fn svaps_q(config: &SvapsConfig, train: &Dataset, x: &[f64], y: f64, tau: f64) -> Result<f64> {
    fit_svaps(config, train)?.q(x, y, tau)
}

pub fn svaps_band(config: &SvapsConfig, train: &Dataset, x: &[f64], y_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    fit_svaps(config, train)?.band(x, y_grid)
}

/// Masses on the labels `-1`, `0` and `1` for the test objects `x = 0` and
/// `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1Weights {
    pub x0: [f64; 3],
    pub x1: [f64; 3],
}

/// Runs a system of the given type on the two-class example with the
/// regressor that outputs `a0` for `x = 0` and `a1` for `x = 1`.
///
/// `n_calibration` observations form the calibration sequence and as many
/// again the training sequence proper. The masses are read off the lower
/// curve (`tau = 0`): the mass at `-1` is `Q(-1)`, at `0` it is
/// `Q(0) - Q(-1)` and the rest sits at `1`.
pub fn example1_asymptotics(
    svaps_type: SvapsType,
    n_calibration: usize,
    a0: f64,
    a1: f64,
    seed: u64,
) -> Result<Example1Weights> {
    if n_calibration < 100 {
        return Err(Error::invalid("example needs at least 100 calibration observations"));
    }
    let data = generate(Generator::Example1, 2 * n_calibration, 0.0, seed)?;
    let scored: Vec<(f64, f64)> = data
        .iter()
        .map(|o| (if o.x()[0] == 0.0 { a0 } else { a1 }, o.y()))
        .collect();
    let (proper, calibration) = scored.split_at(n_calibration);
    let model = SvapsModel::from_scores(svaps_type, proper.to_vec(), calibration.to_vec())?;
    let weights = |s: f64| -> Result<[f64; 3]> {
        let below = model.q_at_score(s, -1.0, 0.0)?;
        let at_zero = model.q_at_score(s, 0.0, 0.0)?;
        Ok([below, at_zero - below, 1.0 - at_zero])
    };
    Ok(Example1Weights {
        x0: weights(a0)?,
        x1: weights(a1)?,
    })
}

/// Expected CRPS of the predictions `w.x0`, `w.x1` under the true law of
/// the two-class example.
pub fn example1_expected_crps(w: &Example1Weights) -> Result<f64> {
    let cdf = |m: [f64; 3]| StepCdf::from_atoms(&[(-1.0, m[0]), (0.0, m[1]), (1.0, m[2])]);
    let (f0, f1) = (cdf(w.x0)?, cdf(w.x1)?);
    Ok(0.5 * crps_step(&f0, 0.0)? + 0.25 * crps_step(&f1, -1.0)? + 0.25 * crps_step(&f1, 1.0)?)
}
