//! Step-shaped predictive distributions.
//!
//! Split and cross-conformal systems output a distribution described by a
//! sorted list of jump points `C_(1) <= ... <= C_(N)` and a denominator
//! `D = N + 1`. For a random number `tau` in `[0, 1]` its value at `y` is
//!
//! ```text
//! (i + tau) / D                          if C_(i) < y < C_(i+1)
//! (i' - 1 + (i'' - i' + 2) tau) / D      if y = C_(i)
//! ```
//!
//! where `i'` and `i''` are the first and last positions of the value
//! `C_(i)` among the jumps. Sentinels `C_(0) = -inf`, `C_(N+1) = +inf` are
//! implicit: they are never stored.
//!
//! Both cases collapse to `(lo + (hi - lo + 1) tau) / D` with `lo` the number
//! of jumps strictly below `y` and `hi` the number of jumps at or below it,
//! which is what [`StepDistribution::eval_fuzzy`] computes by two binary
//! searches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fuzzy step distribution with `N` jumps and denominator `N + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    jumps: Vec<f64>,
}

impl StepDistribution {
    /// Sorts the jump points; repeated values are kept as separate jumps.
    pub fn new(mut jumps: Vec<f64>) -> Result<Self> {
        if jumps.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("jump points"));
        }
        jumps.sort_by(f64::total_cmp);
        Ok(StepDistribution { jumps })
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    /// Number of jump points `N`.
    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    /// `D = N + 1`.
    pub fn denominator(&self) -> usize {
        self.jumps.len() + 1
    }

    /// `(#{C < y}, #{C <= y})`.
    fn counts(&self, y: f64) -> (usize, usize) {
        let lo = self.jumps.partition_point(|&c| c < y);
        let hi = lo + self.jumps[lo..].partition_point(|&c| c <= y);
        (lo, hi)
    }

    /// Value of the predictive distribution at `y` for the random number `tau`.
    pub fn eval_fuzzy(&self, y: f64, tau: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&tau), "tau outside [0, 1]");
        let (lo, hi) = self.counts(y);
        (lo as f64 + (hi - lo + 1) as f64 * tau) / self.denominator() as f64
    }

    /// The crisp modification `i / N`, where `i` counts jumps at or below `y`.
    pub fn eval_crisp(&self, y: f64) -> Result<f64> {
        if self.jumps.is_empty() {
            return Err(Error::NoCalibration);
        }
        let (_, hi) = self.counts(y);
        Ok(hi as f64 / self.jumps.len() as f64)
    }

    /// Infimum of `{y : eval_fuzzy(y, tau) >= level}`; `-inf` when the left
    /// tail already reaches `level`, `+inf` when no `y` does.
    pub fn quantile(&self, level: f64, tau: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid(format!("quantile level {level} outside (0, 1)")));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid(format!("tau {tau} outside [0, 1]")));
        }
        let d = self.denominator() as f64;
        let reaches = |k: usize| (k as f64 + tau) / d >= level;
        // Smallest k with (k + tau) / D >= level, starting from the
        // real-valued estimate and correcting for rounding.
        let mut k = (level * d - tau).ceil().max(0.0) as usize;
        while k > 0 && reaches(k - 1) {
            k -= 1;
        }
        while k <= self.jumps.len() && !reaches(k) {
            k += 1;
        }
        Ok(match k {
            0 => f64::NEG_INFINITY,
            k if k > self.jumps.len() => f64::INFINITY,
            k => self.jumps[k - 1],
        })
    }

    /// The fuzzy distribution at a fixed `tau` as an explicit step function.
    pub fn fuzzy_curve(&self, tau: f64) -> StepCdf {
        let d = self.denominator() as f64;
        let mut points = Vec::new();
        let mut at = Vec::new();
        let mut after = Vec::new();
        let mut lo = 0;
        while lo < self.jumps.len() {
            let c = self.jumps[lo];
            let hi = lo + self.jumps[lo..].partition_point(|&v| v <= c);
            points.push(c);
            at.push((lo as f64 + (hi - lo + 1) as f64 * tau) / d);
            after.push((hi as f64 + tau) / d);
            lo = hi;
        }
        StepCdf {
            before: tau / d,
            points,
            at,
            after,
        }
    }

    /// The crisp modification as an explicit, right-continuous step function.
    pub fn crisp_curve(&self) -> Result<StepCdf> {
        if self.jumps.is_empty() {
            return Err(Error::NoCalibration);
        }
        let n = self.jumps.len() as f64;
        let mut points = Vec::new();
        let mut values = Vec::new();
        let mut lo = 0;
        while lo < self.jumps.len() {
            let c = self.jumps[lo];
            let hi = lo + self.jumps[lo..].partition_point(|&v| v <= c);
            points.push(c);
            values.push(hi as f64 / n);
            lo = hi;
        }
        StepCdf::right_continuous(points, values)
    }
}

/// A piecewise-constant function with finitely many breakpoints.
///
/// `before` holds on `(-inf, p_0)`, `at[j]` is the value exactly at `p_j`
/// and `after[j]` holds on `(p_j, p_{j+1})`. Right-continuous distribution
/// functions have `at == after`; fuzzy conformal curves generally do not.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    before: f64,
    points: Vec<f64>,
    at: Vec<f64>,
    after: Vec<f64>,
}

impl StepCdf {
    pub fn new(before: f64, points: Vec<f64>, at: Vec<f64>, after: Vec<f64>) -> Result<Self> {
        if points.len() != at.len() || points.len() != after.len() {
            return Err(Error::invalid("breakpoint and value lengths differ"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        let all = points.iter().chain(&at).chain(&after).chain(std::iter::once(&before));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("step function"));
        }
        Ok(StepCdf {
            before,
            points,
            at,
            after,
        })
    }

    /// Right-continuous function that is 0 before the first breakpoint and
    /// `values[j]` on `[p_j, p_{j+1})`.
    pub fn right_continuous(points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        StepCdf::new(0.0, points, values.clone(), values)
    }

    /// Distribution function of a finite discrete law given as
    /// `(location, mass)` atoms. Atoms at the same location are merged.
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        let mut atoms = atoms.to_vec();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut acc = 0.0;
        for (loc, mass) in atoms {
            if mass < 0.0 {
                return Err(Error::invalid("negative atom mass"));
            }
            acc += mass;
            if points.last() == Some(&loc) {
                *values.last_mut().unwrap() = acc;
            } else {
                points.push(loc);
                values.push(acc);
            }
        }
        StepCdf::right_continuous(points, values)
    }

    pub fn before(&self) -> f64 {
        self.before
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn at(&self) -> &[f64] {
        &self.at
    }

    pub fn after(&self) -> &[f64] {
        &self.after
    }

    /// Value at the far right.
    pub fn last(&self) -> f64 {
        self.after.last().copied().unwrap_or(self.before)
    }

    pub fn value(&self, u: f64) -> f64 {
        let idx = self.points.partition_point(|&p| p < u);
        if idx < self.points.len() && self.points[idx] == u {
            self.at[idx]
        } else if idx == 0 {
            self.before
        } else {
            self.after[idx - 1]
        }
    }

    /// `u -> F((u - shift) / scale)`.
    pub fn shift_scale(&self, shift: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !shift.is_finite() || !scale.is_finite() {
            return Err(Error::invalid("scale must be positive and shift finite"));
        }
        let points = self.points.iter().map(|p| p * scale + shift).collect::<Vec<_>>();
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("breakpoints collapsed under rescaling"));
        }
        Ok(StepCdf {
            before: self.before,
            points,
            at: self.at.clone(),
            after: self.after.clone(),
        })
    }

    /// Checks that the function starts at 0 and ends at 1 (to within
    /// `1e-12`), i.e. that it is the distribution function of a probability
    /// measure.
    pub fn check_proper(&self) -> Result<()> {
        const TOL: f64 = 1e-12;
        if self.before.abs() > TOL {
            return Err(Error::ImproperDistribution(format!(
                "left tail is {} instead of 0",
                self.before
            )));
        }
        if (self.last() - 1.0).abs() > TOL {
            return Err(Error::ImproperDistribution(format!(
                "right tail is {} instead of 1",
                self.last()
            )));
        }
        Ok(())
    }
}

/// Seeded stream of `tau ~ U[0, 1]` draws, one per test object.
#[derive(Debug, Clone)]
pub struct TauSource {
    rng: ChaCha8Rng,
}

impl TauSource {
    pub fn new(seed: u64) -> Self {
        TauSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_tau(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl Iterator for TauSource {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_tau())
    }
}
