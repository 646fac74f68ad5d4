//! Scoring and calibration diagnostics.
//!
//! [`crps_step`] integrates `(F(u) - 1{u >= y})^2` exactly for piecewise
//! constant `F`. The Kolmogorov distances compare predictive distributions
//! at different objects: [`kolmogorov`] is the plain sup distance,
//! [`kolmogorov_shift`] minimizes it over shifts and
//! [`kolmogorov_shift_scale`] over shifts and positive rescalings.

use serde::Serialize;

use crate::data::Dataset;
use crate::distribution::{StepCdf, StepDistribution, TauSource};
use crate::error::{Error, Result};

/// Anything that outputs a (fuzzy) predictive distribution function.
pub trait PredictiveSystem {
    /// Value at label `y` for random number `tau`.
    fn q(&self, x: &[f64], y: f64, tau: f64) -> Result<f64>;

    /// Crisp modification at `y`.
    fn q_crisp(&self, x: &[f64], y: f64) -> Result<f64>;

    /// The full distribution at `x`, when it can be computed.
    fn predict(&self, x: &[f64]) -> Result<StepDistribution>;
}

impl<S: PredictiveSystem + ?Sized> PredictiveSystem for &S {
    fn q(&self, x: &[f64], y: f64, tau: f64) -> Result<f64> {
        (**self).q(x, y, tau)
    }

    fn q_crisp(&self, x: &[f64], y: f64) -> Result<f64> {
        (**self).q_crisp(x, y)
    }

    fn predict(&self, x: &[f64]) -> Result<StepDistribution> {
        (**self).predict(x)
    }
}

/// Exact CRPS of a proper piecewise-constant distribution function.
pub fn crps_step(cdf: &StepCdf, y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::NonFinite("observed label"));
    }
    cdf.check_proper()?;
    let points = cdf.points();
    let after = cdf.after();
    // Walk the partition by breakpoints and y. Outside [min, max] the
    // integrand vanishes because the function is proper.
    let mut total = 0.0;
    let mut level = cdf.before();
    let mut prev = f64::NEG_INFINITY;
    let mut y_pending = true;
    let mut j = 0;
    loop {
        let next_point = points.get(j).copied();
        let (t, is_y) = match next_point {
            Some(p) if !(y_pending && y < p) => (p, false),
            _ if y_pending => (y, true),
            _ => break,
        };
        if prev.is_finite() {
            let indicator = if prev >= y { 1.0 } else { 0.0 };
            let d = level - indicator;
            total += d * d * (t - prev);
        }
        prev = t;
        if is_y {
            y_pending = false;
            if next_point == Some(y) {
                continue;
            }
        } else {
            level = after[j];
            j += 1;
        }
    }
    Ok(total)
}

/// CRPS of the crisp modification of a step distribution.
pub fn crps_crisp(dist: &StepDistribution, y: f64) -> Result<f64> {
    crps_step(&dist.crisp_curve()?, y)
}

/// Probability integral transform values `Q(x_i, y_i, tau_i)` for each test
/// observation, drawing one `tau` per observation in order.
pub fn pit_values<S: PredictiveSystem + ?Sized>(
    system: &S,
    test: &Dataset,
    taus: &mut TauSource,
) -> Result<Vec<f64>> {
    test.iter()
        .map(|obs| system.q(obs.x(), obs.y(), taus.next_tau()))
        .collect()
}

/// Points `(alpha, F(alpha))` of the empirical distribution function of PIT
/// values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationCurve {
    pub alphas: Vec<f64>,
    pub empirical_cdf: Vec<f64>,
}

impl CalibrationCurve {
    /// `max |F(alpha) - alpha|` over the grid.
    pub fn max_deviation(&self) -> f64 {
        self.alphas
            .iter()
            .zip(&self.empirical_cdf)
            .map(|(a, f)| (f - a).abs())
            .fold(0.0, f64::max)
    }
}

pub fn calibration_curve(pit: &[f64], alphas: &[f64]) -> Result<CalibrationCurve> {
    if pit.is_empty() {
        return Err(Error::invalid("no PIT values"));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) || alphas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("calibration grid must be sorted inside (0, 1)"));
    }
    let mut sorted = pit.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let empirical_cdf = alphas
        .iter()
        .map(|&a| sorted.partition_point(|&p| p <= a) as f64 / n)
        .collect();
    Ok(CalibrationCurve {
        alphas: alphas.to_vec(),
        empirical_cdf,
    })
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `values` and the uniform distribution on `[0, 1]`.
pub fn ks_distance_uniform(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("no values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let u = u.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - u).max(u - i as f64 / n)
        })
        .fold(0.0, f64::max))
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Result<BoxStats> {
        if values.is_empty() {
            return Err(Error::invalid("no values to summarize"));
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(BoxStats {
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

fn coincidence_eps(f: &StepCdf, g: &StepCdf) -> f64 {
    let m = f
        .points()
        .iter()
        .chain(g.points())
        .fold(0.0f64, |acc, p| acc.max(p.abs()));
    1e-12 * (1.0 + m)
}

/// `sup_u |F((u - shift) / scale) - G(u)|`. Breakpoints closer than `eps`
/// are treated as one, which absorbs the rounding of `p * scale + shift`.
fn sup_distance(f: &StepCdf, shift: f64, scale: f64, g: &StepCdf, eps: f64) -> f64 {
    let fp = f.points();
    let gp = g.points();
    let mut best = (f.before() - g.before()).abs();
    let (mut fv, mut gv) = (f.before(), g.before());
    let (mut i, mut j) = (0, 0);
    while i < fp.len() || j < gp.len() {
        let fpos = fp.get(i).map(|p| p * scale + shift);
        let anchor = match (fpos, gp.get(j)) {
            (Some(a), Some(&b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        let mut f_at = Vec::new();
        let mut g_at = Vec::new();
        while i < fp.len() && fp[i] * scale + shift <= anchor + eps {
            f_at.push(f.at()[i]);
            fv = f.after()[i];
            i += 1;
        }
        while j < gp.len() && gp[j] <= anchor + eps {
            g_at.push(g.at()[j]);
            gv = g.after()[j];
            j += 1;
        }
        if f_at.is_empty() {
            f_at.push(fv);
        }
        if g_at.is_empty() {
            g_at.push(gv);
        }
        for a in &f_at {
            for b in &g_at {
                best = best.max((a - b).abs());
            }
        }
        best = best.max((fv - gv).abs());
    }
    best
}

/// `K(F, G) = sup_u |F(u) - G(u)|`.
pub fn kolmogorov(f: &StepCdf, g: &StepCdf) -> f64 {
    sup_distance(f, 0.0, 1.0, g, coincidence_eps(f, g))
}

fn sorted_dedup(mut v: Vec<f64>, eps: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= eps);
    v
}

/// Exact minimum over shifts for a fixed scale.
fn best_shift(f: &StepCdf, scale: f64, g: &StepCdf, eps: f64) -> f64 {
    let fp = f.points();
    let gp = g.points();
    let mut cands = Vec::with_capacity(fp.len() * gp.len());
    for &a in fp {
        for &b in gp {
            cands.push(b - a * scale);
        }
    }
    let cands = sorted_dedup(cands, eps);
    let mut best = sup_distance(f, 0.0, scale, g, eps);
    let mut try_shift = |c: f64| {
        if best > 0.0 {
            best = best.min(sup_distance(f, c, scale, g, eps));
        }
    };
    if let (Some(&lo), Some(&hi)) = (cands.first(), cands.last()) {
        try_shift(lo - 1.0);
        try_shift(hi + 1.0);
    }
    for w in cands.windows(2) {
        try_shift(0.5 * (w[0] + w[1]));
    }
    for &c in &cands {
        try_shift(c);
    }
    best
}

/// `K'(F, G) = inf_c sup_u |F(u - c) - G(u)|`.
///
/// As a function of `c` the sup distance is constant between consecutive
/// alignments `c = g_j - f_i` of a breakpoint of `F` with one of `G`, so
/// scanning the alignments, the midpoints between them and the two outer
/// rays gives the exact infimum.
pub fn kolmogorov_shift(f: &StepCdf, g: &StepCdf) -> f64 {
    best_shift(f, 1.0, g, coincidence_eps(f, g))
}

/// `K''(F, G) = inf_{c, s > 0} sup_u |F((u - c) / s) - G(u)|`.
///
/// The shift is optimized exactly for every scale tried. Scales come from
/// the ratio of the breakpoint spans, `s = 1`, all ratios of breakpoint
/// differences when both functions have at most 12 breakpoints, and a
/// log-spaced grid around the span ratio refined by golden-section search.
/// The result is therefore an upper bound on the infimum that is exact when
/// the optimal scale is among these candidates.
pub fn kolmogorov_shift_scale(f: &StepCdf, g: &StepCdf) -> f64 {
    let fp = f.points();
    let gp = g.points();
    let base_eps = coincidence_eps(f, g);
    let eval = |s: f64| {
        let m = fp.iter().fold(0.0f64, |acc, p| acc.max(p.abs())) * s;
        let eps = base_eps.max(1e-12 * (1.0 + m));
        best_shift(f, s, g, eps)
    };
    let mut best = eval(1.0);
    if best == 0.0 || fp.len() < 2 || gp.len() < 2 {
        // A single breakpoint on either side: scaling adds nothing that
        // shifting cannot do.
        return best;
    }
    let span_f = fp[fp.len() - 1] - fp[0];
    let span_g = gp[gp.len() - 1] - gp[0];
    let centre = span_g / span_f;
    best = best.min(eval(centre));
    if best == 0.0 {
        return best;
    }
    if fp.len() <= 12 && gp.len() <= 12 {
        let mut ratios = Vec::new();
        for a in 0..fp.len() {
            for b in a + 1..fp.len() {
                for c in 0..gp.len() {
                    for d in c + 1..gp.len() {
                        ratios.push((gp[d] - gp[c]) / (fp[b] - fp[a]));
                    }
                }
            }
        }
        for s in sorted_dedup(ratios, 1e-12) {
            best = best.min(eval(s));
        }
    }
    let ln_c = centre.ln();
    let grid: Vec<f64> = (0..41).map(|k| ln_c - 3.0 + 6.0 * k as f64 / 40.0).collect();
    let values: Vec<f64> = grid.iter().map(|&t| eval(t.exp())).collect();
    let (k_min, v_min) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
    best = best.min(v_min);
    let (mut a, mut b) = (grid[k_min.saturating_sub(1)], grid[(k_min + 1).min(40)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..40 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        let (vc, vd) = (eval(c.exp()), eval(d.exp()));
        best = best.min(vc).min(vd);
        if vc <= vd {
            b = d;
        } else {
            a = c;
        }
    }
    best
}
