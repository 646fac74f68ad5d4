//! Weighted isotonic least squares by pool-adjacent-violators.

use crate::error::{Error, Result};

/// A nondecreasing step function fitted to weighted points.
///
/// Breakpoints are the distinct inputs. Between breakpoints the fit takes
/// the level of the nearest breakpoint to the left, and below the first
/// breakpoint the first level.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    breakpoints: Vec<f64>,
    block_of: Vec<usize>,
    levels: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Block {
    sum: f64,
    weight: f64,
    end: usize,
}

/// Fits `(s, target, weight)` triples. Points sharing an input value are
/// merged into one point carrying their total weight and weighted mean.
pub fn pava(points: &[(f64, f64, f64)]) -> Result<IsotonicFit> {
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if points.iter().any(|(s, t, w)| !s.is_finite() || !t.is_finite() || !w.is_finite()) {
        return Err(Error::NonFinite("isotonic regression input"));
    }
    if points.iter().any(|p| !(p.2 > 0.0)) {
        return Err(Error::invalid("weights must be positive"));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut breakpoints = Vec::new();
    let mut merged: Vec<Block> = Vec::new();
    for (s, t, w) in sorted {
        if breakpoints.last() == Some(&s) {
            let b = merged.last_mut().unwrap();
            b.sum += t * w;
            b.weight += w;
        } else {
            breakpoints.push(s);
            merged.push(Block {
                sum: t * w,
                weight: w,
                end: merged.len() + 1,
            });
        }
    }

    let mut stack: Vec<Block> = Vec::with_capacity(merged.len());
    for b in merged {
        let mut cur = b;
        // Pool while the previous mean is at least the current one,
        // compared without division.
        while let Some(prev) = stack.last() {
            if prev.sum * cur.weight >= cur.sum * prev.weight {
                cur = Block {
                    sum: prev.sum + cur.sum,
                    weight: prev.weight + cur.weight,
                    end: cur.end,
                };
                stack.pop();
            } else {
                break;
            }
        }
        stack.push(cur);
    }

    let mut block_of = Vec::with_capacity(breakpoints.len());
    let mut levels = Vec::with_capacity(stack.len());
    let mut start = 0;
    for (k, b) in stack.iter().enumerate() {
        block_of.extend(std::iter::repeat_n(k, b.end - start));
        levels.push(b.sum / b.weight);
        start = b.end;
    }
    Ok(IsotonicFit {
        breakpoints,
        block_of,
        levels,
    })
}

impl IsotonicFit {
    /// Distinct inputs in increasing order.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Fitted level at each breakpoint.
    pub fn fitted(&self) -> Vec<f64> {
        self.block_of.iter().map(|&k| self.levels[k]).collect()
    }

    /// Levels of the pooled blocks, strictly increasing.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn position(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1)
    }

    /// Index of the pooled block that determines `g(t)`. Two inputs get the
    /// same fitted value exactly when they fall in the same block.
    pub fn block(&self, t: f64) -> usize {
        self.block_of[self.position(t)]
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.levels[self.block(t)]
    }
}
