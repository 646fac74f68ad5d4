//! Synthetic data generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Three standard normal features, `y = 1 + 2 x1 - x2 + 0.5 x3 + noise e`.
    HomoscedasticLinear,
    /// As above with noise scaled by `0.5 + |x1|`.
    HeteroscedasticLinear,
    /// `x` is 0 or 1 with equal probability; `y = 0` when `x = 0` and
    /// `y = -1` or `1` with equal probability when `x = 1`.
    Example1,
}

impl Generator {
    pub const ALL: [Generator; 3] = [
        Generator::HomoscedasticLinear,
        Generator::HeteroscedasticLinear,
        Generator::Example1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::HomoscedasticLinear => "homoscedastic_linear",
            Generator::HeteroscedasticLinear => "heteroscedastic_linear",
            Generator::Example1 => "example1",
        }
    }
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::UnknownGenerator(s.to_string()))
    }
}

/// Draws `n` observations; the noise level is ignored by `Example1`.
pub fn generate(generator: Generator, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise level {noise} must be finite and nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = (0..n)
        .map(|_| match generator {
            Generator::HomoscedasticLinear | Generator::HeteroscedasticLinear => {
                let x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
                let e: f64 = rng.sample(StandardNormal);
                let scale = match generator {
                    Generator::HeteroscedasticLinear => noise * (0.5 + x[0].abs()),
                    _ => noise,
                };
                let y = 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2] + scale * e;
                Observation::new(x, y)
            }
            Generator::Example1 => {
                if rng.random_bool(0.5) {
                    let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    Observation::new(vec![1.0], y)
                } else {
                    Observation::new(vec![0.0], 0.0)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(obs)
}
