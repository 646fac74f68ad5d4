//! Conformal predictive distributions for regression.
//!
//! * [`scps`]: split conformal predictive systems.
//! * [`ccps`]: cross-conformal predictive systems.
//! * [`svaps`]: split Venn-Abers predictive systems, on top of [`isotonic`].
//! * [`metrics`]: exact CRPS, PIT calibration curves, Kolmogorov distances.
//! * [`harness`]: the experiment protocol behind the `confdist` binary.
//!
//! Conformity measures live in [`conformity`] and the regressors they wrap
//! in [`regressors`]. The guide under `book/` walks through each part.

pub mod ccps;
pub mod conformity;
pub mod data;
pub mod distribution;
pub mod error;
pub mod harness;
pub mod isotonic;
pub mod metrics;
pub mod regressors;
pub mod scps;
pub mod svaps;
pub mod synth;

pub use data::{Dataset, Observation};
pub use distribution::{StepCdf, StepDistribution, TauSource};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/step-distributions.md")]
    mod step_distributions {}
    #[doc = include_str!("../../../book/src/conformity.md")]
    mod conformity {}
    #[doc = include_str!("../../../book/src/split.md")]
    mod split {}
    #[doc = include_str!("../../../book/src/cross.md")]
    mod cross {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/venn-abers.md")]
    mod venn_abers {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
