//! Potential-outcome and causal-Bayes-net models of randomized trials with
//! noncompliance.
//!
//! Deterministic individuals carry four binary potential outcomes; stochastic
//! individuals carry four counterfactual probabilities. The crate computes
//! ITE, ATE, LATE, degree of compliance and DATE from the latent model, the
//! instrumental-variable (Wald) ratio from observational probabilities, and
//! checks exactly that the two agree whenever the compliance assumptions
//! hold. The [`trial`] module simulates trials and estimates the same ratio
//! from finite samples.

pub mod bayesnet;
pub mod effects;
pub mod error;
pub mod identification;
pub mod io;
pub mod numeric;
pub mod population;
pub mod scenarios;
pub mod trial;

pub use error::{Error, Result};
pub use numeric::{Exact, NumericMode, Scalar};
pub use population::{
    AnyPopulation, DeterministicIndividual, Population, PopulationKind, StochasticIndividual,
};
