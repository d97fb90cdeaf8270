//! The Wald ratio and exact checks that it recovers LATE and DATE.

use serde::Serialize;

use crate::bayesnet::{build_net, closed_form_observables, Observables};
use crate::effects::{date, late};
use crate::error::{Error, Result};
use crate::numeric::{serde_scalar, NumericMode, Scalar};
use crate::population::{
    lift_deterministic, validate_deterministic, validate_stochastic, DeterministicIndividual,
    Population, PopulationKind, StochasticIndividual, ValidationReport,
};

/// `(Pr(Cure=1|Assign=1) - Pr(Cure=1|Assign=0)) / (Pr(Take=1|Assign=1) - Pr(Take=1|Assign=0))`.
pub fn iv_estimand<S: Scalar>(
    cure_given_assign1: &S,
    cure_given_assign0: &S,
    take_given_assign1: &S,
    take_given_assign0: &S,
    weak_tol: &S,
) -> Result<S> {
    let denominator = take_given_assign1.clone() - take_given_assign0.clone();
    if denominator.is_zero() || denominator.abs() <= *weak_tol {
        return Err(Error::WeakInstrument {
            denominator: denominator.to_text(),
        });
    }
    Ok((cure_given_assign1.clone() - cure_given_assign0.clone()) / denominator)
}

pub fn iv_from_observables<S: Scalar>(obs: &Observables<S>, weak_tol: &S) -> Result<S> {
    iv_estimand(
        &obs.cure_given_assign1,
        &obs.cure_given_assign0,
        &obs.take_given_assign1,
        &obs.take_given_assign0,
        weak_tol,
    )
}

/// Latent estimand against the observational IV ratio.
///
/// `estimand_lhs` is LATE (deterministic) or DATE (stochastic). Either side is
/// `None` when undefined: no compliers for the left, a vanishing take-rate
/// difference for the right.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct IdentificationReport<S: Scalar> {
    #[serde(with = "serde_scalar::option")]
    pub estimand_lhs: Option<S>,
    #[serde(with = "serde_scalar::option")]
    pub estimand_rhs: Option<S>,
    #[serde(with = "serde_scalar::option")]
    pub abs_gap: Option<S>,
    pub assumptions: ValidationReport,
    pub mode: PopulationKind,
    pub numeric_mode: NumericMode,
    pub observables: Observables<S>,
}

impl<S: Scalar> IdentificationReport<S> {
    /// The theorem's premises hold, so the gap must vanish.
    pub fn applicable(&self) -> bool {
        self.assumptions.holds()
    }

    /// Premises hold and the gap is within `tol`.
    pub fn identified_within(&self, tol: &S) -> bool {
        self.applicable() && self.abs_gap.as_ref().is_some_and(|g| *g <= *tol)
    }

    /// Same outcome ignoring the model-kind tag.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.estimand_lhs == other.estimand_lhs
            && self.estimand_rhs == other.estimand_rhs
            && self.abs_gap == other.abs_gap
            && self.assumptions == other.assumptions
            && self.observables == other.observables
    }
}

fn assemble<S: Scalar>(
    lhs: Option<S>,
    observables: Observables<S>,
    assumptions: ValidationReport,
    mode: PopulationKind,
) -> IdentificationReport<S> {
    let rhs = iv_from_observables(&observables, &S::default_weak_tol()).ok();
    let abs_gap = match (&lhs, &rhs) {
        (Some(l), Some(r)) => Some((l.clone() - r.clone()).abs()),
        _ => None,
    };
    IdentificationReport {
        estimand_lhs: lhs,
        estimand_rhs: rhs,
        abs_gap,
        assumptions,
        mode,
        numeric_mode: S::MODE,
        observables,
    }
}

/// LATE against the IV ratio of the lifted population's causal Bayes net.
pub fn verify_theorem1<S: Scalar>(
    pop: &Population<DeterministicIndividual>,
    assign_prob: S,
) -> Result<IdentificationReport<S>> {
    let assumptions = validate_deterministic(pop);
    let lhs = late::<S>(pop).ok().map(|r| r.value);
    let net = build_net(&lift_deterministic::<S>(pop), assign_prob)?;
    Ok(assemble(
        lhs,
        closed_form_observables(&net),
        assumptions,
        PopulationKind::Deterministic,
    ))
}

/// DATE against the IV ratio of the population's causal Bayes net.
pub fn verify_theorem2<S: Scalar>(
    pop: &Population<StochasticIndividual<S>>,
    assign_prob: S,
    tol: &S,
) -> Result<IdentificationReport<S>> {
    let assumptions = validate_stochastic(pop, tol);
    let lhs = date(pop, tol).ok().map(|r| r.value);
    let net = build_net(pop, assign_prob)?;
    Ok(assemble(
        lhs,
        closed_form_observables(&net),
        assumptions,
        PopulationKind::Stochastic,
    ))
}

/// Class shares recovered from the two take rates, assuming no defiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(bound = "")]
pub struct SubpopulationProportions<S: Scalar> {
    #[serde(with = "serde_scalar")]
    pub p_never: S,
    #[serde(with = "serde_scalar")]
    pub p_always: S,
    #[serde(with = "serde_scalar")]
    pub p_complier: S,
}

/// Never-takers are the treatment-group non-takers, always-takers the
/// control-group takers, compliers the rest.
pub fn subpopulation_proportions_from_observables<S: Scalar>(
    take_given_assign1: &S,
    take_given_assign0: &S,
) -> Result<SubpopulationProportions<S>> {
    let p_never = S::one() - take_given_assign1.clone();
    let p_always = take_given_assign0.clone();
    let p_complier = S::one() - p_never.clone() - p_always.clone();
    if p_complier < S::zero() {
        return Err(Error::NegativeProportion {
            value: p_complier.to_text(),
        });
    }
    Ok(SubpopulationProportions {
        p_never,
        p_always,
        p_complier,
    })
}
