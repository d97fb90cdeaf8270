//! Causal estimands computed from the latent potential outcomes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{serde_scalar, Scalar};
use crate::population::{
    classify_deterministic, degree_of_compliance, DeterministicIndividual, Population,
    StochasticIndividual, SubpopulationType,
};

/// A ratio-type estimand with its parts kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct EffectReport<S: Scalar> {
    #[serde(with = "serde_scalar")]
    pub value: S,
    #[serde(with = "serde_scalar")]
    pub numerator_detail: S,
    #[serde(with = "serde_scalar")]
    pub denominator_detail: S,
    pub n_contributing: usize,
}

/// `cure_if_take1 - cure_if_take0`.
pub fn ite_deterministic(ind: &DeterministicIndividual) -> i8 {
    i8::from(ind.cure_if_take1) - i8::from(ind.cure_if_take0)
}

/// Mean individual treatment effect.
pub fn ate<S: Scalar>(pop: &Population<DeterministicIndividual>) -> S {
    let total: i64 = pop.iter().map(|i| i64::from(ite_deterministic(i))).sum();
    let mean = S::from_ratio(total, pop.len() as i64);
    debug_assert!(
        (mean.clone() - ate_by_proportions::<S>(pop)).abs() <= S::default_tol(),
        "mean of ITEs disagrees with the difference of cure proportions"
    );
    mean
}

/// Share cured if everybody took the treatment minus share cured if nobody did.
pub fn ate_by_proportions<S: Scalar>(pop: &Population<DeterministicIndividual>) -> S {
    let n = pop.len() as i64;
    let cured1 = pop.iter().filter(|i| i.cure_if_take1).count() as i64;
    let cured0 = pop.iter().filter(|i| i.cure_if_take0).count() as i64;
    S::from_ratio(cured1, n) - S::from_ratio(cured0, n)
}

/// Average ITE over the compliers.
pub fn late<S: Scalar>(pop: &Population<DeterministicIndividual>) -> Result<EffectReport<S>> {
    let (sum, count) = pop
        .iter()
        .filter(|i| classify_deterministic(i) == SubpopulationType::Complier)
        .fold((0i64, 0usize), |(s, k), i| (s + i64::from(ite_deterministic(i)), k + 1));
    if count == 0 {
        return Err(Error::NoCompliers);
    }
    Ok(EffectReport {
        value: S::from_ratio(sum, count as i64),
        numerator_detail: S::from_ratio(sum, 1),
        denominator_detail: S::from_count(count),
        n_contributing: count,
    })
}

/// LATE as a difference of two cure proportions within the complier subpopulation.
pub fn late_via_lemma_a<S: Scalar>(pop: &Population<DeterministicIndividual>) -> Result<S> {
    let compliers: Vec<_> = pop
        .iter()
        .filter(|i| classify_deterministic(i) == SubpopulationType::Complier)
        .collect();
    if compliers.is_empty() {
        return Err(Error::NoCompliers);
    }
    let k = compliers.len() as i64;
    let cured1 = compliers.iter().filter(|i| i.cure_if_take1).count() as i64;
    let cured0 = compliers.iter().filter(|i| i.cure_if_take0).count() as i64;
    Ok(S::from_ratio(cured1, k) - S::from_ratio(cured0, k))
}

/// `c - c_star`.
pub fn ite_stochastic<S: Scalar>(ind: &StochasticIndividual<S>) -> S {
    ind.c().clone() - ind.c_star().clone()
}

/// Per-individual DATE weights: `DC_i / sum of positive DC` for individuals
/// with `DC_i > tol`, exactly zero for everyone else.
pub fn date_weights<S: Scalar>(
    pop: &Population<StochasticIndividual<S>>,
    tol: &S,
) -> Result<Vec<S>> {
    let dcs: Vec<S> = pop.iter().map(degree_of_compliance).collect();
    let total = dcs
        .iter()
        .filter(|dc| *dc > tol)
        .fold(S::zero(), |acc, dc| acc + dc.clone());
    if total <= S::zero() {
        return Err(Error::NoCompliers);
    }
    Ok(dcs
        .into_iter()
        .map(|dc| {
            if dc > *tol {
                dc / total.clone()
            } else {
                S::zero()
            }
        })
        .collect())
}

/// Degree-of-compliance-weighted average treatment effect.
pub fn date<S: Scalar>(
    pop: &Population<StochasticIndividual<S>>,
    tol: &S,
) -> Result<EffectReport<S>> {
    let mut numerator = S::zero();
    let mut denominator = S::zero();
    let mut count = 0;
    for ind in pop {
        let dc = degree_of_compliance(ind);
        if dc > *tol {
            numerator = numerator + dc.clone() * ite_stochastic(ind);
            denominator = denominator + dc;
            count += 1;
        }
    }
    if count == 0 || denominator <= S::zero() {
        return Err(Error::NoCompliers);
    }
    Ok(EffectReport {
        value: numerator.clone() / denominator.clone(),
        numerator_detail: numerator,
        denominator_detail: denominator,
        n_contributing: count,
    })
}
