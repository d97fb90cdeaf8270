//! Test-only oracles and random population builders.
//!
//! The oracles here work straight from the individuals' fields and do not
//! go through `CausalNet`, the closed forms or the effect functions.

#![allow(dead_code)]

use compliance_iv::scenarios::{generate_population, ClassFractions, GeneratorKind, GeneratorSpec};
use compliance_iv::{AnyPopulation, DeterministicIndividual, Population, Scalar, StochasticIndividual};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn det_pop(rows: &[[u8; 4]]) -> Population<DeterministicIndividual> {
    Population::new(
        "fixture",
        rows.iter()
            .map(|b| DeterministicIndividual::from_bits(b[0], b[1], b[2], b[3]))
            .collect(),
    )
    .unwrap()
}

/// complier ITE 1, complier ITE 0, never-taker, always-taker; IV estimand 1/2.
pub fn four_person() -> Population<DeterministicIndividual> {
    det_pop(&[[1, 0, 1, 0], [1, 0, 0, 0], [0, 0, 0, 0], [1, 1, 1, 1]])
}

/// (t=1, t*=0, c=0.8, c*=0.2) and (0.5, 0.5, 0.5, 0.5); IV estimand 3/5.
pub fn two_person<S: Scalar>() -> Population<StochasticIndividual<S>> {
    let p = |n, d| S::from_ratio(n, d);
    Population::new(
        "two-person",
        vec![
            StochasticIndividual::new(p(1, 1), p(0, 1), p(4, 5), p(1, 5)).unwrap(),
            StochasticIndividual::new(p(1, 2), p(1, 2), p(1, 2), p(1, 2)).unwrap(),
        ],
    )
    .unwrap()
}

/// Random deterministic population of size 1..=max_n with at least one
/// complier; defiers only when `allow_defiers`.
pub fn random_det_pop(rng: &mut ChaCha8Rng, max_n: usize, allow_defiers: bool) -> Population<DeterministicIndividual> {
    let n = rng.random_range(1..=max_n);
    let compliers = rng.random_range(1..=n);
    let mut rest = n - compliers;
    let defiers = if allow_defiers { rng.random_range(0..=rest) } else { 0 };
    rest -= defiers;
    let always = rng.random_range(0..=rest);
    let never = rest - always;
    let frac = |k: usize| k as f64 / n as f64;
    let spec = GeneratorSpec::deterministic_mix(
        n,
        ClassFractions {
            complier: frac(compliers),
            defier: frac(defiers),
            always_taker: frac(always),
            never_taker: frac(never),
        },
        rng.random(),
    );
    match generate_population::<f64>(&spec).unwrap() {
        AnyPopulation::Deterministic(p) => p,
        AnyPopulation::Stochastic(_) => unreachable!(),
    }
}

/// Random stochastic population from the named generator.
pub fn random_stoch_pop<S: Scalar>(
    rng: &mut ChaCha8Rng,
    kind: GeneratorKind,
    max_n: usize,
) -> Population<StochasticIndividual<S>> {
    let mut spec = GeneratorSpec::stochastic(kind, rng.random_range(1..=max_n), rng.random());
    spec.grid_denominator = *[10u32, 100, 1000].get(rng.random_range(0..3)).unwrap();
    match generate_population::<S>(&spec).unwrap() {
        AnyPopulation::Stochastic(p) => p,
        AnyPopulation::Deterministic(_) => unreachable!(),
    }
}

/// Observational probabilities of a deterministic population by direct
/// counting: the realized take is the potential take under the assignment,
/// the realized cure the potential cure under the realized take.
pub fn counted_observables<S: Scalar>(pop: &Population<DeterministicIndividual>) -> [S; 4] {
    let n = pop.len() as i64;
    let count = |f: &dyn Fn(&DeterministicIndividual) -> bool| pop.iter().filter(|i| f(i)).count() as i64;
    let cure = |a: bool| count(&|i| i.cure_if_take(i.take_if_assigned(a)));
    let take = |a: bool| count(&|i| i.take_if_assigned(a));
    [
        S::from_ratio(cure(true), n),
        S::from_ratio(cure(false), n),
        S::from_ratio(take(true), n),
        S::from_ratio(take(false), n),
    ]
}

/// Same four probabilities for a stochastic population by brute-force
/// summation of `Pr(U) Pr(A) Pr(T|U,A) Pr(C|U,T)` over every outcome.
pub fn brute_force_observables<S: Scalar>(pop: &Population<StochasticIndividual<S>>, p: &S) -> [S; 4] {
    let inv_n = S::from_ratio(1, pop.len() as i64);
    let bern = |q: &S, x: bool| if x { q.clone() } else { S::one() - q.clone() };
    // [assign][take][cure]
    let mut cells = vec![S::zero(); 8];
    for ind in pop {
        for a in [false, true] {
            let pa = bern(p, a);
            let take_p = if a { ind.t() } else { ind.t_star() };
            for t in [false, true] {
                let cure_p = if t { ind.c() } else { ind.c_star() };
                for c in [false, true] {
                    let idx = (usize::from(a) << 2) | (usize::from(t) << 1) | usize::from(c);
                    cells[idx] = cells[idx].clone()
                        + inv_n.clone() * pa.clone() * bern(take_p, t) * bern(cure_p, c);
                }
            }
        }
    }
    let sum = |pred: &dyn Fn(usize) -> bool| {
        (0..8).filter(|&i| pred(i)).fold(S::zero(), |acc, i| acc + cells[i].clone())
    };
    let arm = |a: usize| sum(&|i| i >> 2 == a);
    let cond = |a: usize, bit: usize| sum(&|i| i >> 2 == a && (i >> bit) & 1 == 1) / arm(a);
    [cond(1, 0), cond(0, 0), cond(1, 1), cond(0, 1)]
}

/// Wald ratio straight from four probabilities, `None` on a zero denominator.
pub fn wald<S: Scalar>(obs: &[S; 4]) -> Option<S> {
    let den = obs[2].clone() - obs[3].clone();
    (!den.is_zero()).then(|| (obs[0].clone() - obs[1].clone()) / den)
}

/// LATE by enumeration of compliers.
pub fn late_oracle<S: Scalar>(pop: &Population<DeterministicIndividual>) -> Option<S> {
    let compliers: Vec<_> = pop
        .iter()
        .filter(|i| i.take_if_assigned1 && !i.take_if_assigned0)
        .collect();
    if compliers.is_empty() {
        return None;
    }
    let total: i64 = compliers
        .iter()
        .map(|i| i64::from(i.cure_if_take1) - i64::from(i.cure_if_take0))
        .sum();
    Some(S::from_ratio(total, compliers.len() as i64))
}

/// `sum (t - t*)(c - c*) / sum (t - t*)` over everybody, valid without defiers.
pub fn date_oracle<S: Scalar>(pop: &Population<StochasticIndividual<S>>) -> Option<S> {
    let mut num = S::zero();
    let mut den = S::zero();
    for i in pop {
        let dc = i.t().clone() - i.t_star().clone();
        num = num + dc.clone() * (i.c().clone() - i.c_star().clone());
        den = den + dc;
    }
    (!den.is_zero()).then(|| num / den)
}
