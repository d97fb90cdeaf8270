//! The four-node causal Bayes net `U -> Take <- Assign`, `U -> Cure <- Take`.
//!
//! `U` ranges over the individuals with `Pr(U = i) = 1/N`, `Assign` is an
//! independent coin with bias `p`, and the two effect variables take their
//! conditional probabilities from the individual's counterfactual
//! probabilities. Cure has no `Assign` parent and `Assign` has no `U` parent,
//! so the exclusion restriction and the confounder independence are
//! properties of the type rather than of the data.
//!
//! Inference is done two ways: by summing the factorized joint over the whole
//! `N x 2 x 2 x 2` outcome space, and through the closed-form sums the
//! factorization reduces to. The first is the reference for the second.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{max_of, serde_scalar, Scalar};
use crate::population::{Population, StochasticIndividual};

/// Any joint distribution over `(U, Assign, Take, Cure)`.
pub trait JointModel<S: Scalar> {
    /// Number of values of `U`.
    fn population_size(&self) -> usize;

    /// `Pr(U = u, Assign = a, Take = t, Cure = c)`.
    fn joint(&self, u: usize, a: bool, t: bool, c: bool) -> S;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalNet<S> {
    assign_prob: S,
    params: Vec<StochasticIndividual<S>>,
}

/// Build the net for a population with `Pr(Assign = 1) = assign_prob`.
pub fn build_net<S: Scalar>(
    pop: &Population<StochasticIndividual<S>>,
    assign_prob: S,
) -> Result<CausalNet<S>> {
    CausalNet::new(pop.individuals().to_vec(), assign_prob)
}

impl<S: Scalar> CausalNet<S> {
    pub fn new(params: Vec<StochasticIndividual<S>>, assign_prob: S) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if !(assign_prob > S::zero() && assign_prob < S::one()) {
            return Err(Error::DegenerateAssignment(assign_prob.to_text()));
        }
        Ok(Self {
            assign_prob,
            params,
        })
    }

    pub fn n(&self) -> usize {
        self.params.len()
    }

    pub fn assign_prob(&self) -> &S {
        &self.assign_prob
    }

    pub fn params(&self) -> &[StochasticIndividual<S>] {
        &self.params
    }

    pub fn prob_u(&self) -> S {
        S::from_ratio(1, self.params.len() as i64)
    }

    pub fn prob_assign(&self, a: bool) -> S {
        if a {
            self.assign_prob.clone()
        } else {
            S::one() - self.assign_prob.clone()
        }
    }

    /// `Pr(Take = t | U = u, Assign = a)`.
    pub fn prob_take(&self, u: usize, a: bool, t: bool) -> Result<S> {
        let p = self.param(u)?.take_prob(a).clone();
        Ok(bernoulli(p, t))
    }

    /// `Pr(Cure = c | U = u, Take = t)`.
    pub fn prob_cure(&self, u: usize, t: bool, c: bool) -> Result<S> {
        let p = self.param(u)?.cure_prob(t).clone();
        Ok(bernoulli(p, c))
    }

    pub fn joint_prob(&self, u: usize, a: bool, t: bool, c: bool) -> Result<S> {
        Ok(self.prob_u()
            * self.prob_assign(a)
            * self.prob_take(u, a, t)?
            * self.prob_cure(u, t, c)?)
    }

    fn param(&self, u: usize) -> Result<&StochasticIndividual<S>> {
        self.params.get(u).ok_or(Error::IndexOutOfRange {
            index: u,
            len: self.params.len(),
        })
    }

    /// All `8 N` joint entries in `(u, assign, take, cure)` lexicographic order.
    pub fn joint_table(&self) -> Vec<JointEntry<S>> {
        let mut rows = Vec::with_capacity(8 * self.n());
        for u in 0..self.n() {
            for (a, t, c) in binary_triples() {
                rows.push(JointEntry {
                    u,
                    assign: a,
                    take: t,
                    cure: c,
                    prob: self.joint(u, a, t, c),
                });
            }
        }
        rows
    }

    pub fn to_json(&self) -> NetJson<S> {
        NetJson {
            n: self.n(),
            assign_prob: self.assign_prob.clone(),
            params: self
                .params
                .iter()
                .enumerate()
                .map(|(u, p)| NetRow {
                    u,
                    t: p.t().clone(),
                    t_star: p.t_star().clone(),
                    c: p.c().clone(),
                    c_star: p.c_star().clone(),
                })
                .collect(),
        }
    }
}

impl<S: Scalar> JointModel<S> for CausalNet<S> {
    fn population_size(&self) -> usize {
        self.n()
    }

    fn joint(&self, u: usize, a: bool, t: bool, c: bool) -> S {
        self.joint_prob(u, a, t, c)
            .expect("index is within the population")
    }
}

fn bernoulli<S: Scalar>(p: S, outcome: bool) -> S {
    if outcome {
        p
    } else {
        S::one() - p
    }
}

fn binary_triples() -> impl Iterator<Item = (bool, bool, bool)> {
    (0u8..8).map(|b| (b & 4 != 0, b & 2 != 0, b & 1 != 0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct JointEntry<S: Scalar> {
    pub u: usize,
    pub assign: bool,
    pub take: bool,
    pub cure: bool,
    #[serde(with = "serde_scalar")]
    pub prob: S,
}

#[derive(Debug, Serialize)]
#[serde(bound = "")]
pub struct NetJson<S: Scalar> {
    pub n: usize,
    #[serde(with = "serde_scalar")]
    pub assign_prob: S,
    pub params: Vec<NetRow<S>>,
}

#[derive(Debug, Serialize)]
#[serde(bound = "")]
pub struct NetRow<S: Scalar> {
    pub u: usize,
    #[serde(with = "serde_scalar")]
    pub t: S,
    #[serde(with = "serde_scalar")]
    pub t_star: S,
    #[serde(with = "serde_scalar")]
    pub c: S,
    #[serde(with = "serde_scalar")]
    pub c_star: S,
}

/// Partial assignment to the observable variables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub assign: Option<bool>,
    pub take: Option<bool>,
    pub cure: Option<bool>,
}

impl Assignment {
    pub fn assign(mut self, v: bool) -> Self {
        self.assign = Some(v);
        self
    }

    pub fn take(mut self, v: bool) -> Self {
        self.take = Some(v);
        self
    }

    pub fn cure(mut self, v: bool) -> Self {
        self.cure = Some(v);
        self
    }

    pub fn matches(&self, a: bool, t: bool, c: bool) -> bool {
        self.assign.is_none_or(|v| v == a)
            && self.take.is_none_or(|v| v == t)
            && self.cure.is_none_or(|v| v == c)
    }
}

/// `Pr(event | condition)` over the observables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservableQuery {
    event: Assignment,
    condition: Assignment,
}

impl ObservableQuery {
    pub fn new(event: Assignment, condition: Assignment) -> Result<Self> {
        if event.assign.is_some() && condition.assign.is_some() {
            return Err(Error::OverlappingQuery("Assign"));
        }
        if event.take.is_some() && condition.take.is_some() {
            return Err(Error::OverlappingQuery("Take"));
        }
        if event.cure.is_some() && condition.cure.is_some() {
            return Err(Error::OverlappingQuery("Cure"));
        }
        Ok(Self { event, condition })
    }

    pub fn cure_given_assign(a: bool) -> Self {
        Self {
            event: Assignment::default().cure(true),
            condition: Assignment::default().assign(a),
        }
    }

    pub fn take_given_assign(a: bool) -> Self {
        Self {
            event: Assignment::default().take(true),
            condition: Assignment::default().assign(a),
        }
    }

    pub fn event(&self) -> &Assignment {
        &self.event
    }

    pub fn condition(&self) -> &Assignment {
        &self.condition
    }
}

/// Sum of the joint over every `(u, a, t, c)` consistent with `filter`.
pub fn marginal<S: Scalar, M: JointModel<S> + ?Sized>(model: &M, filter: &Assignment) -> S {
    let mut total = S::zero();
    for u in 0..model.population_size() {
        for (a, t, c) in binary_triples() {
            if filter.matches(a, t, c) {
                total = total + model.joint(u, a, t, c);
            }
        }
    }
    total
}

/// Conditional probability by full enumeration.
pub fn conditional<S: Scalar, M: JointModel<S> + ?Sized>(
    model: &M,
    query: &ObservableQuery,
) -> Result<S> {
    let cond = marginal(model, &query.condition);
    if cond.is_zero() {
        return Err(Error::ZeroConditionProbability);
    }
    let both = Assignment {
        assign: query.event.assign.or(query.condition.assign),
        take: query.event.take.or(query.condition.take),
        cure: query.event.cure.or(query.condition.cure),
    };
    Ok(marginal(model, &both) / cond)
}

/// The four conditionals entering the IV ratio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(bound = "")]
pub struct Observables<S: Scalar> {
    /// `Pr(Cure = 1 | Assign = 1)`
    #[serde(with = "serde_scalar")]
    pub cure_given_assign1: S,
    /// `Pr(Cure = 1 | Assign = 0)`
    #[serde(with = "serde_scalar")]
    pub cure_given_assign0: S,
    /// `Pr(Take = 1 | Assign = 1)`
    #[serde(with = "serde_scalar")]
    pub take_given_assign1: S,
    /// `Pr(Take = 1 | Assign = 0)`
    #[serde(with = "serde_scalar")]
    pub take_given_assign0: S,
}

/// Closed forms of the factorized net:
/// `Pr(Cure=1|Assign=1) = (1/N) sum(c t + c* (1 - t))`,
/// `Pr(Cure=1|Assign=0) = (1/N) sum(c t* + c* (1 - t*))`,
/// `Pr(Take=1|Assign=1) = (1/N) sum t`, `Pr(Take=1|Assign=0) = (1/N) sum t*`.
pub fn closed_form_observables<S: Scalar>(net: &CausalNet<S>) -> Observables<S> {
    let mut cure1 = S::zero();
    let mut cure0 = S::zero();
    let mut take1 = S::zero();
    let mut take0 = S::zero();
    for p in net.params() {
        let (t, ts, c, cs) = (p.t(), p.t_star(), p.c(), p.c_star());
        cure1 = cure1 + c.clone() * t.clone() + cs.clone() * (S::one() - t.clone());
        cure0 = cure0 + c.clone() * ts.clone() + cs.clone() * (S::one() - ts.clone());
        take1 = take1 + t.clone();
        take0 = take0 + ts.clone();
    }
    let inv_n = net.prob_u();
    Observables {
        cure_given_assign1: cure1 * inv_n.clone(),
        cure_given_assign0: cure0 * inv_n.clone(),
        take_given_assign1: take1 * inv_n.clone(),
        take_given_assign0: take0 * inv_n,
    }
}

/// The same four conditionals by full enumeration of the joint.
pub fn enumerated_observables<S: Scalar, M: JointModel<S> + ?Sized>(
    model: &M,
) -> Result<Observables<S>> {
    Ok(Observables {
        cure_given_assign1: conditional(model, &ObservableQuery::cure_given_assign(true))?,
        cure_given_assign0: conditional(model, &ObservableQuery::cure_given_assign(false))?,
        take_given_assign1: conditional(model, &ObservableQuery::take_given_assign(true))?,
        take_given_assign0: conditional(model, &ObservableQuery::take_given_assign(false))?,
    })
}

/// Largest deviations from the two independences the factorization relies on.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct MarkovReport<S: Scalar> {
    /// `max |Pr(U=i | Assign=a) - Pr(U=i)|`
    #[serde(with = "serde_scalar")]
    pub confounder_deviation: S,
    /// `max |Pr(Cure=c | Take=t, U=i, Assign=1) - Pr(Cure=c | Take=t, U=i, Assign=0)|`
    /// over cells where both conditioning events have positive probability.
    #[serde(with = "serde_scalar")]
    pub exclusion_deviation: S,
}

impl<S: Scalar> MarkovReport<S> {
    pub fn max_deviation(&self) -> S {
        max_of([
            self.confounder_deviation.clone(),
            self.exclusion_deviation.clone(),
        ])
    }
}

/// Checks both independences by enumeration over the joint.
pub fn verify_markov_factorization<S: Scalar, M: JointModel<S> + ?Sized>(
    model: &M,
) -> MarkovReport<S> {
    let n = model.population_size();
    let j = |u, a, t, c| model.joint(u, a, t, c);
    let prob_assign = |a: bool| marginal(model, &Assignment::default().assign(a));

    let mut confounder = S::zero();
    for u in 0..n {
        let pu = (0u8..8).fold(S::zero(), |acc, b| {
            acc + j(u, b & 4 != 0, b & 2 != 0, b & 1 != 0)
        });
        for a in [false, true] {
            let pa = prob_assign(a);
            if pa.is_zero() {
                continue;
            }
            let pua = (0u8..4).fold(S::zero(), |acc, b| acc + j(u, a, b & 2 != 0, b & 1 != 0));
            let dev = (pua / pa - pu.clone()).abs();
            if dev > confounder {
                confounder = dev;
            }
        }
    }

    let mut exclusion = S::zero();
    for u in 0..n {
        for t in [false, true] {
            let cond = |a: bool| {
                let base = j(u, a, t, false) + j(u, a, t, true);
                (!base.is_zero()).then(|| j(u, a, t, true) / base)
            };
            if let (Some(p1), Some(p0)) = (cond(true), cond(false)) {
                // Cure is binary so the deviation for c = 0 is the same.
                let dev = (p1 - p0).abs();
                if dev > exclusion {
                    exclusion = dev;
                }
            }
        }
    }

    MarkovReport {
        confounder_deviation: confounder,
        exclusion_deviation: exclusion,
    }
}
