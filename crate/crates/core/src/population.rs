//! Individuals, populations, compliance classes and the assumption validators.
//!
//! A [`DeterministicIndividual`] holds one card per counterfactual: each of
//! its four potential outcomes is a plain bit. A [`StochasticIndividual`]
//! replaces each card with a deck and keeps only the proportion of `1` cards.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::Scalar;

/// Four binary potential outcomes of one individual.
///
/// * `take_if_assigned1` / `take_if_assigned0`: would the individual take the
///   treatment if assigned to the treatment / control group.
/// * `cure_if_take1` / `cure_if_take0`: would the individual be cured if they
///   took / did not take the treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DeterministicIndividual {
    pub take_if_assigned1: bool,
    pub take_if_assigned0: bool,
    pub cure_if_take1: bool,
    pub cure_if_take0: bool,
}

impl DeterministicIndividual {
    pub const fn new(
        take_if_assigned1: bool,
        take_if_assigned0: bool,
        cure_if_take1: bool,
        cure_if_take0: bool,
    ) -> Self {
        Self {
            take_if_assigned1,
            take_if_assigned0,
            cure_if_take1,
            cure_if_take0,
        }
    }

    /// Builds from 0/1 flags in field order; any nonzero value counts as 1.
    pub const fn from_bits(take1: u8, take0: u8, cure1: u8, cure0: u8) -> Self {
        Self::new(take1 != 0, take0 != 0, cure1 != 0, cure0 != 0)
    }

    /// All 16 possible individuals.
    pub fn all_types() -> impl Iterator<Item = Self> {
        (0u8..16).map(|b| Self::from_bits(b & 8, b & 4, b & 2, b & 1))
    }

    /// Potential take decision under the given assignment.
    pub fn take_if_assigned(&self, assign: bool) -> bool {
        if assign {
            self.take_if_assigned1
        } else {
            self.take_if_assigned0
        }
    }

    /// Potential cure outcome under the given treatment status.
    pub fn cure_if_take(&self, take: bool) -> bool {
        if take {
            self.cure_if_take1
        } else {
            self.cure_if_take0
        }
    }

    pub fn subpopulation(&self) -> SubpopulationType {
        classify_deterministic(self)
    }
}

/// Counterfactual probabilities of one individual.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StochasticIndividual<S> {
    t: S,
    t_star: S,
    c: S,
    c_star: S,
}

impl<S: Scalar> StochasticIndividual<S> {
    /// `t`: take if assigned to treatment; `t_star`: take if assigned to
    /// control; `c`: cure if treated; `c_star`: cure if untreated.
    pub fn new(t: S, t_star: S, c: S, c_star: S) -> Result<Self> {
        for (field, value) in [("t", &t), ("t_star", &t_star), ("c", &c), ("c_star", &c_star)] {
            if !value.is_probability() {
                return Err(Error::ProbabilityOutOfRange {
                    field: field.to_string(),
                    value: value.to_text(),
                });
            }
        }
        Ok(Self { t, t_star, c, c_star })
    }

    /// Builds an individual from its four decks, one per counterfactual.
    pub fn from_decks(
        take_if_assigned1: &Deck,
        take_if_assigned0: &Deck,
        cure_if_take1: &Deck,
        cure_if_take0: &Deck,
    ) -> Self {
        Self {
            t: take_if_assigned1.proportion(),
            t_star: take_if_assigned0.proportion(),
            c: cure_if_take1.proportion(),
            c_star: cure_if_take0.proportion(),
        }
    }

    pub fn t(&self) -> &S {
        &self.t
    }

    pub fn t_star(&self) -> &S {
        &self.t_star
    }

    pub fn c(&self) -> &S {
        &self.c
    }

    pub fn c_star(&self) -> &S {
        &self.c_star
    }

    /// Probability of taking the treatment under the given assignment.
    pub fn take_prob(&self, assign: bool) -> &S {
        if assign {
            &self.t
        } else {
            &self.t_star
        }
    }

    /// Probability of cure under the given treatment status.
    pub fn cure_prob(&self, take: bool) -> &S {
        if take {
            &self.c
        } else {
            &self.c_star
        }
    }

    /// Converts to another numeric backend through its textual form.
    pub fn convert<T: Scalar>(&self) -> Result<StochasticIndividual<T>> {
        let conv = |field: &str, v: &S| {
            T::parse_text(&v.to_text()).ok_or_else(|| Error::InvalidParams(format!(
                "cannot convert {field} = {v} to {} mode",
                T::MODE
            )))
        };
        StochasticIndividual::new(
            conv("t", &self.t)?,
            conv("t_star", &self.t_star)?,
            conv("c", &self.c)?,
            conv("c_star", &self.c_star)?,
        )
    }
}

/// A finite deck of binary cards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deck {
    ones: usize,
    len: usize,
}

impl Deck {
    pub fn from_cards(cards: &[bool]) -> Result<Self> {
        if cards.is_empty() {
            return Err(Error::EmptyDeck);
        }
        Ok(Self {
            ones: cards.iter().filter(|&&c| c).count(),
            len: cards.len(),
        })
    }

    pub fn from_counts(ones: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyDeck);
        }
        if ones > len {
            return Err(Error::InvalidParams(format!(
                "deck of {len} cards cannot hold {ones} ones"
            )));
        }
        Ok(Self { ones, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn ones(&self) -> usize {
        self.ones
    }

    /// Proportion of `1` cards.
    pub fn proportion<S: Scalar>(&self) -> S {
        S::from_ratio(self.ones as i64, self.len as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubpopulationType {
    Complier,
    Defier,
    AlwaysTaker,
    NeverTaker,
}

impl SubpopulationType {
    pub const ALL: [SubpopulationType; 4] = [
        SubpopulationType::Complier,
        SubpopulationType::Defier,
        SubpopulationType::AlwaysTaker,
        SubpopulationType::NeverTaker,
    ];
}

/// Sign class of the degree of compliance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum GeneralComplianceClass {
    Complier,
    Defier,
    IndifferentTaker {
        is_always_taker: bool,
        is_never_taker: bool,
    },
}

impl GeneralComplianceClass {
    pub fn is_complier(&self) -> bool {
        matches!(self, GeneralComplianceClass::Complier)
    }

    pub fn is_defier(&self) -> bool {
        matches!(self, GeneralComplianceClass::Defier)
    }
}

/// Non-empty ordered collection; the position of an individual is its identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population<I> {
    name: String,
    individuals: Vec<I>,
}

impl<I> Population<I> {
    pub fn new(name: impl Into<String>, individuals: Vec<I>) -> Result<Self> {
        if individuals.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        Ok(Self {
            name: name.into(),
            individuals,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn individuals(&self) -> &[I] {
        &self.individuals
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, index: usize) -> Result<&I> {
        self.individuals.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.individuals.len(),
        })
    }

    pub fn iter(&self) -> std::slice::Iter<'_, I> {
        self.individuals.iter()
    }
}

impl<'a, I> IntoIterator for &'a Population<I> {
    type Item = &'a I;
    type IntoIter = std::slice::Iter<'a, I>;

    fn into_iter(self) -> Self::IntoIter {
        self.individuals.iter()
    }
}

impl<S: Scalar> Population<StochasticIndividual<S>> {
    pub fn convert<T: Scalar>(&self) -> Result<Population<StochasticIndividual<T>>> {
        let individuals = self
            .individuals
            .iter()
            .map(StochasticIndividual::convert)
            .collect::<Result<Vec<_>>>()?;
        Population::new(self.name.clone(), individuals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationKind {
    Deterministic,
    Stochastic,
}

impl std::fmt::Display for PopulationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PopulationKind::Deterministic => f.write_str("deterministic"),
            PopulationKind::Stochastic => f.write_str("stochastic"),
        }
    }
}

/// A population of either kind, as read from a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyPopulation<S> {
    Deterministic(Population<DeterministicIndividual>),
    Stochastic(Population<StochasticIndividual<S>>),
}

impl<S: Scalar> AnyPopulation<S> {
    pub fn kind(&self) -> PopulationKind {
        match self {
            AnyPopulation::Deterministic(_) => PopulationKind::Deterministic,
            AnyPopulation::Stochastic(_) => PopulationKind::Stochastic,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            AnyPopulation::Deterministic(p) => p.name(),
            AnyPopulation::Stochastic(p) => p.name(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyPopulation::Deterministic(p) => p.len(),
            AnyPopulation::Stochastic(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The stochastic view; deterministic populations are lifted.
    pub fn to_stochastic(&self) -> Population<StochasticIndividual<S>> {
        match self {
            AnyPopulation::Deterministic(p) => lift_deterministic(p),
            AnyPopulation::Stochastic(p) => p.clone(),
        }
    }

    pub fn validate(&self, tol: &S) -> ValidationReport {
        match self {
            AnyPopulation::Deterministic(p) => validate_deterministic(p),
            AnyPopulation::Stochastic(p) => validate_stochastic(p, tol),
        }
    }
}

pub fn classify_deterministic(ind: &DeterministicIndividual) -> SubpopulationType {
    match (ind.take_if_assigned0, ind.take_if_assigned1) {
        (false, true) => SubpopulationType::Complier,
        (true, false) => SubpopulationType::Defier,
        (true, true) => SubpopulationType::AlwaysTaker,
        (false, false) => SubpopulationType::NeverTaker,
    }
}

/// `t - t_star`.
pub fn degree_of_compliance<S: Scalar>(ind: &StochasticIndividual<S>) -> S {
    ind.t.clone() - ind.t_star.clone()
}

pub fn classify_stochastic<S: Scalar>(
    ind: &StochasticIndividual<S>,
    tol: &S,
) -> GeneralComplianceClass {
    let dc = degree_of_compliance(ind);
    if dc > *tol {
        GeneralComplianceClass::Complier
    } else if dc < -tol.clone() {
        GeneralComplianceClass::Defier
    } else {
        let near = |v: &S, target: S| (v.clone() - target).abs() <= *tol;
        GeneralComplianceClass::IndifferentTaker {
            is_always_taker: near(&ind.t, S::one()) && near(&ind.t_star, S::one()),
            is_never_taker: near(&ind.t, S::zero()) && near(&ind.t_star, S::zero()),
        }
    }
}

/// Reads a deterministic individual as a stochastic one whose decks hold a single card.
pub fn lift_individual<S: Scalar>(ind: &DeterministicIndividual) -> StochasticIndividual<S> {
    StochasticIndividual {
        t: S::from_bool(ind.take_if_assigned1),
        t_star: S::from_bool(ind.take_if_assigned0),
        c: S::from_bool(ind.cure_if_take1),
        c_star: S::from_bool(ind.cure_if_take0),
    }
}

pub fn lift_deterministic<S: Scalar>(
    pop: &Population<DeterministicIndividual>,
) -> Population<StochasticIndividual<S>> {
    Population {
        name: pop.name.clone(),
        individuals: pop.individuals.iter().map(lift_individual).collect(),
    }
}

/// Class counts and the two compliance assumptions needed for identification.
///
/// For stochastic populations `always_taker_count` and `never_taker_count`
/// count the indifferent-takers carrying the corresponding sub-flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub exists_complier: bool,
    pub no_defiers: bool,
    pub complier_count: usize,
    pub defier_count: usize,
    pub indifferent_count: usize,
    pub always_taker_count: usize,
    pub never_taker_count: usize,
}

impl ValidationReport {
    /// Both compliance assumptions hold.
    pub fn holds(&self) -> bool {
        self.exists_complier && self.no_defiers
    }
}

pub fn validate_deterministic(pop: &Population<DeterministicIndividual>) -> ValidationReport {
    let mut counts = [0usize; 4];
    for ind in pop {
        counts[classify_deterministic(ind) as usize] += 1;
    }
    let [complier, defier, always, never] = counts;
    ValidationReport {
        exists_complier: complier > 0,
        no_defiers: defier == 0,
        complier_count: complier,
        defier_count: defier,
        indifferent_count: always + never,
        always_taker_count: always,
        never_taker_count: never,
    }
}

pub fn validate_stochastic<S: Scalar>(
    pop: &Population<StochasticIndividual<S>>,
    tol: &S,
) -> ValidationReport {
    let mut report = ValidationReport {
        exists_complier: false,
        no_defiers: true,
        complier_count: 0,
        defier_count: 0,
        indifferent_count: 0,
        always_taker_count: 0,
        never_taker_count: 0,
    };
    for ind in pop {
        match classify_stochastic(ind, tol) {
            GeneralComplianceClass::Complier => report.complier_count += 1,
            GeneralComplianceClass::Defier => report.defier_count += 1,
            GeneralComplianceClass::IndifferentTaker {
                is_always_taker,
                is_never_taker,
            } => {
                report.indifferent_count += 1;
                report.always_taker_count += usize::from(is_always_taker);
                report.never_taker_count += usize::from(is_never_taker);
            }
        }
    }
    report.exists_complier = report.complier_count > 0;
    report.no_defiers = report.defier_count == 0;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Exact;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    fn stoch(t: f64, ts: f64, c: f64, cs: f64) -> StochasticIndividual<f64> {
        StochasticIndividual::new(t, ts, c, cs).unwrap()
    }

    #[test]
    fn classify_examples() {
        let complier = DeterministicIndividual::from_bits(1, 0, 1, 0);
        assert_eq!(classify_deterministic(&complier), SubpopulationType::Complier);
        for cures in 0..4u8 {
            let defier = DeterministicIndividual::from_bits(0, 1, cures & 2, cures & 1);
            assert_eq!(classify_deterministic(&defier), SubpopulationType::Defier);
        }
    }

    #[test]
    fn behaviour_pairs_map_bijectively_onto_tags() {
        let mut seen = Vec::new();
        for (take1, take0) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let tag = classify_deterministic(&DeterministicIndividual::from_bits(take1, take0, 0, 0));
            assert!(!seen.contains(&tag));
            seen.push(tag);
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn degree_of_compliance_examples() {
        assert_eq!(degree_of_compliance(&stoch(1.0, 0.0, 0.0, 0.0)), 1.0);
        assert_eq!(degree_of_compliance(&stoch(0.5, 0.5, 0.0, 0.0)), 0.0);
        let ind = StochasticIndividual::new(q(4, 5), q(1, 5), q(0, 1), q(0, 1)).unwrap();
        assert_eq!(degree_of_compliance(&ind), q(3, 5));
    }

    #[test]
    fn classify_stochastic_examples() {
        let zero = 0.0;
        assert_eq!(
            classify_stochastic(&stoch(1.0, 1.0, 0.3, 0.3), &zero),
            GeneralComplianceClass::IndifferentTaker {
                is_always_taker: true,
                is_never_taker: false
            }
        );
        assert_eq!(
            classify_stochastic(&stoch(0.0, 0.0, 0.3, 0.3), &zero),
            GeneralComplianceClass::IndifferentTaker {
                is_always_taker: false,
                is_never_taker: true
            }
        );
        assert_eq!(
            classify_stochastic(&stoch(0.7, 0.3, 0.0, 0.0), &1e-12),
            GeneralComplianceClass::Complier
        );
        assert_eq!(
            classify_stochastic(&stoch(0.3, 0.7, 0.0, 0.0), &1e-12),
            GeneralComplianceClass::Defier
        );
        // within tolerance of zero DC
        assert!(matches!(
            classify_stochastic(&stoch(0.5 + 1e-14, 0.5, 0.0, 0.0), &1e-12),
            GeneralComplianceClass::IndifferentTaker { .. }
        ));
    }

    #[test]
    fn lift_examples() {
        let complier = DeterministicIndividual::from_bits(1, 0, 1, 0);
        let lifted: StochasticIndividual<Exact> = lift_individual(&complier);
        assert_eq!(
            lifted,
            StochasticIndividual::new(q(1, 1), q(0, 1), q(1, 1), q(0, 1)).unwrap()
        );
        let never = DeterministicIndividual::from_bits(0, 0, 0, 1);
        let lifted: StochasticIndividual<Exact> = lift_individual(&never);
        assert_eq!(
            lifted,
            StochasticIndividual::new(q(0, 1), q(0, 1), q(0, 1), q(1, 1)).unwrap()
        );
    }

    #[test]
    fn lift_preserves_classification_over_all_types() {
        for ind in DeterministicIndividual::all_types() {
            let lifted: StochasticIndividual<Exact> = lift_individual(&ind);
            let general = classify_stochastic(&lifted, &Exact::default_tol());
            let dc = degree_of_compliance(&lifted);
            match classify_deterministic(&ind) {
                SubpopulationType::Complier => {
                    assert_eq!(general, GeneralComplianceClass::Complier);
                    assert_eq!(dc, q(1, 1));
                }
                SubpopulationType::Defier => {
                    assert_eq!(general, GeneralComplianceClass::Defier);
                    assert_eq!(dc, q(-1, 1));
                }
                SubpopulationType::AlwaysTaker => {
                    assert_eq!(
                        general,
                        GeneralComplianceClass::IndifferentTaker {
                            is_always_taker: true,
                            is_never_taker: false
                        }
                    );
                    assert_eq!(dc, q(0, 1));
                }
                SubpopulationType::NeverTaker => {
                    assert_eq!(
                        general,
                        GeneralComplianceClass::IndifferentTaker {
                            is_always_taker: false,
                            is_never_taker: true
                        }
                    );
                    assert_eq!(dc, q(0, 1));
                }
            }
        }
    }

    #[test]
    fn ten_card_deck_with_eight_cures() {
        let cards = [true, true, true, true, true, true, true, true, false, false];
        let deck = Deck::from_cards(&cards).unwrap();
        assert_eq!(deck.proportion::<Exact>(), q(4, 5));
        let one = Deck::from_counts(1, 1).unwrap();
        let zero = Deck::from_counts(0, 1).unwrap();
        let ind = StochasticIndividual::<Exact>::from_decks(&one, &zero, &deck, &zero);
        assert_eq!(ind.c(), &q(4, 5));
        assert!(matches!(Deck::from_cards(&[]), Err(Error::EmptyDeck)));
        assert!(Deck::from_counts(3, 2).is_err());
    }

    #[test]
    fn out_of_range_probability_is_rejected() {
        let err = StochasticIndividual::new(q(6, 5), q(0, 1), q(0, 1), q(0, 1)).unwrap_err();
        assert!(matches!(err, Error::ProbabilityOutOfRange { ref field, .. } if field == "t"));
        assert!(StochasticIndividual::new(0.5, -0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn empty_population_is_rejected() {
        let empty: Vec<DeterministicIndividual> = Vec::new();
        assert!(matches!(Population::new("x", empty), Err(Error::EmptyPopulation)));
    }

    #[test]
    fn validation_examples() {
        let c = DeterministicIndividual::from_bits(1, 0, 1, 0);
        let d = DeterministicIndividual::from_bits(0, 1, 1, 0);
        let n = DeterministicIndividual::from_bits(0, 0, 1, 0);

        let report = validate_deterministic(&Population::new("cc", vec![c, c]).unwrap());
        assert!(report.exists_complier && report.no_defiers);
        assert_eq!(report.complier_count, 2);

        let report = validate_deterministic(&Population::new("cd", vec![c, d]).unwrap());
        assert!(!report.no_defiers);
        assert_eq!(report.defier_count, 1);

        let report = validate_deterministic(&Population::new("nn", vec![n, n]).unwrap());
        assert!(!report.exists_complier);
        assert_eq!(report.never_taker_count, 2);
    }

    #[test]
    fn stochastic_validation_matches_lifted_deterministic() {
        let pop = Population::new(
            "mix",
            DeterministicIndividual::all_types().collect::<Vec<_>>(),
        )
        .unwrap();
        let det = validate_deterministic(&pop);
        let stoch = validate_stochastic(&lift_deterministic::<Exact>(&pop), &Exact::default_tol());
        assert_eq!(det, stoch);
        assert_eq!(det.complier_count, 4);
        assert_eq!(det.indifferent_count, 8);
    }

    proptest! {
        #[test]
        fn trichotomy_at_zero_tolerance(t in 0i64..=20, ts in 0i64..=20) {
            let ind = StochasticIndividual::new(q(t, 20), q(ts, 20), q(0, 1), q(1, 1)).unwrap();
            let class = classify_stochastic(&ind, &Exact::default_tol());
            let dc = degree_of_compliance(&ind);
            let hits = [
                class.is_complier(),
                class.is_defier(),
                matches!(class, GeneralComplianceClass::IndifferentTaker { .. }),
            ];
            prop_assert_eq!(hits.iter().filter(|&&h| h).count(), 1);
            prop_assert_eq!(class.is_complier(), dc > q(0, 1));
            prop_assert_eq!(class.is_defier(), dc < q(0, 1));
        }
    }
}
