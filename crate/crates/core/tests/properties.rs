mod common;

use common::*;
use compliance_iv::bayesnet::{
    build_net, closed_form_observables, enumerated_observables, verify_markov_factorization,
};
use compliance_iv::effects::{ate, ate_by_proportions, date, date_weights, late, late_via_lemma_a};
use compliance_iv::identification::{
    iv_from_observables, subpopulation_proportions_from_observables, verify_theorem1, verify_theorem2,
};
use compliance_iv::io::{parse_population, population_to_string};
use compliance_iv::population::{
    classify_deterministic, classify_stochastic, degree_of_compliance, lift_deterministic,
    lift_individual, GeneralComplianceClass, SubpopulationType,
};
use compliance_iv::trial::{centering_violations, simulate_deterministic, simulate_trial, TrialDataset};
use compliance_iv::{AnyPopulation, DeterministicIndividual, Exact, Population, Scalar, StochasticIndividual};
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;

fn q(n: i64, d: i64) -> Exact {
    Exact::from_ratio(n, d)
}

fn individual(bits: u8) -> DeterministicIndividual {
    DeterministicIndividual::from_bits((bits >> 3) & 1, (bits >> 2) & 1, (bits >> 1) & 1, bits & 1)
}

fn is_defier_bits(bits: u8) -> bool {
    bits & 0b1100 == 0b0100
}

/// Any deterministic population, size 1..=max.
fn det_pop_strategy(max: usize) -> impl Strategy<Value = Population<DeterministicIndividual>> {
    prop::collection::vec(0u8..16, 1..=max)
        .prop_map(|bits| Population::new("prop", bits.into_iter().map(individual).collect()).unwrap())
}

/// Defier-free deterministic population with at least one complier.
fn valid_det_pop_strategy(max: usize) -> impl Strategy<Value = Population<DeterministicIndividual>> {
    let non_defier = (0u8..16).prop_filter("defier", |b| !is_defier_bits(*b));
    (0u8..4, prop::collection::vec(non_defier, 0..max)).prop_map(|(cure_bits, rest)| {
        let mut individuals = vec![individual(0b1000 | cure_bits)];
        individuals.extend(rest.into_iter().map(individual));
        Population::new("prop", individuals).unwrap()
    })
}

fn grid_prob() -> impl Strategy<Value = Exact> {
    (0i64..=20).prop_map(|k| q(k, 20))
}

fn stoch_ind_strategy(monotone: bool) -> impl Strategy<Value = StochasticIndividual<Exact>> {
    (grid_prob(), grid_prob(), grid_prob(), grid_prob()).prop_map(move |(a, b, c, cs)| {
        let (t, ts) = if monotone && b > a { (b, a) } else { (a, b) };
        StochasticIndividual::new(t, ts, c, cs).unwrap()
    })
}

fn stoch_pop_strategy(monotone: bool, max: usize) -> impl Strategy<Value = Population<StochasticIndividual<Exact>>> {
    prop::collection::vec(stoch_ind_strategy(monotone), 1..=max)
        .prop_map(|v| Population::new("prop", v).unwrap())
}

/// Monotone population with at least one individual whose take rate rises.
fn valid_stoch_pop_strategy(max: usize) -> impl Strategy<Value = Population<StochasticIndividual<Exact>>> {
    (1i64..=20, 0i64..20, grid_prob(), grid_prob(), stoch_pop_strategy(true, max)).prop_map(
        move |(hi, lo, c, cs, pop)| {
            let lo = lo.min(hi - 1);
            let mut v = pop.individuals().to_vec();
            v.truncate(max.saturating_sub(1).max(1));
            v.push(StochasticIndividual::new(q(hi, 20), q(lo, 20), c, cs).unwrap());
            Population::new("prop", v).unwrap()
        },
    )
}

fn assign_prob() -> impl Strategy<Value = Exact> {
    (1i64..100).prop_map(|k| q(k, 100))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn late_gap_is_zero(pop in valid_det_pop_strategy(50), p in assign_prob()) {
        let r = verify_theorem1(&pop, p).unwrap();
        prop_assert!(r.applicable());
        prop_assert_eq!(r.abs_gap, Some(Exact::zero()));
        prop_assert_eq!(r.estimand_lhs, late_oracle::<Exact>(&pop));
    }

    #[test]
    fn date_gap_is_zero(pop in valid_stoch_pop_strategy(50), p in assign_prob()) {
        let r = verify_theorem2(&pop, p.clone(), &Exact::zero()).unwrap();
        prop_assert!(r.applicable());
        prop_assert_eq!(r.abs_gap, Some(Exact::zero()));
        prop_assert_eq!(r.estimand_lhs, date_oracle(&pop));
        prop_assert_eq!(r.estimand_rhs, wald(&brute_force_observables(&pop, &p)));
    }

    #[test]
    fn float_mode_tracks_rational_mode(pop in valid_stoch_pop_strategy(30)) {
        let popf = pop.convert::<f64>().unwrap();
        let exact = verify_theorem2(&pop, q(1, 2), &Exact::zero()).unwrap();
        let float = verify_theorem2(&popf, 0.5, &f64::default_tol()).unwrap();
        prop_assert!(float.abs_gap.unwrap() < 1e-10);
        prop_assert!((float.estimand_rhs.unwrap() - exact.estimand_rhs.unwrap().to_f64()).abs() < 1e-12);
    }

    #[test]
    fn identification_is_p_invariant(pop in stoch_pop_strategy(false, 12), p1 in assign_prob(), p2 in assign_prob()) {
        let ratio = |p: &Exact| {
            let net = build_net(&pop, p.clone()).unwrap();
            let closed = iv_from_observables(&closed_form_observables(&net), &Exact::zero()).ok();
            let enumerated = iv_from_observables(&enumerated_observables(&net).unwrap(), &Exact::zero()).ok();
            assert_eq!(closed, enumerated);
            closed
        };
        prop_assert_eq!(ratio(&p1), ratio(&p2));
    }

    #[test]
    fn lifted_check_reproduces_deterministic_check(pop in det_pop_strategy(30), p in assign_prob()) {
        let t1 = verify_theorem1(&pop, p.clone()).unwrap();
        let t2 = verify_theorem2(&lift_deterministic::<Exact>(&pop), p, &Exact::zero()).unwrap();
        prop_assert!(t1.same_outcome(&t2));
    }

    #[test]
    fn proportions_recover_class_shares(pop in valid_det_pop_strategy(40)) {
        let obs = counted_observables::<Exact>(&pop);
        let got = subpopulation_proportions_from_observables(&obs[2], &obs[3]).unwrap();
        let share = |class| q(
            pop.iter().filter(|i| classify_deterministic(i) == class).count() as i64,
            pop.len() as i64,
        );
        prop_assert_eq!(got.p_complier, share(SubpopulationType::Complier));
        prop_assert_eq!(got.p_always, share(SubpopulationType::AlwaysTaker));
        prop_assert_eq!(got.p_never, share(SubpopulationType::NeverTaker));
    }

    #[test]
    fn ate_forms_agree(pop in det_pop_strategy(50)) {
        let a: Exact = ate(&pop);
        prop_assert_eq!(a.clone(), ate_by_proportions(&pop));
        prop_assert!(a.abs() <= Exact::one());
    }

    #[test]
    fn late_forms_agree_and_stay_in_range(pop in det_pop_strategy(50)) {
        match (late::<Exact>(&pop), late_via_lemma_a::<Exact>(&pop)) {
            (Ok(l), Ok(a)) => {
                prop_assert_eq!(&l.value, &a);
                prop_assert!(l.value.abs() <= Exact::one());
                prop_assert!(l.n_contributing >= 1);
            }
            (Err(_), Err(_)) => prop_assert!(late_oracle::<Exact>(&pop).is_none()),
            _ => prop_assert!(false, "late and late_via_lemma_a disagree on definedness"),
        }
    }

    #[test]
    fn date_weights_form_a_distribution(pop in stoch_pop_strategy(false, 40)) {
        let tol = Exact::zero();
        match date_weights(&pop, &tol) {
            Ok(w) => {
                prop_assert!(w.iter().all(|x| *x >= Exact::zero()));
                prop_assert_eq!(w.iter().fold(Exact::zero(), |a, x| a + x), Exact::one());
                let d = date(&pop, &tol).unwrap();
                prop_assert!(d.value.abs() <= Exact::one());
                prop_assert!(d.n_contributing >= 1);
            }
            Err(_) => prop_assert!(pop.iter().all(|i| degree_of_compliance(i) <= Exact::zero())),
        }
    }

    #[test]
    fn date_reduces_to_late(pop in valid_det_pop_strategy(50)) {
        let d = date(&lift_deterministic::<Exact>(&pop), &Exact::zero()).unwrap();
        prop_assert_eq!(d.value, late::<Exact>(&pop).unwrap().value);
    }

    #[test]
    fn trichotomy(ind in stoch_ind_strategy(false)) {
        let class = classify_stochastic(&ind, &Exact::zero());
        let dc = degree_of_compliance(&ind);
        let flags = [
            class.is_complier(),
            class.is_defier(),
            matches!(class, GeneralComplianceClass::IndifferentTaker { .. }),
        ];
        prop_assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
        prop_assert_eq!(flags[0], dc > Exact::zero());
        prop_assert_eq!(flags[1], dc < Exact::zero());
        if let GeneralComplianceClass::IndifferentTaker { is_always_taker, is_never_taker } = class {
            prop_assert_eq!(is_always_taker, ind.t().is_one() && ind.t_star().is_one());
            prop_assert_eq!(is_never_taker, ind.t().is_zero() && ind.t_star().is_zero());
        }
    }

    #[test]
    fn net_is_normalized_and_markov(pop in stoch_pop_strategy(false, 10), p in assign_prob()) {
        let net = build_net(&pop, p).unwrap();
        let total = net.joint_table().into_iter().fold(Exact::zero(), |a, e| a + e.prob);
        prop_assert_eq!(total, Exact::one());
        prop_assert_eq!(verify_markov_factorization(&net).max_deviation(), Exact::zero());
        prop_assert_eq!(closed_form_observables(&net), enumerated_observables(&net).unwrap());
    }

    #[test]
    fn serialization_round_trips(pop in stoch_pop_strategy(false, 20), det in det_pop_strategy(20)) {
        let rational = AnyPopulation::Stochastic(pop.clone());
        prop_assert_eq!(parse_population::<Exact>(&population_to_string(&rational)).unwrap(), rational);
        let float = AnyPopulation::Stochastic(pop.convert::<f64>().unwrap());
        prop_assert_eq!(parse_population::<f64>(&population_to_string(&float)).unwrap(), float);
        let det = AnyPopulation::<Exact>::Deterministic(det);
        prop_assert_eq!(parse_population::<Exact>(&population_to_string(&det)).unwrap(), det);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulation_is_reproducible_and_centered(pop in det_pop_strategy(20), seed in any::<u64>(), n in 1usize..2000) {
        let a = simulate_deterministic(&pop, 0.5, n, seed).unwrap();
        let b = simulate_deterministic(&pop, 0.5, n, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(centering_violations(&a, &pop).unwrap(), 0);
        prop_assert!(a.latent().unwrap().iter().all(|&u| u < pop.len()));

        let mut csv = Vec::new();
        a.write_csv(&mut csv, true).unwrap();
        let back = TrialDataset::read_csv(csv.as_slice(), &a.manifest()).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn simulation_ignores_thread_count(pop in stoch_pop_strategy(false, 10), seed in any::<u64>()) {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_trial(&pop, 0.3, 5000, seed).unwrap());
        let b = many.install(|| simulate_trial(&pop, 0.3, 5000, seed).unwrap());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn partition_over_all_sixteen_types() {
    for ind in DeterministicIndividual::all_types() {
        let dc = degree_of_compliance(&lift_individual::<Exact>(&ind));
        let class = classify_deterministic(&ind);
        assert_eq!(dc == Exact::one(), class == SubpopulationType::Complier);
        assert_eq!(dc == -Exact::one(), class == SubpopulationType::Defier);
        assert!(dc.is_zero() || dc.abs().is_one());
    }
}

#[test]
fn proportion_recovery_exhaustive_small_populations() {
    // every multiset of up to three defier-free types
    let types: Vec<u8> = (0..16).filter(|b| !is_defier_bits(*b)).collect();
    let mut checked = 0;
    for a in 0..types.len() {
        for b in a..=types.len() {
            for c in b..=types.len() {
                let bits: Vec<u8> = [Some(a), (b < types.len()).then_some(b), (c < types.len()).then_some(c)]
                    .into_iter()
                    .flatten()
                    .map(|i| types[i])
                    .collect();
                let pop = Population::new("small", bits.into_iter().map(individual).collect()).unwrap();
                let obs = counted_observables::<Exact>(&pop);
                let got = subpopulation_proportions_from_observables(&obs[2], &obs[3]).unwrap();
                let n = pop.len() as i64;
                let count = |class| pop.iter().filter(|i| classify_deterministic(i) == class).count() as i64;
                assert_eq!(got.p_complier, q(count(SubpopulationType::Complier), n));
                assert_eq!(got.p_always, q(count(SubpopulationType::AlwaysTaker), n));
                assert_eq!(got.p_never, q(count(SubpopulationType::NeverTaker), n));
                checked += 1;
            }
        }
    }
    assert!(checked > 300);
}

#[test]
fn oracle_populations() {
    let four = verify_theorem1(&four_person(), q(1, 2)).unwrap();
    assert_eq!(four.estimand_rhs, Some(q(1, 2)));
    assert_eq!(counted_observables::<Exact>(&four_person()), [q(1, 2), q(1, 4), q(3, 4), q(1, 4)]);
    let two = verify_theorem2(&two_person::<Exact>(), q(1, 2), &Exact::zero()).unwrap();
    assert_eq!(two.estimand_lhs, Some(q(3, 5)));
    assert_eq!(two.estimand_rhs, Some(q(3, 5)));
    assert_eq!(
        brute_force_observables(&two_person::<Exact>(), &q(1, 2)),
        [q(13, 20), q(7, 20), q(3, 4), q(1, 4)]
    );
}
