//! The invariant suite behind `compliance-iv verify`.

use compliance_iv::bayesnet::{
    build_net, closed_form_observables, enumerated_observables, verify_markov_factorization,
};
use compliance_iv::effects::{ate, ate_by_proportions, date, date_weights, late, late_via_lemma_a};
use compliance_iv::identification::{
    iv_from_observables, subpopulation_proportions_from_observables, verify_theorem1,
    verify_theorem2,
};
use compliance_iv::io::{parse_population, population_to_string};
use compliance_iv::population::{classify_deterministic, lift_deterministic, SubpopulationType};
use compliance_iv::trial::{centering_violations, lemma_c_check, simulate_deterministic, simulate_trial};
use compliance_iv::{AnyPopulation, Result, Scalar};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

struct Suite(Vec<Check>);

impl Suite {
    fn record(&mut self, name: &'static str, ok: bool, detail: impl Into<String>) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.0.push(Check { name, status, detail: detail.into() });
    }

    fn skip(&mut self, name: &'static str, why: impl Into<String>) {
        self.0.push(Check { name, status: Status::Skip, detail: why.into() });
    }
}

fn close<S: Scalar>(a: &S, b: &S, tol: &S) -> bool {
    (a.clone() - b.clone()).abs() <= *tol
}

const P_GRID: [(i64, i64); 5] = [(1, 10), (3, 10), (1, 2), (7, 10), (9, 10)];

/// Runs every check that applies to the population's kind.
pub fn run_suite<S: Scalar>(
    pop: &AnyPopulation<S>,
    assign_prob: &S,
    seed: u64,
    sim_n: usize,
) -> Result<Vec<Check>> {
    let tol = S::default_tol();
    let mut s = Suite(Vec::new());
    let stoch = pop.to_stochastic();

    let v = pop.validate(&tol);
    s.record(
        "existence_of_compliers",
        v.exists_complier,
        format!("{} compliers", v.complier_count),
    );
    s.record("no_defiers", v.no_defiers, format!("{} defiers", v.defier_count));

    let report = match pop {
        AnyPopulation::Deterministic(p) => verify_theorem1(p, assign_prob.clone())?,
        AnyPopulation::Stochastic(p) => verify_theorem2(p, assign_prob.clone(), &tol)?,
    };
    if report.applicable() {
        let gap = report.abs_gap.clone();
        s.record(
            "identification_gap",
            report.identified_within(&tol),
            gap.map_or("undefined".into(), |g| format!("gap {}", g.to_text())),
        );
    } else {
        s.skip("identification_gap", "compliance assumptions fail");
    }

    let net = build_net(&stoch, assign_prob.clone())?;
    let closed = closed_form_observables(&net);
    let enumerated = enumerated_observables(&net)?;
    let pairs = [
        (&closed.cure_given_assign1, &enumerated.cure_given_assign1),
        (&closed.cure_given_assign0, &enumerated.cure_given_assign0),
        (&closed.take_given_assign1, &enumerated.take_given_assign1),
        (&closed.take_given_assign0, &enumerated.take_given_assign0),
    ];
    s.record(
        "closed_form_matches_enumeration",
        pairs.iter().all(|(a, b)| close(*a, *b, &tol)),
        "four observables",
    );

    let total = net
        .joint_table()
        .into_iter()
        .fold(S::zero(), |acc, e| acc + e.prob);
    s.record(
        "joint_normalized",
        close(&total, &S::one(), &tol),
        format!("sum {}", total.to_text()),
    );

    let markov = verify_markov_factorization(&net).max_deviation();
    s.record(
        "markov_factorization",
        markov <= tol,
        format!("max deviation {}", markov.to_text()),
    );

    let mut ratios = Vec::new();
    for (num, den) in P_GRID {
        let net = build_net(&stoch, S::from_ratio(num, den))?;
        ratios.push(iv_from_observables(&enumerated_observables(&net)?, &S::default_weak_tol()).ok());
    }
    match ratios.into_iter().collect::<Option<Vec<_>>>() {
        Some(vals) => s.record(
            "assign_prob_invariance",
            vals.windows(2).all(|w| close(&w[0], &w[1], &tol)),
            "assign_prob 0.1 to 0.9",
        ),
        None => s.skip("assign_prob_invariance", "IV ratio undefined"),
    }

    match date_weights(&stoch, &tol) {
        Ok(w) => {
            let sum = w.iter().fold(S::zero(), |acc, x| acc + x.clone());
            s.record(
                "date_weights",
                w.iter().all(|x| *x >= S::zero()) && close(&sum, &S::one(), &tol),
                format!("sum {}", sum.to_text()),
            );
        }
        Err(_) => s.skip("date_weights", "no compliers"),
    }

    let in_range = |x: &S| x.abs() <= S::one();
    let mut effects = Vec::new();
    if let Ok(d) = date(&stoch, &tol) {
        effects.push(d.value);
    }
    if let AnyPopulation::Deterministic(p) = pop {
        effects.push(ate::<S>(p));
        if let Ok(l) = late::<S>(p) {
            effects.push(l.value);
        }
    }
    s.record(
        "effects_in_range",
        effects.iter().all(in_range),
        format!("{} effects checked", effects.len()),
    );

    if let AnyPopulation::Deterministic(p) = pop {
        let a: S = ate(p);
        s.record("ate_identity", a == ate_by_proportions::<S>(p), format!("ATE {}", a.to_text()));

        match (late::<S>(p), late_via_lemma_a::<S>(p)) {
            (Ok(l), Ok(a)) => {
                s.record("late_via_lemma_a", l.value == a, format!("LATE {}", a.to_text()));
                let d = date(&lift_deterministic::<S>(p), &tol)?;
                s.record(
                    "date_reduces_to_late",
                    close(&d.value, &l.value, &tol),
                    format!("DATE {}", d.value.to_text()),
                );
            }
            _ => {
                s.skip("late_via_lemma_a", "no compliers");
                s.skip("date_reduces_to_late", "no compliers");
            }
        }

        if v.no_defiers {
            let obs = &report.observables;
            let share = |class| {
                let k = p.iter().filter(|i| classify_deterministic(i) == class).count();
                S::from_ratio(k as i64, p.len() as i64)
            };
            let ok = match subpopulation_proportions_from_observables(
                &obs.take_given_assign1,
                &obs.take_given_assign0,
            ) {
                Ok(r) => {
                    close(&r.p_complier, &share(SubpopulationType::Complier), &tol)
                        && close(&r.p_always, &share(SubpopulationType::AlwaysTaker), &tol)
                        && close(&r.p_never, &share(SubpopulationType::NeverTaker), &tol)
                }
                Err(_) => false,
            };
            s.record("proportion_recovery", ok, "shares from take rates");
        } else {
            s.skip("proportion_recovery", "defiers present");
        }

        let ds = simulate_deterministic(p, assign_prob.to_f64(), sim_n, seed)?;
        let violations = centering_violations(&ds, p)?;
        s.record("simulation_centering", violations == 0, format!("{violations} of {sim_n} records"));
        if v.no_defiers {
            let lc = lemma_c_check(&ds, p)?;
            s.record(
                "takers_match_latent_classes",
                lc.lemma_c_holds && lc.lemma_c_prime_holds,
                format!(
                    "{} + {} exceptions",
                    lc.lemma_c_exceptions, lc.lemma_c_prime_exceptions
                ),
            );
        } else {
            s.skip("takers_match_latent_classes", "defiers present");
        }
    }

    let a = simulate_trial(&stoch, assign_prob.to_f64(), sim_n, seed)?;
    let b = simulate_trial(&stoch, assign_prob.to_f64(), sim_n, seed)?;
    s.record("simulation_reproducible", a == b, format!("seed {seed}, n {sim_n}"));

    let round_trip = parse_population::<S>(&population_to_string(pop))?;
    s.record("serialization_round_trip", &round_trip == pop, pop.kind().to_string());

    Ok(s.0)
}
