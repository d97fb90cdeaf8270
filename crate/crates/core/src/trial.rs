//! Seeded simulation of randomized trials with noncompliance, and the
//! finite-sample Wald estimator.
//!
//! Each record is drawn independently: pick an individual uniformly with
//! replacement, flip the assignment coin, draw take from the individual's
//! take probability under that assignment, then draw cure from the cure
//! probability under the realized take. The realized outcome is always the
//! potential outcome whose antecedent actually holds, so for deterministic
//! populations every draw is degenerate.
//!
//! Record `i` uses its own ChaCha8 stream (`set_stream(i)` on a generator
//! seeded from the dataset seed), so the dataset does not depend on how the
//! records are split across threads.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bayesnet::{conditional, Assignment, CausalNet, ObservableQuery};
use crate::effects::date;
use crate::error::{Error, Result};
use crate::identification::iv_estimand;
use crate::numeric::{serde_scalar, Scalar};
use crate::population::{
    classify_deterministic, lift_deterministic, validate_stochastic, DeterministicIndividual,
    Population, StochasticIndividual, SubpopulationType,
};
use crate::{bayesnet, identification};

/// Observable part of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Observation {
    pub assign: bool,
    pub take: bool,
    pub cure: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct TrialRecord {
    pub assign: bool,
    pub take: bool,
    pub cure: bool,
    pub latent_u: Option<usize>,
}

impl TrialRecord {
    pub fn observation(&self) -> Observation {
        Observation {
            assign: self.assign,
            take: self.take,
            cure: self.cure,
        }
    }
}

/// Estimator input: observations only, no latent identities.
#[derive(Debug, Clone, Copy)]
pub struct ObservedData<'a>(&'a [Observation]);

impl<'a> ObservedData<'a> {
    pub fn new(observations: &'a [Observation]) -> Self {
        Self(observations)
    }

    pub fn as_slice(&self) -> &'a [Observation] {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    observations: Vec<Observation>,
    // Oracle side-channel, kept apart from `observations`.
    latent: Option<Vec<usize>>,
    seed: u64,
    pop_name: String,
    assign_prob: f64,
    population_size: usize,
}

impl TrialDataset {
    /// Assembles a dataset from explicit records. Either every record carries
    /// a latent tag or none does.
    pub fn from_records(
        records: &[TrialRecord],
        seed: u64,
        pop_name: impl Into<String>,
        assign_prob: f64,
        population_size: usize,
    ) -> Result<Self> {
        let observations = records.iter().map(TrialRecord::observation).collect();
        let tagged = records.iter().filter(|r| r.latent_u.is_some()).count();
        let latent = if tagged == 0 {
            None
        } else if tagged == records.len() {
            let tags: Vec<usize> = records.iter().filter_map(|r| r.latent_u).collect();
            if let Some(&bad) = tags.iter().find(|&&u| u >= population_size) {
                return Err(Error::IndexOutOfRange {
                    index: bad,
                    len: population_size,
                });
            }
            Some(tags)
        } else {
            return Err(Error::InvalidParams(
                "latent tags present on some records only".into(),
            ));
        };
        Ok(Self {
            observations,
            latent,
            seed,
            pop_name: pop_name.into(),
            assign_prob,
            population_size,
        })
    }

    pub fn observed(&self) -> ObservedData<'_> {
        ObservedData(&self.observations)
    }

    pub fn latent(&self) -> Option<&[usize]> {
        self.latent.as_deref()
    }

    pub fn without_latent(&self) -> Self {
        Self {
            latent: None,
            ..self.clone()
        }
    }

    pub fn records(&self) -> impl Iterator<Item = TrialRecord> + '_ {
        self.observations.iter().enumerate().map(|(i, o)| TrialRecord {
            assign: o.assign,
            take: o.take,
            cure: o.cure,
            latent_u: self.latent.as_ref().map(|l| l[i]),
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pop_name(&self) -> &str {
        &self.pop_name
    }

    pub fn assign_prob(&self) -> f64 {
        self.assign_prob
    }

    pub fn population_size(&self) -> usize {
        self.population_size
    }

    /// CSV with header `assign,take,cure[,latent_u]`.
    pub fn write_csv<W: Write>(&self, mut out: W, include_latent: bool) -> Result<()> {
        let with_latent = include_latent && self.latent.is_some();
        if with_latent {
            writeln!(out, "assign,take,cure,latent_u")?;
        } else {
            writeln!(out, "assign,take,cure")?;
        }
        for r in self.records() {
            let (a, t, c) = (u8::from(r.assign), u8::from(r.take), u8::from(r.cure));
            match r.latent_u.filter(|_| with_latent) {
                Some(u) => writeln!(out, "{a},{t},{c},{u}")?,
                None => writeln!(out, "{a},{t},{c}")?,
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`TrialDataset::write_csv`]; provenance comes from the manifest.
    pub fn read_csv<R: BufRead>(input: R, manifest: &DatasetManifest) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    column: 1,
                    message: "missing header".into(),
                })
            }
        };
        let with_latent = match header.trim() {
            "assign,take,cure" => false,
            "assign,take,cure,latent_u" => true,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    column: 1,
                    message: format!("unexpected header `{other}`"),
                })
            }
        };
        let mut records = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            let expected = if with_latent { 4 } else { 3 };
            if fields.len() != expected {
                return Err(Error::Parse {
                    line: idx + 1,
                    column: 1,
                    message: format!("expected {expected} fields, found {}", fields.len()),
                });
            }
            let bit = |col: usize| match fields[col] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Parse {
                    line: idx + 1,
                    column: col + 1,
                    message: format!("expected 0 or 1, found `{other}`"),
                }),
            };
            let latent_u = if with_latent {
                Some(fields[3].parse::<usize>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    column: 4,
                    message: format!("latent_u: {e}"),
                })?)
            } else {
                None
            };
            records.push(TrialRecord {
                assign: bit(0)?,
                take: bit(1)?,
                cure: bit(2)?,
                latent_u,
            });
        }
        Self::from_records(
            &records,
            manifest.seed,
            manifest.pop_name.clone(),
            manifest.assign_prob,
            manifest.population_size,
        )
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            seed: self.seed,
            pop_name: self.pop_name.clone(),
            assign_prob: self.assign_prob,
            n: self.len(),
            population_size: self.population_size,
            has_latent: self.latent.is_some(),
            sampling: "with-replacement".into(),
            rng: "chacha8, stream per record index".into(),
        }
    }
}

/// JSON sidecar recording how a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub pop_name: String,
    pub assign_prob: f64,
    pub n: usize,
    pub population_size: usize,
    pub has_latent: bool,
    pub sampling: String,
    pub rng: String,
}

#[derive(Debug, Clone, Copy)]
struct Params {
    t: f64,
    t_star: f64,
    c: f64,
    c_star: f64,
}

fn validate_assign_prob(assign_prob: f64) -> Result<()> {
    if !(assign_prob > 0.0 && assign_prob < 1.0) {
        return Err(Error::InvalidParams(format!(
            "assignment probability {assign_prob} must lie strictly between 0 and 1"
        )));
    }
    Ok(())
}

/// Draws `n` i.i.d. trial records from a stochastic population.
pub fn simulate_trial<S: Scalar>(
    pop: &Population<StochasticIndividual<S>>,
    assign_prob: f64,
    n: usize,
    seed: u64,
) -> Result<TrialDataset> {
    if n == 0 {
        return Err(Error::InvalidParams("sample size must be at least 1".into()));
    }
    validate_assign_prob(assign_prob)?;
    let params: Vec<Params> = pop
        .iter()
        .map(|p| Params {
            t: p.t().to_f64(),
            t_star: p.t_star().to_f64(),
            c: p.c().to_f64(),
            c_star: p.c_star().to_f64(),
        })
        .collect();
    let size = params.len();
    let base = ChaCha8Rng::seed_from_u64(seed);

    let (observations, latent): (Vec<Observation>, Vec<usize>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.clone();
            rng.set_stream(i as u64);
            let u = rng.random_range(0..size);
            let p = params[u];
            let assign = rng.random_bool(assign_prob);
            let take = rng.random_bool(if assign { p.t } else { p.t_star });
            let cure = rng.random_bool(if take { p.c } else { p.c_star });
            (Observation { assign, take, cure }, u)
        })
        .unzip();

    Ok(TrialDataset {
        observations,
        latent: Some(latent),
        seed,
        pop_name: pop.name().to_string(),
        assign_prob,
        population_size: size,
    })
}

/// Simulates a deterministic population through its single-card lift.
pub fn simulate_deterministic(
    pop: &Population<DeterministicIndividual>,
    assign_prob: f64,
    n: usize,
    seed: u64,
) -> Result<TrialDataset> {
    simulate_trial(&lift_deterministic::<f64>(pop), assign_prob, n, seed)
}

/// Records whose observed take/cure differ from the latent individual's
/// potential outcomes at the realized antecedents.
pub fn centering_violations(
    ds: &TrialDataset,
    pop: &Population<DeterministicIndividual>,
) -> Result<usize> {
    let latent = ds.latent().ok_or(Error::MissingLatentTags)?;
    let mut violations = 0;
    for (obs, &u) in ds.observations.iter().zip(latent) {
        let ind = pop.get(u)?;
        if obs.take != ind.take_if_assigned(obs.assign) || obs.cure != ind.cure_if_take(obs.take) {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Within one assignment group: shares cured, taking, and both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupMoments {
    pub cure: f64,
    pub take: f64,
    pub cure_and_take: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalConditionals {
    pub cure_given_assign1: f64,
    pub cure_given_assign0: f64,
    pub take_given_assign1: f64,
    pub take_given_assign0: f64,
    pub n_assign1: usize,
    pub n_assign0: usize,
    pub cure_and_take_given_assign1: f64,
    pub cure_and_take_given_assign0: f64,
}

impl EmpiricalConditionals {
    pub fn treatment(&self) -> GroupMoments {
        GroupMoments {
            cure: self.cure_given_assign1,
            take: self.take_given_assign1,
            cure_and_take: self.cure_and_take_given_assign1,
        }
    }

    pub fn control(&self) -> GroupMoments {
        GroupMoments {
            cure: self.cure_given_assign0,
            take: self.take_given_assign0,
            cure_and_take: self.cure_and_take_given_assign0,
        }
    }
}

/// Sample proportions of cure and take in each assignment group.
pub fn empirical_conditionals(data: ObservedData<'_>) -> Result<EmpiricalConditionals> {
    // [n, cured, took, both] per assignment arm
    let mut counts = [[0usize; 4]; 2];
    for o in data.as_slice() {
        let arm = &mut counts[usize::from(o.assign)];
        arm[0] += 1;
        arm[1] += usize::from(o.cure);
        arm[2] += usize::from(o.take);
        arm[3] += usize::from(o.cure && o.take);
    }
    for (assign, arm) in counts.iter().enumerate() {
        if arm[0] == 0 {
            return Err(Error::EmptyGroup {
                assign: assign as u8,
            });
        }
    }
    let share = |arm: &[usize; 4], k: usize| arm[k] as f64 / arm[0] as f64;
    let (c0, c1) = (&counts[0], &counts[1]);
    Ok(EmpiricalConditionals {
        cure_given_assign1: share(c1, 1),
        cure_given_assign0: share(c0, 1),
        take_given_assign1: share(c1, 2),
        take_given_assign0: share(c0, 2),
        n_assign1: c1[0],
        n_assign0: c0[0],
        cure_and_take_given_assign1: share(c1, 3),
        cure_and_take_given_assign0: share(c0, 3),
    })
}

/// Wald (IV) estimate from the observations.
pub fn iv_estimate(data: ObservedData<'_>, weak_tol: f64) -> Result<f64> {
    let e = empirical_conditionals(data)?;
    iv_estimand(
        &e.cure_given_assign1,
        &e.cure_given_assign0,
        &e.take_given_assign1,
        &e.take_given_assign0,
        &weak_tol,
    )
}

/// Delta-method standard error of the Wald ratio for two independent arms of
/// sizes `n_treat` and `n_control`, given the per-arm moments.
pub fn wald_standard_error(
    treat: &GroupMoments,
    control: &GroupMoments,
    n_treat: usize,
    n_control: usize,
) -> f64 {
    let (n1, n0) = (n_treat as f64, n_control as f64);
    let dy = treat.cure - control.cure;
    let dd = treat.take - control.take;
    let beta = dy / dd;
    let var = |p: f64| p * (1.0 - p);
    let var_dy = var(treat.cure) / n1 + var(control.cure) / n0;
    let var_dd = var(treat.take) / n1 + var(control.take) / n0;
    let cov = (treat.cure_and_take - treat.cure * treat.take) / n1
        + (control.cure_and_take - control.cure * control.take) / n0;
    ((var_dy - 2.0 * beta * cov + beta * beta * var_dd) / (dd * dd))
        .max(0.0)
        .sqrt()
}

/// Exact per-arm moments `(treatment, control)` of a net, by enumeration.
pub fn exact_group_moments<S: Scalar>(net: &CausalNet<S>) -> Result<(GroupMoments, GroupMoments)> {
    let arm = |a: bool| -> Result<GroupMoments> {
        let given = Assignment::default().assign(a);
        Ok(GroupMoments {
            cure: conditional(net, &ObservableQuery::cure_given_assign(a))?.to_f64(),
            take: conditional(net, &ObservableQuery::take_given_assign(a))?.to_f64(),
            cure_and_take: conditional(
                net,
                &ObservableQuery::new(Assignment::default().cure(true).take(true), given)?,
            )?
            .to_f64(),
        })
    };
    Ok((arm(true)?, arm(false)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LemmaCReport {
    pub treatment_size: usize,
    /// Treatment-group records that did not take.
    pub treatment_nontakers: usize,
    /// Treatment-group records whose individual is a never-taker.
    pub treatment_never_takers: usize,
    /// Treatment-group records in exactly one of the two sets.
    pub lemma_c_exceptions: usize,
    pub lemma_c_holds: bool,
    pub control_size: usize,
    /// Control-group records that took.
    pub control_takers: usize,
    /// Control-group records whose individual is an always-taker.
    pub control_always_takers: usize,
    pub lemma_c_prime_exceptions: usize,
    pub lemma_c_prime_holds: bool,
}

/// Checks record by record that treatment-group non-takers are exactly the
/// never-takers and control-group takers exactly the always-takers.
pub fn lemma_c_check(
    ds: &TrialDataset,
    pop: &Population<DeterministicIndividual>,
) -> Result<LemmaCReport> {
    let latent = ds.latent().ok_or(Error::MissingLatentTags)?;
    let mut r = LemmaCReport {
        treatment_size: 0,
        treatment_nontakers: 0,
        treatment_never_takers: 0,
        lemma_c_exceptions: 0,
        lemma_c_holds: true,
        control_size: 0,
        control_takers: 0,
        control_always_takers: 0,
        lemma_c_prime_exceptions: 0,
        lemma_c_prime_holds: true,
    };
    for (obs, &u) in ds.observations.iter().zip(latent) {
        let class = classify_deterministic(pop.get(u)?);
        if obs.assign {
            let observed = !obs.take;
            let latent_class = class == SubpopulationType::NeverTaker;
            r.treatment_size += 1;
            r.treatment_nontakers += usize::from(observed);
            r.treatment_never_takers += usize::from(latent_class);
            r.lemma_c_exceptions += usize::from(observed != latent_class);
        } else {
            let observed = obs.take;
            let latent_class = class == SubpopulationType::AlwaysTaker;
            r.control_size += 1;
            r.control_takers += usize::from(observed);
            r.control_always_takers += usize::from(latent_class);
            r.lemma_c_prime_exceptions += usize::from(observed != latent_class);
        }
    }
    r.lemma_c_holds = r.lemma_c_exceptions == 0;
    r.lemma_c_prime_holds = r.lemma_c_prime_exceptions == 0;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub assign_prob: f64,
    pub sample_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub weak_tol: f64,
}

/// One `(parameter, n)` point of a bias sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct SweepRow<S: Scalar> {
    pub parameter: f64,
    pub n: usize,
    pub no_defiers: bool,
    /// Exact IV ratio of the population's net.
    #[serde(with = "serde_scalar::option")]
    pub exact_estimand: Option<S>,
    /// Exact DATE (LATE for single-card populations).
    #[serde(with = "serde_scalar::option")]
    pub exact_target: Option<S>,
    #[serde(with = "serde_scalar::option")]
    pub gap: Option<S>,
    pub mc_mean: Option<f64>,
    pub mc_sd: Option<f64>,
    /// Seeds where the sample IV ratio was undefined.
    pub mc_failures: usize,
}

/// Runs the exact and simulated IV analysis at every parameter point of a
/// population family, for every sample size, averaged over the seeds.
pub fn bias_sweep<S, F>(
    parameters: &[f64],
    family: F,
    config: &SweepConfig,
) -> Result<Vec<SweepRow<S>>>
where
    S: Scalar,
    F: Fn(f64) -> Result<Population<StochasticIndividual<S>>>,
{
    validate_assign_prob(config.assign_prob)?;
    let assign_prob = S::parse_text(&config.assign_prob.to_text())
        .ok_or_else(|| Error::InvalidParams("assignment probability".into()))?;
    let tol = S::default_tol();
    let mut rows = Vec::new();
    for &param in parameters {
        let pop = family(param)?;
        let net = bayesnet::build_net(&pop, assign_prob.clone())?;
        let observables = bayesnet::closed_form_observables(&net);
        let exact_estimand =
            identification::iv_from_observables(&observables, &S::default_weak_tol()).ok();
        let exact_target = date(&pop, &tol).ok().map(|r| r.value);
        let gap = match (&exact_estimand, &exact_target) {
            (Some(e), Some(t)) => Some((e.clone() - t.clone()).abs()),
            _ => None,
        };
        let no_defiers = validate_stochastic(&pop, &tol).no_defiers;
        for &n in &config.sample_sizes {
            let mut estimates = Vec::with_capacity(config.seeds.len());
            let mut failures = 0;
            for &seed in &config.seeds {
                let ds = simulate_trial(&pop, config.assign_prob, n, seed)?;
                match iv_estimate(ds.observed(), config.weak_tol) {
                    Ok(v) => estimates.push(v),
                    Err(Error::WeakInstrument { .. } | Error::EmptyGroup { .. }) => failures += 1,
                    Err(e) => return Err(e),
                }
            }
            let (mc_mean, mc_sd) = mean_sd(&estimates);
            rows.push(SweepRow {
                parameter: param,
                n,
                no_defiers,
                exact_estimand: exact_estimand.clone(),
                exact_target: exact_target.clone(),
                gap: gap.clone(),
                mc_mean,
                mc_sd,
                mc_failures: failures,
            });
        }
    }
    rows.sort_by(|a, b| a.parameter.total_cmp(&b.parameter).then(a.n.cmp(&b.n)));
    Ok(rows)
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}
