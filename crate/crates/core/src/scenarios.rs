//! Population generators.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Scalar;
use crate::population::{AnyPopulation, DeterministicIndividual, Population, StochasticIndividual};

const FRACTION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Exact class counts with random cure outcomes.
    DeterministicMix,
    /// All four probabilities uniform on a rational grid.
    StochasticRandom,
    /// As `StochasticRandom`, with `t_star <= t` for everyone.
    StochasticMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassFractions {
    pub complier: f64,
    pub defier: f64,
    pub always_taker: f64,
    pub never_taker: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub size: usize,
    /// Used by `DeterministicMix` only. Slots left over when the fractions
    /// sum to less than one are filled with never-takers.
    pub fractions: ClassFractions,
    pub seed: u64,
    /// Probabilities are drawn as `k / grid_denominator`.
    pub grid_denominator: u32,
}

impl GeneratorSpec {
    pub fn deterministic_mix(size: usize, fractions: ClassFractions, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::DeterministicMix,
            size,
            fractions,
            seed,
            grid_denominator: 1000,
        }
    }

    pub fn stochastic(kind: GeneratorKind, size: usize, seed: u64) -> Self {
        Self {
            kind,
            size,
            fractions: ClassFractions::default(),
            seed,
            grid_denominator: 1000,
        }
    }
}

/// Resolved integer class counts `[complier, defier, always, never]`.
pub fn class_counts(size: usize, fractions: &ClassFractions) -> Result<[usize; 4]> {
    let fs = [
        ("complier", fractions.complier),
        ("defier", fractions.defier),
        ("always_taker", fractions.always_taker),
        ("never_taker", fractions.never_taker),
    ];
    let mut counts = [0usize; 4];
    for (slot, (label, f)) in counts.iter_mut().zip(fs) {
        if !f.is_finite() || f < 0.0 {
            return Err(Error::InvalidFractions(format!("{label} fraction {f} is negative")));
        }
        let exact = f * size as f64;
        let rounded = exact.round();
        if (exact - rounded).abs() > FRACTION_SLACK * size.max(1) as f64 {
            return Err(Error::InvalidFractions(format!(
                "{label} fraction {f} of {size} is not a whole number of individuals"
            )));
        }
        *slot = rounded as usize;
    }
    let total: usize = counts.iter().sum();
    if total > size {
        return Err(Error::InvalidFractions(format!(
            "fractions sum to more than one ({total} of {size} individuals)"
        )));
    }
    counts[3] += size - total;
    Ok(counts)
}

pub fn generate_population<S: Scalar>(spec: &GeneratorSpec) -> Result<AnyPopulation<S>> {
    if spec.size == 0 {
        return Err(Error::InvalidParams("population size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        GeneratorKind::DeterministicMix => {
            let counts = class_counts(spec.size, &spec.fractions)?;
            let behaviours = [(true, false), (false, true), (true, true), (false, false)];
            let mut individuals = Vec::with_capacity(spec.size);
            for (&(take1, take0), &count) in behaviours.iter().zip(&counts) {
                for _ in 0..count {
                    let cure1 = rng.random_bool(0.5);
                    let cure0 = rng.random_bool(0.5);
                    individuals.push(DeterministicIndividual::new(take1, take0, cure1, cure0));
                }
            }
            individuals.shuffle(&mut rng);
            let name = format!("deterministic_mix-n{}-s{}", spec.size, spec.seed);
            Ok(AnyPopulation::Deterministic(Population::new(name, individuals)?))
        }
        GeneratorKind::StochasticRandom | GeneratorKind::StochasticMonotone => {
            if spec.grid_denominator == 0 {
                return Err(Error::InvalidParams("grid denominator must be positive".into()));
            }
            let den = i64::from(spec.grid_denominator);
            let monotone = spec.kind == GeneratorKind::StochasticMonotone;
            let draw = |rng: &mut ChaCha8Rng| rng.random_range(0..=den);
            let individuals = (0..spec.size)
                .map(|_| {
                    let (mut t, mut ts) = (draw(&mut rng), draw(&mut rng));
                    if monotone && ts > t {
                        std::mem::swap(&mut t, &mut ts);
                    }
                    let (c, cs) = (draw(&mut rng), draw(&mut rng));
                    StochasticIndividual::new(
                        S::from_ratio(t, den),
                        S::from_ratio(ts, den),
                        S::from_ratio(c, den),
                        S::from_ratio(cs, den),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let tag = if monotone { "stochastic_monotone" } else { "stochastic_random" };
            let name = format!("{tag}-n{}-s{}", spec.size, spec.seed);
            Ok(AnyPopulation::Stochastic(Population::new(name, individuals)?))
        }
    }
}

/// Deterministic family for bias experiments.
///
/// Half of the `size` individuals (rounded down) are compliers helped by the
/// treatment, `defier_fraction * size` are defiers harmed by it, the rest are
/// never-takers with no effect. The IV ratio is `(C + D) / (C - D)` while LATE
/// stays at 1.
pub fn defier_family(size: usize, defier_fraction: f64) -> Result<Population<DeterministicIndividual>> {
    let compliers = size / 2;
    let fractions = ClassFractions {
        defier: defier_fraction,
        ..Default::default()
    };
    let defiers = class_counts(size, &fractions)?[1];
    if compliers + defiers > size {
        return Err(Error::InvalidFractions(format!(
            "defier fraction {defier_fraction} leaves no room for {compliers} compliers"
        )));
    }
    let mut individuals = Vec::with_capacity(size);
    individuals.extend(std::iter::repeat_n(DeterministicIndividual::from_bits(1, 0, 1, 0), compliers));
    individuals.extend(std::iter::repeat_n(DeterministicIndividual::from_bits(0, 1, 0, 1), defiers));
    individuals.extend(std::iter::repeat_n(
        DeterministicIndividual::from_bits(0, 0, 0, 0),
        size - compliers - defiers,
    ));
    Population::new(format!("defier-family-{defier_fraction}"), individuals)
}

/// Parses `start:stop:step` into the inclusive grid `start, start+step, ..., stop`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = |why: &str| Error::InvalidParams(format!("grid `{spec}`: {why}"));
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad("expected numbers")))
        .collect::<Result<Vec<_>>>()?;
    match nums[..] {
        [single] => Ok(vec![single]),
        [start, stop, step] => {
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(bad("need step > 0 and stop >= start"));
            }
            let steps = ((stop - start) / step + FRACTION_SLACK).floor() as usize;
            // snap to 12 decimals so 3 * 0.05 prints as 0.15
            Ok((0..=steps)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        _ => Err(bad("expected `value` or `start:stop:step`")),
    }
}
