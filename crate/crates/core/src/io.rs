//! Population files and atomic output.
//!
//! ```json
//! { "name": "trial", "kind": "stochastic",
//!   "individuals": [ { "t": "1", "t_star": {"num": 0, "den": 1},
//!                      "c": {"deck": [1,1,1,1,1,1,1,1,0,0]}, "c_star": "0.2" } ] }
//! ```
//!
//! Deterministic individuals carry `take_if_assigned1`, `take_if_assigned0`,
//! `cure_if_take1`, `cure_if_take0` as 0/1. Stochastic probabilities may be a
//! decimal or `"num/den"` string, a JSON number, a `{num, den}` pair or a
//! `{deck: [...]}` of 0/1 cards.
//!
//! Syntax errors, wrong value types and unparseable numbers are reported as
//! [`Error::Parse`] with line and column; well-formed values that break the
//! model (a probability of 1.2, an empty deck) as [`Error::SchemaViolation`].

use std::fmt;
use std::path::Path;

use serde::de::{self, DeserializeSeed, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::numeric::{Exact, NumericMode, Scalar};
use crate::population::{
    AnyPopulation, Deck, DeterministicIndividual, Population, PopulationKind, StochasticIndividual,
};

const DETERMINISTIC_FIELDS: [&str; 4] = [
    "take_if_assigned1",
    "take_if_assigned0",
    "cure_if_take1",
    "cure_if_take0",
];
const STOCHASTIC_FIELDS: [&str; 4] = ["t", "t_star", "c", "c_star"];

#[derive(Debug, Clone, PartialEq)]
enum RawProb {
    Text(String),
    Deck(Vec<bool>),
}

#[derive(Debug, Default)]
struct RawIndividual {
    bits: [Option<bool>; 4],
    probs: [Option<RawProb>; 4],
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    name: String,
    kind: RawKind,
    individuals: RawIndividuals,
}

#[derive(Debug)]
struct RawIndividuals(Vec<RawIndividual>);

impl<'de> Deserialize<'de> for RawIndividuals {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct SeqVisitor;

        impl<'de> Visitor<'de> for SeqVisitor {
            type Value = RawIndividuals;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an array of individuals")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some(ind) = seq.next_element_seed(IndividualSeed { index: out.len() })? {
                    out.push(ind);
                }
                Ok(RawIndividuals(out))
            }
        }

        d.deserialize_seq(SeqVisitor)
    }
}

struct IndividualSeed {
    index: usize,
}

impl<'de> DeserializeSeed<'de> for IndividualSeed {
    type Value = RawIndividual;

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> std::result::Result<Self::Value, D::Error> {
        d.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for IndividualSeed {
    type Value = RawIndividual;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "an object for individuals[{}]", self.index)
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
        let mut raw = RawIndividual::default();
        while let Some(key) = map.next_key::<String>()? {
            let value: Value = map.next_value()?;
            let path = format!("individuals[{}].{key}", self.index);
            if let Some(slot) = DETERMINISTIC_FIELDS.iter().position(|f| *f == key) {
                raw.bits[slot] = Some(parse_bit(&value).map_err(|m| de::Error::custom(format!("{path}: {m}")))?);
            } else if let Some(slot) = STOCHASTIC_FIELDS.iter().position(|f| *f == key) {
                raw.probs[slot] = Some(parse_prob(&value).map_err(|m| de::Error::custom(format!("{path}: {m}")))?);
            } else {
                return Err(de::Error::custom(format!("{path}: unknown field")));
            }
        }
        Ok(raw)
    }
}

fn parse_bit(value: &Value) -> std::result::Result<bool, String> {
    match value {
        Value::Bool(b) => Ok(*b),
        Value::Number(n) if n.as_u64() == Some(0) => Ok(false),
        Value::Number(n) if n.as_u64() == Some(1) => Ok(true),
        other => Err(format!("expected 0 or 1, found {other}")),
    }
}

fn integer_text(value: &Value) -> Option<String> {
    match value {
        Value::Number(n) if n.is_i64() || n.is_u64() => Some(n.to_string()),
        Value::String(s) if !s.is_empty() && s.trim_start_matches('-').chars().all(|c| c.is_ascii_digit()) => {
            Some(s.clone())
        }
        _ => None,
    }
}

fn parse_prob(value: &Value) -> std::result::Result<RawProb, String> {
    let checked = |text: String| {
        if Exact::parse_text(&text).is_some() {
            Ok(RawProb::Text(text))
        } else {
            Err(format!("cannot parse `{text}` as a probability"))
        }
    };
    match value {
        Value::String(s) => checked(s.trim().to_string()),
        Value::Number(n) => checked(n.to_string()),
        Value::Object(obj) => {
            if let Some(cards) = obj.get("deck") {
                if obj.len() != 1 {
                    return Err("a deck object takes only the `deck` key".into());
                }
                let Value::Array(cards) = cards else {
                    return Err("deck must be an array of 0/1 cards".into());
                };
                let cards = cards
                    .iter()
                    .map(parse_bit)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|m| format!("deck card: {m}"))?;
                return Ok(RawProb::Deck(cards));
            }
            match (obj.get("num"), obj.get("den"), obj.len()) {
                (Some(num), Some(den), 2) => {
                    let num = integer_text(num).ok_or("num must be an integer")?;
                    let den = integer_text(den).ok_or("den must be an integer")?;
                    checked(format!("{num}/{den}"))
                }
                _ => Err("expected {num, den} or {deck}".into()),
            }
        }
        other => Err(format!(
            "expected a decimal string, \"num/den\", {{num, den}} or {{deck}}, found {other}"
        )),
    }
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::SchemaViolation {
        field: field.into(),
        message: message.into(),
    }
}

fn to_scalar<S: Scalar>(raw: &RawProb, path: &str) -> Result<S> {
    let value = match raw {
        RawProb::Text(text) => {
            S::parse_text(text).ok_or_else(|| schema(path, format!("`{text}` is not a finite number")))?
        }
        RawProb::Deck(cards) => Deck::from_cards(cards)
            .map_err(|e| schema(path, e.to_string()))?
            .proportion(),
    };
    if !value.is_probability() {
        return Err(schema(path, format!("probability {} outside [0, 1]", value.to_text())));
    }
    Ok(value)
}

/// Parses population JSON text.
pub fn parse_population<S: Scalar>(text: &str) -> Result<AnyPopulation<S>> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if raw.individuals.0.is_empty() {
        return Err(schema("individuals", "population must have at least one individual"));
    }
    let reject = |present: bool, path: String, kind: &str| {
        if present {
            Err(schema(path, format!("not a field of a {kind} individual")))
        } else {
            Ok(())
        }
    };
    match raw.kind {
        RawKind::Deterministic => {
            let mut individuals = Vec::with_capacity(raw.individuals.0.len());
            for (i, ind) in raw.individuals.0.iter().enumerate() {
                for (slot, field) in STOCHASTIC_FIELDS.iter().enumerate() {
                    reject(ind.probs[slot].is_some(), format!("individuals[{i}].{field}"), "deterministic")?;
                }
                let mut bits = [false; 4];
                for (slot, field) in DETERMINISTIC_FIELDS.iter().enumerate() {
                    bits[slot] = ind.bits[slot]
                        .ok_or_else(|| schema(format!("individuals[{i}].{field}"), "missing field"))?;
                }
                individuals.push(DeterministicIndividual::new(bits[0], bits[1], bits[2], bits[3]));
            }
            Ok(AnyPopulation::Deterministic(Population::new(raw.name, individuals)?))
        }
        RawKind::Stochastic => {
            let mut individuals = Vec::with_capacity(raw.individuals.0.len());
            for (i, ind) in raw.individuals.0.iter().enumerate() {
                for (slot, field) in DETERMINISTIC_FIELDS.iter().enumerate() {
                    reject(ind.bits[slot].is_some(), format!("individuals[{i}].{field}"), "stochastic")?;
                }
                let mut values = Vec::with_capacity(4);
                for (slot, field) in STOCHASTIC_FIELDS.iter().enumerate() {
                    let path = format!("individuals[{i}].{field}");
                    let raw = ind.probs[slot]
                        .as_ref()
                        .ok_or_else(|| schema(path.clone(), "missing field"))?;
                    values.push(to_scalar::<S>(raw, &path)?);
                }
                let [t, ts, c, cs]: [S; 4] = values.try_into().expect("four fields");
                individuals.push(StochasticIndividual::new(t, ts, c, cs)?);
            }
            Ok(AnyPopulation::Stochastic(Population::new(raw.name, individuals)?))
        }
    }
}

pub fn load_population<S: Scalar>(path: impl AsRef<Path>) -> Result<AnyPopulation<S>> {
    let text = std::fs::read_to_string(path)?;
    parse_population(&text)
}

fn prob_json<S: Scalar>(v: &S) -> Value {
    match S::MODE {
        NumericMode::Float => Value::String(v.to_text()),
        NumericMode::Rational => {
            let text = v.to_text();
            match text.split_once('/') {
                Some((num, den)) => {
                    let as_json = |s: &str| {
                        s.parse::<i64>()
                            .map(Value::from)
                            .unwrap_or_else(|_| Value::String(s.to_string()))
                    };
                    json!({ "num": as_json(num), "den": as_json(den) })
                }
                None => Value::String(text),
            }
        }
    }
}

pub fn population_to_json<S: Scalar>(pop: &AnyPopulation<S>) -> Value {
    let individuals: Vec<Value> = match pop {
        AnyPopulation::Deterministic(p) => p
            .iter()
            .map(|i| {
                json!({
                    "take_if_assigned1": u8::from(i.take_if_assigned1),
                    "take_if_assigned0": u8::from(i.take_if_assigned0),
                    "cure_if_take1": u8::from(i.cure_if_take1),
                    "cure_if_take0": u8::from(i.cure_if_take0),
                })
            })
            .collect(),
        AnyPopulation::Stochastic(p) => p
            .iter()
            .map(|i| {
                json!({
                    "t": prob_json(i.t()),
                    "t_star": prob_json(i.t_star()),
                    "c": prob_json(i.c()),
                    "c_star": prob_json(i.c_star()),
                })
            })
            .collect(),
    };
    let kind = match pop.kind() {
        PopulationKind::Deterministic => "deterministic",
        PopulationKind::Stochastic => "stochastic",
    };
    json!({ "name": pop.name(), "kind": kind, "individuals": individuals })
}

pub fn population_to_string<S: Scalar>(pop: &AnyPopulation<S>) -> String {
    let mut text = serde_json::to_string_pretty(&population_to_json(pop)).expect("JSON values serialize");
    text.push('\n');
    text
}

pub fn save_population<S: Scalar>(pop: &AnyPopulation<S>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, population_to_string(pop).as_bytes())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    use std::io::Write;

    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
