//! Seeded synthetic corpora with planted oracle markers.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{AnnotatedChain, ChainLabel, STEP_DELIMITER};
use crate::taxonomy::ErrorCode;
use crate::verifier::OracleScript;

/// Bumped whenever the template bank changes, since corpora are only
/// reproducible for a fixed bank.
pub const TEMPLATE_VERSION: u32 = 1;

const BUILTIN_PRESETS: &str = include_str!("presets.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionRule {
    /// Any step except the first and last (when the chain has at least three).
    UniformInterior,
    /// The last quarter of the chain.
    Tail,
    /// The first quarter of the chain.
    Head,
}

impl PositionRule {
    /// Inclusive index range for a chain of `len` steps.
    pub fn range(self, len: usize) -> (usize, usize) {
        let quarter = len.div_ceil(4).max(1);
        match self {
            PositionRule::UniformInterior if len >= 3 => (1, len - 2),
            PositionRule::UniformInterior => (0, len - 1),
            PositionRule::Head => (0, quarter - 1),
            PositionRule::Tail => (len - quarter, len - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignatureError {
    #[error("preset `{0}`: probabilities sum to {1}, expected 1")]
    BadSum(String, f64),
    #[error("preset `{0}`: probability for {1} is negative or not finite")]
    BadProbability(String, ErrorCode),
    #[error("preset `{0}`: chain_length bounds must satisfy 2 <= min <= max")]
    BadLength(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSpec {
    pub name: String,
    pub type_distribution: BTreeMap<ErrorCode, f64>,
    pub chain_length_range: (usize, usize),
    pub error_position_rule: PositionRule,
    /// Codes whose probabilities are fill-in values rather than measured shares.
    #[serde(default)]
    pub approximate: Vec<ErrorCode>,
}

impl SignatureSpec {
    pub fn validate(&self) -> Result<(), SignatureError> {
        for (&code, &p) in &self.type_distribution {
            if !p.is_finite() || p < 0.0 {
                return Err(SignatureError::BadProbability(self.name.clone(), code));
            }
        }
        let sum: f64 = self.type_distribution.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SignatureError::BadSum(self.name.clone(), sum));
        }
        let (lo, hi) = self.chain_length_range;
        if lo < 2 || lo > hi {
            return Err(SignatureError::BadLength(self.name.clone()));
        }
        Ok(())
    }

    pub fn probability(&self, code: ErrorCode) -> f64 {
        self.type_distribution.get(&code).copied().unwrap_or(0.0)
    }
}

#[derive(Deserialize)]
struct PresetFile {
    #[allow(dead_code)]
    template_version: Option<u32>,
    preset: BTreeMap<String, PresetEntry>,
}

#[derive(Deserialize)]
struct PresetEntry {
    chain_length: (usize, usize),
    error_position: PositionRule,
    #[serde(default)]
    approximate: Vec<ErrorCode>,
    types: BTreeMap<ErrorCode, f64>,
}

/// A named collection of [`SignatureSpec`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct Presets(BTreeMap<String, SignatureSpec>);

impl Presets {
    /// The five shipped presets: omnimath, badchain, preemptive, overthink, deadlock.
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_PRESETS).expect("built-in presets are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, SignatureError> {
        let file: PresetFile = toml::from_str(text).map_err(|e| SignatureError::Parse(e.to_string()))?;
        let mut out = BTreeMap::new();
        for (name, entry) in file.preset {
            let spec = SignatureSpec {
                name: name.clone(),
                type_distribution: entry.types,
                chain_length_range: entry.chain_length,
                error_position_rule: entry.error_position,
                approximate: entry.approximate,
            };
            spec.validate()?;
            out.insert(name, spec);
        }
        Ok(Self(out))
    }

    pub fn get(&self, name: &str) -> Result<&SignatureSpec, SignatureError> {
        self.0
            .get(name)
            .ok_or_else(|| SignatureError::UnknownPreset(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SignatureSpec> {
        self.0.values()
    }
}

struct Numbers {
    a: u32,
    b: u32,
    c: u32,
}

impl Numbers {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            a: rng.gen_range(3..60),
            b: rng.gen_range(2..30),
            c: rng.gen_range(2..9),
        }
    }
}

fn problem_text(rng: &mut ChaCha8Rng, n: &Numbers) -> String {
    match rng.gen_range(0..4) {
        0 => format!(
            "A shop has {} apples and receives {} more each day for {} days. How many apples does it have?",
            n.a, n.b, n.c
        ),
        1 => format!(
            "A train travels {} km, then {} km more, {} times over. What distance does it cover in total?",
            n.a, n.b, n.c
        ),
        2 => format!(
            "Mia saves {} coins, spends {} of them, then saves {} coins per week. How many coins does she have after one week?",
            n.a + n.b, n.b, n.c
        ),
        _ => format!(
            "There are {} boxes with {} pens each and {} loose pens. How many pens are there?",
            n.c, n.a, n.b
        ),
    }
}

fn filler_step(rng: &mut ChaCha8Rng, n: &Numbers, i: usize) -> String {
    let x = n.a + (i as u32) * n.b;
    match rng.gen_range(0..8) {
        0 => format!("We start from the given quantity of {} units.", n.a),
        1 => format!("Adding {} gives {} + {} = {}.", n.b, x, n.b, x + n.b),
        2 => format!("Multiplying {} by {} gives {}.", n.b, n.c, n.b * n.c),
        3 => format!("Subtracting {} from {} leaves {}.", n.b, x + n.b, x),
        4 => format!("The running total is now {x}."),
        5 => "Next we consider how the remaining quantities combine.".to_string(),
        6 => format!("Each of the {} groups contributes {} units.", n.c, n.b),
        _ => format!("Writing the partial result down, we keep {x} for the next step."),
    }
}

fn error_step(code: ErrorCode, n: &Numbers) -> String {
    let t = n.a + n.b;
    match code {
        ErrorCode::Misinterpretation => {
            "Reading the question again, it is really asking for the difference rather than the total.".into()
        }
        ErrorCode::MissingConstraints => format!("We can ignore the limit of {} items per box here.", n.c),
        ErrorCode::SymbolMapping => format!("Let x stand for the number of boxes, so x = {} items.", n.a),
        ErrorCode::LogicalFallacy => format!(
            "Every total we computed so far was even and {} is even, so {} must be the final answer.",
            2 * t,
            2 * t
        ),
        ErrorCode::Calculation => format!("Adding {} and {} gives {}.", n.a, n.b, t + 1),
        ErrorCode::Inconsistency => format!("Earlier we found {t}, but the total is actually {} instead.", t + n.c),
        ErrorCode::ReasoningLoop => "Let me recompute the total from the beginning once more.".into(),
        ErrorCode::GoalDeviation => {
            "Before continuing, it is worth reviewing the history of the units used here.".into()
        }
        ErrorCode::PrematureConclusion => format!("So the answer is clearly {t} and no further work is needed."),
    }
}

/// Generate `n` labeled chains, each with exactly one planted marker.
///
/// Loop plants (3a) repeat the marked step's text, without the marker, in the
/// two following steps; the chain is extended when those would run past the
/// end, so loop chains can exceed the upper length bound by up to two steps.
pub fn generate_synthetic(spec: &SignatureSpec, seed: u64, n: usize) -> Vec<AnnotatedChain> {
    generate_with_script(spec, seed, n, &OracleScript::default())
}

pub fn generate_with_script(spec: &SignatureSpec, seed: u64, n: usize, script: &OracleScript) -> Vec<AnnotatedChain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = ErrorCode::ALL.iter().map(|&c| spec.probability(c)).collect();
    let type_dist = WeightedIndex::new(&weights).expect("validated distribution has positive mass");
    let (lo, hi) = spec.chain_length_range;

    (0..n)
        .map(|i| {
            let numbers = Numbers::draw(&mut rng);
            let problem = problem_text(&mut rng, &numbers);
            let len = rng.gen_range(lo..=hi);
            let code = ErrorCode::ALL[type_dist.sample(&mut rng)];
            let (first, last) = spec.error_position_rule.range(len);
            let position = rng.gen_range(first..=last);

            let mut steps: Vec<String> = (0..len).map(|k| filler_step(&mut rng, &numbers, k)).collect();
            let planted = error_step(code, &numbers);
            steps[position] = format!("{planted} {}", script.marker(code));
            if code == ErrorCode::ReasoningLoop {
                for k in position + 1..=position + 2 {
                    if k < steps.len() {
                        steps[k] = planted.clone();
                    } else {
                        steps.push(planted.clone());
                    }
                }
            }
            AnnotatedChain {
                id: format!("{}-s{seed}-{i:05}", spec.name),
                source: spec.name.clone(),
                problem,
                context: None,
                chain_text: steps.join(STEP_DELIMITER),
                label: ChainLabel::error(position, code),
            }
        })
        .collect()
}

/// A clean, repetitive chain of `n_steps` steps: no marker, clean label.
/// Exercises the step budget rather than the classifier.
pub fn generate_loop_chain(seed: u64, n_steps: usize) -> AnnotatedChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let numbers = Numbers::draw(&mut rng);
    let problem = problem_text(&mut rng, &numbers);
    let cycle = [
        "Let me recompute the total from the beginning once more.".to_string(),
        format!("We start from the given quantity of {} units.", numbers.a),
        format!("Adding {} gives {}.", numbers.b, numbers.a + numbers.b),
    ];
    let steps: Vec<&str> = (0..n_steps).map(|k| cycle[k % cycle.len()].as_str()).collect();
    AnnotatedChain {
        id: format!("loop-s{seed}-{n_steps}"),
        source: "synthetic".into(),
        problem,
        context: None,
        chain_text: steps.join(STEP_DELIMITER),
        label: ChainLabel::clean(),
    }
}
