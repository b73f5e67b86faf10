//! Experiment configuration files and the objects they describe.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;
use thermoqm::group::FreeGroup;
use thermoqm::lc::LocallyConstantFn;
use thermoqm::markov::{MarkovMeasure, MarkovPotential};
use thermoqm::qm::Quasimorphism;
use thermoqm::sft::{build_sft, full_shift, golden_mean, parse_word, Sft, Word};

use crate::failure::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operation {
    SftValidate,
    Words,
    Pressure,
    Gibbs,
    GibbsCheck,
    Entropy,
    Variational,
    Potential,
    Komlos,
    Livsic,
    Coboundary,
    Normalize,
    SolveCohomological,
    Variance,
    Clt,
    Invariance,
    Lil,
    Deviations,
    Compactify,
    Spherical,
}

impl Operation {
    pub fn name(self) -> &'static str {
        match self {
            Operation::SftValidate => "sft-validate",
            Operation::Words => "words",
            Operation::Pressure => "pressure",
            Operation::Gibbs => "gibbs",
            Operation::GibbsCheck => "gibbs-check",
            Operation::Entropy => "entropy",
            Operation::Variational => "variational",
            Operation::Potential => "potential",
            Operation::Komlos => "komlos",
            Operation::Livsic => "livsic",
            Operation::Coboundary => "coboundary",
            Operation::Normalize => "normalize",
            Operation::SolveCohomological => "solve-cohomological",
            Operation::Variance => "variance",
            Operation::Clt => "clt",
            Operation::Invariance => "invariance",
            Operation::Lil => "lil",
            Operation::Deviations => "deviations",
            Operation::Compactify => "compactify",
            Operation::Spherical => "spherical",
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    FullShift,
    GoldenMean,
    FreeGroup,
}

/// Exactly one of `builtin`, `matrix` or `file`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftSpec {
    pub builtin: Option<Builtin>,
    /// Alphabet size of `full_shift`.
    pub d: Option<usize>,
    /// Rank of `free_group`.
    pub rank: Option<usize>,
    pub matrix: Option<Vec<Vec<u8>>>,
    /// JSON file holding the matrix as an array of rows.
    pub file: Option<PathBuf>,
}

/// A table on `W_depth`, either listed in lexicographic order or by word with a default.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub depth: usize,
    pub values: Option<Vec<f64>>,
    pub by_word: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub default: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QmSpec {
    Zero {},
    LetterWeights { weights: Vec<f64> },
    PatternCount { pattern: String },
    SignedPatternCount { positive: String, negative: String },
    Brooks { word: String },
    PotentialSum { potential: TableSpec },
    Combination { parts: Vec<Part> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Part {
    pub coef: f64,
    pub qm: QmSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Parry {},
    Bernoulli { p: Vec<f64> },
    Gibbs { potential: TableSpec },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub name: String,
    pub measure: MeasureSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub operation: Option<Operation>,
    pub sft: SftSpec,
    pub qm: Option<QmSpec>,
    /// Second quasimorphism of a cohomology test.
    pub other: Option<QmSpec>,
    pub potential: Option<TableSpec>,
    pub measure: Option<MeasureSpec>,
    pub candidates: Option<Vec<Candidate>>,
    pub n: Option<usize>,
    pub n_max: Option<usize>,
    pub depth: Option<usize>,
    pub depths: Option<Vec<usize>>,
    pub ns: Option<Vec<usize>>,
    pub n_list: Option<Vec<usize>>,
    pub gaps: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub t: Option<usize>,
    pub m_homog: Option<usize>,
    pub resolution: Option<f64>,
    pub tol: Option<f64>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub ks_factor: Option<f64>,
    pub n_cesaro: Option<u64>,
    pub check_len: Option<usize>,
    pub pressure: Option<f64>,
    pub periodic: Option<bool>,
    pub center: Option<bool>,
    pub quasicocycle: Option<bool>,
    pub rays: Option<bool>,
    pub expect: Option<String>,
    pub max_words: Option<u64>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    pub output: Option<PathBuf>,
}

/// A parsed configuration together with its raw JSON and location.
pub struct Loaded {
    pub config: Config,
    pub raw: Value,
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input("unreadable_config", format!("{}: {e}", path.display())))?;
    let raw: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::input("malformed_config", format!("{}: {e}", path.display())))?;
    let config: Config = serde_json::from_value(raw.clone())
        .map_err(|e| Failure::input("invalid_config", format!("{}: {e}", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, raw, dir })
}

/// Thresholds named by the config. Every name must be consumed by the operation.
pub struct Thresholds {
    values: BTreeMap<String, f64>,
    used: RefCell<BTreeSet<String>>,
}

impl Thresholds {
    pub fn new(values: BTreeMap<String, f64>) -> Self {
        Thresholds { values, used: RefCell::new(BTreeSet::new()) }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.used.borrow_mut().insert(name.to_string());
        self.values.get(name).copied()
    }

    pub fn or(&self, name: &str, default: f64) -> f64 {
        self.get(name).unwrap_or(default)
    }

    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }
}

/// The shift of a config, with its free group when it is one.
pub struct Space {
    pub sft: Arc<Sft>,
    pub group: Option<FreeGroup>,
}

fn need<T: Copy>(v: Option<T>, what: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::input("missing_field", format!("sft.{what} is required")))
}

impl Space {
    pub fn build(spec: &SftSpec, dir: &Path) -> Result<Self, Failure> {
        let sources = spec.builtin.is_some() as u8 + spec.matrix.is_some() as u8 + spec.file.is_some() as u8;
        if sources != 1 {
            return Err(Failure::input("invalid_config", "sft needs exactly one of builtin, matrix, file"));
        }
        if let Some(b) = spec.builtin {
            return Ok(match b {
                Builtin::FullShift => Space { sft: full_shift(need(spec.d, "d")?)?, group: None },
                Builtin::GoldenMean => Space { sft: golden_mean(), group: None },
                Builtin::FreeGroup => {
                    let group = FreeGroup::new(need(spec.rank, "rank")?)?;
                    Space { sft: group.sft().clone(), group: Some(group) }
                }
            });
        }
        let rows = match (&spec.matrix, &spec.file) {
            (Some(m), _) => m.clone(),
            (_, Some(f)) => {
                let path = dir.join(f);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Failure::input("unreadable_matrix", format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Failure::input("malformed_matrix", format!("{}: {e}", path.display())))?
            }
            _ => unreachable!(),
        };
        Ok(Space { sft: build_sft(&rows)?, group: None })
    }

    pub fn parse(&self, text: &str) -> Result<Word, Failure> {
        let w = match &self.group {
            Some(g) => g.parse(text)?,
            None => parse_word(text, self.sft.alphabet_size())?,
        };
        self.sft.check_admissible(&w)?;
        Ok(w)
    }

    pub fn table(&self, spec: &TableSpec) -> Result<LocallyConstantFn, Failure> {
        match (&spec.values, &spec.by_word) {
            (Some(v), None) => Ok(LocallyConstantFn::from_values(&self.sft, spec.depth, v.clone())?),
            (None, Some(map)) => {
                let mut entries = BTreeMap::new();
                for (text, &v) in map {
                    let w = self.parse(text)?;
                    if w.len() != spec.depth {
                        return Err(Failure::input(
                            "invalid_config",
                            format!("word {text:?} does not have length {}", spec.depth),
                        ));
                    }
                    entries.insert(w, v);
                }
                Ok(LocallyConstantFn::from_fn(&self.sft, spec.depth, |w| {
                    entries.get(w).copied().unwrap_or(spec.default)
                })?)
            }
            _ => Err(Failure::input("invalid_config", "a table needs exactly one of values, by_word")),
        }
    }

    pub fn quasimorphism(&self, spec: &QmSpec) -> Result<Quasimorphism, Failure> {
        Ok(match spec {
            QmSpec::Zero {} => Quasimorphism::zero(&self.sft),
            QmSpec::LetterWeights { weights } => Quasimorphism::letter_weights(&self.sft, weights.clone())?,
            QmSpec::PatternCount { pattern } => Quasimorphism::pattern_count(&self.sft, self.parse(pattern)?)?,
            QmSpec::SignedPatternCount { positive, negative } => {
                Quasimorphism::signed_pattern_count(&self.sft, self.parse(positive)?, self.parse(negative)?)?
            }
            QmSpec::Brooks { word } => {
                let g = self
                    .group
                    .as_ref()
                    .ok_or_else(|| Failure::input("invalid_config", "brooks needs a free_group shift"))?;
                g.brooks(&g.parse(word)?)?
            }
            QmSpec::PotentialSum { potential } => Quasimorphism::potential_sum(self.table(potential)?),
            QmSpec::Combination { parts } => {
                let parts = parts
                    .iter()
                    .map(|p| Ok((p.coef, self.quasimorphism(&p.qm)?)))
                    .collect::<Result<Vec<_>, Failure>>()?;
                Quasimorphism::combination(parts)?
            }
        })
    }

    pub fn measure(&self, spec: Option<&MeasureSpec>) -> Result<MarkovMeasure, Failure> {
        Ok(match spec {
            None | Some(MeasureSpec::Parry {}) => MarkovMeasure::parry(&self.sft)?,
            Some(MeasureSpec::Bernoulli { p }) => MarkovMeasure::bernoulli(&self.sft, p)?,
            Some(MeasureSpec::Gibbs { potential }) => {
                MarkovMeasure::gibbs(&MarkovPotential::new(self.table(potential)?)?)?.0
            }
        })
    }
}
