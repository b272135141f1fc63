//! Run configuration: a sectioned `key = value` file (TOML syntax) with
//! strict keys, defaults from the standard hyperparameter table, and
//! provenance stamps for everything a run writes.
//!
//! ```toml
//! seed = 3
//! env = "chain"
//!
//! [grammar]
//! macro_mode = "flexible:4"
//!
//! [advantage]
//! alpha = 0.0
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{
    chain_bands, desk_sudoku_bands, table1_bands, table2_bands, FilterCommand, LevelBand, PipelineConfig,
};
use crate::env::chain::ObservationMode;
use crate::env::rushhour::RushGenConfig;
use crate::env::RewardMode;
use crate::error::{Error, Result};
use crate::grammar::{Dialect, EnvTag, MacroMode};
use crate::harness::{CurriculumPhase, CurriculumPlan, EvalConfig};
use crate::policy::{SoftmaxSequencePolicy, DEFAULT_TABLE_BITS};
use crate::rl::{AdvantageConfig, Budgets, IsConfig, RolloutConfig, TrainerConfig};

/// Environment variable that overrides the `seed` key.
pub const SEED_ENV: &str = "HORIZONLAB_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrammarSection {
    pub macro_mode: MacroMode,
}

impl Default for GrammarSection {
    fn default() -> Self {
        Self { macro_mode: MacroMode::Atomic }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub table_bits: u32,
    /// Initial bias toward grammatical continuations.
    pub syntax_prior: f64,
    /// Initial bias toward continuing a macro rather than ending it.
    pub continuation_prior: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self { table_bits: DEFAULT_TABLE_BITS, syntax_prior: 6.0, continuation_prior: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub iterations: usize,
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub group_size: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    /// Sampling temperature for training rollouts and evaluation.
    pub temperature: f64,
    pub train_temperature: Option<f64>,
    /// Turns of history in the agent context.
    pub window: usize,
    pub reward_mode: RewardMode,
}

impl Default for TrainerSection {
    fn default() -> Self {
        Self {
            iterations: 200,
            epochs: None,
            batch_size: 64,
            group_size: 1,
            minibatches: 1,
            learning_rate: 10.0,
            temperature: 0.8,
            train_temperature: None,
            window: 2,
            reward_mode: RewardMode::Sparse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 9x9 Sudoku levels L1-L7.
    Table1,
    /// Rush Hour slide-move bands.
    Table2,
    /// 4x4 Sudoku bands S1-S4.
    Desk,
    /// Chain depth bands.
    Chain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Band table; defaults by environment.
    pub preset: Option<Preset>,
    /// Replaces the preset's bands when present.
    pub bands: Option<Vec<LevelBand>>,
    pub sudoku_size: Option<u8>,
    pub require_basic: bool,
    pub rush: RushGenConfig,
    pub rush_states_per_component: usize,
    pub chain_branching: u16,
    pub chain_mode: ObservationMode,
    pub max_candidates: usize,
    pub chunk_size: usize,
    pub external_filter: Option<FilterCommand>,
    /// Bands used by `train`; every band with training instances when empty.
    pub train_bands: Vec<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        let p = PipelineConfig::table1();
        Self {
            preset: None,
            bands: None,
            sudoku_size: None,
            require_basic: p.require_basic,
            rush: p.rush,
            rush_states_per_component: p.rush_states_per_component,
            chain_branching: p.chain_branching,
            chain_mode: p.chain_mode,
            max_candidates: p.max_candidates,
            chunk_size: p.chunk_size,
            external_filter: None,
            train_bands: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
    /// Every manifest band when empty.
    pub bands: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { k: 4, bands: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    pub name: String,
    pub bands: Vec<String>,
    pub iterations: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSection {
    pub phases: Vec<PhaseSection>,
    pub eval_bands: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Input manifest for train, evaluate, sweep and curriculum.
    pub manifest: Option<PathBuf>,
    /// Input checkpoint for evaluate and sweep; also a starting point for train.
    pub checkpoint: Option<PathBuf>,
    /// Atomic-policy checkpoint compared against in sweep.
    pub baseline_checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvTag,
    pub grammar: GrammarSection,
    pub policy: PolicySection,
    pub trainer: TrainerSection,
    pub advantage: AdvantageConfig,
    pub importance: IsConfig,
    pub budgets: Budgets,
    pub data: DataSection,
    pub eval: EvalSection,
    pub curriculum: CurriculumSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            env: EnvTag::Sudoku,
            grammar: GrammarSection::default(),
            policy: PolicySection::default(),
            trainer: TrainerSection::default(),
            advantage: AdvantageConfig::default(),
            importance: IsConfig::default(),
            budgets: Budgets::default(),
            data: DataSection::default(),
            eval: EvalSection::default(),
            curriculum: CurriculumSection::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Dotted key path, e.g. `advantage.gamma`.
    pub key: String,
    pub message: String,
}

/// Every problem found in a configuration.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn push(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { key: key.into(), message: message.into() });
    }

    fn extend(&mut self, prefix: &str, items: Vec<(String, String)>) {
        for (k, m) in items {
            self.push(format!("{prefix}{k}"), m);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, key: &str) -> bool {
        self.violations.iter().any(|v| v.key == key)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {}: {}", v.key, v.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

/// Keys present in `doc` but not in `known`, removed from `doc`. Nested
/// tables are walked only where the default is itself a table; lists and
/// optional values are left to typed deserialization.
fn strip_unknown(doc: &mut toml::Table, known: &serde_json::Map<String, serde_json::Value>, prefix: &str, report: &mut ValidationReport) {
    let keys: Vec<String> = doc.keys().cloned().collect();
    for k in keys {
        let path = format!("{prefix}{k}");
        match known.get(&k) {
            None => {
                report.push(&path, format!("unknown key {path:?}"));
                doc.remove(&k);
            }
            Some(serde_json::Value::Object(inner)) => {
                if let Some(toml::Value::Table(t)) = doc.get_mut(&k) {
                    strip_unknown(t, inner, &format!("{path}."), report);
                }
            }
            Some(_) => {}
        }
    }
}

impl RunConfig {
    /// Parses and validates configuration text. Never touches the filesystem.
    pub fn parse(text: &str) -> std::result::Result<Self, ValidationReport> {
        Self::parse_with_seed_override(text, std::env::var(SEED_ENV).ok().as_deref())
    }

    /// As [`Self::parse`], with an explicit value standing in for the seed
    /// environment variable.
    pub fn parse_with_seed_override(text: &str, seed: Option<&str>) -> std::result::Result<Self, ValidationReport> {
        let mut report = ValidationReport::default();
        let mut doc: toml::Table = match text.parse() {
            Ok(t) => t,
            Err(e) => {
                report.push("<file>", format!("syntax error: {}", e.message()));
                return Err(report);
            }
        };
        let defaults = serde_json::to_value(Self::default()).expect("defaults serialize");
        strip_unknown(&mut doc, defaults.as_object().expect("config is a table"), "", &mut report);
        let mut cfg = Self::default();
        // Deserialize section by section so one bad section does not hide the others.
        let mut merged = toml::Table::new();
        for (k, v) in doc {
            let mut single = toml::Table::new();
            single.insert(k.clone(), v.clone());
            match toml::from_str::<Self>(&toml::to_string(&single).unwrap_or_default()) {
                Ok(_) => {
                    merged.insert(k, v);
                }
                Err(e) => report.push(&k, e.message().trim().to_string()),
            }
        }
        if let Ok(c) = toml::from_str::<Self>(&toml::to_string(&merged).unwrap_or_default()) {
            cfg = c;
        }
        if let Some(s) = seed {
            match s.trim().parse::<u64>() {
                Ok(v) => cfg.seed = v,
                Err(_) => report.push("seed", format!("{SEED_ENV}={s:?} is not an unsigned integer")),
            }
        }
        report.violations.extend(cfg.validate().violations);
        if report.is_empty() {
            Ok(cfg)
        } else {
            Err(report)
        }
    }

    /// Range and consistency checks on an already typed configuration.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.extend("advantage.", self.advantage.violations());
        r.extend("importance.", self.importance.violations());
        let t = self.trainer_config();
        r.extend("trainer.", t.violations());
        if !(4..=26).contains(&self.policy.table_bits) {
            r.push("policy.table_bits", "table_bits must lie in 4..=26");
        }
        if !(self.policy.syntax_prior >= 0.0 && self.policy.syntax_prior.is_finite()) {
            r.push("policy.syntax_prior", "syntax_prior must be finite and >= 0");
        }
        if !self.policy.continuation_prior.is_finite() {
            r.push("policy.continuation_prior", "continuation_prior must be finite");
        }
        if let MacroMode::Fixed(0) | MacroMode::Flexible(0) = self.grammar.macro_mode {
            r.push("grammar.macro_mode", "macro bound must be at least 1");
        }
        if self.eval.k == 0 {
            r.push("eval.k", "k must be at least 1");
        }
        if self.budgets.sudoku == 0 || self.budgets.rushhour == 0 || self.budgets.rushhour_macro == 0 {
            r.push("budgets", "interaction budgets must be positive");
        }
        match self.pipeline_config() {
            Ok(p) => {
                if p.env != self.env {
                    r.push("data.preset", format!("preset builds {} data but env is {}", p.env, self.env));
                }
                r.extend("data.", p.violations());
                let labels: Vec<&str> = p.bands.iter().map(|b| b.label.as_str()).collect();
                let lists = [("data.train_bands", &self.data.train_bands), ("eval.bands", &self.eval.bands)];
                for (key, list) in lists {
                    for b in list {
                        if !labels.contains(&b.as_str()) {
                            r.push(key, format!("unknown band {b:?}"));
                        }
                    }
                }
            }
            Err(e) => r.push("data", e.to_string()),
        }
        if !self.curriculum.phases.is_empty() {
            r.extend("", self.curriculum_plan().violations());
        }
        r
    }

    pub fn dialect(&self) -> Dialect {
        match self.env {
            EnvTag::Sudoku => Dialect::Sudoku { size: self.data.sudoku_size.unwrap_or(self.preset_size()) },
            EnvTag::RushHour => Dialect::RushHour,
            EnvTag::Chain => Dialect::Chain { branching: self.data.chain_branching },
        }
    }

    fn preset(&self) -> Preset {
        self.data.preset.unwrap_or(match self.env {
            EnvTag::Sudoku => Preset::Table1,
            EnvTag::RushHour => Preset::Table2,
            EnvTag::Chain => Preset::Chain,
        })
    }

    fn preset_size(&self) -> u8 {
        if self.preset() == Preset::Desk {
            4
        } else {
            9
        }
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let (env, bands) = match self.preset() {
            Preset::Table1 => (EnvTag::Sudoku, table1_bands()),
            Preset::Table2 => (EnvTag::RushHour, table2_bands()),
            Preset::Desk => (EnvTag::Sudoku, desk_sudoku_bands(64, 32)),
            Preset::Chain => (EnvTag::Chain, chain_bands(&[(2, 4), (5, 8), (9, 12), (13, 16)], 64, 32)),
        };
        let d = &self.data;
        Ok(PipelineConfig {
            env,
            bands: d.bands.clone().unwrap_or(bands),
            sudoku_size: d.sudoku_size.unwrap_or(self.preset_size()),
            require_basic: d.require_basic,
            rush: d.rush.clone(),
            rush_states_per_component: d.rush_states_per_component,
            chain_branching: d.chain_branching,
            chain_mode: d.chain_mode,
            max_candidates: d.max_candidates,
            chunk_size: d.chunk_size,
            external_filter: d.external_filter.clone(),
        })
    }

    pub fn rollout_config(&self) -> RolloutConfig {
        RolloutConfig {
            mode: self.grammar.macro_mode,
            temperature: self.trainer.temperature,
            window: self.trainer.window,
            reward_mode: self.trainer.reward_mode,
            format_penalty: self.advantage.format_penalty,
            validity_penalty: self.advantage.validity_penalty,
            budgets: self.budgets.clone(),
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.trainer;
        TrainerConfig {
            iterations: t.iterations,
            epochs: t.epochs,
            batch_size: t.batch_size,
            group_size: t.group_size,
            minibatches: t.minibatches,
            learning_rate: t.learning_rate,
            train_temperature: t.train_temperature,
            seed: self.seed,
            rollout: self.rollout_config(),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig { k: self.eval.k, seed: self.seed, rollout: self.rollout_config() }
    }

    pub fn curriculum_plan(&self) -> CurriculumPlan {
        let base = self.trainer_config();
        let phases = self
            .curriculum
            .phases
            .iter()
            .map(|p| CurriculumPhase {
                name: p.name.clone(),
                bands: p.bands.clone(),
                trainer: TrainerConfig {
                    iterations: p.iterations.unwrap_or(base.iterations),
                    epochs: p.epochs.or(base.epochs),
                    learning_rate: p.learning_rate.unwrap_or(base.learning_rate),
                    ..base.clone()
                },
            })
            .collect();
        CurriculumPlan { phases, eval_bands: self.curriculum.eval_bands.clone() }
    }

    /// Fresh policy with the configured feature map and priors.
    pub fn initial_policy(&self) -> Result<SoftmaxSequencePolicy> {
        let mut p = SoftmaxSequencePolicy::new(self.dialect(), self.grammar.macro_mode, self.policy.table_bits)?;
        p.temperature = self.trainer.temperature;
        p.init_syntax_prior(self.policy.syntax_prior);
        if self.policy.continuation_prior != 0.0 {
            p.init_continuation_prior(self.policy.continuation_prior);
        }
        Ok(p)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(ValidationReport),
}

/// Reads, applies defaults and the seed override, and validates.
pub fn load_config(path: &Path) -> std::result::Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    RunConfig::parse(&text).map_err(ConfigError::Invalid)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// Relative to the provenance base directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<OutputDigest>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Digests every output (paths relative to `base`) under the config hash.
pub fn stamp_provenance(config: &RunConfig, base: &Path, outputs: &[&str]) -> Result<Provenance> {
    let outputs = outputs
        .iter()
        .map(|p| Ok(OutputDigest { path: p.to_string(), sha256: file_digest(&base.join(p))? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Provenance {
        config_hash: config.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: vec![config.seed],
        outputs,
    })
}

impl Provenance {
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("provenance serializes")))
    }

    /// Paths whose current digest differs from the recorded one.
    pub fn verify(&self, base: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            let p = base.join(&o.path);
            if !p.exists() || file_digest(&p)? != o.sha256 {
                bad.push(o.path.clone());
            }
        }
        Ok(bad)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_slice(&std::fs::read(path)?).map_err(Error::from)
    }
}
