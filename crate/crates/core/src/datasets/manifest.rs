//! JSONL manifest: one header line, then one record per instance.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LevelBand, PipelineConfig, Split, SPLIT_RULE};
use crate::env::chain::{ChainTask, ObservationMode};
use crate::env::rushhour::{RushSidecar, RushTask};
use crate::env::sudoku::{SudokuSidecar, SudokuTask};
use crate::env::TaskInstance;
use crate::error::{Error, Result};
use crate::grammar::EnvTag;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSidecar {
    pub branching: u16,
    pub observation_mode: ObservationMode,
    pub cue_span: u32,
    pub subgoal_every: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum Sidecar {
    Sudoku(SudokuSidecar),
    #[serde(rename = "rushhour")]
    RushHour(RushSidecar),
    Chain(ChainSidecar),
}

impl Sidecar {
    pub fn env(&self) -> EnvTag {
        match self {
            Sidecar::Sudoku(_) => EnvTag::Sudoku,
            Sidecar::RushHour(_) => EnvTag::RushHour,
            Sidecar::Chain(_) => EnvTag::Chain,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub band: String,
    pub split: Split,
    /// Sudoku: empty cells. Rush Hour: minimum slide moves. Chain: depth.
    pub goal_distance: u32,
    /// Sudoku digits, Rush Hour 36-character grid, or the comma-separated chain path.
    pub state: String,
    pub grade: Option<String>,
    /// Stage-1 seed that produced the instance.
    pub seed: u64,
    pub sidecar: Sidecar,
}

impl ManifestRecord {
    fn unplaced(goal_distance: u32, state: String, grade: Option<String>, seed: u64, sidecar: Sidecar) -> Self {
        Self { id: String::new(), band: String::new(), split: Split::Test, goal_distance, state, grade, seed, sidecar }
    }

    pub fn sudoku(task: &SudokuTask, seed: u64) -> Self {
        let (state, side) = task.serialize();
        let grade = serde_json::to_value(task.technique_grade).ok().and_then(|v| v.as_str().map(String::from));
        Self::unplaced(task.empty_count, state, grade, seed, Sidecar::Sudoku(side))
    }

    pub fn rush(task: &RushTask, seed: u64) -> Self {
        let (state, side) = task.serialize();
        Self::unplaced(task.min_moves, state, Some("bfs-solvable".into()), seed, Sidecar::RushHour(side))
    }

    pub fn chain(task: &ChainTask, seed: u64) -> Self {
        let state = task.correct_path.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",");
        let side = ChainSidecar {
            branching: task.branching,
            observation_mode: task.observation_mode,
            cue_span: task.cue_span,
            subgoal_every: task.subgoal_every,
        };
        Self::unplaced(task.depth, state, None, seed, Sidecar::Chain(side))
    }

    /// Identity used for deduplication and split disjointness. Chain paths
    /// repeat at small depths, so chain instances are told apart by seed.
    pub fn identity(&self) -> String {
        match self.sidecar {
            Sidecar::Chain(_) => format!("{}#{}", self.state, self.seed),
            _ => self.state.clone(),
        }
    }

    pub(crate) fn set_level(&mut self, label: &str) {
        match &mut self.sidecar {
            Sidecar::Sudoku(s) => s.level = label.to_string(),
            Sidecar::RushHour(s) => s.band = label.to_string(),
            Sidecar::Chain(_) => {}
        }
    }

    /// Rebuilds the task and checks it against the recorded goal distance.
    pub fn to_task(&self) -> Result<TaskInstance> {
        let inst = match &self.sidecar {
            Sidecar::Sudoku(s) => {
                let task = SudokuTask::deserialize(&self.state, s)?;
                if task.empty_count != self.goal_distance {
                    return Err(Error::domain(format!(
                        "{} empty cells but goal_distance {}",
                        task.empty_count, self.goal_distance
                    )));
                }
                TaskInstance::from_sudoku(&self.id, task)
            }
            Sidecar::RushHour(s) => {
                let task = RushTask::deserialize(&self.state, s)?;
                if task.min_moves != self.goal_distance {
                    return Err(Error::domain(format!(
                        "sidecar min_moves {} but goal_distance {}",
                        task.min_moves, self.goal_distance
                    )));
                }
                TaskInstance::from_rush(&self.id, task)
            }
            Sidecar::Chain(s) => {
                let path = self
                    .state
                    .split(',')
                    .map(|t| t.parse::<u16>().map_err(|_| Error::domain(format!("bad chain branch {t:?}"))))
                    .collect::<Result<Vec<u16>>>()?;
                let task = ChainTask {
                    depth: path.len() as u32,
                    branching: s.branching,
                    correct_path: path,
                    observation_mode: s.observation_mode,
                    cue_span: s.cue_span,
                    subgoal_every: s.subgoal_every,
                    seed: self.seed,
                };
                task.validate()?;
                if task.depth != self.goal_distance {
                    return Err(Error::domain(format!("depth {} but goal_distance {}", task.depth, self.goal_distance)));
                }
                TaskInstance::from_chain(&self.id, task, &self.band)
            }
        };
        Ok(TaskInstance { level: self.band.clone(), ..inst })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineProvenance {
    pub seed: u64,
    pub config: PipelineConfig,
    pub filter: String,
    pub split_rule: String,
    pub candidates_examined: usize,
    pub code_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub env: EnvTag,
    pub bands: Vec<LevelBand>,
    pub provenance: PipelineProvenance,
}

impl ManifestHeader {
    pub(crate) fn new(cfg: &PipelineConfig, seed: u64, candidates_examined: usize) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            env: cfg.env,
            bands: cfg.bands.clone(),
            provenance: PipelineProvenance {
                seed,
                config: cfg.clone(),
                filter: cfg.filter_identity(),
                split_rule: SPLIT_RULE.to_string(),
                candidates_examined,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Band integrity, id uniqueness, split disjointness and task decoding.
    /// Errors carry the 1-based file line of the offending record.
    pub fn validate(&self) -> Result<()> {
        let bad = |i: usize, message: String| Error::Manifest { line: i + 2, message };
        super::validate_bands(&self.header.bands).map_err(|e| Error::Manifest { line: 1, message: e.to_string() })?;
        let bands: HashMap<&str, &LevelBand> = self.header.bands.iter().map(|b| (b.label.as_str(), b)).collect();
        let mut ids = HashSet::new();
        let mut states: HashMap<String, Split> = HashMap::new();
        for (i, r) in self.records.iter().enumerate() {
            let band = bands.get(r.band.as_str()).ok_or_else(|| bad(i, format!("unknown band {:?}", r.band)))?;
            if !band.contains(r.goal_distance) {
                return Err(bad(
                    i,
                    format!("goal_distance {} outside band {} [{}, {}]", r.goal_distance, band.label, band.low, band.high),
                ));
            }
            if r.sidecar.env() != self.header.env {
                return Err(bad(i, format!("{} record in a {} manifest", r.sidecar.env(), self.header.env)));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(bad(i, format!("duplicate id {}", r.id)));
            }
            if let Some(&other) = states.get(&r.identity()) {
                if other != r.split {
                    return Err(bad(i, format!("instance {} appears in both train and test", r.id)));
                }
            }
            states.insert(r.identity(), r.split);
            r.to_task().map_err(|e| bad(i, e.to_string()))?;
        }
        Ok(())
    }

    pub fn count(&self, band: &str, split: Split) -> usize {
        self.records.iter().filter(|r| r.band == band && r.split == split).count()
    }

    /// Tasks of one split, optionally restricted to the given band labels.
    pub fn tasks(&self, split: Option<Split>, bands: Option<&[String]>) -> Result<Vec<TaskInstance>> {
        self.records
            .iter()
            .filter(|r| split.is_none_or(|s| r.split == s))
            .filter(|r| bands.is_none_or(|b| b.contains(&r.band)))
            .map(ManifestRecord::to_task)
            .collect()
    }
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &manifest.header)?;
    w.write_all(b"\n")?;
    for r in &manifest.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads and validates a manifest.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or(Error::Manifest { line: 1, message: "empty manifest".into() })??;
    let header_value: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| Error::Manifest { line: 1, message: format!("bad header: {e}") })?;
    let version = header_value.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(MANIFEST_SCHEMA_VERSION)) {
        return Err(Error::Manifest {
            line: 1,
            message: format!("schema version {version:?}, expected {MANIFEST_SCHEMA_VERSION}"),
        });
    }
    let header: ManifestHeader =
        serde_json::from_value(header_value).map_err(|e| Error::Manifest { line: 1, message: format!("bad header: {e}") })?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let r: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Manifest { line: i + 2, message: format!("malformed record: {e}") })?;
        records.push(r);
    }
    let m = DatasetManifest { header, records };
    m.validate()?;
    Ok(m)
}
