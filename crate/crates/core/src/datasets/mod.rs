//! Three-stage dataset construction: candidate generation, solvability or
//! capability filtering, and goal-distance partitioning into level bands.
//!
//! Every stage draws from seeds derived from the run seed, so a manifest is a
//! pure function of `(PipelineConfig, seed)`. Candidates are generated in
//! parallel chunks and reduced sequentially in candidate order.

mod filter;
mod manifest;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::chain::{generate_chain, ObservationMode};
use crate::env::rushhour::{component_distances, generate_candidate, solve_min_cell_moves, RushGenConfig, RushTask};
use crate::env::sudoku::{dig_puzzle, generate_solved_grid, TechniqueGrade};
use crate::error::{Error, Result};
use crate::grammar::EnvTag;
use crate::seeding;

pub use filter::{run_external_filter, FilterCommand};
pub use manifest::{
    read_manifest, write_manifest, ChainSidecar, DatasetManifest, ManifestHeader, ManifestRecord, Sidecar,
    MANIFEST_SCHEMA_VERSION,
};

const STREAM_CANDIDATE: u64 = 11;
const STREAM_SELECT: u64 = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelBand {
    pub label: String,
    /// Inclusive goal-distance bounds.
    pub low: u32,
    pub high: u32,
    pub train: usize,
    pub test: usize,
}

impl LevelBand {
    pub fn new(label: impl Into<String>, low: u32, high: u32, train: usize, test: usize) -> Self {
        Self { label: label.into(), low, high, train, test }
    }

    pub fn contains(&self, d: u32) -> bool {
        (self.low..=self.high).contains(&d)
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Test => self.test,
        }
    }
}

/// Ordered and pairwise disjoint.
pub fn validate_bands(bands: &[LevelBand]) -> Result<()> {
    if bands.is_empty() {
        return Err(Error::domain("at least one band is required"));
    }
    let mut labels = HashSet::new();
    for b in bands {
        if b.low > b.high {
            return Err(Error::domain(format!("band {} has low {} > high {}", b.label, b.low, b.high)));
        }
        if !labels.insert(b.label.as_str()) {
            return Err(Error::domain(format!("duplicate band label {}", b.label)));
        }
    }
    for w in bands.windows(2) {
        if w[0].high >= w[1].low {
            return Err(Error::domain(format!("bands {} and {} overlap or are out of order", w[0].label, w[1].label)));
        }
    }
    Ok(())
}

/// Sudoku 9x9 levels by empty-cell count. The 640 training puzzles of each
/// pair L1+L2 and L3+L4 are split evenly.
pub fn table1_bands() -> Vec<LevelBand> {
    (0..7u32)
        .map(|i| {
            let train = if i < 4 { 320 } else { 0 };
            let test = if i == 6 { 50 } else { 100 };
            LevelBand::new(format!("L{}", i + 1), 11 + 5 * i, 15 + 5 * i, train, test)
        })
        .collect()
}

/// Rush Hour bands by minimum slide moves; test-only.
pub fn table2_bands() -> Vec<LevelBand> {
    (0..6u32).map(|i| LevelBand::new(format!("{}-{}", 4 + 3 * i, 6 + 3 * i), 4 + 3 * i, 6 + 3 * i, 0, 100)).collect()
}

/// Desk-scale 4x4 Sudoku bands by empty-cell count.
pub fn desk_sudoku_bands(train: usize, test: usize) -> Vec<LevelBand> {
    [("S1", 2, 4), ("S2", 5, 7), ("S3", 8, 10), ("S4", 11, 12)]
        .into_iter()
        .map(|(l, lo, hi)| LevelBand::new(l, lo, hi, train, test))
        .collect()
}

/// One chain band per `(low, high)` depth range, labelled `D{low}-{high}`.
pub fn chain_bands(ranges: &[(u32, u32)], train: usize, test: usize) -> Vec<LevelBand> {
    ranges.iter().map(|&(lo, hi)| LevelBand::new(format!("D{lo}-{hi}"), lo, hi, train, test)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub env: EnvTag,
    pub bands: Vec<LevelBand>,
    pub sudoku_size: u8,
    /// Keep only puzzles the basic techniques complete.
    pub require_basic: bool,
    pub rush: RushGenConfig,
    /// Distinct states taken per band from one Rush Hour state-space component.
    pub rush_states_per_component: usize,
    pub chain_branching: u16,
    pub chain_mode: ObservationMode,
    /// Stage-1 retry budget.
    pub max_candidates: usize,
    /// Candidates generated per parallel chunk.
    pub chunk_size: usize,
    pub external_filter: Option<FilterCommand>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::table1()
    }
}

impl PipelineConfig {
    fn base(env: EnvTag, bands: Vec<LevelBand>) -> Self {
        Self {
            env,
            bands,
            sudoku_size: 9,
            require_basic: true,
            rush: RushGenConfig::default(),
            rush_states_per_component: 8,
            chain_branching: 2,
            chain_mode: ObservationMode::Positional,
            max_candidates: 200_000,
            chunk_size: 64,
            external_filter: None,
        }
    }

    pub fn table1() -> Self {
        Self::base(EnvTag::Sudoku, table1_bands())
    }

    pub fn table2() -> Self {
        Self::base(EnvTag::RushHour, table2_bands())
    }

    pub fn desk_sudoku(train: usize, test: usize) -> Self {
        Self { sudoku_size: 4, ..Self::base(EnvTag::Sudoku, desk_sudoku_bands(train, test)) }
    }

    pub fn chain(bands: Vec<LevelBand>, mode: ObservationMode) -> Self {
        Self { chain_mode: mode, ..Self::base(EnvTag::Chain, bands) }
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if let Err(e) = validate_bands(&self.bands) {
            v.push(("bands".into(), e.to_string()));
        }
        if self.sudoku_size != 4 && self.sudoku_size != 9 {
            v.push(("sudoku_size".into(), "sudoku_size must be 4 or 9".into()));
        }
        if self.env == EnvTag::Sudoku {
            let cells = u32::from(self.sudoku_size) * u32::from(self.sudoku_size);
            if self.bands.iter().any(|b| b.low == 0 || b.high >= cells) {
                v.push(("bands".into(), format!("sudoku empty counts must lie in 1..{cells}")));
            }
        }
        if self.env == EnvTag::Chain && self.bands.iter().any(|b| b.low == 0) {
            v.push(("bands".into(), "chain depths must be at least 1".into()));
        }
        if let Err(e) = self.rush.validate() {
            v.push(("rush".into(), e.to_string()));
        }
        if self.rush_states_per_component == 0 {
            v.push(("rush_states_per_component".into(), "must be positive".into()));
        }
        if self.chain_branching < 2 {
            v.push(("chain_branching".into(), "chain_branching must be at least 2".into()));
        }
        if self.chunk_size == 0 {
            v.push(("chunk_size".into(), "chunk_size must be positive".into()));
        }
        v
    }

    /// Identity of the stage-2 filter recorded in provenance.
    pub fn filter_identity(&self) -> String {
        let oracle = match self.env {
            EnvTag::Sudoku if self.require_basic => "oracle:basic-technique-grade",
            EnvTag::Sudoku => "oracle:unique-solution",
            EnvTag::RushHour => "oracle:bfs-solvable",
            EnvTag::Chain => "oracle:none",
        };
        match &self.external_filter {
            Some(c) => format!("{oracle}+external:{c}"),
            None => oracle.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deficit {
    pub band: String,
    pub split: Split,
    pub missing: usize,
}

/// Bands left short after the stage-1 retry budget ran out.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Underfilled {
    pub candidates_examined: usize,
    pub deficits: Vec<Deficit>,
}

impl fmt::Display for Underfilled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "underfilled after {} candidates:", self.candidates_examined)?;
        for d in &self.deficits {
            write!(f, " {}/{} short by {};", d.band, d.split, d.missing)?;
        }
        Ok(())
    }
}

/// How the per-level training split was chosen, recorded in provenance.
pub const SPLIT_RULE: &str = "train counts per band as configured; a pooled count over a pair of levels is split evenly";

struct Fill {
    bands: Vec<LevelBand>,
    taken: BTreeMap<(usize, Split), usize>,
}

impl Fill {
    fn missing(&self, b: usize, split: Split) -> usize {
        self.bands[b].count(split) - self.taken.get(&(b, split)).copied().unwrap_or(0)
    }

    fn needy(&self) -> Vec<usize> {
        (0..self.bands.len()).filter(|&b| self.missing(b, Split::Train) + self.missing(b, Split::Test) > 0).collect()
    }

    fn done(&self) -> bool {
        self.needy().is_empty()
    }

    /// Split with the larger remaining deficit; test on ties.
    fn place(&mut self, b: usize) -> Option<(Split, usize)> {
        let (tr, te) = (self.missing(b, Split::Train), self.missing(b, Split::Test));
        let split = match (tr, te) {
            (0, 0) => return None,
            (tr, te) if tr > te => Split::Train,
            _ => Split::Test,
        };
        let n = self.taken.entry((b, split)).or_insert(0);
        *n += 1;
        Some((split, *n))
    }

    fn deficits(&self) -> Vec<Deficit> {
        let mut out = Vec::new();
        for (b, band) in self.bands.iter().enumerate() {
            for split in [Split::Train, Split::Test] {
                let missing = self.missing(b, split);
                if missing > 0 {
                    out.push(Deficit { band: band.label.clone(), split, missing });
                }
            }
        }
        out
    }
}

/// Candidate generation for one stage-1 seed. `needy` lists bands that still
/// need instances when the chunk started.
fn generate(cfg: &PipelineConfig, needy: &[usize], index: usize, seed: u64) -> Vec<ManifestRecord> {
    let cseed = seeding::derive(seed, &[STREAM_CANDIDATE, index as u64]);
    let mut rng = seeding::rng(seeding::derive(cseed, &[STREAM_SELECT]));
    match cfg.env {
        EnvTag::Sudoku => {
            let band = &cfg.bands[needy[index % needy.len()]];
            let target = rng.random_range(band.low..=band.high);
            let task = generate_solved_grid(cfg.sudoku_size, cseed)
                .and_then(|grid| dig_puzzle(cfg.sudoku_size, &grid, target, seeding::derive(cseed, &[1])));
            let Ok(mut task) = task else {
                return Vec::new();
            };
            if cfg.require_basic && task.technique_grade != TechniqueGrade::Basic {
                return Vec::new();
            }
            task.level = band.label.clone();
            vec![ManifestRecord::sudoku(&task, cseed)]
        }
        EnvTag::RushHour => {
            let Some(board) = generate_candidate(&cfg.rush, cseed) else {
                return Vec::new();
            };
            let states = component_distances(&board);
            let mut out = Vec::new();
            for &b in needy {
                let band = &cfg.bands[b];
                let mut pool: Vec<_> = states.iter().filter(|(_, d)| band.contains(*d)).collect();
                pool.shuffle(&mut rng);
                for (state, d) in pool.into_iter().take(cfg.rush_states_per_component) {
                    let Ok(cells) = solve_min_cell_moves(state) else { continue };
                    let task = RushTask {
                        board: state.clone(),
                        min_moves: *d,
                        min_cell_moves: cells,
                        level_band: band.label.clone(),
                    };
                    out.push(ManifestRecord::rush(&task, cseed));
                }
            }
            out
        }
        EnvTag::Chain => {
            let band = &cfg.bands[needy[index % needy.len()]];
            let depth = rng.random_range(band.low..=band.high);
            match generate_chain(depth, cfg.chain_branching, cseed) {
                Ok(task) => vec![ManifestRecord::chain(&task.with_mode(cfg.chain_mode), cseed)],
                Err(_) => Vec::new(),
            }
        }
    }
}

/// Runs stages 1-3. Fails with [`Error::Underfilled`] when the retry budget
/// runs out before every band is full.
pub fn run_pipeline(cfg: &PipelineConfig, seed: u64) -> Result<DatasetManifest> {
    let problems = cfg.violations();
    if !problems.is_empty() {
        let msg: Vec<String> = problems.into_iter().map(|(k, m)| format!("{k}: {m}")).collect();
        return Err(Error::domain(msg.join("; ")));
    }
    let mut fill = Fill { bands: cfg.bands.clone(), taken: BTreeMap::new() };
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut examined = 0usize;
    while !fill.done() && examined < cfg.max_candidates {
        let needy = fill.needy();
        let end = (examined + cfg.chunk_size).min(cfg.max_candidates);
        // Stage 1, parallel across seeds.
        let chunk: Vec<Vec<ManifestRecord>> = (examined..end).into_par_iter().map(|i| generate(cfg, &needy, i, seed)).collect();
        examined = end;
        let mut survivors: Vec<ManifestRecord> = chunk.into_iter().flatten().collect();
        survivors.retain(|r| !seen.contains(&r.identity()));
        // Stage 2 external capability filter, order preserving.
        if let Some(cmd) = &cfg.external_filter {
            if !survivors.is_empty() {
                let keep = run_external_filter(cmd, &survivors)?;
                survivors = survivors.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect();
            }
        }
        // Stage 3: partition by goal distance, sequentially in candidate order.
        for mut r in survivors {
            let Some(b) = cfg.bands.iter().position(|band| band.contains(r.goal_distance)) else { continue };
            if !seen.insert(r.identity()) {
                continue;
            }
            let Some((split, n)) = fill.place(b) else { continue };
            r.band = cfg.bands[b].label.clone();
            r.split = split;
            r.id = format!("{}-{}-{:04}", r.band, split, n);
            r.set_level(&r.band.clone());
            records.push(r);
        }
    }
    if !fill.done() {
        return Err(Error::Underfilled(Box::new(Underfilled { candidates_examined: examined, deficits: fill.deficits() })));
    }
    // Stable order: band, then split, then id.
    let order: BTreeMap<&str, usize> = cfg.bands.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    records.sort_by(|a, b| (order[a.band.as_str()], a.split, &a.id).cmp(&(order[b.band.as_str()], b.split, &b.id)));
    let header = ManifestHeader::new(cfg, seed, examined);
    Ok(DatasetManifest { header, records })
}
