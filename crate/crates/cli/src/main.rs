//! `horizonlab`: generate datasets, train, evaluate, sweep and run curricula
//! from one configuration file.
//!
//! Exit status: 0 on success, 1 on runtime failure, 2 when the configuration
//! or its inputs fail validation, 3 when training aborts on a non-finite
//! update. Nothing is written before validation passes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use horizonlab_core::config::{load_config, stamp_provenance, ConfigError, RunConfig};
use horizonlab_core::datasets::{read_manifest, run_pipeline, write_manifest, DatasetManifest, LevelBand, Split};
use horizonlab_core::harness::{horizon_sweep, run_curriculum, selftest, sweep_gaps, EvalReport, SweepGap};
use horizonlab_core::policy::{load_checkpoint, save_checkpoint, Checkpoint};
use horizonlab_core::rl::{train, TrainingLog};
use horizonlab_core::{MacroMode, SoftmaxSequencePolicy, TaskInstance};

#[derive(Parser, Debug)]
#[command(name = "horizonlab", version, about = "Horizon-reduction experiments on goal-distance-calibrated puzzles")]
struct Cli {
    /// Sectioned key = value configuration; defaults apply to absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides both the config file and HORIZONLAB_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `paths.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a dataset manifest.
    Generate,
    /// Train on the manifest's training split and evaluate on its test split.
    Train,
    /// Evaluate a checkpoint (or the initial policy) on the test split.
    Evaluate,
    /// Success per band, with per-band gaps when a baseline checkpoint is given.
    Sweep,
    /// Train the configured phases in order, then evaluate.
    Curriculum,
    /// Run the built-in property checks.
    Selftest,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Aborted(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<horizonlab_core::Error> for Failure {
    fn from(e: horizonlab_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Aborted(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).map_err(|e| match e {
            ConfigError::Invalid(r) => Failure::Invalid(r.to_string()),
            ConfigError::Io { .. } => Failure::Invalid(e.to_string()),
        })?,
        None => RunConfig::parse("").map_err(|r| Failure::Invalid(r.to_string()))?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome {
    let cfg = resolve_config(&cli)?;
    // The output location is not part of the run identity, so `--out` does
    // not enter the hashed config.
    let explicit = cli.out.or_else(|| cfg.paths.out.clone());
    let out = explicit.clone().unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Generate => generate(&cfg, &out),
        Command::Train => train_cmd(&cfg, &out),
        Command::Evaluate => evaluate_cmd(&cfg, &out),
        Command::Sweep => sweep_cmd(&cfg, &out),
        Command::Curriculum => curriculum_cmd(&cfg, &out),
        Command::Selftest => selftest_cmd(&cfg, explicit.as_deref()),
    }
}

/// Collects output files and stamps them on completion or abort.
struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn create(root: &Path) -> anyhow::Result<Self> {
        let root = root.to_path_buf();
        std::fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root, written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    fn report(&mut self, stem: &str, report: &EvalReport) -> anyhow::Result<()> {
        report.write_json(&self.path(&format!("{stem}.json")))?;
        report.write_csv(&self.path(&format!("{stem}.csv")))?;
        Ok(())
    }

    fn log(&mut self, stem: &str, log: &TrainingLog) -> anyhow::Result<()> {
        log.write_jsonl(&self.path(&format!("{stem}.jsonl")))?;
        log.write_csv(&self.path(&format!("{stem}.csv")))?;
        Ok(())
    }

    fn finish(self, cfg: &RunConfig) -> anyhow::Result<()> {
        let names: Vec<&str> = self.written.iter().map(String::as_str).collect();
        let prov = stamp_provenance(cfg, &self.root, &names)?;
        prov.write(&self.root.join("provenance.json"))?;
        log::info!("wrote {} file(s) to {}", names.len() + 1, self.root.display());
        Ok(())
    }
}

/// A dataset either read from `paths.manifest` or generated from the config.
struct Dataset {
    manifest: DatasetManifest,
    generated: bool,
}

impl Dataset {
    fn load(cfg: &RunConfig) -> Result<Self, Failure> {
        match &cfg.paths.manifest {
            Some(path) => {
                let manifest = read_manifest(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
                if manifest.header.env != cfg.env {
                    return Err(Failure::Invalid(format!(
                        "manifest holds {} tasks but env is {}",
                        manifest.header.env, cfg.env
                    )));
                }
                Ok(Self { manifest, generated: false })
            }
            None => {
                let pipeline = cfg.pipeline_config()?;
                Ok(Self { manifest: run_pipeline(&pipeline, cfg.seed)?, generated: true })
            }
        }
    }

    /// A generated manifest is saved next to the results that depend on it.
    fn save_if_generated(&self, out: &mut OutDir) -> anyhow::Result<()> {
        if self.generated {
            write_manifest(&out.path("manifest.jsonl"), &self.manifest)?;
        }
        Ok(())
    }

    fn bands(&self, labels: &[String]) -> Vec<LevelBand> {
        let all = &self.manifest.header.bands;
        if labels.is_empty() {
            all.clone()
        } else {
            all.iter().filter(|b| labels.contains(&b.label)).cloned().collect()
        }
    }

    fn tasks(&self, split: Split, labels: &[String]) -> Result<Vec<TaskInstance>, Failure> {
        let filter = (!labels.is_empty()).then_some(labels);
        Ok(self.manifest.tasks(Some(split), filter)?)
    }
}

fn load_policy(cfg: &RunConfig, path: &Path) -> Result<SoftmaxSequencePolicy, Failure> {
    let expected = *cfg.initial_policy()?.config();
    load_checkpoint(path, &expected).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn start_policy(cfg: &RunConfig) -> Result<SoftmaxSequencePolicy, Failure> {
    match &cfg.paths.checkpoint {
        Some(path) => load_policy(cfg, path),
        None => Ok(cfg.initial_policy()?),
    }
}

fn print_report(title: &str, r: &EvalReport) {
    println!("{title} (k={}, temperature={})", r.k, r.temperature);
    println!("{:<10} {:>6} {:>9} {:>9} {:>9}", "band", "n", "pass@k", "avg@k", "min H");
    for row in &r.rows {
        let h = row.min_effective_horizon.map_or("-".to_string(), |h| h.to_string());
        println!("{:<10} {:>6} {:>9.3} {:>9.3} {:>9}", row.band, row.instances, row.pass_at_k, row.avg_at_k, h);
    }
}

fn generate(cfg: &RunConfig, out_dir: &Path) -> Outcome {
    let pipeline = cfg.pipeline_config()?;
    let manifest = run_pipeline(&pipeline, cfg.seed)?;
    let mut out = OutDir::create(out_dir)?;
    write_manifest(&out.path("manifest.jsonl"), &manifest)?;
    for b in &manifest.header.bands {
        println!("{:<10} train {:>5}  test {:>5}", b.label, manifest.count(&b.label, Split::Train), manifest.count(&b.label, Split::Test));
    }
    out.finish(cfg)?;
    Ok(())
}

fn train_cmd(cfg: &RunConfig, out_dir: &Path) -> Outcome {
    let data = Dataset::load(cfg)?;
    let policy = start_policy(cfg)?;
    let train_tasks = data.tasks(Split::Train, &cfg.data.train_bands)?;
    if train_tasks.is_empty() {
        return Err(Failure::Invalid("no training tasks in the selected bands".into()));
    }
    let eval_bands = data.bands(&cfg.eval.bands);
    let test_tasks = data.tasks(Split::Test, &cfg.eval.bands)?;
    let mut out = OutDir::create(out_dir)?;
    data.save_if_generated(&mut out)?;
    log::info!("training on {} task(s) for {} iteration(s)", train_tasks.len(), cfg.trainer_config().total_iterations(train_tasks.len()));
    match train(policy, &train_tasks, &cfg.trainer_config(), &cfg.advantage, &cfg.importance) {
        Ok(o) => {
            out.log("train_log", &o.log)?;
            save_checkpoint(&o.policy, &out.path("checkpoint.json"))?;
            save_checkpoint(&o.best_policy, &out.path("best_checkpoint.json"))?;
            let eval = cfg.eval_config();
            let last = horizon_sweep(&o.policy, &test_tasks, &eval_bands, &eval)?;
            let best = horizon_sweep(&o.best_policy, &test_tasks, &eval_bands, &eval)?;
            out.report("eval_report", &last)?;
            out.report("best_eval_report", &best)?;
            out.finish(cfg)?;
            print_report("final checkpoint, test split", &last);
            println!("best training iterate: {}", o.best_iteration);
            Ok(())
        }
        Err(abort) => {
            out.log("train_log", &abort.log)?;
            save_checkpoint(&abort.policy, &out.path("checkpoint.json"))?;
            out.finish(cfg)?;
            Err(Failure::Aborted(abort.to_string()))
        }
    }
}

fn evaluate_cmd(cfg: &RunConfig, out_dir: &Path) -> Outcome {
    let data = Dataset::load(cfg)?;
    let policy = start_policy(cfg)?;
    let bands = data.bands(&cfg.eval.bands);
    let tasks = data.tasks(Split::Test, &cfg.eval.bands)?;
    let report = horizon_sweep(&policy, &tasks, &bands, &cfg.eval_config())?;
    let mut out = OutDir::create(out_dir)?;
    data.save_if_generated(&mut out)?;
    out.report("eval_report", &report)?;
    out.finish(cfg)?;
    print_report("test split", &report);
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig, out_dir: &Path) -> Outcome {
    let data = Dataset::load(cfg)?;
    let policy = start_policy(cfg)?;
    let baseline = match &cfg.paths.baseline_checkpoint {
        Some(path) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let ck: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
            let fc = ck.feature_config;
            if fc.mode != MacroMode::Atomic || fc.dialect != cfg.dialect() {
                return Err(Failure::Invalid(format!(
                    "baseline checkpoint must be an atomic {} policy, found {} over {:?}",
                    cfg.env,
                    fc.mode,
                    fc.dialect
                )));
            }
            Some(ck.into_policy(&fc).map_err(|e| Failure::Invalid(e.to_string()))?)
        }
        None => None,
    };
    let bands = data.bands(&cfg.eval.bands);
    let tasks = data.tasks(Split::Test, &cfg.eval.bands)?;
    let eval = cfg.eval_config();
    let report = horizon_sweep(&policy, &tasks, &bands, &eval)?;
    let mut out = OutDir::create(out_dir)?;
    data.save_if_generated(&mut out)?;
    out.report("sweep", &report)?;
    print_report("sweep", &report);
    if let Some(base) = baseline {
        let mut atomic = eval.clone();
        atomic.rollout.mode = MacroMode::Atomic;
        let base_report = horizon_sweep(&base, &tasks, &bands, &atomic)?;
        out.report("baseline_sweep", &base_report)?;
        let gaps = sweep_gaps(&report, &base_report);
        write_gaps(&mut out, &gaps)?;
        println!("{:<10} {:>9} {:>9} {:>9}", "band", "reduced", "atomic", "gap");
        for g in &gaps {
            println!("{:<10} {:>9.3} {:>9.3} {:>+9.3}", g.band, g.reduced_avg_at_k, g.atomic_avg_at_k, g.gap);
        }
    }
    out.finish(cfg)?;
    Ok(())
}

fn write_gaps(out: &mut OutDir, gaps: &[SweepGap]) -> anyhow::Result<()> {
    std::fs::write(out.path("gaps.json"), serde_json::to_vec_pretty(gaps)?)?;
    let mut w = csv::Writer::from_path(out.path("gaps.csv"))?;
    for g in gaps {
        w.serialize(g)?;
    }
    w.flush()?;
    Ok(())
}

fn curriculum_cmd(cfg: &RunConfig, out_dir: &Path) -> Outcome {
    if cfg.curriculum.phases.is_empty() {
        return Err(Failure::Invalid("curriculum.phases: a curriculum needs at least one phase".into()));
    }
    let data = Dataset::load(cfg)?;
    let policy = start_policy(cfg)?;
    let plan = cfg.curriculum_plan();
    let train_tasks = data.tasks(Split::Train, &[])?;
    let test_tasks = data.tasks(Split::Test, &[])?;
    let mut out = OutDir::create(out_dir)?;
    data.save_if_generated(&mut out)?;
    let result = run_curriculum(
        &plan,
        policy,
        &train_tasks,
        &test_tasks,
        &data.manifest.header.bands,
        &cfg.advantage,
        &cfg.importance,
        &cfg.eval_config(),
    );
    match result {
        Ok(o) => {
            for (i, p) in o.phases.iter().enumerate() {
                out.log(&format!("phase{}_{}", i + 1, p.name), &p.log)?;
            }
            save_checkpoint(&o.policy, &out.path("checkpoint.json"))?;
            out.report("eval_report", &o.final_report)?;
            out.report("best_eval_report", &o.best_report)?;
            out.finish(cfg)?;
            print_report("curriculum, final checkpoint", &o.final_report);
            Ok(())
        }
        Err(abort) => {
            for (i, p) in abort.completed.iter().enumerate() {
                out.log(&format!("phase{}_{}", i + 1, p.name), &p.log)?;
            }
            let name = plan.phases.get(abort.phase).map_or("unknown", |p| p.name.as_str());
            out.log(&format!("phase{}_{}", abort.phase + 1, name), &abort.abort.log)?;
            save_checkpoint(&abort.abort.policy, &out.path("checkpoint.json"))?;
            out.finish(cfg)?;
            Err(Failure::Aborted(abort.to_string()))
        }
    }
}

fn selftest_cmd(cfg: &RunConfig, out_dir: Option<&Path>) -> Outcome {
    let checks = selftest::run(cfg.seed);
    for c in &checks {
        let status = if c.passed { "ok  " } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{status} {}", c.name);
        } else {
            println!("{status} {}: {}", c.name, c.detail);
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let json = serde_json::to_vec_pretty(&checks).context("serializing checks")?;
        std::fs::write(dir.join("selftest.json"), json).context("writing selftest.json")?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(anyhow::anyhow!("{failed} self-check(s) failed")));
    }
    Ok(())
}
