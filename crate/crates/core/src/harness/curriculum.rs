use serde::{Deserialize, Serialize};

use super::{evaluate, EvalConfig, EvalReport};
use crate::datasets::LevelBand;
use crate::env::TaskInstance;
use crate::error::{Error, Result};
use crate::policy::SoftmaxSequencePolicy;
use crate::rl::{train, AdvantageConfig, IsConfig, TrainAbort, TrainerConfig, TrainingLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPhase {
    pub name: String,
    /// Labels of the training bands.
    pub bands: Vec<String>,
    pub trainer: TrainerConfig,
}

/// Each phase starts from the previous phase's final policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPlan {
    pub phases: Vec<CurriculumPhase>,
    /// Bands of the final evaluation; the last phase's bands when empty.
    pub eval_bands: Vec<String>,
}

impl CurriculumPlan {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if self.phases.is_empty() {
            v.push(("curriculum.phases".into(), "a curriculum needs at least one phase".into()));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.bands.is_empty() {
                v.push((format!("curriculum.phases[{i}].bands"), "phase selects no bands".into()));
            }
            for (k, m) in p.trainer.violations() {
                v.push((format!("curriculum.phases[{i}].{k}"), m));
            }
        }
        v
    }

    fn eval_bands(&self) -> &[String] {
        if self.eval_bands.is_empty() {
            self.phases.last().map_or(&[], |p| &p.bands)
        } else {
            &self.eval_bands
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhaseResult {
    pub name: String,
    pub log: TrainingLog,
    pub best_iteration: usize,
}

#[derive(Clone, Debug)]
pub struct CurriculumOutcome {
    pub phases: Vec<PhaseResult>,
    pub policy: SoftmaxSequencePolicy,
    /// Final iterate on the evaluation bands.
    pub final_report: EvalReport,
    /// Best training iterate of the last phase, on the same bands.
    pub best_report: EvalReport,
}

/// A phase hit the trainer's non-finite guard; earlier phases are kept.
#[derive(Debug, thiserror::Error)]
#[error("curriculum phase {phase} aborted: {abort}")]
pub struct CurriculumAbort {
    pub phase: usize,
    pub completed: Vec<PhaseResult>,
    pub abort: Box<TrainAbort>,
}

fn select(tasks: &[TaskInstance], bands: &[String]) -> Vec<TaskInstance> {
    tasks.iter().filter(|t| bands.contains(&t.level)).cloned().collect::<Vec<_>>()
}

/// Trains the phases in order and evaluates the final policy on held-out
/// tasks of the evaluation bands.
#[allow(clippy::too_many_arguments)]
pub fn run_curriculum(
    plan: &CurriculumPlan,
    init: SoftmaxSequencePolicy,
    train_tasks: &[TaskInstance],
    eval_tasks: &[TaskInstance],
    bands: &[LevelBand],
    adv: &AdvantageConfig,
    is: &IsConfig,
    eval: &EvalConfig,
) -> std::result::Result<CurriculumOutcome, CurriculumAbort> {
    let fail = |phase, completed, error: Error, policy| CurriculumAbort {
        phase,
        completed,
        abort: Box::new(TrainAbort { iteration: 0, error, log: TrainingLog::default(), policy }),
    };
    let problems = plan.violations();
    if !problems.is_empty() {
        let msg: Vec<String> = problems.into_iter().map(|(k, m)| format!("{k}: {m}")).collect();
        return Err(fail(0, Vec::new(), Error::Domain(msg.join("; ")), init));
    }
    let mut policy = init;
    let mut completed = Vec::new();
    let mut best = policy.clone();
    for (i, phase) in plan.phases.iter().enumerate() {
        let tasks = select(train_tasks, &phase.bands);
        if tasks.is_empty() {
            return Err(fail(i, completed, Error::domain(format!("phase {} has no training tasks", phase.name)), policy));
        }
        match train(policy, &tasks, &phase.trainer, adv, is) {
            Ok(out) => {
                completed.push(PhaseResult { name: phase.name.clone(), log: out.log, best_iteration: out.best_iteration });
                policy = out.policy;
                best = out.best_policy;
            }
            Err(abort) => return Err(CurriculumAbort { phase: i, completed, abort }),
        }
    }
    let eval_bands: Vec<LevelBand> =
        bands.iter().filter(|b| plan.eval_bands().contains(&b.label)).cloned().collect();
    let run = |p: &SoftmaxSequencePolicy| -> Result<EvalReport> { evaluate(p, eval_tasks, &eval_bands, eval) };
    let reports = run(&policy).and_then(|f| run(&best).map(|b| (f, b)));
    match reports {
        Ok((final_report, best_report)) => Ok(CurriculumOutcome { phases: completed, policy, final_report, best_report }),
        Err(e) => {
            let n = completed.len();
            Err(fail(n, completed, e, policy))
        }
    }
}
