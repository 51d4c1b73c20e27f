//! Study runner: executes the stages in dependency order, persists every
//! artifact under one output directory, and resumes from a manifest.
//!
//! Output layout:
//!
//! ```text
//! <out>/manifest.json
//! <out>/onboarding/{enriched.jsonl, summary.json}
//! <out>/screening/{team.jsonl, state.json, distribution_*.{csv,txt}}
//! <out>/experiencing/{transcripts/<player>__<npc>.jsonl, summary.json}
//! <out>/feedback/{interviews.jsonl, think_aloud.jsonl, questionnaire.jsonl, summary.json}
//! <out>/analysis/...
//! ```
//!
//! Nothing written depends on wall-clock time or thread scheduling, so a
//! mock-backend run is reproducible byte for byte.

pub mod config;
mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{
    AnalysisSection, ExperiencingSection, FeedbackSection, OnboardingSection, PoolSection, ScreeningSection, Stage,
    StudyConfig,
};
pub use stages::report;

use crate::gateway::{Gateway, UsageTotals};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot run {stage}: {needs} has not completed")]
    NotReady { stage: Stage, needs: Stage },
    #[error("{stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl StudyError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    #[default]
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageUsage {
    pub requests: u64,
    pub failures: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
}

impl StageUsage {
    fn from_gateway(gw: &Gateway) -> Self {
        let t: UsageTotals = gw.totals();
        Self {
            requests: t.requests,
            failures: t.failures,
            input_tokens: t.usage.input_tokens,
            output_tokens: t.usage.output_tokens,
            // Recomputed from token totals so the figure does not depend on
            // the order in which parallel responses were summed.
            cost: gw.config().price_table.cost(t.usage),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    pub seed: u64,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub usage: StageUsage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyState {
    pub study: String,
    pub seed: u64,
    pub config_digest: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

pub const MANIFEST: &str = "manifest.json";

impl StudyState {
    pub fn new(cfg: &StudyConfig) -> Self {
        Self {
            study: cfg.name.clone(),
            seed: cfg.seed,
            config_digest: cfg.digest.clone(),
            stages: Stage::ALL
                .iter()
                .map(|s| {
                    (
                        *s,
                        StageRecord {
                            seed: crate::rng::derive_seed(cfg.seed, s.as_str()),
                            ..Default::default()
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn load(out: &Path) -> Result<Option<Self>, StudyError> {
        let path = out.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| StudyError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| StudyError::Io(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, out: &Path) -> Result<(), StudyError> {
        let text = serde_json::to_string_pretty(self).expect("state serializes") + "\n";
        write_atomic(&out.join(MANIFEST), text.as_bytes())
    }

    pub fn status(&self, stage: Stage) -> StageStatus {
        self.stages.get(&stage).map(|r| r.status).unwrap_or_default()
    }

    fn record(&mut self, stage: Stage) -> &mut StageRecord {
        self.stages.entry(stage).or_default()
    }

    /// Summed usage over all stages.
    pub fn total_usage(&self) -> StageUsage {
        let mut t = StageUsage::default();
        for r in self.stages.values() {
            t.requests += r.usage.requests;
            t.failures += r.usage.failures;
            t.input_tokens += r.usage.input_tokens;
            t.output_tokens += r.usage.output_tokens;
            t.cost += r.usage.cost;
        }
        t
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stages to run; all when `None`.
    pub stages: Option<Vec<Stage>>,
    /// Skip stages already marked done and keep finished transcripts.
    pub resume: bool,
}

/// Write through a temporary file so a crash never leaves a torn artifact.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StudyError> {
    let io = |e: std::io::Error| StudyError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Run the requested stages of a study.
pub fn run_study(cfg: &StudyConfig, options: &RunOptions) -> Result<StudyState, StudyError> {
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out).map_err(|e| StudyError::Io(format!("{}: {e}", out.display())))?;
    let mut state = match StudyState::load(out)? {
        Some(s) if s.config_digest == cfg.digest => s,
        Some(_) if options.resume => {
            return Err(StudyError::Config(format!(
                "{} holds a run of a different configuration; rerun without --resume to start over",
                out.display()
            )))
        }
        _ => StudyState::new(cfg),
    };

    let mut requested: Vec<Stage> = options.stages.clone().unwrap_or_else(|| Stage::ALL.to_vec());
    requested.sort();
    requested.dedup();

    let mut i = 0;
    while i < requested.len() {
        let stage = requested[i];
        i += 1;
        if options.resume && state.status(stage) == StageStatus::Done {
            log::info!("{stage}: already done, skipping");
            continue;
        }
        let pipelined = stage == Stage::Onboarding && requested.get(i) == Some(&Stage::Screening);
        if let Some(needs) = stage.input() {
            if state.status(needs) != StageStatus::Done {
                return Err(StudyError::NotReady { stage, needs });
            }
        }
        invalidate_from(&mut state, out, stage, options.resume)?;
        if pipelined {
            invalidate_from(&mut state, out, Stage::Screening, false)?;
            i += 1;
        }
        for s in [Some(stage), pipelined.then_some(Stage::Screening)]
            .into_iter()
            .flatten()
        {
            let r = state.record(s);
            r.status = StageStatus::Running;
            r.error = None;
        }
        state.save(out)?;
        log::info!("{stage}: running{}", if pipelined { " with screening" } else { "" });

        let outcome = match stage {
            Stage::Onboarding => stages::recruit(cfg, out, pipelined),
            Stage::Screening => stages::screen_from_file(cfg, out).map(|s| vec![(Stage::Screening, s)]),
            Stage::Experiencing => stages::experience(cfg, out, options.resume).map(|s| vec![(stage, s)]),
            Stage::Feedback => stages::feedback(cfg, out).map(|s| vec![(stage, s)]),
            Stage::Analysis => stages::analyze(cfg, out, &state).map(|s| vec![(stage, s)]),
        };
        match outcome {
            Ok(results) => {
                for (s, result) in results {
                    let r = state.record(s);
                    r.status = StageStatus::Done;
                    r.artifacts = result.artifacts;
                    r.usage = result.usage;
                }
                state.save(out)?;
            }
            Err(e) => {
                let code_is_config = matches!(e, StudyError::Config(_));
                for s in [Some(stage), pipelined.then_some(Stage::Screening)]
                    .into_iter()
                    .flatten()
                {
                    let r = state.record(s);
                    r.status = StageStatus::Failed;
                    r.error = Some(e.to_string());
                }
                state.save(out)?;
                return Err(if code_is_config {
                    e
                } else {
                    match e {
                        StudyError::Stage { .. } => e,
                        other => StudyError::Stage {
                            stage,
                            message: other.to_string(),
                        },
                    }
                });
            }
        }
    }
    Ok(state)
}

/// Reset `stage` and everything downstream of it. The stage's own directory
/// survives when resuming so finished partial work can be reused.
fn invalidate_from(state: &mut StudyState, out: &Path, stage: Stage, keep_own: bool) -> Result<(), StudyError> {
    for s in Stage::ALL.into_iter().filter(|s| *s >= stage) {
        let dir = out.join(s.as_str());
        if !(s == stage && keep_own) && dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| StudyError::Io(format!("{}: {e}", dir.display())))?;
        }
        let r = state.record(s);
        r.status = StageStatus::Pending;
        r.artifacts.clear();
        r.usage = StageUsage::default();
        r.error = None;
    }
    Ok(())
}
