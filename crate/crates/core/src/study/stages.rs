//! Stage bodies for the study runner.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;

use super::{write_atomic, Stage, StageUsage, StudyConfig, StudyError, StudyState, MANIFEST};
use crate::analysis::{
    apply_synonyms, code_frequency, cost_time_report, doubling_sizes, equivalency_ratio, expected_coverage, icc_2_1,
    load_coded, of_study, study_codes, subsample_coverage, venn_overlap, AnalysisError, Codebook, CodedTranscript,
    CostTimeLedger, ExpertPacket, RatingTable, Study, Synonyms,
};
use crate::experiencing::{
    load_npc_dir, run_team, transcript_id, ActionType, InteractionOptions, NpcFixture, Termination, Transcript,
};
use crate::feedback::{self, InterviewScript};
use crate::gateway::Gateway;
use crate::onboarding::{
    run_onboarding, BartleType, EnrichedProfile, EnrichedRecord, IntakeSurvey, OnboardingEvent, OnboardingOptions,
    Trait,
};
use crate::pool::{BasicProfile, Registry};
use crate::rng::{derive_seed, SeededRng};
use crate::screening::{
    distribution_report, screen_stream, AcceptedRecord, CurvingRule, QuotaSpec, Screener, ScreeningState,
};
use crate::workers::CancelToken;

pub(super) struct StageResult {
    pub artifacts: Vec<String>,
    pub usage: StageUsage,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StudyError + '_ {
    move |e| StudyError::Io(format!("{}: {e}", path.display()))
}

fn config_err(e: impl std::fmt::Display) -> StudyError {
    StudyError::Config(e.to_string())
}

fn fail(stage: Stage) -> impl Fn(String) -> StudyError {
    move |message| StudyError::Stage { stage, message }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, &r).expect("serializable");
        out.push(b'\n');
    }
    out
}

fn read_jsonl<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StudyError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| StudyError::Io(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn gateway(cfg: &StudyConfig, stage: Stage) -> Result<Gateway, StudyError> {
    Gateway::new(cfg.backend_for(stage)).map_err(config_err)
}

/// The sampled profile stream, in draw order.
pub(super) fn sample(cfg: &StudyConfig) -> Result<Vec<BasicProfile>, StudyError> {
    let registry = Registry::load_manifest(&cfg.pool.registry).map_err(config_err)?;
    let mut all = Vec::new();
    for name in &cfg.pool.pools {
        let pool = registry.get(name).map_err(config_err)?;
        all.extend(pool.profiles().iter().cloned());
    }
    let n = cfg.pool.sample_size.unwrap_or(all.len());
    if n > all.len() {
        return Err(StudyError::Config(format!(
            "sample_size {n} exceeds the {} profiles available",
            all.len()
        )));
    }
    let mut rng = SeededRng::new(derive_seed(cfg.seed, "pool"));
    Ok(rng
        .sample_indices(all.len(), n)
        .into_iter()
        .map(|i| all[i].clone())
        .collect())
}

fn curving_rule(cfg: &StudyConfig) -> CurvingRule {
    CurvingRule {
        dimensions: cfg.screening.dimensions.clone().unwrap_or_else(|| Trait::ALL.to_vec()),
        reference: cfg.screening.reference_group,
    }
}

fn load_surveys(cfg: &StudyConfig) -> Result<Vec<IntakeSurvey>, StudyError> {
    cfg.onboarding
        .surveys
        .iter()
        .map(|p| IntakeSurvey::load(p).map_err(config_err))
        .collect()
}

fn load_quota(cfg: &StudyConfig) -> Result<QuotaSpec, StudyError> {
    QuotaSpec::load(&cfg.screening.quota).map_err(config_err)
}

const ENRICHED: &str = "onboarding/enriched.jsonl";
const ONBOARDING_SUMMARY: &str = "onboarding/summary.json";
const TEAM: &str = "screening/team.jsonl";
const SCREENING_STATE: &str = "screening/state.json";
const TRANSCRIPTS: &str = "experiencing/transcripts";
const EXPERIENCING_SUMMARY: &str = "experiencing/summary.json";
const INTERVIEWS: &str = "feedback/interviews.jsonl";
const QUESTIONNAIRE: &str = "feedback/questionnaire.jsonl";
const THINK_ALOUD: &str = "feedback/think_aloud.jsonl";
const FEEDBACK_SUMMARY: &str = "feedback/summary.json";

/// Onboarding, optionally pipelined with screening under early stop.
pub(super) fn recruit(cfg: &StudyConfig, out: &Path, screen: bool) -> Result<Vec<(Stage, StageResult)>, StudyError> {
    let profiles = sample(cfg)?;
    let surveys = load_surveys(cfg)?;
    let gw = gateway(cfg, Stage::Onboarding)?;
    let cancel = CancelToken::new();
    let screener = if screen {
        Some(Mutex::new(
            Screener::new(
                load_quota(cfg)?,
                curving_rule(cfg),
                cfg.screening.checkpoint_every,
                cancel.clone(),
            )
            .map_err(config_err)?,
        ))
    } else {
        None
    };
    if screener
        .as_ref()
        .is_some_and(|s| s.lock().expect("screener").is_stopped())
    {
        cancel.cancel();
    }

    let path = out.join(ENRICHED);
    fs::create_dir_all(out.join("onboarding")).map_err(io_err(out))?;
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let writer = Mutex::new((std::io::BufWriter::new(file), None::<std::io::Error>));
    let surveyed = Mutex::new(Vec::new());
    let sink = |ev: OnboardingEvent| {
        let Ok(profile) = ev.outcome else { return };
        {
            let mut w = writer.lock().expect("writer");
            if w.1.is_none() {
                let line = serde_json::to_string(&profile.to_record()).expect("record serializes");
                if let Err(e) = writeln!(w.0, "{line}") {
                    w.1 = Some(e);
                }
            }
        }
        if let Some(s) = &screener {
            s.lock().expect("screener").offer(profile.clone());
        }
        surveyed.lock().expect("surveyed").push((ev.index, profile));
    };
    let options = OnboardingOptions {
        workers: cfg.onboarding.workers,
        // Waves delivered in input order keep the surveyed set and the
        // accepted team independent of thread timing.
        lockstep: true,
    };
    let summary = run_onboarding(&profiles, &surveys, &gw, &sink, &cancel, options)
        .map_err(|e| fail(Stage::Onboarding)(e.to_string()))?;
    let (mut w, err) = writer.into_inner().expect("writer");
    if let Some(e) = err {
        return Err(io_err(&path)(e));
    }
    w.flush().map_err(io_err(&path))?;
    write_atomic(&out.join(ONBOARDING_SUMMARY), &to_json(&summary))?;
    log::info!(
        "onboarding: {} emitted, {} skipped, {} cancelled of {}",
        summary.emitted,
        summary.skipped,
        summary.cancelled,
        summary.input
    );

    let mut results = vec![(
        Stage::Onboarding,
        StageResult {
            artifacts: vec![ENRICHED.into(), ONBOARDING_SUMMARY.into()],
            usage: StageUsage::from_gateway(&gw),
        },
    )];
    if let Some(s) = screener {
        let state = s.into_inner().expect("screener").finish();
        let mut surveyed = surveyed.into_inner().expect("surveyed");
        surveyed.sort_by_key(|(i, _)| *i);
        let surveyed: Vec<EnrichedProfile> = surveyed.into_iter().map(|(_, p)| p).collect();
        let artifacts = write_screening(cfg, out, &state, &surveyed)?;
        results.push((
            Stage::Screening,
            StageResult {
                artifacts,
                usage: StageUsage::default(),
            },
        ));
    }
    Ok(results)
}

/// Enriched profiles from the onboarding artifact, in emission order.
fn load_enriched(cfg: &StudyConfig, out: &Path) -> Result<Vec<EnrichedProfile>, StudyError> {
    let basics: BTreeMap<String, BasicProfile> = sample(cfg)?.into_iter().map(|p| (p.profile_id.clone(), p)).collect();
    let records: Vec<EnrichedRecord> = read_jsonl(&out.join(ENRICHED))?;
    records
        .into_iter()
        .map(|r| {
            let basic = basics.get(&r.profile_id).cloned().ok_or_else(|| {
                StudyError::Io(format!("{ENRICHED}: profile {:?} is not in the sample", r.profile_id))
            })?;
            Ok(r.into_profile(basic))
        })
        .collect()
}

/// Screening alone, over the stored onboarding output.
pub(super) fn screen_from_file(cfg: &StudyConfig, out: &Path) -> Result<StageResult, StudyError> {
    let surveyed = load_enriched(cfg, out)?;
    let state = screen_stream(
        surveyed.iter().cloned(),
        load_quota(cfg)?,
        curving_rule(cfg),
        cfg.screening.checkpoint_every,
        CancelToken::new(),
    )
    .map_err(config_err)?;
    Ok(StageResult {
        artifacts: write_screening(cfg, out, &state, &surveyed)?,
        usage: StageUsage::default(),
    })
}

#[derive(Serialize)]
struct ScreeningSummary<'a> {
    accepted: usize,
    stopped: bool,
    seen: usize,
    checkpoints: usize,
    released: usize,
    tallies: &'a BTreeMap<String, u32>,
    targets: BTreeMap<String, u32>,
    pool_statistics: &'a crate::screening::PoolStatistics,
}

fn write_screening(
    cfg: &StudyConfig,
    out: &Path,
    state: &ScreeningState,
    surveyed: &[EnrichedProfile],
) -> Result<Vec<String>, StudyError> {
    let quota = load_quota(cfg)?;
    let summary = ScreeningSummary {
        accepted: state.accepted.len(),
        stopped: state.stopped,
        seen: state.seen,
        checkpoints: state.checkpoints,
        released: state.released,
        tallies: &state.tallies,
        targets: quota.cells.iter().map(|c| (c.name.clone(), c.target)).collect(),
        pool_statistics: &state.pool_statistics,
    };
    write_atomic(&out.join(TEAM), &jsonl(state.accepted.iter().map(|a| a.to_record())))?;
    write_atomic(&out.join(SCREENING_STATE), &to_json(&summary))?;
    let mut artifacts = vec![TEAM.to_string(), SCREENING_STATE.to_string()];
    let rule = curving_rule(cfg);
    let team: Vec<EnrichedProfile> = state.accepted.iter().map(|a| a.profile.clone()).collect();
    for (label, set) in [("before", surveyed), ("after", team.as_slice())] {
        if set.is_empty() {
            continue;
        }
        let report = distribution_report(set, &rule).map_err(config_err)?;
        for (ext, body) in [("csv", report.to_csv()), ("txt", report.to_table())] {
            let rel = format!("screening/distribution_{label}.{ext}");
            write_atomic(&out.join(&rel), body.as_bytes())?;
            artifacts.push(rel);
        }
    }
    log::info!(
        "screening: {} accepted after {} profiles",
        state.accepted.len(),
        state.seen
    );
    Ok(artifacts)
}

/// The accepted team as enriched profiles, in team order.
fn load_team(cfg: &StudyConfig, out: &Path) -> Result<Vec<EnrichedProfile>, StudyError> {
    let enriched: BTreeMap<String, EnrichedProfile> = load_enriched(cfg, out)?
        .into_iter()
        .map(|p| (p.basic.profile_id.clone(), p))
        .collect();
    let team: Vec<AcceptedRecord> = read_jsonl(&out.join(TEAM))?;
    team.into_iter()
        .map(|a| {
            enriched
                .get(&a.profile_id)
                .cloned()
                .ok_or_else(|| StudyError::Io(format!("{TEAM}: {:?} missing from onboarding output", a.profile_id)))
        })
        .collect()
}

fn load_npcs(cfg: &StudyConfig) -> Result<Vec<NpcFixture>, StudyError> {
    let mut npcs = load_npc_dir(&cfg.experiencing.npcs).map_err(config_err)?;
    if npcs.is_empty() {
        return Err(StudyError::Config(format!(
            "no NPC fixtures in {}",
            cfg.experiencing.npcs.display()
        )));
    }
    if let Some(n) = cfg.experiencing.interactions_per_player {
        if n > npcs.len() {
            return Err(StudyError::Config(format!(
                "interactions_per_player {n} exceeds the {} NPC fixtures",
                npcs.len()
            )));
        }
        npcs.truncate(n);
    }
    Ok(npcs)
}

fn transcript_path(out: &Path, player: &str, npc: &str) -> std::path::PathBuf {
    out.join(TRANSCRIPTS)
        .join(format!("{}.jsonl", transcript_id(player, npc)))
}

/// Every transcript of one player, or `None` if any is missing or torn.
fn read_player(out: &Path, player: &str, npcs: &[NpcFixture]) -> Option<Vec<Transcript>> {
    npcs.iter()
        .map(|n| Transcript::read(&transcript_path(out, player, &n.npc_id)).ok())
        .collect()
}

#[derive(Serialize)]
struct ExperiencingSummary {
    players: usize,
    encounters: usize,
    terminations: BTreeMap<String, usize>,
    player_turns: usize,
    malformed_turns: usize,
    aborted: Vec<String>,
}

pub(super) fn experience(cfg: &StudyConfig, out: &Path, resume: bool) -> Result<StageResult, StudyError> {
    let team = load_team(cfg, out)?;
    if team.is_empty() {
        return Err(fail(Stage::Experiencing)(
            "empty team: screening accepted no profiles".into(),
        ));
    }
    let npcs = load_npcs(cfg)?;
    let gw = gateway(cfg, Stage::Experiencing)?;
    let dir = out.join(TRANSCRIPTS);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let pending: Vec<EnrichedProfile> = team
        .iter()
        .filter(|p| !(resume && read_player(out, p.id(), &npcs).is_some()))
        .cloned()
        .collect();
    if pending.len() < team.len() {
        log::info!("experiencing: reusing {} finished players", team.len() - pending.len());
    }
    let options = InteractionOptions {
        max_turns: cfg.experiencing.max_turns,
        malformed_retries: cfg.experiencing.malformed_retries,
        temperature: cfg.experiencing.temperature,
        ..InteractionOptions::default()
    };
    let write_failure = Mutex::new(None::<StudyError>);
    let sink = |_: usize, ts: &[Transcript]| {
        for t in ts {
            if let Err(e) = write_atomic(
                &transcript_path(out, &t.player, &t.counterpart),
                t.to_jsonl().as_bytes(),
            ) {
                write_failure.lock().expect("failure slot").get_or_insert(e);
            }
        }
    };
    let results = run_team(&pending, &npcs, &gw, &options, cfg.experiencing.workers, &sink);
    if let Some(e) = write_failure.into_inner().expect("failure slot") {
        return Err(e);
    }
    for (p, r) in pending.iter().zip(&results) {
        if let Err(e) = r {
            return Err(fail(Stage::Experiencing)(format!("player {}: {e}", p.id())));
        }
    }

    let mut summary = ExperiencingSummary {
        players: team.len(),
        encounters: 0,
        terminations: BTreeMap::new(),
        player_turns: 0,
        malformed_turns: 0,
        aborted: Vec::new(),
    };
    for p in &team {
        let ts = read_player(out, p.id(), &npcs)
            .ok_or_else(|| fail(Stage::Experiencing)(format!("transcripts of {} are incomplete", p.id())))?;
        for t in ts {
            summary.encounters += 1;
            *summary.terminations.entry(termination_name(t.termination)).or_default() += 1;
            summary.player_turns += t.player_turns().count();
            summary.malformed_turns += t.turns.iter().filter(|x| x.is_malformed()).count();
            if t.termination == Termination::Aborted {
                summary.aborted.push(t.id());
            }
        }
    }
    write_atomic(&out.join(EXPERIENCING_SUMMARY), &to_json(&summary))?;
    log::info!("experiencing: {} encounters", summary.encounters);
    Ok(StageResult {
        artifacts: vec![format!("{TRANSCRIPTS}/"), EXPERIENCING_SUMMARY.into()],
        usage: StageUsage::from_gateway(&gw),
    })
}

fn termination_name(t: Termination) -> String {
    serde_json::to_value(t)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn team_with_transcripts(cfg: &StudyConfig, out: &Path) -> Result<Vec<(EnrichedProfile, Vec<Transcript>)>, StudyError> {
    let npcs = load_npcs(cfg)?;
    load_team(cfg, out)?
        .into_iter()
        .map(|p| {
            let ts = read_player(out, p.id(), &npcs)
                .ok_or_else(|| StudyError::Io(format!("transcripts of {} are missing or incomplete", p.id())))?;
            Ok((p, ts))
        })
        .collect()
}

#[derive(Serialize)]
struct FeedbackSummary {
    agents: usize,
    interviews_complete: usize,
    interview_items: usize,
    questionnaires_complete: Option<usize>,
    think_aloud_segments: Option<usize>,
}

pub(super) fn feedback(cfg: &StudyConfig, out: &Path) -> Result<StageResult, StudyError> {
    let agents = team_with_transcripts(cfg, out)?;
    let script = match &cfg.feedback.interview {
        Some(p) => InterviewScript::load(p).map_err(config_err)?,
        None => InterviewScript::default_script(),
    };
    let gw = gateway(cfg, Stage::Feedback)?;
    let interviews = feedback::run_feedback(&agents, &script, &gw, cfg.feedback.workers);
    write_atomic(&out.join(INTERVIEWS), &jsonl(&interviews))?;
    let mut artifacts = vec![INTERVIEWS.to_string()];
    let mut summary = FeedbackSummary {
        agents: agents.len(),
        interviews_complete: interviews.iter().filter(|r| r.is_complete()).count(),
        interview_items: interviews.iter().map(|r| r.items.len()).sum(),
        questionnaires_complete: None,
        think_aloud_segments: None,
    };
    if let Some(path) = &cfg.feedback.questionnaire {
        let survey = IntakeSurvey::load(path).map_err(config_err)?;
        let records = feedback::run_questionnaire(&agents, &survey, &gw, cfg.feedback.workers);
        summary.questionnaires_complete = Some(records.iter().filter(|r| r.is_complete()).count());
        write_atomic(&out.join(QUESTIONNAIRE), &jsonl(&records))?;
        artifacts.push(QUESTIONNAIRE.into());
    }
    if cfg.feedback.think_aloud_digest {
        let digests: Vec<_> = agents
            .iter()
            .map(|(p, ts)| feedback::think_aloud_digest(p.id(), ts))
            .collect();
        summary.think_aloud_segments = Some(digests.iter().map(|d| d.items.len()).sum());
        write_atomic(&out.join(THINK_ALOUD), &jsonl(&digests))?;
        artifacts.push(THINK_ALOUD.into());
    }
    write_atomic(&out.join(FEEDBACK_SUMMARY), &to_json(&summary))?;
    artifacts.push(FEEDBACK_SUMMARY.into());
    Ok(StageResult {
        artifacts,
        usage: StageUsage::from_gateway(&gw),
    })
}

#[derive(Serialize)]
struct RunOverview {
    team_size: usize,
    bartle: BTreeMap<BartleType, usize>,
    mean_player_turns: BTreeMap<BartleType, f64>,
    d_end_rate: BTreeMap<BartleType, f64>,
    total_requests: u64,
    total_cost: f64,
    cost_per_player: f64,
}

#[derive(Serialize)]
struct Equivalency {
    human_transcripts: usize,
    human_codes: usize,
    threshold: f64,
    size_at_threshold: Option<usize>,
    ratio: Option<f64>,
    coverage_at_full_team: f64,
    message: Option<String>,
}

fn analysis_err(e: AnalysisError) -> StudyError {
    fail(Stage::Analysis)(e.to_string())
}

pub(super) fn analyze(cfg: &StudyConfig, out: &Path, state: &StudyState) -> Result<StageResult, StudyError> {
    let mut artifacts = Vec::new();
    let mut put = |rel: &str, bytes: Vec<u8>| -> Result<(), StudyError> {
        write_atomic(&out.join(rel), &bytes)?;
        artifacts.push(rel.to_string());
        Ok(())
    };

    // Behaviour of the simulated team itself.
    let agents = team_with_transcripts(cfg, out)?;
    let mut bartle: BTreeMap<BartleType, usize> = BTreeMap::new();
    let mut turns: BTreeMap<BartleType, (usize, usize, usize)> = BTreeMap::new();
    let mut actions: BTreeMap<(BartleType, ActionType), usize> = BTreeMap::new();
    for (p, ts) in &agents {
        *bartle.entry(p.bartle_type).or_default() += 1;
        for t in ts {
            let e = turns.entry(p.bartle_type).or_default();
            e.0 += 1;
            e.1 += t.player_turns().count();
            e.2 += usize::from(t.termination == Termination::GoalReachedDEnd);
            for turn in t.player_turns() {
                for ev in &turn.events {
                    *actions.entry((p.bartle_type, ev.action)).or_default() += 1;
                }
            }
        }
    }
    let usage = state.total_usage();
    let overview = RunOverview {
        team_size: agents.len(),
        bartle,
        mean_player_turns: turns.iter().map(|(b, (n, t, _))| (*b, *t as f64 / *n as f64)).collect(),
        d_end_rate: turns.iter().map(|(b, (n, _, d))| (*b, *d as f64 / *n as f64)).collect(),
        total_requests: usage.requests,
        total_cost: usage.cost,
        cost_per_player: if agents.is_empty() {
            0.0
        } else {
            usage.cost / agents.len() as f64
        },
    };
    put("analysis/run_overview.json", to_json(&overview))?;
    let mut csv = String::from("bartle_type,action,count\n");
    for ((b, a), n) in &actions {
        csv.push_str(&format!("{b},{},{n}\n", a.tag()));
    }
    put("analysis/action_usage.csv", csv.into_bytes())?;

    let a = &cfg.analysis;
    if let (Some(coded_path), Some(book_path)) = (&a.coded, &a.codebook) {
        let book = Codebook::load(book_path).map_err(config_err)?;
        let mut coded: Vec<CodedTranscript> = load_coded(coded_path).map_err(config_err)?;
        if let Some(s) = &a.synonyms {
            coded = apply_synonyms(&coded, &Synonyms::load(s).map_err(config_err)?);
        }
        book.check(&coded).map_err(analysis_err)?;
        let agent = of_study(&coded, Study::Agentic);
        let sizes = doubling_sizes(agent.len());
        let seed = derive_seed(cfg.seed, Stage::Analysis.as_str());
        let mut equivalency = BTreeMap::new();
        for study in [Study::Local, Study::Crowdsourced] {
            let humans = of_study(&coded, study);
            if humans.is_empty() {
                continue;
            }
            let human = study_codes(&coded, study);
            let curve = subsample_coverage(&agent, &human, &sizes, a.repeats, seed).map_err(analysis_err)?;
            let mut body = String::from("size,mean_coverage,expected_coverage\n");
            for (size, mean) in curve.sizes.iter().zip(&curve.means) {
                let exact = expected_coverage(&agent, &human, *size).map_err(analysis_err)?;
                body.push_str(&format!("{size},{mean:.6},{exact:.6}\n"));
            }
            put(&format!("analysis/coverage_{study}.csv"), body.into_bytes())?;
            let ratio = equivalency_ratio(&curve, humans.len(), a.threshold);
            equivalency.insert(
                study,
                Equivalency {
                    human_transcripts: humans.len(),
                    human_codes: human.len(),
                    threshold: a.threshold,
                    size_at_threshold: ratio.as_ref().ok().map(|r| (r * humans.len() as f64).round() as usize),
                    ratio: ratio.as_ref().ok().copied(),
                    coverage_at_full_team: *curve.means.last().unwrap_or(&0.0),
                    message: ratio.err().map(|e| e.to_string()),
                },
            );
        }
        put("analysis/equivalency.json", to_json(&equivalency))?;
        let venn = venn_overlap(
            &study_codes(&coded, Study::Local),
            &study_codes(&coded, Study::Crowdsourced),
            &study_codes(&coded, Study::Agentic),
        );
        put("analysis/venn.csv", venn.to_csv().into_bytes())?;
    }
    if let (Some(coded_path), Some(book_path)) = (&a.frequency_coded, &a.frequency_codebook) {
        let book = Codebook::load(book_path).map_err(config_err)?;
        let coded = load_coded(coded_path).map_err(config_err)?;
        book.check(&coded).map_err(analysis_err)?;
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["code_id", "label", "count"])
            .expect("in-memory write");
        for c in code_frequency(&coded) {
            let label = book.get(&c.code_id).map(|x| x.label.as_str()).unwrap_or("");
            wtr.write_record([c.code_id.as_str(), label, &c.count.to_string()])
                .expect("in-memory write");
        }
        put(
            "analysis/code_frequency.csv",
            wtr.into_inner().expect("in-memory write"),
        )?;
    }
    if let Some(path) = &a.ratings {
        let table = RatingTable::load(path).map_err(config_err)?;
        let m = table.rater_matrix().map_err(analysis_err)?;
        let icc = icc_2_1(&m).map_err(analysis_err)?;
        #[derive(Serialize)]
        struct Icc {
            raters: usize,
            items: usize,
            icc_2_1: f64,
        }
        put(
            "analysis/expert_icc.json",
            to_json(&Icc {
                raters: m.len(),
                items: m.first().map_or(0, Vec::len),
                icc_2_1: icc,
            }),
        )?;
    }
    if !a.packets.is_empty() {
        let mut body = String::from(
            "expert,study,time_efficiency,cost_efficiency,behavior_fidelity,insight_fidelity,fidelity,insight_helpfulness\n",
        );
        for path in &a.packets {
            let packet = ExpertPacket::load(path).map_err(config_err)?;
            for (study, s) in packet.score().map_err(analysis_err)? {
                body.push_str(&format!(
                    "{},{study},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                    packet.expert,
                    s.time_efficiency,
                    s.cost_efficiency,
                    s.behavior_fidelity,
                    s.insight_fidelity,
                    s.fidelity,
                    s.insight_helpfulness
                ));
            }
        }
        put("analysis/expert_scores.csv", body.into_bytes())?;
    }
    if let Some(path) = &a.ledger {
        let ledger = CostTimeLedger::load(path).map_err(config_err)?;
        let teams: Vec<&str> = ledger.rows.iter().map(|r| r.team.as_str()).collect();
        let table = cost_time_report(&ledger, &teams).map_err(analysis_err)?;
        put("analysis/cost_time.md", table.into_bytes())?;
    }
    Ok(StageResult {
        artifacts,
        usage: StageUsage::default(),
    })
}

/// Human-readable summary of an output directory.
pub fn report(out: &Path) -> Result<String, StudyError> {
    let state =
        StudyState::load(out)?.ok_or_else(|| StudyError::Config(format!("{} has no {MANIFEST}", out.display())))?;
    let mut s = format!("study {} (seed {})\n\n", state.study, state.seed);
    s.push_str(&format!(
        "{:<13} {:<8} {:>9} {:>12} {:>12} {:>10}\n",
        "stage", "status", "requests", "input tok", "output tok", "cost"
    ));
    for (stage, r) in &state.stages {
        let status = serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string));
        s.push_str(&format!(
            "{:<13} {:<8} {:>9} {:>12} {:>12} {:>10.4}\n",
            stage.as_str(),
            status.unwrap_or_default(),
            r.usage.requests,
            r.usage.input_tokens,
            r.usage.output_tokens,
            r.usage.cost
        ));
        if let Some(e) = &r.error {
            s.push_str(&format!("    error: {e}\n"));
        }
    }
    let mut section = |title: &str, rel: &str| {
        if let Ok(text) = fs::read_to_string(out.join(rel)) {
            s.push_str(&format!("\n{title}\n{text}"));
        }
    };
    section("Surveyed profiles", "screening/distribution_before.txt");
    section("Accepted team", "screening/distribution_after.txt");
    if let Ok(text) = fs::read_to_string(out.join("analysis/equivalency.json")) {
        if let Ok(v) = serde_json::from_str::<BTreeMap<String, serde_json::Value>>(&text) {
            s.push_str("\nCoverage equivalency\n");
            for (study, e) in v {
                s.push_str(&format!(
                    "{study:<13} humans {:>3}  size@threshold {:>4}  agents per human {}\n",
                    e["human_transcripts"], e["size_at_threshold"], e["ratio"]
                ));
            }
        }
    }
    if let Ok(text) = fs::read_to_string(out.join("analysis/expert_icc.json")) {
        s.push_str(&format!("\nExpert agreement\n{text}"));
    }
    if let Ok(text) = fs::read_to_string(out.join("analysis/cost_time.md")) {
        s.push_str(&format!("\nTime and cost\n{text}"));
    }
    Ok(s)
}
