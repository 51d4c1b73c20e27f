//! Post-play feedback from agents: scripted interviews, questionnaires and
//! think-aloud digests, all grounded in stored transcripts.
//!
//! Nothing here runs encounters. Every input is a finished transcript, and
//! the transcripts are handed to the agent verbatim as a delimited memory
//! block in its system prompt.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::experiencing::Transcript;
use crate::gateway::{ChatRequest, Gateway, Message};
use crate::onboarding::{administer_survey_with, score_survey, EnrichedProfile, IntakeSurvey, ScoringRule};
use crate::workers::bounded_map;

pub const VARIABLES: [&str; 3] = ["player_type", "big_five", "persona"];

const DEFAULT_SCRIPT: &str = include_str!("../data/interview_script.toml");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeedbackError {
    #[error("script: {0}")]
    Script(String),
    #[error("unknown placeholder ${{{0}}}")]
    UnknownPlaceholder(String),
    #[error("agent {0} has no transcripts")]
    NoTranscripts(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aspect {
    pub name: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterviewScript {
    pub script_id: String,
    #[serde(rename = "aspect")]
    pub aspects: Vec<Aspect>,
}

impl InterviewScript {
    pub fn from_toml(text: &str) -> Result<Self, FeedbackError> {
        let s: Self = toml::from_str(text).map_err(|e| FeedbackError::Script(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, FeedbackError> {
        let text = fs::read_to_string(path).map_err(|e| FeedbackError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The shipped NPC-experience interview.
    pub fn default_script() -> Self {
        Self::from_toml(DEFAULT_SCRIPT).expect("bundled script is valid")
    }

    pub fn validate(&self) -> Result<(), FeedbackError> {
        if self.aspects.is_empty() {
            return Err(FeedbackError::Script("no aspects".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for a in &self.aspects {
            if !names.insert(a.name.as_str()) {
                return Err(FeedbackError::Script(format!("duplicate aspect {:?}", a.name)));
            }
            for p in placeholders(&a.prompt)? {
                if !VARIABLES.contains(&p.as_str()) {
                    return Err(FeedbackError::UnknownPlaceholder(p));
                }
            }
        }
        Ok(())
    }
}

/// Names of the `${name}` placeholders in a template, in order.
pub fn placeholders(template: &str) -> Result<Vec<String>, FeedbackError> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(i) = rest.find("${") {
        let after = &rest[i + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| FeedbackError::Script(format!("unclosed placeholder in {template:?}")))?;
        out.push(after[..end].to_string());
        rest = &after[end + 1..];
    }
    Ok(out)
}

pub fn render_template(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, FeedbackError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find("${") {
        out.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| FeedbackError::Script(format!("unclosed placeholder in {template:?}")))?;
        let name = &after[..end];
        let value = vars
            .get(name)
            .ok_or_else(|| FeedbackError::UnknownPlaceholder(name.to_string()))?;
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn profile_variables(profile: &EnrichedProfile) -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("player_type", profile.bartle_type.to_string()),
        ("big_five", profile.big_five.summary()),
        ("persona", profile.basic.persona().trim().to_string()),
    ])
}

/// `(aspect, prompt)` pairs with every placeholder filled in.
pub fn render_script(
    script: &InterviewScript,
    profile: &EnrichedProfile,
) -> Result<Vec<(String, String)>, FeedbackError> {
    let vars = profile_variables(profile);
    script
        .aspects
        .iter()
        .map(|a| Ok((a.name.clone(), render_template(&a.prompt, &vars)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Interview,
    Questionnaire,
    ThinkAloudDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackItem {
    /// Aspect name, survey item id, or turn reference.
    pub key: String,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub agent: String,
    pub method: Method,
    pub items: Vec<FeedbackItem>,
    /// Ids of the transcripts given to the agent as memory.
    pub grounding: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FeedbackRecord {
    fn new(agent: &str, method: Method, transcripts: &[Transcript]) -> Self {
        Self {
            agent: agent.to_string(),
            method,
            items: Vec::new(),
            grounding: transcripts.iter().map(Transcript::id).collect(),
            scores: BTreeMap::new(),
            error: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.error.is_none()
    }
}

pub const MEMORY_BEGIN: &str = "=== BEGIN MEMORY ===";
pub const MEMORY_END: &str = "=== END MEMORY ===";

/// Transcripts rendered verbatim between memory delimiters.
pub fn memory_block(transcripts: &[Transcript]) -> String {
    let mut s = String::from(MEMORY_BEGIN);
    s.push('\n');
    for t in transcripts {
        s.push_str(&format!(
            "--- Encounter {} with {} ({:?}) ---\n",
            t.id(),
            t.counterpart,
            t.termination
        ));
        for turn in &t.turns {
            let who = if turn.speaker == t.player {
                "You"
            } else {
                t.counterpart.as_str()
            };
            s.push_str(&format!("[turn {}] {who}: {}\n", turn.index, turn.raw));
        }
    }
    s.push_str(MEMORY_END);
    s
}

/// System prompt for a post-play respondent.
pub fn respondent_prompt(profile: &EnrichedProfile, transcripts: &[Transcript]) -> String {
    format!(
        "You are the player described below. You have just finished playing, and a researcher is now asking you about it. \
         Answer in the first person, drawing on your memory of the encounters.\n\n\
         Background:\n{}\nPlayer type: {}\nBig Five: {}\n\n{}\n",
        profile.basic.persona().trim(),
        profile.bartle_type,
        profile.big_five.summary(),
        memory_block(transcripts)
    )
}

/// Interview one agent. Each question is asked after the previous
/// questions and answers.
pub fn interview(
    profile: &EnrichedProfile,
    transcripts: &[Transcript],
    script: &InterviewScript,
    gateway: &Gateway,
) -> FeedbackRecord {
    let mut record = FeedbackRecord::new(profile.id(), Method::Interview, transcripts);
    if transcripts.is_empty() {
        record.error = Some(FeedbackError::NoTranscripts(profile.id().to_string()).to_string());
        return record;
    }
    let prompts = match render_script(script, profile) {
        Ok(p) => p,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let system = respondent_prompt(profile, transcripts);
    let mut messages = Vec::new();
    for (i, (aspect, prompt)) in prompts.into_iter().enumerate() {
        messages.push(Message::user(prompt.clone()));
        let req = ChatRequest::new(format!("fb/{}/{}/{i}", profile.id(), script.script_id), system.clone())
            .with_messages(messages.clone());
        match gateway.complete(&req) {
            Ok(resp) => {
                messages.push(Message::assistant(resp.text.clone()));
                record.items.push(FeedbackItem {
                    key: aspect,
                    prompt,
                    response: resp.text,
                });
            }
            Err(e) => {
                record.error = Some(e.to_string());
                break;
            }
        }
    }
    record
}

/// Interview every agent; failures stay in their own slot. Output order
/// follows `agents`.
pub fn run_feedback(
    agents: &[(EnrichedProfile, Vec<Transcript>)],
    script: &InterviewScript,
    gateway: &Gateway,
    workers: usize,
) -> Vec<FeedbackRecord> {
    bounded_map(agents, workers.max(1), |_, (p, ts)| interview(p, ts, script, gateway))
}

/// Administer a questionnaire to every agent, grounded in its transcripts.
/// Scores are filled in when the survey has a scoring rule.
pub fn run_questionnaire(
    agents: &[(EnrichedProfile, Vec<Transcript>)],
    survey: &IntakeSurvey,
    gateway: &Gateway,
    workers: usize,
) -> Vec<FeedbackRecord> {
    bounded_map(agents, workers.max(1), |_, (profile, ts)| {
        let mut record = FeedbackRecord::new(profile.id(), Method::Questionnaire, ts);
        if ts.is_empty() {
            record.error = Some(FeedbackError::NoTranscripts(profile.id().to_string()).to_string());
            return record;
        }
        let system = respondent_prompt(profile, ts);
        match administer_survey_with(&system, &format!("q/{}", profile.id()), survey, gateway) {
            Ok(answers) => {
                for item in &survey.items {
                    if let Some(a) = answers.get(&item.id) {
                        record.items.push(FeedbackItem {
                            key: item.id.clone(),
                            prompt: item.question.clone(),
                            response: a.clone(),
                        });
                    }
                }
                if !matches!(survey.scoring, ScoringRule::None) {
                    match score_survey(survey, &answers) {
                        Ok(s) => record.scores = s.dimensions,
                        Err(e) => record.error = Some(e.to_string()),
                    }
                }
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        record
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinkAloudSegment {
    pub turn_index: usize,
    pub text: String,
}

/// The player's think-aloud segments in turn order.
pub fn extract_think_aloud(transcript: &Transcript) -> Vec<ThinkAloudSegment> {
    transcript
        .player_turns()
        .filter_map(|t| {
            t.think_aloud.as_ref().map(|text| ThinkAloudSegment {
                turn_index: t.index,
                text: text.clone(),
            })
        })
        .collect()
}

/// Every think-aloud segment of an agent as a feedback record.
pub fn think_aloud_digest(agent: &str, transcripts: &[Transcript]) -> FeedbackRecord {
    let mut record = FeedbackRecord::new(agent, Method::ThinkAloudDigest, transcripts);
    for t in transcripts {
        for seg in extract_think_aloud(t) {
            record.items.push(FeedbackItem {
                key: format!("{}#{}", t.id(), seg.turn_index),
                prompt: String::new(),
                response: seg.text,
            });
        }
    }
    record
}

/// One JSON record per line.
pub fn write_records(path: &Path, records: &[FeedbackRecord]) -> Result<(), FeedbackError> {
    let io = |e: std::io::Error| FeedbackError::Io(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(path).map_err(io)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| FeedbackError::Io(e.to_string()))?;
        writeln!(f, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<FeedbackRecord>, FeedbackError> {
    let text = fs::read_to_string(path).map_err(|e| FeedbackError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| FeedbackError::Io(format!("{}: record {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiencing::ActionType;
    use crate::experiencing::{Event, Termination, Turn};
    use crate::gateway::{mock::Select, BackendConfig, MockBank, Usage};
    use crate::onboarding::{BartleType, BigFive};
    use crate::pool::BasicProfile;
    use std::sync::Arc;

    fn profile(id: &str) -> EnrichedProfile {
        EnrichedProfile {
            basic: BasicProfile {
                profile_id: id.into(),
                pool: "t".into(),
                persona_text: "A night-shift nurse who plays on weekends.".into(),
                structured_fields: Default::default(),
            },
            bartle_type: BartleType::Explorer,
            big_five: BigFive::uniform(3.5),
            raw_answers: Default::default(),
        }
    }

    fn transcript(player: &str, npc: &str) -> Transcript {
        Transcript {
            player: player.into(),
            counterpart: npc.into(),
            turns: vec![
                Turn {
                    speaker: player.into(),
                    index: 1,
                    think_aloud: Some("Kass seems friendly.".into()),
                    events: vec![Event::new(ActionType::DInit, None, Some("Hello, Kass!"))],
                    raw: "[Think-Aloud] Kass seems friendly. [D-INIT] Hello, Kass!".into(),
                    error: None,
                },
                Turn {
                    speaker: npc.into(),
                    index: 2,
                    think_aloud: None,
                    events: vec![Event::new(ActionType::DInit, None, Some("Well met."))],
                    raw: "[D-INIT] Well met.".into(),
                    error: None,
                },
                Turn {
                    speaker: player.into(),
                    index: 3,
                    think_aloud: Some("Time to go.".into()),
                    events: vec![Event::new(ActionType::DEnd, None, Some("Bye."))],
                    raw: "[Think-Aloud] Time to go. [D-END] Bye.".into(),
                    error: None,
                },
            ],
            termination: Termination::GoalReachedDEnd,
            usage: Usage::default(),
            error: None,
        }
    }

    fn gateway() -> Gateway {
        let bank = MockBank::new(3).with_fixture(
            "any",
            Select::Pick,
            vec!["It felt natural.".into(), "Some replies repeated.".into()],
        );
        let bank = bank.with_route("any", vec!["BEGIN MEMORY"]);
        Gateway::with_backend(BackendConfig::mock(0), Arc::new(bank)).unwrap()
    }

    #[test]
    fn default_script_shape() {
        let s = InterviewScript::default_script();
        assert_eq!(s.aspects.len(), 8);
        assert_eq!(s.aspects[0].name, "Language Authenticity");
        assert_eq!(s.aspects[7].name, "Personal Fit Based on Player Type");
    }

    #[test]
    fn personal_fit_substitutes_all_three() {
        let s = InterviewScript::default_script();
        let p = profile("p1");
        let rendered = render_script(&s, &p).unwrap();
        let fit = &rendered[7].1;
        assert!(fit.contains("Explorer"));
        assert!(fit.contains(&p.big_five.summary()));
        assert!(fit.contains("night-shift nurse"));
        assert!(rendered.iter().all(|(_, t)| !t.contains("${")));
    }

    #[test]
    fn templates_without_variables_are_verbatim() {
        let vars = profile_variables(&profile("p"));
        assert_eq!(render_template("How was it?", &vars).unwrap(), "How was it?");
    }

    #[test]
    fn unknown_placeholder_is_named() {
        let err = InterviewScript::from_toml("script_id = \"s\"\n[[aspect]]\nname = \"a\"\nprompt = \"Hi ${mood}\"\n")
            .unwrap_err();
        assert_eq!(err, FeedbackError::UnknownPlaceholder("mood".into()));
        assert!(err.to_string().contains("${mood}"));
        let dup =
            "script_id = \"s\"\n[[aspect]]\nname = \"a\"\nprompt = \"x\"\n[[aspect]]\nname = \"a\"\nprompt = \"y\"\n";
        assert!(InterviewScript::from_toml(dup).is_err());
    }

    #[test]
    fn interview_answers_every_aspect_in_order() {
        let script = InterviewScript::default_script();
        let agents: Vec<_> = (0..5)
            .map(|i| {
                let id = format!("p{i}");
                (profile(&id), vec![transcript(&id, "kass"), transcript(&id, "zelda")])
            })
            .collect();
        let recs = run_feedback(&agents, &script, &gateway(), 3);
        assert_eq!(recs.len(), 5);
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(r.agent, format!("p{i}"));
            assert!(r.is_complete());
            assert_eq!(r.items.len(), script.aspects.len());
            let keys: Vec<_> = r.items.iter().map(|it| it.key.as_str()).collect();
            let names: Vec<_> = script.aspects.iter().map(|a| a.name.as_str()).collect();
            assert_eq!(keys, names);
            assert_eq!(r.grounding, vec![format!("p{i}__kass"), format!("p{i}__zelda")]);
        }
    }

    #[test]
    fn single_aspect_script() {
        let script =
            InterviewScript::from_toml("script_id = \"one\"\n[[aspect]]\nname = \"only\"\nprompt = \"Anything?\"\n")
                .unwrap();
        let recs = run_feedback(&[(profile("a"), vec![transcript("a", "kass")])], &script, &gateway(), 1);
        assert_eq!(recs[0].items.len(), 1);
    }

    #[test]
    fn missing_transcripts_fail_only_that_slot() {
        let script = InterviewScript::default_script();
        let agents = vec![(profile("a"), vec![]), (profile("b"), vec![transcript("b", "kass")])];
        let recs = run_feedback(&agents, &script, &gateway(), 2);
        assert!(recs[0].error.as_deref().unwrap().contains("no transcripts"));
        assert!(recs[1].is_complete());
    }

    #[test]
    fn memory_carries_think_aloud_verbatim() {
        let block = memory_block(&[transcript("a", "kass")]);
        assert!(block.starts_with(MEMORY_BEGIN) && block.ends_with(MEMORY_END));
        assert!(block.contains("[Think-Aloud] Kass seems friendly. [D-INIT] Hello, Kass!"));
    }

    #[test]
    fn think_aloud_extraction() {
        let t = transcript("a", "kass");
        let segs = extract_think_aloud(&t);
        assert_eq!(segs.len(), 2);
        assert_eq!(
            segs[0],
            ThinkAloudSegment {
                turn_index: 1,
                text: "Kass seems friendly.".into()
            }
        );
        let mut npc_only = t.clone();
        npc_only.turns.retain(|x| x.speaker == "kass");
        assert!(extract_think_aloud(&npc_only).is_empty());
        let digest = think_aloud_digest("a", &[t]);
        assert_eq!(digest.items.len(), 2);
        assert_eq!(digest.method, Method::ThinkAloudDigest);
    }

    #[test]
    fn questionnaire_reuses_survey_machinery() {
        let survey = IntakeSurvey::from_toml(
            r#"
survey_id = "post"
version = "1"
[[item]]
id = "fun"
question = "The encounters were fun."
kind = "likert_1_5"
[scoring]
kind = "dimension_mean"
dimension = [{ item = "fun", dimension = "enjoyment", polarity = "+" }]
"#,
        )
        .unwrap();
        let bank = MockBank::new(0)
            .with_fixture("q", Select::Sequence, vec!["[4]".into()])
            .with_route("q", vec!["Item fun"]);
        let gw = Gateway::with_backend(BackendConfig::mock(0), Arc::new(bank)).unwrap();
        let recs = run_questionnaire(&[(profile("a"), vec![transcript("a", "kass")])], &survey, &gw, 1);
        assert!(recs[0].is_complete(), "{:?}", recs[0].error);
        assert_eq!(recs[0].items[0].response, "4");
        assert_eq!(recs[0].scores["enjoyment"], 4.0);
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fb.jsonl");
        let rec = think_aloud_digest("a", &[transcript("a", "kass")]);
        write_records(&path, std::slice::from_ref(&rec)).unwrap();
        assert_eq!(read_records(&path).unwrap(), vec![rec]);
    }
}
