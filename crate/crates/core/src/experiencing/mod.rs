//! Experiencing: player agents meet NPC agents in turn-based, text-only
//! encounters using a tagged action grammar.
//!
//! The player speaks first. An encounter ends as soon as a player turn
//! contains `D-END`, or after the player's `max_turns`-th turn (only player
//! turns count toward the limit). Each speaker sees the whole encounter so
//! far as its conversation history.

pub mod actions;
pub mod grammar;
pub mod npc;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, Gateway, GatewayError, Message, Usage};
use crate::onboarding::EnrichedProfile;
use crate::workers::bounded_map;

pub use actions::ActionType;
pub use grammar::{parse_checked, parse_events, serialize_turn, Event, GrammarError, ParsedTurn};
pub use npc::{build_prompt, load_npc_dir, player_spec, AgentRole, AgentSpec, NpcFixture};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperiencingError {
    #[error("agent spec: {0}")]
    Spec(String),
    #[error("io: {0}")]
    Io(String),
    #[error("transcript {path}: line {line}: {message}")]
    TranscriptFormat { path: String, line: usize, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    /// 1-based position in the encounter, counting both speakers.
    pub index: usize,
    #[serde(default)]
    pub think_aloud: Option<String>,
    pub events: Vec<Event>,
    pub raw: String,
    /// Set when no valid reply was obtained; `events` is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Turn {
    pub fn is_malformed(&self) -> bool {
        self.error.is_some()
    }

    pub fn has(&self, action: ActionType) -> bool {
        self.events.iter().any(|e| e.action == action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GoalReachedDEnd,
    TurnLimit,
    /// The backend failed; the transcript holds the turns before the failure.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub player: String,
    pub counterpart: String,
    pub turns: Vec<Turn>,
    pub termination: Termination,
    pub usage: Usage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Turn(Turn),
    Summary {
        player: String,
        counterpart: String,
        termination: Termination,
        usage: Usage,
        turns: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

impl Transcript {
    /// `<player>__<counterpart>`.
    pub fn id(&self) -> String {
        transcript_id(&self.player, &self.counterpart)
    }

    pub fn player_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(move |t| t.speaker == self.player)
    }

    /// One JSON object per turn, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.turns {
            out.push_str(&serde_json::to_string(&Line::Turn(t.clone())).expect("turn serializes"));
            out.push('\n');
        }
        let summary = Line::Summary {
            player: self.player.clone(),
            counterpart: self.counterpart.clone(),
            termination: self.termination,
            usage: self.usage,
            turns: self.turns.len(),
            error: self.error.clone(),
        };
        out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), ExperiencingError> {
        let io = |e: std::io::Error| ExperiencingError::Io(format!("{}: {e}", path.display()));
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }

    /// Read a transcript file. A file without its summary line is incomplete
    /// and rejected.
    pub fn read(path: &Path) -> Result<Self, ExperiencingError> {
        let io = |e: std::io::Error| ExperiencingError::Io(format!("{}: {e}", path.display()));
        let bad = |line: usize, message: String| ExperiencingError::TranscriptFormat {
            path: path.display().to_string(),
            line,
            message,
        };
        let reader = BufReader::new(fs::File::open(path).map_err(io)?);
        let mut turns = Vec::new();
        let mut done = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            if done.is_some() {
                return Err(bad(i + 1, "content after summary".into()));
            }
            match serde_json::from_str::<Line>(&line).map_err(|e| bad(i + 1, e.to_string()))? {
                Line::Turn(t) => turns.push(t),
                Line::Summary {
                    player,
                    counterpart,
                    termination,
                    usage,
                    turns: n,
                    error,
                } => {
                    if n != turns.len() {
                        return Err(bad(
                            i + 1,
                            format!("summary counts {n} turns, file has {}", turns.len()),
                        ));
                    }
                    done = Some(Transcript {
                        player,
                        counterpart,
                        turns: std::mem::take(&mut turns),
                        termination,
                        usage,
                        error,
                    });
                }
            }
        }
        done.ok_or_else(|| bad(0, "missing summary line".into()))
    }
}

pub fn transcript_id(player: &str, counterpart: &str) -> String {
    format!("{player}__{counterpart}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionOptions {
    /// Player turns allowed per encounter.
    pub max_turns: usize,
    /// Extra attempts for an unreadable or illegal reply.
    pub malformed_retries: usize,
    pub temperature: f64,
    pub max_output: u32,
}

impl Default for InteractionOptions {
    fn default() -> Self {
        Self {
            max_turns: 30,
            malformed_retries: 2,
            temperature: 0.7,
            max_output: 1024,
        }
    }
}

/// Opening user message shown to the player.
pub fn kickoff(counterpart: &AgentSpec) -> String {
    format!("You meet {}. Take your first turn.", counterpart.display_name)
}

/// Conversation history from `spec`'s point of view: its own turns are
/// assistant messages, the other side's are user messages.
fn history(spec: &AgentSpec, counterpart: &AgentSpec, turns: &[Turn]) -> Vec<Message> {
    let mut messages = Vec::with_capacity(turns.len() + 1);
    if spec.role == AgentRole::Player {
        messages.push(Message::user(kickoff(counterpart)));
    }
    for t in turns {
        if t.speaker == spec.identity {
            messages.push(Message::assistant(t.raw.clone()));
        } else {
            messages.push(Message::user(t.raw.clone()));
        }
    }
    messages
}

fn correction(err: &GrammarError) -> String {
    format!("\n\n(Your previous reply was rejected: {err}. Reply again using only the tagged action formats.)")
}

/// Request context for the next turn of `spec`. Exposed for inspection.
pub fn turn_request(
    spec: &AgentSpec,
    counterpart: &AgentSpec,
    turns: &[Turn],
    options: &InteractionOptions,
    tag: String,
) -> ChatRequest {
    let mut req = ChatRequest::new(tag, build_prompt(spec)).with_messages(history(spec, counterpart, turns));
    req.temperature = options.temperature;
    req.max_output = options.max_output;
    req
}

fn take_turn(
    spec: &AgentSpec,
    counterpart: &AgentSpec,
    turns: &[Turn],
    gateway: &Gateway,
    options: &InteractionOptions,
    usage: &mut Usage,
    conversation: &str,
) -> Result<Turn, GatewayError> {
    let index = turns.len() + 1;
    let base = turn_request(spec, counterpart, turns, options, String::new());
    let allowed = spec.enforce_action_space.then_some(spec.action_space.as_slice());
    let mut last: Option<(String, GrammarError)> = None;
    for attempt in 0..=options.malformed_retries {
        let mut req = base.clone();
        req.tag = format!("{conversation}/{index}/{attempt}");
        if let Some((_, err)) = &last {
            if let Some(m) = req.messages.last_mut() {
                m.text.push_str(&correction(err));
            }
        }
        let resp = gateway.complete(&req)?;
        *usage += resp.usage;
        match parse_checked(&resp.text, spec.think_aloud, allowed) {
            Ok(parsed) => {
                return Ok(Turn {
                    speaker: spec.identity.clone(),
                    index,
                    think_aloud: parsed.think_aloud,
                    events: parsed.events,
                    raw: resp.text,
                    error: None,
                })
            }
            Err(e) => {
                log::debug!("{conversation} turn {index}: {e}");
                last = Some((resp.text, e));
            }
        }
    }
    let (raw, err) = last.expect("at least one attempt");
    Ok(Turn {
        speaker: spec.identity.clone(),
        index,
        think_aloud: None,
        events: Vec::new(),
        raw,
        error: Some(err.to_string()),
    })
}

/// Run one encounter to `D-END`, the turn limit, or a backend failure.
pub fn run_interaction(
    player: &AgentSpec,
    counterpart: &AgentSpec,
    gateway: &Gateway,
    options: &InteractionOptions,
) -> Result<Transcript, ExperiencingError> {
    player.validate()?;
    counterpart.validate()?;
    if player.role != AgentRole::Player || counterpart.role != AgentRole::Npc {
        return Err(ExperiencingError::Spec("expected a player and an NPC".into()));
    }
    if options.max_turns == 0 {
        return Err(ExperiencingError::Spec("max_turns must be at least 1".into()));
    }
    let conversation = transcript_id(&player.identity, &counterpart.identity);
    let mut turns: Vec<Turn> = Vec::new();
    let mut usage = Usage::default();
    let finish = |turns, termination, usage, error| Transcript {
        player: player.identity.clone(),
        counterpart: counterpart.identity.clone(),
        turns,
        termination,
        usage,
        error,
    };
    let mut taken = 0;
    loop {
        match take_turn(player, counterpart, &turns, gateway, options, &mut usage, &conversation) {
            Ok(t) => turns.push(t),
            Err(e) => return Ok(finish(turns, Termination::Aborted, usage, Some(e.to_string()))),
        }
        taken += 1;
        if turns.last().is_some_and(|t| t.has(ActionType::DEnd)) {
            return Ok(finish(turns, Termination::GoalReachedDEnd, usage, None));
        }
        if taken == options.max_turns {
            return Ok(finish(turns, Termination::TurnLimit, usage, None));
        }
        match take_turn(counterpart, player, &turns, gateway, options, &mut usage, &conversation) {
            Ok(t) => turns.push(t),
            Err(e) => return Ok(finish(turns, Termination::Aborted, usage, Some(e.to_string()))),
        }
    }
}

/// One player through every NPC in order, with fresh memory per NPC.
pub fn run_sessions(
    profile: &EnrichedProfile,
    npcs: &[NpcFixture],
    gateway: &Gateway,
    options: &InteractionOptions,
) -> Result<Vec<Transcript>, ExperiencingError> {
    npcs.iter()
        .map(|npc| run_interaction(&player_spec(profile, npc), &npc.spec(), gateway, options))
        .collect()
}

/// Every team member through every NPC. Players run in parallel (up to
/// `workers`); `sink` receives each player's transcripts when they finish.
/// Results are in team order.
pub fn run_team(
    team: &[EnrichedProfile],
    npcs: &[NpcFixture],
    gateway: &Gateway,
    options: &InteractionOptions,
    workers: usize,
    sink: &(dyn Fn(usize, &[Transcript]) + Sync),
) -> Vec<Result<Vec<Transcript>, ExperiencingError>> {
    bounded_map(team, workers.max(1), |i, profile| {
        let out = run_sessions(profile, npcs, gateway, options);
        if let Ok(ts) = &out {
            sink(i, ts);
        }
        out
    })
}
