//! Deterministic offline backend.
//!
//! A request resolves to a fixture key in three steps:
//!
//! 1. the content key `h:<16 hex digits>` (stable hash of system prompt and
//!    messages), if the bank holds a fixture under that exact key;
//! 2. the first route whose every needle occurs in the system prompt or in
//!    the last user message;
//! 3. otherwise a fallback reply `[MOCK <key>] <echo of the last user line>`.
//!
//! A fixture holds one or more responses. `sequence` fixtures return the
//! response at the conversation's user-turn index (the last one repeats);
//! `pick` fixtures choose by a seeded hash of the whole request. Responses
//! starting with `!transport` or `!refuse` simulate the matching failures.
//!
//! Banks load from a TOML file:
//!
//! ```toml
//! [[fixture]]
//! key = "bartle_q1"
//! contains = ["Item bartle_q1"]
//! select = "pick"
//! responses = ["[A]", "[B]"]
//! ```
//!
//! or from a directory of `<key>.txt` files (responses separated by lines
//! holding only `---`, optional first line `#! pick`) plus an optional
//! `routes.toml` of `[[route]] key = .., contains = [..]` entries.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{estimate_tokens, Backend, BackendError, ChatRequest, Completion, GatewayError, Role, Usage};
use crate::rng::stable_hash;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Select {
    #[default]
    Sequence,
    Pick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub select: Select,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Route {
    pub key: String,
    pub contains: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct MockBank {
    seed: u64,
    fixtures: BTreeMap<String, Fixture>,
    routes: Vec<Route>,
}

#[derive(Deserialize)]
struct BankFile {
    #[serde(default, rename = "fixture")]
    fixtures: Vec<FixtureEntry>,
}

#[derive(Deserialize)]
struct FixtureEntry {
    key: String,
    #[serde(default)]
    contains: Vec<String>,
    #[serde(default)]
    select: Select,
    responses: Vec<String>,
}

#[derive(Deserialize)]
struct RoutesFile {
    #[serde(default, rename = "route")]
    routes: Vec<Route>,
}

impl MockBank {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn with_fixture(mut self, key: impl Into<String>, select: Select, responses: Vec<String>) -> Self {
        self.insert(key.into(), Fixture { select, responses });
        self
    }

    pub fn with_route<S: Into<String>>(mut self, key: impl Into<String>, contains: Vec<S>) -> Self {
        self.routes.push(Route {
            key: key.into(),
            contains: contains.into_iter().map(Into::into).collect(),
        });
        self
    }

    fn insert(&mut self, key: String, fixture: Fixture) {
        self.fixtures.insert(key, fixture);
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self, GatewayError> {
        let err = |e: String| GatewayError::Config(format!("mock fixtures {}: {e}", path.display()));
        if path.is_dir() {
            let mut bank = Self::new(seed);
            let mut entries: Vec<_> = fs::read_dir(path)
                .map_err(|e| err(e.to_string()))?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .collect();
            entries.sort();
            for file in entries {
                if file.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let key = file
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| err("non-UTF-8 fixture name".into()))?
                    .to_string();
                let text = fs::read_to_string(&file).map_err(|e| err(e.to_string()))?;
                bank.insert(key, parse_fixture_text(&text));
            }
            let routes = path.join("routes.toml");
            if routes.exists() {
                let text = fs::read_to_string(&routes).map_err(|e| err(e.to_string()))?;
                let parsed: RoutesFile = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
                bank.routes = parsed.routes;
            }
            bank.check_routes().map_err(err)?;
            Ok(bank)
        } else {
            let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
            Self::from_toml(&text, seed).map_err(err)
        }
    }

    pub fn from_toml(text: &str, seed: u64) -> Result<Self, String> {
        let parsed: BankFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut bank = Self::new(seed);
        for entry in parsed.fixtures {
            if entry.responses.is_empty() {
                return Err(format!("fixture {:?} has no responses", entry.key));
            }
            if !entry.contains.is_empty() {
                bank.routes.push(Route {
                    key: entry.key.clone(),
                    contains: entry.contains,
                });
            }
            bank.insert(
                entry.key,
                Fixture {
                    select: entry.select,
                    responses: entry.responses,
                },
            );
        }
        Ok(bank)
    }

    fn check_routes(&self) -> Result<(), String> {
        for r in &self.routes {
            if !self.fixtures.contains_key(&r.key) {
                return Err(format!("route to missing fixture {:?}", r.key));
            }
        }
        Ok(())
    }

    /// Content key of a request: `h:` plus 16 hex digits.
    pub fn content_key(request: &ChatRequest) -> String {
        format!("h:{:016x}", request_hash(request, None))
    }

    /// The fixture key a request resolves to, if any.
    pub fn resolve(&self, request: &ChatRequest) -> Option<&str> {
        let content = Self::content_key(request);
        if let Some((k, _)) = self.fixtures.get_key_value(&content) {
            return Some(k.as_str());
        }
        let last = request.last_user_text();
        self.routes
            .iter()
            .find(|r| {
                r.contains
                    .iter()
                    .all(|needle| request.system_prompt.contains(needle.as_str()) || last.contains(needle.as_str()))
            })
            .map(|r| r.key.as_str())
    }

    /// The reply text for a request. Pure in (system prompt, messages, seed).
    pub fn reply(&self, request: &ChatRequest) -> String {
        match self.resolve(request).and_then(|k| self.fixtures.get(k)) {
            Some(fixture) => {
                let n = fixture.responses.len();
                let idx = match fixture.select {
                    Select::Sequence => {
                        let turn = request.messages.iter().filter(|m| m.role == Role::User).count();
                        turn.saturating_sub(1).min(n - 1)
                    }
                    Select::Pick => (request_hash(request, Some(self.seed)) % n as u64) as usize,
                };
                fixture.responses[idx].clone()
            }
            None => {
                let echo: String = request
                    .last_user_text()
                    .lines()
                    .next()
                    .unwrap_or("")
                    .chars()
                    .take(80)
                    .collect();
                format!("[MOCK {}] {echo}", &Self::content_key(request)[2..10])
            }
        }
    }
}

fn request_hash(request: &ChatRequest, seed: Option<u64>) -> u64 {
    let seed_text = seed.map(|s| s.to_string()).unwrap_or_default();
    let mut parts: Vec<&str> = vec![seed_text.as_str(), request.system_prompt.as_str()];
    for m in &request.messages {
        parts.push(match m.role {
            Role::User => "user",
            Role::Assistant => "assistant",
        });
        parts.push(m.text.as_str());
    }
    stable_hash(parts)
}

fn parse_fixture_text(text: &str) -> Fixture {
    let mut select = Select::Sequence;
    let mut body = text;
    if let Some(rest) = text.strip_prefix("#!") {
        let (header, remainder) = rest.split_once('\n').unwrap_or((rest, ""));
        if header.trim() == "pick" {
            select = Select::Pick;
        }
        body = remainder;
    }
    let mut responses = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in body.lines() {
        if line.trim() == "---" {
            responses.push(current.join("\n").trim().to_string());
            current.clear();
        } else {
            current.push(line);
        }
    }
    let last = current.join("\n").trim().to_string();
    if !last.is_empty() || responses.is_empty() {
        responses.push(last);
    }
    Fixture { select, responses }
}

impl Backend for MockBank {
    fn send(&self, _model: &str, request: &ChatRequest) -> Result<Completion, BackendError> {
        let text = self.reply(request);
        if let Some(msg) = text.strip_prefix("!transport") {
            return Err(BackendError::Transport(msg.trim().to_string()));
        }
        if let Some(msg) = text.strip_prefix("!refuse") {
            return Err(BackendError::Content(msg.trim().to_string()));
        }
        let input: u64 = estimate_tokens(&request.system_prompt)
            + request.messages.iter().map(|m| estimate_tokens(&m.text)).sum::<u64>();
        Ok(Completion {
            usage: Usage {
                input_tokens: input,
                output_tokens: estimate_tokens(&text),
            },
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    fn req(system: &str, user: &str) -> ChatRequest {
        ChatRequest::new("t", system).push(Message::user(user))
    }

    #[test]
    fn routes_map_requests_to_fixture_keys() {
        let bank = MockBank::new(0)
            .with_fixture("bartle_q1", Select::Sequence, vec!["[B]".into()])
            .with_route("bartle_q1", vec!["Item bartle_q1"]);
        let r = req("You are a survey respondent.", "Item bartle_q1: Would you rather...");
        assert_eq!(bank.resolve(&r), Some("bartle_q1"));
        assert_eq!(bank.reply(&r), "[B]");
    }

    #[test]
    fn content_key_takes_precedence() {
        let r = req("s", "u");
        let bank = MockBank::new(0)
            .with_fixture(MockBank::content_key(&r), Select::Sequence, vec!["exact".into()])
            .with_fixture("routed", Select::Sequence, vec!["routed".into()])
            .with_route("routed", vec!["u"]);
        assert_eq!(bank.reply(&r), "exact");
    }

    #[test]
    fn sequence_follows_user_turns() {
        let bank = MockBank::new(0)
            .with_fixture("k", Select::Sequence, vec!["one".into(), "two".into()])
            .with_route("k", vec!["go"]);
        let r1 = req("s", "go");
        let r2 = r1.clone().push(Message::assistant("one")).push(Message::user("go"));
        let r3 = r2.clone().push(Message::assistant("two")).push(Message::user("go"));
        assert_eq!(bank.reply(&r1), "one");
        assert_eq!(bank.reply(&r2), "two");
        assert_eq!(bank.reply(&r3), "two");
    }

    #[test]
    fn pick_depends_on_seed_and_request_only() {
        let responses: Vec<String> = (0..16).map(|i| i.to_string()).collect();
        let a = MockBank::new(1)
            .with_fixture("k", Select::Pick, responses.clone())
            .with_route("k", vec!["x"]);
        let b = MockBank::new(1)
            .with_fixture("k", Select::Pick, responses)
            .with_route("k", vec!["x"]);
        let r = req("persona 1", "x");
        assert_eq!(a.reply(&r), b.reply(&r));
        let mut tag_changed = r.clone();
        tag_changed.tag = "other".into();
        assert_eq!(a.reply(&r), a.reply(&tag_changed));
    }

    #[test]
    fn fallback_echoes_markers() {
        let bank = MockBank::new(0);
        let text = bank.reply(&req("s", "Tell me about Kass\nsecond line"));
        assert!(text.starts_with("[MOCK "));
        assert!(text.ends_with("Tell me about Kass"));
    }

    #[test]
    fn directives_simulate_failures() {
        let bank = MockBank::new(0)
            .with_fixture("t", Select::Sequence, vec!["!transport connection reset".into()])
            .with_route("t", vec!["net"])
            .with_fixture("r", Select::Sequence, vec!["!refuse unsafe".into()])
            .with_route("r", vec!["bad"]);
        assert_eq!(
            bank.send("m", &req("s", "net")),
            Err(BackendError::Transport("connection reset".into()))
        );
        assert_eq!(
            bank.send("m", &req("s", "bad")),
            Err(BackendError::Content("unsafe".into()))
        );
    }

    #[test]
    fn fixture_text_format() {
        let f = parse_fixture_text("#! pick\n[A]\n---\n[B]\n");
        assert_eq!(f.select, Select::Pick);
        assert_eq!(f.responses, vec!["[A]", "[B]"]);
        let f = parse_fixture_text("just one answer\n");
        assert_eq!(f.select, Select::Sequence);
        assert_eq!(f.responses, vec!["just one answer"]);
    }

    #[test]
    fn toml_bank_loads() {
        let bank = MockBank::from_toml(
            r#"
            [[fixture]]
            key = "likert"
            contains = ["Likert"]
            responses = ["[3]"]
            "#,
            0,
        )
        .unwrap();
        assert_eq!(bank.reply(&req("s", "Likert item")), "[3]");
    }
}
