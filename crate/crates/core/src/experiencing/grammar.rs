//! Parsing and printing of tagged agent turns.
//!
//! A turn is an optional leading `[Think-Aloud] ...` segment followed by
//! one or more events. An event starts at an action tag; its payload runs
//! to the next tag. Paired actions may be followed by their dialogue marker
//! (`[Q-ACCEPT] (the lens) [D-ACCEPT] I'll do it.`), whose text becomes the
//! event's dialogue. For `D-INIT` and `D-END` the text is the dialogue.
//! One pair of enclosing parentheses is stripped from payloads and dialogue.

use serde::{Deserialize, Serialize};

use super::actions::ActionType;

pub const THINK_ALOUD: &str = "Think-Aloud";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub action: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue: Option<String>,
}

impl Event {
    pub fn new(action: ActionType, payload: Option<&str>, dialogue: Option<&str>) -> Self {
        Self {
            action,
            payload: payload.map(str::to_string),
            dialogue: dialogue.map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedTurn {
    pub think_aloud: Option<String>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("malformed turn: {0}")]
    Malformed(String),
    #[error("action {0} is outside the speaker's action space")]
    IllegalAction(ActionType),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Token {
    ThinkAloud,
    Action(ActionType),
    Marker(&'static str),
}

fn tag_shaped(inner: &str) -> bool {
    let b = inner.as_bytes();
    b.len() >= 3 && b[0].is_ascii_uppercase() && b[1] == b'-' && b[2..].iter().all(|c| c.is_ascii_uppercase())
}

fn marker(inner: &str) -> Option<&'static str> {
    ActionType::ALL
        .iter()
        .filter_map(|a| a.paired_dialogue_tag())
        .find(|m| *m == inner)
}

/// Bracketed tokens with their byte spans. Brackets that are not
/// tag-shaped are ordinary text.
fn tokenize(raw: &str) -> Result<Vec<(Token, usize, usize)>, GrammarError> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(open) = raw[pos..].find('[').map(|i| i + pos) {
        let Some(close) = raw[open..].find(']').map(|i| i + open) else {
            break;
        };
        let inner = &raw[open + 1..close];
        let token = if inner.eq_ignore_ascii_case(THINK_ALOUD) {
            Some(Token::ThinkAloud)
        } else if let Some(a) = ActionType::from_tag(inner) {
            Some(Token::Action(a))
        } else if let Some(m) = marker(inner) {
            Some(Token::Marker(m))
        } else if tag_shaped(inner) {
            return Err(GrammarError::Malformed(format!("unknown tag [{inner}]")));
        } else {
            None
        };
        match token {
            Some(t) => {
                out.push((t, open, close + 1));
                pos = close + 1;
            }
            None => pos = open + 1,
        }
    }
    Ok(out)
}

/// Strip one pair of parentheses that encloses the whole text.
pub fn strip_enclosing_parens(text: &str) -> &str {
    let t = text.trim();
    if !(t.starts_with('(') && t.ends_with(')')) {
        return t;
    }
    let mut depth = 0i32;
    for (i, c) in t.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 && i != t.len() - 1 {
                    return t;
                }
            }
            _ => {}
        }
    }
    if depth == 0 {
        t[1..t.len() - 1].trim()
    } else {
        t
    }
}

fn non_empty(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

/// Parse without reference to any action space.
pub fn parse_events(raw: &str) -> Result<ParsedTurn, GrammarError> {
    let tokens = tokenize(raw)?;
    if tokens.is_empty() {
        return Err(GrammarError::Malformed("no action tag".into()));
    }
    if !raw[..tokens[0].1].trim().is_empty() {
        return Err(GrammarError::Malformed("text before the first tag".into()));
    }
    let segment = |i: usize| -> &str {
        let end = tokens.get(i + 1).map_or(raw.len(), |t| t.1);
        raw[tokens[i].2..end].trim()
    };

    let mut turn = ParsedTurn::default();
    let mut i = 0;
    if tokens[0].0 == Token::ThinkAloud {
        turn.think_aloud = Some(segment(0).to_string());
        i = 1;
    }
    while i < tokens.len() {
        match tokens[i].0 {
            Token::ThinkAloud => {
                return Err(GrammarError::Malformed(
                    "[Think-Aloud] must precede every action".into(),
                ));
            }
            Token::Marker(m) => {
                return Err(GrammarError::Malformed(format!("[{m}] without its action")));
            }
            Token::Action(action) => {
                let text = strip_enclosing_parens(segment(i));
                let mut event = match action.paired_dialogue_tag() {
                    None => Event {
                        action,
                        payload: None,
                        dialogue: non_empty(text),
                    },
                    Some(_) => Event {
                        action,
                        payload: non_empty(text),
                        dialogue: None,
                    },
                };
                i += 1;
                if let Some(pair) = action.paired_dialogue_tag() {
                    if let Some((Token::Marker(m), ..)) = tokens.get(i) {
                        if *m != pair {
                            return Err(GrammarError::Malformed(format!("[{m}] does not pair with [{action}]")));
                        }
                        event.dialogue = non_empty(strip_enclosing_parens(segment(i)));
                        i += 1;
                    }
                }
                turn.events.push(event);
            }
        }
    }
    if turn.events.is_empty() {
        return Err(GrammarError::Malformed("no action after [Think-Aloud]".into()));
    }
    Ok(turn)
}

/// Parse and check the think-aloud requirement and the action space.
pub fn parse_checked(
    raw: &str,
    think_aloud_required: bool,
    allowed: Option<&[ActionType]>,
) -> Result<ParsedTurn, GrammarError> {
    let turn = parse_events(raw)?;
    if think_aloud_required && turn.think_aloud.is_none() {
        return Err(GrammarError::Malformed("missing [Think-Aloud] segment".into()));
    }
    if let Some(space) = allowed {
        if let Some(e) = turn.events.iter().find(|e| !space.contains(&e.action)) {
            return Err(GrammarError::IllegalAction(e.action));
        }
    }
    Ok(turn)
}

fn encloses(text: &str) -> bool {
    strip_enclosing_parens(text) != text.trim()
}

/// Print events in the canonical tagged form.
pub fn serialize_turn(think_aloud: Option<&str>, events: &[Event]) -> String {
    let mut parts: Vec<String> = Vec::new();
    if let Some(t) = think_aloud {
        parts.push(format!("[{THINK_ALOUD}] {t}").trim_end().to_string());
    }
    for e in events {
        let mut s = format!("[{}]", e.action.tag());
        if let Some(p) = &e.payload {
            s.push_str(&format!(" ({p})"));
        }
        let speech = |s: &mut String, d: &str| {
            if encloses(d) {
                s.push_str(&format!(" ({d})"));
            } else {
                s.push(' ');
                s.push_str(d);
            }
        };
        match (e.action.paired_dialogue_tag(), &e.dialogue) {
            (None, Some(d)) => speech(&mut s, d),
            (Some(m), Some(d)) => {
                s.push_str(&format!(" [{m}]"));
                speech(&mut s, d);
            }
            (_, None) => {}
        }
        parts.push(s);
    }
    parts.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn think_aloud_then_speech() {
        let t = parse_events("[Think-Aloud] Kass seems friendly. [D-INIT] Hello, Kass!").unwrap();
        assert_eq!(t.think_aloud.as_deref(), Some("Kass seems friendly."));
        assert_eq!(
            t.events,
            vec![Event::new(ActionType::DInit, None, Some("Hello, Kass!"))]
        );
    }

    #[test]
    fn paired_action_with_parenthesised_payload() {
        let t = parse_events("[Q-ACCEPT] (find the lens) [D-ACCEPT] I'll do it.").unwrap();
        assert_eq!(
            t.events,
            vec![Event::new(
                ActionType::QAccept,
                Some("find the lens"),
                Some("I'll do it.")
            )]
        );
    }

    #[test]
    fn plain_text_is_malformed() {
        assert!(matches!(parse_events("hello there"), Err(GrammarError::Malformed(_))));
        assert!(matches!(parse_events(""), Err(GrammarError::Malformed(_))));
    }

    #[test]
    fn grammar_violations() {
        for raw in [
            "[X-FOO] hi",
            "[D-ACCEPT] sure",
            "[Q-ACCEPT] (x) [D-REJECT] no",
            "[D-INIT] hi [Think-Aloud] hmm",
            "[Think-Aloud] only thinking",
            "Sure! [D-INIT] hi",
        ] {
            assert!(matches!(parse_events(raw), Err(GrammarError::Malformed(_))), "{raw}");
        }
    }

    #[test]
    fn several_events_in_order() {
        let t = parse_events("[E-OBSERVE] (the shrine) [D-OBSERVE] Odd runes. [C-USE] (torch) [D-END] Bye.").unwrap();
        let actions: Vec<_> = t.events.iter().map(|e| e.action).collect();
        assert_eq!(actions, vec![ActionType::EObserve, ActionType::CUse, ActionType::DEnd]);
        assert_eq!(t.events[1].dialogue, None);
        assert_eq!(t.events[1].payload.as_deref(), Some("torch"));
    }

    #[test]
    fn non_tag_brackets_are_text() {
        let t = parse_events("[D-INIT] I read [sic] and [3] on the sign.").unwrap();
        assert_eq!(
            t.events[0].dialogue.as_deref(),
            Some("I read [sic] and [3] on the sign.")
        );
    }

    #[test]
    fn checked_parse_enforces_space_and_think_aloud() {
        let space = [ActionType::DInit, ActionType::DEnd];
        assert_eq!(
            parse_checked("[C-ATTACK] (boar)", false, Some(&space)),
            Err(GrammarError::IllegalAction(ActionType::CAttack))
        );
        assert!(parse_checked("[C-ATTACK] (boar)", false, None).is_ok());
        assert!(matches!(
            parse_checked("[D-INIT] hi", true, None),
            Err(GrammarError::Malformed(_))
        ));
    }

    #[test]
    fn paren_stripping() {
        assert_eq!(strip_enclosing_parens(" (a b) "), "a b");
        assert_eq!(strip_enclosing_parens("(a) (b)"), "(a) (b)");
        assert_eq!(strip_enclosing_parens("((a))"), "(a)");
        assert_eq!(strip_enclosing_parens("(a"), "(a");
    }

    /// Words, punctuation and parenthesised groups; always balanced.
    fn text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                "[a-zA-Z0-9']{1,7}",
                "[.,!?]",
                "\\([a-z ]{0,6}\\)",
                "\\(\\([a-z]{1,4}\\) [a-z]{1,3}\\)"
            ],
            0..6,
        )
        .prop_map(|parts| parts.join(" ").trim().to_string())
    }

    fn event() -> impl Strategy<Value = Event> {
        (0..18usize, text(), text()).prop_map(|(i, p, d)| {
            let action = ActionType::ALL[i];
            let payload = strip_enclosing_parens(&p).to_string();
            let dialogue = strip_enclosing_parens(&d).to_string();
            Event {
                action,
                payload: (action.paired_dialogue_tag().is_some() && !payload.is_empty()).then_some(payload),
                dialogue: (!dialogue.is_empty()).then_some(dialogue),
            }
        })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(
            think in proptest::option::of("[a-zA-Z ,.]{1,30}".prop_map(|s| s.trim().to_string()).prop_filter("non-empty", |s| !s.is_empty())),
            events in proptest::collection::vec(event(), 1..5),
        ) {
            let raw = serialize_turn(think.as_deref(), &events);
            let parsed = parse_events(&raw).unwrap();
            prop_assert_eq!(&parsed.think_aloud, &think);
            prop_assert_eq!(&parsed.events, &events);
            prop_assert_eq!(serialize_turn(parsed.think_aloud.as_deref(), &parsed.events), raw);
        }
    }

    #[test]
    fn every_tag_round_trips() {
        for a in ActionType::ALL {
            let e = Event {
                action: a,
                payload: a.paired_dialogue_tag().map(|_| "the old bridge".to_string()),
                dialogue: Some("Let's go.".into()),
            };
            let raw = serialize_turn(Some("Worth a try."), std::slice::from_ref(&e));
            let parsed = parse_events(&raw).unwrap();
            assert_eq!(parsed.events, vec![e], "{raw}");
        }
    }
}
