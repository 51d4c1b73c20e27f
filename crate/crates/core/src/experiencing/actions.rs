//! The tagged action vocabulary shared by players and NPCs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionType {
    DInit,
    DEnd,
    QAccept,
    QReject,
    QOffer,
    QComplete,
    EObserve,
    EInteract,
    EExplore,
    EGather,
    CAttack,
    CDefend,
    CDodge,
    CUse,
    SBuild,
    SBreak,
    SOffer,
    SLearn,
}

/// (tag, label, description, format, paired dialogue marker)
type Row = (
    &'static str,
    &'static str,
    &'static str,
    &'static str,
    Option<&'static str>,
);

const TABLE: [Row; 18] = [
    (
        "D-INIT",
        "Speaking",
        "Initiating or continuing a conversation",
        "[D-INIT] (your text)",
        None,
    ),
    (
        "D-END",
        "Ending a Conversation",
        "Concluding a conversation",
        "[D-END] (your text)",
        None,
    ),
    (
        "Q-ACCEPT",
        "Accepting a Quest",
        "Agreeing to take on a quest",
        "[Q-ACCEPT] (quest description) [D-ACCEPT] (response)",
        Some("D-ACCEPT"),
    ),
    (
        "Q-REJECT",
        "Rejecting a Quest",
        "Declining a quest",
        "[Q-REJECT] (quest description) [D-REJECT] (response)",
        Some("D-REJECT"),
    ),
    (
        "Q-OFFER",
        "Offering a Quest",
        "Proposing a quest",
        "[Q-OFFER] (quest description) [D-OFFER] (response)",
        Some("D-OFFER"),
    ),
    (
        "Q-COMPLETE",
        "Completing a Quest",
        "Fulfilling quest requirements",
        "[Q-COMPLETE] (completion confirmation) [D-COMPLETE] (response)",
        Some("D-COMPLETE"),
    ),
    (
        "E-OBSERVE",
        "Observing Details",
        "Looking for clues",
        "[E-OBSERVE] (description) [D-OBSERVE] (response)",
        Some("D-OBSERVE"),
    ),
    (
        "E-INTERACT",
        "Interacting with an Object",
        "Engaging with an object",
        "[E-INTERACT] (description) [D-INTERACT] (response)",
        Some("D-INTERACT"),
    ),
    (
        "E-EXPLORE",
        "Exploring a Location",
        "Investigating a new area",
        "[E-EXPLORE] (location) [D-EXPLORE] (response)",
        Some("D-EXPLORE"),
    ),
    (
        "E-GATHER",
        "Gathering Resources",
        "Collecting items",
        "[E-GATHER] (resources) [D-GATHER] (response)",
        Some("D-GATHER"),
    ),
    (
        "C-ATTACK",
        "Attacking an Objective",
        "Declaring an attack",
        "[C-ATTACK] (target) [D-ATTACK] (response)",
        Some("D-ATTACK"),
    ),
    (
        "C-DEFEND",
        "Defending Against an Attack",
        "Protecting an objective",
        "[C-DEFEND] (target) [D-DEFEND] (response)",
        Some("D-DEFEND"),
    ),
    (
        "C-DODGE",
        "Dodging an Attack",
        "Evading a threat",
        "[C-DODGE] (action or threat) [D-DODGE] (response)",
        Some("D-DODGE"),
    ),
    (
        "C-USE",
        "Utilizing an Item",
        "Using an item in combat",
        "[C-USE] (item/skill) [D-USE] (response)",
        Some("D-USE"),
    ),
    (
        "S-BUILD",
        "Building a Relationship",
        "Strengthening social bonds",
        "[S-BUILD] (person/group) [D-BUILD] (response)",
        Some("D-BUILD"),
    ),
    (
        "S-BREAK",
        "Breaking a Relationship",
        "Ending a relationship",
        "[S-BREAK] (person/group) [D-BREAK] (response)",
        Some("D-BREAK"),
    ),
    (
        "S-OFFER",
        "Offering Support",
        "Providing help",
        "[S-OFFER] (support description) [D-OFFER] (response)",
        Some("D-OFFER"),
    ),
    (
        "S-LEARN",
        "Acquiring Knowledge",
        "Learning through interaction",
        "[S-LEARN] (information) [D-LEARN] (response)",
        Some("D-LEARN"),
    ),
];

impl ActionType {
    pub const ALL: [ActionType; 18] = [
        Self::DInit,
        Self::DEnd,
        Self::QAccept,
        Self::QReject,
        Self::QOffer,
        Self::QComplete,
        Self::EObserve,
        Self::EInteract,
        Self::EExplore,
        Self::EGather,
        Self::CAttack,
        Self::CDefend,
        Self::CDodge,
        Self::CUse,
        Self::SBuild,
        Self::SBreak,
        Self::SOffer,
        Self::SLearn,
    ];

    fn row(self) -> &'static Row {
        &TABLE[self as usize]
    }

    pub fn tag(self) -> &'static str {
        self.row().0
    }

    /// `D`, `Q`, `E`, `C` or `S`.
    pub fn category(self) -> char {
        self.tag().as_bytes()[0] as char
    }

    pub fn label(self) -> &'static str {
        self.row().1
    }

    pub fn description(self) -> &'static str {
        self.row().2
    }

    /// The usage pattern shown to agents, e.g. `[C-USE] (item/skill) [D-USE] (response)`.
    pub fn format(self) -> &'static str {
        self.row().3
    }

    /// Companion dialogue marker; `None` for the two plain speech actions.
    pub fn paired_dialogue_tag(self) -> Option<&'static str> {
        self.row().4
    }

    /// Prompt line describing the action.
    pub fn prompt_line(self) -> String {
        format!("{}: {}. Format: {}", self.label(), self.description(), self.format())
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }

    /// Dialogue markers that may follow a paired action.
    pub fn is_dialogue_marker(tag: &str) -> bool {
        TABLE.iter().any(|r| r.4 == Some(tag))
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ActionType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::from_tag(s.trim()).ok_or_else(|| format!("unknown action tag {s:?}"))
    }
}

impl Serialize for ActionType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for ActionType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn eighteen_distinct_tags() {
        let tags: BTreeSet<_> = ActionType::ALL.iter().map(|a| a.tag()).collect();
        assert_eq!(tags.len(), 18);
        for (i, a) in ActionType::ALL.iter().enumerate() {
            assert_eq!(*a as usize, i);
            assert_eq!(ActionType::from_tag(a.tag()), Some(*a));
        }
    }

    #[test]
    fn category_matches_prefix() {
        for a in ActionType::ALL {
            assert!("DQECS".contains(a.category()));
            assert!(a.tag().starts_with(a.category()));
            assert_eq!(&a.tag()[1..2], "-");
        }
    }

    #[test]
    fn pairs_follow_the_format_column() {
        for a in ActionType::ALL {
            assert!(a.format().starts_with(&format!("[{}]", a.tag())));
            match a.paired_dialogue_tag() {
                None => assert!(matches!(a, ActionType::DInit | ActionType::DEnd)),
                Some(d) => {
                    assert!(a.format().contains(&format!("[{d}] (response)")));
                    assert_eq!(&d[2..], &a.tag()[2..]);
                }
            }
        }
        assert_eq!(
            ActionType::QOffer.paired_dialogue_tag(),
            ActionType::SOffer.paired_dialogue_tag()
        );
        assert!(ActionType::is_dialogue_marker("D-ACCEPT"));
        assert!(!ActionType::is_dialogue_marker("D-INIT"));
    }

    #[test]
    fn serde_uses_tags() {
        let json = serde_json::to_string(&ActionType::CUse).unwrap();
        assert_eq!(json, "\"C-USE\"");
        let back: ActionType = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ActionType::CUse);
        assert!(serde_json::from_str::<ActionType>("\"X-FOO\"").is_err());
    }
}
