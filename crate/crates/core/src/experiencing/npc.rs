//! Agent specifications: NPC fixtures and player agents built from
//! enriched profiles.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::actions::ActionType;
use super::ExperiencingError;
use crate::onboarding::{BartleType, EnrichedProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Player,
    Npc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    /// Profile id for players, NPC id for NPCs.
    pub identity: String,
    pub display_name: String,
    pub role: AgentRole,
    pub environment: String,
    pub character: String,
    pub goal: String,
    pub action_space: Vec<ActionType>,
    pub think_aloud: bool,
    /// Reject replies that use actions outside `action_space`.
    #[serde(default = "yes")]
    pub enforce_action_space: bool,
}

fn yes() -> bool {
    true
}

impl AgentSpec {
    pub fn validate(&self) -> Result<(), ExperiencingError> {
        let fail = |m: String| Err(ExperiencingError::Spec(format!("{}: {m}", self.identity)));
        if self.identity.trim().is_empty() {
            return Err(ExperiencingError::Spec("agent without identity".into()));
        }
        if self.action_space.is_empty() {
            return fail("empty action space".into());
        }
        let mut seen = self.action_space.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.action_space.len() {
            return fail("duplicate actions".into());
        }
        if self.role == AgentRole::Player && !self.action_space.contains(&ActionType::DEnd) {
            return fail("players need D-END".into());
        }
        Ok(())
    }
}

/// System prompt: environment, character, goal, action formats, and the
/// think-aloud instruction when enabled. Pure in `spec`.
pub fn build_prompt(spec: &AgentSpec) -> String {
    let mut p = String::new();
    p.push_str(&format!("## Environment\n{}\n\n", spec.environment.trim()));
    p.push_str(&format!("## Character\n{}\n\n", spec.character.trim()));
    p.push_str(&format!("## Goal\n{}\n\n", spec.goal.trim()));
    p.push_str("## Actions\nBuild every reply from the tagged actions below. One reply may contain several actions, in order.\n");
    for a in &spec.action_space {
        p.push_str(&format!("- {}\n", a.prompt_line()));
    }
    if spec.role == AgentRole::Player {
        p.push_str("Use [D-END] once your goal is reached or you want to leave the conversation.\n");
    }
    if spec.think_aloud {
        p.push_str(
            "\n## Think-aloud\nAt each turn, generate a [Think-Aloud] segment before taking any action. \
             In it, reflect on how you are deciding what to do and on how the game feels to you right now. \
             Start every reply with this segment.\n",
        );
    }
    p
}

/// One NPC as shipped in a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpcFixture {
    pub npc_id: String,
    pub name: String,
    pub game: String,
    /// Player type the script content targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designed_for: Option<BartleType>,
    pub environment: String,
    pub character: String,
    pub goal: String,
    /// What the player is trying to achieve in this encounter.
    pub player_goal: String,
    pub action_space: Vec<ActionType>,
}

impl NpcFixture {
    pub fn from_toml(text: &str) -> Result<Self, ExperiencingError> {
        let npc: Self = toml::from_str(text).map_err(|e| ExperiencingError::Spec(e.to_string()))?;
        npc.spec().validate()?;
        Ok(npc)
    }

    pub fn load(path: &Path) -> Result<Self, ExperiencingError> {
        let text = fs::read_to_string(path).map_err(|e| ExperiencingError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ExperiencingError::Spec(format!("{}: {e}", path.display())))
    }

    pub fn spec(&self) -> AgentSpec {
        AgentSpec {
            identity: self.npc_id.clone(),
            display_name: self.name.clone(),
            role: AgentRole::Npc,
            environment: self.environment.clone(),
            character: self.character.clone(),
            goal: self.goal.clone(),
            action_space: self.action_space.clone(),
            think_aloud: false,
            enforce_action_space: true,
        }
    }
}

/// Every `*.toml` in `dir`, ordered by file name. Ids must be unique.
pub fn load_npc_dir(dir: &Path) -> Result<Vec<NpcFixture>, ExperiencingError> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| ExperiencingError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let npcs = paths
        .iter()
        .map(|p| NpcFixture::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ids: Vec<_> = npcs.iter().map(|n| n.npc_id.as_str()).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(ExperiencingError::Spec(format!("duplicate NPC id {:?}", w[0])));
    }
    Ok(npcs)
}

/// Player agent for one encounter: the NPC's world, the profile as
/// character, the full action space and think-aloud on.
pub fn player_spec(profile: &EnrichedProfile, npc: &NpcFixture) -> AgentSpec {
    AgentSpec {
        identity: profile.id().to_string(),
        display_name: "Player".into(),
        role: AgentRole::Player,
        environment: format!("You are playing {}.\n{}", npc.game, npc.environment.trim()),
        character: format!(
            "You are a player of this game. Your background:\n{}\n\nPlayer type: {}\nBig Five: {}",
            profile.basic.persona().trim(),
            profile.bartle_type,
            profile.big_five.summary()
        ),
        goal: npc.player_goal.clone(),
        action_space: ActionType::ALL.to_vec(),
        think_aloud: true,
        enforce_action_space: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn kass() -> NpcFixture {
        NpcFixture::from_toml(
            r#"
npc_id = "kass"
name = "Kass"
game = "a wilderness adventure"
designed_for = "Explorer"
environment = "A windy ridge above the stables."
character = "Kass, a travelling bard who knows old songs."
goal = "Share the song of the shrine and hint at its location."
player_goal = "Learn where the hidden shrine is."
action_space = ["D-INIT", "D-END", "Q-OFFER", "S-LEARN"]
"#,
        )
        .unwrap()
    }

    fn player() -> AgentSpec {
        AgentSpec {
            identity: "p1".into(),
            display_name: "Player".into(),
            role: AgentRole::Player,
            environment: "env".into(),
            character: "char".into(),
            goal: "goal".into(),
            action_space: ActionType::ALL.to_vec(),
            think_aloud: true,
            enforce_action_space: true,
        }
    }

    #[test]
    fn full_space_lists_every_format() {
        let prompt = build_prompt(&player());
        assert_eq!(prompt.matches(". Format: [").count(), 18);
        for a in ActionType::ALL {
            assert!(prompt.contains(a.format()));
        }
        assert!(prompt.contains("generate a [Think-Aloud] segment before"));
    }

    #[test]
    fn sections_in_fixed_order() {
        let prompt = build_prompt(&player());
        let at = |s: &str| prompt.find(s).unwrap();
        assert!(at("## Environment") < at("## Character"));
        assert!(at("## Character") < at("## Goal"));
        assert!(at("## Goal") < at("## Actions"));
        assert!(at("## Actions") < at("## Think-aloud"));
    }

    #[test]
    fn npc_prompt_has_no_think_aloud() {
        let spec = kass().spec();
        let prompt = build_prompt(&spec);
        assert!(!prompt.contains("Think-Aloud"));
        assert_eq!(prompt.matches(". Format: [").count(), 4);
        assert_eq!(prompt, build_prompt(&spec));
    }

    #[test]
    fn validation() {
        let mut p = player();
        p.action_space.retain(|a| *a != ActionType::DEnd);
        assert!(p.validate().is_err());
        let mut n = kass().spec();
        n.action_space.push(ActionType::DInit);
        assert!(n.validate().is_err());
        assert!(NpcFixture::from_toml("npc_id = \"x\"").is_err());
        assert!(kass().spec().validate().is_ok());
    }
}
