//! Run one encounter, then interview the player about it and extract its
//! think-aloud digest.

use std::collections::BTreeMap;
use std::path::Path;

use agentcrowd::experiencing::{player_spec, run_interaction, InteractionOptions, NpcFixture};
use agentcrowd::feedback::{interview, think_aloud_digest, InterviewScript};
use agentcrowd::gateway::Gateway;
use agentcrowd::onboarding::{BartleType, BigFive, EnrichedProfile};
use agentcrowd::pool::BasicProfile;
use agentcrowd::study::{Stage, StudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo");
    let cfg = StudyConfig::load(&demo.join("study.toml"))?;
    let npc = NpcFixture::load(&demo.join("npcs/6_ranni.toml"))?;
    let player = EnrichedProfile {
        basic: BasicProfile {
            profile_id: "example-explorer".into(),
            pool: "example".into(),
            persona_text: "A cartographer who collects old maps.".into(),
            structured_fields: BTreeMap::new(),
        },
        bartle_type: BartleType::Explorer,
        big_five: BigFive::uniform(4.0),
        raw_answers: BTreeMap::new(),
    };

    let play = Gateway::new(cfg.backend_for(Stage::Experiencing))?;
    let transcript = run_interaction(
        &player_spec(&player, &npc),
        &npc.spec(),
        &play,
        &InteractionOptions::default(),
    )?;
    let ask = Gateway::new(cfg.backend_for(Stage::Feedback))?;
    let record = interview(
        &player,
        std::slice::from_ref(&transcript),
        &InterviewScript::default_script(),
        &ask,
    );
    for item in &record.items {
        println!(
            "[{}]\n  Q: {}\n  A: {}\n",
            item.key,
            item.prompt.lines().next().unwrap_or(""),
            item.response
        );
    }
    let digest = think_aloud_digest(player.id(), std::slice::from_ref(&transcript));
    println!("think-aloud segments: {}", digest.items.len());
    for item in digest.items.iter().take(3) {
        println!("  {}: {}", item.key, item.response);
    }
    Ok(())
}
