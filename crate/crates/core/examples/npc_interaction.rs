//! Play one scripted player against an NPC fixture and print the
//! transcript turn by turn.

use std::collections::BTreeMap;
use std::path::Path;

use agentcrowd::experiencing::{player_spec, run_interaction, InteractionOptions, NpcFixture};
use agentcrowd::gateway::Gateway;
use agentcrowd::onboarding::{BartleType, BigFive, EnrichedProfile};
use agentcrowd::pool::BasicProfile;
use agentcrowd::study::{Stage, StudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo");
    let cfg = StudyConfig::load(&demo.join("study.toml"))?;
    let gw = Gateway::new(cfg.backend_for(Stage::Experiencing))?;
    let npc = NpcFixture::load(&demo.join("npcs/3_emily.toml"))?;

    let player = EnrichedProfile {
        basic: BasicProfile {
            profile_id: "example-player".into(),
            pool: "example".into(),
            persona_text: "A night-shift nurse who plays farming games to unwind.".into(),
            structured_fields: BTreeMap::new(),
        },
        bartle_type: BartleType::Socializer,
        big_five: BigFive::uniform(3.5),
        raw_answers: BTreeMap::new(),
    };
    let t = run_interaction(
        &player_spec(&player, &npc),
        &npc.spec(),
        &gw,
        &InteractionOptions::default(),
    )?;
    for turn in &t.turns {
        println!("{:>2} {:<16} {}", turn.index, turn.speaker, turn.raw);
    }
    println!(
        "\ntermination: {:?}, player turns: {}",
        t.termination,
        t.player_turns().count()
    );
    Ok(())
}
