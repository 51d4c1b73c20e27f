//! Administer the Bartle and Big Five intake surveys to a few personas
//! through the mock backend.

use std::path::Path;

use agentcrowd::gateway::Gateway;
use agentcrowd::onboarding::{onboard_profile, IntakeSurvey};
use agentcrowd::pool::{sample_profiles, Registry};
use agentcrowd::study::{Stage, StudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo");
    let cfg = StudyConfig::load(&demo.join("study.toml"))?;
    let gw = Gateway::new(cfg.backend_for(Stage::Onboarding))?;
    let surveys = ["bartle.toml", "big_five.toml"]
        .iter()
        .map(|f| IntakeSurvey::load(&demo.join("surveys").join(f)))
        .collect::<Result<Vec<_>, _>>()?;

    let pool = Registry::load_manifest(&demo.join("pool/registry.toml"))?.get("demo-personas")?;
    for basic in sample_profiles(&pool, 4, 1)? {
        let p = onboard_profile(&basic, &surveys, &gw)?;
        println!(
            "{}  {:<10}  {}",
            p.id(),
            p.bartle_type.to_string(),
            p.big_five.summary()
        );
    }
    let t = gw.totals();
    println!("\n{} requests, {} input tokens", t.requests, t.usage.input_tokens);
    Ok(())
}
