//! Screen a synthetic, Socializer-heavy stream against a balanced quota
//! and show the distributions before and after.

use std::collections::BTreeMap;

use agentcrowd::onboarding::{BartleType, BigFive, EnrichedProfile, Trait};
use agentcrowd::pool::BasicProfile;
use agentcrowd::rng::SeededRng;
use agentcrowd::screening::{distribution_report, screen_stream, CurvingRule, QuotaSpec, ReferenceGroup};
use agentcrowd::workers::CancelToken;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = SeededRng::new(3);
    let stream: Vec<EnrichedProfile> = (0..2000)
        .map(|i| {
            let bartle = [
                BartleType::Socializer,
                BartleType::Socializer,
                BartleType::Achiever,
                BartleType::Explorer,
                BartleType::Killer,
            ][rng.below(5) as usize];
            let mut big_five = BigFive::uniform(0.0);
            for t in Trait::ALL {
                big_five.set(t, 3.0 + 2.0 * rng.unit());
            }
            EnrichedProfile {
                basic: BasicProfile {
                    profile_id: format!("s{i:04}"),
                    pool: "synthetic".into(),
                    persona_text: String::new(),
                    structured_fields: BTreeMap::new(),
                },
                bartle_type: bartle,
                big_five,
                raw_answers: BTreeMap::new(),
            }
        })
        .collect();

    let quota = QuotaSpec::balanced(&[Trait::Openness], 15);
    let rule = CurvingRule {
        dimensions: Trait::ALL.to_vec(),
        reference: ReferenceGroup::Surveyed,
    };
    let state = screen_stream(stream.iter().cloned(), quota, rule.clone(), 100, CancelToken::new())?;
    println!(
        "stopped: {}, after {} profiles, {} accepted\n",
        state.stopped,
        state.seen,
        state.accepted.len()
    );
    for (cell, n) in &state.tallies {
        println!("  {cell:<28} {n}");
    }
    println!(
        "\nSurveyed\n{}",
        distribution_report(&stream[..state.seen], &rule)?.to_table()
    );
    let team: Vec<EnrichedProfile> = state.accepted.iter().map(|a| a.profile.clone()).collect();
    println!("Accepted\n{}", distribution_report(&team, &rule)?.to_table());
    Ok(())
}
