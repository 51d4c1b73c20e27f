//! Score an expert packet and measure inter-expert agreement on the rating
//! table.

use std::path::Path;

use agentcrowd::analysis::{cost_time_report, icc_2_1, CostTimeLedger, ExpertPacket, RatingTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/analysis");

    let packet = ExpertPacket::load(&data.join("expert_packet_example.toml"))?;
    println!("{}:", packet.expert);
    println!(
        "  {:<13} {:>5} {:>5} {:>8} {:>8} {:>8} {:>8}",
        "study", "time", "cost", "behav.", "insight", "fidel.", "helpful"
    );
    for (study, s) in packet.score()? {
        println!(
            "  {:<13} {:>5.2} {:>5.2} {:>8.3} {:>8.3} {:>8.2} {:>8.2}",
            study.to_string(),
            s.time_efficiency,
            s.cost_efficiency,
            s.behavior_fidelity,
            s.insight_fidelity,
            s.fidelity,
            s.insight_helpfulness
        );
    }

    let table = RatingTable::load(&data.join("expert_ratings.csv"))?;
    let m = table.rater_matrix()?;
    println!(
        "\nICC(2,1) over {} raters x {} items: {:.3}",
        m.len(),
        m[0].len(),
        icc_2_1(&m)?
    );

    let ledger = CostTimeLedger::load(&data.join("cost_time_ledger.toml"))?;
    let teams: Vec<&str> = ledger.rows.iter().map(|r| r.team.as_str()).collect();
    println!("\n{}", cost_time_report(&ledger, &teams)?);
    Ok(())
}
