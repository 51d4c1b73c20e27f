//! Coverage scaling of the agentic team against each human study, with the
//! resulting agents-per-human ratio.

use std::path::Path;

use agentcrowd::analysis::{
    doubling_sizes, equivalency_ratio, expected_coverage, load_coded, of_study, study_codes, subsample_coverage,
    venn_overlap, Study,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/analysis");
    let coded = load_coded(&data.join("coverage_coded.jsonl"))?;
    let agents = of_study(&coded, Study::Agentic);
    let sizes = doubling_sizes(agents.len());

    for study in [Study::Local, Study::Crowdsourced] {
        let human = study_codes(&coded, study);
        let humans = of_study(&coded, study).len();
        let curve = subsample_coverage(&agents, &human, &sizes, 200, 42)?;
        println!("{study}: {humans} participants, {} codes", human.len());
        println!("  size  sampled  exact");
        for (size, mean) in curve.sizes.iter().zip(&curve.means) {
            println!(
                "  {size:>4}  {mean:.4}   {:.4}",
                expected_coverage(&agents, &human, *size)?
            );
        }
        match equivalency_ratio(&curve, humans, 0.9) {
            Ok(r) => println!("  one participant is worth {r} agents at 90% coverage\n"),
            Err(e) => println!("  {e}\n"),
        }
    }
    let venn = venn_overlap(
        &study_codes(&coded, Study::Local),
        &study_codes(&coded, Study::Crowdsourced),
        &study_codes(&coded, Study::Agentic),
    );
    print!("{}", venn.to_csv());
    Ok(())
}
