//! Run the whole demo study with the mock backend and print the report.
//!
//! `cargo run --release --example demo_study -- [out-dir]`

use std::path::{Path, PathBuf};

use agentcrowd::study::{report, run_study, RunOptions, StudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = StudyConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo/study.toml"))?;
    cfg.output_dir = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("demo-out"), PathBuf::from);
    cfg.validate()?;
    run_study(&cfg, &RunOptions::default())?;
    print!("{}", report(&cfg.output_dir)?);
    Ok(())
}
