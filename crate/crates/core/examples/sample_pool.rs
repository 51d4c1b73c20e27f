//! List the registered persona pools and draw a seeded sample.
//!
//! `cargo run --example sample_pool -- [n] [seed]`

use std::path::Path;

use agentcrowd::pool::{sample_profiles, Registry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(5), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(42), |s| s.parse())?;

    let registry =
        Registry::load_manifest(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo/pool/registry.toml"))?;
    for d in registry.descriptors() {
        println!("{:<20} {:<12} {:?}", d.name, d.domain, d.size);
    }
    let pool = registry.get("demo-personas")?;
    println!("\n{n} of {} profiles, seed {seed}:", pool.len());
    for p in sample_profiles(&pool, n, seed)? {
        println!("  {}  {}", p.profile_id, p.persona());
    }
    Ok(())
}
