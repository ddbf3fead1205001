//! Round-trip a panel through the long-format CSV layer: simulate,
//! write to disk, read back, estimate, and compare against the
//! in-memory run.
//!
//! The writer uses shortest round-trip float formatting, so the
//! re-ingested panel is bit-identical and both runs agree exactly.
//!
//! Run with: cargo run --example csv_workflow

use counterfactor::basis::Monomials;
use counterfactor::ingest::{ingest_long_csv, write_long_csv, IngestOptions};
use counterfactor::pipeline::{analyze, AnalysisOptions};
use counterfactor::simulation::{generate, DgpSpec};

fn main() -> counterfactor::Result<()> {
    let spec = DgpSpec::panel(80, 12, 0.0, 1, 31)?;
    let sample = generate(&spec, 0)?;

    let path = std::env::temp_dir().join("counterfactor_example_panel.csv");
    write_long_csv(&path, &sample.panel, &sample.units)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let ingested = ingest_long_csv(&path, &IngestOptions::default())?;
    println!(
        "read back {} units x {} dates, series {:?}",
        ingested.meta.unit_ids.len(),
        ingested.meta.dates.len(),
        ingested.meta.series_names
    );
    assert_eq!(ingested.panel.values(), sample.panel.values(), "round trip is lossless");

    let basis = Monomials::new(1)?;
    let opts = AnalysisOptions { unit_cis: false, ..Default::default() };
    let from_file = analyze(&ingested.panel, &ingested.units, &basis, &opts)?;
    let in_memory = analyze(&sample.panel, &sample.units, &basis, &opts)?;

    println!("\noverall effect from the file: {:.6}", from_file.estimands.overall);
    println!("overall effect in memory:     {:.6}", in_memory.estimands.overall);
    println!("difference:                   {:.2e}", (from_file.estimands.overall - in_memory.estimands.overall).abs());
    println!("true effect:                  {:.6}", sample.truths.delta_overall);

    std::fs::remove_file(&path)?;
    Ok(())
}
