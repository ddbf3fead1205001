//! Estimate per-unit, per-date, and overall average marginal effects on
//! a simulated panel of treated units.
//!
//! The overall effect is the mean of the per-unit effects and its
//! interval shrinks with the number of units; per-date effects get
//! their own pointwise intervals.
//!
//! Run with: cargo run --example panel_effects

use counterfactor::basis::Monomials;
use counterfactor::pipeline::{analyze, AnalysisOptions};
use counterfactor::simulation::{generate, DgpSpec};

fn main() -> counterfactor::Result<()> {
    let spec = DgpSpec::panel(150, 40, 0.5, 1, 21)?;
    let sample = generate(&spec, 0)?;
    println!(
        "panel: N={} treated units, T={} dates, L={} series",
        spec.n, spec.t, spec.l
    );
    println!("true overall effect: {}\n", sample.truths.delta_overall);

    let basis = Monomials::new(1)?;
    // per-unit intervals are skipped; this run only reports aggregates
    let opts = AnalysisOptions { unit_cis: false, ..Default::default() };
    let analysis = analyze(&sample.panel, &sample.units, &basis, &opts)?;

    let overall = &analysis.overall_cis[0];
    println!(
        "overall effect: {:.4}  (std err {:.4}, 95% interval [{:.4}, {:.4}])",
        overall.point, overall.std_error, overall.lower, overall.upper
    );

    println!("\nfirst unit effects:");
    for (i, delta) in analysis.estimands.unit_effects.iter().take(5).enumerate() {
        println!("  unit {:>2}: {:>8.4}  (truth {:.4})", i, delta, sample.truths.delta_units[i]);
    }

    println!("\nper-date effects around the middle of the sample:");
    println!("  {:>4} {:>9} {:>9} {:>20} {:>9}", "date", "estimate", "std err", "95% interval", "truth");
    for date in 73..78 {
        let ci = &analysis.date_cis[date];
        println!(
            "  {:>4} {:>9.4} {:>9.4} {:>20} {:>9.4}",
            date,
            ci.point,
            ci.std_error,
            format!("[{:.4}, {:.4}]", ci.lower, ci.upper),
            sample.truths.delta_dates[date],
        );
    }

    let covered = analysis
        .date_cis
        .iter()
        .zip(&sample.truths.delta_dates)
        .filter(|(ci, truth)| ci.contains(**truth))
        .count();
    println!(
        "\npointwise 95% intervals cover the per-date truth at {}/{} dates",
        covered,
        analysis.date_cis.len()
    );
    Ok(())
}
