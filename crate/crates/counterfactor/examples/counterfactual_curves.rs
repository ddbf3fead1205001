//! Trace average counterfactual outcomes over a grid of treatment
//! values, for the whole panel and for a single unit.
//!
//! With a degree-1 basis each curve is affine in the treatment, so the
//! difference quotient across the grid reproduces the unit's average
//! marginal effect; the example prints both to show the link.
//!
//! Run with: cargo run --example counterfactual_curves

use counterfactor::basis::Monomials;
use counterfactor::estimands::{counterfactual_curve, CurveControls, CurveScope};
use counterfactor::pipeline::{analyze, AnalysisOptions};
use counterfactor::simulation::{generate, DgpSpec};

fn main() -> counterfactor::Result<()> {
    let spec = DgpSpec::panel(120, 30, 0.0, 1, 13)?;
    let sample = generate(&spec, 0)?;
    let basis = Monomials::new(1)?;
    let opts = AnalysisOptions { unit_cis: false, ..Default::default() };
    let analysis = analyze(&sample.panel, &sample.units, &basis, &opts)?;

    let grid: Vec<f64> = (-4..=4).map(|g| 0.5 * g as f64).collect();
    let overall = counterfactual_curve(
        CurveScope::Overall,
        &grid,
        &analysis.factor,
        &analysis.unit_fits,
        &sample.units,
        &basis,
        CurveControls::default(),
    )?;
    let unit0 = counterfactual_curve(
        CurveScope::Unit(0),
        &grid,
        &analysis.factor,
        &analysis.unit_fits,
        &sample.units,
        &basis,
        CurveControls::default(),
    )?;

    println!("{:>6} {:>12} {:>12}", "d", "overall", "unit 0");
    for ((d, all), (_, one)) in overall.iter().zip(&unit0) {
        println!("{:>6.1} {:>12.4} {:>12.4}", d, all, one);
    }

    let slope = (unit0.last().unwrap().1 - unit0[0].1) / (grid.last().unwrap() - grid[0]);
    println!("\nunit 0 curve slope:            {slope:.6}");
    println!("unit 0 average marginal effect: {:.6}", analysis.estimands.unit_effects[0]);
    Ok(())
}
