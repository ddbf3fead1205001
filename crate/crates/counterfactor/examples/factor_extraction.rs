//! Extract latent factors from a panel with a planted two-factor
//! structure and let the growth-ratio statistic find the rank.
//!
//! Run with: cargo run --example factor_extraction

use counterfactor::factor::{extract_factors, growth_ratio};
use counterfactor::panel::PanelMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> counterfactor::Result<()> {
    let (t, l, r_true) = (240, 40, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = StandardNormal;

    // X = F Lambda' + noise, with factor variances 2 and 1
    let f = DMatrix::<f64>::from_fn(t, r_true, |_, k| {
        let scale: f64 = if k == 0 { 2.0 } else { 1.0 };
        let draw: f64 = normal.sample(&mut rng);
        scale.sqrt() * draw
    });
    let lambda = DMatrix::<f64>::from_fn(l, r_true, |_, _| rng.gen_range(-1.0..1.0));
    let noise = DMatrix::<f64>::from_fn(t, l, |_, _| {
        let draw: f64 = normal.sample(&mut rng);
        0.3 * draw
    });
    let common = &f * lambda.transpose();
    let x = PanelMatrix::new(&common + &noise)?;

    let profile = growth_ratio(&x, 6)?;
    println!("growth-ratio statistics for rank 1..=6:");
    for (k, stat) in profile.statistics.iter().enumerate() {
        let marker = if k + 1 == profile.r_hat { "  <- selected" } else { "" };
        println!("  rank {:>2}: {:>8.4}{}", k + 1, stat, marker);
    }
    if profile.ambiguous {
        println!("  (selection was ambiguous)");
    }

    let fit = extract_factors(&x, profile.r_hat)?;
    println!("\nextracted {} factors from a {} x {} panel", fit.r_hat, t, l);
    println!("scaled singular values: {:?}", fit.d_hat.as_slice());

    // the common component is identified even though F itself is only
    // identified up to rotation
    let recovered = &fit.f_hat * fit.lambda_hat.transpose();
    let err = (&recovered - &common).norm() / common.norm();
    println!("relative common-component error: {err:.4}");
    println!("residual share of variance: {:.4}", fit.e_hat.norm_squared() / x.values().norm_squared());
    Ok(())
}
