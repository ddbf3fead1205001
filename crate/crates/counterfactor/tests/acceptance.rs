//! Acceptance gate: the eight criteria this library is built against.
//!
//! One test per criterion. Each prints a single PASS or FAIL line with
//! the measured numbers (visible with --nocapture) and asserts the
//! verdict. The Monte Carlo criteria replay the reference experiments
//! at desk scale with fixed seeds, so their verdicts are deterministic;
//! the oracle criteria check the estimators against independent
//! reimplementations living in this file.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use counterfactor::basis::Monomials;
use counterfactor::estimands::{
    ame_unit, counterfactual_curve, estimand_set, z_rows, z_unit_mean, z_vector, CurveControls,
    CurveScope,
};
use counterfactor::factor::{extract_factors, growth_ratio};
use counterfactor::inference::{
    hac_cov, variance_overall, variance_time, variance_unit, GramNormalization, KernelSpec,
};
use counterfactor::ingest::write_long_csv;
use counterfactor::panel::{PanelMatrix, UnitData};
use counterfactor::regression::{build_design, fit_ols, Design, DesignLayout, UnitFit};
use counterfactor::simulation::{
    generate, run_experiment, DgpSpec, IntervalMetrics, McMetrics, McOptions, McReport,
};

// ---------------------------------------------------------------------
// verdict plumbing: every criterion accumulates named checks and prints
// one line

struct Gate {
    name: &'static str,
    details: Vec<String>,
    failed: Vec<String>,
}

impl Gate {
    fn new(name: &'static str) -> Self {
        Self { name, details: Vec::new(), failed: Vec::new() }
    }

    fn check(&mut self, label: String, ok: bool) {
        if ok {
            self.details.push(label);
        } else {
            self.failed.push(label);
        }
    }

    fn finish(self) {
        let verdict = if self.failed.is_empty() { "PASS" } else { "FAIL" };
        let mut parts = self.failed.clone();
        parts.extend(self.details);
        println!("acceptance {}: {verdict} [{}]", self.name, parts.join("; "));
        assert!(
            self.failed.is_empty(),
            "{} failed checks: {}",
            self.name,
            self.failed.join("; ")
        );
    }
}

fn metrics<'a>(report: &'a McReport, estimand: &str) -> &'a McMetrics {
    report
        .metrics
        .iter()
        .find(|m| m.estimand == estimand)
        .unwrap_or_else(|| panic!("report has no {estimand} metrics"))
}

fn interval<'a>(m: &'a McMetrics, kernel: &str) -> &'a IntervalMetrics {
    m.intervals
        .iter()
        .find(|iv| iv.kernel == kernel)
        .unwrap_or_else(|| panic!("{} has no {kernel} interval", m.estimand))
}

fn run_cell(spec: DgpSpec, replications: usize, kernels: Vec<KernelSpec>) -> McReport {
    let opts = McOptions { replications, kernels, ..Default::default() };
    run_experiment(&spec, &opts).expect("cell runs")
}

// the panel reference cell is shared by criteria 3 and 4; its
// autocorrelated twin uses the same seed so the comparison rides on
// common random numbers
static PANEL_RHO0: OnceLock<McReport> = OnceLock::new();
static PANEL_RHO5: OnceLock<McReport> = OnceLock::new();

fn panel_rho0() -> &'static McReport {
    PANEL_RHO0.get_or_init(|| {
        run_cell(DgpSpec::panel(200, 200, 0.0, 1, 201).unwrap(), 1000, vec![KernelSpec::hc()])
    })
}

fn panel_rho5() -> &'static McReport {
    PANEL_RHO5.get_or_init(|| {
        run_cell(DgpSpec::panel(200, 200, 0.5, 1, 201).unwrap(), 1000, vec![KernelSpec::hc()])
    })
}

// ---------------------------------------------------------------------
// criterion 1: single-unit reference moments at three panel sizes

#[test]
fn criterion_1_single_unit_reference_cells() {
    let cells: [(usize, usize, f64, f64, u64); 3] = [
        (50, 50, 0.92, 0.219, 101),
        (100, 100, 0.93, 0.154, 102),
        (200, 200, 0.94, 0.108, 103),
    ];
    let mut gate = Gate::new("criterion 1 (single-unit bias, coverage, radius)");
    for (t, l, cov_ref, rad_ref, seed) in cells {
        let spec = DgpSpec::single_unit(t, l, 0.0, 1, seed).unwrap();
        let report = run_cell(spec, 1000, vec![KernelSpec::hc()]);
        let m = metrics(&report, "unit");
        let iv = interval(m, "hc");
        gate.check(
            format!("({t},{l}) bias {:.4} within 0.03", m.bias),
            m.bias.abs() <= 0.03,
        );
        gate.check(
            format!("({t},{l}) hc coverage {:.3} within 0.03 of {cov_ref}", iv.coverage),
            (iv.coverage - cov_ref).abs() <= 0.03,
        );
        gate.check(
            format!("({t},{l}) hc radius {:.4} within 15% of {rad_ref}", iv.avg_radius),
            (iv.avg_radius - rad_ref).abs() <= 0.15 * rad_ref,
        );
        gate.check(format!("({t},{l}) failures {}", report.failures), !report.excessive_failures);
    }
    gate.finish();
}

// ---------------------------------------------------------------------
// criterion 2: the long-run kernel repairs coverage under factor
// autocorrelation

#[test]
fn criterion_2_hac_beats_hc_under_autocorrelation() {
    let spec = DgpSpec::single_unit(200, 200, 0.5, 1, 104).unwrap();
    let report = run_cell(spec, 1000, vec![KernelSpec::hc(), KernelSpec::qs()]);
    let m = metrics(&report, "unit");
    let hc = interval(m, "hc").coverage;
    let qs = interval(m, "qs").coverage;
    let mut gate = Gate::new("criterion 2 (qs vs hc coverage at rho 0.5)");
    gate.check(format!("qs {qs:.3} >= hc {hc:.3} + 0.03"), qs >= hc + 0.03);
    gate.finish();
}

// ---------------------------------------------------------------------
// criterion 3: per-date inference is unaffected by factor
// autocorrelation

#[test]
fn criterion_3_date_effect_coverage_and_rho_invariance() {
    let rho0 = metrics(panel_rho0(), "date");
    let rho5 = metrics(panel_rho5(), "date");
    let mut gate = Gate::new("criterion 3 (per-date coverage, rho invariance)");
    for (label, m) in [("rho 0", rho0), ("rho 0.5", rho5)] {
        let cov = interval(m, "plain").coverage;
        gate.check(
            format!("{label} coverage {cov:.3} within 0.03 of 0.95"),
            (cov - 0.95).abs() <= 0.03,
        );
    }
    let pairs = [
        ("bias", rho0.bias, rho5.bias),
        ("variance", rho0.variance, rho5.variance),
        ("mse", rho0.mse, rho5.mse),
        ("radius", interval(rho0, "plain").avg_radius, interval(rho5, "plain").avg_radius),
        ("coverage", interval(rho0, "plain").coverage, interval(rho5, "plain").coverage),
    ];
    for (what, a, b) in pairs {
        gate.check(format!("{what} {a:.4} vs {b:.4} differ under 0.01"), (a - b).abs() < 0.01);
    }
    gate.finish();
}

// ---------------------------------------------------------------------
// criterion 4: overall panel effect matches its reference bias and
// coverage

#[test]
fn criterion_4_overall_effect_reference_cell() {
    let m = metrics(panel_rho0(), "overall");
    let iv = interval(m, "hc");
    let mut gate = Gate::new("criterion 4 (overall bias, coverage at (200,200))");
    gate.check(
        format!("bias {:.4} within 0.02 of -0.0014", m.bias),
        (m.bias - (-0.0014)).abs() <= 0.02,
    );
    gate.check(
        format!("hc coverage {:.3} within 0.03 of 0.95", iv.coverage),
        (iv.coverage - 0.95).abs() <= 0.03,
    );
    gate.finish();
}

// ---------------------------------------------------------------------
// criterion 5: quadratic treatment effect (J = 2) in both designs

#[test]
fn criterion_5_quadratic_basis_cells() {
    let mut gate = Gate::new("criterion 5 (J=2 bias and coverage)");
    let single = run_cell(
        DgpSpec::single_unit(200, 200, 0.0, 2, 301).unwrap(),
        500,
        vec![KernelSpec::hc()],
    );
    let m = metrics(&single, "unit");
    gate.check(format!("single bias {:.4} within 0.06", m.bias), m.bias.abs() <= 0.06);
    let cov = interval(m, "hc").coverage;
    gate.check(format!("single hc coverage {cov:.3} >= 0.90"), cov >= 0.90);

    let panel =
        run_cell(DgpSpec::panel(200, 200, 0.0, 2, 302).unwrap(), 500, vec![KernelSpec::hc()]);
    let m = metrics(&panel, "overall");
    gate.check(format!("panel bias {:.4} within 0.06", m.bias), m.bias.abs() <= 0.06);
    let cov = interval(m, "hc").coverage;
    gate.check(format!("panel hc coverage {cov:.3} >= 0.90"), cov >= 0.90);
    gate.finish();
}

// ---------------------------------------------------------------------
// criterion 6: analytic properties that hold without Monte Carlo

fn planted_panel(t: usize, l: usize, r: usize, noise: f64, seed: u64) -> (PanelMatrix, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let f = DMatrix::<f64>::from_fn(t, r, |_, k| {
        let scale = 2.0f64.powi((r - k) as i32 - 1);
        let draw: f64 = normal.sample(&mut rng);
        scale.sqrt() * draw
    });
    let lambda = DMatrix::<f64>::from_fn(l, r, |_, _| rng.gen_range(-1.0..1.0));
    let common = &f * lambda.transpose();
    let e = DMatrix::<f64>::from_fn(t, l, |_, _| {
        let draw: f64 = normal.sample(&mut rng);
        noise * draw
    });
    (PanelMatrix::new(&common + e).unwrap(), common)
}

fn refit(
    fit: &counterfactor::factor::FactorFit,
    units: &[UnitData],
    basis: &Monomials,
) -> Vec<UnitFit> {
    units
        .iter()
        .map(|u| fit_ols(&build_design(fit, u, basis).unwrap(), &u.outcome).unwrap())
        .collect()
}

#[test]
fn criterion_6_property_suite() {
    let mut gate = Gate::new("criterion 6 (property suite)");
    let basis = Monomials::new(2).unwrap();

    // noiseless recovery: with y constructed from the fitted design,
    // gamma and the unit effect come back at working precision
    {
        let (x, _) = planted_panel(90, 14, 2, 0.0, 61);
        let fit = extract_factors(&x, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let normal = StandardNormal;
        let treatment = DVector::<f64>::from_fn(90, |_, _| normal.sample(&mut rng));
        let controls = DMatrix::<f64>::from_fn(90, 1, |_, _| normal.sample(&mut rng));
        let unit = UnitData::new(DVector::zeros(90), treatment, controls).unwrap();
        let design = build_design(&fit, &unit, &basis).unwrap();
        let gamma_star =
            DVector::<f64>::from_fn(design.matrix.ncols(), |_, _| normal.sample(&mut rng));
        let y = &design.matrix * &gamma_star;
        let fitted = fit_ols(&design, &y).unwrap();
        let gamma_err = (&fitted.gamma - &gamma_star).amax();
        gate.check(format!("noiseless gamma error {gamma_err:.2e} <= 1e-10"), gamma_err <= 1e-10);
        let z_mean = z_unit_mean(&fit, &unit, &basis).unwrap();
        let delta_err = (ame_unit(&fitted, &z_mean).unwrap() - gamma_star.dot(&z_mean)).abs();
        gate.check(format!("noiseless effect error {delta_err:.2e} <= 1e-10"), delta_err <= 1e-10);
    }

    // flipping every factor's sign (with its loadings) leaves all
    // estimates and variances unchanged
    {
        let sample = generate(&DgpSpec::panel(80, 6, 0.0, 2, 63).unwrap(), 0).unwrap();
        let fit = extract_factors(&sample.panel, 2).unwrap();
        let fits = refit(&fit, &sample.units, &basis);
        let base = estimand_set(&fit, &fits, &sample.units, &basis).unwrap();
        let base_vu =
            variance_unit(&fits[0], &z_rows(&fit, &sample.units[0], &basis).unwrap(), &KernelSpec::qs())
                .unwrap();
        let base_vt =
            variance_time(&fit, &fits, &sample.units, &basis, 3, GramNormalization::default())
                .unwrap();
        let base_vo =
            variance_overall(&fit, &fits, &sample.units, &basis, &KernelSpec::hc()).unwrap();

        let mut flipped = fit.clone();
        flipped.f_hat.neg_mut();
        flipped.lambda_hat.neg_mut();
        let fits2 = refit(&flipped, &sample.units, &basis);
        let other = estimand_set(&flipped, &fits2, &sample.units, &basis).unwrap();
        let mut worst = (other.overall - base.overall).abs();
        for (a, b) in base.unit_effects.iter().zip(&other.unit_effects) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in base.date_effects.iter().zip(&other.date_effects) {
            worst = worst.max((a - b).abs());
        }
        let vu = variance_unit(
            &fits2[0],
            &z_rows(&flipped, &sample.units[0], &basis).unwrap(),
            &KernelSpec::qs(),
        )
        .unwrap();
        let vt =
            variance_time(&flipped, &fits2, &sample.units, &basis, 3, GramNormalization::default())
                .unwrap();
        let vo =
            variance_overall(&flipped, &fits2, &sample.units, &basis, &KernelSpec::hc()).unwrap();
        worst = worst.max((vu - base_vu).abs()).max((vt - base_vt).abs()).max((vo - base_vo).abs());
        gate.check(format!("sign-flip worst drift {worst:.2e} <= 1e-10"), worst <= 1e-10);
    }

    // Parzen below bandwidth one adds no autocovariance term, so it
    // equals the plain estimator bit for bit
    {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let normal = StandardNormal;
        let h = DMatrix::<f64>::from_fn(50, 3, |_, _| normal.sample(&mut rng));
        let parzen = hac_cov(&h, &KernelSpec::parzen().with_bandwidth(0.9)).unwrap();
        let hc = hac_cov(&h, &KernelSpec::hc()).unwrap();
        gate.check("parzen bandwidth 0.9 identical to hc".into(), parzen == hc);
    }

    // the overall effect is exactly the mean of the unit effects
    {
        let sample = generate(&DgpSpec::panel(60, 5, 0.0, 1, 65).unwrap(), 0).unwrap();
        let basis1 = Monomials::new(1).unwrap();
        let fit = extract_factors(&sample.panel, 2).unwrap();
        let fits = refit(&fit, &sample.units, &basis1);
        let set = estimand_set(&fit, &fits, &sample.units, &basis1).unwrap();
        let mean = set.unit_effects.iter().sum::<f64>() / set.unit_effects.len() as f64;
        gate.check("overall effect equals mean of unit effects exactly".into(), set.overall == mean);
    }

    // finite differences along the counterfactual curve reproduce the
    // analytic derivative
    {
        let sample = generate(&DgpSpec::panel(70, 5, 0.0, 2, 66).unwrap(), 0).unwrap();
        let fit = extract_factors(&sample.panel, 2).unwrap();
        let fits = refit(&fit, &sample.units, &basis);
        let (d0, h) = (0.3, 1e-4);
        let curve = counterfactual_curve(
            CurveScope::Unit(0),
            &[d0 - h, d0 + h],
            &fit,
            &fits,
            &sample.units,
            &basis,
            CurveControls::default(),
        )
        .unwrap();
        let fd = (curve[1].1 - curve[0].1) / (2.0 * h);
        let f_bar = DVector::<f64>::from_fn(fit.r_hat, |k, _| fit.f_hat.column(k).mean());
        let analytic =
            fits[0].gamma.dot(&z_vector(&f_bar, d0, &basis, sample.units[0].n_controls()));
        let rel = (fd - analytic).abs() / analytic.abs().max(1.0);
        gate.check(format!("curve derivative fd vs analytic rel err {rel:.2e} <= 1e-6"), rel <= 1e-6);
    }

    // reported mse decomposes into bias^2 + variance
    {
        let report =
            run_cell(DgpSpec::panel(50, 4, 0.0, 1, 67).unwrap(), 20, vec![KernelSpec::hc()]);
        let mut ok = true;
        for m in &report.metrics {
            ok &= (m.mse - (m.bias * m.bias + m.variance)).abs() <= 1e-12 * m.mse.max(1.0);
        }
        gate.check("mse equals bias^2 + variance".into(), ok);
    }

    // the plain covariance estimate is positive semidefinite
    {
        let mut rng = ChaCha8Rng::seed_from_u64(68);
        let normal = StandardNormal;
        let h = DMatrix::<f64>::from_fn(60, 4, |_, _| normal.sample(&mut rng));
        let cov = hac_cov(&h, &KernelSpec::hc()).unwrap();
        let eigs = cov.symmetric_eigen().eigenvalues;
        let min = eigs.min();
        let max: f64 = eigs.max();
        gate.check(
            format!("hc covariance psd (min eig {min:.2e})"),
            min >= -1e-12 * max.max(1.0),
        );
    }

    // the growth ratio finds planted ranks
    {
        let mut ok = true;
        let mut picks = Vec::new();
        for r in 1..=4usize {
            let (x, _) = planted_panel(150, 30, r, 0.05, 70 + r as u64);
            let picked = growth_ratio(&x, 8).unwrap().r_hat;
            picks.push(picked.to_string());
            ok &= picked == r;
        }
        gate.check(format!("growth ratio picks planted ranks 1..4 (got {})", picks.join(",")), ok);
    }

    gate.finish();
}

// ---------------------------------------------------------------------
// criterion 7: independent oracles for the two numerical workhorses

/// Solve a x = b by Gauss-Jordan elimination with partial pivoting.
/// Deliberately naive: this is the oracle the production solver is
/// judged against, sharing none of its code path.
fn gauss_jordan_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(n, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.set_column(n, b);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())?;
        if m[(pivot_row, col)].abs() < 1e-12 {
            return None;
        }
        m.swap_rows(col, pivot_row);
        let pivot = m[(col, col)];
        for k in col..=n {
            m[(col, k)] /= pivot;
        }
        for row in 0..n {
            if row != col {
                let factor = m[(row, col)];
                for k in col..=n {
                    m[(row, k)] -= factor * m[(col, k)];
                }
            }
        }
    }
    Some(m.column(n).into_owned())
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi
/// rotations. Returns (eigenvalues, eigenvectors as columns), unsorted.
fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(1.0);
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(p, k)] = a[(k, p)];
                        a[(k, q)] = s * akp + c * akq;
                        a[(q, k)] = a[(k, q)];
                    }
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Rank-r common component of x by the projection route: eigenvectors
/// of the date-by-date Gram matrix, computed by the Jacobi oracle.
fn oracle_common_component(x: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let gram = x * x.transpose();
    let (values, vectors) = jacobi_eigen(&gram);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());
    let t = x.nrows();
    let mut u = DMatrix::<f64>::zeros(t, r);
    for (pos, &idx) in order.iter().take(r).enumerate() {
        u.set_column(pos, &vectors.column(idx));
    }
    &u * (u.transpose() * x)
}

#[test]
fn criterion_7_oracle_equivalence() {
    let mut gate = Gate::new("criterion 7 (oracle equivalence)");

    // least squares vs dense normal equations on 100 random
    // well-conditioned designs
    let mut worst = 0.0f64;
    let mut solved = 0;
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let normal = StandardNormal;
        let layout = DesignLayout {
            n_factors: 1 + (i as usize % 3),
            n_basis: 1 + (i as usize % 2),
            n_controls: i as usize % 3,
        };
        let p = layout.width();
        let t = 8 * p + 20;
        let w = DMatrix::<f64>::from_fn(t, p, |_, _| normal.sample(&mut rng));
        let y = DVector::<f64>::from_fn(t, |_, _| normal.sample(&mut rng));
        let design = Design { matrix: w.clone(), layout };
        let fitted = fit_ols(&design, &y).unwrap();
        let reference = gauss_jordan_solve(&(w.transpose() * &w), &(w.transpose() * &y))
            .expect("well conditioned");
        worst = worst.max((&fitted.gamma - &reference).amax() / reference.amax().max(1.0));
        solved += 1;
    }
    gate.check(
        format!("least squares vs normal equations on {solved} designs, worst rel err {worst:.2e} <= 1e-10"),
        worst <= 1e-10 && solved == 100,
    );

    // factor extraction vs the Jacobi projection oracle
    let mut worst = 0.0f64;
    for (t, l, r, seed) in [(50, 80, 2, 2001u64), (60, 30, 3, 2002), (40, 40, 1, 2003)] {
        let (x, _) = planted_panel(t, l, r, 0.05, seed);
        let fit = extract_factors(&x, r).unwrap();
        let production = &fit.f_hat * fit.lambda_hat.transpose();
        let oracle = oracle_common_component(x.values(), r);
        let scale = x.values().amax().max(1.0);
        worst = worst.max((&production - &oracle).amax() / scale);
    }
    gate.check(
        format!("factor common component vs jacobi oracle, worst rel err {worst:.2e} <= 1e-10"),
        worst <= 1e-10,
    );

    gate.finish();
}

// ---------------------------------------------------------------------
// criterion 8: the CSV pipeline end to end recovers a known truth and
// produces the full report set

#[test]
fn criterion_8_csv_pipeline_recovers_truth() {
    let mut gate = Gate::new("criterion 8 (csv end-to-end)");
    let spec = DgpSpec::panel(200, 50, 0.0, 1, 401).unwrap();
    let sample = generate(&spec, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("panel.csv");
    write_long_csv(&input, &sample.panel, &sample.units).unwrap();

    let out = dir.path().join("results");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_counterfactor"))
        .args([
            "--task",
            "estimate",
            "--input",
            input.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
            "--kernel",
            "hc,qs,parzen",
            "--grid",
            "-1,-0.5,0,0.5,1",
        ])
        .output()
        .expect("binary runs");
    gate.check(
        format!("estimate exits 0 (stderr: {})", String::from_utf8_lossy(&status.stderr).trim()),
        status.status.success(),
    );

    // overall effect with one row per kernel, checked against the
    // generator truth at three standard errors
    let overall = std::fs::read_to_string(out.join("overall.csv")).expect("overall.csv");
    let mut kernels_seen = Vec::new();
    for line in overall.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        kernels_seen.push(fields[0].to_string());
        let estimate: f64 = fields[1].parse().unwrap();
        let std_error: f64 = fields[2].parse().unwrap();
        if fields[0] == "hc" {
            gate.check(
                format!(
                    "overall {estimate:.4} within 3 x {std_error:.4} of the true 0.5"
                ),
                (estimate - 0.5).abs() <= 3.0 * std_error,
            );
        }
    }
    gate.check(
        format!("overall table covers kernels {kernels_seen:?}"),
        kernels_seen == ["hc", "qs", "parzen"],
    );

    // per-date series with filled interval columns
    let dates = std::fs::read_to_string(out.join("dates.csv")).expect("dates.csv");
    let date_rows = dates.lines().count() - 1;
    let intervals_filled =
        dates.lines().skip(1).all(|l| l.split(',').filter(|f| !f.is_empty()).count() == 5);
    gate.check(format!("date series has {date_rows} rows"), date_rows == 200);
    gate.check("date rows carry interval columns".into(), intervals_filled);

    // per-unit table and curve grid
    let units = std::fs::read_to_string(out.join("units.csv")).expect("units.csv");
    gate.check(
        format!("unit table has {} rows", units.lines().count() - 1),
        units.lines().count() - 1 == 50 * 3,
    );
    let curves = std::fs::read_to_string(out.join("curves.csv")).expect("curves.csv");
    gate.check(
        format!("curve table has {} rows", curves.lines().count() - 1),
        curves.lines().count() - 1 == 5 * 51,
    );
    gate.finish();
}
