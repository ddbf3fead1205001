//! Synthetic panels with known average marginal effects, plus a Monte
//! Carlo driver that runs the full estimation pipeline over many
//! replications and scores bias, variance, and interval coverage.
//!
//! Both generators share a two-factor backbone. Factor r (r = 1, 2)
//! follows the stationary recursion
//!
//! ```text
//! f_tr = 0.5 + rho^r (f_{t-1,r} - 0.5) + n_tr      n_tr ~ N(0, 1 - rho^2r)
//! ```
//!
//! started from its stationary law N(0.5, 1), so every factor has mean
//! 0.5 and unit variance at any autocorrelation. Series ell of the panel
//! is lambda_ell' f_t + e_ell,t with loadings uniform on [-1, 1] and
//! standard normal noise.
//!
//! The single-unit generator ties one treated unit to the first two
//! series: its treatment is f_t1 plus half of each series' noise plus a
//! standard normal shock, its controls are those two series, and its
//! outcome responds to the treatment through the coefficient curve
//! 0.5 + 0.5 d + .. + 0.5 d^J applied to both factors, minus half of each
//! control, plus standard normal noise. The panel generator repeats that
//! construction per unit i on series 2i-1 and 2i, with the outcome curve
//! coefficients drawn uniformly on [0, 1] per unit and basis function.
//!
//! Randomness is a counter-based generator seeded once per experiment;
//! replication k draws from stream k, so any replication can be
//! regenerated in isolation and results do not depend on thread count.
//! The draw order within a replication is fixed: loadings, factor path,
//! panel noise, then per unit its curve coefficients (panel only), its
//! treatment shocks, and its outcome noise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use rayon::prelude::*;

use crate::basis::Monomials;
use crate::error::{Error, Result};
use crate::estimands::{ame_overall, ame_unit, gamma_bar, z_date_mean, z_rows, z_unit_mean};
use crate::factor::{default_r_max, estimate_num_factors, extract_factors};
use crate::inference::{
    variance_overall, variance_time, variance_unit, EstimateWithCi, GramNormalization,
    KernelSpec, Scaling,
};
use crate::panel::{PanelMatrix, UnitData};
use crate::regression::{build_design, fit_ols};

/// Number of factors in every generated panel.
const N_FACTORS: usize = 2;

/// How the rng is wired; recorded in reports so a cell can be reproduced.
const GENERATOR_TAG: &str = "chacha8, one stream per replication";

/// Which data-generating process to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpMode {
    /// One treated unit alongside an observed panel.
    SingleUnit,
    /// N treated units, each tied to its own pair of panel series.
    Panel,
}

impl DgpMode {
    fn label(self) -> &'static str {
        match self {
            DgpMode::SingleUnit => "single-unit",
            DgpMode::Panel => "panel",
        }
    }
}

/// A fully specified data-generating process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub mode: DgpMode,
    /// Dates per replication.
    pub t: usize,
    /// Treated units: 1 in single-unit mode, N in panel mode.
    pub n: usize,
    /// Panel series: free in single-unit mode, 2N in panel mode.
    pub l: usize,
    /// Autocorrelation of the first factor; the second gets its square.
    pub rho_f: f64,
    /// Polynomial degree J of the outcome's coefficient curves, 1 or 2.
    pub degree: usize,
    /// Experiment seed; replication k draws from stream k of this seed.
    pub seed: u64,
}

impl DgpSpec {
    pub fn single_unit(t: usize, l: usize, rho_f: f64, degree: usize, seed: u64) -> Result<Self> {
        let spec = Self { mode: DgpMode::SingleUnit, t, n: 1, l, rho_f, degree, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn panel(t: usize, n: usize, rho_f: f64, degree: usize, seed: u64) -> Result<Self> {
        let spec = Self { mode: DgpMode::Panel, t, n, l: 2 * n, rho_f, degree, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::Config(format!("need at least 2 dates, got {}", self.t)));
        }
        if self.l < 2 {
            return Err(Error::Config(format!("need at least 2 series, got {}", self.l)));
        }
        if !(self.rho_f >= 0.0 && self.rho_f < 1.0) {
            return Err(Error::Config(format!(
                "factor autocorrelation must be in [0, 1), got {}",
                self.rho_f
            )));
        }
        if !(1..=2).contains(&self.degree) {
            return Err(Error::Config(format!(
                "generator degree must be 1 or 2, got {}",
                self.degree
            )));
        }
        match self.mode {
            DgpMode::SingleUnit => {
                if self.n != 1 {
                    return Err(Error::Config(format!(
                        "single-unit mode has exactly 1 unit, got {}",
                        self.n
                    )));
                }
            }
            DgpMode::Panel => {
                if self.n < 2 {
                    return Err(Error::Config(format!(
                        "panel mode needs at least 2 units, got {}",
                        self.n
                    )));
                }
                if self.l != 2 * self.n {
                    return Err(Error::Config(format!(
                        "panel mode ties each unit to two series, so l = 2n; got l = {}, n = {}",
                        self.l, self.n
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Population effects implied by one drawn sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Truths {
    /// Per-unit average effect. Fixed by the generator in single-unit
    /// mode, a function of the unit's drawn curve coefficients in panel
    /// mode.
    pub delta_units: Vec<f64>,
    /// Per-date average effect given the drawn factor path (and, in
    /// single-unit mode, the drawn treatment).
    pub delta_dates: Vec<f64>,
    /// Overall average effect; a population constant in both modes.
    pub delta_overall: f64,
}

/// One replication's data with its implied truths.
#[derive(Debug, Clone)]
pub struct DgpSample {
    pub panel: PanelMatrix,
    pub units: Vec<UnitData>,
    pub truths: Truths,
    /// The true factor path, for diagnostics and tests.
    pub factors: DMatrix<f64>,
}

fn draw_factors(rng: &mut ChaCha8Rng, t: usize, rho_f: f64) -> DMatrix<f64> {
    let mut f = DMatrix::<f64>::zeros(t, N_FACTORS);
    let mut prev = [0.0f64; N_FACTORS];
    for slot in prev.iter_mut() {
        *slot = 0.5 + rng.sample::<f64, _>(StandardNormal);
    }
    let rho: Vec<f64> = (1..=N_FACTORS).map(|r| rho_f.powi(r as i32)).collect();
    let sd: Vec<f64> = rho.iter().map(|r| (1.0 - r * r).sqrt()).collect();
    for row in 0..t {
        for r in 0..N_FACTORS {
            let shock: f64 = rng.sample(StandardNormal);
            let value = 0.5 + rho[r] * (prev[r] - 0.5) + sd[r] * shock;
            f[(row, r)] = value;
            prev[r] = value;
        }
    }
    f
}

/// Draw replication `replication` of the process. The same arguments
/// always produce the same sample.
pub fn generate(spec: &DgpSpec, replication: u64) -> Result<DgpSample> {
    spec.validate()?;
    let (t, n, l) = (spec.t, spec.n, spec.l);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(replication);
    let unit_interval = Uniform::new_inclusive(0.0f64, 1.0);
    let symmetric = Uniform::new_inclusive(-1.0f64, 1.0);

    let lambda = DMatrix::from_fn(l, N_FACTORS, |_, _| rng.sample(symmetric));
    let f = draw_factors(&mut rng, t, spec.rho_f);
    let e = DMatrix::from_fn(t, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = &f * lambda.transpose() + &e;

    let f_sum: DVector<f64> = f.column(0) + f.column(1);
    let mut units = Vec::with_capacity(n);
    let mut delta_units = Vec::with_capacity(n);
    let mut single_treatment: Option<DVector<f64>> = None;

    for i in 0..n {
        // curve coefficients beta_0 .. beta_J: fixed at 0.5 for the single
        // unit, uniform on [0, 1] per panel unit
        let beta: Vec<f64> = match spec.mode {
            DgpMode::SingleUnit => vec![0.5; spec.degree + 1],
            DgpMode::Panel => (0..=spec.degree).map(|_| rng.sample(unit_interval)).collect(),
        };
        let (s1, s2) = (2 * i, 2 * i + 1);
        let mut treatment = DVector::<f64>::zeros(t);
        for row in 0..t {
            let shock: f64 = rng.sample(StandardNormal);
            treatment[row] = f[(row, 0)] + 0.5 * e[(row, s1)] + 0.5 * e[(row, s2)] + shock;
        }
        let mut outcome = DVector::<f64>::zeros(t);
        let mut controls = DMatrix::<f64>::zeros(t, 2);
        for row in 0..t {
            let d = treatment[row];
            let curve: f64 =
                beta[0] + (1..=spec.degree).map(|j| beta[j] * d.powi(j as i32)).sum::<f64>();
            let noise: f64 = rng.sample(StandardNormal);
            controls[(row, 0)] = x[(row, s1)];
            controls[(row, 1)] = x[(row, s2)];
            outcome[row] = curve * f_sum[row] - 0.5 * x[(row, s1)] - 0.5 * x[(row, s2)] + noise;
        }

        // population per-unit effect: E[slope(d) (f_1 + f_2)] under the
        // stationary law, where d = f_1 + noise with E f_r = 0.5,
        // Var f_r = 1, so E[d (f_1 + f_2)] = 1.5
        let truth = match spec.degree {
            1 => beta[1],
            _ => beta[1] + 3.0 * beta[2],
        };
        delta_units.push(truth);
        if spec.mode == DgpMode::SingleUnit {
            single_treatment = Some(treatment.clone());
        }
        units.push(UnitData::new(outcome, treatment, controls)?);
    }

    // per-date truths: the cross-section population slope at date t times
    // the factor sum. In panel mode the slope averages over units, giving
    // 0.5 at degree 1 and 0.5 + f_t1 at degree 2; in single-unit mode it
    // is the unit's own slope at its drawn treatment.
    let mut delta_dates = Vec::with_capacity(t);
    for row in 0..t {
        let slope = match spec.mode {
            DgpMode::Panel => match spec.degree {
                1 => 0.5,
                _ => 0.5 + f[(row, 0)],
            },
            DgpMode::SingleUnit => {
                let d = single_treatment.as_ref().expect("single unit drawn")[row];
                match spec.degree {
                    1 => 0.5,
                    _ => 0.5 + d,
                }
            }
        };
        delta_dates.push(slope * f_sum[row]);
    }

    let delta_overall = match spec.degree {
        1 => 0.5,
        _ => 2.0,
    };

    Ok(DgpSample {
        panel: PanelMatrix::new(x)?,
        units,
        truths: Truths { delta_units, delta_dates, delta_overall },
        factors: f,
    })
}

/// Settings for a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct McOptions {
    pub replications: usize,
    /// Kernels for the effects that take one; each gets its own interval
    /// metrics.
    pub kernels: Vec<KernelSpec>,
    pub level: f64,
    /// Date whose per-date effect is scored in panel mode.
    pub eval_date: usize,
    /// Cap for rank selection; defaults to the panel-size rule.
    pub r_max: Option<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            replications: 1000,
            kernels: vec![KernelSpec::hc()],
            level: 0.95,
            eval_date: 0,
            r_max: None,
        }
    }
}

/// Interval quality for one estimand under one kernel (or none).
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMetrics {
    /// Kernel label, or "plain" for intervals that take no kernel.
    pub kernel: String,
    pub avg_radius: f64,
    pub coverage: f64,
}

/// Point-estimate quality for one estimand across replications. All three
/// moments are of the error estimate minus truth, so they are comparable
/// whether the truth is fixed or drawn per replication; mse equals
/// bias^2 + variance by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct McMetrics {
    pub estimand: String,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub intervals: Vec<IntervalMetrics>,
}

/// The outcome of a Monte Carlo cell.
#[derive(Debug, Clone)]
pub struct McReport {
    pub spec: DgpSpec,
    pub replications: usize,
    /// Replications that errored anywhere in the pipeline; excluded from
    /// every metric.
    pub failures: usize,
    /// More than one percent of replications failed, so the metrics
    /// should not be trusted without a closer look.
    pub excessive_failures: bool,
    pub level: f64,
    pub metrics: Vec<McMetrics>,
    pub generator: &'static str,
}

struct EstimandDraw {
    error: f64,
    intervals: Vec<(String, f64, bool)>,
}

fn interval_for(
    est: f64,
    sigma2: f64,
    scaling: Scaling,
    level: f64,
    kernel: &KernelSpec,
    truth: f64,
) -> Result<(String, f64, bool)> {
    let ci = EstimateWithCi::new(est, sigma2, scaling, level, Some(*kernel))?;
    Ok((kernel.label().to_string(), ci.radius(), ci.contains(truth)))
}

fn run_replication(
    spec: &DgpSpec,
    opts: &McOptions,
    replication: u64,
) -> Result<Vec<(&'static str, EstimandDraw)>> {
    let sample = generate(spec, replication)?;
    let x = &sample.panel;
    let r_max = opts.r_max.unwrap_or_else(|| default_r_max(x.n_dates(), x.n_series()));
    let r_hat = estimate_num_factors(x, r_max)?;
    let fit = extract_factors(x, r_hat)?;
    let basis = Monomials::new(spec.degree)?;

    let mut unit_fits = Vec::with_capacity(sample.units.len());
    for unit in &sample.units {
        let design = build_design(&fit, unit, &basis)?;
        unit_fits.push(fit_ols(&design, &unit.outcome)?);
    }

    let mut out = Vec::new();
    match spec.mode {
        DgpMode::SingleUnit => {
            let unit = &sample.units[0];
            let z_mean = z_unit_mean(&fit, unit, &basis)?;
            let est = ame_unit(&unit_fits[0], &z_mean)?;
            let truth = sample.truths.delta_units[0];
            let z = z_rows(&fit, unit, &basis)?;
            let mut intervals = Vec::with_capacity(opts.kernels.len());
            for kernel in &opts.kernels {
                let sigma2 = variance_unit(&unit_fits[0], &z, kernel)?;
                intervals.push(interval_for(
                    est,
                    sigma2,
                    Scaling::SqrtDates(spec.t),
                    opts.level,
                    kernel,
                    truth,
                )?);
            }
            out.push(("unit", EstimandDraw { error: est - truth, intervals }));
        }
        DgpMode::Panel => {
            let mut effects = Vec::with_capacity(sample.units.len());
            for (unit_fit, unit) in unit_fits.iter().zip(&sample.units) {
                let z_mean = z_unit_mean(&fit, unit, &basis)?;
                effects.push(ame_unit(unit_fit, &z_mean)?);
            }
            let est = ame_overall(&effects)?;
            let truth = sample.truths.delta_overall;
            let mut intervals = Vec::with_capacity(opts.kernels.len());
            for kernel in &opts.kernels {
                let sigma2 = variance_overall(&fit, &unit_fits, &sample.units, &basis, kernel)?;
                intervals.push(interval_for(
                    est,
                    sigma2,
                    Scaling::SqrtUnits(spec.n),
                    opts.level,
                    kernel,
                    truth,
                )?);
            }
            out.push(("overall", EstimandDraw { error: est - truth, intervals }));

            let gbar = gamma_bar(&unit_fits)?;
            let z_t = z_date_mean(&fit, &sample.units, &basis, opts.eval_date)?;
            let date_est = gbar.dot(&z_t);
            let date_truth = sample.truths.delta_dates[opts.eval_date];
            let sigma2 = variance_time(
                &fit,
                &unit_fits,
                &sample.units,
                &basis,
                opts.eval_date,
                GramNormalization::default(),
            )?;
            let ci = EstimateWithCi::new(
                date_est,
                sigma2,
                Scaling::SqrtUnits(spec.n),
                opts.level,
                None,
            )?;
            out.push((
                "date",
                EstimandDraw {
                    error: date_est - date_truth,
                    intervals: vec![("plain".to_string(), ci.radius(), ci.contains(date_truth))],
                },
            ));
        }
    }
    Ok(out)
}

/// Run a Monte Carlo cell: `opts.replications` independent draws of the
/// process, the full pipeline on each, and error plus interval metrics
/// aggregated over the replications that succeed.
///
/// Replications run in parallel but are collected in index order and
/// aggregated sequentially, so the report does not depend on the number
/// of threads.
pub fn run_experiment(spec: &DgpSpec, opts: &McOptions) -> Result<McReport> {
    spec.validate()?;
    if opts.replications == 0 {
        return Err(Error::Config("need at least one replication".into()));
    }
    if opts.kernels.is_empty() {
        return Err(Error::Config("need at least one kernel".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Config(format!("level must be in (0, 1), got {}", opts.level)));
    }
    if opts.eval_date >= spec.t {
        return Err(Error::Config(format!(
            "evaluation date {} out of range for {} dates",
            opts.eval_date, spec.t
        )));
    }

    let outcomes: Vec<Result<Vec<(&'static str, EstimandDraw)>>> = (0..opts.replications)
        .into_par_iter()
        .map(|rep| run_replication(spec, opts, rep as u64))
        .collect();

    let mut failures = 0usize;
    let mut by_estimand: Vec<(&'static str, Vec<EstimandDraw>)> = Vec::new();
    for outcome in outcomes {
        match outcome {
            Err(_) => failures += 1,
            Ok(draws) => {
                for (label, draw) in draws {
                    match by_estimand.iter_mut().find(|(l, _)| *l == label) {
                        Some((_, acc)) => acc.push(draw),
                        None => by_estimand.push((label, vec![draw])),
                    }
                }
            }
        }
    }

    let mut metrics = Vec::new();
    for (label, draws) in &by_estimand {
        let s = draws.len() as f64;
        let bias = draws.iter().map(|d| d.error).sum::<f64>() / s;
        let variance =
            draws.iter().map(|d| (d.error - bias) * (d.error - bias)).sum::<f64>() / s;
        let mse = bias * bias + variance;
        let n_intervals = draws[0].intervals.len();
        let mut intervals = Vec::with_capacity(n_intervals);
        for slot in 0..n_intervals {
            let kernel = draws[0].intervals[slot].0.clone();
            let avg_radius = draws.iter().map(|d| d.intervals[slot].1).sum::<f64>() / s;
            let coverage =
                draws.iter().filter(|d| d.intervals[slot].2).count() as f64 / s;
            intervals.push(IntervalMetrics { kernel, avg_radius, coverage });
        }
        metrics.push(McMetrics {
            estimand: label.to_string(),
            bias,
            variance,
            mse,
            intervals,
        });
    }

    Ok(McReport {
        spec: *spec,
        replications: opts.replications,
        failures,
        excessive_failures: failures * 100 > opts.replications,
        level: opts.level,
        metrics,
        generator: GENERATOR_TAG,
    })
}

impl McReport {
    /// Long-format CSV: one row per estimand and kernel, with the cell
    /// recorded in a leading comment line. Floats use shortest
    /// round-trip formatting.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# mode={}; t={}; n={}; l={}; rho_f={}; degree={}; level={}; seed={}; replications={}; failures={}; generator={}\n",
            self.spec.mode.label(),
            self.spec.t,
            self.spec.n,
            self.spec.l,
            self.spec.rho_f,
            self.spec.degree,
            self.level,
            self.spec.seed,
            self.replications,
            self.failures,
            self.generator,
        ));
        out.push_str("estimand,kernel,bias,variance,mse,avg_radius,coverage\n");
        for m in &self.metrics {
            for ci in &m.intervals {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    m.estimand, ci.kernel, m.bias, m.variance, m.mse, ci.avg_radius, ci.coverage
                ));
            }
        }
        out
    }

    /// Fixed-width table for terminals and logs.
    pub fn to_text_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} generator, T={}, L={}, N={}, rho_f={:.2}, degree={}\n",
            self.spec.mode.label(),
            self.spec.t,
            self.spec.l,
            self.spec.n,
            self.spec.rho_f,
            self.spec.degree,
        ));
        out.push_str(&format!(
            "level {:.2}, {} replications, {} failures{}\n",
            self.level,
            self.replications,
            self.failures,
            if self.excessive_failures { " (over 1%: treat with caution)" } else { "" },
        ));
        out.push_str(&format!("rng: {}, seed {}\n\n", self.generator, self.spec.seed));
        out.push_str(&format!(
            "{:<10} {:<8} {:>9} {:>9} {:>9} {:>11} {:>9}\n",
            "estimand", "kernel", "bias", "var", "mse", "avg radius", "coverage"
        ));
        for m in &self.metrics {
            for ci in &m.intervals {
                out.push_str(&format!(
                    "{:<10} {:<8} {:>9.4} {:>9.4} {:>9.4} {:>11.4} {:>9.2}\n",
                    m.estimand, ci.kernel, m.bias, m.variance, m.mse, ci.avg_radius, ci.coverage
                ));
            }
        }
        out
    }
}
