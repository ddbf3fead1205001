//! One-call estimation pipeline: rank selection, factor extraction,
//! per-unit second stages, every estimand, and confidence intervals.
//!
//! The pipeline estimates at three scales. Per-unit effects get intervals
//! on the sqrt(T) scale under each requested kernel. Per-date and overall
//! effects get intervals on the sqrt(N) scale and need at least two
//! units; with a single unit the per-date intervals are omitted and the
//! overall interval falls back to that unit's own time-series interval,
//! since the cross-section carries no information of its own.

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::estimands::{estimand_set, z_rows, EstimandSet};
use crate::factor::{
    default_r_max, extract_factors, growth_ratio, FactorFit, GrowthRatio,
};
use crate::inference::{
    variance_overall, variance_time, variance_unit, EstimateWithCi, GramNormalization,
    KernelSpec, Scaling,
};
use crate::panel::{PanelMatrix, UnitData};
use crate::regression::{build_design, fit_ols, UnitFit};

/// Settings for [`analyze`].
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    /// Pin the number of factors instead of selecting it.
    pub fixed_r: Option<usize>,
    /// Cap for rank selection; None uses the panel-size rule.
    pub r_max: Option<usize>,
    /// Column-center the panel before extraction.
    pub center: bool,
    /// Confidence level for every interval.
    pub level: f64,
    /// Kernels for the intervals that take one.
    pub kernels: Vec<KernelSpec>,
    /// Loading-gram normalization inside the per-date variance.
    pub gram_norm: GramNormalization,
    /// Compute per-unit intervals. The per-unit long-run covariances are
    /// the most expensive part of inference on wide panels, so batch
    /// callers that only need the aggregate effects can turn them off.
    pub unit_cis: bool,
    /// Names used in error messages, by unit position; indices otherwise.
    pub unit_labels: Option<Vec<String>>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            fixed_r: None,
            r_max: None,
            center: false,
            level: 0.95,
            kernels: vec![KernelSpec::hc()],
            gram_norm: GramNormalization::default(),
            unit_cis: true,
            unit_labels: None,
        }
    }
}

/// Everything one estimation run produces.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub factor: FactorFit,
    /// The rank-selection profile; None when the rank was pinned.
    pub growth_ratios: Option<GrowthRatio>,
    /// True when rank selection had no clear winner.
    pub rank_ambiguous: bool,
    pub unit_fits: Vec<UnitFit>,
    pub estimands: EstimandSet,
    /// Per-unit intervals, one inner vector per unit in input order with
    /// one entry per kernel; empty when `unit_cis` was off.
    pub unit_cis: Vec<Vec<EstimateWithCi>>,
    /// Per-date intervals; empty with a single unit.
    pub date_cis: Vec<EstimateWithCi>,
    /// Overall intervals, one per kernel.
    pub overall_cis: Vec<EstimateWithCi>,
}

fn unit_label(opts: &AnalysisOptions, i: usize) -> String {
    match &opts.unit_labels {
        Some(labels) if i < labels.len() => labels[i].clone(),
        _ => i.to_string(),
    }
}

/// Run the full pipeline on a panel and its treated units.
pub fn analyze(
    x: &PanelMatrix,
    units: &[UnitData],
    basis: &dyn Basis,
    opts: &AnalysisOptions,
) -> Result<Analysis> {
    if units.is_empty() {
        return Err(Error::Input("no units supplied".into()));
    }
    let t = x.n_dates();
    for (i, unit) in units.iter().enumerate() {
        if unit.n_dates() != t {
            return Err(Error::Input(format!(
                "unit {} has {} dates but the panel has {t}",
                unit_label(opts, i),
                unit.n_dates()
            )));
        }
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Config(format!("level must be in (0, 1), got {}", opts.level)));
    }
    if opts.kernels.is_empty() {
        return Err(Error::Config("need at least one kernel".into()));
    }
    let n = units.len();

    let centered;
    let x = if opts.center {
        centered = x.center_columns();
        &centered
    } else {
        x
    };

    let (r_hat, growth_ratios, rank_ambiguous) = match opts.fixed_r {
        Some(r) => (r, None, false),
        None => {
            let cap = opts.r_max.unwrap_or_else(|| default_r_max(t, x.n_series()));
            let profile = growth_ratio(x, cap)?;
            let (r, ambiguous) = (profile.r_hat, profile.ambiguous);
            (r, Some(profile), ambiguous)
        }
    };
    let factor = extract_factors(x, r_hat)?;

    let mut unit_fits = Vec::with_capacity(n);
    for (i, unit) in units.iter().enumerate() {
        let fitted = build_design(&factor, unit, basis)
            .and_then(|design| fit_ols(&design, &unit.outcome))
            .map_err(|e| Error::for_unit(unit_label(opts, i), e))?;
        unit_fits.push(fitted);
    }

    let estimands = estimand_set(&factor, &unit_fits, units, basis)?;

    let mut unit_cis = Vec::new();
    if opts.unit_cis {
        for (i, (unit_fit, unit)) in unit_fits.iter().zip(units).enumerate() {
            let z = z_rows(&factor, unit, basis)?;
            let mut row = Vec::with_capacity(opts.kernels.len());
            for kernel in &opts.kernels {
                let sigma2 = variance_unit(unit_fit, &z, kernel)
                    .map_err(|e| Error::for_unit(unit_label(opts, i), e))?;
                row.push(EstimateWithCi::new(
                    estimands.unit_effects[i],
                    sigma2,
                    Scaling::SqrtDates(t),
                    opts.level,
                    Some(*kernel),
                )?);
            }
            unit_cis.push(row);
        }
    }

    let mut date_cis = Vec::new();
    if n >= 2 {
        for date in 0..t {
            let sigma2 =
                variance_time(&factor, &unit_fits, units, basis, date, opts.gram_norm)?;
            date_cis.push(EstimateWithCi::new(
                estimands.date_effects[date],
                sigma2,
                Scaling::SqrtUnits(n),
                opts.level,
                None,
            )?);
        }
    }

    let mut overall_cis = Vec::with_capacity(opts.kernels.len());
    for kernel in &opts.kernels {
        let ci = if n >= 2 {
            let sigma2 = variance_overall(&factor, &unit_fits, units, basis, kernel)?;
            EstimateWithCi::new(
                estimands.overall,
                sigma2,
                Scaling::SqrtUnits(n),
                opts.level,
                Some(*kernel),
            )?
        } else {
            let z = z_rows(&factor, &units[0], basis)?;
            let sigma2 = variance_unit(&unit_fits[0], &z, kernel)
                .map_err(|e| Error::for_unit(unit_label(opts, 0), e))?;
            EstimateWithCi::new(
                estimands.overall,
                sigma2,
                Scaling::SqrtDates(t),
                opts.level,
                Some(*kernel),
            )?
        };
        overall_cis.push(ci);
    }

    Ok(Analysis {
        factor,
        growth_ratios,
        rank_ambiguous,
        unit_fits,
        estimands,
        unit_cis,
        date_cis,
        overall_cis,
    })
}
