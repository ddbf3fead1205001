//! Average-marginal-effect estimands and counterfactual curves built on a
//! factor fit and the per-unit second-stage coefficients.
//!
//! Everything here is driven by the derivative vector
//!
//! ```text
//! z_t(d) = ( 0_R', phi_1'(d) f_t', .., phi_J'(d) f_t', 0_k' )
//! ```
//!
//! whose inner product with a unit's coefficients is the marginal effect
//! of the treatment at (d, t). Averaging z over dates gives the per-unit
//! effect, averaging over units at a fixed date gives the per-date effect,
//! and the overall effect is the mean of the per-unit ones.

use nalgebra::{DMatrix, DVector};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::factor::FactorFit;
use crate::panel::UnitData;
use crate::regression::UnitFit;

/// The derivative vector z: zeros over the factor block, the basis
/// derivatives at d times f_t over each interaction block, zeros over the
/// controls.
pub fn z_vector(f_t: &DVector<f64>, d: f64, basis: &dyn Basis, n_controls: usize) -> DVector<f64> {
    let r = f_t.len();
    let j_max = basis.len();
    let mut z = DVector::zeros((j_max + 1) * r + n_controls);
    for j in 1..=j_max {
        let slope = basis.derivative(j, d);
        for k in 0..r {
            z[j * r + k] = slope * f_t[k];
        }
    }
    z
}

/// Time average of z over one unit's treatment path: T^-1 sum_t z_t(d_t).
pub fn z_unit_mean(fit: &FactorFit, unit: &UnitData, basis: &dyn Basis) -> Result<DVector<f64>> {
    let t_len = fit.n_dates();
    if unit.n_dates() != t_len {
        return Err(Error::Input(format!(
            "unit has {} dates but the factor fit has {t_len}",
            unit.n_dates()
        )));
    }
    let r = fit.r_hat;
    let j_max = basis.len();
    let mut z = DVector::zeros((j_max + 1) * r + unit.n_controls());
    for t in 0..t_len {
        let d = unit.treatment[t];
        for j in 1..=j_max {
            let slope = basis.derivative(j, d);
            for k in 0..r {
                z[j * r + k] += slope * fit.f_hat[(t, k)];
            }
        }
    }
    z /= t_len as f64;
    Ok(z)
}

/// Cross-section average of z at date t: N^-1 sum_i z_t(d_it).
pub fn z_date_mean(
    fit: &FactorFit,
    units: &[UnitData],
    basis: &dyn Basis,
    t: usize,
) -> Result<DVector<f64>> {
    if units.is_empty() {
        return Err(Error::Input("no units supplied".into()));
    }
    if t >= fit.n_dates() {
        return Err(Error::Input(format!(
            "date index {t} out of range for {} dates",
            fit.n_dates()
        )));
    }
    let n_controls = units[0].n_controls();
    let r = fit.r_hat;
    let j_max = basis.len();
    let mut z = DVector::zeros((j_max + 1) * r + n_controls);
    for unit in units {
        if unit.n_controls() != n_controls {
            return Err(Error::Input("units disagree on the number of controls".into()));
        }
        let d = unit.treatment[t];
        for j in 1..=j_max {
            let slope = basis.derivative(j, d);
            for k in 0..r {
                z[j * r + k] += slope * fit.f_hat[(t, k)];
            }
        }
    }
    z /= units.len() as f64;
    Ok(z)
}

/// Per-unit average marginal effect: the unit's coefficients against its
/// time-averaged derivative vector.
pub fn ame_unit(fit: &UnitFit, z_mean: &DVector<f64>) -> Result<f64> {
    if fit.gamma.len() != z_mean.len() {
        return Err(Error::Input(format!(
            "coefficient length {} does not match derivative vector length {}",
            fit.gamma.len(),
            z_mean.len()
        )));
    }
    Ok(fit.gamma.dot(z_mean))
}

/// Per-date average marginal effect: the averaged coefficients against the
/// cross-section averaged derivative vector at that date.
pub fn ame_time(gamma_bar: &DVector<f64>, z_mean: &DVector<f64>) -> Result<f64> {
    if gamma_bar.len() != z_mean.len() {
        return Err(Error::Input(format!(
            "coefficient length {} does not match derivative vector length {}",
            gamma_bar.len(),
            z_mean.len()
        )));
    }
    Ok(gamma_bar.dot(z_mean))
}

/// Overall average marginal effect: the mean of the per-unit effects.
pub fn ame_overall(unit_effects: &[f64]) -> Result<f64> {
    if unit_effects.is_empty() {
        return Err(Error::Input("no per-unit effects supplied".into()));
    }
    Ok(unit_effects.iter().sum::<f64>() / unit_effects.len() as f64)
}

/// Average the per-unit coefficient vectors.
pub fn gamma_bar(fits: &[UnitFit]) -> Result<DVector<f64>> {
    let first = fits.first().ok_or_else(|| Error::Input("no unit fits supplied".into()))?;
    let p = first.gamma.len();
    let mut acc = DVector::zeros(p);
    for fit in fits {
        if fit.gamma.len() != p {
            return Err(Error::Input("unit fits disagree on design width".into()));
        }
        acc += &fit.gamma;
    }
    Ok(acc / fits.len() as f64)
}

/// Where the estimands came from: panel and design dimensions recorded at
/// computation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub n_factors: usize,
    pub n_units: usize,
    pub n_dates: usize,
    pub n_basis: usize,
    pub n_controls: usize,
}

/// The three families of average marginal effects for one estimation run.
#[derive(Debug, Clone)]
pub struct EstimandSet {
    /// Per-unit effects, one per unit in input order.
    pub unit_effects: Vec<f64>,
    /// Per-date effects, one per date.
    pub date_effects: Vec<f64>,
    /// Overall effect: the mean of `unit_effects`.
    pub overall: f64,
    /// Averaged second-stage coefficients.
    pub gamma_bar: DVector<f64>,
    /// Per-unit time-averaged derivative vectors, reused by the variance
    /// estimators.
    pub unit_z_means: Vec<DVector<f64>>,
    pub provenance: Provenance,
}

/// Compute every estimand for a fitted model.
pub fn estimand_set(
    fit: &FactorFit,
    unit_fits: &[UnitFit],
    units: &[UnitData],
    basis: &dyn Basis,
) -> Result<EstimandSet> {
    if unit_fits.len() != units.len() {
        return Err(Error::Input(format!(
            "{} unit fits but {} units",
            unit_fits.len(),
            units.len()
        )));
    }
    if units.is_empty() {
        return Err(Error::Input("no units supplied".into()));
    }
    let mut unit_effects = Vec::with_capacity(units.len());
    let mut unit_z_means = Vec::with_capacity(units.len());
    for (unit_fit, unit) in unit_fits.iter().zip(units) {
        let z_mean = z_unit_mean(fit, unit, basis)?;
        unit_effects.push(ame_unit(unit_fit, &z_mean)?);
        unit_z_means.push(z_mean);
    }
    let gamma_bar = gamma_bar(unit_fits)?;
    let mut date_effects = Vec::with_capacity(fit.n_dates());
    for t in 0..fit.n_dates() {
        let z_mean = z_date_mean(fit, units, basis, t)?;
        date_effects.push(ame_time(&gamma_bar, &z_mean)?);
    }
    let overall = ame_overall(&unit_effects)?;
    Ok(EstimandSet {
        unit_effects,
        date_effects,
        overall,
        gamma_bar,
        unit_z_means,
        provenance: Provenance {
            n_factors: fit.r_hat,
            n_units: units.len(),
            n_dates: fit.n_dates(),
            n_basis: basis.len(),
            n_controls: units[0].n_controls(),
        },
    })
}

/// Which counterfactual curve to trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveScope {
    /// One unit's curve, averaging the factor paths over dates.
    Unit(usize),
    /// One date's curve across units, using that date's factors.
    Date(usize),
    /// The mean of the unit curves.
    Overall,
}

/// How the control term enters a counterfactual curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveControls {
    /// Controls contribute nothing; the curve isolates the treatment and
    /// factor channel.
    #[default]
    Zeroed,
    /// Each unit's curve is shifted by its coefficient on the controls
    /// times its time-averaged controls.
    AtUnitMeans,
}

fn curve_design_row(
    f: &DVector<f64>,
    d: f64,
    basis: &dyn Basis,
    n_controls: usize,
) -> DVector<f64> {
    let r = f.len();
    let j_max = basis.len();
    let mut w = DVector::zeros((j_max + 1) * r + n_controls);
    for k in 0..r {
        w[k] = f[k];
    }
    for j in 1..=j_max {
        let phi = basis.value(j, d);
        for k in 0..r {
            w[j * r + k] = phi * f[k];
        }
    }
    w
}

fn control_shift(unit_fit: &UnitFit, unit: &UnitData) -> f64 {
    let block = unit_fit.layout().control_block();
    let t_len = unit.n_dates() as f64;
    let mut shift = 0.0;
    for (offset, col) in block.enumerate() {
        let mean = unit.controls.column(offset).sum() / t_len;
        shift += unit_fit.gamma[col] * mean;
    }
    shift
}

/// Trace a counterfactual outcome curve over a grid of treatment values.
///
/// The grid must be non-empty and finite. Unit and date indices are
/// bounds-checked. The overall curve is the pointwise mean of the unit
/// curves by construction.
pub fn counterfactual_curve(
    scope: CurveScope,
    grid: &[f64],
    fit: &FactorFit,
    unit_fits: &[UnitFit],
    units: &[UnitData],
    basis: &dyn Basis,
    controls: CurveControls,
) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(Error::Input("curve grid is empty".into()));
    }
    if grid.iter().any(|d| !d.is_finite()) {
        return Err(Error::Input("curve grid contains a non-finite value".into()));
    }
    if unit_fits.is_empty() || unit_fits.len() != units.len() {
        return Err(Error::Input(format!(
            "{} unit fits but {} units",
            unit_fits.len(),
            units.len()
        )));
    }
    let n_controls = unit_fits[0].layout().n_controls;
    let f_mean = DVector::from_fn(fit.r_hat, |k, _| fit.f_hat.column(k).mean());

    let unit_curve = |i: usize, d: f64| -> Result<f64> {
        let w = curve_design_row(&f_mean, d, basis, n_controls);
        let mut value = ame_unit(&unit_fits[i], &w)?;
        if controls == CurveControls::AtUnitMeans {
            value += control_shift(&unit_fits[i], &units[i]);
        }
        Ok(value)
    };

    let mut out = Vec::with_capacity(grid.len());
    match scope {
        CurveScope::Unit(i) => {
            if i >= unit_fits.len() {
                return Err(Error::Input(format!(
                    "unit index {i} out of range for {} units",
                    unit_fits.len()
                )));
            }
            for &d in grid {
                out.push((d, unit_curve(i, d)?));
            }
        }
        CurveScope::Date(t) => {
            if t >= fit.n_dates() {
                return Err(Error::Input(format!(
                    "date index {t} out of range for {} dates",
                    fit.n_dates()
                )));
            }
            let gbar = gamma_bar(unit_fits)?;
            let f_t = fit.f_hat.row(t).transpose();
            for &d in grid {
                let w = curve_design_row(&f_t, d, basis, n_controls);
                let mut value = ame_time(&gbar, &w)?;
                if controls == CurveControls::AtUnitMeans {
                    let mean_shift = unit_fits
                        .iter()
                        .zip(units)
                        .map(|(uf, u)| control_shift(uf, u))
                        .sum::<f64>()
                        / units.len() as f64;
                    value += mean_shift;
                }
                out.push((d, value));
            }
        }
        CurveScope::Overall => {
            for &d in grid {
                let mut acc = 0.0;
                for i in 0..unit_fits.len() {
                    acc += unit_curve(i, d)?;
                }
                out.push((d, acc / unit_fits.len() as f64));
            }
        }
    }
    Ok(out)
}

/// Matrix of derivative vectors for one unit, one row per date. Row t is
/// z_t(d_it)'. Used by the variance estimators.
pub fn z_rows(fit: &FactorFit, unit: &UnitData, basis: &dyn Basis) -> Result<DMatrix<f64>> {
    let t_len = fit.n_dates();
    if unit.n_dates() != t_len {
        return Err(Error::Input(format!(
            "unit has {} dates but the factor fit has {t_len}",
            unit.n_dates()
        )));
    }
    let r = fit.r_hat;
    let j_max = basis.len();
    let p = (j_max + 1) * r + unit.n_controls();
    let mut z = DMatrix::zeros(t_len, p);
    for t in 0..t_len {
        let d = unit.treatment[t];
        for j in 1..=j_max {
            let slope = basis.derivative(j, d);
            for k in 0..r {
                z[(t, j * r + k)] = slope * fit.f_hat[(t, k)];
            }
        }
    }
    Ok(z)
}
