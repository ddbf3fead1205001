//! Second-stage regressions: one least-squares fit per unit on a design
//! that interacts the estimated factors with known functions of the
//! unit's treatment.
//!
//! The design row at date t is
//!
//! ```text
//! w_t = ( f_t', phi_1(d_t) f_t', .., phi_J(d_t) f_t', c_t' )
//! ```
//!
//! so its width is (J + 1) R + k for R estimated factors and k controls.
//! Solvers go through the SVD of the design (never the normal equations)
//! and reject designs whose smallest singular value falls below 1e-10 of
//! the largest, naming the block of columns involved in the dependency.

use nalgebra::{DMatrix, DVector};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::factor::FactorFit;
use crate::panel::UnitData;

/// Relative singular-value threshold for declaring a design singular.
const DESIGN_TOL: f64 = 1e-10;

/// Column layout of a second-stage design: the factor block, one
/// interaction block per basis function, then the controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignLayout {
    pub n_factors: usize,
    pub n_basis: usize,
    pub n_controls: usize,
}

impl DesignLayout {
    pub fn width(&self) -> usize {
        (self.n_basis + 1) * self.n_factors + self.n_controls
    }

    /// Columns holding the uninteracted factors.
    pub fn factor_block(&self) -> std::ops::Range<usize> {
        0..self.n_factors
    }

    /// Columns holding the interaction with basis function j (one-based).
    pub fn basis_block(&self, j: usize) -> std::ops::Range<usize> {
        debug_assert!(j >= 1 && j <= self.n_basis);
        j * self.n_factors..(j + 1) * self.n_factors
    }

    /// Columns holding the controls.
    pub fn control_block(&self) -> std::ops::Range<usize> {
        (self.n_basis + 1) * self.n_factors..self.width()
    }

    /// Human-readable name of the block a column belongs to.
    pub fn block_name(&self, col: usize) -> String {
        if col < self.n_factors {
            "factor block".to_string()
        } else if col < (self.n_basis + 1) * self.n_factors {
            format!("basis block {}", col / self.n_factors)
        } else {
            "control block".to_string()
        }
    }
}

/// A second-stage design matrix together with its column layout.
#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub layout: DesignLayout,
}

/// One unit's fitted second stage.
#[derive(Debug, Clone)]
pub struct UnitFit {
    /// Coefficients, ordered by the design layout.
    pub gamma: DVector<f64>,
    /// The design the coefficients were fit on.
    pub design: Design,
    /// Residuals y - W gamma.
    pub residuals: DVector<f64>,
}

impl UnitFit {
    pub fn layout(&self) -> &DesignLayout {
        &self.design.layout
    }

    pub fn n_dates(&self) -> usize {
        self.design.matrix.nrows()
    }
}

/// Build a unit's design by interacting the estimated factors with the
/// basis evaluated at the unit's treatment path, then appending controls.
pub fn build_design(fit: &FactorFit, unit: &UnitData, basis: &dyn Basis) -> Result<Design> {
    let t = fit.n_dates();
    if unit.n_dates() != t {
        return Err(Error::Input(format!(
            "unit has {} dates but the factor fit has {t}",
            unit.n_dates()
        )));
    }
    if basis.is_empty() {
        return Err(Error::Input("basis must contain at least one function".into()));
    }
    let layout = DesignLayout {
        n_factors: fit.r_hat,
        n_basis: basis.len(),
        n_controls: unit.n_controls(),
    };
    let p = layout.width();
    let mut w = DMatrix::zeros(t, p);
    for row in 0..t {
        let d = unit.treatment[row];
        for r in 0..layout.n_factors {
            w[(row, r)] = fit.f_hat[(row, r)];
        }
        for j in 1..=layout.n_basis {
            let phi = basis.value(j, d);
            if !phi.is_finite() {
                return Err(Error::Input(format!(
                    "basis function {j} is non-finite at treatment value {d}"
                )));
            }
            for r in 0..layout.n_factors {
                w[(row, j * layout.n_factors + r)] = phi * fit.f_hat[(row, r)];
            }
        }
        for k in 0..layout.n_controls {
            w[(row, (layout.n_basis + 1) * layout.n_factors + k)] = unit.controls[(row, k)];
        }
    }
    Ok(Design { matrix: w, layout })
}

/// Columns implicated in a near rank deficiency: entries of the right
/// singular vector for the smallest singular value whose magnitude is at
/// least half the vector's largest.
fn offending_blocks(layout: &DesignLayout, v_min: &DVector<f64>) -> String {
    let peak = v_min.amax();
    let mut names: Vec<String> = Vec::new();
    for (col, val) in v_min.iter().enumerate() {
        if val.abs() >= 0.5 * peak {
            let name = layout.block_name(col);
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    names.join(" and ")
}

/// Least-squares fit of y on the design, via the design's SVD.
pub fn fit_ols(design: &Design, y: &DVector<f64>) -> Result<UnitFit> {
    let (t, p) = design.matrix.shape();
    if y.len() != t {
        return Err(Error::Input(format!(
            "outcome has {} observations but the design has {t} rows",
            y.len()
        )));
    }
    if t <= p {
        return Err(Error::Input(format!(
            "need more dates than design columns: {t} dates, {p} columns"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("outcome contains a non-finite value".into()));
    }

    let svd = design.matrix.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (mut s_max, mut s_min, mut min_idx) = (0.0f64, f64::INFINITY, 0usize);
    for (i, &s) in sv.iter().enumerate() {
        if s > s_max {
            s_max = s;
        }
        if s < s_min {
            s_min = s;
            min_idx = i;
        }
    }
    if s_min < DESIGN_TOL * s_max {
        let v_t = svd.v_t.as_ref().expect("svd computed with v");
        let v_min = v_t.row(min_idx).transpose();
        return Err(Error::SingularDesign {
            ratio: if s_max > 0.0 { s_min / s_max } else { 0.0 },
            block: offending_blocks(&design.layout, &v_min),
        });
    }

    let gamma = svd.solve(y, 0.0).map_err(|e| Error::Input(e.to_string()))?;
    let residuals = y - &design.matrix * &gamma;
    Ok(UnitFit { gamma, design: design.clone(), residuals })
}

/// Instrumental-variable fit: the instrument path replaces the treatment
/// inside the basis interactions, and the coefficient solves
/// (R'W) gamma = R'y for instrument design R and treatment design W.
///
/// When the instrument equals the treatment this reduces exactly to
/// [`fit_ols`]. The returned fit carries the treatment design and its
/// residuals y - W gamma.
pub fn fit_iv(
    fit: &FactorFit,
    unit: &UnitData,
    instrument: &DVector<f64>,
    basis: &dyn Basis,
) -> Result<UnitFit> {
    if instrument.len() != unit.n_dates() {
        return Err(Error::Input(format!(
            "instrument has {} observations but the unit has {}",
            instrument.len(),
            unit.n_dates()
        )));
    }
    if instrument.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("instrument contains a non-finite value".into()));
    }
    let w = build_design(fit, unit, basis)?;
    let mut iv_unit = unit.clone();
    iv_unit.treatment = instrument.clone();
    let r = build_design(fit, &iv_unit, basis)?;

    let p = w.layout.width();
    if unit.n_dates() <= p {
        return Err(Error::Input(format!(
            "need more dates than design columns: {} dates, {p} columns",
            unit.n_dates()
        )));
    }

    let cross = r.matrix.transpose() * &w.matrix;
    let rhs = r.matrix.transpose() * &unit.outcome;
    let svd = cross.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if s_min < DESIGN_TOL * s_max {
        return Err(Error::WeakInstrument {
            ratio: if s_max > 0.0 { s_min / s_max } else { 0.0 },
        });
    }
    let gamma = svd.solve(&rhs, 0.0).map_err(|e| Error::Input(e.to_string()))?;
    let residuals = &unit.outcome - &w.matrix * &gamma;
    Ok(UnitFit { gamma, design: w, residuals })
}
