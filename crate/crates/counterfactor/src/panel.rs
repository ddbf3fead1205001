use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A balanced panel of observed series, stored dates-by-series.
///
/// Row t holds the value of every series at date t, so entry (t, l) is
/// series l observed at date t. Construction validates the invariants the
/// estimation routines rely on: at least two dates, at least two series,
/// and every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelMatrix {
    values: DMatrix<f64>,
}

impl PanelMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 2 {
            return Err(Error::Input(format!(
                "panel must have at least 2 dates and 2 series, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("panel contains a non-finite value".into()));
        }
        Ok(Self { values })
    }

    /// Number of dates (rows).
    pub fn n_dates(&self) -> usize {
        self.values.nrows()
    }

    /// Number of series (columns).
    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// A copy with every column shifted to mean zero. Opt-in preprocessing
    /// for data whose series have nonzero levels; estimation itself never
    /// centers.
    pub fn center_columns(&self) -> PanelMatrix {
        let mut centered = self.values.clone();
        for mut col in centered.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        PanelMatrix { values: centered }
    }
}

/// One unit's observations across all dates: outcome, treatment, and
/// controls (a dates-by-k matrix, possibly with zero columns).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitData {
    pub outcome: nalgebra::DVector<f64>,
    pub treatment: nalgebra::DVector<f64>,
    pub controls: DMatrix<f64>,
}

impl UnitData {
    pub fn new(
        outcome: nalgebra::DVector<f64>,
        treatment: nalgebra::DVector<f64>,
        controls: DMatrix<f64>,
    ) -> Result<Self> {
        let t = outcome.len();
        if treatment.len() != t || controls.nrows() != t {
            return Err(Error::Input(format!(
                "unit series lengths disagree: outcome {}, treatment {}, controls {}",
                t,
                treatment.len(),
                controls.nrows()
            )));
        }
        if outcome.iter().any(|v| !v.is_finite())
            || treatment.iter().any(|v| !v.is_finite())
            || controls.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Input("unit data contains a non-finite value".into()));
        }
        Ok(Self { outcome, treatment, controls })
    }

    pub fn n_dates(&self) -> usize {
        self.outcome.len()
    }

    pub fn n_controls(&self) -> usize {
        self.controls.ncols()
    }
}
