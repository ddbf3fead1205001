//! Large-sample variances and confidence intervals for the three families
//! of average marginal effects.
//!
//! Long-run covariances use the standard kernel form
//!
//! ```text
//! S = G_0 + sum_{j>=1} k(j/b) (G_j + G_j')      G_j = T^-1 sum_{t=1}^{T-j} h_{t+j} h_t'
//! ```
//!
//! with the lag-zero term included and each lag symmetrized, so S is
//! symmetric by construction and reduces exactly to the heteroskedasticity
//! -only estimate G_0 when every kernel weight vanishes (for instance a
//! Parzen kernel with bandwidth below one). Supported kernels: none
//! (heteroskedasticity-robust), quadratic spectral, and Parzen, with
//! default bandwidth 1.3 sqrt(T).
//!
//! The per-unit variance couples the unit's regression scores with the
//! variation of its derivative vector around its time mean; the per-date
//! variance adds a factor-estimation term built from the loadings and the
//! idiosyncratic residuals to the cross-section variance of unit effects;
//! the overall variance combines the time variation of the cross-section
//! averaged derivative vector with the dispersion of per-unit effects.

use nalgebra::{DMatrix, DVector};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::estimands::{ame_overall, ame_unit, gamma_bar, z_unit_mean};
use crate::factor::FactorFit;
use crate::panel::UnitData;
use crate::regression::UnitFit;

/// Kernel family for long-run covariance estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// No autocorrelation correction: the lag-zero term only.
    Hc,
    /// Quadratic spectral kernel, positive semidefinite with unbounded
    /// support.
    QuadraticSpectral,
    /// Parzen kernel, positive semidefinite with support [0, 1].
    Parzen,
}

impl KernelKind {
    pub fn label(self) -> &'static str {
        match self {
            KernelKind::Hc => "hc",
            KernelKind::QuadraticSpectral => "qs",
            KernelKind::Parzen => "parzen",
        }
    }
}

/// Bandwidth rule for a kernel: the default grows with the sample as
/// 1.3 sqrt(T), or a fixed positive value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

/// A kernel family paired with its bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub fn hc() -> Self {
        Self { kind: KernelKind::Hc, bandwidth: Bandwidth::Auto }
    }

    pub fn qs() -> Self {
        Self { kind: KernelKind::QuadraticSpectral, bandwidth: Bandwidth::Auto }
    }

    pub fn parzen() -> Self {
        Self { kind: KernelKind::Parzen, bandwidth: Bandwidth::Auto }
    }

    pub fn with_bandwidth(mut self, b: f64) -> Self {
        self.bandwidth = Bandwidth::Fixed(b);
        self
    }

    pub fn label(&self) -> &'static str {
        self.kind.label()
    }

    /// Resolve the bandwidth for a sample of length t.
    pub fn bandwidth_for(&self, t: usize) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Auto => Ok(1.3 * (t as f64).sqrt()),
            Bandwidth::Fixed(b) => {
                if !b.is_finite() || b <= 0.0 {
                    Err(Error::Input(format!("bandwidth must be positive, got {b}")))
                } else {
                    Ok(b)
                }
            }
        }
    }

    /// Parse a CLI/config label.
    pub fn parse(label: &str) -> Result<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "hc" => Ok(Self::hc()),
            "qs" => Ok(Self::qs()),
            "parzen" => Ok(Self::parzen()),
            other => Err(Error::Config(format!(
                "unknown kernel {other:?}; expected one of hc, qs, parzen"
            ))),
        }
    }
}

/// Kernel weight k(x) at x = lag / bandwidth >= 0. The quadratic spectral
/// weight switches to its series expansion near zero where the closed form
/// loses precision.
pub fn kernel_weight(kind: KernelKind, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Input(format!("kernel argument must be nonnegative, got {x}")));
    }
    Ok(kernel_weight_unchecked(kind, x))
}

fn kernel_weight_unchecked(kind: KernelKind, x: f64) -> f64 {
    match kind {
        KernelKind::Hc => {
            if x == 0.0 {
                1.0
            } else {
                0.0
            }
        }
        KernelKind::Parzen => {
            if x <= 0.5 {
                1.0 - 6.0 * x * x + 6.0 * x * x * x
            } else if x <= 1.0 {
                2.0 * (1.0 - x).powi(3)
            } else {
                0.0
            }
        }
        KernelKind::QuadraticSpectral => {
            let a = 1.2 * std::f64::consts::PI * x;
            if a < 1e-2 {
                // series for (3/a^2)(sin a / a - cos a)
                1.0 - a * a / 10.0 + a.powi(4) / 280.0
            } else {
                3.0 / (a * a) * (a.sin() / a - a.cos())
            }
        }
    }
}

/// Long-run covariance of a vector series. `series` holds one observation
/// per row; the result is q x q, symmetric by construction, for q columns.
pub fn hac_cov(series: &DMatrix<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let (t, q) = series.shape();
    if t < 2 {
        return Err(Error::Input(format!("need at least 2 observations, got {t}")));
    }
    if q == 0 {
        return Err(Error::Input("series has no columns".into()));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("series contains a non-finite value".into()));
    }

    let t_f = t as f64;
    let gamma0 = series.transpose() * series / t_f;

    // weighted sum of forward-lag cross products; its transpose supplies
    // the backward lags
    let mut forward = DMatrix::<f64>::zeros(q, q);
    if spec.kind != KernelKind::Hc {
        let b = spec.bandwidth_for(t)?;
        for j in 1..t {
            let w = kernel_weight_unchecked(spec.kind, j as f64 / b);
            if w == 0.0 {
                continue;
            }
            let lead = series.rows(j, t - j);
            let base = series.rows(0, t - j);
            let gamma_j = lead.transpose() * base / t_f;
            forward += gamma_j * w;
        }
    }

    let mut out = DMatrix::<f64>::zeros(q, q);
    for a in 0..q {
        for b in a..q {
            let v = gamma0[(a, b)] + (forward[(a, b)] + forward[(b, a)]);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// Variance of one unit's average marginal effect, on the per-date scale:
/// the effect's confidence radius is z * sigma / sqrt(T).
///
/// `z` holds the unit's derivative vectors, one row per date, as produced
/// by [`z_rows`]. The score series stacks the regression scores u_t w_t
/// with the centered derivative vectors, and the variance is the quadratic
/// form of its long-run covariance with the weight vector
/// (zbar' (W'W/T)^-1, gamma').
pub fn variance_unit(unit_fit: &UnitFit, z: &DMatrix<f64>, spec: &KernelSpec) -> Result<f64> {
    let t = unit_fit.n_dates();
    let p = unit_fit.gamma.len();
    if z.shape() != (t, p) {
        return Err(Error::Input(format!(
            "derivative matrix is {}x{}, expected {t}x{p}",
            z.nrows(),
            z.ncols()
        )));
    }

    let w = &unit_fit.design.matrix;
    let gram = w.transpose() * w / t as f64;
    let z_bar = DVector::from_fn(p, |k, _| z.column(k).mean());
    let svd = gram.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if s_max <= 0.0 || s_min < 1e-14 * s_max {
        return Err(Error::Input("design gram matrix is numerically singular".into()));
    }
    let a = svd.solve(&z_bar, 0.0).map_err(|e| Error::Input(e.to_string()))?;

    let mut h = DMatrix::<f64>::zeros(t, 2 * p);
    for row in 0..t {
        let u = unit_fit.residuals[row];
        for k in 0..p {
            h[(row, k)] = u * w[(row, k)];
            h[(row, p + k)] = z[(row, k)] - z_bar[k];
        }
    }
    let sigma_hh = hac_cov(&h, spec)?;

    let mut omega = DVector::<f64>::zeros(2 * p);
    omega.rows_mut(0, p).copy_from(&a);
    omega.rows_mut(p, p).copy_from(&unit_fit.gamma);
    let sigma2 = (sigma_hh * &omega).dot(&omega);
    Ok(sigma2.max(0.0))
}

/// How the loading gram matrix is normalized inside the per-date variance.
/// The natural scale is the number of series L entering the sum; the
/// cross-section size N is kept as an alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GramNormalization {
    #[default]
    BySeries,
    ByUnits,
}

/// Variance of the date-t average marginal effect, on the per-unit scale:
/// the confidence radius is z * sigma / sqrt(N). Needs at least two units.
///
/// Two pieces add up: a factor-estimation term that propagates the
/// idiosyncratic residuals at date t through the loadings, scaled by N/L,
/// and the cross-section variance of the per-unit effects at that date.
pub fn variance_time(
    fit: &FactorFit,
    unit_fits: &[UnitFit],
    units: &[UnitData],
    basis: &dyn Basis,
    t: usize,
    norm: GramNormalization,
) -> Result<f64> {
    let n = units.len();
    if n < 2 {
        return Err(Error::Input(format!("per-date variance needs at least 2 units, got {n}")));
    }
    if unit_fits.len() != n {
        return Err(Error::Input(format!("{} unit fits but {n} units", unit_fits.len())));
    }
    if t >= fit.n_dates() {
        return Err(Error::Input(format!(
            "date index {t} out of range for {} dates",
            fit.n_dates()
        )));
    }

    let r = fit.r_hat;
    let l = fit.n_series();
    let j_max = basis.len();

    // cross-section mean of basis slopes times the matching coefficient
    // block, summed over basis functions
    let mut a = DVector::<f64>::zeros(r);
    // per-date effect and the cross-section variance of unit-level effects
    let gbar = gamma_bar(unit_fits)?;
    let z_t = crate::estimands::z_date_mean(fit, units, basis, t)?;
    let delta_t = gbar.dot(&z_t);
    let mut var_units = 0.0;
    let f_t = fit.f_hat.row(t).transpose();
    for (unit_fit, unit) in unit_fits.iter().zip(units) {
        let d = unit.treatment[t];
        let layout = unit_fit.layout();
        let mut own_effect = 0.0;
        for j in 1..=j_max {
            let slope = basis.derivative(j, d);
            let block = layout.basis_block(j);
            for (offset, col) in block.enumerate() {
                a[offset] += slope * unit_fit.gamma[col];
                own_effect += slope * unit_fit.gamma[col] * f_t[offset];
            }
        }
        var_units += (own_effect - delta_t) * (own_effect - delta_t);
    }
    a /= n as f64;
    var_units /= n as f64;

    let denom = match norm {
        GramNormalization::BySeries => l as f64,
        GramNormalization::ByUnits => n as f64,
    };
    let gram = fit.lambda_hat.transpose() * &fit.lambda_hat / denom;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Input("loading gram matrix is numerically singular".into()))?;
    let v = chol.solve(&a);

    let mut sum_q2 = 0.0;
    for series in 0..l {
        let lam = fit.lambda_hat.row(series).transpose();
        let q = lam.dot(&v) * fit.e_hat[(t, series)];
        sum_q2 += q * q;
    }
    let sigma_q2 = sum_q2 / l as f64;

    Ok((n as f64 / l as f64) * sigma_q2 + var_units)
}

/// Variance of the overall average marginal effect, on the per-unit
/// scale: the confidence radius is z * sigma / sqrt(N). Needs at least two
/// units.
///
/// The time-series piece runs the long-run covariance of the centered,
/// cross-section averaged derivative-weight series through the averaged
/// coefficients, scaled by N/T; the cross-section piece is the variance of
/// the per-unit effects.
pub fn variance_overall(
    fit: &FactorFit,
    unit_fits: &[UnitFit],
    units: &[UnitData],
    basis: &dyn Basis,
    spec: &KernelSpec,
) -> Result<f64> {
    let n = units.len();
    if n < 2 {
        return Err(Error::Input(format!("overall variance needs at least 2 units, got {n}")));
    }
    if unit_fits.len() != n {
        return Err(Error::Input(format!("{} unit fits but {n} units", unit_fits.len())));
    }

    let t_len = fit.n_dates();
    let r = fit.r_hat;
    let j_max = basis.len();
    let n_controls = units[0].n_controls();
    let p = (j_max + 1) * r + n_controls;

    let gbar = gamma_bar(unit_fits)?;
    if gbar.len() != p {
        return Err(Error::Input(format!(
            "unit fits have width {} but the layout implies {p}",
            gbar.len()
        )));
    }

    // cross-section mean of each basis slope, per date
    let mut mean_slopes = DMatrix::<f64>::zeros(t_len, j_max);
    for unit in units {
        if unit.n_dates() != t_len {
            return Err(Error::Input("a unit's dates disagree with the factor fit".into()));
        }
        for t in 0..t_len {
            let d = unit.treatment[t];
            for j in 1..=j_max {
                mean_slopes[(t, j - 1)] += basis.derivative(j, d);
            }
        }
    }
    mean_slopes /= n as f64;

    // grand mean over dates of slope-weighted factors, one vector per
    // basis function
    let mut grand = DMatrix::<f64>::zeros(j_max, r);
    for t in 0..t_len {
        for j in 0..j_max {
            for k in 0..r {
                grand[(j, k)] += mean_slopes[(t, j)] * fit.f_hat[(t, k)];
            }
        }
    }
    grand /= t_len as f64;

    let mut m = DMatrix::<f64>::zeros(t_len, p);
    for t in 0..t_len {
        for j in 1..=j_max {
            for k in 0..r {
                m[(t, j * r + k)] = mean_slopes[(t, j - 1)] * fit.f_hat[(t, k)] - grand[(j - 1, k)];
            }
        }
    }
    let sigma_mm = hac_cov(&m, spec)?;
    let time_term = (sigma_mm * &gbar).dot(&gbar);

    let mut effects = Vec::with_capacity(n);
    for (unit_fit, unit) in unit_fits.iter().zip(units) {
        let z_mean = z_unit_mean(fit, unit, basis)?;
        effects.push(ame_unit(unit_fit, &z_mean)?);
    }
    let overall = ame_overall(&effects)?;
    let var_effects =
        effects.iter().map(|e| (e - overall) * (e - overall)).sum::<f64>() / n as f64;

    Ok(((n as f64 / t_len as f64) * time_term + var_effects).max(0.0))
}

/// Scale behind a confidence radius: which count divides the variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// Radius z * sigma / sqrt(T): per-unit effects.
    SqrtDates(usize),
    /// Radius z * sigma / sqrt(N): per-date and overall effects.
    SqrtUnits(usize),
}

impl Scaling {
    fn count(self) -> usize {
        match self {
            Scaling::SqrtDates(t) => t,
            Scaling::SqrtUnits(n) => n,
        }
    }
}

/// A point estimate with a symmetric two-sided confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateWithCi {
    pub point: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub scaling: Scaling,
    /// The kernel behind the variance, or None for variances that take no
    /// kernel.
    pub kernel: Option<KernelSpec>,
}

impl EstimateWithCi {
    /// Build the interval point +- z_{(1+level)/2} sqrt(sigma2 / count).
    pub fn new(
        point: f64,
        sigma2: f64,
        scaling: Scaling,
        level: f64,
        kernel: Option<KernelSpec>,
    ) -> Result<Self> {
        if !point.is_finite() {
            return Err(Error::Input("point estimate is non-finite".into()));
        }
        if !sigma2.is_finite() || sigma2 < 0.0 {
            return Err(Error::Input(format!("variance must be nonnegative, got {sigma2}")));
        }
        if !(0.0..1.0).contains(&level) || level <= 0.0 {
            return Err(Error::Input(format!("level must be in (0, 1), got {level}")));
        }
        let count = scaling.count();
        if count == 0 {
            return Err(Error::Input("scaling count must be positive".into()));
        }
        let std_error = (sigma2 / count as f64).sqrt();
        let z = normal_quantile(0.5 + level / 2.0)?;
        Ok(Self {
            point,
            std_error,
            lower: point - z * std_error,
            upper: point + z * std_error,
            level,
            scaling,
            kernel,
        })
    }

    pub fn radius(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    /// The kernel's label, or "plain" when no kernel was involved.
    pub fn kernel_label(&self) -> &'static str {
        self.kernel.map(|k| k.label()).unwrap_or("plain")
    }
}

/// Standard-normal quantile by the Acklam rational approximation,
/// accurate to about 1e-9 in the quantile. Domain (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Input(format!("quantile probability must be in (0, 1), got {p}")));
    }

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| -> f64 {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    Ok(x)
}
