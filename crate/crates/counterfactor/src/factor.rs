//! Principal-component estimation of an approximate factor structure.
//!
//! The panel X (dates by series) is modeled as X = F L' + E with R latent
//! factors. Estimation goes through the singular value decomposition of X
//! rather than an eigendecomposition of X X', which is numerically safer;
//! the eigenvalues of X X' are the squared singular values of X.
//!
//! Conventions, fixed so that repeated runs and different platforms agree:
//! - factors are scaled so that F'F / T = I,
//! - loadings are the projection L = X'F / T,
//! - each factor's sign is chosen so that the largest-magnitude entry of
//!   its loading column is positive (ties broken at the lowest index).
//!
//! The number of factors is selected by the eigenvalue growth-ratio
//! criterion: with mu_1 >= mu_2 >= .. the eigenvalues of X X' / (T L) and
//! mu~_k = mu_k / sum_{j>k} mu_j, the selector maximizes
//! ln(1 + mu~_k) / ln(1 + mu~_{k+1}) over k = 1..r_max.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::PanelMatrix;

/// Relative eigenvalue threshold below which the factor structure is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// A fitted factor structure of rank `r_hat`.
///
/// `f_hat` is dates-by-r_hat with F'F / T = I, `lambda_hat` is
/// series-by-r_hat, `e_hat = X - F L'`, and `d_hat` holds the top r_hat
/// singular values of X / sqrt(T L) in non-increasing order.
#[derive(Debug, Clone)]
pub struct FactorFit {
    pub f_hat: DMatrix<f64>,
    pub lambda_hat: DMatrix<f64>,
    pub e_hat: DMatrix<f64>,
    pub r_hat: usize,
    pub d_hat: DVector<f64>,
}

impl FactorFit {
    pub fn n_dates(&self) -> usize {
        self.f_hat.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.lambda_hat.nrows()
    }

    /// The fitted common component F L', same shape as the input panel.
    pub fn common_component(&self) -> DMatrix<f64> {
        &self.f_hat * self.lambda_hat.transpose()
    }
}

/// Flip factor and loading columns in tandem so that each loading column's
/// largest-magnitude entry is positive, ties broken at the lowest index.
/// Idempotent, and leaves the product F L' unchanged.
pub fn apply_sign_convention(f_hat: &mut DMatrix<f64>, lambda_hat: &mut DMatrix<f64>) {
    for r in 0..lambda_hat.ncols() {
        let col = lambda_hat.column(r);
        let mut anchor = 0;
        let mut best = f64::NEG_INFINITY;
        for (idx, v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                anchor = idx;
            }
        }
        if lambda_hat[(anchor, r)] < 0.0 {
            lambda_hat.column_mut(r).neg_mut();
            f_hat.column_mut(r).neg_mut();
        }
    }
}

/// Estimate an r-factor structure from the panel by principal components.
///
/// Requires 1 <= r <= min(T, L). Fails with a degenerate-factor error when
/// the r-th eigenvalue of X X' falls below 1e-12 times the largest, since
/// the trailing factors would then be numerical noise.
pub fn extract_factors(x: &PanelMatrix, r: usize) -> Result<FactorFit> {
    let (t, l) = (x.n_dates(), x.n_series());
    let max_rank = t.min(l);
    if r == 0 || r > max_rank {
        return Err(Error::Input(format!(
            "factor rank must be in 1..={max_rank} for a {t}x{l} panel, got {r}"
        )));
    }

    let svd = x.values().clone().svd(true, false);
    let sv = &svd.singular_values;
    let top = sv[0] * sv[0];
    if top == 0.0 {
        return Err(Error::DegenerateFactors { index: 1, ratio: 0.0 });
    }
    let rth = sv[r - 1] * sv[r - 1];
    if rth < RANK_TOL * top {
        return Err(Error::DegenerateFactors { index: r, ratio: rth / top });
    }

    let u = svd.u.as_ref().expect("svd computed with u");

    // One step of orthogonal iteration with a Rayleigh-Ritz projection.
    // The plain SVD can return leading singular vectors contaminated by
    // null-space directions when trailing singular values are near zero;
    // one pass through X X' restores them to working precision at O(TLr)
    // cost and is harmless when the SVD was already accurate.
    let y = x.values() * (x.values().transpose() * u.columns(0, r));
    let q = y.qr().q();
    let s = q.transpose() * x.values();
    let eig = (&s * s.transpose()).symmetric_eigen();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues")
    });
    let mut u_r = DMatrix::<f64>::zeros(t, r);
    let mut s2 = Vec::with_capacity(r);
    for (pos, &k) in order.iter().enumerate() {
        u_r.set_column(pos, &(&q * eig.eigenvectors.column(k)));
        s2.push(eig.eigenvalues[k].max(0.0));
    }

    let sqrt_t = (t as f64).sqrt();
    let mut f_hat = u_r * sqrt_t;
    let mut lambda_hat = x.values().transpose() * &f_hat / t as f64;
    apply_sign_convention(&mut f_hat, &mut lambda_hat);
    let e_hat = x.values() - &f_hat * lambda_hat.transpose();

    let scale = (t * l) as f64;
    let d_hat = DVector::from_iterator(r, s2.iter().map(|&v| (v / scale).sqrt()));

    Ok(FactorFit { f_hat, lambda_hat, e_hat, r_hat: r, d_hat })
}

/// Growth-ratio profile over candidate ranks.
#[derive(Debug, Clone)]
pub struct GrowthRatio {
    /// statistic for k = 1..=r_max, stored at index k-1. Entries can be
    /// NaN when trailing eigenvalue mass vanishes; those never win.
    pub statistics: Vec<f64>,
    /// The maximizing rank.
    pub r_hat: usize,
    /// True when the winner is not clear cut: the best statistic is less
    /// than 1.1 times the runner-up. The estimate is still usable, but
    /// reports should surface the ambiguity.
    pub ambiguous: bool,
}

/// Default selection cap: min(8, floor(min(T, L) / 2)).
pub fn default_r_max(t: usize, l: usize) -> usize {
    (t.min(l) / 2).min(8).max(1)
}

/// Select the number of factors by the eigenvalue growth ratio.
/// Requires 1 <= r_max <= min(T, L) - 2 so the statistic at r_max is
/// defined. A panel whose eigenvalues beyond the first are all numerically
/// zero is pure rank one and returns 1 directly.
pub fn estimate_num_factors(x: &PanelMatrix, r_max: usize) -> Result<usize> {
    Ok(growth_ratio(x, r_max)?.r_hat)
}

/// The growth-ratio statistics behind [`estimate_num_factors`], for
/// callers that want to inspect the profile or the ambiguity flag.
pub fn growth_ratio(x: &PanelMatrix, r_max: usize) -> Result<GrowthRatio> {
    let sv = x.values().clone().singular_values();
    growth_ratio_from_singular_values(sv.as_slice(), x.n_dates(), x.n_series(), r_max)
}

/// Growth-ratio selection from precomputed singular values of X, so a
/// caller that already ran an SVD does not pay for a second one.
pub fn growth_ratio_from_singular_values(
    singular_values: &[f64],
    t: usize,
    l: usize,
    r_max: usize,
) -> Result<GrowthRatio> {
    let m = t.min(l);
    if r_max == 0 || r_max + 2 > m {
        return Err(Error::Input(format!(
            "growth-ratio cap must be in 1..={} for a {t}x{l} panel, got {r_max}",
            m.saturating_sub(2)
        )));
    }
    let scale = (t * l) as f64;
    let mut mu: Vec<f64> = singular_values.iter().map(|s| s * s / scale).collect();
    mu.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let mu = &mu[..m];

    if mu[0] == 0.0 {
        return Err(Error::Input("panel is identically zero".into()));
    }
    if mu[1..].iter().all(|&v| v <= RANK_TOL * mu[0]) {
        return Ok(GrowthRatio { statistics: vec![f64::INFINITY], r_hat: 1, ambiguous: false });
    }

    // tail[k] = sum of eigenvalues strictly after position k (one-based k).
    let mut tail = vec![0.0; m + 1];
    for k in (0..m).rev() {
        tail[k] = tail[k + 1] + mu[k];
    }
    // mu~_k, with the zero-eigenvalue and zero-tail edge cases pinned so
    // that an exact rank-q structure yields an infinite statistic at q and
    // NaN (never selected) beyond it.
    let mu_tilde = |k: usize| -> f64 {
        if mu[k - 1] == 0.0 {
            0.0
        } else if tail[k] == 0.0 {
            f64::INFINITY
        } else {
            mu[k - 1] / tail[k]
        }
    };

    let mut statistics = Vec::with_capacity(r_max);
    for k in 1..=r_max {
        statistics.push((1.0 + mu_tilde(k)).ln() / (1.0 + mu_tilde(k + 1)).ln());
    }

    let mut r_hat = 1;
    let mut best = f64::NEG_INFINITY;
    for (idx, &g) in statistics.iter().enumerate() {
        if g > best {
            best = g;
            r_hat = idx + 1;
        }
    }
    let mut second = f64::NEG_INFINITY;
    for (idx, &g) in statistics.iter().enumerate() {
        if idx + 1 != r_hat && g > second {
            second = g;
        }
    }
    let ambiguous = statistics.len() > 1 && second.is_finite() && best < 1.1 * second;

    Ok(GrowthRatio { statistics, r_hat, ambiguous })
}
