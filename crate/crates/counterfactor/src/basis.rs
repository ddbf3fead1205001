use crate::error::{Error, Result};

/// A family of J known, differentiable, non-constant functions of the
/// treatment. Basis function j (one-based, j = 1..=J) enters the second
/// stage interacted with each estimated factor, and its derivative drives
/// every marginal-effect estimand downstream.
pub trait Basis {
    /// Number of basis functions J.
    fn len(&self) -> usize;

    /// Value of basis function j at d. j is one-based, 1 <= j <= len().
    fn value(&self, j: usize, d: f64) -> f64;

    /// Derivative of basis function j at d.
    fn derivative(&self, j: usize, d: f64) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The default basis: monomials d, d^2, .., d^J.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Monomials {
    degree: usize,
}

impl Monomials {
    /// A monomial basis of the given degree J >= 1.
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Input("basis must contain at least one function".into()));
        }
        Ok(Self { degree })
    }
}

impl Basis for Monomials {
    fn len(&self) -> usize {
        self.degree
    }

    fn value(&self, j: usize, d: f64) -> f64 {
        d.powi(j as i32)
    }

    fn derivative(&self, j: usize, d: f64) -> f64 {
        j as f64 * d.powi(j as i32 - 1)
    }
}

/// Sanity-check a basis over representative treatment values: every value
/// and derivative must be finite, each function must vary across the
/// points (non-constant), and the analytic derivative must agree with a
/// central finite difference to 1e-6 relative.
pub fn check_basis(basis: &dyn Basis, support: &[f64]) -> Result<()> {
    if basis.is_empty() {
        return Err(Error::Input("basis must contain at least one function".into()));
    }
    if support.len() < 2 {
        return Err(Error::Input("basis check needs at least two support points".into()));
    }
    let h = 1e-5;
    for j in 1..=basis.len() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &d in support {
            let v = basis.value(j, d);
            let dv = basis.derivative(j, d);
            if !v.is_finite() || !dv.is_finite() {
                return Err(Error::Input(format!(
                    "basis function {j} is non-finite at d = {d}"
                )));
            }
            lo = lo.min(v);
            hi = hi.max(v);
            let fd = (basis.value(j, d + h) - basis.value(j, d - h)) / (2.0 * h);
            let scale = dv.abs().max(fd.abs()).max(1.0);
            if (dv - fd).abs() > 1e-6 * scale {
                return Err(Error::Input(format!(
                    "basis function {j} derivative disagrees with finite differences at d = {d}: analytic {dv}, numeric {fd}"
                )));
            }
        }
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            return Err(Error::Input(format!(
                "basis function {j} is constant over the observed treatment values"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_values_and_derivatives() {
        let b = Monomials::new(3).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.value(1, 2.0), 2.0);
        assert_eq!(b.value(2, 2.0), 4.0);
        assert_eq!(b.value(3, 2.0), 8.0);
        assert_eq!(b.derivative(1, 2.0), 1.0);
        assert_eq!(b.derivative(2, 2.0), 4.0);
        assert_eq!(b.derivative(3, 2.0), 12.0);
    }

    #[test]
    fn degree_zero_rejected() {
        assert!(Monomials::new(0).is_err());
    }

    #[test]
    fn check_accepts_monomials_on_a_spread_of_points() {
        let b = Monomials::new(4).unwrap();
        let support: Vec<f64> = (-10..=10).map(|k| k as f64 / 4.0).collect();
        check_basis(&b, &support).unwrap();
    }

    #[test]
    fn check_rejects_constant_function() {
        struct Flat;
        impl Basis for Flat {
            fn len(&self) -> usize {
                1
            }
            fn value(&self, _j: usize, _d: f64) -> f64 {
                3.0
            }
            fn derivative(&self, _j: usize, _d: f64) -> f64 {
                0.0
            }
        }
        let err = check_basis(&Flat, &[0.0, 1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("constant"));
    }

    #[test]
    fn check_rejects_wrong_derivative() {
        struct Lying;
        impl Basis for Lying {
            fn len(&self) -> usize {
                1
            }
            fn value(&self, _j: usize, d: f64) -> f64 {
                d * d
            }
            fn derivative(&self, _j: usize, d: f64) -> f64 {
                d
            }
        }
        assert!(check_basis(&Lying, &[0.5, 1.0, 1.5]).is_err());
    }
}
