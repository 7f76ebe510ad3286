//! Legendre transform of a cumulant function: the conjugate point `t(y)`
//! solving `psi'(t) = y` and the rate function `I(y) = t y - psi(t)`.
//!
//! The same solver serves the asymptotic cumulant of a [`FieldModel`] and the
//! empirical cumulant of one sampled field ([`EmpiricalField`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CumulantEvaluation, FieldModel};
use crate::recentering::EmpiricalField;
use crate::roots::newton_bisect;

pub const ROOT_TOLERANCE: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 200;
pub const MAX_BRACKET_DOUBLINGS: usize = 60;

/// A convex, even cumulant function `t -> (psi, psi', psi'')` whose derivative
/// increases towards `m_abs` as `t -> infinity`.
pub trait CumulantProvider {
    fn cumulants(&self, t: f64) -> CumulantEvaluation;

    /// Supremum of `psi'`; the rate function lives on `(-m_abs, m_abs)`.
    fn m_abs(&self) -> f64;
}

impl CumulantProvider for FieldModel {
    fn cumulants(&self, t: f64) -> CumulantEvaluation {
        FieldModel::cumulants(self, t)
    }

    fn m_abs(&self) -> f64 {
        self.mean_abs()
    }
}

impl CumulantProvider for EmpiricalField {
    fn cumulants(&self, t: f64) -> CumulantEvaluation {
        EmpiricalField::cumulants(self, t)
    }

    fn m_abs(&self) -> f64 {
        self.mean_abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub y: f64,
    pub t: f64,
    #[serde(rename = "I")]
    pub i: f64,
}

/// Solves `psi'(t) = y` and returns `(y, t, I(y))`.
///
/// A provider with `m_abs = 0` (no field at all) has the single-point domain
/// `{0}`, where `t = 0` and `I = 0` are returned.
pub fn conjugate<P: CumulantProvider + ?Sized>(provider: &P, y: f64) -> Result<RatePoint> {
    if !y.is_finite() {
        return Err(Error::NonFinite("y"));
    }
    let m_abs = provider.m_abs();
    if m_abs == 0.0 && y == 0.0 {
        return Ok(RatePoint { y, t: 0.0, i: 0.0 });
    }
    if y.abs() >= m_abs {
        return Err(Error::Domain { y, m_abs });
    }

    // psi' is odd and increasing: grow [-T, T] until it straddles y
    let mut bound = 1.0;
    let mut doublings = 0;
    while provider.cumulants(bound).psi_prime < y.abs() {
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::Domain { y, m_abs });
        }
        bound *= 2.0;
    }
    let (lo, hi) = if y >= 0.0 { (0.0, bound) } else { (-bound, 0.0) };
    let tol = ROOT_TOLERANCE * y.abs().max(1.0);
    let t = newton_bisect(
        |t| {
            let c = provider.cumulants(t);
            (c.psi_prime - y, c.psi_double_prime)
        },
        lo,
        hi,
        tol,
        MAX_ITERATIONS,
    )?;
    let c = provider.cumulants(t);
    if (c.psi_prime - y).abs() > tol {
        return Err(Error::Convergence(format!(
            "conjugate of y = {y}: residual {:.3e} after bracket collapse",
            c.psi_prime - y
        )));
    }
    Ok(RatePoint { y, t, i: t * y - c.psi })
}

/// Rate function `I(y) = sup_t { t y - psi(t) }`.
pub fn rate_i<P: CumulantProvider + ?Sized>(provider: &P, y: f64) -> Result<f64> {
    conjugate(provider, y).map(|p| p.i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::log_cosh;

    fn rademacher() -> FieldModel {
        FieldModel::rademacher(0.5, 1.0).unwrap()
    }

    #[test]
    fn symmetric_law_has_zero_at_origin() {
        let p = conjugate(&rademacher(), 0.0).unwrap();
        assert_eq!((p.t, p.i), (0.0, 0.0));
    }

    #[test]
    fn inverts_tanh() {
        let y = 1f64.tanh();
        let p = conjugate(&rademacher(), y).unwrap();
        assert!((p.t - 1.0).abs() < 1e-11);
        assert!((p.i - (y - 1f64.cosh().ln())).abs() < 1e-12);
        assert!((p.i - 0.327_813_325_472_737_4).abs() < 1e-11);
    }

    #[test]
    fn rate_matches_grid_supremum() {
        // oracle: sup over a dense t-grid of 0.5 t - log cosh t
        let mut best = f64::NEG_INFINITY;
        for k in 0..=400_000 {
            let t = k as f64 * 1e-5;
            best = best.max(0.5 * t - log_cosh(t));
        }
        let i = rate_i(&rademacher(), 0.5).unwrap();
        assert!((i - best).abs() < 1e-8, "{i} vs {best}");
        assert!((i - 0.130_812_035_941_137).abs() < 1e-12);
    }

    #[test]
    fn gaussian_round_trip() {
        let g = FieldModel::gaussian(0.0, 1.0).unwrap();
        let p = conjugate(&g, 0.5).unwrap();
        assert!((g.cumulants(p.t).psi_prime - 0.5).abs() <= 1e-12);
        // oracle: grid scan of psi' then bisection on the bracketing cell
        let mut lo = 0.0;
        while g.cumulants(lo + 0.01).psi_prime < 0.5 {
            lo += 0.01;
        }
        let mut hi = lo + 0.01;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if g.cumulants(mid).psi_prime < 0.5 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((p.t - lo).abs() < 1e-10);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(conjugate(&rademacher(), 1.0), Err(Error::Domain { .. })));
        assert!(matches!(conjugate(&rademacher(), -1.5), Err(Error::Domain { .. })));
        assert!(matches!(conjugate(&FieldModel::zero(), 0.1), Err(Error::Domain { .. })));
        assert!(conjugate(&rademacher(), f64::NAN).is_err());
        // y numerically at the boundary: tanh saturates long before 2^60
        assert!(matches!(conjugate(&rademacher(), 1.0 - 1e-18), Err(Error::Domain { .. })));
    }

    #[test]
    fn degenerate_provider_has_point_domain() {
        let p = conjugate(&FieldModel::zero(), 0.0).unwrap();
        assert_eq!((p.t, p.i), (0.0, 0.0));
    }

    #[test]
    fn rate_grows_with_distance_from_zero() {
        let r = rademacher();
        let mut prev = 0.0;
        for k in 1..20 {
            let y = 0.05 * k as f64;
            let i = rate_i(&r, y).unwrap();
            assert!(i > prev);
            assert!((rate_i(&r, -y).unwrap() - i).abs() < 1e-12);
            prev = i;
        }
    }
}
