//! Bracketed scalar root finding and one-dimensional minimization.

use crate::error::{Error, Result};

/// Safeguarded Newton iteration for an increasing function on `[lo, hi]` with
/// `f(lo) <= 0 <= f(hi)`.
///
/// `fdf` returns `(f(x), f'(x))`. A Newton step is taken whenever it stays
/// strictly inside the current bracket, otherwise the bracket is bisected.
/// Stops once `|f(x)| <= tol`, or when the bracket has shrunk to adjacent
/// floats (the root is then pinned to machine precision).
pub fn newton_bisect<F>(mut fdf: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    if !(lo <= hi) {
        return Err(Error::Convergence(format!("empty bracket [{lo}, {hi}]")));
    }
    let (flo, _) = fdf(lo);
    if flo.abs() <= tol {
        return Ok(lo);
    }
    let (fhi, _) = fdf(hi);
    if fhi.abs() <= tol {
        return Ok(hi);
    }
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Convergence(format!(
            "no sign change on [{lo}, {hi}]: f = ({flo}, {fhi})"
        )));
    }
    let mut x = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, x);
    for _ in 0..max_iter {
        let (f, df) = fdf(x);
        if !f.is_finite() {
            return Err(Error::Convergence(format!("non-finite residual at x = {x}")));
        }
        if f.abs() < best.0 {
            best = (f.abs(), x);
        }
        if f.abs() <= tol {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(best.1);
        }
        let newton = x - f / df;
        x = if df > 0.0 && newton > lo && newton < hi { newton } else { mid };
    }
    Err(Error::Convergence(format!(
        "tolerance {tol} not reached after {max_iter} iterations (best residual {})",
        best.0
    )))
}

/// Golden-section search for the minimum of a unimodal function on `[a, b]`.
/// Returns the final bracket; the minimizer lies inside it.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = newton_bisect(|x| (x * x - 2.0, 2.0 * x), 0.0, 4.0, 1e-14, 100).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn survives_zero_derivative() {
        // f' vanishes at the root: Newton alone stalls, bisection carries it.
        let r = newton_bisect(|x| (x * x * x, 3.0 * x * x), -1.0, 2.0, 1e-15, 200).unwrap();
        assert!(r.abs() < 1e-5);
    }

    #[test]
    fn rejects_bracket_without_sign_change() {
        assert!(matches!(
            newton_bisect(|x| (x + 5.0, 1.0), 0.0, 1.0, 1e-12, 50),
            Err(Error::Convergence(_))
        ));
    }

    #[test]
    fn golden_section_brackets_parabola_minimum() {
        let (a, b) = golden_section(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-10, 200);
        assert!(a <= 0.3 + 1e-9 && b >= 0.3 - 1e-9 && b - a <= 1e-9);
    }
}
