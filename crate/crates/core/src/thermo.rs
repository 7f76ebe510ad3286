//! Asymptotic thermodynamics of the model: entropy, band edges, critical
//! inverse temperature, free energy, overlap atom and extremal intensity.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::rate::{CumulantProvider, MAX_ITERATIONS, ROOT_TOLERANCE};
use crate::roots::{golden_section, newton_bisect};

/// All asymptotic constants of one field law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoSolution {
    pub beta_c: f64,
    pub e_max: f64,
    pub e_min: f64,
    pub q: f64,
    pub c_intensity: f64,
    /// Maximizer `y*` of the entropy surface at `E_max`.
    pub y_star: f64,
    /// Conjugate of `y_star`; equals `beta_c`.
    pub t_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyPoint {
    pub s: f64,
    pub y_star: f64,
    pub t_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationalMax {
    pub value: f64,
    pub e_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractionalBound {
    pub value: f64,
    pub m_star: f64,
}

/// `g(t) = t²/2 + t psi'(t) - psi(t) - log 2` with derivative `t (1 + psi''(t))`.
///
/// Its positive root is where the entropy at the stationary point vanishes,
/// both for the asymptotic and the finite-size cumulant.
pub(crate) fn freezing_residual<P: CumulantProvider + ?Sized>(p: &P, t: f64) -> (f64, f64) {
    let c = p.cumulants(t);
    (0.5 * t * t + t * c.psi_prime - c.psi - LN_2, t * (1.0 + c.psi_double_prime))
}

/// Positive root of [`freezing_residual`], bracketed by doubling from 1.
pub(crate) fn positive_freezing_root<P: CumulantProvider + ?Sized>(p: &P) -> Result<f64> {
    let mut hi = 1.0;
    let mut doublings = 0;
    while freezing_residual(p, hi).0 < 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Convergence("freezing equation has no positive root".into()));
        }
    }
    newton_bisect(|t| freezing_residual(p, t), 0.0, hi, ROOT_TOLERANCE, MAX_ITERATIONS)
}

/// `S(E) = max_y { log 2 - (E - y)²/2 - I(y) }` for any cumulant provider.
///
/// The maximizer satisfies `E = t + psi'(t)` with `y* = psi'(t)`; the left side
/// is strictly increasing in `t`, so this is a bracketed 1-D root problem.
pub(crate) fn entropy_for<P: CumulantProvider + ?Sized>(p: &P, e: f64) -> Result<EntropyPoint> {
    if !e.is_finite() {
        return Err(Error::NonFinite("E"));
    }
    let m_abs = p.m_abs();
    let tol = ROOT_TOLERANCE * e.abs().max(1.0);
    let t = newton_bisect(
        |t| {
            let c = p.cumulants(t);
            (t + c.psi_prime - e, 1.0 + c.psi_double_prime)
        },
        e - m_abs - 1.0,
        e + m_abs + 1.0,
        tol,
        MAX_ITERATIONS,
    )?;
    let c = p.cumulants(t);
    let y = c.psi_prime;
    let rate = t * y - c.psi;
    let s = LN_2 - 0.5 * (e - y) * (e - y) - rate;
    Ok(EntropyPoint { s, y_star: y, t_star: t })
}

pub fn entropy_s(model: &FieldModel, e: f64) -> Result<EntropyPoint> {
    entropy_for(model, e)
}

/// Roots `(E_min, E_max)` of `S(E) = 0`, bracketed outward from the entropy
/// maximum at `E = 0`. `S'(E) = -t*(E)`.
pub fn band_edges(model: &FieldModel) -> Result<(f64, f64)> {
    let s = |e: f64| entropy_for(model, e);
    let edge = |sign: f64| -> Result<f64> {
        let mut far = sign;
        let mut steps = 0;
        while s(far)?.s > 0.0 {
            far *= 2.0;
            steps += 1;
            if steps > 60 {
                return Err(Error::Convergence("entropy never becomes negative".into()));
            }
        }
        let mut failure = None;
        // f(E) = -sign * S(E) increases away from the peak
        let root = newton_bisect(
            |e| match s(e) {
                Ok(p) => (-sign * p.s, sign * p.t_star),
                Err(err) => {
                    failure.get_or_insert(err);
                    (f64::NAN, 1.0)
                }
            },
            if sign > 0.0 { 0.0 } else { far },
            if sign > 0.0 { far } else { 0.0 },
            ROOT_TOLERANCE,
            MAX_ITERATIONS,
        );
        match failure {
            Some(err) => Err(err),
            None => root,
        }
    };
    Ok((edge(-1.0)?, edge(1.0)?))
}

/// Critical inverse temperature: the positive root of
/// `beta²/2 + beta psi'(beta) - psi(beta) = log 2`.
pub fn solve_beta_c(model: &FieldModel) -> Result<f64> {
    positive_freezing_root(model)
}

pub fn overlap_q(model: &FieldModel) -> Result<f64> {
    let beta_c = solve_beta_c(model)?;
    Ok(q_at(model, beta_c))
}

fn q_at(model: &FieldModel, beta_c: f64) -> f64 {
    model.expectation(|h| (beta_c * h).tanh().powi(2))
}

/// `C = (2 pi (1 + psi''(beta_c)))^{-1/2}`.
pub fn intensity_constant(model: &FieldModel) -> Result<f64> {
    let beta_c = solve_beta_c(model)?;
    Ok(c_at(model, beta_c))
}

fn c_at(model: &FieldModel, beta_c: f64) -> f64 {
    let d2 = model.cumulants(beta_c).psi_double_prime;
    1.0 / (2.0 * PI * (1.0 + d2)).sqrt()
}

impl ThermoSolution {
    pub fn solve(model: &FieldModel) -> Result<Self> {
        let beta_c = solve_beta_c(model)?;
        let (e_min, e_max) = band_edges(model)?;
        let at_edge = entropy_for(model, e_max)?;
        Ok(ThermoSolution {
            beta_c,
            e_max,
            e_min,
            q: q_at(model, beta_c),
            c_intensity: c_at(model, beta_c),
            y_star: at_edge.y_star,
            t_star: at_edge.t_star,
        })
    }

    /// Limiting free energy `lim (1/N) log Z_N(beta)`.
    pub fn free_energy(&self, model: &FieldModel, beta: f64) -> f64 {
        if beta <= self.beta_c {
            LN_2 + 0.5 * beta * beta + model.cumulants(beta).psi
        } else {
            self.e_max * beta
        }
    }

    /// `max_{E in [E_min, E_max]} { beta E + S(E) }`. Below `beta_c` the
    /// maximizer is interior at `E = beta + psi'(beta)`; above it is pinned to
    /// `E_max`.
    pub fn gibbs_variational(&self, model: &FieldModel, beta: f64) -> Result<VariationalMax> {
        let e_star = if beta < self.beta_c { beta + model.cumulants(beta).psi_prime } else { self.e_max };
        let s = entropy_for(model, e_star)?.s;
        Ok(VariationalMax { value: beta * e_star + s, e_star })
    }

    /// `inf_{0 < m <= 1} { beta² m/2 + log 2/m + psi(beta m)/m }`.
    pub fn fractional_bound(&self, model: &FieldModel, beta: f64) -> Result<FractionalBound> {
        fractional_bound_impl(model, beta)
    }
}

pub fn free_energy(model: &FieldModel, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(ThermoSolution::solve(model)?.free_energy(model, beta))
}

pub fn gibbs_variational(model: &FieldModel, beta: f64) -> Result<VariationalMax> {
    check_beta(beta)?;
    ThermoSolution::solve(model)?.gibbs_variational(model, beta)
}

pub fn fractional_bound(model: &FieldModel, beta: f64) -> Result<FractionalBound> {
    fractional_bound_impl(model, beta)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("beta must be positive and finite, got {beta}")))
    }
}

fn fractional_objective(model: &FieldModel, beta: f64, m: f64) -> f64 {
    0.5 * beta * beta * m + LN_2 / m + model.cumulants(beta * m).psi / m
}

fn fractional_bound_impl(model: &FieldModel, beta: f64) -> Result<FractionalBound> {
    check_beta(beta)?;
    // B'(m) = g(beta m) / m², so the sign of B' is that of the freezing residual
    let slope = |m: f64| {
        let (g, dg) = freezing_residual(model, beta * m);
        (g, beta * dg)
    };
    if slope(1.0).0 <= 0.0 {
        return Ok(FractionalBound { value: fractional_objective(model, beta, 1.0), m_star: 1.0 });
    }
    let (mut a, mut b) = golden_section(|m| fractional_objective(model, beta, m), 1e-9, 1.0, 1e-7, 200);
    while slope(a).0 > 0.0 && a > 1e-12 {
        a *= 0.5;
    }
    while slope(b).0 < 0.0 && b < 1.0 {
        b = (2.0 * b).min(1.0);
    }
    let m_star = newton_bisect(slope, a, b, 1e-14, MAX_ITERATIONS)?;
    Ok(FractionalBound { value: fractional_objective(model, beta, m_star), m_star })
}
