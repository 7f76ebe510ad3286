//! Finite-size constants of one disorder realization: the empirical cumulant
//! `psi_N`, the conjugate pair `(t*_N, y*_N)`, `c1`, `c2` and the random
//! recentering `r(N, h) = c1 N - c2 log N`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::CumulantEvaluation;
use crate::special::log_cosh_parts;
use crate::thermo::{entropy_for, positive_freezing_root};

/// One sampled field vector `(h_1, ..., h_N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmpiricalField {
    h: Vec<f64>,
    sum_abs: f64,
}

impl From<Vec<f64>> for EmpiricalField {
    fn from(h: Vec<f64>) -> Self {
        EmpiricalField::new(h)
    }
}

impl From<EmpiricalField> for Vec<f64> {
    fn from(f: EmpiricalField) -> Self {
        f.h
    }
}

impl EmpiricalField {
    pub fn new(h: Vec<f64>) -> Self {
        let sum_abs = h.iter().map(|x| x.abs()).sum();
        EmpiricalField { h, sum_abs }
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn sum_abs(&self) -> f64 {
        self.sum_abs
    }

    /// `(1/N) sum |h_i|`, the supremum of `psi_N'`.
    pub fn mean_abs(&self) -> f64 {
        self.sum_abs / self.n() as f64
    }

    /// `psi_N(t) = (1/N) sum log cosh(t h_i)` and its derivatives.
    pub fn cumulants(&self, t: f64) -> CumulantEvaluation {
        let (mut p0, mut p1, mut p2) = (0.0, 0.0, 0.0);
        for &h in &self.h {
            let (lc, th, s2) = log_cosh_parts(t * h);
            p0 += lc;
            p1 += h * th;
            p2 += h * h * s2;
        }
        let inv = 1.0 / self.n() as f64;
        CumulantEvaluation { t, psi: p0 * inv, psi_prime: p1 * inv, psi_double_prime: p2 * inv }
    }

    /// Rounds every `h_i` onto a dyadic grid `2^-k Z` fine enough that every
    /// signed sum `sum ± h_i` is an exactly representable double. Sums of spin
    /// flips then carry no rounding error, whatever the order of updates.
    pub fn quantized(&self) -> EmpiricalField {
        if self.sum_abs == 0.0 {
            return self.clone();
        }
        let magnitude = self.sum_abs.log2().ceil() as i32 + 1;
        let k = (52 - magnitude).min(1020);
        let scale = 2f64.powi(k);
        EmpiricalField::new(self.h.iter().map(|x| (x * scale).round() / scale).collect())
    }

    /// `y_N(sigma) = (1/N) sum h_i sigma_i` for a spin pattern whose bit `i`
    /// is set when `sigma_i = +1`.
    pub fn field_energy(&self, pattern: u64) -> f64 {
        self.h
            .iter()
            .enumerate()
            .map(|(i, &h)| if pattern >> i & 1 == 1 { h } else { -h })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecenteringConstants {
    pub t_star_n: f64,
    pub y_star_n: f64,
    pub c1: f64,
    pub c2: f64,
    /// `c1 N - c2 log N`.
    pub r: f64,
    pub i_n_at_y_star: f64,
}

/// Finite-size constants of one field.
///
/// `t*_N` is the positive root of `t²/2 + t psi_N'(t) - psi_N(t) = log 2`,
/// which is where `S_N(E)` vanishes at its stationary point.
pub fn recentering_constants(field: &EmpiricalField) -> Result<RecenteringConstants> {
    if field.n() == 0 {
        return Err(Error::InvalidSpec("empty field".into()));
    }
    let t = positive_freezing_root(field)?;
    let c = field.cumulants(t);
    let y = c.psi_prime;
    let n = field.n() as f64;
    let c1 = t + y;
    let c2 = 1.0 / (2.0 * t);
    Ok(RecenteringConstants {
        t_star_n: t,
        y_star_n: y,
        c1,
        c2,
        r: c1 * n - c2 * n.ln(),
        i_n_at_y_star: t * y - c.psi,
    })
}

/// `S_N(E) = max_y { log 2 - (E - y)²/2 - I_N(y) }`.
pub fn sn_direct(field: &EmpiricalField, e: f64) -> Result<f64> {
    Ok(entropy_for(field, e)?.s)
}

/// Per-site `P(sigma_i = +1) = e^{t h_i} / (2 cosh t h_i)` under the tilted
/// product measure.
pub fn tilted_spin_probabilities(field: &EmpiricalField, t: f64) -> Result<Vec<f64>> {
    if !t.is_finite() {
        return Err(Error::NonFinite("t"));
    }
    Ok(field.h.iter().map(|&h| 1.0 / (1.0 + (-2.0 * t * h).exp())).collect())
}

/// Draws `draws` configurations from the tilted measure at `t` and returns
/// their field densities `y_N(sigma)`.
pub fn sample_tilted_densities(field: &EmpiricalField, t: f64, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let probs = tilted_spin_probabilities(field, t)?;
    // compare raw 32-bit words against fixed thresholds
    let thresholds: Vec<u64> = probs.iter().map(|p| (p * 4_294_967_296.0).round() as u64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = field.n() as f64;
    Ok((0..draws)
        .map(|_| {
            let mut y = 0.0;
            for (&h, &thr) in field.h.iter().zip(&thresholds) {
                if (rng.next_u32() as u64) < thr {
                    y += h
                } else {
                    y -= h
                }
            }
            y / n
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldModel;
    use crate::rate::rate_i;
    use crate::thermo::ThermoSolution;
    use std::f64::consts::LN_2;

    #[test]
    fn zero_field_gives_rem_constants() {
        let b = (2.0 * LN_2).sqrt();
        for n in [1, 7, 100] {
            let c = recentering_constants(&EmpiricalField::new(vec![0.0; n])).unwrap();
            assert!((c.t_star_n - b).abs() < 1e-12);
            assert_eq!(c.y_star_n, 0.0);
            assert!((c.c1 - b).abs() < 1e-12);
            assert!((c.c2 - 1.0 / (2.0 * b)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_field_matches_asymptotics() {
        let model = FieldModel::point_mass(0.3).unwrap();
        let sol = ThermoSolution::solve(&model).unwrap();
        for n in [4, 50, 1000] {
            let c = recentering_constants(&model.sample(n, 1).unwrap()).unwrap();
            assert!((c.c1 - sol.e_max).abs() < 1e-10);
            assert!((c.t_star_n - sol.beta_c).abs() < 1e-10);
        }
    }

    /// Brute-force S_N by maximizing over a y-grid with the rate function
    /// solved independently at each point.
    fn sn_grid(field: &EmpiricalField, e: f64, step: f64) -> f64 {
        let m = field.mean_abs();
        let mut best = f64::NEG_INFINITY;
        let mut y = -m + step;
        while y < m {
            let i = rate_i(field, y).unwrap();
            best = best.max(LN_2 - 0.5 * (e - y).powi(2) - i);
            y += step;
        }
        best
    }

    #[test]
    fn rademacher_sample_constants() {
        let model = FieldModel::rademacher(0.5, 1.0).unwrap();
        let sol = ThermoSolution::solve(&model).unwrap();
        let field = model.sample(1000, 42).unwrap();
        let c = recentering_constants(&field).unwrap();
        assert!((c.c1 - sol.e_max).abs() < 0.1);
        assert!((c.c1 - (c.y_star_n + c.t_star_n)).abs() < 1e-10);
        let sqrt_form = (2.0 * (LN_2 - c.i_n_at_y_star)).sqrt() + c.y_star_n;
        assert!((c.c1 - sqrt_form).abs() < 1e-10);
        assert!((field.cumulants(c.t_star_n).psi_prime - c.y_star_n).abs() < 1e-12);
        assert!((sn_direct(&field, c.c1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_sample_constants_against_grid_oracle() {
        let model = FieldModel::gaussian(0.0, 1.0).unwrap();
        let field = model.sample(300, 5).unwrap();
        let c = recentering_constants(&field).unwrap();
        // root scan of the grid-maximized S_N in E
        let (mut lo, mut hi) = (c.c1 - 0.01, c.c1 + 0.01);
        assert!(sn_grid(&field, lo, 1e-3) > 0.0 && sn_grid(&field, hi, 1e-3) < 0.0);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if sn_grid(&field, mid, 1e-3) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((0.5 * (lo + hi) - c.c1).abs() < 1e-5);
        assert!((c.c2 - 1.0 / (2.0 * (c.c1 - c.y_star_n))).abs() < 1e-12);
    }

    #[test]
    fn sn_direct_examples() {
        let z = EmpiricalField::new(vec![0.0; 10]);
        assert!((sn_direct(&z, 0.0).unwrap() - LN_2).abs() < 1e-15);
        let c = recentering_constants(&z).unwrap();
        assert!(sn_direct(&z, c.c1).unwrap().abs() < 1e-12);

        let field = FieldModel::rademacher(0.5, 1.0).unwrap().sample(64, 9).unwrap();
        for e in [-1.0, -0.3, 0.0, 0.4, 1.1] {
            let fine = sn_grid(&field, e, 2e-5);
            assert!((sn_direct(&field, e).unwrap() - fine).abs() < 1e-8, "E={e}");
        }
    }

    #[test]
    fn tilted_probabilities() {
        let field = FieldModel::gaussian(0.0, 1.0).unwrap().sample(20, 3).unwrap();
        assert!(tilted_spin_probabilities(&field, 0.0).unwrap().iter().all(|&p| p == 0.5));
        let ones = EmpiricalField::new(vec![1.0; 3]);
        assert!(tilted_spin_probabilities(&ones, 40.0).unwrap().iter().all(|&p| p > 1.0 - 1e-15));
        for (p, h) in tilted_spin_probabilities(&field, 0.7).unwrap().iter().zip(field.h()) {
            assert!(((2.0 * p - 1.0) - (0.7 * h).tanh()).abs() < 1e-15);
        }
        assert!(tilted_spin_probabilities(&field, f64::NAN).is_err());
    }

    #[test]
    fn tilted_mean_matches_y_star() {
        let field = FieldModel::rademacher(0.5, 1.0).unwrap().sample(400, 8).unwrap();
        let c = recentering_constants(&field).unwrap();
        let draws = 100_000;
        let ys = sample_tilted_densities(&field, c.t_star_n, draws, 1).unwrap();
        let mean = ys.iter().sum::<f64>() / draws as f64;
        let var = field.cumulants(c.t_star_n).psi_double_prime;
        let bound = 4.0 * (var / field.n() as f64).sqrt() / (draws as f64).sqrt();
        assert!((mean - c.y_star_n).abs() < bound, "{mean} vs {}", c.y_star_n);
    }

    #[test]
    fn quantization_makes_flip_sums_exact() {
        let field = FieldModel::gaussian(0.1, 2.0).unwrap().sample(30, 4).unwrap().quantized();
        let mut y = field.field_energy(0);
        let mut pattern = 0u64;
        for k in 1u64..5000 {
            let bit = k.trailing_zeros();
            pattern ^= 1 << bit;
            let h = field.h()[bit as usize];
            y += if pattern >> bit & 1 == 1 { 2.0 * h } else { -2.0 * h };
            assert_eq!(y, field.field_energy(pattern));
        }
        let raw = FieldModel::gaussian(0.1, 2.0).unwrap().sample(30, 4).unwrap();
        for (a, b) in raw.h().iter().zip(field.h()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
