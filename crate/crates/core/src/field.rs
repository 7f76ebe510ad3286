//! Laws of a single field variable `h` and exact evaluation of the cumulant
//! function `psi(t) = E[log cosh(t h)]` with its first two derivatives.
//!
//! Every supported law is reduced once, at construction, to a finite set of
//! weighted atoms: exactly for discrete laws, by a composite Gauss–Legendre
//! rule for continuous ones. All expectations are then finite sums over the
//! same atoms, so identities that hold for any probability measure hold to
//! rounding error for the discretized one as well.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::recentering::EmpiricalField;
use crate::special::log_cosh_parts;

pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

/// Doubling the quadrature order must move `psi` by less than this on
/// `t in [-5, 5]`, otherwise a warning is logged.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

/// Gaussian laws are integrated over `mean ± GAUSSIAN_SPAN * stddev`.
const GAUSSIAN_SPAN: f64 = 12.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Zero,
    PointMass { h: f64 },
    /// `P(h = a) = p`, `P(h = -a) = 1 - p`.
    Rademacher { p: f64, a: f64 },
    Gaussian { mean: f64, stddev: f64 },
    Uniform { lo: f64, hi: f64 },
    DiscreteTable { values: Vec<f64>, probs: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct FieldModelRepr {
    #[serde(flatten)]
    kind: FieldKind,
    #[serde(default = "default_order")]
    quadrature_order: usize,
}

fn default_order() -> usize {
    DEFAULT_QUADRATURE_ORDER
}

/// A validated field law together with its atom discretization.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "FieldModelRepr", into = "FieldModelRepr")]
pub struct FieldModel {
    kind: FieldKind,
    quadrature_order: usize,
    values: Vec<f64>,
    weights: Vec<f64>,
    quadrature_error: f64,
}

impl PartialEq for FieldModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.quadrature_order == other.quadrature_order
    }
}

impl TryFrom<FieldModelRepr> for FieldModel {
    type Error = Error;
    fn try_from(r: FieldModelRepr) -> Result<Self> {
        FieldModel::with_order(r.kind, r.quadrature_order)
    }
}

impl From<FieldModel> for FieldModelRepr {
    fn from(m: FieldModel) -> Self {
        FieldModelRepr { kind: m.kind, quadrature_order: m.quadrature_order }
    }
}

/// `(psi, psi', psi'')` at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulantEvaluation {
    pub t: f64,
    pub psi: f64,
    pub psi_prime: f64,
    pub psi_double_prime: f64,
}

impl FieldModel {
    pub fn new(kind: FieldKind) -> Result<Self> {
        Self::with_order(kind, DEFAULT_QUADRATURE_ORDER)
    }

    pub fn with_order(kind: FieldKind, quadrature_order: usize) -> Result<Self> {
        if quadrature_order == 0 {
            return Err(Error::InvalidModel("quadrature_order must be positive".into()));
        }
        validate(&kind)?;
        let (values, weights) = discretize(&kind, quadrature_order);
        let mut model = FieldModel { kind, quadrature_order, values, weights, quadrature_error: 0.0 };
        if model.is_continuous() {
            let (v2, w2) = discretize(&model.kind, 2 * quadrature_order);
            let mut worst: f64 = 0.0;
            for i in -10..=10 {
                let t = 0.5 * i as f64;
                let a = atom_cumulants(&model.values, &model.weights, t).psi;
                let b = atom_cumulants(&v2, &w2, t).psi;
                worst = worst.max((a - b).abs());
            }
            model.quadrature_error = worst;
            if worst >= QUADRATURE_TOLERANCE {
                log::warn!(
                    "quadrature order {quadrature_order} for {:?}: psi changes by {worst:.3e} on doubling",
                    model.kind
                );
            }
        }
        Ok(model)
    }

    pub fn zero() -> Self {
        Self::new(FieldKind::Zero).expect("zero field is valid")
    }

    pub fn point_mass(h: f64) -> Result<Self> {
        Self::new(FieldKind::PointMass { h })
    }

    pub fn rademacher(p: f64, a: f64) -> Result<Self> {
        Self::new(FieldKind::Rademacher { p, a })
    }

    pub fn gaussian(mean: f64, stddev: f64) -> Result<Self> {
        Self::new(FieldKind::Gaussian { mean, stddev })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(FieldKind::Uniform { lo, hi })
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        Self::new(FieldKind::DiscreteTable { values, probs })
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    /// Largest change of `psi` on `t in [-5, 5]` when the quadrature order is
    /// doubled; zero for discrete laws.
    pub fn quadrature_error(&self) -> f64 {
        self.quadrature_error
    }

    pub fn is_continuous(&self) -> bool {
        match self.kind {
            FieldKind::Gaussian { stddev, .. } => stddev > 0.0,
            FieldKind::Uniform { .. } => true,
            _ => false,
        }
    }

    /// Weighted atoms `(value, probability)` representing the law.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.weights.iter().copied())
    }

    /// `E[f(h)]` over the discretized law.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms().map(|(x, w)| w * f(x)).sum()
    }

    /// `psi(t) = E[log cosh(t h)]` and its derivatives.
    pub fn psi(&self, t: f64) -> Result<CumulantEvaluation> {
        if !t.is_finite() {
            return Err(Error::NonFinite("t"));
        }
        Ok(self.cumulants(t))
    }

    pub(crate) fn cumulants(&self, t: f64) -> CumulantEvaluation {
        atom_cumulants(&self.values, &self.weights, t)
    }

    /// `E|h|`, the supremum of `psi'`.
    pub fn mean_abs(&self) -> f64 {
        self.expectation(f64::abs)
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|x| x)
    }

    /// Draws `n` IID field values; a pure function of `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<EmpiricalField> {
        if n == 0 {
            return Err(Error::InvalidSpec("field size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h: Vec<f64> = match &self.kind {
            FieldKind::Zero => vec![0.0; n],
            FieldKind::PointMass { h } => vec![*h; n],
            FieldKind::Rademacher { p, a } => {
                (0..n).map(|_| if rng.random_bool(*p) { *a } else { -*a }).collect()
            }
            FieldKind::Gaussian { mean, stddev } => {
                let d = Normal::new(*mean, *stddev).map_err(|e| Error::InvalidModel(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            FieldKind::Uniform { lo, hi } => {
                let d = Uniform::new(*lo, *hi).map_err(|e| Error::InvalidModel(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            FieldKind::DiscreteTable { values, probs } => {
                let d = WeightedIndex::new(probs).map_err(|e| Error::InvalidModel(e.to_string()))?;
                (0..n).map(|_| values[d.sample(&mut rng)]).collect()
            }
        };
        Ok(EmpiricalField::new(h))
    }
}

/// Free-function forms mirroring the method API.
pub fn psi(model: &FieldModel, t: f64) -> Result<CumulantEvaluation> {
    model.psi(t)
}

pub fn mean_abs(model: &FieldModel) -> f64 {
    model.mean_abs()
}

pub fn sample_field(model: &FieldModel, n: usize, seed: u64) -> Result<EmpiricalField> {
    model.sample(n, seed)
}

fn atom_cumulants(values: &[f64], weights: &[f64], t: f64) -> CumulantEvaluation {
    let (mut p0, mut p1, mut p2) = (0.0, 0.0, 0.0);
    for (&h, &w) in values.iter().zip(weights) {
        let (lc, th, s2) = log_cosh_parts(t * h);
        p0 += w * lc;
        p1 += w * h * th;
        p2 += w * h * h * s2;
    }
    CumulantEvaluation { t, psi: p0, psi_prime: p1, psi_double_prime: p2 }
}

fn validate(kind: &FieldKind) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
    match kind {
        FieldKind::Zero => Ok(()),
        FieldKind::PointMass { h } if !h.is_finite() => bad("point mass must be finite"),
        FieldKind::PointMass { .. } => Ok(()),
        FieldKind::Rademacher { p, a } => {
            if !(*p > 0.0 && *p < 1.0) {
                bad("rademacher p must lie in (0, 1)")
            } else if !(a.is_finite() && *a > 0.0) {
                bad("rademacher magnitude must be positive")
            } else {
                Ok(())
            }
        }
        FieldKind::Gaussian { mean, stddev } => {
            if !mean.is_finite() || !stddev.is_finite() || *stddev < 0.0 {
                bad("gaussian needs finite mean and stddev >= 0")
            } else {
                Ok(())
            }
        }
        FieldKind::Uniform { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                bad("uniform needs finite lo < hi")
            } else {
                Ok(())
            }
        }
        FieldKind::DiscreteTable { values, probs } => {
            if values.is_empty() || values.len() != probs.len() {
                return bad("discrete table needs equally many values and probs");
            }
            if values.iter().any(|v| !v.is_finite()) || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return bad("discrete table entries must be finite with probs >= 0");
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return bad(&format!("discrete probs sum to {total}, not 1"));
            }
            Ok(())
        }
    }
}

fn discretize(kind: &FieldKind, order: usize) -> (Vec<f64>, Vec<f64>) {
    match kind {
        FieldKind::Zero => (vec![0.0], vec![1.0]),
        FieldKind::PointMass { h } => (vec![*h], vec![1.0]),
        FieldKind::Rademacher { p, a } => (vec![*a, -*a], vec![*p, 1.0 - *p]),
        FieldKind::DiscreteTable { values, probs } => (values.clone(), probs.clone()),
        FieldKind::Gaussian { mean, stddev } if *stddev == 0.0 => (vec![*mean], vec![1.0]),
        FieldKind::Gaussian { mean, stddev } => {
            let lo = mean - GAUSSIAN_SPAN * stddev;
            let hi = mean + GAUSSIAN_SPAN * stddev;
            // h = 0 is where log cosh(t h) bends for large t
            let (x, w) = quadrature::composite(lo, hi, &[0.0], stddev.min(1.0), order);
            let norm = 1.0 / (stddev * (2.0 * std::f64::consts::PI).sqrt());
            let w: Vec<f64> = x
                .iter()
                .zip(&w)
                .map(|(x, w)| w * norm * (-0.5 * ((x - mean) / stddev).powi(2)).exp())
                .collect();
            normalized(x, w)
        }
        FieldKind::Uniform { lo, hi } => {
            let (x, w) = quadrature::composite(*lo, *hi, &[0.0], 1.0, order);
            let w = w.iter().map(|w| w / (hi - lo)).collect();
            normalized(x, w)
        }
    }
}

fn normalized(x: Vec<f64>, w: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = w.iter().sum();
    (x, w.into_iter().map(|w| w / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> Vec<FieldModel> {
        vec![
            FieldModel::zero(),
            FieldModel::point_mass(0.3).unwrap(),
            FieldModel::rademacher(0.5, 1.0).unwrap(),
            FieldModel::rademacher(0.8, 0.7).unwrap(),
            FieldModel::gaussian(0.0, 1.0).unwrap(),
            FieldModel::gaussian(0.5, 0.4).unwrap(),
            FieldModel::uniform(-1.0, 1.0).unwrap(),
            FieldModel::uniform(0.2, 2.5).unwrap(),
            FieldModel::discrete(vec![-1.0, 0.5, 2.0], vec![0.25, 0.5, 0.25]).unwrap(),
        ]
    }

    #[test]
    fn zero_field_is_flat() {
        let c = FieldModel::zero().psi(1.5).unwrap();
        assert_eq!((c.psi, c.psi_prime, c.psi_double_prime), (0.0, 0.0, 0.0));
    }

    #[test]
    fn values_at_origin() {
        for m in models() {
            let c = m.psi(0.0).unwrap();
            let second = m.expectation(|x| x * x);
            assert_eq!(c.psi, 0.0);
            // tanh(0) = 0 makes psi'(0) vanish for every law
            assert_eq!(c.psi_prime, 0.0);
            assert!((c.psi_double_prime - second).abs() < 1e-14);
        }
    }

    #[test]
    fn rademacher_at_one() {
        let c = FieldModel::rademacher(0.5, 1.0).unwrap().psi(1.0).unwrap();
        assert!((c.psi - 0.433_780_830_483_027).abs() < 1e-14);
        assert!((c.psi_prime - 0.761_594_155_955_764_9).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_finite_t() {
        assert!(matches!(FieldModel::zero().psi(f64::NAN), Err(Error::NonFinite(_))));
        assert!(FieldModel::zero().psi(f64::INFINITY).is_err());
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(FieldModel::rademacher(0.0, 1.0).is_err());
        assert!(FieldModel::rademacher(0.5, -1.0).is_err());
        assert!(FieldModel::gaussian(0.0, -1.0).is_err());
        assert!(FieldModel::uniform(1.0, 1.0).is_err());
        assert!(FieldModel::discrete(vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(FieldModel::discrete(vec![1.0], vec![0.5, 0.5]).is_err());
        assert!(FieldModel::with_order(FieldKind::Zero, 0).is_err());
    }

    #[test]
    fn mean_abs_examples() {
        assert_eq!(FieldModel::zero().mean_abs(), 0.0);
        assert_eq!(FieldModel::rademacher(0.5, 2.0).unwrap().mean_abs(), 2.0);
        let g = FieldModel::gaussian(0.0, 1.0).unwrap().mean_abs();
        assert!((g - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-13);
        // Uniform(-1, 3): (1 + 9) / 8
        assert!((FieldModel::uniform(-1.0, 3.0).unwrap().mean_abs() - 1.25).abs() < 1e-13);
    }

    #[test]
    fn gaussian_mean_abs_against_monte_carlo() {
        let f = FieldModel::gaussian(0.0, 1.0).unwrap().sample(400_000, 3).unwrap();
        let mc = f.h().iter().map(|x| x.abs()).sum::<f64>() / 400_000.0;
        assert!((mc - FieldModel::gaussian(0.0, 1.0).unwrap().mean_abs()).abs() < 5e-3);
    }

    #[test]
    fn continuous_quadrature_is_converged() {
        for m in models().into_iter().filter(|m| m.is_continuous()) {
            assert!(m.quadrature_error() < QUADRATURE_TOLERANCE, "{:?}: {}", m.kind(), m.quadrature_error());
        }
    }

    #[test]
    fn finite_differences_match_derivatives() {
        let h = 1e-4;
        for m in models() {
            for i in -50..=50 {
                let t = 0.1 * i as f64;
                let c = m.cumulants(t);
                let (up, dn) = (m.cumulants(t + h), m.cumulants(t - h));
                assert!(((up.psi - dn.psi) / (2.0 * h) - c.psi_prime).abs() < 1e-6, "{:?} t={t}", m.kind());
                assert!(
                    ((up.psi_prime - dn.psi_prime) / (2.0 * h) - c.psi_double_prime).abs() < 1e-5,
                    "{:?} t={t}",
                    m.kind()
                );
            }
        }
    }

    #[test]
    fn convexity_bound_and_symmetry() {
        for m in models() {
            let m_abs = m.mean_abs();
            for i in -100..=100 {
                let t = 0.1 * i as f64;
                let c = m.cumulants(t);
                assert!(c.psi_double_prime >= -1e-12);
                if m_abs > 0.0 {
                    assert!(c.psi_prime.abs() < m_abs, "{:?} t={t}", m.kind());
                }
                // log cosh is even, so psi is even for every law
                let r = m.cumulants(-t);
                assert!((r.psi - c.psi).abs() < 1e-14);
                assert!((r.psi_prime + c.psi_prime).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(FieldModel::zero().sample(10, 9).unwrap().h(), &[0.0; 10]);
        assert_eq!(FieldModel::point_mass(0.3).unwrap().sample(4, 1).unwrap().h(), &[0.3; 4]);
        let m = FieldModel::rademacher(0.5, 1.0).unwrap();
        let a = m.sample(1_000_000, 77).unwrap();
        let mean = a.h().iter().sum::<f64>() / 1e6;
        assert!(mean.abs() < 4.0 / 1000.0);
        assert_eq!(a, m.sample(1_000_000, 77).unwrap());
        assert!(m.sample(0, 1).is_err());
    }

    #[test]
    fn serde_tagged_record() {
        let m: FieldModel = serde_json::from_str(r#"{"kind":"rademacher","p":0.5,"a":1.0}"#).unwrap();
        assert_eq!(m, FieldModel::rademacher(0.5, 1.0).unwrap());
        let s = serde_json::to_string(&FieldModel::gaussian(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(s, r#"{"kind":"gaussian","mean":0.0,"stddev":1.0,"quadrature_order":64}"#);
        let bad: std::result::Result<FieldModel, _> = serde_json::from_str(r#"{"kind":"uniform","lo":1,"hi":0}"#);
        assert!(bad.is_err());
    }
}
