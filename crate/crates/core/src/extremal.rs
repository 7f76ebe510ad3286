//! Replica aggregation and the limiting extremal process.
//!
//! The recentered extremal energies `H - r` of a replica are compared with a
//! Poisson process of intensity `C exp(-beta_c z) dz`. Its maximum has CDF
//! `exp(-(C/beta_c) exp(-beta_c x))`; normalized Gibbs weights `exp(beta z_i)`
//! of its points follow a Poisson-Dirichlet law of parameter `beta_c/beta`.
//!
//! Every test accepts plain [`ReplicaRecord`]s. [`reference_record`] builds such
//! records from the limiting process itself, which is how the statistics are
//! checked against their own null.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::enumerate::{OverlapBin, ReplicaRecord, TopEntry};
use crate::error::{Error, Result};
use crate::recentering::RecenteringConstants;
use crate::thermo::ThermoSolution;

pub const MIN_REPLICAS: usize = 100;
/// Asymptotic Kolmogorov-Smirnov coefficients: `D > coeff / sqrt(R)` rejects.
pub const KS_COEFF_5: f64 = 1.36;
pub const KS_COEFF_1: f64 = 1.63;
/// Poisson-Dirichlet realizations behind the third-moment reference.
pub const PD_REFERENCE_DRAWS: usize = 20_000;
/// Leading points kept per Poisson-Dirichlet realization; the rest enter the
/// normalizer through their expected sum.
pub const PD_REFERENCE_POINTS: usize = 1024;
const PD_REFERENCE_SEED: u64 = 0x5EED_0F_9D_2024;
/// Expected number of points above the floor of a reference record.
pub const REFERENCE_EXPECTED_POINTS: f64 = 4096.0;

pub fn ks_critical_5(replicas: usize) -> f64 {
    KS_COEFF_5 / (replicas as f64).sqrt()
}

pub fn ks_critical_1(replicas: usize) -> f64 {
    KS_COEFF_1 / (replicas as f64).sqrt()
}

/// One-sample Kolmogorov-Smirnov distance. NaNs are rejected by the caller.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / m).max((i + 1) as f64 / m - f)
    })
}

/// CDF of the largest point of the limiting process.
pub fn max_cdf(thermo: &ThermoSolution, x: f64) -> f64 {
    (-(thermo.c_intensity / thermo.beta_c) * (-thermo.beta_c * x).exp()).exp()
}

/// Inverse of [`max_cdf`].
pub fn max_quantile(thermo: &ThermoSolution, p: f64) -> f64 {
    ((thermo.c_intensity / thermo.beta_c).ln() - (-p.ln()).ln()) / thermo.beta_c
}

/// Expected number of points in `[a, b]`.
pub fn predicted_window_mean(thermo: &ThermoSolution, a: f64, b: f64) -> f64 {
    let k = thermo.c_intensity / thermo.beta_c;
    k * ((-thermo.beta_c * a).exp() - (-thermo.beta_c * b).exp())
}

/// Level above which the limiting process has `expected` points on average.
pub fn reference_floor(thermo: &ThermoSolution, expected: f64) -> f64 {
    -(thermo.beta_c * expected / thermo.c_intensity).ln() / thermo.beta_c
}

/// `E_max n - log(n) / (2 beta_c)`: the recentering with the field law in
/// place of the sampled field.
pub fn deterministic_recentering(thermo: &ThermoSolution, n: usize) -> f64 {
    let n = n as f64;
    thermo.e_max * n - n.ln() / (2.0 * thermo.beta_c)
}

fn require(records: usize) -> Result<()> {
    if records < MIN_REPLICAS {
        return Err(Error::InsufficientReplicas { needed: MIN_REPLICAS, got: records });
    }
    Ok(())
}

fn require_frozen(thermo: &ThermoSolution, beta: f64) -> Result<()> {
    if !(beta > thermo.beta_c) {
        return Err(Error::BetaBelowCritical { beta, beta_c: thermo.beta_c });
    }
    Ok(())
}

/// Mean and unbiased variance.
fn mean_var(xs: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.len();
    let mean = xs.iter().sum::<f64>() / m as f64;
    let var = if m > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64
    } else {
        0.0
    };
    (mean, var, m)
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelReport {
    pub ks_distance: f64,
    pub n_replicas: usize,
    /// Empirical minus predicted median of the recentered maximum.
    pub location_check: f64,
    pub critical_5: f64,
    pub critical_1: f64,
}

impl GumbelReport {
    pub fn passes_5(&self) -> bool {
        self.ks_distance < self.critical_5
    }

    pub fn passes_1(&self) -> bool {
        self.ks_distance < self.critical_1
    }
}

/// KS test of recentered maxima against [`max_cdf`].
pub fn gumbel_test_values(maxima: &[f64], thermo: &ThermoSolution) -> Result<GumbelReport> {
    require(maxima.len())?;
    if maxima.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("recentered maximum"));
    }
    let r = maxima.len();
    Ok(GumbelReport {
        ks_distance: ks_distance(maxima, |x| max_cdf(thermo, x)),
        n_replicas: r,
        location_check: median(maxima) - max_quantile(thermo, 0.5),
        critical_5: ks_critical_5(r),
        critical_1: ks_critical_1(r),
    })
}

pub fn gumbel_test(records: &[ReplicaRecord], thermo: &ThermoSolution) -> Result<GumbelReport> {
    let maxima: Vec<f64> = records.iter().map(|r| r.recentered_max).collect();
    gumbel_test_values(&maxima, thermo)
}

/// The same test with each maximum shifted by [`deterministic_recentering`]
/// instead of the replica's own `r`.
pub fn deterministic_gumbel_test(records: &[ReplicaRecord], thermo: &ThermoSolution) -> Result<GumbelReport> {
    let maxima: Vec<f64> = records
        .iter()
        .map(|r| r.max_energy - deterministic_recentering(thermo, r.n))
        .collect();
    gumbel_test_values(&maxima, thermo)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonReport {
    pub window: [f64; 2],
    pub n_replicas: usize,
    pub mean_count: f64,
    pub var_count: f64,
    /// `var / mean`; absent when no replica had a point in the window.
    pub dispersion: Option<f64>,
    pub predicted_mean: f64,
    pub std_error: f64,
}

impl PoissonReport {
    pub fn dispersion_within(&self, lo: f64, hi: f64) -> bool {
        self.dispersion.is_some_and(|d| d >= lo && d <= hi)
    }

    pub fn mean_within_standard_errors(&self, k: f64) -> bool {
        (self.mean_count - self.predicted_mean).abs() <= k * self.std_error
    }
}

/// Points of one record with `H - r` in `[a, b]`.
///
/// The default window `[-delta, delta]` is counted over all configurations;
/// any other window is counted from the top list, which must reach below `a`.
pub fn window_count(record: &ReplicaRecord, a: f64, b: f64) -> Result<u64> {
    let tol = 1e-12 * record.delta.max(1.0);
    if (a + record.delta).abs() <= tol && (b - record.delta).abs() <= tol {
        return Ok(record.window_count);
    }
    let truncated = (record.top.len() as u128) < (1u128 << record.n);
    if truncated && record.top.last().is_none_or(|t| t.recentered >= a) {
        return Err(Error::WindowNotCovered { a, b });
    }
    Ok(record.top.iter().filter(|t| t.recentered >= a && t.recentered <= b).count() as u64)
}

pub fn poisson_counts_test(counts: &[u64], thermo: &ThermoSolution, window: [f64; 2]) -> Result<PoissonReport> {
    require(counts.len())?;
    let [a, b] = window;
    if !(a < b) {
        return Err(Error::InvalidSpec(format!("window [{a}, {b}] is empty")));
    }
    let (mean, var, r) = mean_var(counts.iter().map(|&c| c as f64));
    Ok(PoissonReport {
        window,
        n_replicas: r,
        mean_count: mean,
        var_count: var,
        dispersion: (mean > 0.0).then(|| var / mean),
        predicted_mean: predicted_window_mean(thermo, a, b),
        std_error: (var / r as f64).sqrt(),
    })
}

pub fn poisson_window_test(records: &[ReplicaRecord], thermo: &ThermoSolution, window: [f64; 2]) -> Result<PoissonReport> {
    require(records.len())?;
    let counts = records
        .iter()
        .map(|r| window_count(r, window[0], window[1]))
        .collect::<Result<Vec<u64>>>()?;
    poisson_counts_test(&counts, thermo, window)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdReport {
    pub beta: f64,
    pub n_replicas: usize,
    pub mean_sum_sq: f64,
    pub std_error: f64,
    /// `1 - beta_c / beta`.
    pub predicted: f64,
    pub mean_sum_cube: f64,
    pub cube_std_error: f64,
    /// Simulated mean of the sum of cubed weights.
    pub predicted_cube: f64,
    pub predicted_cube_std_error: f64,
}

impl PdReport {
    pub fn within_standard_errors(&self, k: f64) -> bool {
        (self.mean_sum_sq - self.predicted).abs() <= k * self.std_error
    }

    pub fn within(&self, tol: f64) -> bool {
        (self.mean_sum_sq - self.predicted).abs() <= tol
    }

    /// Third moment against its simulated reference, combining both errors.
    pub fn cube_within_standard_errors(&self, k: f64) -> bool {
        let se = self.cube_std_error.hypot(self.predicted_cube_std_error);
        (self.mean_sum_cube - self.predicted_cube).abs() <= k * se
    }
}

/// Normalized weights of the leading `points` atoms of a Poisson-Dirichlet
/// law with parameter `alpha`, built from the arrival times `G_k` of a unit
/// Poisson process as `G_k^(-1/alpha)`.
///
/// The discarded atoms contribute their expected sum
/// `G_K^(1 - 1/alpha) alpha / (1 - alpha)` to the normalizer.
pub fn pd_weights<R: Rng + ?Sized>(alpha: f64, points: usize, rng: &mut R) -> Vec<f64> {
    assert!(alpha > 0.0 && alpha < 1.0 && points > 0);
    let inv = 1.0 / alpha;
    let mut gamma = 0.0;
    let mut raw = Vec::with_capacity(points);
    for _ in 0..points {
        let e: f64 = Exp1.sample(rng);
        gamma += e;
        raw.push(gamma.powf(-inv));
    }
    let tail = gamma.powf(1.0 - inv) * alpha / (1.0 - alpha);
    let total = raw.iter().sum::<f64>() + tail;
    raw.iter_mut().for_each(|w| *w /= total);
    raw
}

/// Simulated means and standard errors of the second and third power sums.
pub fn pd_reference_moments(alpha: f64, draws: usize, seed: u64) -> ((f64, f64), (f64, f64)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sq = Vec::with_capacity(draws);
    let mut cube = Vec::with_capacity(draws);
    for _ in 0..draws {
        let w = pd_weights(alpha, PD_REFERENCE_POINTS, &mut rng);
        sq.push(w.iter().map(|x| x * x).sum::<f64>());
        cube.push(w.iter().map(|x| x * x * x).sum::<f64>());
    }
    let (ms, vs, _) = mean_var(sq);
    let (mc, vc, _) = mean_var(cube);
    let d = draws as f64;
    ((ms, (vs / d).sqrt()), (mc, (vc / d).sqrt()))
}

pub fn pd_moment_test(records: &[ReplicaRecord], thermo: &ThermoSolution, beta: f64) -> Result<PdReport> {
    require_frozen(thermo, beta)?;
    require(records.len())?;
    let mut sq = Vec::with_capacity(records.len());
    let mut cube = Vec::with_capacity(records.len());
    for r in records {
        let w = &r.gibbs_top_weights[r.beta_index(beta)?];
        sq.push(w.iter().map(|x| x * x).sum::<f64>());
        cube.push(w.iter().map(|x| x * x * x).sum::<f64>());
    }
    let (ms, vs, m) = mean_var(sq);
    let (mc, vc, _) = mean_var(cube);
    let alpha = thermo.beta_c / beta;
    let (_, (pc, pc_se)) = pd_reference_moments(alpha, PD_REFERENCE_DRAWS, PD_REFERENCE_SEED);
    Ok(PdReport {
        beta,
        n_replicas: m,
        mean_sum_sq: ms,
        std_error: (vs / m as f64).sqrt(),
        predicted: 1.0 - alpha,
        mean_sum_cube: mc,
        cube_std_error: (vc / m as f64).sqrt(),
        predicted_cube: pc,
        predicted_cube_std_error: pc_se,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub beta: f64,
    pub tol: f64,
    pub q: f64,
    pub n_replicas: usize,
    pub mass_near_q: f64,
    pub mass_near_1: f64,
    /// `beta_c / beta`, the atom at `q`.
    pub predicted_q: f64,
    /// `1 - beta_c / beta`, the atom at 1.
    pub predicted_1: f64,
}

impl OverlapReport {
    pub fn mass_near_atoms(&self) -> f64 {
        self.mass_near_q + self.mass_near_1
    }

    pub fn masses_within(&self, tol: f64) -> bool {
        (self.mass_near_q - self.predicted_q).abs() <= tol && (self.mass_near_1 - self.predicted_1).abs() <= tol
    }
}

/// Replica-averaged overlap mass within `tol` of `q` and of 1. A bin close to
/// both atoms counts for the nearer one.
pub fn overlap_atoms_test(records: &[ReplicaRecord], thermo: &ThermoSolution, beta: f64, tol: f64) -> Result<OverlapReport> {
    require_frozen(thermo, beta)?;
    if records.is_empty() {
        return Err(Error::InsufficientReplicas { needed: 1, got: 0 });
    }
    let q = thermo.q;
    let (mut near_q, mut near_1) = (0.0, 0.0);
    for r in records {
        for bin in &r.overlap_samples[r.beta_index(beta)?] {
            let (dq, d1) = ((bin.overlap - q).abs(), (bin.overlap - 1.0).abs());
            if dq <= tol && dq <= d1 {
                near_q += bin.weight;
            } else if d1 <= tol {
                near_1 += bin.weight;
            }
        }
    }
    let m = records.len() as f64;
    let alpha = thermo.beta_c / beta;
    Ok(OverlapReport {
        beta,
        tol,
        q,
        n_replicas: records.len(),
        mass_near_q: near_q / m,
        mass_near_1: near_1 / m,
        predicted_q: alpha,
        predicted_1: 1.0 - alpha,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalReport {
    pub gumbel: GumbelReport,
    /// Gumbel test under [`deterministic_recentering`].
    pub deterministic_control: GumbelReport,
    pub poisson: PoissonReport,
    pub pd: Vec<PdReport>,
    pub overlap: Vec<OverlapReport>,
}

/// All tests; the Poisson-Dirichlet and overlap tests run at every recorded
/// beta above `beta_c`.
pub fn extremal_report(records: &[ReplicaRecord], thermo: &ThermoSolution, window: [f64; 2], overlap_tol: f64) -> Result<ExtremalReport> {
    let gumbel = gumbel_test(records, thermo)?;
    let betas: Vec<f64> = records[0].betas.iter().copied().filter(|&b| b > thermo.beta_c).collect();
    Ok(ExtremalReport {
        gumbel,
        deterministic_control: deterministic_gumbel_test(records, thermo)?,
        poisson: poisson_window_test(records, thermo, window)?,
        pd: betas.iter().map(|&b| pd_moment_test(records, thermo, b)).collect::<Result<_>>()?,
        overlap: betas
            .iter()
            .map(|&b| overlap_atoms_test(records, thermo, b, overlap_tol))
            .collect::<Result<_>>()?,
    })
}

/// One realization of the limiting process above `floor`, sorted descending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProcess {
    pub floor: f64,
    pub points: Vec<f64>,
}

impl ReferenceProcess {
    pub fn max(&self) -> Option<f64> {
        self.points.first().copied()
    }

    pub fn count_in(&self, a: f64, b: f64) -> usize {
        self.points.iter().filter(|&&z| z >= a && z <= b).count()
    }

    /// `exp(beta z_i)` normalized over all points, the part below the floor
    /// entering through its expected sum `C exp((beta - beta_c) floor) / (beta - beta_c)`.
    pub fn gibbs_weights(&self, thermo: &ThermoSolution, beta: f64) -> Result<Vec<f64>> {
        require_frozen(thermo, beta)?;
        let Some(top) = self.max() else {
            return Ok(Vec::new());
        };
        let gap = beta - thermo.beta_c;
        let raw: Vec<f64> = self.points.iter().map(|z| (beta * (z - top)).exp()).collect();
        let tail = thermo.c_intensity / gap * (gap * self.floor - beta * top).exp();
        let total = raw.iter().sum::<f64>() + tail;
        Ok(raw.into_iter().map(|w| w / total).collect())
    }
}

pub fn sample_reference_process(thermo: &ThermoSolution, seed: u64, floor: f64) -> Result<ReferenceProcess> {
    if !floor.is_finite() {
        return Err(Error::NonFinite("floor"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = (thermo.c_intensity / thermo.beta_c) * (-thermo.beta_c * floor).exp();
    let count = if mean > 0.0 {
        let poisson = Poisson::new(mean).map_err(|e| Error::InvalidSpec(format!("reference intensity: {e}")))?;
        poisson.sample(&mut rng) as usize
    } else {
        0
    };
    let offset = Exp::new(thermo.beta_c).map_err(|e| Error::InvalidSpec(format!("reference rate: {e}")))?;
    let mut points: Vec<f64> = (0..count).map(|_| floor + offset.sample(&mut rng)).collect();
    points.sort_by(|a, b| b.total_cmp(a));
    Ok(ReferenceProcess { floor, points })
}

/// Shape of the records produced by [`reference_record`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceShape {
    pub n: usize,
    pub betas: Vec<f64>,
    pub top_k: usize,
    pub delta: f64,
}

/// A record whose extremal content is one realization of the limiting
/// process: `recentered` values are its points, Gibbs weights are exact
/// Poisson-Dirichlet weights, distinct points have overlap `q`.
///
/// Fields describing the finite system (`field`, `log_z`, entropy counts) are
/// left empty or zero. Weights at `beta <= beta_c` are zero.
pub fn reference_record(thermo: &ThermoSolution, shape: &ReferenceShape, seed: u64) -> Result<ReplicaRecord> {
    let floor = reference_floor(thermo, REFERENCE_EXPECTED_POINTS).min(-shape.delta - 1.0);
    let process = sample_reference_process(thermo, seed, floor)?;
    let n = shape.n as f64;
    let c1 = thermo.e_max;
    let c2 = 1.0 / (2.0 * thermo.beta_c);
    let r = c1 * n - c2 * n.ln();
    let constants = RecenteringConstants {
        t_star_n: thermo.t_star,
        y_star_n: thermo.y_star,
        c1,
        c2,
        r,
        i_n_at_y_star: std::f64::consts::LN_2 - 0.5 * thermo.beta_c * thermo.beta_c,
    };
    let kept = process.points.len().min(shape.top_k);
    let top: Vec<TopEntry> = process.points[..kept]
        .iter()
        .enumerate()
        .map(|(i, &z)| TopEntry { energy: z + r, recentered: z, pattern: i as u64 })
        .collect();
    let mut gibbs = Vec::with_capacity(shape.betas.len());
    let mut overlaps = Vec::with_capacity(shape.betas.len());
    for &beta in &shape.betas {
        let w = if beta > thermo.beta_c {
            let mut w = process.gibbs_weights(thermo, beta)?;
            w.truncate(kept);
            w
        } else {
            vec![0.0; kept]
        };
        let sq: f64 = w.iter().map(|x| x * x).sum();
        overlaps.push(vec![
            OverlapBin { overlap: thermo.q, weight: if beta > thermo.beta_c { 1.0 - sq } else { 0.0 } },
            OverlapBin { overlap: 1.0, weight: sq },
        ]);
        gibbs.push(w);
    }
    let max = process.max().unwrap_or(f64::NEG_INFINITY);
    Ok(ReplicaRecord {
        replica: 0,
        n: shape.n,
        seed_field: 0,
        seed_energy: seed,
        field: Vec::new(),
        constants,
        betas: shape.betas.clone(),
        max_energy: max + r,
        max_pattern: 0,
        recentered_max: max,
        top,
        log_z: vec![0.0; shape.betas.len()],
        log_z_top: vec![0.0; shape.betas.len()],
        delta: shape.delta,
        window_count: process.count_in(-shape.delta, shape.delta) as u64,
        gibbs_top_weights: gibbs,
        overlap_samples: overlaps,
        entropy_grid: Vec::new(),
        entropy_counts: Vec::new(),
    })
}

/// `replicas` reference records with seeds split from `seed`.
pub fn reference_records(thermo: &ThermoSolution, shape: &ReferenceShape, replicas: usize, seed: u64) -> Result<Vec<ReplicaRecord>> {
    (0..replicas as u64)
        .map(|i| {
            let mut rec = reference_record(thermo, shape, crate::counter::split_seed(seed, i))?;
            rec.replica = i;
            Ok(rec)
        })
        .collect()
}
