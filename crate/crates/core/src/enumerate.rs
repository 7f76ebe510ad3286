//! Exact enumeration of all `2^n` configurations of one disorder replica.
//!
//! `H(sigma) = X(sigma) + Y(sigma)` where `X(sigma) ~ N(0, n)` is drawn from a
//! counter-based stream keyed by the spin pattern and `Y(sigma) = sum h_i
//! sigma_i`. Configurations are visited in Gray-code order, so `Y` changes by
//! `±2 h_i` per step. The index range is cut into fixed chunks that are swept
//! independently (possibly in parallel) and merged in chunk order, which keeps
//! the record bit-identical whatever the thread count.
//!
//! Spin patterns are `n`-bit words; bit `i` set means `sigma_i = +1`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counter::GaussianStream;
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::recentering::{recentering_constants, EmpiricalField, RecenteringConstants};

pub const MIN_SPINS: usize = 4;
pub const MAX_SPINS: usize = 30;
pub const MAX_TOP_K: usize = 4096;
pub const DEFAULT_TOP_K: usize = 1024;
pub const DEFAULT_DELTA: f64 = 2.0;

/// Configurations per independently swept chunk.
const CHUNK_BITS: usize = 16;

/// Terms below `exp(-LSE_CUTOFF)` of the running maximum are dropped from the
/// streaming log-sum-exp; at most `2^30 e^-50 ~ 2e-13` relative.
const LSE_CUTOFF: f64 = 50.0;

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSpec {
    pub model: FieldModel,
    pub n: usize,
    pub seed_field: u64,
    pub seed_energy: u64,
    pub betas: Vec<f64>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub entropy_grid: Vec<f64>,
}

impl ReplicaSpec {
    pub fn new(model: FieldModel, n: usize, seed_field: u64, seed_energy: u64, betas: Vec<f64>) -> Self {
        ReplicaSpec {
            model,
            n,
            seed_field,
            seed_energy,
            betas,
            top_k: DEFAULT_TOP_K,
            delta: DEFAULT_DELTA,
            entropy_grid: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n > MAX_SPINS {
            return Err(Error::Resource(self.n));
        }
        if self.n < MIN_SPINS {
            return Err(Error::InvalidSpec(format!("n = {} is below {MIN_SPINS}", self.n)));
        }
        if self.betas.is_empty() {
            return Err(Error::InvalidSpec("betas must not be empty".into()));
        }
        if self.betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidSpec("betas must be positive and finite".into()));
        }
        if self.top_k == 0 || self.top_k > MAX_TOP_K {
            return Err(Error::InvalidSpec(format!("top_k = {} outside [1, {MAX_TOP_K}]", self.top_k)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidSpec("delta must be positive".into()));
        }
        if self.entropy_grid.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidSpec("entropy grid must be finite".into()));
        }
        Ok(())
    }

    /// The replica's field, rounded so that Gray-code updates are exact.
    pub fn field(&self) -> Result<EmpiricalField> {
        Ok(self.model.sample(self.n, self.seed_field)?.quantized())
    }

    fn stream(&self) -> GaussianStream {
        GaussianStream::new(self.seed_energy, (self.n as f64).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopEntry {
    pub energy: f64,
    pub recentered: f64,
    pub pattern: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapBin {
    pub overlap: f64,
    pub weight: f64,
}

/// Summary of one enumerated replica. Per-beta vectors follow `betas`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    #[serde(default)]
    pub replica: u64,
    pub n: usize,
    pub seed_field: u64,
    pub seed_energy: u64,
    pub field: Vec<f64>,
    pub constants: RecenteringConstants,
    pub betas: Vec<f64>,
    pub max_energy: f64,
    pub max_pattern: u64,
    pub recentered_max: f64,
    pub top: Vec<TopEntry>,
    pub log_z: Vec<f64>,
    /// `log` of the partition function restricted to `top`.
    pub log_z_top: Vec<f64>,
    pub delta: f64,
    /// Configurations with `H - r` in `[-delta, delta]`.
    pub window_count: u64,
    pub gibbs_top_weights: Vec<Vec<f64>>,
    /// Weighted overlap law over ordered pairs of `top`, one bin per attainable
    /// overlap value `-1, -1 + 2/n, ..., 1`.
    pub overlap_samples: Vec<Vec<OverlapBin>>,
    pub entropy_grid: Vec<f64>,
    /// Configurations with `H` in `[E n, E n + sqrt(n)]` per grid point.
    pub entropy_counts: Vec<u64>,
}

impl ReplicaRecord {
    pub fn beta_index(&self, beta: f64) -> Result<usize> {
        self.betas
            .iter()
            .position(|&b| (b - beta).abs() <= 1e-12 * beta.abs().max(1.0))
            .ok_or(Error::UnknownBeta(beta))
    }

    /// `(1/n) log Z_n(beta)`.
    pub fn empirical_free_energy(&self, beta: f64) -> Result<f64> {
        Ok(self.log_z[self.beta_index(beta)?] / self.n as f64)
    }

    /// `(1/n) log #{sigma : H in [E n, E n + sqrt(n)]}`.
    pub fn empirical_entropy(&self, e: f64) -> Result<f64> {
        let j = self
            .entropy_grid
            .iter()
            .position(|&g| (g - e).abs() <= 1e-12 * e.abs().max(1.0))
            .ok_or_else(|| Error::InvalidSpec(format!("E = {e} is not on the entropy grid")))?;
        match self.entropy_counts[j] {
            0 => Err(Error::EmptyBin(e)),
            c => Ok((c as f64).ln() / self.n as f64),
        }
    }
}

pub fn empirical_free_energy(record: &ReplicaRecord, beta: f64) -> Result<f64> {
    record.empirical_free_energy(beta)
}

pub fn empirical_entropy(record: &ReplicaRecord, e: f64) -> Result<f64> {
    record.empirical_entropy(e)
}

/// `H(sigma)` for one configuration, recomputed from the seeds alone. Equals
/// the value used by the sweep bit for bit.
pub fn energy_at(spec: &ReplicaSpec, config_index: u64) -> Result<f64> {
    spec.validate()?;
    if config_index >> spec.n != 0 {
        return Err(Error::Index { index: config_index, n: spec.n });
    }
    let field = spec.field()?;
    Ok(spec.stream().at(config_index) + field.field_energy(config_index))
}

/// Visits the Gray-code steps `start..end`, calling `visit(pattern, Y)`.
/// `doubled[i] = 2 h_i`; `y0` is `Y` of the first visited pattern.
#[inline]
pub(crate) fn gray_sweep(doubled: &[f64], start: u64, end: u64, y0: f64, mut visit: impl FnMut(u64, f64)) {
    if start >= end {
        return;
    }
    let mut pattern = start ^ (start >> 1);
    let mut y = y0;
    let mut k = start;
    loop {
        visit(pattern, y);
        k += 1;
        if k == end {
            break;
        }
        let bit = k.trailing_zeros();
        pattern ^= 1 << bit;
        let step = doubled[bit as usize];
        if pattern >> bit & 1 == 1 {
            y += step
        } else {
            y -= step
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    energy: f64,
    pattern: u64,
}

impl Candidate {
    fn rank(&self, other: &Self) -> Ordering {
        self.energy.total_cmp(&other.energy).then(self.pattern.cmp(&other.pattern))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// reversed, so BinaryHeap keeps the weakest retained candidate on top
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other.rank(self)
    }
}

struct SweepPlan {
    doubled: Vec<f64>,
    field: EmpiricalField,
    stream: GaussianStream,
    betas: Vec<f64>,
    top_k: usize,
    window: (f64, f64),
    /// Sorted `E n` and `E n + sqrt(n)` with the grid index they came from.
    lows: Vec<f64>,
    low_origin: Vec<usize>,
    highs: Vec<f64>,
    high_origin: Vec<usize>,
}

struct Partial {
    best: Candidate,
    top: BinaryHeap<Candidate>,
    lse_max: Vec<f64>,
    lse_sum: Vec<f64>,
    window: u64,
    low_buckets: Vec<u64>,
    high_buckets: Vec<u64>,
}

impl Partial {
    fn new(plan: &SweepPlan) -> Self {
        Partial {
            best: Candidate { energy: f64::NEG_INFINITY, pattern: 0 },
            top: BinaryHeap::with_capacity(plan.top_k + 1),
            lse_max: vec![f64::NEG_INFINITY; plan.betas.len()],
            lse_sum: vec![0.0; plan.betas.len()],
            window: 0,
            low_buckets: vec![0; plan.lows.len() + 1],
            high_buckets: vec![0; plan.highs.len() + 1],
        }
    }

    #[inline]
    fn push_top(&mut self, c: Candidate, cap: usize) {
        if self.top.len() < cap {
            self.top.push(c);
        } else if let Some(mut weakest) = self.top.peek_mut() {
            if c.rank(&weakest) == Ordering::Greater {
                *weakest = c;
            }
        }
    }

    #[inline]
    fn observe(&mut self, plan: &SweepPlan, energy: f64, pattern: u64, floor: &mut f64) {
        let c = Candidate { energy, pattern };
        if c.rank(&self.best) == Ordering::Greater {
            self.best = c;
        }
        if energy >= *floor {
            self.push_top(c, plan.top_k);
            if self.top.len() == plan.top_k {
                *floor = self.top.peek().map_or(f64::NEG_INFINITY, |w| w.energy);
            }
        }
        for ((beta, m), s) in plan.betas.iter().zip(self.lse_max.iter_mut()).zip(self.lse_sum.iter_mut()) {
            let x = beta * energy;
            if x > *m {
                *s = *s * (*m - x).exp() + 1.0;
                *m = x;
            } else if x > *m - LSE_CUTOFF {
                *s += (x - *m).exp();
            }
        }
        if energy >= plan.window.0 && energy <= plan.window.1 {
            self.window += 1;
        }
        if !plan.lows.is_empty() {
            self.low_buckets[plan.lows.partition_point(|&l| l <= energy)] += 1;
            self.high_buckets[plan.highs.partition_point(|&u| u < energy)] += 1;
        }
    }

    fn merge(mut self, other: Partial, cap: usize) -> Partial {
        if other.best.rank(&self.best) == Ordering::Greater {
            self.best = other.best;
        }
        for c in other.top {
            self.push_top(c, cap);
        }
        for j in 0..self.lse_max.len() {
            let (ma, mb) = (self.lse_max[j], other.lse_max[j]);
            let m = ma.max(mb);
            if m == f64::NEG_INFINITY {
                continue;
            }
            self.lse_sum[j] = self.lse_sum[j] * (ma - m).exp() + other.lse_sum[j] * (mb - m).exp();
            self.lse_max[j] = m;
        }
        self.window += other.window;
        for (a, b) in self.low_buckets.iter_mut().zip(&other.low_buckets) {
            *a += b;
        }
        for (a, b) in self.high_buckets.iter_mut().zip(&other.high_buckets) {
            *a += b;
        }
        self
    }
}

fn sweep_chunk(plan: &SweepPlan, start: u64, end: u64) -> Partial {
    let mut partial = Partial::new(plan);
    let mut floor = f64::NEG_INFINITY;
    let y0 = plan.field.field_energy(start ^ (start >> 1));
    let stream = plan.stream;
    gray_sweep(&plan.doubled, start, end, y0, |pattern, y| {
        let energy = stream.at(pattern) + y;
        partial.observe(plan, energy, pattern, &mut floor);
    });
    partial
}

/// Enumerates all `2^n` configurations of one replica.
///
/// Runs on the current rayon pool; the result does not depend on its size.
pub fn run_replica(spec: &ReplicaSpec) -> Result<ReplicaRecord> {
    spec.validate()?;
    let n = spec.n;
    let field = spec.field()?;
    let constants = recentering_constants(&field)?;

    let sqrt_n = (n as f64).sqrt();
    let mut lows: Vec<(f64, usize)> = spec.entropy_grid.iter().enumerate().map(|(j, e)| (e * n as f64, j)).collect();
    let mut highs: Vec<(f64, usize)> = lows.iter().map(|&(l, j)| (l + sqrt_n, j)).collect();
    lows.sort_by(|a, b| a.0.total_cmp(&b.0));
    highs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let plan = SweepPlan {
        doubled: field.h().iter().map(|h| 2.0 * h).collect(),
        stream: spec.stream(),
        betas: spec.betas.clone(),
        top_k: spec.top_k,
        window: (constants.r - spec.delta, constants.r + spec.delta),
        lows: lows.iter().map(|p| p.0).collect(),
        low_origin: lows.iter().map(|p| p.1).collect(),
        highs: highs.iter().map(|p| p.0).collect(),
        high_origin: highs.iter().map(|p| p.1).collect(),
        field,
    };

    let total = 1u64 << n;
    let chunk = 1u64 << CHUNK_BITS.min(n);
    let chunks = total / chunk;
    let partials: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|c| sweep_chunk(&plan, c * chunk, (c + 1) * chunk))
        .collect();
    let merged = partials
        .into_iter()
        .reduce(|a, b| a.merge(b, plan.top_k))
        .expect("at least one chunk");

    Ok(finish(spec, &plan, constants, merged))
}

fn finish(spec: &ReplicaSpec, plan: &SweepPlan, constants: RecenteringConstants, merged: Partial) -> ReplicaRecord {
    let n = spec.n;
    let mut top: Vec<Candidate> = merged.top.into_vec();
    top.sort_by(|a, b| b.rank(a));
    let entries: Vec<TopEntry> = top
        .iter()
        .map(|c| TopEntry { energy: c.energy, recentered: c.energy - constants.r, pattern: c.pattern })
        .collect();

    let log_z: Vec<f64> = merged.lse_max.iter().zip(&merged.lse_sum).map(|(m, s)| m + s.ln()).collect();

    let e0 = entries[0].energy;
    let mut log_z_top = Vec::with_capacity(spec.betas.len());
    let mut gibbs = Vec::with_capacity(spec.betas.len());
    for &beta in &spec.betas {
        let raw: Vec<f64> = entries.iter().map(|t| (beta * (t.energy - e0)).exp()).collect();
        let total: f64 = raw.iter().sum();
        log_z_top.push(beta * e0 + total.ln());
        gibbs.push(raw.into_iter().map(|w| w / total).collect::<Vec<f64>>());
    }

    // bins indexed by the number of agreeing spins
    let mut bins = vec![vec![0.0; n + 1]; spec.betas.len()];
    for a in 0..entries.len() {
        for (bin, w) in bins.iter_mut().zip(&gibbs) {
            bin[n] += w[a] * w[a];
        }
        for b in a + 1..entries.len() {
            let agree = n - (entries[a].pattern ^ entries[b].pattern).count_ones() as usize;
            for (bin, w) in bins.iter_mut().zip(&gibbs) {
                bin[agree] += 2.0 * w[a] * w[b];
            }
        }
    }
    let overlap_samples = bins
        .into_iter()
        .map(|bin| {
            bin.into_iter()
                .enumerate()
                .map(|(agree, weight)| OverlapBin { overlap: (2.0 * agree as f64 - n as f64) / n as f64, weight })
                .collect()
        })
        .collect();

    let mut entropy_counts = vec![0u64; spec.entropy_grid.len()];
    if !plan.lows.is_empty() {
        // suffix sums: configurations with H >= lows[k] and H > highs[k]
        let at_least: Vec<u64> = suffix_counts(&merged.low_buckets);
        let above: Vec<u64> = suffix_counts(&merged.high_buckets);
        for (k, &j) in plan.low_origin.iter().enumerate() {
            entropy_counts[j] += at_least[k + 1];
        }
        for (k, &j) in plan.high_origin.iter().enumerate() {
            entropy_counts[j] -= above[k + 1];
        }
    }

    ReplicaRecord {
        replica: 0,
        n,
        seed_field: spec.seed_field,
        seed_energy: spec.seed_energy,
        field: plan.field.h().to_vec(),
        constants,
        betas: spec.betas.clone(),
        max_energy: merged.best.energy,
        max_pattern: merged.best.pattern,
        recentered_max: merged.best.energy - constants.r,
        top: entries,
        log_z,
        log_z_top,
        delta: spec.delta,
        window_count: merged.window,
        gibbs_top_weights: gibbs,
        overlap_samples,
        entropy_grid: spec.entropy_grid.clone(),
        entropy_counts,
    }
}

/// `out[k] = sum of buckets[k..]`.
fn suffix_counts(buckets: &[u64]) -> Vec<u64> {
    let mut out = vec![0; buckets.len() + 1];
    for k in (0..buckets.len()).rev() {
        out[k] = out[k + 1] + buckets[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(model: FieldModel, n: usize) -> ReplicaSpec {
        let mut s = ReplicaSpec::new(model, n, 17, 23, vec![0.5, 1.0, 2.0]);
        s.top_k = 64;
        s
    }

    #[test]
    fn gray_sweep_visits_every_pattern_once() {
        for n in [1usize, 4, 9, 16] {
            let total = 1u64 << n;
            let mut seen = vec![0u8; total as usize];
            let h: Vec<f64> = (0..n).map(|i| 0.5 + i as f64).collect();
            let field = EmpiricalField::new(h.clone());
            let doubled: Vec<f64> = h.iter().map(|x| 2.0 * x).collect();
            let mut parity = 0u64;
            // split into uneven pieces to exercise segment seeding
            let cuts = [0, total / 3, total / 2, total];
            for w in cuts.windows(2) {
                let y0 = field.field_energy(w[0] ^ (w[0] >> 1));
                gray_sweep(&doubled, w[0], w[1], y0, |p, y| {
                    seen[p as usize] += 1;
                    parity ^= p;
                    assert_eq!(y, field.field_energy(p));
                });
            }
            assert!(seen.iter().all(|&c| c == 1));
            assert_eq!(parity, (0..total).fold(0, |a, b| a ^ b));
        }
    }

    #[test]
    fn validation() {
        let z = FieldModel::zero();
        assert!(matches!(run_replica(&spec(z.clone(), 31)), Err(Error::Resource(31))));
        assert!(matches!(run_replica(&spec(z.clone(), 3)), Err(Error::InvalidSpec(_))));
        let mut s = spec(z.clone(), 6);
        s.betas.clear();
        assert!(matches!(run_replica(&s), Err(Error::InvalidSpec(_))));
        let mut s = spec(z.clone(), 6);
        s.top_k = 5000;
        assert!(run_replica(&s).is_err());
        assert!(matches!(energy_at(&spec(z, 6), 64), Err(Error::Index { .. })));
    }

    #[test]
    fn tiny_zero_field_log_z() {
        let s = spec(FieldModel::zero(), 4);
        let rec = run_replica(&s).unwrap();
        for (j, &beta) in s.betas.iter().enumerate() {
            let naive: f64 = (0..16).map(|i| (beta * energy_at(&s, i).unwrap()).exp()).sum::<f64>().ln();
            assert!((rec.log_z[j] - naive).abs() < 1e-12);
        }
        assert_eq!(rec.top.len(), 16);
        assert_eq!(rec.overlap_samples[0].len(), 5);
    }

    #[test]
    fn zero_field_energy_is_the_gaussian_draw() {
        let s = spec(FieldModel::zero(), 8);
        let all_up = (1u64 << 8) - 1;
        assert_eq!(energy_at(&s, all_up).unwrap(), s.stream().at(all_up));
    }

    #[test]
    fn neighbours_differ_by_twice_the_field() {
        let s = spec(FieldModel::gaussian(0.0, 1.0).unwrap(), 10);
        let field = s.field().unwrap();
        let x = s.stream();
        for idx in [0u64, 5, 777, 1023] {
            for i in 0..10 {
                let nb = idx ^ (1 << i);
                let dy = (energy_at(&s, nb).unwrap() - x.at(nb)) - (energy_at(&s, idx).unwrap() - x.at(idx));
                let expect = if nb >> i & 1 == 1 { 2.0 * field.h()[i] } else { -2.0 * field.h()[i] };
                assert!((dy - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dominant_field_aligns_the_ground_state() {
        let s = spec(FieldModel::point_mass(1e6).unwrap(), 8);
        let rec = run_replica(&s).unwrap();
        assert_eq!(rec.max_pattern, 255);
        assert_eq!(rec.top[0].pattern, 255);
    }

    #[test]
    fn weights_are_normalized_and_concentrate() {
        let mut s = spec(FieldModel::rademacher(0.5, 1.0).unwrap(), 12);
        s.betas = vec![1.0, 2.0, 4.0, 8.0];
        let rec = run_replica(&s).unwrap();
        let mut prev = 0.0;
        for (w, ov) in rec.gibbs_top_weights.iter().zip(&rec.overlap_samples) {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((ov.iter().map(|b| b.weight).sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w[0] >= prev);
            prev = w[0];
        }
        for b in &rec.overlap_samples[0] {
            let k = (b.overlap * 12.0 + 12.0) / 2.0;
            assert!((k - k.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn record_accessors() {
        let mut s = spec(FieldModel::zero(), 8);
        s.entropy_grid = vec![0.0, 5.0];
        let rec = run_replica(&s).unwrap();
        assert!(rec.empirical_free_energy(1.0).is_ok());
        assert!(matches!(rec.empirical_free_energy(1.5), Err(Error::UnknownBeta(_))));
        assert!(rec.empirical_entropy(0.0).unwrap() > 0.0);
        assert!(matches!(rec.empirical_entropy(5.0), Err(Error::EmptyBin(_))));
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(serde_json::from_str::<ReplicaRecord>(&line).unwrap(), rec);
    }
}
