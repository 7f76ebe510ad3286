//! Full-materialization oracle for small replicas.

#![allow(dead_code)]

use remfield::counter::GaussianStream;
use remfield::{recentering_constants, ReplicaSpec};

pub struct Naive {
    /// Indexed by spin pattern.
    pub energies: Vec<f64>,
    pub log_z: Vec<f64>,
    /// `(energy, pattern)`, highest first.
    pub top: Vec<(f64, u64)>,
    pub window_count: u64,
    pub entropy_counts: Vec<u64>,
}

pub fn naive(spec: &ReplicaSpec) -> Naive {
    let n = spec.n;
    let field = spec.field().unwrap();
    let stream = GaussianStream::new(spec.seed_energy, (n as f64).sqrt());
    let energies: Vec<f64> = (0..1u64 << n)
        .map(|p| {
            let y: f64 = field
                .h()
                .iter()
                .enumerate()
                .map(|(i, &h)| if p >> i & 1 == 1 { h } else { -h })
                .sum();
            stream.at(p) + y
        })
        .collect();

    let log_z = spec
        .betas
        .iter()
        .map(|&b| {
            let m = energies.iter().map(|e| b * e).fold(f64::NEG_INFINITY, f64::max);
            m + energies.iter().map(|e| (b * e - m).exp()).sum::<f64>().ln()
        })
        .collect();

    let mut all: Vec<(f64, u64)> = energies.iter().copied().zip(0u64..).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
    all.truncate(spec.top_k);

    let r = recentering_constants(&field).unwrap().r;
    let (lo, hi) = (r - spec.delta, r + spec.delta);
    let window_count = energies.iter().filter(|&&e| e >= lo && e <= hi).count() as u64;

    let sqrt_n = (n as f64).sqrt();
    let entropy_counts = spec
        .entropy_grid
        .iter()
        .map(|&g| {
            let low = g * n as f64;
            let high = low + sqrt_n;
            energies.iter().filter(|&&e| e >= low && e <= high).count() as u64
        })
        .collect();

    Naive { energies, log_z, top: all, window_count, entropy_counts }
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}
