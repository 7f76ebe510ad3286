mod common;

use common::{naive, with_threads};
use remfield::enumerate::{MAX_TOP_K, MAX_SPINS};
use remfield::{energy_at, run_replica, Error, FieldModel, ReplicaRecord, ReplicaSpec, ThermoSolution};

fn betas() -> Vec<f64> {
    let bc = ThermoSolution::solve(&FieldModel::rademacher(0.5, 1.0).unwrap()).unwrap().beta_c;
    vec![0.25, 0.5, bc, 1.5 * bc, 2.0 * bc]
}

fn spec(model: FieldModel, n: usize, seed: u64, top_k: usize) -> ReplicaSpec {
    let mut s = ReplicaSpec::new(model, n, seed, seed ^ 0xABCD, betas());
    s.top_k = top_k;
    s.entropy_grid = (-8..=8).map(|k| k as f64 * 0.2).collect();
    s
}

fn check_against_oracle(s: &ReplicaSpec) {
    let rec = run_replica(s).unwrap();
    let o = naive(s);
    for (a, b) in rec.log_z.iter().zip(&o.log_z) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "n={}: {a} vs {b}", s.n);
    }
    let top: Vec<(f64, u64)> = rec.top.iter().map(|t| (t.energy, t.pattern)).collect();
    assert_eq!(top, o.top, "n={}", s.n);
    assert_eq!(rec.window_count, o.window_count);
    assert_eq!(rec.entropy_counts, o.entropy_counts);
    assert_eq!((rec.max_energy, rec.max_pattern), o.top[0]);
}

#[test]
fn small_replicas_match_the_oracle() {
    for n in [4, 5, 9, 12] {
        check_against_oracle(&spec(FieldModel::rademacher(0.3, 1.2).unwrap(), n, n as u64, 50));
        check_against_oracle(&spec(FieldModel::gaussian(-0.4, 1.1).unwrap(), n, 7 * n as u64, 50));
        check_against_oracle(&spec(FieldModel::zero(), n, 3, 50));
    }
}

#[test]
fn multi_chunk_replica_matches_the_oracle() {
    check_against_oracle(&spec(FieldModel::uniform(-1.0, 2.0).unwrap(), 18, 99, 300));
}

#[test]
fn thread_count_does_not_change_the_record() {
    let s = spec(FieldModel::gaussian(0.0, 1.0).unwrap(), 19, 5, 200);
    let one = with_threads(1, || run_replica(&s).unwrap());
    let eight = with_threads(8, || run_replica(&s).unwrap());
    assert_eq!(one, eight);
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&eight).unwrap());
}

#[test]
fn energy_at_reproduces_every_configuration() {
    let s = spec(FieldModel::gaussian(0.3, 0.8).unwrap(), 10, 21, 16);
    let o = naive(&s);
    for (p, &e) in o.energies.iter().enumerate() {
        assert_eq!(energy_at(&s, p as u64).unwrap(), e);
    }
    let rec = run_replica(&s).unwrap();
    for t in &rec.top {
        assert_eq!(energy_at(&s, t.pattern).unwrap(), t.energy);
    }
    assert!(matches!(energy_at(&s, 1 << 10), Err(Error::Index { .. })));
}

#[test]
fn weights_and_overlaps_are_normalized() {
    let s = spec(FieldModel::rademacher(0.5, 1.0).unwrap(), 14, 8, 256);
    let rec = run_replica(&s).unwrap();
    for (j, w) in rec.gibbs_top_weights.iter().enumerate() {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let bins = &rec.overlap_samples[j];
        assert_eq!(bins.len(), 15);
        assert!((bins.iter().map(|b| b.weight).sum::<f64>() - 1.0).abs() < 1e-12);
        let sq: f64 = w.iter().map(|x| x * x).sum();
        assert!((bins[14].weight - sq).abs() < 1e-12);
        assert_eq!(bins[14].overlap, 1.0);
        assert_eq!(bins[0].overlap, -1.0);
        assert!(rec.log_z_top[j] <= rec.log_z[j] + 1e-12);
    }
}

/// At `beta >= 1.5 beta_c` the top-1024 truncated partition function holds
/// all but `1e-6` of a 4096-state recomputation.
#[test]
fn truncation_mass_at_low_temperature() {
    let model = FieldModel::rademacher(0.5, 1.0).unwrap();
    let mut worst: f64 = 1.0;
    for n in [16, 20] {
        for seed in 0..3 {
            let a = run_replica(&spec(model.clone(), n, seed, 1024)).unwrap();
            let b = run_replica(&spec(model.clone(), n, seed, MAX_TOP_K)).unwrap();
            for j in 3..5 {
                worst = worst.min((a.log_z_top[j] - b.log_z_top[j]).exp());
            }
        }
    }
    assert!(worst >= 1.0 - 1e-6, "captured fraction {worst}");
}

#[test]
fn record_survives_a_json_round_trip() {
    let rec = run_replica(&spec(FieldModel::gaussian(0.0, 2.0).unwrap(), 11, 2, 64)).unwrap();
    let back: ReplicaRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn invalid_specs_are_rejected() {
    let model = FieldModel::zero();
    assert!(matches!(run_replica(&spec(model.clone(), MAX_SPINS + 1, 1, 10)), Err(Error::Resource(31))));
    assert!(matches!(run_replica(&spec(model.clone(), 3, 1, 10)), Err(Error::InvalidSpec(_))));
    assert!(matches!(run_replica(&spec(model.clone(), 8, 1, 0)), Err(Error::InvalidSpec(_))));
    let mut s = spec(model, 8, 1, 10);
    s.betas = vec![-1.0];
    assert!(matches!(run_replica(&s), Err(Error::InvalidSpec(_))));
}

#[test]
fn zero_field_entropy_at_the_band_centre() {
    let mut s = ReplicaSpec::new(FieldModel::zero(), 24, 17, 18, vec![1.0]);
    s.entropy_grid = vec![0.0];
    let rec = run_replica(&s).unwrap();
    let s0 = rec.empirical_entropy(0.0).unwrap();
    assert!((s0 - std::f64::consts::LN_2).abs() <= 0.05, "{s0}");
    assert!(s0 < std::f64::consts::LN_2);
}
