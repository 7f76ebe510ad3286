//! Experiment configuration and the operations behind the command line.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! thermo.json  records.jsonl  report.json  tables/*.csv
//! ```
//!
//! Replica `r` uses `seed_field = split_seed(master_seed, 2r)` and
//! `seed_energy = split_seed(master_seed, 2r + 1)`, so any replica can be
//! rerun alone with [`ExperimentConfig::replica_spec`].

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counter::split_seed;
use crate::enumerate::{run_replica, ReplicaRecord, ReplicaSpec, DEFAULT_DELTA, DEFAULT_TOP_K};
use crate::error::{Error, Result};
use crate::extremal::{
    extremal_report, window_count, ExtremalReport, OverlapReport, PdReport,
};
use crate::field::{FieldKind, FieldModel};
use crate::recentering::{recentering_constants, RecenteringConstants};
use crate::thermo::ThermoSolution;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const THERMO_FILE: &str = "thermo.json";
pub const REPORT_FILE: &str = "report.json";
pub const TABLES_DIR: &str = "tables";

/// An inverse temperature, either absolute or a multiple of `beta_c`.
///
/// Written as a number or as a string such as `"beta_c"`, `"1.5*beta_c"` or
/// `"2bc"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BetaRepr", into = "BetaRepr")]
pub enum BetaSpec {
    Absolute(f64),
    TimesCritical(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BetaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<BetaRepr> for BetaSpec {
    type Error = Error;

    fn try_from(r: BetaRepr) -> Result<Self> {
        match r {
            BetaRepr::Number(b) => Ok(BetaSpec::Absolute(b)),
            BetaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<BetaSpec> for BetaRepr {
    fn from(b: BetaSpec) -> Self {
        match b {
            BetaSpec::Absolute(v) => BetaRepr::Number(v),
            BetaSpec::TimesCritical(k) => BetaRepr::Text(format!("{k}*beta_c")),
        }
    }
}

impl std::str::FromStr for BetaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::Config(format!("cannot read inverse temperature {s:?}"));
        for suffix in ["beta_c", "bc"] {
            if let Some(head) = t.strip_suffix(suffix) {
                let head = head.trim().trim_end_matches('*').trim();
                let k = if head.is_empty() { 1.0 } else { head.parse().map_err(|_| bad())? };
                return Ok(BetaSpec::TimesCritical(k));
            }
        }
        t.parse().map(BetaSpec::Absolute).map_err(|_| bad())
    }
}

impl BetaSpec {
    pub fn resolve(&self, beta_c: f64) -> f64 {
        match *self {
            BetaSpec::Absolute(b) => b,
            BetaSpec::TimesCritical(k) => k * beta_c,
        }
    }
}

/// `{0.25, 0.5, beta_c, 1.5 beta_c, 2 beta_c}`.
pub fn default_betas() -> Vec<BetaSpec> {
    vec![
        BetaSpec::Absolute(0.25),
        BetaSpec::Absolute(0.5),
        BetaSpec::TimesCritical(1.0),
        BetaSpec::TimesCritical(1.5),
        BetaSpec::TimesCritical(2.0),
    ]
}

fn default_model() -> FieldModel {
    FieldModel::rademacher(0.5, 1.0).expect("valid law")
}

fn default_n() -> usize {
    16
}

fn default_replicas() -> usize {
    100
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_entropy_points() -> usize {
    13
}

fn default_overlap_tol() -> f64 {
    0.1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_model")]
    pub model: FieldModel,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_betas")]
    pub betas: Vec<BetaSpec>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Empty: `entropy_points` values spread over the middle 60% of
    /// `[E_min, E_max]`.
    #[serde(default)]
    pub entropy_grid: Vec<f64>,
    #[serde(default = "default_entropy_points")]
    pub entropy_points: usize,
    /// Poisson window; defaults to `[-delta, delta]`.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_overlap_tol")]
    pub overlap_tol: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all keys have defaults")
    }
}

/// Command-line values that replace the matching configuration keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<FieldModel>,
    pub n: Option<usize>,
    pub replicas: Option<usize>,
    pub master_seed: Option<u64>,
    pub betas: Option<Vec<BetaSpec>>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.model {
            self.model = v;
        }
        if let Some(v) = o.n {
            self.n = v;
        }
        if let Some(v) = o.replicas {
            self.replicas = v;
        }
        if let Some(v) = o.master_seed {
            self.master_seed = v;
        }
        if let Some(v) = o.betas {
            self.betas = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = o.output_dir {
            self.output_dir = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.entropy_grid.is_empty() && self.entropy_points == 0 {
            return Err(Error::Config("entropy_points must be positive".into()));
        }
        if !(self.overlap_tol > 0.0) {
            return Err(Error::Config("overlap_tol must be positive".into()));
        }
        if let Some([a, b]) = self.window {
            if !(a < b) {
                return Err(Error::Config(format!("window [{a}, {b}] is empty")));
            }
        }
        self.replica_spec(0, &self.thermo()?).map_err(|e| Error::Config(e.to_string()))?.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn thermo(&self) -> Result<ThermoSolution> {
        ThermoSolution::solve(&self.model)
    }

    pub fn resolved_betas(&self, thermo: &ThermoSolution) -> Vec<f64> {
        self.betas.iter().map(|b| b.resolve(thermo.beta_c)).collect()
    }

    pub fn resolved_entropy_grid(&self, thermo: &ThermoSolution) -> Vec<f64> {
        if !self.entropy_grid.is_empty() {
            return self.entropy_grid.clone();
        }
        let width = thermo.e_max - thermo.e_min;
        let (lo, hi) = (thermo.e_min + 0.2 * width, thermo.e_max - 0.2 * width);
        let m = self.entropy_points;
        if m == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
    }

    pub fn window(&self) -> [f64; 2] {
        self.window.unwrap_or([-self.delta, self.delta])
    }

    pub fn replica_seeds(&self, replica: u64) -> (u64, u64) {
        (split_seed(self.master_seed, 2 * replica), split_seed(self.master_seed, 2 * replica + 1))
    }

    pub fn replica_spec(&self, replica: u64, thermo: &ThermoSolution) -> Result<ReplicaSpec> {
        let (seed_field, seed_energy) = self.replica_seeds(replica);
        let spec = ReplicaSpec {
            model: self.model.clone(),
            n: self.n,
            seed_field,
            seed_energy,
            betas: self.resolved_betas(thermo),
            top_k: self.top_k,
            delta: self.delta,
            entropy_grid: self.resolved_entropy_grid(thermo),
        };
        Ok(spec)
    }

    pub fn records_path(&self) -> PathBuf {
        self.output_dir.join(RECORDS_FILE)
    }

    fn tables(&self) -> Result<PathBuf> {
        let dir = self.output_dir.join(TABLES_DIR);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

/// Reads a field law from JSON or from shorthand: `zero`, `point:H`,
/// `rademacher:P,A`, `gaussian:MEAN,SD`, `uniform:LO,HI`.
pub fn parse_model(text: &str) -> Result<FieldModel> {
    let t = text.trim();
    if t.starts_with('{') {
        return serde_json::from_str(t).map_err(|e| Error::Config(format!("model: {e}")));
    }
    let (name, args) = t.split_once(':').unwrap_or((t, ""));
    let nums: Vec<f64> = if args.trim().is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| Error::Config(format!("model: bad number {a:?}"))))
            .collect::<Result<_>>()?
    };
    let kind = match (name.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
        ("zero", []) => FieldKind::Zero,
        ("point" | "point_mass", [h]) => FieldKind::PointMass { h: *h },
        ("rademacher", [p, a]) => FieldKind::Rademacher { p: *p, a: *a },
        ("gaussian", [mean, stddev]) => FieldKind::Gaussian { mean: *mean, stddev: *stddev },
        ("uniform", [lo, hi]) => FieldKind::Uniform { lo: *lo, hi: *hi },
        _ => return Err(Error::Config(format!("unrecognized model {text:?}"))),
    };
    FieldModel::new(kind).map_err(|e| Error::Config(e.to_string()))
}

/// Comma-separated inverse temperatures.
pub fn parse_betas(text: &str) -> Result<Vec<BetaSpec>> {
    text.split(',').map(str::parse).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub free_energy: f64,
    pub gibbs_variational: f64,
    pub fractional_bound: f64,
    pub m_star: f64,
}

/// `f(beta)`, its variational form and the fractional-moment bound on a grid.
pub fn thermo_curve(model: &FieldModel, thermo: &ThermoSolution, betas: &[f64]) -> Result<Vec<CurvePoint>> {
    betas
        .iter()
        .map(|&beta| {
            let bound = thermo.fractional_bound(model, beta)?;
            Ok(CurvePoint {
                beta,
                free_energy: thermo.free_energy(model, beta),
                gibbs_variational: thermo.gibbs_variational(model, beta)?.value,
                fractional_bound: bound.value,
                m_star: bound.m_star,
            })
        })
        .collect()
}

/// 120 points on `(0, 3 beta_c]`.
pub fn curve_grid(thermo: &ThermoSolution) -> Vec<f64> {
    (1..=120).map(|i| 3.0 * thermo.beta_c * i as f64 / 120.0).collect()
}

fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut s = String::from("beta,free_energy,gibbs_variational,fractional_bound,m_star\n");
    for p in curve {
        let _ = writeln!(s, "{},{},{},{},{}", p.beta, p.free_energy, p.gibbs_variational, p.fractional_bound, p.m_star);
    }
    fs::write(path, s)?;
    Ok(())
}

/// Solves the asymptotics; writes `thermo.json` and `tables/free_energy.csv`.
pub fn cmd_thermo(config: &ExperimentConfig) -> Result<ThermoSolution> {
    let thermo = config.thermo()?;
    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join(THERMO_FILE), serde_json::to_string_pretty(&thermo)?)?;
    let curve = thermo_curve(&config.model, &thermo, &curve_grid(&thermo))?;
    write_curve(&config.tables()?.join("free_energy.csv"), &curve)?;
    Ok(thermo)
}

/// Fractional-moment bound over the curve grid, written to `tables/bound.csv`.
pub fn cmd_bound(config: &ExperimentConfig) -> Result<Vec<CurvePoint>> {
    let thermo = config.thermo()?;
    let curve = thermo_curve(&config.model, &thermo, &curve_grid(&thermo))?;
    write_curve(&config.tables()?.join("bound.csv"), &curve)?;
    Ok(curve)
}

/// Finite-size constants of replica 0's field.
pub fn cmd_recenter(config: &ExperimentConfig) -> Result<RecenteringConstants> {
    let thermo = config.thermo()?;
    recentering_constants(&config.replica_spec(0, &thermo)?.field()?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulateSummary {
    pub path: PathBuf,
    pub written: usize,
    pub skipped: usize,
}

/// Valid records already on disk. A damaged final line, as left by an
/// interrupted write, is cut off; damage anywhere else is an error.
fn recover_records(path: &Path) -> Result<Vec<ReplicaRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let bytes = fs::read(path)?;
    let mut records = Vec::new();
    let mut good_len = 0usize;
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while offset < bytes.len() {
        line_no += 1;
        let end = bytes[offset..].iter().position(|&b| b == b'\n').map(|p| offset + p);
        let line = &bytes[offset..end.unwrap_or(bytes.len())];
        let parsed = serde_json::from_slice::<ReplicaRecord>(line);
        match (parsed, end) {
            (Ok(r), Some(e)) => {
                records.push(r);
                offset = e + 1;
                good_len = offset;
            }
            (_, None) => break,
            (Err(_), Some(_)) if line.iter().all(u8::is_ascii_whitespace) => {
                offset = end.map_or(bytes.len(), |e| e + 1);
                good_len = offset;
            }
            (Err(e), Some(_)) => {
                return Err(Error::Parse { path: path.to_path_buf(), line: line_no, msg: e.to_string() });
            }
        }
    }
    if good_len < bytes.len() {
        log::warn!("{}: dropping incomplete final line {line_no}", path.display());
        OpenOptions::new().write(true).open(path)?.set_len(good_len as u64)?;
    }
    Ok(records)
}

/// Runs the missing replicas and appends them to `records.jsonl` in replica
/// order. Already present indices are kept, so an interrupted run resumes.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<SimulateSummary> {
    config.validate()?;
    let thermo = config.thermo()?;
    fs::create_dir_all(&config.output_dir)?;
    let path = config.records_path();
    let existing = recover_records(&path)?;
    let mut present = BTreeSet::new();
    for r in &existing {
        let (sf, se) = config.replica_seeds(r.replica);
        if r.n != config.n || r.seed_field != sf || r.seed_energy != se {
            return Err(Error::Config(format!(
                "{} holds replica {} from a different configuration",
                path.display(),
                r.replica
            )));
        }
        present.insert(r.replica);
    }
    let pending: Vec<u64> = (0..config.replicas as u64).filter(|r| !present.contains(r)).collect();
    let skipped = config.replicas - pending.len();
    if pending.is_empty() {
        return Ok(SimulateSummary { path, written: 0, skipped });
    }
    let specs = pending
        .iter()
        .map(|&r| config.replica_spec(r, &thermo))
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
    let total = pending.len();
    let every = (total / 20).max(1);
    let mut written = 0;
    // batches of `workers` replicas; each batch is appended in replica order
    for (indices, batch) in pending.chunks(config.workers).zip(specs.chunks(config.workers)) {
        let records: Vec<ReplicaRecord> = pool.install(|| batch.par_iter().map(run_replica).collect::<Result<_>>())?;
        for (mut rec, &replica) in records.into_iter().zip(indices) {
            rec.replica = replica;
            let mut line = serde_json::to_string(&rec)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            written += 1;
            if written % every == 0 || written == total {
                eprintln!("simulate: {}/{} replicas", written + skipped, config.replicas);
            }
        }
        file.flush()?;
    }
    Ok(SimulateSummary { path, written, skipped })
}

/// Parses a JSON-lines record file; blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<ReplicaRecord>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Verdict { name: name.into(), status: if pass { Status::Pass } else { Status::Fail }, detail }
    }

    fn skip(name: &str, detail: &str) -> Self {
        Verdict { name: name.into(), status: Status::Skip, detail: detail.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub e: f64,
    pub s: f64,
    /// Replica 0; `None` for an empty bin.
    pub empirical: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyRow {
    pub beta: f64,
    pub f: f64,
    pub mean_f_n: f64,
    pub std_error: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub thermo: ThermoSolution,
    pub extremal: ExtremalReport,
    pub entropy: Vec<EntropyRow>,
    pub free_energy: Vec<FreeEnergyRow>,
    pub verdicts: Vec<Verdict>,
}

impl AnalysisReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for v in &self.verdicts {
            let tag = match v.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skip => "SKIP",
            };
            let _ = writeln!(s, "{tag} {}: {}", v.name, v.detail);
        }
        s
    }
}

/// Replicas averaged in the free-energy comparison.
pub const FREE_ENERGY_REPLICAS: usize = 20;
pub const ENTROPY_TOLERANCE: f64 = 0.05;
pub const FREE_ENERGY_TOLERANCE: f64 = 0.1;
pub const PD_TOLERANCE: f64 = 0.05;
pub const OVERLAP_MASS: f64 = 0.9;
pub const OVERLAP_TOLERANCE: f64 = 0.07;
pub const CONTROL_FACTOR: f64 = 3.0;

pub fn entropy_table(model: &FieldModel, record: &ReplicaRecord) -> Result<Vec<EntropyRow>> {
    record
        .entropy_grid
        .iter()
        .map(|&e| {
            let s = crate::thermo::entropy_s(model, e)?.s;
            let empirical = match record.empirical_entropy(e) {
                Ok(v) => Some(v),
                Err(Error::EmptyBin(_)) => None,
                Err(err) => return Err(err),
            };
            Ok(EntropyRow { e, s, empirical })
        })
        .collect()
}

pub fn free_energy_table(model: &FieldModel, thermo: &ThermoSolution, records: &[ReplicaRecord]) -> Result<Vec<FreeEnergyRow>> {
    let used = &records[..records.len().min(FREE_ENERGY_REPLICAS)];
    records[0]
        .betas
        .iter()
        .map(|&beta| {
            let vals = used.iter().map(|r| r.empirical_free_energy(beta)).collect::<Result<Vec<f64>>>()?;
            let m = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / m;
            let var = if vals.len() > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
            Ok(FreeEnergyRow {
                beta,
                f: thermo.free_energy(model, beta),
                mean_f_n: mean,
                std_error: (var / m).sqrt(),
                replicas: vals.len(),
            })
        })
        .collect()
}

fn at_double_critical<'a, T>(items: &'a [T], beta: impl Fn(&T) -> f64, beta_c: f64) -> Option<&'a T> {
    items.iter().find(|x| (beta(x) - 2.0 * beta_c).abs() <= 1e-9 * beta_c)
}

fn verdicts(report: &ExtremalReport, entropy: &[EntropyRow], free: &[FreeEnergyRow], thermo: &ThermoSolution) -> Vec<Verdict> {
    let mut out = Vec::new();
    if entropy.is_empty() {
        out.push(Verdict::skip("entropy", "no entropy grid recorded"));
    } else {
        let worst = entropy
            .iter()
            .map(|r| r.empirical.map_or(f64::INFINITY, |v| (v - r.s).abs()))
            .fold(0.0, f64::max);
        out.push(Verdict::new("entropy", worst <= ENTROPY_TOLERANCE, format!("max |S_n - S| = {worst:.4} (tol {ENTROPY_TOLERANCE})")));
    }
    let worst = free.iter().map(|r| (r.mean_f_n - r.f).abs()).fold(0.0, f64::max);
    out.push(Verdict::new(
        "free_energy",
        worst <= FREE_ENERGY_TOLERANCE,
        format!("max |f_n - f| = {worst:.4} over {} replicas (tol {FREE_ENERGY_TOLERANCE})", free.first().map_or(0, |r| r.replicas)),
    ));
    let g = &report.gumbel;
    out.push(Verdict::new("gumbel", g.passes_1(), format!("KS = {:.4} (1% critical {:.4})", g.ks_distance, g.critical_1)));
    let c = &report.deterministic_control;
    out.push(Verdict::new(
        "gumbel_control",
        c.ks_distance >= CONTROL_FACTOR * c.critical_1,
        format!("KS = {:.4} under deterministic recentering (needs >= {:.4})", c.ks_distance, CONTROL_FACTOR * c.critical_1),
    ));
    let p = &report.poisson;
    out.push(Verdict::new(
        "poisson",
        p.dispersion_within(0.8, 1.2) && p.mean_within_standard_errors(3.0),
        format!(
            "dispersion = {} mean = {:.4} predicted = {:.4} se = {:.4}",
            p.dispersion.map_or("n/a".into(), |d| format!("{d:.4}")),
            p.mean_count,
            p.predicted_mean,
            p.std_error
        ),
    ));
    match at_double_critical(&report.pd, |r: &PdReport| r.beta, thermo.beta_c) {
        Some(pd) => out.push(Verdict::new(
            "poisson_dirichlet",
            pd.within(PD_TOLERANCE),
            format!("mean sum w^2 = {:.4} predicted = {:.4} (tol {PD_TOLERANCE})", pd.mean_sum_sq, pd.predicted),
        )),
        None => out.push(Verdict::skip("poisson_dirichlet", "2 beta_c not among the recorded betas")),
    }
    match at_double_critical(&report.overlap, |r: &OverlapReport| r.beta, thermo.beta_c) {
        Some(ov) => out.push(Verdict::new(
            "overlap",
            ov.mass_near_atoms() >= OVERLAP_MASS && ov.masses_within(OVERLAP_TOLERANCE),
            format!(
                "mass near q = {:.4} (predicted {:.4}), near 1 = {:.4} (predicted {:.4}), total {:.4}",
                ov.mass_near_q,
                ov.predicted_q,
                ov.mass_near_1,
                ov.predicted_1,
                ov.mass_near_atoms()
            ),
        )),
        None => out.push(Verdict::skip("overlap", "2 beta_c not among the recorded betas")),
    }
    out
}

fn write_tables(dir: &Path, records: &[ReplicaRecord], report: &AnalysisReport, thermo: &ThermoSolution, window: [f64; 2]) -> Result<()> {
    let mut s = String::from("e,s,empirical\n");
    for r in &report.entropy {
        let _ = writeln!(s, "{},{},{}", r.e, r.s, r.empirical.map_or(String::new(), |v| v.to_string()));
    }
    fs::write(dir.join("entropy.csv"), s)?;

    let mut s = String::from("beta,f,mean_f_n,std_error,replicas\n");
    for r in &report.free_energy {
        let _ = writeln!(s, "{},{},{},{},{}", r.beta, r.f, r.mean_f_n, r.std_error, r.replicas);
    }
    fs::write(dir.join("free_energy_empirical.csv"), s)?;

    let mut s = String::from("replica,recentered_max,deterministic_max\n");
    for r in records {
        let det = r.max_energy - crate::extremal::deterministic_recentering(thermo, r.n);
        let _ = writeln!(s, "{},{},{}", r.replica, r.recentered_max, det);
    }
    fs::write(dir.join("gumbel.csv"), s)?;

    let mut s = String::from("replica,window_count\n");
    for r in records {
        let _ = writeln!(s, "{},{}", r.replica, window_count(r, window[0], window[1])?);
    }
    fs::write(dir.join("poisson.csv"), s)?;

    let mut pd = String::from("replica,beta,sum_sq,sum_cube\n");
    let mut ov = String::from("replica,beta,mass_near_q,mass_near_1\n");
    for pr in &report.extremal.pd {
        for r in records {
            let j = r.beta_index(pr.beta)?;
            let w = &r.gibbs_top_weights[j];
            let sq: f64 = w.iter().map(|x| x * x).sum();
            let cube: f64 = w.iter().map(|x| x * x * x).sum();
            let _ = writeln!(pd, "{},{},{},{}", r.replica, pr.beta, sq, cube);
        }
    }
    for orep in &report.extremal.overlap {
        for r in records {
            let single = crate::extremal::overlap_atoms_test(std::slice::from_ref(r), thermo, orep.beta, orep.tol)?;
            let _ = writeln!(ov, "{},{},{},{}", r.replica, orep.beta, single.mass_near_q, single.mass_near_1);
        }
    }
    fs::write(dir.join("pd.csv"), pd)?;
    fs::write(dir.join("overlap.csv"), ov)?;
    Ok(())
}

/// Aggregates a record file into `report.json` and `tables/*.csv`.
pub fn cmd_analyze(records_path: &Path, config: &ExperimentConfig) -> Result<AnalysisReport> {
    let records = read_records(records_path)?;
    let thermo = config.thermo()?;
    let window = config.window();
    let extremal = extremal_report(&records, &thermo, window, config.overlap_tol)?;
    let entropy = entropy_table(&config.model, &records[0])?;
    let free_energy = free_energy_table(&config.model, &thermo, &records)?;
    let verdicts = verdicts(&extremal, &entropy, &free_energy, &thermo);
    let report = AnalysisReport { thermo, extremal, entropy, free_energy, verdicts };
    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
    write_tables(&config.tables()?, &records, &report, &thermo, window)?;
    Ok(report)
}
