//! Random Energy Model coupled to an IID random magnetic field.
//!
//! The crate solves the model's asymptotic thermodynamics (`thermo`), the
//! finite-size recentering constants of one field (`recentering`), and
//! verifies the extremal and Gibbs-measure limit laws by exact enumeration of
//! small systems across disorder replicas (`enumerate`, `extremal`).

pub mod counter;
pub mod enumerate;
pub mod error;
pub mod extremal;
pub mod field;
pub mod harness;
pub mod quadrature;
pub mod rate;
pub mod recentering;
pub mod roots;
pub mod special;
pub mod thermo;

pub use enumerate::{energy_at, run_replica, ReplicaRecord, ReplicaSpec};
pub use error::{Error, Result};
pub use field::{CumulantEvaluation, FieldKind, FieldModel};
pub use rate::{conjugate, rate_i, CumulantProvider, RatePoint};
pub use recentering::{recentering_constants, EmpiricalField, RecenteringConstants};
pub use thermo::ThermoSolution;
