//! Many-to-one stable matching with couples.
//!
//! This crate models markets in which hospitals with multi-doctor capacities
//! hire from a pool of single doctors and couples. Hospitals rank individual
//! doctors and extend that ranking to sets of doctors *responsively*; couples
//! rank pairs of posts responsively with respect to each member's individual
//! ranking. Unemployment is modelled as a dummy post (written `@` in files)
//! that accepts every doctor and never rejects.
//!
//! The main entry points are:
//!
//! - [`model`]: instance documents, validation, matchings, and brute-force
//!   enumeration of capacity-feasible matchings;
//! - [`prefs`]: responsive preference structures, marginal derivation, the
//!   partial order of forced set/pair comparisons and its linear extensions,
//!   and checkers for the extreme-altruism and aversion-to-couple-diversity
//!   conditions;
//! - [`dpda`]: the doctor-proposing deferred-acceptance procedure with a
//!   round-by-round trace;
//! - [`stability`]: blocking-pair search, stability and individual-rationality
//!   checks, and a brute-force stable-matching oracle;
//! - [`theorems`]: canonical example instances, constructive
//!   no-stable-matching builders, randomized instance generators, and the
//!   claim-verification harness.

pub mod dpda;
pub mod model;
pub mod prefs;
pub mod stability;
pub mod theorems;

pub use model::{
    validate_instance, DoctorId, HospitalId, Instance, Matching, Placement, ValidationReport,
};
