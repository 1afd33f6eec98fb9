//! Spec-driven runner for the orbizeta residue engine: parsing and
//! validation, caching, and artifact output.

pub mod cache;
pub mod output;
pub mod runner;
pub mod spec;

pub use cache::Cache;
pub use runner::{run_oracle_for, run_residues, run_strata, run_verify, CliError, ResidueArtifact, RunOptions};
pub use spec::{content_hash, load_spec, parse_spec, ProblemSpec, SpecError};
