//! Shared setup for the benchmarks.

use orbizeta_cli::spec::{build, parse_spec, Problem};
use std::path::Path;

/// Builds the problem described by one of the CLI fixtures.
pub fn fixture_problem(name: &str) -> Problem {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/fixtures").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    build(&parse_spec(&text).expect("fixture parses")).expect("fixture builds")
}
