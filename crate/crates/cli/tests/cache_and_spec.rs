use orbizeta_cli::cache::{Cache, Lookup};
use orbizeta_cli::runner::{residue_key, run_residues, RunOptions};
use orbizeta_cli::spec::{content_hash, parse_spec, ProblemSpec};
use std::path::Path;
use std::time::Instant;

fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)).unwrap()
}

fn fixture(name: &str) -> ProblemSpec {
    parse_spec(&fixture_text(name)).unwrap()
}

fn no_oracle(name: &str) -> ProblemSpec {
    let mut s = fixture(name);
    s.oracle.enabled = false;
    s
}

#[test]
fn every_fixture_round_trips() {
    for ent in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")).unwrap() {
        let p = ent.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        let s = parse_spec(&text).unwrap();
        let again = parse_spec(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, again, "{}", p.display());
        assert_eq!(content_hash(&s), content_hash(&again));
        // sorted-key compact form of the original document
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let sorted = parse_spec(&orbizeta_cli::spec::canonical_json(&v)).unwrap();
        assert_eq!(content_hash(&s), content_hash(&sorted));
    }
}

#[test]
fn output_placement_does_not_change_cache_key() {
    let a = fixture("circle_c2.json");
    let mut b = a.clone();
    b.output.dir = Some("elsewhere".into());
    assert_eq!(residue_key(&a), residue_key(&b));
    assert_ne!(content_hash(&a), content_hash(&b));
}

#[test]
fn cache_hit_is_much_faster() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path().to_path_buf());
    let spec = fixture("torus_dihedral_potential.json");
    let t = Instant::now();
    let first = run_residues(&spec, &RunOptions::default(), &cache).unwrap();
    let cold = t.elapsed();
    assert_eq!(first.cache.residues, Lookup::Miss);
    let t = Instant::now();
    let second = run_residues(&spec, &RunOptions::default(), &cache).unwrap();
    let warm = t.elapsed();
    assert_eq!(second.cache.residues, Lookup::Hit);
    assert!(cold >= warm * 5, "cold {cold:?} vs warm {warm:?}");
    assert_eq!(
        serde_json::to_string(&first.artifact.rows).unwrap(),
        serde_json::to_string(&second.artifact.rows).unwrap()
    );
}

#[test]
fn changing_k_max_reuses_power_symbols() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path().to_path_buf());
    let spec = no_oracle("torus_reflection.json");
    let at = |k| RunOptions {
        k_max: Some(k),
        backend: None,
    };
    let r2 = run_residues(&spec, &at(2), &cache).unwrap();
    assert_eq!(r2.cache.power, Lookup::Miss);

    // extension resumes from the cached truncation
    let r4 = run_residues(&spec, &at(4), &cache).unwrap();
    assert_eq!(r4.cache.residues, Lookup::Miss);
    assert_eq!(r4.cache.power, Lookup::Hit);
    assert_eq!(r4.cache.power_cached_k, Some(2));

    // a smaller truncation is served from the extended entry
    let r3 = run_residues(&spec, &at(3), &cache).unwrap();
    assert_eq!(r3.cache.residues, Lookup::Miss);
    assert_eq!(r3.cache.power_cached_k, Some(4));

    // cached, resumed and fresh families give identical residues
    let fresh = run_residues(&spec, &at(4), &Cache::disabled()).unwrap();
    for (a, b) in r4.artifact.rows.iter().zip(&fresh.artifact.rows) {
        assert_eq!(a.value, b.value);
    }
    for (a, b) in r3.artifact.rows.iter().zip(&fresh.artifact.rows) {
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn corrupted_entry_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path().to_path_buf());
    let spec = no_oracle("circle_c2.json");
    let first = run_residues(&spec, &RunOptions::default(), &cache).unwrap();
    let entry = dir.path().join("residues").join(format!("{}.json", residue_key(&spec)));
    let text = std::fs::read_to_string(&entry).unwrap();
    std::fs::write(&entry, text.replacen("\"k_max\"", "\"k_maz\"", 1)).unwrap();

    let second = run_residues(&spec, &RunOptions::default(), &cache).unwrap();
    assert_eq!(second.cache.residues, Lookup::Corrupt);
    assert_eq!(
        serde_json::to_string(&first.artifact.rows).unwrap(),
        serde_json::to_string(&second.artifact.rows).unwrap()
    );
    let third = run_residues(&spec, &RunOptions::default(), &cache).unwrap();
    assert_eq!(third.cache.residues, Lookup::Hit);
}

#[test]
fn disabled_cache_still_computes() {
    let f = tempfile::NamedTempFile::new().unwrap();
    let cache = Cache::open(f.path().join("nested"));
    assert!(!cache.enabled());
    let r = run_residues(&no_oracle("circle_trivial.json"), &RunOptions::default(), &cache).unwrap();
    assert_eq!(r.cache.residues, Lookup::Disabled);
    assert!(!r.artifact.rows.is_empty());
}

#[test]
fn strata_integrals_sum_to_orbifold_residue() {
    let r = run_residues(&no_oracle("torus_dihedral_potential.json"), &RunOptions::default(), &Cache::disabled()).unwrap();
    let report = r.artifact.report.unwrap();
    assert!(report.strata_sum_defect() < 1e-10);
}
