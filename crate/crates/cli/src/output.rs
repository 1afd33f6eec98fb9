//! Artifact files and terminal tables.

use crate::runner::{CliError, CliResult, OracleComparison, ResidueArtifact, RowKind};
use crate::spec::Format;
use orbizeta_core::oracle::{OracleSource, Target};
use orbizeta_core::C64;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const DENSITY_COLUMNS: [&str; 3] = ["gamma", "stratum", "k"];

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(format!("writing {}", path.display()), std::io::Error::other(e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_csv(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn coord_header(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("x{i}")).collect()
}

fn kind_name(k: RowKind) -> &'static str {
    match k {
        RowKind::Gamma => "gamma",
        RowKind::Isotypic => "isotypic",
        RowKind::Orbifold => "orbifold",
    }
}

pub fn target_label(a: &ResidueArtifact, t: Target) -> String {
    match t {
        Target::Gamma(e) => a.element_labels.get(e).cloned().unwrap_or_else(|| e.to_string()),
        Target::Isotypic(i) => a.irrep_names.get(i).cloned().unwrap_or_else(|| i.to_string()),
    }
}

fn source_name(s: OracleSource) -> &'static str {
    match s {
        OracleSource::ExactContinuation => "exact_continuation",
        OracleSource::HeatFit => "heat_fit",
        OracleSource::ProjectedSpectrum => "projected_spectrum",
    }
}

/// Writes the artifact into `dir`; returns the files created.
pub fn write_artifact(a: &ResidueArtifact, dir: &Path, formats: &[Format]) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let mut out = Vec::new();
    if formats.contains(&Format::Json) {
        let p = dir.join("residues.json");
        let text = serde_json::to_string_pretty(a).expect("artifact serializes");
        std::fs::write(&p, text + "\n").map_err(|e| CliError::io(format!("writing {}", p.display()), e))?;
        out.push(p);
    }
    if formats.contains(&Format::Csv) {
        let p = dir.join("residues.csv");
        let header = ["kind", "index", "label", "k", "s", "value_re", "value_im"].map(String::from).to_vec();
        write_csv(
            &p,
            header,
            a.rows.iter().map(|r| {
                vec![
                    kind_name(r.kind).into(),
                    r.index.to_string(),
                    r.label.clone(),
                    r.k.to_string(),
                    num(r.s),
                    num(r.value.re),
                    num(r.value.im),
                ]
            }),
        )?;
        out.push(p);

        if !a.densities.is_empty() {
            let p = dir.join("densities.csv");
            let mut header: Vec<String> = DENSITY_COLUMNS.map(String::from).to_vec();
            header.extend(coord_header(a.m));
            header.extend(["value_re".into(), "value_im".into()]);
            let rows = a.densities.iter().flat_map(|t| &t.rows).map(|r| {
                let mut v = vec![r.gamma.to_string(), r.component_id.to_string(), r.k.to_string()];
                v.extend(r.node.iter().map(|&x| num(x)));
                v.extend([num(r.value.re), num(r.value.im)]);
                v
            });
            write_csv(&p, header, rows)?;
            out.push(p);
        }

        if !a.local_densities.is_empty() {
            let p = dir.join("local_densities.csv");
            let mut header: Vec<String> = DENSITY_COLUMNS.map(String::from).to_vec();
            header.push("dimension".into());
            header.push("s".into());
            header.extend(coord_header(a.m));
            header.extend(["value_re".into(), "value_im".into()]);
            let rows = a.local_densities.iter().map(|r| {
                let mut v = vec![r.gamma.to_string(), r.component.to_string(), r.k.to_string(), r.dimension.to_string(), num(r.s)];
                v.extend(r.point.iter().map(|&x| num(x)));
                v.extend([num(r.value.re), num(r.value.im)]);
                v
            });
            write_csv(&p, header, rows)?;
            out.push(p);
        }

        if let Some(rep) = &a.report {
            if rep.per_k.iter().any(|kr| !kr.strata.is_empty()) {
                let p = dir.join("strata.csv");
                let header = ["k", "s", "type", "subgroup_order", "dimension", "integral_re", "integral_im"]
                    .map(String::from)
                    .to_vec();
                let rows = rep.per_k.iter().flat_map(|kr| {
                    kr.strata.iter().map(move |st| {
                        vec![
                            kr.k.to_string(),
                            num(kr.s.re),
                            st.type_id.to_string(),
                            st.subgroup.len().to_string(),
                            st.dimension.to_string(),
                            num(st.integral.re),
                            num(st.integral.im),
                        ]
                    })
                });
                write_csv(&p, header, rows)?;
                out.push(p);
            }
        }

        if !a.oracle.rows.is_empty() {
            let p = dir.join("oracle.csv");
            let header = [
                "target", "index", "label", "k", "source", "engine_re", "engine_im", "oracle_re", "oracle_im", "diff",
                "tolerance", "pass",
            ]
            .map(String::from)
            .to_vec();
            let rows = a.oracle.rows.iter().map(|r| {
                let (t, i) = match r.target {
                    Target::Gamma(e) => ("gamma", e),
                    Target::Isotypic(i) => ("isotypic", i),
                };
                vec![
                    t.into(),
                    i.to_string(),
                    target_label(a, r.target),
                    r.k.to_string(),
                    source_name(r.source).into(),
                    num(r.engine.re),
                    num(r.engine.im),
                    r.oracle.map(|v| num(v.re)).unwrap_or_default(),
                    r.oracle.map(|v| num(v.im)).unwrap_or_default(),
                    r.diff.map(num).unwrap_or_default(),
                    num(r.tolerance),
                    r.pass.map(|b| b.to_string()).unwrap_or_default(),
                ]
            });
            write_csv(&p, header, rows)?;
            out.push(p);
        }
    }
    Ok(out)
}

fn cfmt(z: C64) -> String {
    if z.im.abs() < 1e-14 {
        format!("{:+.10e}", z.re)
    } else {
        format!("{:+.6e}{:+.6e}i", z.re, z.im)
    }
}

/// Residue table for the terminal.
pub fn residue_table(a: &ResidueArtifact) -> String {
    let mut s = String::new();
    if a.report.is_none() {
        let _ = writeln!(s, "{:>3} {:>8} {:>6} {:>4} {:>4}  density at base point", "k", "s", "gamma", "comp", "dim");
        for r in &a.local_densities {
            let _ = writeln!(
                s,
                "{:>3} {:>8.3} {:>6} {:>4} {:>4}  {}",
                r.k,
                r.s,
                r.label,
                r.component,
                r.dimension,
                cfmt(r.value)
            );
        }
        return s;
    }
    let _ = writeln!(s, "{:>3} {:>8} {:<9} {:<12} residue", "k", "s", "kind", "label");
    for r in &a.rows {
        let _ = writeln!(s, "{:>3} {:>8.3} {:<9} {:<12} {}", r.k, r.s, kind_name(r.kind), r.label, cfmt(r.value));
    }
    s
}

/// Comparison table for `verify`.
pub fn comparison_table(a: &ResidueArtifact, c: &OracleComparison) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<9} {:<12} {:>3} {:<19} {:>20} {:>20} {:>10} {:>9}  status",
        "target", "label", "k", "source", "engine", "oracle", "diff", "tol"
    );
    for r in &c.rows {
        let t = match r.target {
            Target::Gamma(_) => "gamma",
            Target::Isotypic(_) => "isotypic",
        };
        let status = match r.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "n/a",
        };
        let _ = writeln!(
            s,
            "{:<9} {:<12} {:>3} {:<19} {:>20} {:>20} {:>10} {:>9.1e}  {}",
            t,
            target_label(a, r.target),
            r.k,
            source_name(r.source),
            cfmt(r.engine),
            r.oracle.map(cfmt).unwrap_or_else(|| "-".into()),
            r.diff.map(|d| format!("{d:.2e}")).unwrap_or_else(|| "-".into()),
            r.tolerance,
            status
        );
    }
    s
}
