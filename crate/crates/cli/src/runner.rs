//! Subcommand logic, independent of argument parsing and printing.

use crate::cache::{Cache, Lookup};
use crate::spec::{self, content_hash, sha256_hex, BackendKind, ChartMode, Problem, ProblemSpec, SpecError};
use orbizeta_core::oracle::{
    constant_case_zeta, fixed_dimension, heat_fit_residues, lefschetz_limit, lefschetz_number, ComparisonRow,
    HeatFit, OracleSource, PoleEntry,
};
use orbizeta_core::power::{cauchy_power, resolvent_recursion_resume};
use orbizeta_core::{
    affine_fixed_set, compare_report, numeric_spectrum, oracle_residues, orbit_type_poset, Backend, ClassicalSymbol,
    DiracDensityTable, PowerSymbolFamily, ResidueEngine, ResidueReport, ResolventSymbolFamily, Tolerances, C64,
};
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const ARTIFACT_VERSION: u32 = 1;
pub const CORE_VERSION: &str = orbizeta_core::VERSION;
pub const CLI_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid spec: {0}")]
    Spec(#[from] SpecError),
    #[error("computation failed: {0}")]
    Compute(#[from] orbizeta_core::Error),
    #[error("oracle failed: {0}")]
    Oracle(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("verification failed: {failed} of {total} comparisons exceed tolerance")]
    Verify { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec(_) => 2,
            CliError::Compute(_) | CliError::Oracle(_) | CliError::Io { .. } => 3,
            CliError::Verify { .. } => 4,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Command-line overrides of the compute section.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub k_max: Option<usize>,
    pub backend: Option<BackendKind>,
}

pub fn apply_overrides(spec: &ProblemSpec, opts: &RunOptions) -> Result<ProblemSpec, SpecError> {
    let mut s = spec.clone();
    if let Some(k) = opts.k_max {
        s.compute.k_max = k;
    }
    if let Some(b) = opts.backend {
        s.compute.backend = b;
        if b == BackendKind::Exact {
            s.compute.contour = None;
        }
    }
    spec::validate(&s)?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Gamma,
    Isotypic,
    Orbifold,
}

/// One residue value at s_k = (k − m)/d.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidueRow {
    pub kind: RowKind,
    /// Element index for `gamma`, irrep index otherwise.
    pub index: usize,
    pub label: String,
    pub k: usize,
    pub s: f64,
    pub value: C64,
}

/// Density η^γ_k at the base point of a fixed component (linear charts,
/// where fixed sets are not compact and only local data is meaningful).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalDensityRow {
    pub gamma: usize,
    pub label: String,
    pub component: usize,
    pub dimension: usize,
    pub k: usize,
    pub s: f64,
    pub point: Vec<f64>,
    pub value: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStatus {
    Passed,
    Failed,
    Skipped,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleComparison {
    pub status: OracleStatus,
    pub source: Option<OracleSource>,
    pub message: Option<String>,
    pub tolerances: Tolerances,
    pub rows: Vec<ComparisonRow>,
}

impl OracleComparison {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.pass == Some(false)).count()
    }

    pub fn checked(&self) -> usize {
        self.rows.iter().filter(|r| r.pass.is_some()).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub core: String,
    pub cli: String,
    pub artifact: u32,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Timings {
    pub power_ms: f64,
    pub residues_ms: f64,
    pub oracle_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidueArtifact {
    pub spec_hash: String,
    pub chart_mode: ChartMode,
    pub backend: Backend,
    pub k_max: usize,
    pub m: usize,
    pub fiber_dim: usize,
    pub element_labels: Vec<String>,
    pub irrep_names: Vec<String>,
    /// Absent in linear charts.
    pub report: Option<ResidueReport>,
    pub rows: Vec<ResidueRow>,
    /// One table per k (torus models).
    pub densities: Vec<DiracDensityTable>,
    pub local_densities: Vec<LocalDensityRow>,
    pub oracle: OracleComparison,
    pub versions: Versions,
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CacheReport {
    pub residues: Lookup,
    pub power: Lookup,
    /// Truncation of the power family found in the cache.
    pub power_cached_k: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifact: ResidueArtifact,
    pub cache: CacheReport,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PowerEntry {
    resolvent: ResolventSymbolFamily,
    family: PowerSymbolFamily,
}

/// Cache key of the residue artifact: everything except output placement.
pub fn residue_key(spec: &ProblemSpec) -> String {
    let mut s = spec.clone();
    s.output = Default::default();
    let tagged = serde_json::json!({
        "spec": serde_json::to_value(&s).expect("spec serializes"),
        "core": CORE_VERSION,
        "artifact": ARTIFACT_VERSION,
    });
    sha256_hex(spec::canonical_json(&tagged).as_bytes())
}

/// Cache key of the power family: the symbol itself.
pub fn power_key(symbol: &ClassicalSymbol) -> String {
    let body = serde_json::to_string(symbol).expect("symbol serializes");
    sha256_hex(format!("{CORE_VERSION}\n{body}").as_bytes())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Power-symbol family up to k_max, reusing and extending cached ones.
fn power_families(
    symbol: &ClassicalSymbol,
    k_max: usize,
    cache: &Cache,
) -> CliResult<(ResolventSymbolFamily, PowerSymbolFamily, Lookup, Option<usize>)> {
    let key = power_key(symbol);
    let (lookup, entry) = cache.load::<PowerEntry>("power", &key);
    let cached_k = entry.as_ref().map(|e| e.resolvent.truncation());
    if let Some(e) = &entry {
        if e.resolvent.truncation() >= k_max && e.family.truncation() >= k_max {
            let mut r = e.resolvent.clone();
            r.components.truncate(k_max + 1);
            return Ok((r, e.family.truncated(k_max), lookup, cached_k));
        }
    }
    let resolvent = resolvent_recursion_resume(symbol, entry.as_ref().map(|e| &e.resolvent), k_max)?;
    let family = cauchy_power(&resolvent);
    let stored = PowerEntry { resolvent, family };
    cache.store("power", &key, &stored);
    Ok((stored.resolvent, stored.family, lookup, cached_k))
}

fn residue_rows(problem: &Problem, report: &ResidueReport) -> Vec<ResidueRow> {
    let mut rows = Vec::new();
    for kr in &report.per_k {
        let s = kr.s.re;
        for (e, v) in kr.residue_gamma.iter().enumerate() {
            rows.push(ResidueRow {
                kind: RowKind::Gamma,
                index: e,
                label: problem.element_label(e),
                k: kr.k,
                s,
                value: *v,
            });
        }
        for (i, v) in kr.residue_isotypic.iter().enumerate() {
            rows.push(ResidueRow {
                kind: RowKind::Isotypic,
                index: i,
                label: report.irrep_names[i].clone(),
                k: kr.k,
                s,
                value: *v,
            });
        }
        rows.push(ResidueRow {
            kind: RowKind::Orbifold,
            index: 0,
            label: "orbifold".into(),
            k: kr.k,
            s,
            value: kr.residue_orbifold,
        });
    }
    rows
}

fn local_rows(problem: &Problem, engine: &ResidueEngine) -> CliResult<Vec<LocalDensityRow>> {
    let mut rows = Vec::new();
    for k in 0..=engine.k_max() {
        let dens = engine.densities(k)?;
        for (gamma, comps) in engine.strata.iter().enumerate() {
            for (cid, st) in comps.iter().enumerate() {
                let p = st.base_point().clone();
                rows.push(LocalDensityRow {
                    gamma,
                    label: problem.element_label(gamma),
                    component: cid,
                    dimension: st.n,
                    k,
                    s: dens.s.re,
                    point: p.as_slice().to_vec(),
                    value: engine.density_at(&dens, gamma, cid, &p),
                });
            }
        }
    }
    Ok(rows)
}

fn skipped(tol: Tolerances, message: &str) -> OracleComparison {
    OracleComparison {
        status: OracleStatus::Skipped,
        source: None,
        message: Some(message.into()),
        tolerances: tol,
        rows: Vec::new(),
    }
}

fn run_oracle(spec: &ProblemSpec, problem: &Problem, report: Option<&ResidueReport>) -> OracleComparison {
    let tol = spec.oracle.tolerances();
    if !spec.oracle.enabled {
        return skipped(tol, "oracle disabled in spec");
    }
    let (Some(model), Some(report)) = (&problem.model, report) else {
        return skipped(tol, "oracle needs a torus model");
    };
    match oracle_residues(model, spec.compute.k_max) {
        Ok(or) => {
            let rows = compare_report(report, &or, &tol);
            let failed = rows.iter().any(|r| r.pass == Some(false));
            OracleComparison {
                status: if failed { OracleStatus::Failed } else { OracleStatus::Passed },
                source: or.first().map(|o| o.source),
                message: None,
                tolerances: tol,
                rows,
            }
        }
        Err(e) => OracleComparison {
            status: OracleStatus::Error,
            source: None,
            message: Some(e.to_string()),
            tolerances: tol,
            rows: Vec::new(),
        },
    }
}

/// Computes (or loads) the residue artifact.
pub fn run_residues(spec: &ProblemSpec, opts: &RunOptions, cache: &Cache) -> CliResult<RunOutcome> {
    let start = Instant::now();
    let spec = apply_overrides(spec, opts)?;
    let key = residue_key(&spec);
    let (res_lookup, hit) = cache.load::<ResidueArtifact>("residues", &key);
    if let Some(artifact) = hit {
        return Ok(RunOutcome {
            artifact,
            cache: CacheReport {
                residues: res_lookup,
                power: Lookup::Disabled,
                power_cached_k: None,
            },
            elapsed_ms: ms(start),
        });
    }
    let problem = spec::build(&spec)?;
    let k_max = spec.compute.k_max;
    let mut timings = Timings::default();

    let t = Instant::now();
    let (resolvent, family, power_lookup, power_cached_k) = power_families(&problem.symbol, k_max, cache)?;
    timings.power_ms = ms(t);

    let t = Instant::now();
    let mut engine = ResidueEngine::with_families(
        problem.group.clone(),
        problem.symbol.clone(),
        resolvent,
        family,
        spec.compute.backend(),
    )?;
    engine.grid = spec.compute.strata_nodes;
    engine.sphere_level = spec.compute.sphere_level.unwrap_or(0);
    let (report, densities, local) = match spec.model.chart_mode {
        ChartMode::Torus => {
            let (report, tables) = engine.report_with_tables(spec.compute.strata, true)?;
            (Some(report), tables, Vec::new())
        }
        ChartMode::Linear => (None, Vec::new(), local_rows(&problem, &engine)?),
    };
    timings.residues_ms = ms(t);

    let t = Instant::now();
    let oracle = run_oracle(&spec, &problem, report.as_ref());
    timings.oracle_ms = ms(t);

    let artifact = ResidueArtifact {
        spec_hash: content_hash(&spec),
        chart_mode: spec.model.chart_mode,
        backend: spec.compute.backend(),
        k_max,
        m: spec.model.m,
        fiber_dim: spec.operator.k,
        element_labels: problem.element_labels(),
        irrep_names: problem.group.names.clone(),
        rows: report.as_ref().map(|r| residue_rows(&problem, r)).unwrap_or_default(),
        report,
        densities,
        local_densities: local,
        oracle,
        versions: Versions {
            core: CORE_VERSION.into(),
            cli: CLI_VERSION.into(),
            artifact: ARTIFACT_VERSION,
        },
        timings,
    };
    cache.store("residues", &key, &artifact);
    Ok(RunOutcome {
        artifact,
        cache: CacheReport {
            residues: res_lookup,
            power: power_lookup,
            power_cached_k,
        },
        elapsed_ms: ms(start),
    })
}

/// Result of `verify`: the oracle comparison, erroring when it fails.
pub fn run_verify(spec: &ProblemSpec, opts: &RunOptions, cache: &Cache) -> CliResult<RunOutcome> {
    let out = run_residues(spec, opts, cache)?;
    let cmp = &out.artifact.oracle;
    match cmp.status {
        OracleStatus::Passed | OracleStatus::Skipped => Ok(out),
        OracleStatus::Error => Err(CliError::Oracle(cmp.message.clone().unwrap_or_default())),
        OracleStatus::Failed => Err(CliError::Verify {
            failed: cmp.failures(),
            total: cmp.checked(),
        }),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentInfo {
    pub dimension: usize,
    pub base_point: Vec<f64>,
    pub compact: bool,
    pub volume: f64,
    /// |det(I − T̄)|⁻¹ normal weight.
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedSetInfo {
    pub element: String,
    pub components: Vec<ComponentInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitTypeInfo {
    pub id: usize,
    pub subgroup: Vec<String>,
    pub order: usize,
    pub dimension: Option<usize>,
    pub pieces: Vec<ComponentInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrataSummary {
    pub spec_hash: String,
    pub group_order: usize,
    pub elements: Vec<String>,
    pub irreps: Vec<String>,
    pub fixed_sets: Vec<FixedSetInfo>,
    pub types: Vec<OrbitTypeInfo>,
    /// poset[a][b]: type a is subconjugate to type b.
    pub poset: Vec<Vec<bool>>,
}

fn component_info(c: &orbizeta_core::FixedComponent, weight: f64) -> ComponentInfo {
    ComponentInfo {
        dimension: c.n,
        base_point: c.base_point.as_slice().to_vec(),
        compact: c.compact,
        volume: c.volume,
        weight,
    }
}

pub fn run_strata(spec: &ProblemSpec) -> CliResult<StrataSummary> {
    let problem = spec::build(spec)?;
    let g = &problem.group;
    let fixed_sets = (0..g.order())
        .map(|e| {
            let comps = affine_fixed_set(g, e)?;
            Ok(FixedSetInfo {
                element: problem.element_label(e),
                components: comps.iter().map(|s| component_info(&s.component, s.d_weight)).collect(),
            })
        })
        .collect::<orbizeta_core::Result<Vec<_>>>()?;
    let strat = orbit_type_poset(g)?;
    let types = strat
        .types
        .iter()
        .zip(&strat.strata)
        .enumerate()
        .map(|(id, (t, pieces))| OrbitTypeInfo {
            id,
            subgroup: t.subgroup.iter().map(|&e| problem.element_label(e)).collect(),
            order: t.order,
            dimension: pieces.iter().map(|p| p.component.n).max(),
            pieces: pieces.iter().map(|p| component_info(&p.component, 1.0)).collect(),
        })
        .collect();
    Ok(StrataSummary {
        spec_hash: content_hash(spec),
        group_order: g.order(),
        elements: problem.element_labels(),
        irreps: g.names.clone(),
        fixed_sets,
        types,
        poset: strat.poset,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResidueValue {
    pub k: usize,
    pub s: f64,
    pub value: Option<C64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LefschetzInfo {
    pub heat_trace_limit: C64,
    pub fixed_point_sum: C64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub spec_hash: String,
    pub gamma: usize,
    pub label: String,
    pub fixed_dimension: Option<usize>,
    pub source: OracleSource,
    /// Poles of the exact continuation in z = −s.
    pub poles: Vec<PoleEntry>,
    pub heat_fit: Option<HeatFit>,
    pub residues: Vec<OracleResidueValue>,
    pub lefschetz: Option<LefschetzInfo>,
    pub eigenvalue_count: Option<usize>,
}

pub fn run_oracle_for(spec: &ProblemSpec, gamma: &str) -> CliResult<OracleReport> {
    let problem = spec::build(spec)?;
    let Some(model) = &problem.model else {
        return Err(SpecError::new("model.chart_mode", "the spectral oracle needs chart_mode \"torus\"").into());
    };
    let Some(e) = problem.parse_element(gamma) else {
        return Err(SpecError::new(
            "--gamma",
            format!("unknown element {gamma:?}; use an index below {} or a label", problem.group.order()),
        )
        .into());
    };
    let g = &problem.group;
    let m = spec.model.m;
    let k_max = spec.compute.k_max;
    let fixed = fixed_dimension(g, e)?;
    let order = problem.symbol.order;
    let s_of = |k: usize| orbizeta_core::residues::pole_location(m, order, k);
    let constant = model.is_constant_scalar();
    let mut poles = Vec::new();
    let mut heat = None;
    let mut spectrum = None;
    let residues: Vec<OracleResidueValue>;
    if constant {
        let z = constant_case_zeta(model, e, k_max + 2)?;
        poles = z.poles.clone();
        residues = (0..=k_max)
            .map(|k| OracleResidueValue {
                k,
                s: s_of(k),
                value: Some(C64::new(z.residue_s(k, m), 0.0)),
            })
            .collect();
    } else {
        let sp = numeric_spectrum(model)?;
        let (fit, vals) = heat_fit_residues(&sp, e, fixed.unwrap_or(m), k_max)?;
        heat = Some(fit);
        residues = vals
            .into_iter()
            .enumerate()
            .map(|(k, value)| OracleResidueValue { k, s: s_of(k), value })
            .collect();
        spectrum = Some(sp);
    }
    let lefschetz = if fixed == Some(0) {
        let sp = match spectrum.take() {
            Some(sp) => sp,
            None => numeric_spectrum(model)?,
        };
        let info = LefschetzInfo {
            heat_trace_limit: lefschetz_limit(&sp, e)?,
            fixed_point_sum: lefschetz_number(g, e)?,
        };
        spectrum = Some(sp);
        Some(info)
    } else {
        None
    };
    Ok(OracleReport {
        spec_hash: content_hash(spec),
        gamma: e,
        label: problem.element_label(e),
        fixed_dimension: fixed,
        source: if constant { OracleSource::ExactContinuation } else { OracleSource::HeatFit },
        poles,
        heat_fit: heat,
        residues,
        lefschetz,
        eigenvalue_count: spectrum.map(|s| s.eigenvalues.len()),
    })
}
