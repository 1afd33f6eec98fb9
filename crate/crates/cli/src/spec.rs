//! Problem specification: JSON schema types, validation and hashing.

use orbizeta_core::power::ContourParams;
use orbizeta_core::residues::EQUIVARIANCE_GATE;
use orbizeta_core::{
    build_explicit_group, build_named_group, Backend, ClassicalSymbol, CMat, Field, FiniteGroupAction, FitGrid,
    Generator, GroupKind, Lattice, LatticeModel, RMat, RVec, TrigPoly, UserCharacterTable, C64,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

pub const SPEC_VERSION: u32 = 1;
pub const MAX_K: usize = 16;
pub const MAX_SPHERE_LEVEL: usize = 24;
const ORTHO_TOL: f64 = 1e-9;

/// Validation failure tied to a location in the spec document.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SpecError {
    pub path: String,
    pub message: String,
}

impl SpecError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        SpecError {
            path: path.into(),
            message: message.into(),
        }
    }
}

type SResult<T> = std::result::Result<T, SpecError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub spec_version: u32,
    pub model: ModelSpec,
    #[serde(default)]
    pub group: GroupSpec,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub compute: ComputeSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartMode {
    #[default]
    Torus,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub m: usize,
    /// Side lengths of a rectangular period lattice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
    /// General lattice: one basis vector per entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub chart_mode: ChartMode,
}

/// Real matrix, or a complex one split into parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Real(Vec<Vec<f64>>),
    Complex { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

/// A complex number as `x` or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexSpec {
    pub fn value(&self) -> C64 {
        match *self {
            ComplexSpec::Real(x) => C64::new(x, 0.0),
            ComplexSpec::Pair([a, b]) => C64::new(a, b),
        }
    }
}

/// Fourier coefficient: a scalar multiple of the identity or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffSpec {
    Scalar(ComplexSpec),
    Matrix(MatrixSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub rot: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trans: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterTableSpec {
    pub names: Vec<String>,
    pub class_words: Vec<Vec<usize>>,
    pub values: Vec<Vec<ComplexSpec>>,
}

fn default_max_order() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    /// Built-in family; absent means explicit generators with a character
    /// table, or the trivial group when there are no generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<GroupKind>,
    #[serde(default)]
    pub generators: Vec<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character_table: Option<CharacterTableSpec>,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
}

impl Default for GroupSpec {
    fn default() -> Self {
        GroupSpec {
            kind: None,
            generators: Vec::new(),
            character_table: None,
            max_order: default_max_order(),
        }
    }
}

/// One Fourier mode c·e^{i⟨ν,x⟩}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub nu: Vec<f64>,
    pub coeff: CoeffSpec,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    /// Fiber dimension.
    #[serde(default = "one_usize")]
    pub k: usize,
    /// Scale c of the principal symbol c|ξ|².
    #[serde(default = "one")]
    pub principal: f64,
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub potential: Vec<ModeSpec>,
    /// Empty, or one mode list per coordinate direction.
    #[serde(default)]
    pub first_order: Vec<Vec<ModeSpec>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Exact,
    Contour,
}

fn default_k_max() -> usize {
    4
}

fn default_nodes() -> usize {
    orbizeta_core::residues::DEFAULT_GRID
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeSpec {
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour: Option<ContourParams>,
    /// Minimum level of the sphere rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphere_level: Option<usize>,
    /// Trapezoid nodes per fixed-torus dimension.
    #[serde(default = "default_nodes")]
    pub strata_nodes: usize,
    /// Taylor order of coefficients in the linear chart (default k_max).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jet_order: Option<u32>,
    /// Also compute orbit-type strata densities.
    #[serde(default = "yes")]
    pub strata: bool,
}

impl Default for ComputeSpec {
    fn default() -> Self {
        ComputeSpec {
            k_max: default_k_max(),
            backend: BackendKind::Exact,
            contour: None,
            sphere_level: None,
            strata_nodes: default_nodes(),
            jet_order: None,
            strata: true,
        }
    }
}

impl ComputeSpec {
    pub fn backend(&self) -> Backend {
        match self.backend {
            BackendKind::Exact => Backend::Exact,
            BackendKind::Contour => Backend::Contour(self.contour.unwrap_or_default()),
        }
    }
}

fn default_cutoff() -> usize {
    16
}

fn default_budget() -> usize {
    orbizeta_core::oracle::DEFAULT_BUDGET
}

fn default_points() -> usize {
    orbizeta_core::oracle::FIT_POINTS
}

fn default_t_max() -> f64 {
    orbizeta_core::oracle::FIT_T_MAX
}

fn default_tol_exact() -> f64 {
    orbizeta_core::Tolerances::default().exact
}

fn default_tol_fit() -> f64 {
    orbizeta_core::Tolerances::default().heat_fit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Fourier box |n_i| ≤ cutoff in dual-lattice coordinates.
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_points")]
    pub t_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_tol_exact")]
    pub tolerance_exact: f64,
    #[serde(default = "default_tol_fit")]
    pub tolerance_fit: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            enabled: true,
            cutoff: default_cutoff(),
            budget: default_budget(),
            t_points: default_points(),
            t_min: None,
            t_max: default_t_max(),
            tolerance_exact: default_tol_exact(),
            tolerance_fit: default_tol_fit(),
        }
    }
}

impl OracleSpec {
    pub fn tolerances(&self) -> orbizeta_core::Tolerances {
        orbizeta_core::Tolerances {
            exact: self.tolerance_exact,
            heat_fit: self.tolerance_fit,
        }
    }

    pub fn fit_grid(&self) -> FitGrid {
        FitGrid {
            points: self.t_points,
            t_min: self.t_min,
            t_max: self.t_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            formats: default_formats(),
        }
    }
}

/// Parses and validates a spec document.
pub fn parse_spec(text: &str) -> SResult<ProblemSpec> {
    let value: Value = serde_json::from_str(text).map_err(|e| SpecError::new("$", format!("invalid JSON: {e}")))?;
    from_value(value)
}

pub fn from_value(value: Value) -> SResult<ProblemSpec> {
    match value.get("spec_version") {
        Some(v) if v.as_u64() == Some(SPEC_VERSION as u64) => {}
        Some(v) => return Err(SpecError::new("spec_version", format!("unsupported version {v}; expected {SPEC_VERSION}"))),
        None => return Err(SpecError::new("spec_version", "missing field")),
    }
    let spec: ProblemSpec = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        SpecError::new(if path == "." { "$".to_string() } else { path }, e.into_inner().to_string())
    })?;
    validate(&spec)?;
    Ok(spec)
}

pub fn load_spec(path: &Path) -> SResult<ProblemSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::new("$", format!("cannot read {}: {e}", path.display())))?;
    parse_spec(&text)
}

/// Writes `v` with object keys sorted at every level.
fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(x, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

pub fn canonical_json<T: Serialize>(v: &T) -> String {
    let value = serde_json::to_value(v).expect("spec types serialize");
    let mut out = String::new();
    write_canonical(&value, &mut out);
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// sha256 of the canonical form: defaults filled in, keys sorted.
pub fn content_hash(spec: &ProblemSpec) -> String {
    sha256_hex(canonical_json(spec).as_bytes())
}

fn shape_error(path: &str, what: &str, rows: usize, cols: usize) -> SpecError {
    SpecError::new(path, format!("{what} must be {rows}×{cols}"))
}

fn real_matrix(rows: &[Vec<f64>], r: usize, c: usize, path: &str) -> SResult<RMat> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(shape_error(path, "matrix", r, c));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SpecError::new(path, "entries must be finite"));
    }
    Ok(RMat::from_fn(r, c, |i, j| rows[i][j]))
}

fn complex_matrix(m: &MatrixSpec, n: usize, path: &str) -> SResult<CMat> {
    match m {
        MatrixSpec::Real(rows) => Ok(real_matrix(rows, n, n, path)?.map(|v| C64::new(v, 0.0))),
        MatrixSpec::Complex { re, im } => {
            let a = real_matrix(re, n, n, &format!("{path}.re"))?;
            let b = real_matrix(im, n, n, &format!("{path}.im"))?;
            Ok(CMat::from_fn(n, n, |i, j| C64::new(a[(i, j)], b[(i, j)])))
        }
    }
}

fn coeff_matrix(c: &CoeffSpec, k: usize, path: &str) -> SResult<CMat> {
    match c {
        CoeffSpec::Scalar(z) => {
            let v = z.value();
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(SpecError::new(path, "coefficient must be finite"));
            }
            Ok(CMat::identity(k, k) * v)
        }
        CoeffSpec::Matrix(m) => complex_matrix(m, k, path),
    }
}

fn vector(v: &[f64], m: usize, path: &str) -> SResult<RVec> {
    if v.len() != m {
        return Err(SpecError::new(path, format!("expected {m} entries, found {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SpecError::new(path, "entries must be finite"));
    }
    Ok(RVec::from_column_slice(v))
}

fn max_abs_r(a: &RMat) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn max_abs_c(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.norm()))
}

/// Structural checks that need no group construction.
pub fn validate(spec: &ProblemSpec) -> SResult<()> {
    let m = spec.model.m;
    if m == 0 {
        return Err(SpecError::new("model.m", "dimension must be at least 1"));
    }
    if m > 6 {
        return Err(SpecError::new("model.m", "dimension above 6 is not supported"));
    }
    lattice(spec)?;
    let k = spec.operator.k;
    if k == 0 {
        return Err(SpecError::new("operator.k", "fiber dimension must be at least 1"));
    }
    for (i, g) in spec.group.generators.iter().enumerate() {
        generator(g, m, k, &format!("group.generators[{i}]"))?;
    }
    if spec.group.max_order == 0 {
        return Err(SpecError::new("group.max_order", "must be positive"));
    }
    let op = &spec.operator;
    if !(op.principal > 0.0 && op.principal.is_finite()) {
        return Err(SpecError::new("operator.principal", "must be positive and finite"));
    }
    if !op.c0.is_finite() {
        return Err(SpecError::new("operator.c0", "must be finite"));
    }
    if !op.first_order.is_empty() && op.first_order.len() != m {
        return Err(SpecError::new(
            "operator.first_order",
            format!("expected one mode list per direction ({m}), found {}", op.first_order.len()),
        ));
    }
    let c = &spec.compute;
    if c.k_max > MAX_K {
        return Err(SpecError::new("compute.k_max", format!("must be at most {MAX_K}")));
    }
    if c.strata_nodes == 0 || c.strata_nodes > 4096 {
        return Err(SpecError::new("compute.strata_nodes", "must lie in 1..=4096"));
    }
    if let Some(l) = c.sphere_level {
        if l > MAX_SPHERE_LEVEL {
            return Err(SpecError::new("compute.sphere_level", format!("must be at most {MAX_SPHERE_LEVEL}")));
        }
    }
    if let Some(p) = &c.contour {
        if c.backend != BackendKind::Contour {
            return Err(SpecError::new("compute.contour", "only valid with backend \"contour\""));
        }
        if p.line_panels == 0 || p.circle_panels == 0 || p.order == 0 || !(p.r_factor > 1.0) {
            return Err(SpecError::new("compute.contour", "panel counts and order must be positive, r_factor > 1"));
        }
    }
    match spec.model.chart_mode {
        ChartMode::Linear => {
            if let Some(j) = c.jet_order {
                if (j as usize) < c.k_max {
                    return Err(SpecError::new(
                        "compute.jet_order",
                        format!("jet_order < k_max ({j} < {}); the expansion needs jets of order k_max", c.k_max),
                    ));
                }
            }
            if spec.oracle.enabled {
                return Err(SpecError::new("oracle.enabled", "the spectral oracle needs chart_mode \"torus\""));
            }
        }
        ChartMode::Torus => {
            if c.jet_order.is_some() {
                return Err(SpecError::new("compute.jet_order", "only used in chart_mode \"linear\""));
            }
        }
    }
    let o = &spec.oracle;
    if o.cutoff == 0 {
        return Err(SpecError::new("oracle.cutoff", "must be positive"));
    }
    if o.budget == 0 {
        return Err(SpecError::new("oracle.budget", "must be positive"));
    }
    if o.t_points < 4 {
        return Err(SpecError::new("oracle.t_points", "need at least 4 sample times"));
    }
    if !(o.t_max > 0.0 && o.t_max.is_finite()) {
        return Err(SpecError::new("oracle.t_max", "must be positive"));
    }
    if let Some(t) = o.t_min {
        if !(t > 0.0 && t < o.t_max) {
            return Err(SpecError::new("oracle.t_min", "must satisfy 0 < t_min < t_max"));
        }
    }
    if !(o.tolerance_exact >= 0.0) {
        return Err(SpecError::new("oracle.tolerance_exact", "must be non-negative"));
    }
    if !(o.tolerance_fit >= 0.0) {
        return Err(SpecError::new("oracle.tolerance_fit", "must be non-negative"));
    }
    if spec.output.formats.is_empty() {
        return Err(SpecError::new("output.formats", "list at least one format"));
    }
    Ok(())
}

fn lattice(spec: &ProblemSpec) -> SResult<Option<Lattice>> {
    let m = spec.model.m;
    let model = &spec.model;
    match model.chart_mode {
        ChartMode::Linear => {
            if model.periods.is_some() {
                return Err(SpecError::new("model.periods", "not used in chart_mode \"linear\""));
            }
            if model.basis.is_some() {
                return Err(SpecError::new("model.basis", "not used in chart_mode \"linear\""));
            }
            Ok(None)
        }
        ChartMode::Torus => match (&model.periods, &model.basis) {
            (Some(_), Some(_)) => Err(SpecError::new("model", "give either periods or basis, not both")),
            (None, None) => Err(SpecError::new("model.periods", "a torus model needs periods or a basis")),
            (Some(p), None) => {
                let v = vector(p, m, "model.periods")?;
                if v.iter().any(|&x| x <= 0.0) {
                    return Err(SpecError::new("model.periods", "periods must be positive"));
                }
                Ok(Some(Lattice::from_periods(v.as_slice())))
            }
            (None, Some(b)) => {
                // entries are basis vectors, stored as columns
                let rows = real_matrix(b, m, m, "model.basis")?;
                let basis = rows.transpose();
                if basis.determinant().abs() < 1e-12 {
                    return Err(SpecError::new("model.basis", "basis vectors are linearly dependent"));
                }
                Ok(Some(Lattice::from_basis(basis)))
            }
        },
    }
}

fn generator(g: &GeneratorSpec, m: usize, k: usize, path: &str) -> SResult<Generator> {
    let rot = real_matrix(&g.rot, m, m, &format!("{path}.rot"))?;
    let defect = max_abs_r(&(rot.transpose() * &rot - RMat::identity(m, m)));
    if defect > ORTHO_TOL {
        return Err(SpecError::new(format!("{path}.rot"), format!("not orthogonal (defect {defect:.3e})")));
    }
    let mut out = Generator::linear(rot, k);
    if let Some(t) = &g.trans {
        out = out.with_trans(vector(t, m, &format!("{path}.trans"))?);
    }
    if let Some(f) = &g.fiber {
        let u = complex_matrix(f, k, &format!("{path}.fiber"))?;
        let defect = max_abs_c(&(u.adjoint() * &u - CMat::identity(k, k)));
        if defect > ORTHO_TOL {
            return Err(SpecError::new(format!("{path}.fiber"), format!("not unitary (defect {defect:.3e})")));
        }
        out = out.with_fiber(u);
    }
    Ok(out)
}

fn modes(list: &[ModeSpec], m: usize, k: usize, lat: Option<&Lattice>, path: &str) -> SResult<TrigPoly> {
    let mut out = Vec::with_capacity(list.len());
    for (i, md) in list.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let nu = vector(&md.nu, m, &format!("{p}.nu"))?;
        if let Some(l) = lat {
            let (_, defect) = l.frequency_index(&nu);
            if defect > 1e-9 {
                return Err(SpecError::new(format!("{p}.nu"), "frequency is not periodic on the lattice"));
            }
        }
        out.push((md.nu.clone(), coeff_matrix(&md.coeff, k, &format!("{p}.coeff"))?));
    }
    Ok(TrigPoly::from_modes(m, k, out))
}

/// Everything the runners need, built from a validated spec.
#[derive(Debug, Clone)]
pub struct Problem {
    pub group: FiniteGroupAction,
    pub symbol: ClassicalSymbol,
    /// Present in torus mode.
    pub model: Option<LatticeModel>,
}

impl Problem {
    /// "e" for the identity, "g<i>" otherwise.
    pub fn element_label(&self, e: usize) -> String {
        if e == self.group.identity {
            "e".into()
        } else {
            format!("g{e}")
        }
    }

    pub fn element_labels(&self) -> Vec<String> {
        (0..self.group.order()).map(|e| self.element_label(e)).collect()
    }

    /// Accepts an element index or label.
    pub fn parse_element(&self, s: &str) -> Option<usize> {
        let n = self.group.order();
        if let Ok(i) = s.parse::<usize>() {
            return (i < n).then_some(i);
        }
        (0..n).find(|&e| self.element_label(e) == s)
    }
}

pub fn build(spec: &ProblemSpec) -> SResult<Problem> {
    validate(spec)?;
    let m = spec.model.m;
    let k = spec.operator.k;
    let lat = lattice(spec)?;
    let gens = spec
        .group
        .generators
        .iter()
        .enumerate()
        .map(|(i, g)| generator(g, m, k, &format!("group.generators[{i}]")))
        .collect::<SResult<Vec<_>>>()?;
    if let Some(l) = &lat {
        for (i, g) in gens.iter().enumerate() {
            let d = l.preservation_defect(&g.rot);
            if d > 1e-9 {
                return Err(SpecError::new(
                    format!("group.generators[{i}].rot"),
                    format!("does not preserve the period lattice (defect {d:.3e})"),
                ));
            }
        }
    }
    let gs = &spec.group;
    let group = match (&gs.kind, &gs.character_table) {
        (Some(_), Some(_)) => {
            return Err(SpecError::new("group.character_table", "not used with a built-in group kind"));
        }
        (Some(kind), None) => build_named_group(kind, &gens, m, k, lat.as_ref(), gs.max_order),
        (None, Some(t)) => {
            let table = UserCharacterTable {
                names: t.names.clone(),
                class_words: t.class_words.clone(),
                values: t.values.iter().map(|r| r.iter().map(ComplexSpec::value).collect()).collect(),
            };
            build_explicit_group(&gens, &table, m, k, lat.as_ref(), gs.max_order)
        }
        (None, None) if gens.is_empty() => Ok(FiniteGroupAction::trivial(m, k, lat.as_ref())),
        (None, None) => {
            return Err(SpecError::new(
                "group.character_table",
                "explicit generators need a character table (or give group.kind)",
            ));
        }
    }
    .map_err(|e| {
        let path = match e {
            orbizeta_core::Error::CharacterTable(_) => "group.character_table",
            orbizeta_core::Error::OrderTooLarge(_) => "group.max_order",
            _ => "group",
        };
        SpecError::new(path, e.to_string())
    })?;

    let op = &spec.operator;
    let potential = modes(&op.potential, m, k, lat.as_ref(), "operator.potential")?;
    let first = op
        .first_order
        .iter()
        .enumerate()
        .map(|(j, l)| modes(l, m, k, lat.as_ref(), &format!("operator.first_order[{j}]")))
        .collect::<SResult<Vec<_>>>()?;
    let as_field = |t: &TrigPoly| match spec.model.chart_mode {
        ChartMode::Torus => Field::Trig(t.clone()),
        ChartMode::Linear => {
            let order = spec.compute.jet_order.unwrap_or(spec.compute.k_max as u32);
            Field::Jet(t.to_jet(&RVec::zeros(m), order))
        }
    };
    let pot = (!op.potential.is_empty()).then(|| as_field(&potential));
    let first_fields: Vec<Field> = first.iter().map(as_field).collect();
    let symbol = ClassicalSymbol::from_laplace_type(m, k, op.principal, op.c0, &first_fields, pot)
        .map_err(|e| SpecError::new("operator", e.to_string()))?;
    let defect = symbol.equivariance_defect(&group);
    if defect > EQUIVARIANCE_GATE {
        return Err(SpecError::new(
            "operator",
            format!("operator is not equivariant under the group (defect {defect:.3e})"),
        ));
    }
    let model = match lat {
        Some(_) => {
            let mut lm = LatticeModel::new(group.clone(), op.principal, op.c0, spec.oracle.cutoff)
                .map_err(|e| SpecError::new("model", e.to_string()))?
                .with_first_order(first)
                .with_fit_grid(spec.oracle.fit_grid());
            if !op.potential.is_empty() {
                lm = lm.with_potential(potential);
            }
            lm.budget = spec.oracle.budget;
            Some(lm)
        }
        None => None,
    };
    Ok(Problem { group, symbol, model })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CIRCLE: &str = r#"{
        "spec_version": 1,
        "model": {"m": 1, "periods": [6.283185307179586]},
        "group": {"kind": {"cyclic": 2}, "generators": [{"rot": [[-1.0]]}]},
        "operator": {"c0": 1.0}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let s = parse_spec(CIRCLE).unwrap();
        assert_eq!(s.compute.k_max, 4);
        assert_eq!(s.operator.k, 1);
        assert!(s.oracle.enabled);
        assert_eq!(s.output.formats, vec![Format::Json, Format::Csv]);
    }

    #[test]
    fn hash_ignores_key_order_and_whitespace() {
        let a = parse_spec(CIRCLE).unwrap();
        let b = parse_spec(
            r#"{"operator":{"c0":1.0},"group":{"generators":[{"rot":[[-1.0]]}],"kind":{"cyclic":2}},
               "model":{"periods":[6.283185307179586],"m":1},"spec_version":1}"#,
        )
        .unwrap();
        assert_eq!(content_hash(&a), content_hash(&b));
        let mut c = a.clone();
        c.operator.c0 = 2.0;
        assert_ne!(content_hash(&a), content_hash(&c));
    }

    #[test]
    fn canonical_json_sorts_nested_keys() {
        let v: Value = serde_json::from_str(r#"{"b": {"z": 1, "a": [ {"y": 2, "x": 3} ]}, "a": null}"#).unwrap();
        let mut s = String::new();
        write_canonical(&v, &mut s);
        assert_eq!(s, r#"{"a":null,"b":{"a":[{"x":3,"y":2}],"z":1}}"#);
    }

    #[test]
    fn unknown_field_is_located() {
        let text = CIRCLE.replace("\"c0\": 1.0", "\"c0\": 1.0, \"mass\": 2");
        let e = parse_spec(&text).unwrap_err();
        assert_eq!(e.path, "operator.mass");
        assert!(e.message.contains("unknown field"));
    }

    #[test]
    fn wrong_type_is_located() {
        let text = CIRCLE.replace("\"m\": 1", "\"m\": \"one\"");
        assert_eq!(parse_spec(&text).unwrap_err().path, "model.m");
    }

    #[test]
    fn version_is_checked() {
        let text = CIRCLE.replace("\"spec_version\": 1", "\"spec_version\": 2");
        assert_eq!(parse_spec(&text).unwrap_err().path, "spec_version");
    }

    #[test]
    fn non_orthogonal_generator_is_located() {
        let text = CIRCLE.replace("[[-1.0]]", "[[-2.0]]");
        let e = parse_spec(&text).unwrap_err();
        assert_eq!(e.path, "group.generators[0].rot");
        assert!(e.message.contains("orthogonal"));
    }

    #[test]
    fn lattice_breaking_rotation_is_rejected() {
        let text = r#"{
            "spec_version": 1,
            "model": {"m": 2, "periods": [6.283185307179586, 3.0]},
            "group": {"kind": {"cyclic": 4}, "generators": [{"rot": [[0.0, -1.0], [1.0, 0.0]]}]},
            "operator": {}
        }"#;
        let s = parse_spec(text).unwrap();
        let e = build(&s).unwrap_err();
        assert_eq!(e.path, "group.generators[0].rot");
        assert!(e.message.contains("lattice"));
    }

    #[test]
    fn linear_jet_order_below_k_max() {
        let text = r#"{
            "spec_version": 1,
            "model": {"m": 1, "chart_mode": "linear"},
            "operator": {"c0": 1.0},
            "compute": {"k_max": 4, "jet_order": 2},
            "oracle": {"enabled": false}
        }"#;
        let e = parse_spec(text).unwrap_err();
        assert_eq!(e.path, "compute.jet_order");
        assert!(e.message.contains("jet_order < k_max"));
    }

    #[test]
    fn non_equivariant_operator_is_rejected() {
        let text = CIRCLE.replace(
            "\"c0\": 1.0",
            "\"c0\": 1.0, \"potential\": [{\"nu\": [1.0], \"coeff\": 0.25}, {\"nu\": [-1.0], \"coeff\": [0.0, 0.5]}]",
        );
        let s = parse_spec(&text).unwrap();
        assert_eq!(build(&s).unwrap_err().path, "operator");
    }

    #[test]
    fn explicit_group_needs_table() {
        let text = CIRCLE.replace("\"kind\": {\"cyclic\": 2}, ", "");
        let s = parse_spec(&text).unwrap();
        assert_eq!(build(&s).unwrap_err().path, "group.character_table");
    }

    #[test]
    fn explicit_table_builds() {
        let text = CIRCLE.replace(
            "\"kind\": {\"cyclic\": 2}, ",
            "\"character_table\": {\"names\": [\"triv\", \"sign\"], \"class_words\": [[], [0]], \"values\": [[1, 1], [1, [-1, 0]]]}, ",
        );
        let s = parse_spec(&text).unwrap();
        let p = build(&s).unwrap();
        assert_eq!(p.group.order(), 2);
        assert_eq!(p.group.names, vec!["triv".to_string(), "sign".to_string()]);
    }

    #[test]
    fn complex_fiber_must_be_unitary() {
        let text = CIRCLE.replace("[[-1.0]]}", "[[-1.0]], \"fiber\": {\"re\": [[0.0]], \"im\": [[2.0]]}}");
        assert_eq!(parse_spec(&text).unwrap_err().path, "group.generators[0].fiber");
    }

    #[test]
    fn element_labels_round_trip() {
        let p = build(&parse_spec(CIRCLE).unwrap()).unwrap();
        for e in 0..p.group.order() {
            assert_eq!(p.parse_element(&p.element_label(e)), Some(e));
        }
        assert_eq!(p.parse_element("7"), None);
    }
}
