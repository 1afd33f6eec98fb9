//! Fixed-point reduction of power symbols and the residues of the twisted,
//! isotypic and orbifold zeta functions.

use crate::error::{Error, Result};
use crate::field::{factorial, multi_indices, Field};
use crate::geometry::{affine_fixed_set, orbit_type_poset, FixedStratum, Stratification, POINT_TOL};
use crate::group::FiniteGroupAction;
use crate::linalg::{RMat, RVec, C64, ZERO};
use crate::power::{cauchy_power, cauchy_power_numeric, resolvent_recursion, ContourParams, PowerSymbolFamily, ResolventSymbolFamily};
use crate::quadrature::sphere_quadrature;
use crate::symbol::{dx_multi, dxi_multi, normalize, ClassicalSymbol, Term};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Densities are refused for symbols whose equivariance defect exceeds this.
pub const EQUIVARIANCE_GATE: f64 = 1e-8;
pub const DEFAULT_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Backend {
    Exact,
    Contour(ContourParams),
}

/// b̃_{s,j} on one fixed component: ξ₁-only terms whose coefficients live on
/// the adapted coordinates (y₁, w) and are read at w = 0.
#[derive(Debug, Clone)]
pub struct ReducedComponent {
    pub gamma: usize,
    pub component_id: usize,
    pub j: usize,
    pub s: C64,
    pub terms: Vec<Term>,
}

/// Sphere-integrated b̃ for one (γ, component, k); `None` when the density
/// vanishes identically.
#[derive(Debug, Clone)]
struct ReducedDensity {
    field: Option<Field>,
}

/// All reduced densities at one k.
#[derive(Debug, Clone)]
pub struct KDensities {
    pub k: usize,
    pub s: C64,
    per_gamma: Vec<Vec<ReducedDensity>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityRow {
    pub gamma: usize,
    pub component_id: usize,
    pub k: usize,
    pub node: Vec<f64>,
    pub value: C64,
}

/// Sampled η^γ_k on every compact fixed component.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DiracDensityTable {
    pub rows: Vec<DensityRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumDensity {
    pub type_id: usize,
    pub subgroup: Vec<usize>,
    pub dimension: usize,
    /// ∫_{M_υ} η_{υ,k}
    pub integral: C64,
    /// (node, η_{Γ′}(node)/[Γ:Γ′]) over every piece upstairs, so that the
    /// piece integrals of the samples add up to `integral`.
    pub samples: Vec<(Vec<f64>, C64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KResidues {
    pub k: usize,
    pub s: C64,
    pub residue_gamma: Vec<C64>,
    pub residue_isotypic: Vec<C64>,
    pub residue_orbifold: C64,
    pub strata: Vec<StratumDensity>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidueReport {
    pub k_max: usize,
    pub m: usize,
    pub order: f64,
    pub irrep_names: Vec<String>,
    pub per_k: Vec<KResidues>,
}

impl ResidueReport {
    /// max over k of |Σ_i residue_isotypic(i) − residue_gamma(e)|.
    pub fn reconstruction_defect(&self, identity: usize) -> f64 {
        self.per_k
            .iter()
            .map(|r| (r.residue_isotypic.iter().sum::<C64>() - r.residue_gamma[identity]).norm())
            .fold(0.0, f64::max)
    }

    /// max over k of |Σ_υ ∫ η_υ − residue_orbifold|; strata must be present.
    pub fn strata_sum_defect(&self) -> f64 {
        self.per_k
            .iter()
            .map(|r| (r.strata.iter().map(|s| s.integral).sum::<C64>() - r.residue_orbifold).norm())
            .fold(0.0, f64::max)
    }
}

/// Pole location s_k = (k − m)/d.
pub fn pole_location(m: usize, order: f64, k: usize) -> f64 {
    (k as f64 - m as f64) / order
}

/// Rewrites power components in adapted coordinates: x = p + F·y₁ + N·(t̄−I)⁻¹·w,
/// ξ = F·ξ₁ + N·ξ₂.
pub fn bar_substitution(stratum: &FixedStratum, comps: &[Vec<Term>]) -> Result<Vec<Vec<Term>>> {
    let (fb, nb) = (&stratum.fixed_basis, &stratum.normal_basis);
    let m = fb.nrows();
    let n = fb.ncols();
    let mut q = RMat::zeros(m, m);
    q.columns_mut(0, n).copy_from(fb);
    q.columns_mut(n, m - n).copy_from(nb);
    let mut lin = q.clone();
    if m > n {
        let shifted = &stratum.tbar - RMat::identity(m - n, m - n);
        let inv = shifted
            .try_inverse()
            .ok_or_else(|| Error::EigenvalueOne(0.0))?;
        lin.columns_mut(n, m - n).copy_from(&(nb * inv));
    }
    let p = stratum.base_point();
    comps
        .iter()
        .map(|c| {
            let mut out = Vec::with_capacity(c.len());
            for t in c {
                out.extend(t.transform(p, &lin, &q)?);
            }
            Ok(normalize(out))
        })
        .collect()
}

/// b̃_{s,j} = Σ_{|α|+k=j} (1/α!) D_w^α ∂_{ξ₂}^α ā_{s,k}, restricted to ξ₂ = 0.
/// `bar` holds components already fixed at s and bar-substituted.
pub fn reduce_terms(bar: &[Vec<Term>], n: usize, m: usize, j: usize, c: f64) -> Result<Vec<Term>> {
    let mut acc = Vec::new();
    for (k, comp) in bar.iter().enumerate().take(j + 1) {
        let order = (j - k) as u32;
        for beta in multi_indices(m - n, order) {
            if beta.iter().sum::<u32>() != order {
                continue;
            }
            let mut alpha = vec![0u32; n];
            alpha.extend(&beta);
            let da = dxi_multi(comp, &alpha, c);
            let dd = dx_multi(&da, &alpha)?;
            let w = 1.0 / beta.iter().map(|&b| factorial(b)).product::<f64>();
            for t in dd {
                if t.xi[n..].iter().any(|&e| e != 0) {
                    continue;
                }
                let mut u = t.scale(C64::new(w, 0.0));
                u.xi.truncate(n);
                acc.push(u);
            }
        }
    }
    Ok(normalize(acc))
}

/// ∫_{S^{n−1}} b̃ d̄ξ̄ as a coefficient field; q ≡ c on the unit sphere.
fn sphere_integrate(terms: &[Term], n: usize, c: f64, m: usize, k: usize, min_level: usize) -> Result<Field> {
    let max_deg = terms.iter().map(|t| t.xi.iter().sum::<u32>()).max().unwrap_or(0) as usize;
    let rule = sphere_quadrature(n, max_deg.div_ceil(2).max(1).max(min_level))?;
    let mut out = Field::scalar(m, k, ZERO);
    for t in terms {
        let moment = rule.integrate(|xi| t.xi.iter().zip(xi).map(|(&a, &v)| v.powi(a as i32)).product());
        let qr = (t.q.offset * c.ln()).exp();
        if moment == 0.0 {
            continue;
        }
        out = out.add(&t.coeff[0].scale(qr * moment));
    }
    out.prune(0.0);
    Ok(out)
}

pub struct ResidueEngine {
    pub g: FiniteGroupAction,
    pub symbol: ClassicalSymbol,
    pub resolvent: ResolventSymbolFamily,
    pub family: PowerSymbolFamily,
    pub backend: Backend,
    /// Trapezoid nodes per fixed-torus dimension.
    pub grid: usize,
    /// Lower bound on the sphere rule level; the rule is otherwise the
    /// smallest one exact for the integrand.
    pub sphere_level: usize,
    pub strata: Vec<Vec<FixedStratum>>,
}

impl ResidueEngine {
    pub fn new(g: FiniteGroupAction, symbol: ClassicalSymbol, k_max: usize, backend: Backend) -> Result<Self> {
        let resolvent = resolvent_recursion(&symbol, k_max)?;
        let family = cauchy_power(&resolvent);
        Self::with_families(g, symbol, resolvent, family, backend)
    }

    /// Engine over precomputed (e.g. cached) families.
    pub fn with_families(
        g: FiniteGroupAction,
        symbol: ClassicalSymbol,
        resolvent: ResolventSymbolFamily,
        family: PowerSymbolFamily,
        backend: Backend,
    ) -> Result<Self> {
        if symbol.m != g.m || symbol.k != g.k {
            return Err(Error::Dimension(format!(
                "symbol on ℝ^{}⊗ℂ^{} but action on ℝ^{}⊗ℂ^{}",
                symbol.m, symbol.k, g.m, g.k
            )));
        }
        let defect = symbol.equivariance_defect(&g);
        if defect > EQUIVARIANCE_GATE {
            return Err(Error::NotEquivariant(defect));
        }
        let strata = (0..g.order())
            .map(|e| affine_fixed_set(&g, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResidueEngine {
            g,
            symbol,
            resolvent,
            family,
            backend,
            grid: DEFAULT_GRID,
            sphere_level: 0,
            strata,
        })
    }

    pub fn k_max(&self) -> usize {
        self.family.truncation()
    }

    pub fn pole(&self, k: usize) -> C64 {
        C64::new(pole_location(self.g.m, self.symbol.order, k), 0.0)
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k > self.k_max() {
            return Err(Error::Precondition(format!(
                "k = {k} exceeds the power-symbol truncation {}",
                self.k_max()
            )));
        }
        Ok(())
    }

    /// Power components 0..=j fixed at s by the selected backend.
    fn components_at(&self, s: C64, j: usize) -> Result<Vec<Vec<Term>>> {
        match &self.backend {
            Backend::Exact => Ok(self.family.truncated(j).at_s(s)),
            Backend::Contour(p) => {
                let mut r = self.resolvent.clone();
                r.components.truncate(j + 1);
                cauchy_power_numeric(&r, s, p)
            }
        }
    }

    pub fn reduced_component(&self, gamma: usize, component_id: usize, j: usize, s: C64) -> Result<ReducedComponent> {
        let st = self.stratum(gamma, component_id)?;
        let comps = self.components_at(s, j)?;
        let bar = bar_substitution(st, &comps)?;
        let terms = reduce_terms(&bar, st.n, self.g.m, j, self.symbol.principal)?;
        Ok(ReducedComponent {
            gamma,
            component_id,
            j,
            s,
            terms,
        })
    }

    fn stratum(&self, gamma: usize, component_id: usize) -> Result<&FixedStratum> {
        self.strata
            .get(gamma)
            .and_then(|v| v.get(component_id))
            .ok_or_else(|| Error::Precondition(format!("no fixed component {component_id} for element {gamma}")))
    }

    /// Reduced densities of every (γ, component) at pole index k.
    pub fn densities(&self, k: usize) -> Result<KDensities> {
        self.check_k(k)?;
        let m = self.g.m;
        let s = self.pole(k);
        let comps = self.components_at(s, k)?;
        let per_gamma = (0..self.g.order())
            .into_par_iter()
            .map(|gamma| {
                self.strata[gamma]
                    .iter()
                    .map(|st| {
                        let n = st.n;
                        if n == 0 || k + n < m {
                            return Ok(ReducedDensity { field: None });
                        }
                        let j = k + n - m;
                        let bar = bar_substitution(st, &comps[..=j])?;
                        let terms = reduce_terms(&bar, n, m, j, self.symbol.principal)?;
                        let f = sphere_integrate(&terms, n, self.symbol.principal, m, self.g.k, self.sphere_level)?;
                        Ok(ReducedDensity { field: Some(f) })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KDensities { k, s, per_gamma })
    }

    /// η^γ_k at a point x of component `component_id`.
    pub fn density_at(&self, dens: &KDensities, gamma: usize, component_id: usize, x: &RVec) -> C64 {
        let Some(f) = &dens.per_gamma[gamma][component_id].field else {
            return ZERO;
        };
        let st = &self.strata[gamma][component_id];
        let mut delta = x - st.base_point();
        if let Some(mem) = &st.component.membership {
            // lattice coordinates adapted to the subtorus: free entries move
            // along `directions`, pinned ones differ by integers on the component
            let z = &mem.to_z * &delta;
            let free = (0..self.g.m).filter(|i| !mem.pinned.iter().any(|(p, _)| p == i));
            delta = RVec::zeros(self.g.m);
            for (col, i) in free.enumerate() {
                delta += st.component.directions.column(col) * (z[i] - z[i].round());
            }
        } else if let Some(l) = &self.g.lattice {
            // nearest lattice representative of x − p along the fixed set
            delta = l.reduce(&delta);
            let mut best = delta.clone();
            let p = &l.basis;
            for corner in 0..(1usize << self.g.m) {
                let shift = RVec::from_fn(self.g.m, |i, _| if corner >> i & 1 == 1 { -1.0 } else { 0.0 });
                let cand = &delta + p * shift;
                if cand.norm() < best.norm() {
                    best = cand;
                }
            }
            delta = best;
        }
        let y1 = st.fixed_basis.transpose() * &delta;
        let mut y = vec![0.0; self.g.m];
        y[..st.n].copy_from_slice(y1.as_slice());
        let v = f.eval(&y) * &self.g.elements[gamma].fiber;
        -v.trace() / self.symbol.order
    }

    fn component_nodes(&self, st: &FixedStratum) -> Vec<RVec> {
        st.component
            .grid(self.grid)
            .into_iter()
            .map(|u| st.component.point(&u))
            .collect()
    }

    /// Σ_components d·∫ η^γ_k.
    pub fn residue_gamma_from(&self, dens: &KDensities, gamma: usize) -> Result<C64> {
        let mut total = ZERO;
        for (cid, st) in self.strata[gamma].iter().enumerate() {
            if dens.per_gamma[gamma][cid].field.is_none() {
                continue;
            }
            if !st.component.compact {
                return Err(Error::NonCompactFixedSet(gamma));
            }
            let nodes = self.component_nodes(st);
            let mean: C64 =
                nodes.iter().map(|x| self.density_at(dens, gamma, cid, x)).sum::<C64>() / nodes.len() as f64;
            total += mean * st.component.volume * st.d_weight;
        }
        Ok(total)
    }

    pub fn residue_gamma(&self, gamma: usize, k: usize) -> Result<C64> {
        let dens = self.densities(k)?;
        self.residue_gamma_from(&dens, gamma)
    }

    pub fn residue_isotypic(&self, irrep: usize, k: usize) -> Result<C64> {
        let weights = self.g.isotypic_weights(irrep)?;
        let dens = self.densities(k)?;
        let mut total = ZERO;
        for (gamma, w) in weights.iter().enumerate() {
            total += w * self.residue_gamma_from(&dens, gamma)?;
        }
        Ok(total)
    }

    pub fn residue_orbifold(&self, k: usize) -> Result<C64> {
        self.residue_isotypic(0, k)
    }

    /// Sampled densities on every compact fixed component.
    pub fn density_table(&self, dens: &KDensities) -> DiracDensityTable {
        let mut rows = Vec::new();
        for (gamma, comps) in self.strata.iter().enumerate() {
            for (cid, st) in comps.iter().enumerate() {
                if !st.component.compact {
                    continue;
                }
                for x in self.component_nodes(st) {
                    let value = self.density_at(dens, gamma, cid, &x);
                    rows.push(DensityRow {
                        gamma,
                        component_id: cid,
                        k: dens.k,
                        node: x.as_slice().to_vec(),
                        value,
                    });
                }
            }
        }
        DiracDensityTable { rows }
    }

    fn locate(&self, gamma: usize, x: &RVec, n: usize) -> Option<usize> {
        self.strata[gamma]
            .iter()
            .position(|st| st.n == n && st.component.contains(x, 1e3 * POINT_TOL))
    }

    /// max |η^{γ′γγ′⁻¹}(γ′x) − η^γ(x)| over sample nodes.
    pub fn covariance_check(&self, dens: &KDensities, per_dim: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for gamma in 0..self.g.order() {
            for (cid, st) in self.strata[gamma].iter().enumerate() {
                if !st.component.compact {
                    continue;
                }
                for u in st.component.grid(per_dim) {
                    let x = st.component.point(&u);
                    let v = self.density_at(dens, gamma, cid, &x);
                    for h in 0..self.g.order() {
                        let conj = self.g.conjugate(h, gamma);
                        let y = self.g.act(h, &x);
                        let target = self.locate(conj, &y, st.n).ok_or_else(|| {
                            Error::Precondition(format!("image of a fixed point of {gamma} not fixed by {conj}"))
                        })?;
                        worst = worst.max((self.density_at(dens, conj, target, &y) - v).norm());
                    }
                }
            }
        }
        Ok(worst)
    }

    /// η_{υ,k} on every orbit-type stratum with its integral over M_υ.
    pub fn strata_densities(&self, dens: &KDensities, strat: &Stratification) -> Result<Vec<StratumDensity>> {
        let order = self.g.order();
        let mut out = Vec::with_capacity(strat.types.len());
        for (tid, ty) in strat.types.iter().enumerate() {
            let index = (order / ty.order) as f64;
            let mut integral = ZERO;
            let mut samples = Vec::new();
            let mut dimension = 0;
            for piece in &strat.strata[tid] {
                let comp = &piece.component;
                dimension = comp.n;
                if comp.n == 0 {
                    samples.push((comp.base_point.as_slice().to_vec(), ZERO));
                    continue;
                }
                if !comp.compact {
                    return Err(Error::NonCompactFixedSet(piece.subgroup[0]));
                }
                let probe = comp.generic_point();
                let mut members = Vec::new();
                for &gamma in &piece.subgroup {
                    if let Some(cid) = self.locate(gamma, &probe, comp.n) {
                        members.push((gamma, cid));
                    }
                }
                let nodes: Vec<RVec> = comp.grid(self.grid).into_iter().map(|u| comp.point(&u)).collect();
                let mut sum = ZERO;
                for x in &nodes {
                    let v: C64 = members
                        .iter()
                        .map(|&(gamma, cid)| self.strata[gamma][cid].d_weight * self.density_at(dens, gamma, cid, x))
                        .sum::<C64>()
                        / piece.subgroup.len() as f64;
                    sum += v;
                    samples.push((x.as_slice().to_vec(), v / index));
                }
                integral += sum / nodes.len() as f64 * comp.volume;
            }
            out.push(StratumDensity {
                type_id: tid,
                subgroup: ty.subgroup.clone(),
                dimension,
                integral: integral / index,
                samples,
            });
        }
        Ok(out)
    }

    /// Residues for k = 0..=k_max, with strata densities when requested.
    pub fn report(&self, with_strata: bool) -> Result<ResidueReport> {
        Ok(self.report_with_tables(with_strata, false)?.0)
    }

    /// As `report`, also returning the sampled density table of each k
    /// when `tables` is set.
    pub fn report_with_tables(&self, with_strata: bool, tables: bool) -> Result<(ResidueReport, Vec<DiracDensityTable>)> {
        let strat = if with_strata { Some(orbit_type_poset(&self.g)?) } else { None };
        let weights = (0..self.g.irrep_count())
            .map(|i| self.g.isotypic_weights(i))
            .collect::<Result<Vec<_>>>()?;
        let mut per_k = Vec::with_capacity(self.k_max() + 1);
        let mut out_tables = Vec::new();
        for k in 0..=self.k_max() {
            let dens = self.densities(k)?;
            if tables {
                out_tables.push(self.density_table(&dens));
            }
            let residue_gamma = (0..self.g.order())
                .map(|e| self.residue_gamma_from(&dens, e))
                .collect::<Result<Vec<_>>>()?;
            let residue_isotypic: Vec<C64> = weights
                .iter()
                .map(|w| w.iter().zip(&residue_gamma).map(|(a, b)| a * b).sum())
                .collect();
            let strata = match &strat {
                Some(st) => self.strata_densities(&dens, st)?,
                None => Vec::new(),
            };
            per_k.push(KResidues {
                k,
                s: dens.s,
                residue_orbifold: residue_isotypic[0],
                residue_gamma,
                residue_isotypic,
                strata,
            });
        }
        let report = ResidueReport {
            k_max: self.k_max(),
            m: self.g.m,
            order: self.symbol.order,
            irrep_names: self.g.names.clone(),
            per_k,
        };
        Ok((report, out_tables))
    }
}
