//! Fixed-point sets, adapted frames, determinant weights and the orbit-type
//! stratification of a finite isometric action on ℝᵐ or a flat torus.

use crate::error::{Error, Result};
use crate::group::{FiniteGroupAction, IsometryElement};
use crate::lattice::Lattice;
use crate::linalg::{diagonalize_integer, dist_to_int, frac, int_to_real, kernel_split, RMat, RVec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Singular-value threshold separating eigenvalue-1 directions.
pub const KERNEL_TOL: f64 = 1e-9;
/// Tolerance for point congruences (γx ≡ x).
pub const POINT_TOL: f64 = 1e-9;

/// Orthonormal fixed/normal splitting of an orthogonal matrix and the normal
/// block t̄ = Nᵀ·rot·N.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedFrame {
    pub fixed_basis: RMat,
    pub normal_basis: RMat,
    pub tbar: RMat,
}

pub fn fixed_subspace(rot: &RMat) -> FixedFrame {
    let m = rot.nrows();
    let a = rot - RMat::identity(m, m);
    let (f, n) = kernel_split(&a, KERNEL_TOL);
    let tbar = n.transpose() * rot * &n;
    FixedFrame {
        fixed_basis: f,
        normal_basis: n,
        tbar,
    }
}

/// |det(t̄ − I)|⁻¹, with the empty-matrix convention giving 1.
pub fn normal_determinant(tbar: &RMat) -> Result<f64> {
    let p = tbar.nrows();
    if p == 0 {
        return Ok(1.0);
    }
    let eig = tbar.complex_eigenvalues();
    let clearance = eig
        .iter()
        .map(|mu| (mu - 1.0).norm())
        .fold(f64::INFINITY, f64::min);
    if clearance <= 1e-8 {
        return Err(Error::EigenvalueOne(clearance));
    }
    let det = (tbar - RMat::identity(p, p)).determinant();
    Ok(1.0 / det.abs())
}

/// How to test membership of a point in a torus component: lattice-adapted
/// coordinates z = to_z·x whose listed entries are pinned modulo 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Membership {
    pub to_z: RMat,
    pub pinned: Vec<(usize, f64)>,
}

/// A connected component of a fixed set: base_point + span(directions).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedComponent {
    pub base_point: RVec,
    /// m×n. On a torus: generators of the subtorus period lattice. In a
    /// linear chart: an orthonormal basis of the (non-compact) fixed space.
    pub directions: RMat,
    pub n: usize,
    pub compact: bool,
    /// n-dimensional volume of the compact subtorus (1 for points).
    pub volume: f64,
    pub membership: Option<Membership>,
}

impl FixedComponent {
    pub fn contains(&self, x: &RVec, tol: f64) -> bool {
        match &self.membership {
            Some(mem) => {
                let z = &mem.to_z * x;
                mem.pinned.iter().all(|&(i, v)| dist_to_int(z[i] - v) < tol)
            }
            None => {
                // Linear: x − base lies in span(directions).
                let d = x - &self.base_point;
                let proj = &self.directions * (self.directions.transpose() * &d);
                (d - proj).amax() < tol
            }
        }
    }

    /// Point base + G·u for lattice parameters u ∈ [0,1)ⁿ.
    pub fn point(&self, u: &[f64]) -> RVec {
        let mut x = self.base_point.clone();
        for (j, &uj) in u.iter().enumerate() {
            x += self.directions.column(j) * uj;
        }
        x
    }

    /// Uniform periodic grid with `per_dim` nodes per direction, as lattice
    /// parameters u. Returns a single empty parameter for points.
    pub fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![]];
        for _ in 0..self.n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..per_dim).map(move |i| {
                        let mut q = p.clone();
                        q.push(i as f64 / per_dim as f64);
                        q
                    })
                })
                .collect();
        }
        out
    }

    /// A point avoiding special sub-loci, used to read off generic isotropy.
    pub fn generic_point(&self) -> RVec {
        let u: Vec<f64> = (0..self.n)
            .map(|j| frac(0.1234567 + (j as f64 + 1.0) * 0.6180339887498949, 0.0))
            .collect();
        if self.compact {
            self.point(&u)
        } else {
            self.point(&u.iter().map(|v| 3.0 * v).collect::<Vec<_>>())
        }
    }
}

/// Fixed-set component of one element with its adapted frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedStratum {
    pub gamma: usize,
    pub component_id: usize,
    pub component: FixedComponent,
    pub fixed_basis: RMat,
    pub normal_basis: RMat,
    pub tbar: RMat,
    pub n: usize,
    pub d_weight: f64,
}

impl FixedStratum {
    pub fn base_point(&self) -> &RVec {
        &self.component.base_point
    }

    /// Period lattice of the compact subtorus (torus models only).
    pub fn torus_extent(&self) -> Option<&RMat> {
        self.component.compact.then_some(&self.component.directions)
    }

    /// Adapted fixed-direction coordinates x₁ = Fᵀ(x − base).
    pub fn adapted_coords(&self, x: &RVec) -> RVec {
        self.fixed_basis.transpose() * (x - &self.component.base_point)
    }
}

/// Solves the simultaneous fixed-point conditions of a set of elements.
fn solve_fixed(elems: &[&IsometryElement], m: usize, lattice: Option<&Lattice>) -> Result<Vec<FixedComponent>> {
    match lattice {
        Some(l) => solve_torus(elems, m, l),
        None => Ok(solve_linear(elems, m).into_iter().collect()),
    }
}

fn solve_linear(elems: &[&IsometryElement], m: usize) -> Option<FixedComponent> {
    let rows = elems.len() * m;
    let mut a = RMat::zeros(rows, m);
    let mut b = RVec::zeros(rows);
    for (h, e) in elems.iter().enumerate() {
        let block = &e.rot - RMat::identity(m, m);
        a.view_mut((h * m, 0), (m, m)).copy_from(&block);
        b.rows_mut(h * m, m).copy_from(&(-&e.trans));
    }
    let (dirs, _) = kernel_split(&a, KERNEL_TOL);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, KERNEL_TOL).ok()?;
    if (&a * &x - &b).amax() > POINT_TOL {
        return None;
    }
    // Pick the particular solution orthogonal to the fixed directions.
    let x = &x - &dirs * (dirs.transpose() * &x);
    let n = dirs.ncols();
    Some(FixedComponent {
        base_point: x,
        directions: dirs,
        n,
        compact: n == 0,
        volume: 1.0,
        membership: None,
    })
}

fn solve_torus(elems: &[&IsometryElement], m: usize, l: &Lattice) -> Result<Vec<FixedComponent>> {
    let mut a: Vec<Vec<i64>> = Vec::with_capacity(elems.len() * m);
    let mut b: Vec<f64> = Vec::with_capacity(elems.len() * m);
    for e in elems {
        let (mi, defect) = l.integer_form(&e.rot);
        if defect > 1e-9 || l.preservation_defect(&e.rot) > 1e-9 {
            return Err(Error::LatticeNotPreserved(e.index, defect.max(l.preservation_defect(&e.rot))));
        }
        let t = l.coords(&e.trans);
        for (i, row) in mi.iter().enumerate() {
            let mut r = row.clone();
            r[i] -= 1;
            a.push(r);
            b.push(-t[i]);
        }
    }
    let dg = diagonalize_integer(&a, m);
    let ub: Vec<f64> = dg
        .u
        .iter()
        .map(|row| row.iter().zip(&b).map(|(&u, &v)| u as f64 * v).sum())
        .collect();
    // Consistency of rows whose diagonal entry vanishes.
    for (i, &v) in ub.iter().enumerate() {
        let di = dg.d.get(i).copied().unwrap_or(0);
        if di == 0 && dist_to_int(v) > 1e-9 {
            return Ok(vec![]);
        }
    }
    let v = int_to_real(&dg.v, m);
    let free: Vec<usize> = (0..m).filter(|&j| dg.d[j] == 0).collect();
    let pinned_idx: Vec<usize> = (0..m).filter(|&j| dg.d[j] != 0).collect();
    let directions = RMat::from_fn(m, free.len(), |i, j| (&l.basis * &v)[(i, free[j])]);
    let n = free.len();
    let volume = if n == 0 {
        1.0
    } else {
        (directions.transpose() * &directions).determinant().sqrt()
    };
    let v_inv = v.clone().try_inverse().expect("unimodular");
    let p_inv = l.basis.clone().try_inverse().expect("invertible basis");
    let to_z = &v_inv * p_inv;

    let mut combos: Vec<Vec<i64>> = vec![vec![]];
    for &i in &pinned_idx {
        let d = dg.d[i].abs();
        combos = combos
            .into_iter()
            .flat_map(|c| {
                (0..d).map(move |j| {
                    let mut c2 = c.clone();
                    c2.push(j);
                    c2
                })
            })
            .collect();
    }
    let mut out = Vec::with_capacity(combos.len());
    for c in combos {
        let mut z = RVec::zeros(m);
        let mut pinned = Vec::with_capacity(pinned_idx.len());
        for (&i, &j) in pinned_idx.iter().zip(&c) {
            let zi = frac((ub[i] + j as f64) / dg.d[i] as f64, 1e-12);
            z[i] = zi;
            pinned.push((i, zi));
        }
        let x = l.reduce(&(&l.basis * (&v * z)));
        out.push(FixedComponent {
            base_point: x,
            directions: directions.clone(),
            n,
            compact: true,
            volume,
            membership: Some(Membership {
                to_z: to_z.clone(),
                pinned,
            }),
        });
    }
    Ok(out)
}

/// All connected components of the fixed set of `gamma`, each with its frame
/// and determinant weight. Component order follows the lexicographic order of
/// the pinned lattice coordinates.
pub fn affine_fixed_set(g: &FiniteGroupAction, gamma: usize) -> Result<Vec<FixedStratum>> {
    let e = &g.elements[gamma];
    let frame = fixed_subspace(&e.rot);
    let d_weight = normal_determinant(&frame.tbar)?;
    let comps = solve_fixed(&[e], g.m, g.lattice.as_ref())?;
    comps
        .into_iter()
        .enumerate()
        .map(|(component_id, component)| {
            if component.n != frame.fixed_basis.ncols() {
                return Err(Error::Precondition(format!(
                    "fixed-set dimension mismatch for element {gamma}: {} vs {}",
                    component.n,
                    frame.fixed_basis.ncols()
                )));
            }
            Ok(FixedStratum {
                gamma,
                component_id,
                n: component.n,
                component,
                fixed_basis: frame.fixed_basis.clone(),
                normal_basis: frame.normal_basis.clone(),
                tbar: frame.tbar.clone(),
                d_weight,
            })
        })
        .collect()
}

/// Is γx ≡ x (mod the lattice when present)?
pub fn fixes(g: &FiniteGroupAction, gamma: usize, x: &RVec) -> bool {
    let y = g.elements[gamma].apply(x);
    match &g.lattice {
        Some(l) => l.congruent(&y, x, POINT_TOL),
        None => (y - x).amax() < POINT_TOL,
    }
}

/// Isotropy subgroup {γ : γx ≡ x}, sorted.
pub fn isotropy_group(g: &FiniteGroupAction, x: &RVec) -> Vec<usize> {
    (0..g.order()).filter(|&e| fixes(g, e, x)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitType {
    pub class_id: usize,
    /// Canonical representative of the conjugacy class of isotropy subgroups.
    pub subgroup: Vec<usize>,
    pub order: usize,
}

/// Closure of one component of Fix(H) on which the isotropy is exactly H.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumPiece {
    pub subgroup: Vec<usize>,
    pub component: FixedComponent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stratification {
    pub types: Vec<OrbitType>,
    /// strata[t] lists the pieces of M_υ upstairs, over every conjugate of the
    /// representative subgroup.
    pub strata: Vec<Vec<StratumPiece>>,
    /// poset[a][b] is true iff types[a] ⪯ types[b] (subconjugacy).
    pub poset: Vec<Vec<bool>>,
}

impl Stratification {
    pub fn classify(&self, g: &FiniteGroupAction, subgroup: &[usize]) -> Option<usize> {
        let canon = g.canonical_subgroup(subgroup);
        self.types.iter().position(|t| t.subgroup == canon)
    }

    pub fn type_of(&self, g: &FiniteGroupAction, x: &RVec) -> Option<usize> {
        self.classify(g, &isotropy_group(g, x))
    }
}

/// Every subgroup of the group, each as a sorted element list.
pub fn all_subgroups(g: &FiniteGroupAction) -> Vec<Vec<usize>> {
    let mut found: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut gens_of: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let trivial = vec![g.identity];
    found.insert(trivial.clone());
    gens_of.push((trivial, vec![]));
    let mut i = 0;
    while i < gens_of.len() {
        let (set, gens) = gens_of[i].clone();
        for e in 0..g.order() {
            if set.binary_search(&e).is_ok() {
                continue;
            }
            let mut ng = gens.clone();
            ng.push(e);
            let s = g.closure(&ng);
            if found.insert(s.clone()) {
                gens_of.push((s, ng));
            }
        }
        i += 1;
    }
    found.into_iter().collect()
}

/// Orbit types, strata and the subconjugacy poset.
pub fn orbit_type_poset(g: &FiniteGroupAction) -> Result<Stratification> {
    let mut pieces: Vec<StratumPiece> = Vec::new();
    for h in all_subgroups(g) {
        let elems: Vec<&IsometryElement> = h.iter().map(|&e| &g.elements[e]).collect();
        for comp in solve_fixed(&elems, g.m, g.lattice.as_ref())? {
            if isotropy_group(g, &comp.generic_point()) == h {
                pieces.push(StratumPiece {
                    subgroup: h.clone(),
                    component: comp,
                });
            }
        }
    }
    let mut reps: Vec<Vec<usize>> = pieces
        .iter()
        .map(|p| g.canonical_subgroup(&p.subgroup))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    reps.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    let types: Vec<OrbitType> = reps
        .iter()
        .enumerate()
        .map(|(class_id, s)| OrbitType {
            class_id,
            subgroup: s.clone(),
            order: s.len(),
        })
        .collect();
    let mut strata: Vec<Vec<StratumPiece>> = vec![Vec::new(); types.len()];
    for p in pieces {
        let c = g.canonical_subgroup(&p.subgroup);
        let t = reps.iter().position(|r| *r == c).expect("type registered");
        strata[t].push(p);
    }
    let poset = reps
        .iter()
        .map(|a| reps.iter().map(|b| g.subconjugate(a, b)).collect())
        .collect();
    Ok(Stratification {
        types,
        strata,
        poset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{build_named_group, rotation2, Generator, GroupKind};
    use std::f64::consts::PI;

    fn diag(v: &[f64]) -> RMat {
        RMat::from_diagonal(&RVec::from_column_slice(v))
    }

    #[test]
    fn fixed_subspace_examples() {
        let fr = fixed_subspace(&RMat::identity(2, 2));
        assert_eq!(fr.fixed_basis.ncols(), 2);
        assert_eq!(fr.tbar.nrows(), 0);
        let fr = fixed_subspace(&diag(&[1.0, -1.0]));
        assert_eq!(fr.fixed_basis.ncols(), 1);
        assert!((fr.tbar[(0, 0)] + 1.0).abs() < 1e-14);
        let fr = fixed_subspace(&rotation2(2.0 * PI / 3.0));
        assert_eq!(fr.fixed_basis.ncols(), 0);
        assert_eq!(fr.tbar.nrows(), 2);
    }

    #[test]
    fn normal_determinant_examples() {
        assert!((normal_determinant(&diag(&[-1.0])).unwrap() - 0.5).abs() < 1e-15);
        assert!((normal_determinant(&rotation2(PI)).unwrap() - 0.25).abs() < 1e-14);
        assert!((normal_determinant(&rotation2(2.0 * PI / 3.0)).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(normal_determinant(&RMat::zeros(0, 0)).unwrap(), 1.0);
        assert!(matches!(
            normal_determinant(&diag(&[1.0])),
            Err(Error::EigenvalueOne(_))
        ));
    }

    fn torus_reflection() -> FiniteGroupAction {
        let l = Lattice::from_periods(&[2.0 * PI, 2.0 * PI]);
        let gen = Generator::linear(diag(&[1.0, -1.0]), 1);
        build_named_group(&GroupKind::Cyclic(2), &[gen], 2, 1, Some(&l), 256).unwrap()
    }

    #[test]
    fn torus_reflection_fixed_circles() {
        let g = torus_reflection();
        let s = 1 - g.identity;
        let comps = affine_fixed_set(&g, s).unwrap();
        assert_eq!(comps.len(), 2);
        let mut heights: Vec<f64> = comps.iter().map(|c| c.base_point()[1]).collect();
        heights.sort_by(f64::total_cmp);
        assert!(heights[0].abs() < 1e-12 && (heights[1] - PI).abs() < 1e-12);
        for c in &comps {
            assert_eq!(c.n, 1);
            assert!((c.d_weight - 0.5).abs() < 1e-15);
            assert!((c.component.volume - 2.0 * PI).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_reflection_and_translation() {
        let l = Lattice::from_periods(&[2.0 * PI]);
        let refl = Generator::linear(diag(&[-1.0]), 1);
        let g = build_named_group(&GroupKind::Cyclic(2), &[refl], 1, 1, Some(&l), 256).unwrap();
        let comps = affine_fixed_set(&g, 1 - g.identity).unwrap();
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.n == 0));

        let shift = Generator::linear(diag(&[1.0]), 1).with_trans(RVec::from_element(1, PI));
        let g = build_named_group(&GroupKind::Cyclic(2), &[shift], 1, 1, Some(&l), 256).unwrap();
        assert!(affine_fixed_set(&g, 1 - g.identity).unwrap().is_empty());
    }

    #[test]
    fn lattice_not_preserved_is_an_error() {
        let l = Lattice::from_periods(&[2.0 * PI, 2.0 * PI]);
        let gen = Generator::linear(rotation2(2.0 * PI / 3.0), 1);
        let mut g = build_named_group(&GroupKind::Cyclic(3), &[gen], 2, 1, None, 256).unwrap();
        g.lattice = Some(l);
        let e = (0..3).find(|&e| e != g.identity).unwrap();
        assert!(matches!(affine_fixed_set(&g, e), Err(Error::LatticeNotPreserved(..))));
    }

    fn dihedral2_torus() -> FiniteGroupAction {
        let l = Lattice::from_periods(&[2.0 * PI, 2.0 * PI]);
        let r = Generator::linear(rotation2(PI), 1);
        let f = Generator::linear(diag(&[1.0, -1.0]), 1);
        build_named_group(&GroupKind::Dihedral(2), &[r, f], 2, 1, Some(&l), 256).unwrap()
    }

    #[test]
    fn isotropy_examples() {
        let g = dihedral2_torus();
        assert_eq!(isotropy_group(&g, &RVec::from_column_slice(&[0.0, 0.0])).len(), 4);
        assert_eq!(isotropy_group(&g, &RVec::from_column_slice(&[0.3, 1.1])).len(), 1);
        // Exhaustive half-lattice check: all 4 half-period points are fully fixed.
        for i in 0..4 {
            for j in 0..4 {
                let x = RVec::from_column_slice(&[i as f64 * PI / 2.0, j as f64 * PI / 2.0]);
                let iso = isotropy_group(&g, &x).len();
                let expect = if i % 2 == 0 && j % 2 == 0 {
                    4
                } else if i % 2 == 0 || j % 2 == 0 {
                    2
                } else {
                    1
                };
                assert_eq!(iso, expect, "point ({i},{j})");
            }
        }
    }

    #[test]
    fn dihedral2_strata() {
        let g = dihedral2_torus();
        let st = orbit_type_poset(&g).unwrap();
        let orders: Vec<usize> = st.types.iter().map(|t| t.order).collect();
        assert_eq!(orders[0], 1);
        assert!(orders.contains(&2) && orders.contains(&4));
        let top = st.types.iter().position(|t| t.order == 4).unwrap();
        assert_eq!(st.strata[top].len(), 4);
        assert!(st.strata[top].iter().all(|p| p.component.n == 0));
        for a in 0..st.types.len() {
            assert!(st.poset[0][a]);
            assert!(st.poset[a][a]);
        }
    }

    #[test]
    fn circle_reflection_strata() {
        let l = Lattice::from_periods(&[2.0 * PI]);
        let refl = Generator::linear(diag(&[-1.0]), 1);
        let g = build_named_group(&GroupKind::Cyclic(2), &[refl], 1, 1, Some(&l), 256).unwrap();
        let st = orbit_type_poset(&g).unwrap();
        assert_eq!(st.types.len(), 2);
        assert_eq!(st.strata[0].len(), 1);
        assert_eq!(st.strata[0][0].component.n, 1);
        assert_eq!(st.strata[1].len(), 2);
    }

    #[test]
    fn conjugation_covariance_of_fixed_sets() {
        let l = Lattice::from_periods(&[2.0 * PI, 2.0 * PI]);
        let r = Generator::linear(rotation2(PI / 2.0), 1);
        let f = Generator::linear(diag(&[1.0, -1.0]), 1);
        let g = build_named_group(&GroupKind::Dihedral(4), &[r, f], 2, 1, Some(&l), 256).unwrap();
        for gamma in 0..g.order() {
            let base = affine_fixed_set(&g, gamma).unwrap();
            for by in 0..g.order() {
                let conj = affine_fixed_set(&g, g.conjugate(by, gamma)).unwrap();
                assert_eq!(base.len(), conj.len());
                for c in &base {
                    let mapped = g.act(by, &c.component.generic_point());
                    assert!(conj.iter().any(|d| d.component.contains(&mapped, 1e-9)));
                }
                assert!((base[0].d_weight - conj[0].d_weight).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_chart_fixed_sets() {
        let r = Generator::linear(rotation2(PI / 2.0), 1);
        let g = build_named_group(&GroupKind::Cyclic(4), &[r], 2, 1, None, 256).unwrap();
        let e = (0..4).find(|&e| e != g.identity).unwrap();
        let comps = affine_fixed_set(&g, e).unwrap();
        assert_eq!(comps.len(), 1);
        assert!(comps[0].component.compact);
        assert!(comps[0].base_point().amax() < 1e-12);
    }
}
