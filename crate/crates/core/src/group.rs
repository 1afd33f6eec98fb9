//! Finite groups of fiber-twisted isometries: closure, conjugacy classes,
//! character tables and isotypic projection weights.
//!
//! Irreps are indexed from 0 in this API with the trivial representation at
//! index 0.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{cmax_abs, orthogonality_defect, unitarity_defect, CMat, RMat, RVec, C64, ONE, ZERO};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const DEFAULT_MAX_ORDER: usize = 256;
/// Equality tolerance for canonicalized group elements.
pub const ELEMENT_TOL: f64 = 1e-9;
const GENERATOR_TOL: f64 = 1e-12;

/// Affine isometry x ↦ rot·x + trans together with its fiber action.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsometryElement {
    pub index: usize,
    pub rot: RMat,
    pub trans: RVec,
    pub fiber: CMat,
}

impl IsometryElement {
    pub fn apply(&self, x: &RVec) -> RVec {
        &self.rot * x + &self.trans
    }

    pub fn dim(&self) -> usize {
        self.rot.nrows()
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber.nrows()
    }
}

/// A generator of the base action with its fiber matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Generator {
    pub rot: RMat,
    pub trans: RVec,
    pub fiber: CMat,
}

impl Generator {
    pub fn linear(rot: RMat, k: usize) -> Self {
        let m = rot.nrows();
        Generator {
            rot,
            trans: RVec::zeros(m),
            fiber: CMat::identity(k, k),
        }
    }

    pub fn with_trans(mut self, trans: RVec) -> Self {
        self.trans = trans;
        self
    }

    pub fn with_fiber(mut self, fiber: CMat) -> Self {
        self.fiber = fiber;
        self
    }
}

#[derive(Debug, Clone)]
struct Affine {
    rot: RMat,
    trans: RVec,
    fiber: CMat,
}

impl Affine {
    fn identity(m: usize, k: usize) -> Self {
        Affine {
            rot: RMat::identity(m, m),
            trans: RVec::zeros(m),
            fiber: CMat::identity(k, k),
        }
    }

    fn from_gen(g: &Generator) -> Self {
        Affine {
            rot: g.rot.clone(),
            trans: g.trans.clone(),
            fiber: g.fiber.clone(),
        }
    }

    /// self ∘ other
    fn then(&self, other: &Affine) -> Affine {
        Affine {
            rot: &self.rot * &other.rot,
            trans: &self.rot * &other.trans + &self.trans,
            fiber: &self.fiber * &other.fiber,
        }
    }

    fn canonical(mut self, lattice: Option<&Lattice>) -> Self {
        if let Some(l) = lattice {
            self.trans = l.reduce(&self.trans);
        }
        self
    }

    fn base_distance(&self, other: &Affine, lattice: Option<&Lattice>) -> f64 {
        let dr = (&self.rot - &other.rot).amax();
        let dt = match lattice {
            Some(l) => {
                let d = l.congruence_defect(&self.trans, &other.trans);
                d * l.basis.amax().max(1.0)
            }
            None => (&self.trans - &other.trans).amax(),
        };
        dr.max(dt)
    }
}

/// Built-in group families with known character tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Cyclic(usize),
    /// Dihedral group of order 2n: generators r (order n) and f (order 2).
    Dihedral(usize),
    Product(Vec<GroupKind>),
}

impl GroupKind {
    pub fn order(&self) -> usize {
        match self {
            GroupKind::Cyclic(n) => *n,
            GroupKind::Dihedral(n) => 2 * n,
            GroupKind::Product(fs) => fs.iter().map(|f| f.order()).product(),
        }
    }

    pub fn generator_count(&self) -> usize {
        match self {
            GroupKind::Cyclic(_) => 1,
            GroupKind::Dihedral(_) => 2,
            GroupKind::Product(fs) => fs.iter().map(|f| f.generator_count()).sum(),
        }
    }

    fn label_len(&self) -> usize {
        match self {
            GroupKind::Cyclic(_) => 1,
            GroupKind::Dihedral(_) => 2,
            GroupKind::Product(fs) => fs.iter().map(|f| f.label_len()).sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            GroupKind::Cyclic(0) | GroupKind::Dihedral(0) => Err(Error::Precondition(
                "group parameter n must be ≥ 1".into(),
            )),
            GroupKind::Product(fs) if fs.is_empty() => {
                Err(Error::Precondition("product needs at least one factor".into()))
            }
            GroupKind::Product(fs) => fs.iter().try_for_each(|f| f.validate()),
            _ => Ok(()),
        }
    }

    fn labels(&self) -> Vec<Vec<usize>> {
        match self {
            GroupKind::Cyclic(n) => (0..*n).map(|a| vec![a]).collect(),
            GroupKind::Dihedral(n) => (0..2)
                .flat_map(|b| (0..*n).map(move |a| vec![a, b]))
                .collect(),
            GroupKind::Product(fs) => {
                let mut out = vec![vec![]];
                for f in fs {
                    let fl = f.labels();
                    out = out
                        .into_iter()
                        .flat_map(|p| {
                            fl.iter().map(move |l| {
                                let mut q = p.clone();
                                q.extend_from_slice(l);
                                q
                            })
                        })
                        .collect();
                }
                out
            }
        }
    }

    fn mul(&self, a: &[usize], b: &[usize]) -> Vec<usize> {
        match self {
            GroupKind::Cyclic(n) => vec![(a[0] + b[0]) % n],
            GroupKind::Dihedral(n) => {
                let rot = if a[1] == 0 { b[0] } else { (n - b[0]) % n };
                vec![(a[0] + rot) % n, (a[1] + b[1]) % 2]
            }
            GroupKind::Product(fs) => {
                let mut out = Vec::with_capacity(a.len());
                let mut off = 0;
                for f in fs {
                    let l = f.label_len();
                    out.extend(f.mul(&a[off..off + l], &b[off..off + l]));
                    off += l;
                }
                out
            }
        }
    }

    /// Concrete realization of a label as a product of generator powers.
    fn realize(&self, label: &[usize], gens: &[Affine], m: usize, k: usize) -> Affine {
        match self {
            GroupKind::Cyclic(_) => power(&gens[0], label[0], m, k),
            GroupKind::Dihedral(_) => {
                power(&gens[0], label[0], m, k).then(&power(&gens[1], label[1], m, k))
            }
            GroupKind::Product(fs) => {
                let mut acc = Affine::identity(m, k);
                let mut loff = 0;
                let mut goff = 0;
                for f in fs {
                    let l = f.label_len();
                    let g = f.generator_count();
                    acc = acc.then(&f.realize(&label[loff..loff + l], &gens[goff..goff + g], m, k));
                    loff += l;
                    goff += g;
                }
                acc
            }
        }
    }

    /// (name, dimension, character value per label) with the trivial irrep first.
    fn irreps(&self, labels: &[Vec<usize>]) -> Vec<(String, usize, Vec<C64>)> {
        match self {
            GroupKind::Cyclic(n) => (0..*n)
                .map(|j| {
                    let vals = labels
                        .iter()
                        .map(|l| C64::from_polar(1.0, 2.0 * PI * (j * l[0]) as f64 / *n as f64))
                        .collect();
                    (format!("chi{j}"), 1, vals)
                })
                .collect(),
            GroupKind::Dihedral(n) => {
                let n = *n;
                let mut out = Vec::new();
                let one_dim: Vec<(i32, i32, &str)> = if n % 2 == 0 {
                    vec![(1, 1, "A1"), (1, -1, "A2"), (-1, 1, "B1"), (-1, -1, "B2")]
                } else {
                    vec![(1, 1, "A1"), (1, -1, "A2")]
                };
                for (er, ef, name) in one_dim {
                    let vals = labels
                        .iter()
                        .map(|l| {
                            let v = (er as f64).powi(l[0] as i32) * (ef as f64).powi(l[1] as i32);
                            C64::new(v, 0.0)
                        })
                        .collect();
                    out.push((name.to_string(), 1, vals));
                }
                let two_dim = if n % 2 == 0 { n / 2 - 1 } else { (n - 1) / 2 };
                for h in 1..=two_dim {
                    let vals = labels
                        .iter()
                        .map(|l| {
                            if l[1] == 1 {
                                ZERO
                            } else {
                                C64::new(2.0 * (2.0 * PI * (h * l[0]) as f64 / n as f64).cos(), 0.0)
                            }
                        })
                        .collect();
                    out.push((format!("E{h}"), 2, vals));
                }
                out
            }
            GroupKind::Product(fs) => {
                let mut out: Vec<(String, usize, Vec<C64>)> =
                    vec![(String::new(), 1, vec![ONE; labels.len()])];
                let mut off = 0;
                for f in fs {
                    let l = f.label_len();
                    let sub_labels: Vec<Vec<usize>> =
                        labels.iter().map(|lab| lab[off..off + l].to_vec()).collect();
                    let sub = f.irreps(&sub_labels);
                    let mut next = Vec::with_capacity(out.len() * sub.len());
                    for (pn, pd, pv) in &out {
                        for (sn, sd, sv) in &sub {
                            let name = if pn.is_empty() {
                                sn.clone()
                            } else {
                                format!("{pn}x{sn}")
                            };
                            let vals = pv.iter().zip(sv).map(|(a, b)| a * b).collect();
                            next.push((name, pd * sd, vals));
                        }
                    }
                    out = next;
                    off += l;
                }
                out
            }
        }
    }
}

fn power(g: &Affine, e: usize, m: usize, k: usize) -> Affine {
    let mut acc = Affine::identity(m, k);
    for _ in 0..e {
        acc = acc.then(g);
    }
    acc
}

/// User-supplied character table for groups outside the built-in families.
/// Each column is keyed by a word in the generators (indices into the
/// generator list; the empty word is the identity).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserCharacterTable {
    pub names: Vec<String>,
    pub class_words: Vec<Vec<usize>>,
    /// values[irrep][column]
    pub values: Vec<Vec<C64>>,
}

/// A finite group acting by isometries on ℝᵐ (or a torus) and on the fiber.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteGroupAction {
    pub m: usize,
    pub k: usize,
    pub lattice: Option<Lattice>,
    pub elements: Vec<IsometryElement>,
    pub mult: Vec<Vec<usize>>,
    pub inv: Vec<usize>,
    pub identity: usize,
    pub classes: Vec<Vec<usize>>,
    pub class_of: Vec<usize>,
    /// chars[irrep][class]
    pub chars: Vec<Vec<C64>>,
    pub dims: Vec<usize>,
    pub names: Vec<String>,
}

fn check_generators(gens: &[Generator], m: usize, k: usize) -> Result<()> {
    for (i, g) in gens.iter().enumerate() {
        if g.rot.nrows() != m || g.rot.ncols() != m || g.trans.len() != m {
            return Err(Error::Dimension(format!("generator {i}: base dimension != {m}")));
        }
        if g.fiber.nrows() != k || g.fiber.ncols() != k {
            return Err(Error::Dimension(format!("generator {i}: fiber dimension != {k}")));
        }
        let d = orthogonality_defect(&g.rot);
        if d > GENERATOR_TOL {
            return Err(Error::NotOrthogonal {
                what: format!("generators[{i}].rot"),
                defect: d,
            });
        }
        let u = unitarity_defect(&g.fiber);
        if u > GENERATOR_TOL {
            return Err(Error::Precondition(format!(
                "generators[{i}].fiber is not unitary (defect {u:.3e})"
            )));
        }
    }
    Ok(())
}

/// Builds a cyclic / dihedral / product group from concrete generator data.
/// `m`, `k` are the base and fiber dimensions.
pub fn build_named_group(
    kind: &GroupKind,
    generators: &[Generator],
    m: usize,
    k: usize,
    lattice: Option<&Lattice>,
    max_order: usize,
) -> Result<FiniteGroupAction> {
    kind.validate()?;
    if generators.len() != kind.generator_count() {
        return Err(Error::Precondition(format!(
            "{:?} needs {} generators, got {}",
            kind,
            kind.generator_count(),
            generators.len()
        )));
    }
    check_generators(generators, m, k)?;
    let order = kind.order();
    if order > max_order {
        return Err(Error::OrderTooLarge(max_order));
    }
    let labels = kind.labels();
    let index: BTreeMap<Vec<usize>, usize> =
        labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
    let gens: Vec<Affine> = generators.iter().map(Affine::from_gen).collect();
    let concrete: Vec<Affine> = labels
        .iter()
        .map(|l| kind.realize(l, &gens, m, k).canonical(lattice))
        .collect();

    let mult: Vec<Vec<usize>> = labels
        .iter()
        .map(|a| labels.iter().map(|b| index[&kind.mul(a, b)]).collect())
        .collect();

    // Relations must hold concretely: realize(ab) = realize(a)·realize(b).
    let mut base_defect: f64 = 0.0;
    let mut fiber_defect: f64 = 0.0;
    for a in 0..order {
        for b in 0..order {
            let prod = concrete[a].then(&concrete[b]).canonical(lattice);
            let target = &concrete[mult[a][b]];
            base_defect = base_defect.max(prod.base_distance(target, lattice));
            fiber_defect = fiber_defect.max(cmax_abs(&(&prod.fiber - &target.fiber)));
        }
    }
    if base_defect > ELEMENT_TOL {
        return Err(Error::Precondition(format!(
            "base generators do not satisfy the {kind:?} relations (defect {base_defect:.3e})"
        )));
    }
    if fiber_defect > 1e-10 {
        return Err(Error::NotHomomorphism(fiber_defect));
    }
    let irreps = kind.irreps(&labels);
    finish(m, k, lattice, concrete, mult, irreps, true)
}

/// Builds a group by closure of explicit generators with a user character table.
pub fn build_explicit_group(
    generators: &[Generator],
    table: &UserCharacterTable,
    m: usize,
    k: usize,
    lattice: Option<&Lattice>,
    max_order: usize,
) -> Result<FiniteGroupAction> {
    check_generators(generators, m, k)?;
    let gens: Vec<Affine> = generators.iter().map(Affine::from_gen).collect();
    let mut elems = vec![Affine::identity(m, k).canonical(lattice)];
    let find = |elems: &[Affine], x: &Affine| {
        elems
            .iter()
            .position(|e| e.base_distance(x, lattice) < ELEMENT_TOL)
    };
    let mut frontier = vec![0usize];
    while let Some(i) = frontier.pop() {
        for g in &gens {
            let x = g.then(&elems[i]).canonical(lattice);
            if find(&elems, &x).is_none() {
                elems.push(x);
                if elems.len() > max_order {
                    return Err(Error::OrderTooLarge(max_order));
                }
                frontier.push(elems.len() - 1);
            }
        }
    }
    let n = elems.len();
    let mut mult = vec![vec![0usize; n]; n];
    let mut fiber_defect: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let p = elems[a].then(&elems[b]).canonical(lattice);
            let c = find(&elems, &p).ok_or_else(|| {
                Error::Precondition("closure is not closed under multiplication".into())
            })?;
            fiber_defect = fiber_defect.max(cmax_abs(&(&p.fiber - &elems[c].fiber)));
            mult[a][b] = c;
        }
    }
    if fiber_defect > 1e-10 {
        return Err(Error::NotHomomorphism(fiber_defect));
    }
    // Character values per element from the class words.
    let word_elem = |w: &[usize]| -> Result<usize> {
        let mut acc = 0usize;
        for &gi in w {
            let g = gens.get(gi).ok_or_else(|| {
                Error::CharacterTable(format!("word references generator {gi}"))
            })?;
            let x = g.then(&elems[acc]).canonical(lattice);
            acc = find(&elems, &x).expect("closure contains all words");
        }
        Ok(acc)
    };
    let col_elems = table
        .class_words
        .iter()
        .map(|w| word_elem(w))
        .collect::<Result<Vec<_>>>()?;
    if table.values.len() != table.names.len() {
        return Err(Error::CharacterTable("names and value rows differ in length".into()));
    }
    let inv: Vec<usize> = (0..n)
        .map(|a| (0..n).find(|&b| mult[a][b] == 0).expect("inverse exists"))
        .collect();
    let (classes, class_of) = conjugacy_classes(&mult, &inv);
    let mut col_of_class = vec![usize::MAX; classes.len()];
    for (col, &e) in col_elems.iter().enumerate() {
        let c = class_of[e];
        if col_of_class[c] != usize::MAX {
            return Err(Error::CharacterTable(format!(
                "columns {} and {col} name the same class",
                col_of_class[c]
            )));
        }
        col_of_class[c] = col;
    }
    if let Some(c) = col_of_class.iter().position(|&v| v == usize::MAX) {
        return Err(Error::CharacterTable(format!("class {c} has no column")));
    }
    let mut irreps = Vec::new();
    for (name, row) in table.names.iter().zip(&table.values) {
        if row.len() != col_elems.len() {
            return Err(Error::CharacterTable(format!("row {name} has wrong length")));
        }
        let vals: Vec<C64> = (0..n).map(|e| row[col_of_class[class_of[e]]]).collect();
        let dim = vals[0].re.round();
        if dim < 1.0 || (vals[0] - C64::new(dim, 0.0)).norm() > 1e-9 {
            return Err(Error::CharacterTable(format!("row {name}: χ(e) is not a positive integer")));
        }
        irreps.push((name.clone(), dim as usize, vals));
    }
    finish(m, k, lattice, elems, mult, irreps, false)
}

fn conjugacy_classes(mult: &[Vec<usize>], inv: &[usize]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = mult.len();
    let mut class_of = vec![usize::MAX; n];
    let mut classes = Vec::new();
    for a in 0..n {
        if class_of[a] != usize::MAX {
            continue;
        }
        let id = classes.len();
        let mut cls: Vec<usize> = (0..n).map(|g| mult[mult[g][a]][inv[g]]).collect();
        cls.sort_unstable();
        cls.dedup();
        for &c in &cls {
            class_of[c] = id;
        }
        classes.push(cls);
    }
    (classes, class_of)
}

fn finish(
    m: usize,
    k: usize,
    lattice: Option<&Lattice>,
    concrete: Vec<Affine>,
    mult: Vec<Vec<usize>>,
    irreps: Vec<(String, usize, Vec<C64>)>,
    builtin: bool,
) -> Result<FiniteGroupAction> {
    let n = concrete.len();
    // Identity: the element e with e·a = a for all a.
    let identity = (0..n)
        .find(|&e| (0..n).all(|a| mult[e][a] == a))
        .ok_or_else(|| Error::Precondition("no identity element".into()))?;
    let inv: Vec<usize> = (0..n)
        .map(|a| (0..n).find(|&b| mult[a][b] == identity).expect("inverse exists"))
        .collect();
    for a in 0..n {
        for b in (a + 1)..n {
            if concrete[a].base_distance(&concrete[b], lattice) < ELEMENT_TOL {
                return Err(Error::NotFaithful(a, b));
            }
        }
    }
    let (classes, class_of) = conjugacy_classes(&mult, &inv);
    let mut chars = Vec::with_capacity(irreps.len());
    let mut dims = Vec::with_capacity(irreps.len());
    let mut names = Vec::with_capacity(irreps.len());
    for (name, dim, vals) in irreps {
        let row: Vec<C64> = classes.iter().map(|c| vals[c[0]]).collect();
        for (ci, cls) in classes.iter().enumerate() {
            for &e in cls {
                if (vals[e] - row[ci]).norm() > 1e-9 {
                    return Err(Error::CharacterTable(format!(
                        "character {name} is not a class function"
                    )));
                }
            }
        }
        chars.push(row);
        dims.push(dim);
        names.push(name);
    }
    let elements = concrete
        .into_iter()
        .enumerate()
        .map(|(index, a)| IsometryElement {
            index,
            rot: a.rot,
            trans: a.trans,
            fiber: a.fiber,
        })
        .collect();
    let g = FiniteGroupAction {
        m,
        k,
        lattice: lattice.cloned(),
        elements,
        mult,
        inv,
        identity,
        classes,
        class_of,
        chars,
        dims,
        names,
    };
    let diag = g.character_diagnostics();
    if diag > 1e-9 {
        let origin = if builtin { "built-in" } else { "user-supplied" };
        return Err(Error::CharacterTable(format!(
            "{origin} table fails orthogonality (defect {diag:.3e})"
        )));
    }
    Ok(g)
}

impl FiniteGroupAction {
    /// Trivial group acting on ℝᵐ (or the torus) with fiber ℂᵏ.
    pub fn trivial(m: usize, k: usize, lattice: Option<&Lattice>) -> Self {
        build_named_group(
            &GroupKind::Cyclic(1),
            &[Generator::linear(RMat::identity(m, m), k)],
            m,
            k,
            lattice,
            1,
        )
        .expect("trivial group is always valid")
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn irrep_count(&self) -> usize {
        self.chars.len()
    }

    pub fn character(&self, irrep: usize, elem: usize) -> C64 {
        self.chars[irrep][self.class_of[elem]]
    }

    /// γ′·γ·γ′⁻¹
    pub fn conjugate(&self, by: usize, elem: usize) -> usize {
        self.mult[self.mult[by][elem]][self.inv[by]]
    }

    /// Action of element `e` on a base point.
    pub fn act(&self, e: usize, x: &RVec) -> RVec {
        let y = self.elements[e].apply(x);
        match &self.lattice {
            Some(l) => l.reduce(&y),
            None => y,
        }
    }

    /// Max deviation from row orthogonality, trivial-first and Σk² = |Γ|.
    pub fn character_diagnostics(&self) -> f64 {
        let n = self.order() as f64;
        let mut worst: f64 = 0.0;
        for i in 0..self.irrep_count() {
            for j in 0..self.irrep_count() {
                let s: C64 = (0..self.order())
                    .map(|e| self.character(i, e) * self.character(j, e).conj())
                    .sum();
                let expect = if i == j { n } else { 0.0 };
                worst = worst.max((s - C64::new(expect, 0.0)).norm());
            }
        }
        if let Some(row) = self.chars.first() {
            for v in row {
                worst = worst.max((v - ONE).norm());
            }
        }
        if self.dims.first() != Some(&1) {
            worst = worst.max(1.0);
        }
        let sum_sq: usize = self.dims.iter().map(|d| d * d).sum();
        worst.max((sum_sq as f64 - n).abs())
    }

    /// Weights k_i·χ_i(γ⁻¹)/|Γ| of the isotypic projection onto irrep `i`.
    pub fn isotypic_weights(&self, i: usize) -> Result<Vec<C64>> {
        if i >= self.irrep_count() {
            return Err(Error::IrrepOutOfRange(i, self.irrep_count()));
        }
        let scale = self.dims[i] as f64 / self.order() as f64;
        Ok((0..self.order())
            .map(|e| self.character(i, self.inv[e]) * scale)
            .collect())
    }

    /// max_γ |Σ_i w_i(γ) − δ_{γ,e}|
    pub fn partition_of_unity_defect(&self) -> f64 {
        let mut total = vec![ZERO; self.order()];
        for i in 0..self.irrep_count() {
            for (t, w) in total.iter_mut().zip(self.isotypic_weights(i).expect("index in range")) {
                *t += w;
            }
        }
        total
            .iter()
            .enumerate()
            .map(|(e, t)| {
                let expect = if e == self.identity { ONE } else { ZERO };
                (t - expect).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Left regular representation matrix of element `e`.
    pub fn regular_matrix(&self, e: usize) -> CMat {
        let n = self.order();
        let mut l = CMat::zeros(n, n);
        for b in 0..n {
            l[(self.mult[e][b], b)] = ONE;
        }
        l
    }

    /// Projections P_i = Σ_γ w_i(γ)·L_γ on the regular representation.
    pub fn regular_projections(&self) -> Vec<CMat> {
        let n = self.order();
        let regs: Vec<CMat> = (0..n).map(|e| self.regular_matrix(e)).collect();
        (0..self.irrep_count())
            .map(|i| {
                let w = self.isotypic_weights(i).expect("index in range");
                let mut p = CMat::zeros(n, n);
                for (e, we) in w.iter().enumerate() {
                    p += &regs[e] * *we;
                }
                p
            })
            .collect()
    }

    /// (max |P_i² − P_i|, max |P_iP_j| for i≠j, |ΣP_i − I|).
    pub fn projection_defects(&self) -> (f64, f64, f64) {
        let ps = self.regular_projections();
        let n = self.order();
        let mut idem: f64 = 0.0;
        let mut orth: f64 = 0.0;
        let mut sum = CMat::zeros(n, n);
        for (i, p) in ps.iter().enumerate() {
            idem = idem.max(cmax_abs(&(p * p - p)));
            for (j, q) in ps.iter().enumerate() {
                if i != j {
                    orth = orth.max(cmax_abs(&(p * q)));
                }
            }
            sum += p;
        }
        let comp = cmax_abs(&(sum - CMat::identity(n, n)));
        (idem, orth, comp)
    }

    /// Sorted closure of a set of elements under multiplication.
    pub fn closure(&self, gens: &[usize]) -> Vec<usize> {
        let mut set: Vec<usize> = vec![self.identity];
        let mut frontier = vec![self.identity];
        while let Some(a) = frontier.pop() {
            for &g in gens {
                let p = self.mult[g][a];
                if !set.contains(&p) {
                    set.push(p);
                    frontier.push(p);
                }
            }
        }
        set.sort_unstable();
        set
    }

    pub fn conjugate_subgroup(&self, by: usize, h: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = h.iter().map(|&e| self.conjugate(by, e)).collect();
        out.sort_unstable();
        out
    }

    /// Lexicographically smallest conjugate of a subgroup.
    pub fn canonical_subgroup(&self, h: &[usize]) -> Vec<usize> {
        (0..self.order())
            .map(|g| self.conjugate_subgroup(g, h))
            .min()
            .expect("group is non-empty")
    }

    /// All distinct conjugates of a subgroup.
    pub fn subgroup_conjugates(&self, h: &[usize]) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = (0..self.order())
            .map(|g| self.conjugate_subgroup(g, h))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Does some conjugate of `h1` lie inside `h2`?
    pub fn subconjugate(&self, h1: &[usize], h2: &[usize]) -> bool {
        (0..self.order()).any(|g| {
            self.conjugate_subgroup(g, h1)
                .iter()
                .all(|e| h2.binary_search(e).is_ok())
        })
    }
}

/// Maximal violations of every group-action invariant.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ActionDiagnostics {
    pub orthogonality: f64,
    pub fiber_unitarity: f64,
    pub associativity_failures: usize,
    pub inverse_failures: usize,
    pub row_orthogonality: f64,
    pub column_orthogonality: f64,
    pub trivial_first: f64,
    pub dimension_sum: f64,
    pub fiber_homomorphism: f64,
    pub faithfulness_failures: usize,
    pub lattice_preservation: Option<f64>,
}

impl ActionDiagnostics {
    pub fn max_violation(&self) -> f64 {
        let counts = (self.associativity_failures + self.inverse_failures + self.faithfulness_failures) as f64;
        [
            self.orthogonality,
            self.fiber_unitarity,
            counts,
            self.row_orthogonality,
            self.column_orthogonality,
            self.trivial_first,
            self.dimension_sum,
            self.fiber_homomorphism,
            self.lattice_preservation.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Report-only check of a group action, optionally against a period lattice.
pub fn verify_action(g: &FiniteGroupAction, lattice: Option<&Lattice>) -> ActionDiagnostics {
    let n = g.order();
    let mut d = ActionDiagnostics::default();
    for e in &g.elements {
        d.orthogonality = d.orthogonality.max(orthogonality_defect(&e.rot));
        d.fiber_unitarity = d.fiber_unitarity.max(unitarity_defect(&e.fiber));
    }
    let check = |a: usize, b: usize, c: usize| g.mult[g.mult[a][b]][c] == g.mult[a][g.mult[b][c]];
    if n <= 64 {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if !check(a, b, c) {
                        d.associativity_failures += 1;
                    }
                }
            }
        }
    } else {
        let mut rng = StdRng::seed_from_u64(0x5eed);
        for _ in 0..20_000 {
            let (a, b, c) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
            if !check(a, b, c) {
                d.associativity_failures += 1;
            }
        }
    }
    for a in 0..n {
        if g.mult[a][g.inv[a]] != g.identity || g.mult[g.inv[a]][a] != g.identity {
            d.inverse_failures += 1;
        }
        for b in 0..n {
            let lhs = &g.elements[g.mult[a][b]].fiber;
            let rhs = &g.elements[a].fiber * &g.elements[b].fiber;
            d.fiber_homomorphism = d.fiber_homomorphism.max(cmax_abs(&(lhs - rhs)));
        }
    }
    let nn = n as f64;
    for i in 0..g.irrep_count() {
        for j in 0..g.irrep_count() {
            let s: C64 = (0..n).map(|e| g.character(i, e) * g.character(j, e).conj()).sum();
            let expect = if i == j { nn } else { 0.0 };
            d.row_orthogonality = d.row_orthogonality.max((s - C64::new(expect, 0.0)).norm());
        }
    }
    d.column_orthogonality = g.partition_of_unity_defect();
    if let Some(row) = g.chars.first() {
        for v in row {
            d.trivial_first = d.trivial_first.max((v - ONE).norm());
        }
    }
    if g.dims.first() != Some(&1) {
        d.trivial_first = d.trivial_first.max(1.0);
    }
    let sum_sq: usize = g.dims.iter().map(|k| k * k).sum();
    d.dimension_sum = (sum_sq as f64 - nn).abs();
    for a in 0..n {
        for b in (a + 1)..n {
            let ea = &g.elements[a];
            let eb = &g.elements[b];
            let dr = (&ea.rot - &eb.rot).amax();
            let dt = match lattice {
                Some(l) => l.congruence_defect(&ea.trans, &eb.trans),
                None => (&ea.trans - &eb.trans).amax(),
            };
            if dr.max(dt) < ELEMENT_TOL {
                d.faithfulness_failures += 1;
            }
        }
    }
    d.lattice_preservation = lattice.map(|l| {
        g.elements
            .iter()
            .map(|e| l.preservation_defect(&e.rot))
            .fold(0.0, f64::max)
    });
    d
}

/// Rotation of the plane by angle θ.
pub fn rotation2(theta: f64) -> RMat {
    let (s, c) = theta.sin_cos();
    RMat::from_row_slice(2, 2, &[c, -s, s, c])
}
