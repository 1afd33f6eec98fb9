//! Exact term algebra for polyhomogeneous matrix symbols whose ξ-dependence
//! is spanned by ξ^μ·q^ρ·(q − λ)^{−r}, q = c|ξ|², with x-dependent matrix
//! coefficients that may carry a polynomial dependence on the power s.

use crate::error::{Error, Result};
use crate::field::{factorial, multi_indices, Field, Poly};
use crate::group::FiniteGroupAction;
use crate::lattice::Lattice;
use crate::linalg::{cmax_abs, CMat, RMat, RVec, C64, ONE, ZERO};
use crate::quadrature::sphere_quadrature;
use nalgebra::Schur;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Relative tolerance for dropping coefficients after merging.
pub const DROP_TOL: f64 = 1e-14;

/// Exponent ρ(s) = s_mult·s + offset of q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QExp {
    pub s_mult: i32,
    pub offset: C64,
}

impl QExp {
    pub const ZERO: QExp = QExp {
        s_mult: 0,
        offset: ZERO,
    };

    pub fn constant(v: f64) -> Self {
        QExp {
            s_mult: 0,
            offset: C64::new(v, 0.0),
        }
    }

    pub fn at(&self, s: C64) -> C64 {
        self.offset + s * self.s_mult as f64
    }

    pub fn is_zero(&self) -> bool {
        self.s_mult == 0 && self.offset == ZERO
    }
}

/// coeff(s, x)·ξ^μ·q^{ρ(s)}·(q − λ)^{−res}. `coeff` is a polynomial in s,
/// lowest power first; `res` may be negative for positive powers of q − λ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    pub coeff: Vec<Field>,
    pub xi: Vec<u32>,
    pub q: QExp,
    pub res: i32,
}

fn spoly_mul(a: &[Field], b: &[Field]) -> Vec<Field> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out: Vec<Option<Field>> = vec![None; a.len() + b.len() - 1];
    for (i, fa) in a.iter().enumerate() {
        for (j, fb) in b.iter().enumerate() {
            let p = fa.mul(fb);
            out[i + j] = Some(match out[i + j].take() {
                Some(acc) => acc.add(&p),
                None => p,
            });
        }
    }
    out.into_iter().map(|f| f.expect("filled")).collect()
}

fn spoly_add(a: &[Field], b: &[Field]) -> Vec<Field> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| match (a.get(i), b.get(i)) {
            (Some(x), Some(y)) => x.add(y),
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => unreachable!(),
        })
        .collect()
}

/// Multiplies a field polynomial by a scalar polynomial in s.
fn spoly_scale(a: &[Field], p: &[C64]) -> Vec<Field> {
    if a.is_empty() || p.is_empty() {
        return vec![];
    }
    let mut out: Vec<Option<Field>> = vec![None; a.len() + p.len() - 1];
    for (i, fa) in a.iter().enumerate() {
        for (j, &pj) in p.iter().enumerate() {
            if pj == ZERO {
                continue;
            }
            let f = fa.scale(pj);
            out[i + j] = Some(match out[i + j].take() {
                Some(acc) => acc.add(&f),
                None => f,
            });
        }
    }
    let zero = a[0].zero_like();
    out.into_iter().map(|f| f.unwrap_or_else(|| zero.clone())).collect()
}

/// Generalized binomial coefficient binom(s, n) as a polynomial in s.
pub fn binomial_poly(n: u32) -> Vec<C64> {
    let mut p = vec![ONE];
    for i in 0..n {
        // multiply by (s − i)
        let mut next = vec![ZERO; p.len() + 1];
        for (j, &c) in p.iter().enumerate() {
            next[j + 1] += c;
            next[j] -= c * i as f64;
        }
        p = next;
    }
    let f = factorial(n);
    p.into_iter().map(|c| c / f).collect()
}

pub fn eval_scalar_poly(p: &[C64], s: C64) -> C64 {
    p.iter().rev().fold(ZERO, |acc, &c| acc * s + c)
}

impl Term {
    pub fn new(coeff: Field, xi: Vec<u32>, q: QExp, res: i32) -> Self {
        Term {
            coeff: vec![coeff],
            xi,
            q,
            res,
        }
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// Homogeneity in (ξ, λ) with λ of weight 2: (coefficient of s, constant).
    pub fn homogeneity(&self) -> (i32, C64) {
        let mu: u32 = self.xi.iter().sum();
        (
            2 * self.q.s_mult,
            C64::new(mu as f64 - 2.0 * self.res as f64, 0.0) + self.q.offset * 2.0,
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.coeff.iter().map(Field::max_abs).fold(0.0, f64::max)
    }

    pub fn scale(&self, a: C64) -> Term {
        Term {
            coeff: self.coeff.iter().map(|f| f.scale(a)).collect(),
            ..self.clone()
        }
    }

    pub fn scale_poly(&self, p: &[C64]) -> Term {
        Term {
            coeff: spoly_scale(&self.coeff, p),
            ..self.clone()
        }
    }

    pub fn sandwich(&self, left: &CMat, right: &CMat) -> Term {
        Term {
            coeff: self.coeff.iter().map(|f| f.sandwich(left, right)).collect(),
            ..self.clone()
        }
    }

    pub fn mul(&self, other: &Term) -> Term {
        Term {
            coeff: spoly_mul(&self.coeff, &other.coeff),
            xi: self.xi.iter().zip(&other.xi).map(|(a, b)| a + b).collect(),
            q: QExp {
                s_mult: self.q.s_mult + other.q.s_mult,
                offset: self.q.offset + other.q.offset,
            },
            res: self.res + other.res,
        }
    }

    /// ∂_{ξ_axis} by the product rule, with ∂q = 2cξ.
    pub fn dxi(&self, axis: usize, c: f64) -> Vec<Term> {
        let mut out = Vec::with_capacity(3);
        if self.xi[axis] > 0 {
            let mut t = self.scale(C64::new(self.xi[axis] as f64, 0.0));
            t.xi[axis] -= 1;
            out.push(t);
        }
        if !self.q.is_zero() {
            let p = [self.q.offset * 2.0 * c, C64::new(2.0 * c * self.q.s_mult as f64, 0.0)];
            let mut t = self.scale_poly(&p);
            t.xi[axis] += 1;
            t.q.offset -= 1.0;
            out.push(t);
        }
        if self.res != 0 {
            let mut t = self.scale(C64::new(-2.0 * c * self.res as f64, 0.0));
            t.xi[axis] += 1;
            t.res += 1;
            out.push(t);
        }
        out
    }

    /// D_{x_axis} = −i∂_{x_axis}.
    pub fn dx(&self, axis: usize) -> Result<Term> {
        Ok(Term {
            coeff: self
                .coeff
                .iter()
                .map(|f| f.dx(axis))
                .collect::<Result<Vec<_>>>()?,
            ..self.clone()
        })
    }

    pub fn coeff_at(&self, s: C64) -> Field {
        let mut acc = self.coeff[0].clone();
        let mut sp = ONE;
        for f in &self.coeff[1..] {
            sp *= s;
            acc = acc.add(&f.scale(sp));
        }
        acc
    }

    /// The term with s fixed: constant coefficient polynomial, numeric ρ.
    pub fn at_s(&self, s: C64) -> Term {
        Term {
            coeff: vec![self.coeff_at(s)],
            xi: self.xi.clone(),
            q: QExp {
                s_mult: 0,
                offset: self.q.at(s),
            },
            res: self.res,
        }
    }

    /// Value at (x, ξ, λ, s).
    pub fn eval(&self, x: &[f64], xi: &[f64], lambda: C64, s: C64, c: f64) -> CMat {
        let q: f64 = c * xi.iter().map(|v| v * v).sum::<f64>();
        let mut f = C64::new(
            self.xi
                .iter()
                .zip(xi)
                .map(|(&a, &v)| v.powi(a as i32))
                .product::<f64>(),
            0.0,
        );
        let rho = self.q.at(s);
        if rho != ZERO {
            f *= (rho * q.ln()).exp();
        }
        if self.res != 0 {
            f *= (C64::new(q, 0.0) - lambda).powi(-self.res);
        }
        self.coeff_at(s).eval(x) * f
    }

    /// Change of variables x_old = shift + lin_x·y, ξ_old = xi_map·η.
    /// `xi_map` must be orthogonal so that q is unchanged.
    pub fn transform(&self, shift: &RVec, lin_x: &RMat, xi_map: &RMat) -> Result<Vec<Term>> {
        let coeff = self
            .coeff
            .iter()
            .map(|f| f.substitute(shift, lin_x))
            .collect::<Result<Vec<_>>>()?;
        let n_new = xi_map.ncols();
        let mut poly = Poly::one(n_new);
        for (i, &a) in self.xi.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let row: Vec<f64> = (0..n_new).map(|j| xi_map[(i, j)]).collect();
            let lf = Poly::linear(&row);
            for _ in 0..a {
                poly = poly.mul(&lf);
            }
        }
        Ok(poly
            .terms
            .into_iter()
            .map(|(mono, v)| Term {
                coeff: coeff.iter().map(|f| f.scale(C64::new(v, 0.0))).collect(),
                xi: mono,
                q: self.q,
                res: self.res,
            })
            .collect())
    }

    fn key(&self) -> (Vec<u32>, i32, i64, i64, i32) {
        (
            self.xi.clone(),
            self.q.s_mult,
            (self.q.offset.re * 1e10).round() as i64,
            (self.q.offset.im * 1e10).round() as i64,
            self.res,
        )
    }
}

/// Merges terms with equal (ξ-monomial, q-exponent, resolvent power) and drops
/// coefficients below DROP_TOL relative to the largest one.
pub fn normalize(terms: Vec<Term>) -> Vec<Term> {
    let mut merged: BTreeMap<(Vec<u32>, i32, i64, i64, i32), Term> = BTreeMap::new();
    for t in terms {
        match merged.get_mut(&t.key()) {
            Some(acc) => acc.coeff = spoly_add(&acc.coeff, &t.coeff),
            None => {
                merged.insert(t.key(), t);
            }
        }
    }
    let scale = merged.values().map(Term::max_abs).fold(0.0, f64::max);
    let tol = DROP_TOL * scale;
    merged
        .into_values()
        .filter_map(|mut t| {
            for f in t.coeff.iter_mut() {
                f.prune(tol);
            }
            while t.coeff.len() > 1 && t.coeff.last().is_some_and(Field::is_zero) {
                t.coeff.pop();
            }
            (t.max_abs() > 0.0).then_some(t)
        })
        .collect()
}

pub fn eval_terms(terms: &[Term], x: &[f64], xi: &[f64], lambda: C64, s: C64, c: f64, k: usize) -> CMat {
    terms
        .iter()
        .fold(CMat::zeros(k, k), |acc, t| acc + t.eval(x, xi, lambda, s, c))
}

/// ∂_ξ^α of a term list.
pub fn dxi_multi(terms: &[Term], alpha: &[u32], c: f64) -> Vec<Term> {
    let mut cur: Vec<Term> = terms.to_vec();
    for (axis, &a) in alpha.iter().enumerate() {
        for _ in 0..a {
            cur = cur.iter().flat_map(|t| t.dxi(axis, c)).collect();
        }
    }
    normalize(cur)
}

/// D_x^α of a term list.
pub fn dx_multi(terms: &[Term], alpha: &[u32]) -> Result<Vec<Term>> {
    let mut cur: Vec<Term> = terms.to_vec();
    for (axis, &a) in alpha.iter().enumerate() {
        for _ in 0..a {
            cur = cur.iter().map(|t| t.dx(axis)).collect::<Result<Vec<_>>>()?;
        }
    }
    Ok(normalize(cur))
}

pub fn product(a: &[Term], b: &[Term]) -> Vec<Term> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for ta in a {
        for tb in b {
            out.push(ta.mul(tb));
        }
    }
    normalize(out)
}

pub fn alpha_factorial(alpha: &[u32]) -> f64 {
    alpha.iter().map(|&a| factorial(a)).product()
}

/// Asymptotic composition Σ_α (1/α!)∂_ξ^α a·D_x^α b of component lists,
/// truncated to the first `k_max` components.
pub fn compose_components(a: &[Vec<Term>], b: &[Vec<Term>], k_max: usize, m: usize, c: f64) -> Result<Vec<Vec<Term>>> {
    let mut out: Vec<Vec<Term>> = vec![Vec::new(); k_max];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut acc = Vec::new();
        for (ja, ca) in a.iter().enumerate().take(j + 1) {
            for (jb, cb) in b.iter().enumerate().take(j + 1 - ja) {
                let order = (j - ja - jb) as u32;
                for alpha in multi_indices(m, order) {
                    if alpha.iter().sum::<u32>() != order {
                        continue;
                    }
                    let da = dxi_multi(ca, &alpha, c);
                    if da.is_empty() {
                        continue;
                    }
                    let db = dx_multi(cb, &alpha)?;
                    let w = C64::new(1.0 / alpha_factorial(&alpha), 0.0);
                    acc.extend(product(&da, &db).into_iter().map(|t| t.scale(w)));
                }
            }
        }
        *slot = normalize(acc);
    }
    Ok(out)
}

/// Polyhomogeneous symbol of order `order`; component j has homogeneity
/// order − j.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalSymbol {
    pub m: usize,
    pub k: usize,
    pub order: f64,
    /// Scale c of the principal part c|ξ|²; q = c|ξ|² throughout.
    pub principal: f64,
    pub components: Vec<Vec<Term>>,
    pub laplace_type: bool,
}

impl ClassicalSymbol {
    /// a₂ = c|ξ|²·I, a₁ = Σ_j B_j(x)ξ_j, a₀ = C(x) + c0·I.
    pub fn from_laplace_type(
        m: usize,
        k: usize,
        principal: f64,
        c0: f64,
        first_order: &[Field],
        potential: Option<Field>,
    ) -> Result<Self> {
        if principal <= 0.0 {
            return Err(Error::NotLaplaceType(format!("principal scale {principal} must be positive")));
        }
        if !first_order.is_empty() && first_order.len() != m {
            return Err(Error::Dimension(format!(
                "first_order has {} fields, expected {m}",
                first_order.len()
            )));
        }
        let check = |f: &Field, what: &str| -> Result<()> {
            if f.dim() != m || f.fiber_dim() != k {
                return Err(Error::Dimension(format!(
                    "{what}: field is {}-dimensional with {}×{} coefficients, expected m={m}, k={k}",
                    f.dim(),
                    f.fiber_dim(),
                    f.fiber_dim()
                )));
            }
            Ok(())
        };
        let id = Field::constant(m, CMat::identity(k, k));
        let a2 = vec![Term::new(id.clone(), vec![0; m], QExp::constant(1.0), 0)];
        let mut a1 = Vec::new();
        for (j, b) in first_order.iter().enumerate() {
            check(b, &format!("first_order[{j}]"))?;
            let mut e = vec![0; m];
            e[j] = 1;
            a1.push(Term::new(b.clone(), e, QExp::ZERO, 0));
        }
        let mut a0 = vec![Term::new(id.scale(C64::new(c0, 0.0)), vec![0; m], QExp::ZERO, 0)];
        if let Some(v) = potential {
            check(&v, "potential")?;
            a0.push(Term::new(v, vec![0; m], QExp::ZERO, 0));
        }
        Ok(ClassicalSymbol {
            m,
            k,
            order: 2.0,
            principal,
            components: vec![a2, normalize(a1), normalize(a0)],
            laplace_type: true,
        })
    }

    /// A symbol given by explicit components (not flagged Laplace type).
    pub fn from_components(m: usize, k: usize, order: f64, principal: f64, components: Vec<Vec<Term>>) -> Self {
        ClassicalSymbol {
            m,
            k,
            order,
            principal,
            components: components.into_iter().map(normalize).collect(),
            laplace_type: false,
        }
    }

    pub fn component(&self, j: usize) -> &[Term] {
        self.components.get(j).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_constant_coefficient(&self) -> bool {
        self.components
            .iter()
            .flatten()
            .all(|t| t.coeff.iter().all(Field::is_constant))
    }

    /// Checks that every term of component j has homogeneity order − j.
    pub fn homogeneity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, comp) in self.components.iter().enumerate() {
            for t in comp {
                let (sm, cst) = t.homogeneity();
                worst = worst
                    .max(sm.abs() as f64)
                    .max((cst - C64::new(self.order - j as f64, 0.0)).norm());
            }
        }
        worst
    }

    pub fn eval_component(&self, j: usize, x: &[f64], xi: &[f64]) -> CMat {
        eval_terms(self.component(j), x, xi, ZERO, ZERO, self.principal, self.k)
    }

    /// Symbol of F·A·F⁻¹ pulled back along x ↦ rot⁻¹(x − trans):
    /// a'(x, ξ) = F·a(rotᵀ(x − trans), rotᵀξ)·F⁻¹.
    pub fn affine_pullback(&self, rot: &RMat, trans: &RVec, fiber: &CMat) -> Result<ClassicalSymbol> {
        let rt = rot.transpose();
        let shift = -(&rt * trans);
        let finv = fiber
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Precondition("fiber matrix is singular".into()))?;
        let components = self
            .components
            .iter()
            .map(|comp| {
                let mut out = Vec::new();
                for t in comp {
                    for nt in t.transform(&shift, &rt, &rt)? {
                        out.push(nt.sandwich(fiber, &finv));
                    }
                }
                Ok(normalize(out))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassicalSymbol {
            components,
            ..self.clone()
        })
    }

    /// Linear orthogonal change of variables x ↦ L⁻¹x, ξ ↦ L⁻¹ξ with fiber
    /// conjugation.
    pub fn linear_pullback(&self, l: &RMat, fiber: &CMat) -> Result<ClassicalSymbol> {
        self.affine_pullback(l, &RVec::zeros(self.m), fiber)
    }

    pub fn add(&self, other: &ClassicalSymbol) -> ClassicalSymbol {
        let n = self.components.len().max(other.components.len());
        let components = (0..n)
            .map(|j| {
                let mut v = self.component(j).to_vec();
                v.extend_from_slice(other.component(j));
                normalize(v)
            })
            .collect();
        ClassicalSymbol {
            components,
            ..self.clone()
        }
    }

    pub fn scale(&self, a: C64) -> ClassicalSymbol {
        ClassicalSymbol {
            components: self
                .components
                .iter()
                .map(|c| normalize(c.iter().map(|t| t.scale(a)).collect()))
                .collect(),
            ..self.clone()
        }
    }

    /// (1/|Γ|)·Σ_γ 𝒯_γ A 𝒯_γ⁻¹ at the symbol level.
    pub fn equivariant_average(&self, g: &FiniteGroupAction) -> Result<ClassicalSymbol> {
        check_lattice(g)?;
        let mut acc: Option<ClassicalSymbol> = None;
        for e in &g.elements {
            let p = self.affine_pullback(&e.rot, &e.trans, &e.fiber)?;
            acc = Some(match acc {
                Some(a) => a.add(&p),
                None => p,
            });
        }
        let avg = acc.expect("group is non-empty").scale(C64::new(1.0 / g.order() as f64, 0.0));
        Ok(ClassicalSymbol {
            laplace_type: self.laplace_type,
            ..avg
        })
    }

    /// max over γ, sample x, sample ξ and components of
    /// ‖T·a(x,ξ)·T⁻¹ − a(γx, rot·ξ)‖.
    pub fn equivariance_defect(&self, g: &FiniteGroupAction) -> f64 {
        let xs = sample_points(self.m, g.lattice.as_ref(), 5);
        let xis = sample_directions(self.m);
        let mut worst: f64 = 0.0;
        for e in &g.elements {
            let tinv = match e.fiber.clone().try_inverse() {
                Some(t) => t,
                None => return f64::INFINITY,
            };
            for x in &xs {
                let gx = e.apply(x);
                for xi in &xis {
                    let rxi = &e.rot * xi;
                    for j in 0..self.components.len() {
                        let lhs = &e.fiber * self.eval_component(j, x.as_slice(), xi.as_slice()) * &tinv;
                        let rhs = self.eval_component(j, gx.as_slice(), rxi.as_slice());
                        worst = worst.max(cmax_abs(&(lhs - rhs)));
                    }
                }
            }
        }
        worst
    }

    /// Principal-symbol eigenvalue test against the sector around arg = angle.
    pub fn agmon_check(&self, angle: f64, epsilon: f64, lattice: Option<&Lattice>) -> AgmonReport {
        let xs = sample_points(self.m, lattice, 5);
        let rule = sphere_quadrature(self.m.max(1), 3).expect("m ≥ 1");
        let mut report = AgmonReport {
            ok: true,
            clearance: f64::INFINITY,
            witness: None,
        };
        for x in &xs {
            for node in &rule.nodes {
                let a = self.eval_component(0, x.as_slice(), node);
                for z in eigenvalues(&a) {
                    let ang = (z * C64::from_polar(1.0, -angle)).arg().abs();
                    let margin = (ang - epsilon).min(z.norm() - epsilon);
                    if margin < report.clearance {
                        report.clearance = margin;
                    }
                    if margin <= 0.0 && report.ok {
                        report.ok = false;
                        report.witness = Some(AgmonWitness {
                            x: x.as_slice().to_vec(),
                            xi: node.clone(),
                            eigenvalue: z,
                        });
                    }
                }
            }
        }
        report
    }

    /// Asymptotic product with another symbol, truncated at `k_max` components.
    pub fn compose(&self, other: &ClassicalSymbol, k_max: usize) -> Result<ClassicalSymbol> {
        if self.m != other.m || self.k != other.k {
            return Err(Error::Dimension("compose: (m, k) differ".into()));
        }
        let components = compose_components(&self.components, &other.components, k_max, self.m, self.principal)?;
        Ok(ClassicalSymbol {
            m: self.m,
            k: self.k,
            order: self.order + other.order,
            principal: self.principal,
            components,
            laplace_type: false,
        })
    }

    /// Largest Hermitian defect of the coefficient fields.
    pub fn coefficient_hermitian_defect(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .flat_map(|t| t.coeff.iter())
            .map(Field::hermitian_defect)
            .fold(0.0, f64::max)
    }

    /// Smallest jet order among the coefficients (None if all trigonometric).
    pub fn min_jet_order(&self) -> Option<u32> {
        self.components
            .iter()
            .flatten()
            .flat_map(|t| t.coeff.iter())
            .filter_map(Field::jet_order)
            .min()
    }
}

fn check_lattice(g: &FiniteGroupAction) -> Result<()> {
    if let Some(l) = &g.lattice {
        for e in &g.elements {
            let d = l.preservation_defect(&e.rot);
            if d > 1e-9 {
                return Err(Error::LatticeNotPreserved(e.index, d));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgmonWitness {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub eigenvalue: C64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgmonReport {
    pub ok: bool,
    /// Minimal margin to the forbidden sector/disc over the samples.
    pub clearance: f64,
    pub witness: Option<AgmonWitness>,
}

pub fn eigenvalues(a: &CMat) -> Vec<C64> {
    let n = a.nrows();
    if n == 1 {
        return vec![a[(0, 0)]];
    }
    match Schur::try_new(a.clone(), 1e-14, 10_000) {
        Some(s) => {
            let (_, t) = s.unpack();
            (0..n).map(|i| t[(i, i)]).collect()
        }
        None => vec![],
    }
}

/// Grid of sample points: on a torus the lattice points basis·(u + offset)
/// with u on a uniform grid, otherwise a small box around the origin.
pub fn sample_points(m: usize, lattice: Option<&Lattice>, per_dim: usize) -> Vec<RVec> {
    let grid: Vec<Vec<f64>> = (0..m).fold(vec![vec![]], |acc, _| {
        acc.into_iter()
            .flat_map(|p| {
                (0..per_dim).map(move |i| {
                    let mut q = p.clone();
                    q.push((i as f64 + 0.137) / per_dim as f64);
                    q
                })
            })
            .collect()
    });
    grid.into_iter()
        .map(|u| {
            let u = RVec::from_vec(u);
            match lattice {
                Some(l) => &l.basis * u,
                None => u.map(|v| 2.0 * v - 1.0),
            }
        })
        .collect()
}

/// Fixed unit directions used for equivariance sampling.
pub fn sample_directions(m: usize) -> Vec<RVec> {
    let mut out = Vec::new();
    for i in 0..m {
        let mut e = RVec::zeros(m);
        e[i] = 1.0;
        out.push(e.clone());
        let mut f = RVec::from_fn(m, |j, _| 0.3 + 0.17 * j as f64);
        f[i] += 1.0;
        out.push(&f / f.norm());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{cosine, sine, TrigPoly};
    use crate::group::{build_named_group, Generator, GroupKind};
    use std::f64::consts::PI;

    fn one(m: usize) -> Field {
        Field::constant(m, CMat::identity(1, 1))
    }

    fn val(terms: &[Term], x: &[f64], xi: &[f64], lambda: C64) -> C64 {
        eval_terms(terms, x, xi, lambda, ZERO, 1.0, 1)[(0, 0)]
    }

    #[test]
    fn laplace_examples() {
        let a = ClassicalSymbol::from_laplace_type(1, 1, 1.0, 1.0, &[], None).unwrap();
        let v: C64 = (0..3).map(|j| a.eval_component(j, &[0.3], &[2.0])[(0, 0)]).sum();
        assert!((v - 5.0).norm() < 1e-14);
        let pot = Field::Trig(cosine(1, 1, 0.3, &[1.0]));
        let a = ClassicalSymbol::from_laplace_type(1, 1, 1.0, 1.0, &[], Some(pot)).unwrap();
        let a0 = a.eval_component(2, &[0.4], &[1.0])[(0, 0)];
        assert!((a0 - (1.0 + 0.3 * 0.4f64.cos())).norm() < 1e-14);
        assert!(a.homogeneity_defect() < 1e-14);
        let bad = Field::Trig(TrigPoly::scalar(2, 1, ONE));
        assert!(matches!(
            ClassicalSymbol::from_laplace_type(1, 1, 1.0, 1.0, &[], Some(bad)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn xi_derivative_examples() {
        // ∂_{ξ1}(ξ1·(q−λ)^{-1}) = (q−λ)^{-1} − 2ξ1²(q−λ)^{-2}
        let t = Term::new(one(2), vec![1, 0], QExp::ZERO, 1);
        let d = normalize(t.dxi(0, 1.0));
        let lam = C64::new(-0.7, 0.2);
        let xi = [0.6, -1.1];
        let q = xi[0] * xi[0] + xi[1] * xi[1];
        let expect = 1.0 / (C64::new(q, 0.0) - lam) - 2.0 * xi[0] * xi[0] / (C64::new(q, 0.0) - lam).powi(2);
        assert!((val(&d, &[0.0, 0.0], &xi, lam) - expect).norm() < 1e-14);
        // ∂(q^ρ) = 2ρξ q^{ρ−1}
        let rho = 0.37;
        let t = Term::new(one(1), vec![0], QExp::constant(rho), 0);
        let d = t.dxi(0, 1.0);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].xi, vec![1]);
        assert!((d[0].q.offset - (rho - 1.0)).norm() < 1e-15);
        assert!((val(&d, &[0.0], &[1.0], ZERO) - 2.0 * rho).norm() < 1e-14);
        // constant
        let t = Term::new(one(2), vec![0, 0], QExp::ZERO, 0);
        assert!(t.dxi(1, 1.0).is_empty());
    }

    #[test]
    fn derivatives_drop_homogeneity_and_commute() {
        let f = Field::Trig(cosine(2, 1, 1.0, &[1.0, 2.0]).add(&sine(2, 1, 0.5, &[0.0, 1.0])));
        let t = Term::new(f, vec![1, 2], QExp { s_mult: 1, offset: C64::new(-0.5, 0.0) }, 2);
        let (s0, c0) = t.homogeneity();
        for d in t.dxi(1, 1.0) {
            let (s1, c1) = d.homogeneity();
            assert_eq!(s0, s1);
            assert!((c0 - c1 - 1.0).norm() < 1e-14);
        }
        let a = normalize(t.dx(0).unwrap().dxi(1, 1.0));
        let b = normalize(t.dxi(1, 1.0).into_iter().map(|u| u.dx(0).unwrap()).collect());
        let s = C64::new(0.3, 0.1);
        for xi in [[0.5, 0.9], [-1.2, 0.1]] {
            let va = eval_terms(&a, &[0.2, 0.7], &xi, ONE * -1.0, s, 1.0, 1);
            let vb = eval_terms(&b, &[0.2, 0.7], &xi, ONE * -1.0, s, 1.0, 1);
            assert!(cmax_abs(&(va - vb)) < 1e-12);
        }
    }

    #[test]
    fn x_derivative_examples() {
        let e = Term::new(Field::Trig(TrigPoly::from_modes(1, 1, [(vec![1.0], CMat::identity(1, 1))])), vec![0], QExp::ZERO, 0);
        let d = e.dx(0).unwrap();
        assert!((val(&[d], &[0.3], &[1.0], ZERO) - C64::from_polar(1.0, 0.3)).norm() < 1e-14);
        let k = Term::new(one(1), vec![0], QExp::ZERO, 0);
        assert!(normalize(vec![k.dx(0).unwrap()]).is_empty());
    }

    #[test]
    fn pullback_examples() {
        let xi1 = ClassicalSymbol::from_components(1, 1, 1.0, 1.0, vec![vec![Term::new(one(1), vec![1], QExp::ZERO, 0)]]);
        let r = RMat::from_element(1, 1, -1.0);
        let p = xi1.linear_pullback(&r, &CMat::identity(1, 1)).unwrap();
        assert!((p.eval_component(0, &[0.0], &[2.0])[(0, 0)] + 2.0).norm() < 1e-14);
        let pot = Field::Trig(cosine(2, 1, 1.0, &[0.0, 1.0]));
        let a = ClassicalSymbol::from_laplace_type(2, 1, 1.0, 0.0, &[], Some(pot)).unwrap();
        let swap = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = a.linear_pullback(&swap, &CMat::identity(1, 1)).unwrap();
        let v = p.eval_component(2, &[0.4, 1.3], &[1.0, 0.0])[(0, 0)];
        assert!((v - 0.4f64.cos()).norm() < 1e-14);
    }

    #[test]
    fn pullback_round_trip() {
        let b = vec![Field::Trig(sine(2, 1, 0.2, &[1.0, 0.0])), Field::Trig(cosine(2, 1, 0.1, &[1.0, 1.0]))];
        let a = ClassicalSymbol::from_laplace_type(2, 1, 1.0, 0.5, &b, Some(Field::Trig(cosine(2, 1, 0.3, &[2.0, -1.0])))).unwrap();
        let th: f64 = 0.73;
        let l = RMat::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let back = a
            .linear_pullback(&l, &CMat::identity(1, 1))
            .unwrap()
            .linear_pullback(&l.transpose(), &CMat::identity(1, 1))
            .unwrap();
        for x in sample_points(2, None, 3) {
            for xi in sample_directions(2) {
                for j in 0..3 {
                    let d = a.eval_component(j, x.as_slice(), xi.as_slice()) - back.eval_component(j, x.as_slice(), xi.as_slice());
                    assert!(cmax_abs(&d) < 1e-12);
                }
            }
        }
    }

    fn c2_reflection_circle() -> FiniteGroupAction {
        let l = Lattice::from_periods(&[2.0 * PI]);
        let gen = Generator::linear(RMat::from_element(1, 1, -1.0), 1);
        build_named_group(&GroupKind::Cyclic(2), &[gen], 1, 1, Some(&l), 256).unwrap()
    }

    #[test]
    fn averaging_examples() {
        let g = c2_reflection_circle();
        let cosv = ClassicalSymbol::from_laplace_type(1, 1, 1.0, 0.0, &[], Some(Field::Trig(cosine(1, 1, 1.0, &[1.0])))).unwrap();
        let avg = cosv.equivariant_average(&g).unwrap();
        assert!((avg.eval_component(2, &[0.3], &[1.0])[(0, 0)] - 0.3f64.cos()).norm() < 1e-14);
        assert!(avg.equivariance_defect(&g) < 1e-12);

        let sinv = ClassicalSymbol::from_laplace_type(1, 1, 1.0, 0.0, &[], Some(Field::Trig(sine(1, 1, 1.0, &[1.0])))).unwrap();
        let grid_max = sample_points(1, g.lattice.as_ref(), 5)
            .iter()
            .map(|x| x[0].sin().abs())
            .fold(0.0, f64::max);
        assert!((sinv.equivariance_defect(&g) - 2.0 * grid_max).abs() < 1e-12);
        let avg = sinv.equivariant_average(&g).unwrap();
        assert!(avg.component(2).is_empty());

        let l = Lattice::from_periods(&[2.0 * PI]);
        let shift = Generator::linear(RMat::identity(1, 1), 1).with_trans(RVec::from_element(1, PI));
        let gt = build_named_group(&GroupKind::Cyclic(2), &[shift], 1, 1, Some(&l), 256).unwrap();
        let e = TrigPoly::from_modes(1, 1, [(vec![1.0], CMat::identity(1, 1))]);
        let ev = ClassicalSymbol::from_laplace_type(1, 1, 1.0, 0.0, &[], Some(Field::Trig(e))).unwrap();
        assert!(ev.equivariant_average(&gt).unwrap().component(2).is_empty());
    }

    #[test]
    fn averaging_is_idempotent() {
        let l = Lattice::from_periods(&[2.0 * PI, 2.0 * PI]);
        let r = Generator::linear(RMat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]), 1);
        let g = build_named_group(&GroupKind::Cyclic(4), &[r], 2, 1, Some(&l), 256).unwrap();
        let b = vec![Field::Trig(sine(2, 1, 0.2, &[1.0, 0.0])), Field::Trig(cosine(2, 1, 0.1, &[1.0, 1.0]))];
        let a = ClassicalSymbol::from_laplace_type(2, 1, 1.0, 0.5, &b, Some(Field::Trig(cosine(2, 1, 0.3, &[2.0, -1.0])))).unwrap();
        let once = a.equivariant_average(&g).unwrap();
        let twice = once.equivariant_average(&g).unwrap();
        assert!(once.equivariance_defect(&g) < 1e-12);
        for x in sample_points(2, Some(&l), 3) {
            for xi in sample_directions(2) {
                for j in 0..3 {
                    let d = once.eval_component(j, x.as_slice(), xi.as_slice()) - twice.eval_component(j, x.as_slice(), xi.as_slice());
                    assert!(cmax_abs(&d) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn agmon_examples() {
        let id = Field::constant(1, CMat::identity(1, 1));
        let lap = ClassicalSymbol::from_laplace_type(1, 1, 1.0, 0.0, &[], None).unwrap();
        assert!(lap.agmon_check(PI, 0.1, None).ok);
        let neg = ClassicalSymbol::from_components(1, 1, 2.0, 1.0, vec![vec![Term::new(id.scale(-ONE), vec![0], QExp::constant(1.0), 0)]]);
        let rep = neg.agmon_check(PI, 0.1, None);
        assert!(!rep.ok);
        assert!((rep.witness.unwrap().eigenvalue + 1.0).norm() < 1e-12);
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, ONE * 2.0]));
        let diag = ClassicalSymbol::from_components(1, 2, 2.0, 1.0, vec![vec![Term::new(Field::constant(1, d), vec![0], QExp::constant(1.0), 0)]]);
        assert!(diag.agmon_check(PI, 0.1, None).ok);
    }

    #[test]
    fn compose_examples() {
        let lap = ClassicalSymbol::from_components(1, 1, 2.0, 1.0, vec![vec![Term::new(one(1), vec![0], QExp::constant(1.0), 0)]]);
        let sq = lap.compose(&lap, 3).unwrap();
        assert_eq!(sq.component(0).len(), 1);
        assert!((sq.component(0)[0].q.offset - 2.0).norm() < 1e-15);
        assert!(sq.component(1).is_empty() && sq.component(2).is_empty());

        let xi = ClassicalSymbol::from_components(1, 1, 1.0, 1.0, vec![vec![Term::new(one(1), vec![1], QExp::ZERO, 0)]]);
        let v = Field::Trig(cosine(1, 1, 1.0, &[1.0]));
        let vs = ClassicalSymbol::from_components(1, 1, 0.0, 1.0, vec![vec![Term::new(v, vec![0], QExp::ZERO, 0)]]);
        let p = xi.compose(&vs, 3).unwrap();
        let x = 0.8;
        assert!((p.eval_component(0, &[x], &[1.5])[(0, 0)] - 1.5 * x.cos()).norm() < 1e-14);
        // D_x cos x = i sin x
        assert!((p.eval_component(1, &[x], &[1.5])[(0, 0)] - C64::new(0.0, x.sin())).norm() < 1e-14);
    }

    #[test]
    fn binomial_poly_values() {
        let p = binomial_poly(3);
        let s = C64::new(2.5, 0.0);
        let expect = 2.5 * 1.5 * 0.5 / 6.0;
        assert!((eval_scalar_poly(&p, s) - expect).norm() < 1e-14);
        assert_eq!(binomial_poly(0), vec![ONE]);
    }
}
