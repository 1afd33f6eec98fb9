//! x-dependence of symbol coefficients: matrix-valued trigonometric
//! polynomials on a torus and truncated Taylor jets at a point.

use crate::error::{Error, Result};
use crate::linalg::{cmax_abs, CMat, RMat, RVec, C64, I};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const FREQ_SCALE: f64 = 1e9;

/// e^{iφ} with components snapped to exact 0/±1 when within rounding, so
/// that phases such as e^{iπ} cancel exactly under averaging.
pub fn unit_phase(phase: f64) -> C64 {
    let snap = |v: f64| {
        if v.abs() < 1e-14 {
            0.0
        } else if (v.abs() - 1.0).abs() < 1e-14 {
            v.signum()
        } else {
            v
        }
    };
    let (s, c) = phase.sin_cos();
    C64::new(snap(c), snap(s))
}

fn freq_key(nu: &[f64]) -> Vec<i64> {
    nu.iter().map(|v| (v * FREQ_SCALE).round() as i64).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Mode {
    nu: Vec<f64>,
    c: CMat,
}

/// Σ_ν c_ν e^{i⟨ν,x⟩} with k×k complex coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "TrigRepr", into = "TrigRepr")]
pub struct TrigPoly {
    m: usize,
    k: usize,
    modes: BTreeMap<Vec<i64>, Mode>,
}

#[derive(Serialize, Deserialize)]
struct TrigRepr {
    m: usize,
    k: usize,
    modes: Vec<Mode>,
}

impl From<TrigRepr> for TrigPoly {
    fn from(r: TrigRepr) -> Self {
        let mut t = TrigPoly::zero(r.m, r.k);
        for md in r.modes {
            t.add_mode(&md.nu, md.c);
        }
        t
    }
}

impl From<TrigPoly> for TrigRepr {
    fn from(t: TrigPoly) -> Self {
        TrigRepr {
            m: t.m,
            k: t.k,
            modes: t.modes.into_values().collect(),
        }
    }
}

impl TrigPoly {
    pub fn zero(m: usize, k: usize) -> Self {
        TrigPoly {
            m,
            k,
            modes: BTreeMap::new(),
        }
    }

    pub fn constant(m: usize, c: CMat) -> Self {
        let k = c.nrows();
        let mut t = TrigPoly::zero(m, k);
        t.add_mode(&vec![0.0; m], c);
        t
    }

    pub fn scalar(m: usize, k: usize, v: C64) -> Self {
        TrigPoly::constant(m, CMat::identity(k, k) * v)
    }

    /// Builds from (frequency, coefficient) pairs; equal frequencies add up.
    pub fn from_modes(m: usize, k: usize, modes: impl IntoIterator<Item = (Vec<f64>, CMat)>) -> Self {
        let mut t = TrigPoly::zero(m, k);
        for (nu, c) in modes {
            t.add_mode(&nu, c);
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn fiber_dim(&self) -> usize {
        self.k
    }

    pub fn add_mode(&mut self, nu: &[f64], c: CMat) {
        assert_eq!(nu.len(), self.m, "frequency dimension");
        let key = freq_key(nu);
        match self.modes.get_mut(&key) {
            Some(md) => md.c += c,
            None => {
                self.modes.insert(
                    key,
                    Mode {
                        nu: nu.to_vec(),
                        c,
                    },
                );
            }
        }
    }

    pub fn modes(&self) -> impl Iterator<Item = (&[f64], &CMat)> {
        self.modes.values().map(|md| (md.nu.as_slice(), &md.c))
    }

    pub fn coefficient(&self, nu: &[f64]) -> Option<&CMat> {
        self.modes.get(&freq_key(nu)).map(|md| &md.c)
    }

    /// Zero-frequency coefficient (the mean over a period cell).
    pub fn mean(&self) -> CMat {
        self.coefficient(&vec![0.0; self.m])
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.k, self.k))
    }

    pub fn is_constant(&self) -> bool {
        self.modes.keys().all(|key| key.iter().all(|&v| v == 0))
    }

    pub fn max_abs(&self) -> f64 {
        self.modes.values().map(|md| cmax_abs(&md.c)).fold(0.0, f64::max)
    }

    pub fn prune(&mut self, tol: f64) {
        self.modes.retain(|_, md| cmax_abs(&md.c) > tol);
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.k, self.k);
        for md in self.modes.values() {
            let phase: f64 = md.nu.iter().zip(x).map(|(a, b)| a * b).sum();
            out += &md.c * C64::from_polar(1.0, phase);
        }
        out
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = self.clone();
        for md in other.modes.values() {
            out.add_mode(&md.nu, md.c.clone());
        }
        out
    }

    pub fn scale(&self, a: C64) -> TrigPoly {
        let mut out = self.clone();
        for md in out.modes.values_mut() {
            md.c *= a;
        }
        out
    }

    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = TrigPoly::zero(self.m, self.k);
        for a in self.modes.values() {
            for b in other.modes.values() {
                let nu: Vec<f64> = a.nu.iter().zip(&b.nu).map(|(x, y)| x + y).collect();
                out.add_mode(&nu, &a.c * &b.c);
            }
        }
        out
    }

    /// F·c_ν·G for every mode.
    pub fn sandwich(&self, left: &CMat, right: &CMat) -> TrigPoly {
        let mut out = self.clone();
        for md in out.modes.values_mut() {
            md.c = left * &md.c * right;
        }
        out
    }

    /// D_{x_axis} = −i∂: multiplies c_ν by ν_axis.
    pub fn dx(&self, axis: usize) -> TrigPoly {
        let mut out = TrigPoly::zero(self.m, self.k);
        for md in self.modes.values() {
            let f = md.nu[axis];
            if f != 0.0 {
                out.add_mode(&md.nu, &md.c * C64::new(f, 0.0));
            }
        }
        out
    }

    /// new(y) = old(shift + lin·y), `lin` is m_old × m_new.
    pub fn substitute(&self, shift: &RVec, lin: &RMat) -> TrigPoly {
        let m_new = lin.ncols();
        let mut out = TrigPoly::zero(m_new, self.k);
        for md in self.modes.values() {
            let nu = RVec::from_column_slice(&md.nu);
            let nu_new = lin.transpose() * &nu;
            out.add_mode(nu_new.as_slice(), &md.c * unit_phase(nu.dot(shift)));
        }
        out
    }

    /// max |c_{−ν} − c_νᴴ|
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for md in self.modes.values() {
            let neg: Vec<f64> = md.nu.iter().map(|v| -v).collect();
            let partner = self
                .coefficient(&neg)
                .cloned()
                .unwrap_or_else(|| CMat::zeros(self.k, self.k));
            worst = worst.max(cmax_abs(&(partner - md.c.adjoint())));
        }
        worst
    }

    /// Taylor jet at `base` of the given order.
    pub fn to_jet(&self, base: &RVec, order: u32) -> Jet {
        let mut jet = Jet::zero(base.clone(), order, self.k);
        for alpha in multi_indices(self.m, order) {
            let mut c = CMat::zeros(self.k, self.k);
            for md in self.modes.values() {
                let phase: f64 = md.nu.iter().zip(base.iter()).map(|(a, b)| a * b).sum();
                let mut f = C64::from_polar(1.0, phase);
                for (i, &a) in alpha.iter().enumerate() {
                    f *= (I * md.nu[i]).powu(a) / factorial(a);
                }
                c += &md.c * f;
            }
            jet.coeffs.insert(alpha, c);
        }
        jet.prune(0.0);
        jet
    }
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// All multi-indices of length m with |α| ≤ order, graded then lexicographic.
pub fn multi_indices(m: usize, order: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for deg in 0..=order {
        exact_degree(m, deg, &mut vec![], &mut out);
    }
    out
}

fn exact_degree(m: usize, deg: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == m {
        prefix.push(deg);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    if m == 0 {
        if deg == 0 {
            out.push(vec![]);
        }
        return;
    }
    for a in (0..=deg).rev() {
        prefix.push(a);
        exact_degree(m, deg - a, prefix, out);
        prefix.pop();
    }
}

/// Truncated Taylor expansion f(base + h) ≈ Σ_{|α|≤order} c_α h^α.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "JetRepr", into = "JetRepr")]
pub struct Jet {
    pub base: RVec,
    pub order: u32,
    k: usize,
    coeffs: BTreeMap<Vec<u32>, CMat>,
}

#[derive(Serialize, Deserialize)]
struct JetRepr {
    base: RVec,
    order: u32,
    k: usize,
    coeffs: Vec<(Vec<u32>, CMat)>,
}

impl From<JetRepr> for Jet {
    fn from(r: JetRepr) -> Self {
        Jet {
            base: r.base,
            order: r.order,
            k: r.k,
            coeffs: r.coeffs.into_iter().collect(),
        }
    }
}

impl From<Jet> for JetRepr {
    fn from(j: Jet) -> Self {
        JetRepr {
            base: j.base,
            order: j.order,
            k: j.k,
            coeffs: j.coeffs.into_iter().collect(),
        }
    }
}

impl Jet {
    pub fn zero(base: RVec, order: u32, k: usize) -> Self {
        Jet {
            base,
            order,
            k,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(base: RVec, order: u32, c: CMat) -> Self {
        let m = base.len();
        let k = c.nrows();
        let mut j = Jet::zero(base, order, k);
        j.coeffs.insert(vec![0; m], c);
        j
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn fiber_dim(&self) -> usize {
        self.k
    }

    pub fn set(&mut self, alpha: Vec<u32>, c: CMat) {
        assert_eq!(alpha.len(), self.dim());
        if alpha.iter().sum::<u32>() <= self.order {
            self.coeffs.insert(alpha, c);
        }
    }

    pub fn coefficient(&self, alpha: &[u32]) -> CMat {
        self.coeffs
            .get(alpha)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.k, self.k))
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Vec<u32>, &CMat)> {
        self.coeffs.iter()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs
            .iter()
            .all(|(a, c)| a.iter().all(|&v| v == 0) || cmax_abs(c) == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(cmax_abs).fold(0.0, f64::max)
    }

    pub fn prune(&mut self, tol: f64) {
        self.coeffs.retain(|_, c| cmax_abs(c) > tol);
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.k, self.k);
        for (alpha, c) in &self.coeffs {
            let mut f = 1.0;
            for (i, &a) in alpha.iter().enumerate() {
                f *= (x[i] - self.base[i]).powi(a as i32);
            }
            out += c * C64::new(f, 0.0);
        }
        out
    }

    fn check_base(&self, other: &Jet) {
        assert!(
            (&self.base - &other.base).amax() < 1e-12,
            "jets expanded at different base points"
        );
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.check_base(other);
        let order = self.order.min(other.order);
        let mut out = Jet::zero(self.base.clone(), order, self.k);
        for src in [self, other] {
            for (a, c) in &src.coeffs {
                if a.iter().sum::<u32>() <= order {
                    *out
                        .coeffs
                        .entry(a.clone())
                        .or_insert_with(|| CMat::zeros(self.k, self.k)) += c;
                }
            }
        }
        out
    }

    pub fn scale(&self, a: C64) -> Jet {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c *= a;
        }
        out
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        self.check_base(other);
        let order = self.order.min(other.order);
        let mut out = Jet::zero(self.base.clone(), order, self.k);
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                let g: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if g.iter().sum::<u32>() <= order {
                    *out
                        .coeffs
                        .entry(g)
                        .or_insert_with(|| CMat::zeros(self.k, self.k)) += ca * cb;
                }
            }
        }
        out
    }

    pub fn sandwich(&self, left: &CMat, right: &CMat) -> Jet {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = left * &*c * right;
        }
        out
    }

    /// D_{x_axis} = −i∂, lowering the order by one.
    pub fn dx(&self, axis: usize) -> Result<Jet> {
        if self.order == 0 {
            return Err(Error::JetOrderExhausted(format!(
                "cannot differentiate an order-0 jet along axis {axis}"
            )));
        }
        let mut out = Jet::zero(self.base.clone(), self.order - 1, self.k);
        for (a, c) in &self.coeffs {
            if a[axis] == 0 {
                continue;
            }
            let mut b = a.clone();
            b[axis] -= 1;
            if b.iter().sum::<u32>() <= out.order {
                out.coeffs.insert(b, c * (-I * a[axis] as f64));
            }
        }
        Ok(out)
    }

    /// new(y) = old(shift + lin·y). The new jet is expanded at y = 0, so
    /// `shift` must equal the current base point.
    pub fn substitute(&self, shift: &RVec, lin: &RMat) -> Result<Jet> {
        if (shift - &self.base).amax() > 1e-10 {
            return Err(Error::Precondition(
                "jet substitution must keep the expansion point".into(),
            ));
        }
        let m_new = lin.ncols();
        let mut out = Jet::zero(RVec::zeros(m_new), self.order, self.k);
        for (alpha, c) in &self.coeffs {
            let mut poly = Poly::one(m_new);
            for (i, &a) in alpha.iter().enumerate() {
                let row: Vec<f64> = (0..m_new).map(|j| lin[(i, j)]).collect();
                let lf = Poly::linear(&row);
                for _ in 0..a {
                    poly = poly.mul_truncated(&lf, self.order);
                }
            }
            for (mono, v) in poly.terms {
                *out
                    .coeffs
                    .entry(mono)
                    .or_insert_with(|| CMat::zeros(self.k, self.k)) += c * C64::new(v, 0.0);
            }
        }
        Ok(out)
    }
}

/// Real polynomial in several variables, used for linear changes of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn one(nvars: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0; nvars], 1.0);
        Poly { nvars, terms }
    }

    pub fn linear(coeffs: &[f64]) -> Self {
        let n = coeffs.len();
        let mut terms = BTreeMap::new();
        for (j, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                let mut e = vec![0; n];
                e[j] = 1;
                terms.insert(e, c);
            }
        }
        Poly { nvars: n, terms }
    }

    pub fn mul_truncated(&self, other: &Poly, max_deg: u32) -> Poly {
        let mut terms: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                let g: Vec<u32> = a.iter().zip(b).map(|(p, q)| p + q).collect();
                if g.iter().sum::<u32>() <= max_deg {
                    *terms.entry(g).or_insert(0.0) += x * y;
                }
            }
        }
        terms.retain(|_, v| *v != 0.0);
        Poly {
            nvars: self.nvars,
            terms,
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        self.mul_truncated(other, u32::MAX)
    }
}

/// x-dependence of a symbol coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Field {
    Trig(TrigPoly),
    Jet(Jet),
}

impl From<TrigPoly> for Field {
    fn from(t: TrigPoly) -> Self {
        Field::Trig(t)
    }
}

impl From<Jet> for Field {
    fn from(j: Jet) -> Self {
        Field::Jet(j)
    }
}

impl Field {
    pub fn constant(m: usize, c: CMat) -> Self {
        Field::Trig(TrigPoly::constant(m, c))
    }

    pub fn scalar(m: usize, k: usize, v: C64) -> Self {
        Field::Trig(TrigPoly::scalar(m, k, v))
    }

    pub fn zero_like(&self) -> Field {
        match self {
            Field::Trig(t) => Field::Trig(TrigPoly::zero(t.m, t.k)),
            Field::Jet(j) => Field::Jet(Jet::zero(j.base.clone(), j.order, j.k)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Field::Trig(t) => t.dim(),
            Field::Jet(j) => j.dim(),
        }
    }

    pub fn fiber_dim(&self) -> usize {
        match self {
            Field::Trig(t) => t.fiber_dim(),
            Field::Jet(j) => j.fiber_dim(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Field::Trig(t) => t.is_constant(),
            Field::Jet(j) => j.is_constant(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Field::Trig(t) => t.max_abs(),
            Field::Jet(j) => j.max_abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }

    pub fn prune(&mut self, tol: f64) {
        match self {
            Field::Trig(t) => t.prune(tol),
            Field::Jet(j) => j.prune(tol),
        }
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        match self {
            Field::Trig(t) => t.eval(x),
            Field::Jet(j) => j.eval(x),
        }
    }

    fn as_jet_like(&self, like: &Jet) -> Jet {
        match self {
            Field::Jet(j) => j.clone(),
            Field::Trig(t) => t.to_jet(&like.base, like.order),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        match (self, other) {
            (Field::Trig(a), Field::Trig(b)) => Field::Trig(a.add(b)),
            (Field::Jet(a), b) => Field::Jet(a.add(&b.as_jet_like(a))),
            (a, Field::Jet(b)) => Field::Jet(a.as_jet_like(b).add(b)),
        }
    }

    pub fn mul(&self, other: &Field) -> Field {
        match (self, other) {
            (Field::Trig(a), Field::Trig(b)) => Field::Trig(a.mul(b)),
            (Field::Jet(a), b) => Field::Jet(a.mul(&b.as_jet_like(a))),
            (a, Field::Jet(b)) => Field::Jet(a.as_jet_like(b).mul(b)),
        }
    }

    pub fn scale(&self, a: C64) -> Field {
        match self {
            Field::Trig(t) => Field::Trig(t.scale(a)),
            Field::Jet(j) => Field::Jet(j.scale(a)),
        }
    }

    pub fn sandwich(&self, left: &CMat, right: &CMat) -> Field {
        match self {
            Field::Trig(t) => Field::Trig(t.sandwich(left, right)),
            Field::Jet(j) => Field::Jet(j.sandwich(left, right)),
        }
    }

    pub fn dx(&self, axis: usize) -> Result<Field> {
        match self {
            Field::Trig(t) => Ok(Field::Trig(t.dx(axis))),
            Field::Jet(j) => j.dx(axis).map(Field::Jet),
        }
    }

    pub fn substitute(&self, shift: &RVec, lin: &RMat) -> Result<Field> {
        match self {
            Field::Trig(t) => Ok(Field::Trig(t.substitute(shift, lin))),
            Field::Jet(j) => j.substitute(shift, lin).map(Field::Jet),
        }
    }

    /// Remaining differentiation budget (None for trigonometric data).
    pub fn jet_order(&self) -> Option<u32> {
        match self {
            Field::Trig(_) => None,
            Field::Jet(j) => Some(j.order),
        }
    }

    pub fn hermitian_defect(&self) -> f64 {
        match self {
            Field::Trig(t) => t.hermitian_defect(),
            Field::Jet(_) => 0.0,
        }
    }
}

/// Scalar helper for building a real cosine potential a·cos⟨ν,x⟩ on ℂᵏ.
pub fn cosine(m: usize, k: usize, amplitude: f64, nu: &[f64]) -> TrigPoly {
    let half = CMat::identity(k, k) * C64::new(amplitude / 2.0, 0.0);
    let neg: Vec<f64> = nu.iter().map(|v| -v).collect();
    TrigPoly::from_modes(m, k, [(nu.to_vec(), half.clone()), (neg, half)])
}

/// Scalar helper for a·sin⟨ν,x⟩.
pub fn sine(m: usize, k: usize, amplitude: f64, nu: &[f64]) -> TrigPoly {
    let id = CMat::identity(k, k);
    let neg: Vec<f64> = nu.iter().map(|v| -v).collect();
    TrigPoly::from_modes(
        m,
        k,
        [
            (nu.to_vec(), &id * C64::new(0.0, -amplitude / 2.0)),
            (neg, &id * C64::new(0.0, amplitude / 2.0)),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    fn s(v: f64) -> CMat {
        CMat::from_element(1, 1, C64::new(v, 0.0))
    }

    #[test]
    fn dx_of_exponential_and_cosine() {
        let e = TrigPoly::from_modes(1, 1, [(vec![1.0], s(1.0))]);
        let d = e.dx(0);
        assert!((d.coefficient(&[1.0]).unwrap()[(0, 0)] - ONE).norm() < 1e-15);
        let c = cosine(1, 1, 1.0, &[1.0]);
        let d = c.dx(0);
        assert!((d.coefficient(&[1.0]).unwrap()[(0, 0)] - 0.5).norm() < 1e-15);
        assert!((d.coefficient(&[-1.0]).unwrap()[(0, 0)] + 0.5).norm() < 1e-15);
        // D_x cos x = i sin x
        for &x in &[0.3, 1.7] {
            let v = d.eval(&[x])[(0, 0)];
            assert!((v - I * f64::sin(x)).norm() < 1e-14);
        }
        let k = TrigPoly::scalar(1, 1, ONE);
        assert_eq!(k.dx(0).max_abs(), 0.0);
    }

    #[test]
    fn jet_matches_trig_near_base() {
        let v = cosine(2, 1, 0.3, &[1.0, 2.0]).add(&sine(2, 1, 0.2, &[0.0, 1.0]));
        let base = RVec::from_column_slice(&[0.4, -0.7]);
        let jet = v.to_jet(&base, 6);
        let x = [0.4 + 1e-3, -0.7 - 1e-3];
        let exact = v.eval(&x)[(0, 0)];
        let approx = jet.eval(&x)[(0, 0)];
        assert!((exact - approx).norm() <= 1e-8 * v.max_abs());
    }

    #[test]
    fn jet_dx_matches_trig_dx() {
        let v = cosine(1, 1, 1.0, &[1.0]);
        let base = RVec::from_column_slice(&[0.5]);
        let j = v.to_jet(&base, 5).dx(0).unwrap();
        let t = v.dx(0).to_jet(&base, 4);
        for a in 0..=4u32 {
            let d = j.coefficient(&[a]) - t.coefficient(&[a]);
            assert!(cmax_abs(&d) < 1e-14);
        }
        let zero = Jet::constant(base, 0, s(1.0));
        assert!(matches!(zero.dx(0), Err(Error::JetOrderExhausted(_))));
    }

    #[test]
    fn substitution_is_composition() {
        let v = cosine(2, 1, 1.0, &[1.0, 0.0]).add(&sine(2, 1, 0.5, &[1.0, 1.0]));
        let shift = RVec::from_column_slice(&[0.2, -0.1]);
        let lin = RMat::from_row_slice(2, 1, &[0.6, 0.8]);
        let w = v.substitute(&shift, &lin);
        for &y in &[0.0, 0.7, -2.1] {
            let x = &shift + &lin * RVec::from_element(1, y);
            assert!((w.eval(&[y])[(0, 0)] - v.eval(x.as_slice())[(0, 0)]).norm() < 1e-14);
        }
        let base = shift.clone();
        let j = v.to_jet(&base, 5).substitute(&shift, &lin).unwrap();
        let jt = w.to_jet(&RVec::zeros(1), 5);
        for a in 0..=5u32 {
            assert!(cmax_abs(&(j.coefficient(&[a]) - jt.coefficient(&[a]))) < 1e-13);
        }
    }

    #[test]
    fn hermitian_defect_of_real_potentials() {
        assert!(cosine(1, 1, 0.3, &[1.0]).hermitian_defect() < 1e-15);
        assert!(sine(1, 1, 0.3, &[1.0]).hermitian_defect() < 1e-15);
        let bad = TrigPoly::from_modes(1, 1, [(vec![1.0], s(1.0))]);
        assert!(bad.hermitian_defect() > 0.5);
    }

    #[test]
    fn multi_index_count() {
        assert_eq!(multi_indices(2, 3).len(), 10);
        assert_eq!(multi_indices(1, 4).len(), 5);
        assert_eq!(multi_indices(0, 4), vec![Vec::<u32>::new()]);
    }
}
