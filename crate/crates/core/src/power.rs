//! Resolvent parametrix recursion and the Cauchy integral producing the
//! homogeneous components a_{s,k} of complex powers A^s.
//!
//! Exact rule per term, with the orientation fixed by (q − λ)^{-1} ↦ q^s:
//! (1/2πi)∮ λ^s (q − λ)^{-r} dλ = (−1)^{r−1}·binom(s, r−1)·q^{s−r+1}.

use crate::error::{Error, Result};
use crate::field::{multi_indices, Field};
use crate::linalg::{cmax_abs, CMat, C64, ONE, ZERO};
use crate::quadrature::integrate;
use crate::symbol::{
    alpha_factorial, binomial_poly, compose_components, dx_multi, dxi_multi, eval_terms, normalize, product,
    ClassicalSymbol, QExp, Term,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Components b_{−2−j}, j = 0..=truncation, of the resolvent parametrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventSymbolFamily {
    pub m: usize,
    pub k: usize,
    pub principal: f64,
    pub components: Vec<Vec<Term>>,
}

impl ResolventSymbolFamily {
    pub fn truncation(&self) -> usize {
        self.components.len().saturating_sub(1)
    }

    pub fn eval(&self, j: usize, x: &[f64], xi: &[f64], lambda: C64) -> CMat {
        eval_terms(&self.components[j], x, xi, lambda, ZERO, self.principal, self.k)
    }
}

/// Components a_{s,k}, k = 0..=truncation, polynomial in s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerSymbolFamily {
    pub m: usize,
    pub k: usize,
    pub principal: f64,
    pub components: Vec<Vec<Term>>,
}

impl PowerSymbolFamily {
    pub fn truncation(&self) -> usize {
        self.components.len().saturating_sub(1)
    }

    /// Components with s fixed.
    pub fn at_s(&self, s: C64) -> Vec<Vec<Term>> {
        self.components
            .iter()
            .map(|c| normalize(c.iter().map(|t| t.at_s(s)).collect()))
            .collect()
    }

    pub fn eval(&self, j: usize, x: &[f64], xi: &[f64], s: C64) -> CMat {
        eval_terms(&self.components[j], x, xi, ZERO, s, self.principal, self.k)
    }

    /// The family truncated to components 0..=k.
    pub fn truncated(&self, k: usize) -> PowerSymbolFamily {
        PowerSymbolFamily {
            components: self.components.iter().take(k + 1).cloned().collect(),
            ..self.clone()
        }
    }
}

fn laplace_check(a: &ClassicalSymbol) -> Result<()> {
    if !a.laplace_type {
        return Err(Error::NotLaplaceType("symbol is not flagged Laplace type".into()));
    }
    let lead = a.component(0);
    let ok = lead.len() == 1 && {
        let t = &lead[0];
        t.res == 0
            && t.q == QExp::constant(1.0)
            && t.xi.iter().all(|&v| v == 0)
            && t.coeff.len() == 1
            && t.coeff[0].is_constant()
            && cmax_abs(&(t.coeff[0].eval(&vec![0.0; a.m]) - CMat::identity(a.k, a.k))) < 1e-12
    };
    if !ok {
        return Err(Error::NotLaplaceType("principal part is not c|ξ|²·I".into()));
    }
    Ok(())
}

/// Seeley recursion b_{−2} = (q − λ)⁻¹·I,
/// b_{−2−j} = −b_{−2}·Σ_{k+l+|α|=j, l<j} (1/α!)·∂_ξ^α a_{2−k}·D_x^α b_{−2−l}.
pub fn resolvent_recursion(a: &ClassicalSymbol, j_max: usize) -> Result<ResolventSymbolFamily> {
    resolvent_recursion_resume(a, None, j_max)
}

/// Continues a previously computed family up to `j_max`.
pub fn resolvent_recursion_resume(
    a: &ClassicalSymbol,
    prev: Option<&ResolventSymbolFamily>,
    j_max: usize,
) -> Result<ResolventSymbolFamily> {
    laplace_check(a)?;
    let (m, c) = (a.m, a.principal);
    let id = Field::constant(m, CMat::identity(a.k, a.k));
    let b0 = vec![Term::new(id, vec![0; m], QExp::ZERO, 1)];
    let mut comps: Vec<Vec<Term>> = match prev {
        Some(p) if !p.components.is_empty() => p.components.clone(),
        _ => vec![b0.clone()],
    };
    comps.truncate(j_max + 1);
    let minus_one = C64::new(-1.0, 0.0);
    while comps.len() <= j_max {
        let j = comps.len();
        let mut acc = Vec::new();
        for kk in 0..=j.min(2) {
            let ak = a.component(kk);
            if ak.is_empty() {
                continue;
            }
            for (l, bl) in comps.iter().enumerate() {
                if kk + l > j {
                    continue;
                }
                let order = (j - kk - l) as u32;
                for alpha in multi_indices(m, order) {
                    if alpha.iter().sum::<u32>() != order {
                        continue;
                    }
                    let da = dxi_multi(ak, &alpha, c);
                    if da.is_empty() {
                        continue;
                    }
                    let db = dx_multi(bl, &alpha).map_err(|e| e.context(format!("resolvent component {j}")))?;
                    let w = C64::new(1.0 / alpha_factorial(&alpha), 0.0);
                    acc.extend(product(&da, &db).into_iter().map(|t| t.scale(w)));
                }
            }
        }
        let sum = normalize(acc);
        let bj: Vec<Term> = product(&b0, &sum).into_iter().map(|t| t.scale(minus_one)).collect();
        comps.push(bj);
    }
    Ok(ResolventSymbolFamily {
        m,
        k: a.k,
        principal: c,
        components: comps,
    })
}

/// Max defect of compose(a − λ, b) = I over random (x, ξ, λ) samples.
pub fn composition_defect(a: &ClassicalSymbol, fam: &ResolventSymbolFamily, samples: usize, seed: u64) -> Result<f64> {
    let m = a.m;
    let mut shifted = a.components.clone();
    // a₂ − λ = (q − λ)^{+1}
    let id = Field::constant(m, CMat::identity(a.k, a.k));
    shifted[0] = vec![Term::new(id, vec![0; m], QExp::ZERO, -1)];
    let n = fam.components.len();
    let prod = compose_components(&shifted, &fam.components, n, m, a.principal)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let xi: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lambda = C64::new(rng.random_range(-3.0..-0.1), rng.random_range(-1.0..1.0));
        for (j, comp) in prod.iter().enumerate() {
            let v = eval_terms(comp, &x, &xi, lambda, ZERO, a.principal, a.k);
            let expect = if j == 0 {
                CMat::identity(a.k, a.k)
            } else {
                CMat::zeros(a.k, a.k)
            };
            worst = worst.max(cmax_abs(&(v - expect)));
        }
    }
    Ok(worst)
}

/// Exact contour integration of every resolvent term.
pub fn cauchy_power(fam: &ResolventSymbolFamily) -> PowerSymbolFamily {
    let components = fam
        .components
        .iter()
        .map(|comp| {
            let out: Vec<Term> = comp
                .iter()
                .filter(|t| t.res >= 1)
                .map(|t| {
                    let r = t.res as u32;
                    let mut p = binomial_poly(r - 1);
                    if (r - 1) % 2 == 1 {
                        p.iter_mut().for_each(|v| *v = -*v);
                    }
                    let mut nt = t.scale_poly(&p);
                    nt.q = QExp {
                        s_mult: t.q.s_mult + 1,
                        offset: t.q.offset + (1.0 - r as f64),
                    };
                    nt.res = 0;
                    nt
                })
                .collect();
            normalize(out)
        })
        .collect();
    PowerSymbolFamily {
        m: fam.m,
        k: fam.k,
        principal: fam.principal,
        components,
    }
}

/// Powers from a symbol: recursion to `k_max` followed by the exact rule.
pub fn power_family(a: &ClassicalSymbol, k_max: usize) -> Result<PowerSymbolFamily> {
    Ok(cauchy_power(&resolvent_recursion(a, k_max)?))
}

/// k-th homogeneous component of (q + P)^s = Σ_n binom(s,n) q^{s−n} P^n for
/// constant-coefficient P = a₁ + a₀.
pub fn binomial_oracle(a: &ClassicalSymbol, k: usize) -> Result<Vec<Term>> {
    laplace_check(a)?;
    if !a.is_constant_coefficient() {
        return Err(Error::NonConstantCoefficients);
    }
    let m = a.m;
    let id = Field::constant(m, CMat::identity(a.k, a.k));
    let unit = vec![Term::new(id, vec![0; m], QExp::ZERO, 0)];
    let a1 = a.component(1).to_vec();
    let a0 = a.component(2).to_vec();
    // words[n][j]: sum of products of n factors with j copies of a₁.
    let mut words: Vec<Vec<Vec<Term>>> = vec![vec![unit]];
    for n in 1..=k {
        let mut row = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let mut acc = Vec::new();
            if j >= 1 {
                acc.extend(product(&words[n - 1][j - 1], &a1));
            }
            if j < n {
                acc.extend(product(&words[n - 1][j], &a0));
            }
            row.push(normalize(acc));
        }
        words.push(row);
    }
    let mut out = Vec::new();
    for n in k.div_ceil(2)..=k {
        let j = 2 * n - k;
        if j > n {
            continue;
        }
        let p = binomial_poly(n as u32);
        for t in &words[n][j] {
            let mut nt = t.scale_poly(&p);
            nt.q = QExp {
                s_mult: 1,
                offset: C64::new(-(n as f64), 0.0),
            };
            out.push(nt);
        }
    }
    Ok(normalize(out))
}

/// Rewrites ξ-monomials with ξ_m² = q/c − Σ_{i<m} ξ_i² until the last
/// exponent is ≤ 1; distinct normal forms are distinct functions.
pub fn sphere_normal_form(terms: &[Term], c: f64) -> Vec<Term> {
    let mut work: Vec<Term> = terms.to_vec();
    let mut done = Vec::new();
    while let Some(t) = work.pop() {
        let m = t.xi.len();
        if m == 0 || t.xi[m - 1] < 2 {
            done.push(t);
            continue;
        }
        let mut base = t.clone();
        base.xi[m - 1] -= 2;
        let mut qt = base.scale(C64::new(1.0 / c, 0.0));
        qt.q.offset += 1.0;
        work.push(qt);
        for i in 0..m - 1 {
            let mut u = base.scale(C64::new(-1.0, 0.0));
            u.xi[i] += 2;
            work.push(u);
        }
    }
    normalize(done)
}

/// Largest coefficient of the difference of two term lists after reduction
/// to sphere normal form.
pub fn term_difference(a: &[Term], b: &[Term], c: f64) -> f64 {
    let mut all = a.to_vec();
    all.extend(b.iter().map(|t| t.scale(C64::new(-1.0, 0.0))));
    let reduced = sphere_normal_form(&all, c);
    // Skip the relative drop so a genuine mismatch is never pruned away.
    reduced.iter().map(Term::max_abs).fold(0.0, f64::max)
}

pub fn trace_class_gate(m: usize, d: f64, s: C64) -> bool {
    s.re < -(m as f64) / d
}

/// Quadrature parameters of the keyhole contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourParams {
    pub line_panels: usize,
    pub circle_panels: usize,
    pub order: usize,
    /// Half-lines are integrated numerically up to |λ| = r_factor·max(q, 1),
    /// with an analytic tail beyond.
    pub r_factor: f64,
}

impl Default for ContourParams {
    fn default() -> Self {
        ContourParams {
            line_panels: 96,
            circle_panels: 32,
            order: 16,
            r_factor: 1e3,
        }
    }
}

/// binom(a, j) for complex a.
fn cbinom(a: C64, j: u32) -> C64 {
    (0..j).fold(ONE, |acc, i| acc * (a - i as f64) / (i as f64 + 1.0))
}

/// Keyhole integral for Re s < 0 with inner radius ρ0 < q.
fn keyhole(s: C64, r: u32, q: f64, rho0: f64, p: &ContourParams) -> C64 {
    let rr = r as i32;
    let big = p.r_factor * q.max(1.0);
    let line_f = |u: f64| {
        let t = u.exp();
        (s * u).exp() * t * C64::new(q + t, 0.0).powi(-rr)
    };
    let mut line = integrate(line_f, rho0.ln(), big.ln(), p.line_panels, p.order, ZERO);
    // ∫_R^∞ t^s (q+t)^{-r} dt = Σ_j binom(−r, j) q^j R^{s−r−j+1}/(r+j−s−1)
    let rc = C64::new(r as f64, 0.0);
    for j in 0..200u32 {
        let e = s - rc - j as f64 + 1.0;
        let term = cbinom(-rc, j) * q.powi(j as i32) * (e * big.ln()).exp() / (-e);
        line += term;
        if term.norm() < 1e-18 * line.norm().max(1e-300) {
            break;
        }
    }
    let line_part = -(s * PI).sin() / PI * line;
    let circle_f = |th: f64| {
        let z = C64::from_polar(rho0, th);
        let zs = (s * C64::new(rho0.ln(), th)).exp();
        zs * (C64::new(q, 0.0) - z).powi(-rr) * C64::new(0.0, 1.0) * z
    };
    let circle = integrate(circle_f, -PI, PI, p.circle_panels, p.order, ZERO) / C64::new(0.0, 2.0 * PI);
    line_part + circle
}

/// (1/2πi)∮ λ^s (q − λ)^{-r} dλ by quadrature. Re s ≥ 0 is reduced to
/// Re s < 0 through λ^{k'} = (q − (q − λ))^{k'}.
pub fn cauchy_numeric(s: C64, r: u32, q: f64, clearance: f64, p: &ContourParams) -> Result<C64> {
    if r == 0 {
        return Ok(ZERO);
    }
    let rho0 = q.min(clearance) / 2.0;
    if !(q > 1e-12) || !(rho0 > 0.0) {
        return Err(Error::ContourNearPole(q.max(0.0)));
    }
    if s.re < 0.0 {
        return Ok(keyhole(s, r, q, rho0, p));
    }
    let kp = s.re.floor() as u32 + 1;
    let sh = s - kp as f64;
    let mut acc = ZERO;
    for j in 0..r.min(kp + 1) {
        let b = cbinom(C64::new(kp as f64, 0.0), j);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += b * sign * q.powi((kp - j) as i32) * keyhole(sh, r - j, q, rho0, p);
    }
    Ok(acc)
}

/// Closed form (−1)^{r−1} binom(s, r−1) q^{s−r+1}.
pub fn cauchy_exact(s: C64, r: u32, q: f64) -> C64 {
    if r == 0 {
        return ZERO;
    }
    let sign = if (r - 1) % 2 == 0 { 1.0 } else { -1.0 };
    cbinom(s, r - 1) * sign * ((s - (r as f64 - 1.0)) * q.ln()).exp()
}

/// Component j of A^s at (x, ξ) by numeric contour integration of the
/// resolvent terms.
pub fn numeric_contour(
    fam: &ResolventSymbolFamily,
    s: C64,
    j: usize,
    x: &[f64],
    xi: &[f64],
    p: &ContourParams,
) -> Result<CMat> {
    let q = fam.principal * xi.iter().map(|v| v * v).sum::<f64>();
    let mut out = CMat::zeros(fam.k, fam.k);
    for t in &fam.components[j] {
        if t.res < 1 {
            continue;
        }
        let mono: f64 = t.xi.iter().zip(xi).map(|(&a, &v)| v.powi(a as i32)).product();
        let qr = (t.q.at(s) * q.ln()).exp();
        let kappa = cauchy_numeric(s, t.res as u32, q, q, p)?;
        out += t.coeff_at(s).eval(x) * (kappa * qr * mono);
    }
    Ok(out)
}

/// Power components at a fixed s with every Cauchy factor obtained by
/// numeric contour integration at q = 1 (the q-dependence is exact scaling).
pub fn cauchy_power_numeric(fam: &ResolventSymbolFamily, s: C64, p: &ContourParams) -> Result<Vec<Vec<Term>>> {
    let mut cache: Vec<Option<C64>> = Vec::new();
    let mut kappa = |r: u32| -> Result<C64> {
        let i = r as usize;
        if cache.len() <= i {
            cache.resize(i + 1, None);
        }
        if let Some(v) = cache[i] {
            return Ok(v);
        }
        let v = cauchy_numeric(s, r, 1.0, 1.0, p)?;
        cache[i] = Some(v);
        Ok(v)
    };
    fam.components
        .iter()
        .map(|comp| {
            let mut out = Vec::new();
            for t in comp.iter().filter(|t| t.res >= 1) {
                let r = t.res as u32;
                let mut nt = t.at_s(s).scale(kappa(r)?);
                nt.q = QExp {
                    s_mult: 0,
                    offset: t.q.at(s) + s + (1.0 - r as f64),
                };
                nt.res = 0;
                out.push(nt);
            }
            Ok(normalize(out))
        })
        .collect()
}
