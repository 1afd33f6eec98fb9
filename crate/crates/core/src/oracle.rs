//! Brute-force spectral checks: exact twisted Epstein continuations for
//! constant coefficients and Fourier-Galerkin eigensolves with twisted heat
//! trace fits for variable coefficients.

use crate::error::{Error, Result};
use crate::field::{Field, TrigPoly};
use crate::geometry::affine_fixed_set;
use crate::group::FiniteGroupAction;
use crate::lattice::Lattice;
use crate::linalg::{cmax_abs, integer_kernel, round_integer, CMat, RMat, RVec, C64, ONE, ZERO};
use crate::quadrature::integrate;
use crate::residues::ResidueReport;
use crate::symbol::ClassicalSymbol;
use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma as gamma_fn;
use std::f64::consts::PI;

pub const DEFAULT_BUDGET: usize = 20_000;
/// Heat-trace cutoff tolerance τ.
pub const CUTOFF_TOL: f64 = 1e-12;
pub const FIT_POINTS: usize = 40;
pub const FIT_T_MAX: f64 = 0.5;
pub const MAX_CONDITION: f64 = 1e13;

/// Flat torus model c·Δ + Σ B_j D_j + C + c0 truncated to Fourier modes
/// |n_i| ≤ cutoff in dual-lattice coordinates.
#[derive(Debug, Clone)]
pub struct LatticeModel {
    pub lattice: Lattice,
    pub group: FiniteGroupAction,
    pub principal: f64,
    pub c0: f64,
    pub potential: Option<TrigPoly>,
    pub first_order: Vec<TrigPoly>,
    pub cutoff: usize,
    pub budget: usize,
    pub fit: FitGrid,
}

/// Heat-fit sample times: `points` geometric nodes on [t_min, t_max].
/// `t_min = None` picks the smallest t the cutoff supports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitGrid {
    pub points: usize,
    pub t_min: Option<f64>,
    pub t_max: f64,
}

impl Default for FitGrid {
    fn default() -> Self {
        FitGrid {
            points: FIT_POINTS,
            t_min: None,
            t_max: FIT_T_MAX,
        }
    }
}

impl LatticeModel {
    pub fn new(group: FiniteGroupAction, principal: f64, c0: f64, cutoff: usize) -> Result<Self> {
        let lattice = group
            .lattice
            .clone()
            .ok_or_else(|| Error::Precondition("spectral oracle needs a torus model".into()))?;
        Ok(LatticeModel {
            lattice,
            group,
            principal,
            c0,
            potential: None,
            first_order: Vec::new(),
            cutoff,
            budget: DEFAULT_BUDGET,
            fit: FitGrid::default(),
        })
    }

    pub fn with_potential(mut self, v: TrigPoly) -> Self {
        self.potential = Some(v);
        self
    }

    pub fn with_fit_grid(mut self, fit: FitGrid) -> Self {
        self.fit = fit;
        self
    }

    pub fn with_first_order(mut self, b: Vec<TrigPoly>) -> Self {
        self.first_order = b;
        self
    }

    pub fn m(&self) -> usize {
        self.lattice.dim()
    }

    pub fn k(&self) -> usize {
        self.group.k
    }

    pub fn is_constant_scalar(&self) -> bool {
        let scalar_const = |p: &TrigPoly| {
            p.is_constant() && {
                let c = p.mean();
                let d = c[(0, 0)];
                cmax_abs(&(c - CMat::identity(self.k(), self.k()) * d)) < 1e-14 && d.im.abs() < 1e-14
            }
        };
        self.first_order.iter().all(|b| b.max_abs() == 0.0) && self.potential.as_ref().is_none_or(scalar_const)
    }

    /// Mass including a constant scalar potential.
    pub fn total_mass(&self) -> f64 {
        let k = self.k() as f64;
        self.c0 + self.potential.as_ref().map_or(0.0, |p| p.mean().trace().re / k)
    }

    /// The same operator as a classical symbol.
    pub fn symbol(&self) -> Result<ClassicalSymbol> {
        let first: Vec<Field> = self.first_order.iter().cloned().map(Field::Trig).collect();
        ClassicalSymbol::from_laplace_type(
            self.m(),
            self.k(),
            self.principal,
            self.c0,
            &first,
            self.potential.clone().map(Field::Trig),
        )
    }

    /// Integer matrix of γ's rotation on dual-lattice coordinates.
    fn frequency_action(&self, gamma: usize) -> Result<Vec<Vec<i64>>> {
        let l = &self.lattice;
        let r = &self.group.elements[gamma].rot;
        let (mf, defect) = round_integer(&(l.basis.transpose() * r * l.inv.transpose()));
        if defect > 1e-9 {
            return Err(Error::LatticeNotPreserved(gamma, defect));
        }
        Ok(mf)
    }
}

fn apply_int(a: &[Vec<i64>], n: &[i64]) -> Vec<i64> {
    a.iter().map(|row| row.iter().zip(n).map(|(x, y)| x * y).sum()).collect()
}

/// Integer points l with lᵀ·G·l ≤ bound (G positive definite).
fn ellipsoid_points(g: &RMat, bound: f64, shift: &[f64]) -> Vec<Vec<i64>> {
    let n = g.nrows();
    let ginv = g.clone().try_inverse().expect("positive definite Gram");
    let radius: Vec<f64> = (0..n).map(|i| (bound * ginv[(i, i)]).sqrt()).collect();
    let mut out = vec![vec![]];
    for i in 0..n {
        let lo = (-radius[i] - shift[i]).floor() as i64;
        let hi = (radius[i] - shift[i]).ceil() as i64;
        out = out
            .into_iter()
            .flat_map(|p| {
                (lo..=hi).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out.retain(|l| {
        let v = RVec::from_iterator(n, l.iter().zip(shift).map(|(&a, &b)| a as f64 + b));
        (v.transpose() * g * &v)[(0, 0)] <= bound
    });
    out
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoleEntry {
    pub z: f64,
    pub residue: f64,
}

/// ζ_γ(z) = tr(T)·Σ_{ν∈Λ_γ} e^{−i⟨ν,τ⟩}(c|ν|² + c0)^{−z} with its poles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwistedZetaContinuation {
    pub gamma: usize,
    /// Integer basis of the rot-fixed frequency sublattice (columns).
    pub basis: RMat,
    /// Scaled Gram matrix c·⟨ν_i, ν_j⟩ of the basis frequencies.
    pub gram: RMat,
    /// Phase e^{−2πi⟨l,θ⟩} on sublattice coordinates l.
    pub theta: Vec<f64>,
    pub trivial_phase: bool,
    pub trace_t: C64,
    pub c0: f64,
    pub poles: Vec<PoleEntry>,
}

/// Exact continuation for a constant scalar operator.
pub fn constant_case_zeta(model: &LatticeModel, gamma: usize, max_poles: usize) -> Result<TwistedZetaContinuation> {
    if !model.is_constant_scalar() {
        return Err(Error::Precondition(
            "exact continuation needs a constant scalar operator".into(),
        ));
    }
    let c0 = model.total_mass();
    if c0 <= 0.0 {
        return Err(Error::Precondition("exact continuation needs a positive mass".into()));
    }
    let m = model.m();
    let mf = model.frequency_action(gamma)?;
    let shifted: Vec<Vec<i64>> = mf
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r[i] -= 1;
            r
        })
        .collect();
    let basis = integer_kernel(&shifted, m);
    let n = basis.ncols();
    let freqs: Vec<RVec> = (0..n)
        .map(|j| {
            let nv: Vec<i64> = (0..m).map(|i| basis[(i, j)].round() as i64).collect();
            model.lattice.frequency(&nv)
        })
        .collect();
    let gram = RMat::from_fn(n, n, |i, j| model.principal * freqs[i].dot(&freqs[j]));
    let tau = &model.group.elements[gamma].trans;
    let theta: Vec<f64> = freqs.iter().map(|f| f.dot(tau) / (2.0 * PI)).collect();
    let trivial_phase = theta.iter().all(|t| (t - t.round()).abs() < 1e-12);
    let theta: Vec<f64> = theta
        .into_iter()
        .map(|t| if (t - t.round()).abs() < 1e-12 { 0.0 } else { t - t.floor() })
        .collect();
    let trace_t = model.group.elements[gamma].fiber.trace();
    let mut poles = Vec::new();
    if n > 0 && trivial_phase {
        let covol = gram.determinant().sqrt();
        let half = n as f64 / 2.0;
        for i in 0..max_poles {
            let z = half - i as f64;
            if z <= 0.0 && z.fract() == 0.0 {
                continue;
            }
            let fact: f64 = (1..=i).map(|v| v as f64).product();
            let residue = trace_t.re * PI.powf(half) * (-c0).powi(i as i32) / (fact * gamma_fn(z) * covol);
            poles.push(PoleEntry { z, residue });
        }
    }
    Ok(TwistedZetaContinuation {
        gamma,
        basis,
        gram,
        theta,
        trivial_phase,
        trace_t,
        c0,
        poles,
    })
}

impl TwistedZetaContinuation {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    fn phase(&self, l: &[i64]) -> C64 {
        let a: f64 = l.iter().zip(&self.theta).map(|(&x, t)| x as f64 * t).sum();
        C64::from_polar(1.0, -2.0 * PI * a)
    }

    /// Residue of ζ_γ in z at `z`, zero off the pole ledger.
    pub fn residue_z(&self, z: f64) -> f64 {
        self.poles
            .iter()
            .find(|p| (p.z - z).abs() < 1e-12)
            .map_or(0.0, |p| p.residue)
    }

    /// Residue of s ↦ Tr(A^s T) at s_k = (k − m)/2.
    pub fn residue_s(&self, k: usize, m: usize) -> f64 {
        -self.residue_z((m as f64 - k as f64) / 2.0)
    }

    /// Raw Dirichlet series over Q(l) ≤ qmax (converges for Re z > n/2).
    pub fn direct_sum(&self, z: f64, qmax: f64) -> C64 {
        let n = self.rank();
        if n == 0 {
            return self.trace_t * self.c0.powf(-z);
        }
        let pts = ellipsoid_points(&self.gram, qmax, &vec![0.0; n]);
        let total: C64 = pts
            .par_iter()
            .map(|l| {
                let v = RVec::from_iterator(n, l.iter().map(|&x| x as f64));
                let q = (v.transpose() * &self.gram * &v)[(0, 0)];
                self.phase(l) * (q + self.c0).powf(-z)
            })
            .sum();
        total * self.trace_t
    }

    /// Continued ζ_γ(z) by the theta split at t = 1. Valid away from the
    /// poles and from z ∈ {0, −1, −2, …}.
    pub fn eval(&self, z: f64) -> Result<C64> {
        let n = self.rank();
        if n == 0 {
            return Ok(self.trace_t * self.c0.powf(-z));
        }
        if self.poles.iter().any(|p| (p.z - z).abs() < 1e-9) {
            return Err(Error::Precondition(format!("ζ has a pole at z = {z}")));
        }
        if z <= 0.0 && (z - z.round()).abs() < 1e-12 {
            return Err(Error::Precondition("evaluator excludes z ∈ {0, −1, −2, …}".into()));
        }
        let cut = 42.0;
        let zeros = vec![0.0; n];
        // ∫_1^∞ t^{z−1} Θ(t) dt
        let upper_terms: Vec<(C64, f64)> = ellipsoid_points(&self.gram, cut, &zeros)
            .into_iter()
            .map(|l| {
                let v = RVec::from_iterator(n, l.iter().map(|&x| x as f64));
                (self.phase(&l), (v.transpose() * &self.gram * &v)[(0, 0)] + self.c0)
            })
            .collect();
        let t_end = cut / self.c0 + 1.0;
        let upper = integrate(
            |u: f64| {
                let t = u.exp();
                let th: C64 = upper_terms.iter().map(|(p, e)| p * (-t * e).exp()).sum();
                th * (z * u).exp()
            },
            0.0,
            t_end.ln(),
            64,
            16,
            ZERO,
        );
        // ∫_0^1 t^{z−1−n/2} e^{−tc0} Ψ(t) dt over the dual sum without its zero term
        let ginv = self.gram.clone().try_inverse().expect("positive definite Gram");
        let wcut = cut / (PI * PI);
        let dual: Vec<f64> = ellipsoid_points(&ginv, wcut, &self.theta)
            .into_iter()
            .map(|k| {
                let v = RVec::from_iterator(n, k.iter().zip(&self.theta).map(|(&a, &b)| a as f64 + b));
                (v.transpose() * &ginv * &v)[(0, 0)]
            })
            .filter(|&w| w > 1e-14)
            .collect();
        let half = n as f64 / 2.0;
        let lower = match dual.iter().cloned().reduce(f64::min) {
            None => 0.0,
            Some(wmin) => {
                let t_lo = (PI * PI * wmin / (cut + 3.0)).min(0.5);
                integrate(
                    |u: f64| {
                        let t = u.exp();
                        let psi: f64 = dual.iter().map(|w| (-PI * PI * w / t).exp()).sum();
                        psi * (-t * self.c0).exp() * ((z - half) * u).exp()
                    },
                    t_lo.ln(),
                    0.0,
                    64,
                    16,
                    0.0,
                )
            }
        };
        // zero dual term: ∫_0^1 t^{z−1−n/2} e^{−tc0} dt = Σ_i (−c0)^i/(i!(z − n/2 + i))
        let mut polar = 0.0;
        if self.trivial_phase {
            let mut coef = 1.0;
            for i in 0..400 {
                if i > 0 {
                    coef *= -self.c0 / i as f64;
                }
                let term = coef / (z - half + i as f64);
                polar += term;
                if term.abs() < 1e-18 && i > 5 {
                    break;
                }
            }
        }
        let covol = self.gram.determinant().sqrt();
        let total = upper + C64::new(PI.powf(half) / covol * (lower + polar), 0.0);
        Ok(self.trace_t * total / gamma_fn(z))
    }
}

/// Eigendata of the truncated operator with twist diagonals ⟨v, U_γ v⟩.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns; `None` when the matrix was already diagonal.
    pub vectors: Option<CMat>,
    pub modes: Vec<Vec<i64>>,
    pub k: usize,
    pub m: usize,
    pub principal: f64,
    /// Smallest frequency norm just outside the box.
    pub nu_edge: f64,
    /// twist[γ][i] = ⟨v_i, U_γ v_i⟩
    pub twist: Vec<Vec<C64>>,
    /// Shift κ with e^{κt} removing the mean zeroth-order part in fits.
    pub kappa: f64,
    pub fit: FitGrid,
}

struct ModeIndex {
    cutoff: i64,
    m: usize,
}

impl ModeIndex {
    fn index(&self, n: &[i64]) -> Option<usize> {
        let w = 2 * self.cutoff + 1;
        let mut idx = 0i64;
        for i in (0..self.m).rev() {
            if n[i].abs() > self.cutoff {
                return None;
            }
            idx = idx * w + n[i] + self.cutoff;
        }
        Some(idx as usize)
    }

    fn all(&self) -> Vec<Vec<i64>> {
        let w = (2 * self.cutoff + 1) as usize;
        (0..w.pow(self.m as u32))
            .map(|mut i| {
                (0..self.m)
                    .map(|_| {
                        let v = (i % w) as i64 - self.cutoff;
                        i /= w;
                        v
                    })
                    .collect()
            })
            .collect()
    }
}

fn int_modes(l: &Lattice, p: &TrigPoly) -> Result<Vec<(Vec<i64>, CMat)>> {
    p.modes()
        .map(|(nu, c)| {
            let (idx, defect) = l.frequency_index(&RVec::from_column_slice(nu));
            if defect > 1e-9 {
                return Err(Error::Precondition(format!(
                    "coefficient frequency {nu:?} is not periodic on the lattice"
                )));
            }
            Ok((idx, c.clone()))
        })
        .collect()
}

/// Twist map of γ: mode i ↦ (image mode, phase); None when the box is not invariant.
fn twist_map(model: &LatticeModel, gamma: usize, index: &ModeIndex, modes: &[Vec<i64>]) -> Result<Vec<(usize, C64)>> {
    let mf = model.frequency_action(gamma)?;
    let tau = &model.group.elements[gamma].trans;
    modes
        .iter()
        .map(|n| {
            let rn = apply_int(&mf, n);
            let j = index.index(&rn).ok_or_else(|| {
                Error::Precondition(format!("cutoff box is not invariant under element {gamma}"))
            })?;
            let nu = model.lattice.frequency(&rn);
            Ok((j, C64::from_polar(1.0, -nu.dot(tau))))
        })
        .collect()
}

/// U_γ as a dense matrix (small models and tests).
pub fn twist_matrix(model: &LatticeModel, spectrum: &Spectrum, gamma: usize) -> Result<CMat> {
    let index = ModeIndex {
        cutoff: model.cutoff as i64,
        m: model.m(),
    };
    let map = twist_map(model, gamma, &index, &spectrum.modes)?;
    let k = model.k();
    let t = &model.group.elements[gamma].fiber;
    let dim = spectrum.modes.len() * k;
    let mut u = CMat::zeros(dim, dim);
    for (i, &(j, ph)) in map.iter().enumerate() {
        for a in 0..k {
            for b in 0..k {
                u[(j * k + a, i * k + b)] = t[(a, b)] * ph;
            }
        }
    }
    Ok(u)
}

/// Assembles and diagonalizes the Fourier-Galerkin matrix.
pub fn numeric_spectrum(model: &LatticeModel) -> Result<Spectrum> {
    let m = model.m();
    let k = model.k();
    let index = ModeIndex {
        cutoff: model.cutoff as i64,
        m,
    };
    let modes = index.all();
    let dim = modes.len() * k;
    if dim > model.budget {
        return Err(Error::BudgetExceeded {
            dim,
            budget: model.budget,
        });
    }
    let l = &model.lattice;
    let mut a = CMat::zeros(dim, dim);
    let pot = match &model.potential {
        Some(p) => int_modes(l, p)?,
        None => Vec::new(),
    };
    let first: Vec<Vec<(Vec<i64>, CMat)>> = model
        .first_order
        .iter()
        .map(|b| int_modes(l, b))
        .collect::<Result<_>>()?;
    for (col, n) in modes.iter().enumerate() {
        let nu = l.frequency(n);
        let diag = model.principal * nu.norm_squared() + model.c0;
        for f in 0..k {
            a[(col * k + f, col * k + f)] += C64::new(diag, 0.0);
        }
        let mut add_block = |mu: &[i64], block: CMat| {
            let target: Vec<i64> = n.iter().zip(mu).map(|(x, y)| x + y).collect();
            if let Some(row) = index.index(&target) {
                let mut view = a.view_mut((row * k, col * k), (k, k));
                view += block;
            }
        };
        for (mu, c) in &pot {
            add_block(mu, c.clone());
        }
        for (j, bj) in first.iter().enumerate() {
            for (mu, b) in bj {
                add_block(mu, b * C64::new(nu[j], 0.0));
            }
        }
    }
    let herm = cmax_abs(&(&a - a.adjoint()));
    if herm > 1e-10 * cmax_abs(&a).max(1.0) {
        return Err(Error::NotHermitian(herm));
    }
    let off_diagonal = (0..dim).any(|i| (0..dim).any(|j| i != j && a[(i, j)] != ZERO));
    let real = a.iter().all(|z| z.im == 0.0);
    let (eigenvalues, vectors) = if off_diagonal && real {
        // real symmetric solver is several times faster
        let eig = SymmetricEigen::new(a.map(|z| z.re));
        (eig.eigenvalues.iter().cloned().collect::<Vec<f64>>(), Some(eig.eigenvectors.map(|x| C64::new(x, 0.0))))
    } else if off_diagonal {
        let eig = SymmetricEigen::new(a);
        (eig.eigenvalues.iter().cloned().collect::<Vec<f64>>(), Some(eig.eigenvectors))
    } else {
        ((0..dim).map(|i| a[(i, i)].re).collect(), None)
    };
    let min_ev = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_ev <= 0.0 {
        return Err(Error::Precondition(format!(
            "truncated spectrum is not positive (λ_min = {min_ev:.3e})"
        )));
    }
    let twist = (0..model.group.order())
        .map(|gamma| {
            let map = twist_map(model, gamma, &index, &modes)?;
            let t = &model.group.elements[gamma].fiber;
            Ok(match &vectors {
                None => (0..dim)
                    .map(|i| {
                        let (mode, f) = (i / k, i % k);
                        let (j, ph) = map[mode];
                        if j == mode {
                            t[(f, f)] * ph
                        } else {
                            ZERO
                        }
                    })
                    .collect(),
                Some(v) => (0..dim)
                    .into_par_iter()
                    .map(|col| {
                        let mut acc = ZERO;
                        for (mode, &(j, ph)) in map.iter().enumerate() {
                            for a in 0..k {
                                let mut uv = ZERO;
                                for b in 0..k {
                                    uv += t[(a, b)] * v[(mode * k + b, col)];
                                }
                                acc += v[(j * k + a, col)].conj() * uv * ph;
                            }
                        }
                        acc
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<Vec<C64>>>>()?;
    let nu_edge = (0..m)
        .map(|i| 2.0 * PI / l.basis.column(i).norm())
        .fold(f64::INFINITY, f64::min)
        * (model.cutoff as f64 + 1.0);
    Ok(Spectrum {
        eigenvalues,
        vectors,
        modes,
        k,
        m,
        principal: model.principal,
        nu_edge,
        twist,
        kappa: model.total_mass(),
        fit: model.fit,
    })
}

impl Spectrum {
    pub fn cutoff_bound(&self, t: f64) -> f64 {
        (-t * self.principal * self.nu_edge * self.nu_edge).exp()
    }

    /// Smallest t whose cutoff bound meets CUTOFF_TOL.
    pub fn t_min(&self) -> f64 {
        (1.0 / CUTOFF_TOL).ln() / (self.principal * self.nu_edge * self.nu_edge)
    }

    /// Σ_γ w_γ·Tr(U_γ e^{−tA}).
    pub fn weighted_heat_trace(&self, weights: &[C64], t: f64) -> Result<C64> {
        let bound = self.cutoff_bound(t);
        if bound > CUTOFF_TOL * 1.0001 {
            return Err(Error::CutoffTooSmall { t, bound });
        }
        let mut total = ZERO;
        for (gamma, w) in weights.iter().enumerate() {
            if *w == ZERO {
                continue;
            }
            let s: C64 = self
                .eigenvalues
                .iter()
                .zip(&self.twist[gamma])
                .map(|(l, d)| d * (-t * l).exp())
                .sum();
            total += w * s;
        }
        Ok(total)
    }

    pub fn heat_trace(&self, gamma: usize, t: f64) -> Result<C64> {
        let mut w = vec![ZERO; self.twist.len()];
        w[gamma] = ONE;
        self.weighted_heat_trace(&w, t)
    }

    /// Geometric fit grid.
    pub fn fit_times(&self) -> Vec<f64> {
        let p = self.fit.points.max(2);
        let (a, b) = (self.fit.t_min.unwrap_or_else(|| self.t_min()).ln(), self.fit.t_max.ln());
        (0..p).map(|i| (a + (b - a) * i as f64 / (p - 1) as f64).exp()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatFit {
    /// Basis exponent offset n: c_j multiplies t^{(j−n)/2}.
    pub n: usize,
    pub coeffs: Vec<C64>,
    pub condition: f64,
}

impl HeatFit {
    /// Residue of s ↦ Tr(A^s T) at s_k = (k−m)/2, or `None` where the
    /// Γ-factor has a pole and the coefficient is a zeta value instead.
    pub fn residue_s(&self, k: usize, m: usize) -> Option<C64> {
        let j = k as i64 - m as i64 + self.n as i64;
        if j < 0 {
            return Some(ZERO);
        }
        let z = (self.n as f64 - j as f64) / 2.0;
        if z <= 0.0 && z.fract() == 0.0 {
            return None;
        }
        let c = self.coeffs.get(j as usize).copied().unwrap_or(ZERO);
        Some(-c / gamma_fn(z))
    }

    /// Coefficients of negative powers of t.
    pub fn singular(&self) -> &[C64] {
        &self.coeffs[..self.n.min(self.coeffs.len())]
    }
}

/// Least-squares fit of Σ_γ w_γ Tr(U_γ e^{−tA}) by Σ_{j≤J} c_j t^{(j−n)/2}
/// after factoring out e^{−κt}.
pub fn heat_fit(spectrum: &Spectrum, weights: &[C64], n: usize, j_max: usize) -> Result<HeatFit> {
    let times = spectrum.fit_times();
    let values = times
        .iter()
        .map(|&t| spectrum.weighted_heat_trace(weights, t))
        .collect::<Result<Vec<_>>>()?;
    let kappa = spectrum.kappa;
    let cols = j_max + 1;
    let rows = times.len();
    // rows scaled by t^{n/2}: basis t^{j/2}
    let mut design = RMat::from_fn(rows, cols, |r, j| times[r].powf(j as f64 / 2.0));
    let norms: Vec<f64> = (0..cols).map(|j| design.column(j).norm()).collect();
    for (j, nj) in norms.iter().enumerate() {
        design.column_mut(j).scale_mut(1.0 / nj);
    }
    let rhs_re = RVec::from_iterator(rows, values.iter().zip(&times).map(|(v, &t)| (v * (kappa * t).exp()).re * t.powf(n as f64 / 2.0)));
    let rhs_im = RVec::from_iterator(rows, values.iter().zip(&times).map(|(v, &t)| (v * (kappa * t).exp()).im * t.powf(n as f64 / 2.0)));
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !(condition < MAX_CONDITION) {
        return Err(Error::IllConditioned(condition));
    }
    let sol_re = svd.solve(&rhs_re, 0.0).map_err(|e| Error::Precondition(e.into()))?;
    let sol_im = svd.solve(&rhs_im, 0.0).map_err(|e| Error::Precondition(e.into()))?;
    let shifted: Vec<C64> = (0..cols)
        .map(|j| C64::new(sol_re[j] / norms[j], sol_im[j] / norms[j]))
        .collect();
    // undo the e^{κt} factor: c_j = Σ_i f_{j−2i} (−κ)^i / i!
    let coeffs = (0..cols)
        .map(|j| {
            let mut acc = ZERO;
            let mut w = 1.0;
            for i in 0..=j / 2 {
                if i > 0 {
                    w *= -kappa / i as f64;
                }
                acc += shifted[j - 2 * i] * w;
            }
            acc
        })
        .collect();
    Ok(HeatFit { n, coeffs, condition })
}

/// Fixed-set dimension of γ (None when fixed-point free).
pub fn fixed_dimension(g: &FiniteGroupAction, gamma: usize) -> Result<Option<usize>> {
    Ok(affine_fixed_set(g, gamma)?.first().map(|s| s.n))
}

/// Residues of Tr(A^s U_γ) at s_k for k ≤ k_max by heat fit.
pub fn heat_fit_residues(spectrum: &Spectrum, gamma: usize, n: usize, k_max: usize) -> Result<(HeatFit, Vec<Option<C64>>)> {
    let mut w = vec![ZERO; spectrum.twist.len()];
    w[gamma] = ONE;
    let fit = heat_fit(spectrum, &w, n, k_max + 2)?;
    let res = (0..=k_max).map(|k| fit.residue_s(k, spectrum.m)).collect();
    Ok((fit, res))
}

/// Isotypic residues from the projected numeric spectrum Tr(P_i e^{−tA}).
pub fn projected_residues(spectrum: &Spectrum, g: &FiniteGroupAction, irrep: usize, k_max: usize) -> Result<Vec<Option<C64>>> {
    let w = g.isotypic_weights(irrep)?;
    let fit = heat_fit(spectrum, &w, spectrum.m, k_max + 2)?;
    Ok((0..=k_max).map(|k| fit.residue_s(k, spectrum.m)).collect())
}

/// lim_{t→0} Tr(U_γ e^{−tA}) for an element with isolated fixed points.
pub fn lefschetz_limit(spectrum: &Spectrum, gamma: usize) -> Result<C64> {
    let mut w = vec![ZERO; spectrum.twist.len()];
    w[gamma] = ONE;
    Ok(heat_fit(spectrum, &w, 0, 6)?.coeffs[0])
}

/// Σ over fixed points of d_weight·tr(fiber), the expected Lefschetz limit.
pub fn lefschetz_number(g: &FiniteGroupAction, gamma: usize) -> Result<C64> {
    let strata = affine_fixed_set(g, gamma)?;
    if strata.iter().any(|s| s.n > 0) {
        return Err(Error::Precondition("element has positive-dimensional fixed set".into()));
    }
    let tr = g.elements[gamma].fiber.trace();
    Ok(strata.iter().map(|s| tr * s.d_weight).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSource {
    ExactContinuation,
    HeatFit,
    ProjectedSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Target {
    Gamma(usize),
    Isotypic(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResidue {
    pub target: Target,
    pub k: usize,
    /// `None` where the oracle cannot produce a residue (Γ-factor pole).
    pub value: Option<C64>,
    pub source: OracleSource,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    pub exact: f64,
    pub heat_fit: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            exact: 1e-6,
            heat_fit: 2e-2,
        }
    }
}

impl Tolerances {
    pub fn for_source(&self, s: OracleSource) -> f64 {
        match s {
            OracleSource::ExactContinuation => self.exact,
            OracleSource::HeatFit | OracleSource::ProjectedSpectrum => self.heat_fit,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub target: Target,
    pub k: usize,
    pub source: OracleSource,
    pub engine: C64,
    pub oracle: Option<C64>,
    pub diff: Option<f64>,
    pub tolerance: f64,
    /// `None` when the oracle value is unavailable.
    pub pass: Option<bool>,
}

/// Oracle residues for every γ (exact continuation when the operator is
/// constant, heat fit otherwise) and every irrep.
pub fn oracle_residues(model: &LatticeModel, k_max: usize) -> Result<Vec<OracleResidue>> {
    let g = &model.group;
    let m = model.m();
    let mut out = Vec::new();
    let mut per_gamma: Vec<Vec<Option<C64>>> = Vec::with_capacity(g.order());
    let source;
    if model.is_constant_scalar() {
        source = OracleSource::ExactContinuation;
        for gamma in 0..g.order() {
            let z = constant_case_zeta(model, gamma, k_max + 2)?;
            per_gamma.push((0..=k_max).map(|k| Some(C64::new(z.residue_s(k, m), 0.0))).collect());
        }
    } else {
        source = OracleSource::HeatFit;
        let spectrum = numeric_spectrum(model)?;
        for gamma in 0..g.order() {
            let n = fixed_dimension(g, gamma)?.unwrap_or(m);
            per_gamma.push(heat_fit_residues(&spectrum, gamma, n, k_max)?.1);
        }
    }
    for (gamma, vals) in per_gamma.iter().enumerate() {
        for (k, v) in vals.iter().enumerate() {
            out.push(OracleResidue {
                target: Target::Gamma(gamma),
                k,
                value: *v,
                source,
            });
        }
    }
    for i in 0..g.irrep_count() {
        let w = g.isotypic_weights(i)?;
        for k in 0..=k_max {
            let value = per_gamma
                .iter()
                .zip(&w)
                .try_fold(ZERO, |acc, (vals, wg)| vals[k].map(|v| acc + wg * v));
            out.push(OracleResidue {
                target: Target::Isotypic(i),
                k,
                value,
                source,
            });
        }
    }
    Ok(out)
}

pub fn compare_report(report: &ResidueReport, oracle: &[OracleResidue], tol: &Tolerances) -> Vec<ComparisonRow> {
    oracle
        .iter()
        .filter_map(|o| {
            let row = report.per_k.get(o.k)?;
            let engine = match o.target {
                Target::Gamma(g) => *row.residue_gamma.get(g)?,
                Target::Isotypic(i) => *row.residue_isotypic.get(i)?,
            };
            let tolerance = tol.for_source(o.source);
            let diff = o.value.map(|v| (v - engine).norm());
            Some(ComparisonRow {
                target: o.target,
                k: o.k,
                source: o.source,
                engine,
                oracle: o.value,
                diff,
                tolerance,
                pass: diff.map(|d| d <= tolerance),
            })
        })
        .collect()
}
