//! Period lattices of flat tori ℝᵐ/Λ.

use crate::linalg::{dist_to_int, frac, round_integer, RMat, RVec};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Λ = basis·ℤᵐ. Rectangular tori use `basis = diag(periods)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub basis: RMat,
    pub(crate) inv: RMat,
}

impl Lattice {
    pub fn from_periods(periods: &[f64]) -> Self {
        Self::from_basis(RMat::from_diagonal(&RVec::from_column_slice(periods)))
    }

    pub fn from_basis(basis: RMat) -> Self {
        let inv = basis
            .clone()
            .try_inverse()
            .expect("lattice basis must be invertible");
        Lattice { basis, inv }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn covolume(&self) -> f64 {
        self.basis.determinant().abs()
    }

    /// Lattice coordinates y with x = basis·y.
    pub fn coords(&self, x: &RVec) -> RVec {
        &self.inv * x
    }

    /// Representative of x mod Λ with lattice coordinates in [0, 1).
    pub fn reduce(&self, x: &RVec) -> RVec {
        let y = self.coords(x).map(|v| frac(v, 1e-12));
        &self.basis * y
    }

    /// Largest distance to an integer of the lattice coordinates of x − y.
    pub fn congruence_defect(&self, x: &RVec, y: &RVec) -> f64 {
        self.coords(&(x - y))
            .iter()
            .map(|&v| dist_to_int(v))
            .fold(0.0, f64::max)
    }

    pub fn congruent(&self, x: &RVec, y: &RVec, tol: f64) -> bool {
        self.congruence_defect(x, y) < tol
    }

    /// Dual-lattice frequency ν = 2π·B⁻ᵀ·n, so e^{i⟨ν,x⟩} is Λ-periodic.
    pub fn frequency(&self, n: &[i64]) -> RVec {
        let nv = RVec::from_iterator(n.len(), n.iter().map(|&v| v as f64));
        self.inv.transpose() * nv * (2.0 * PI)
    }

    /// Inverse of [`Lattice::frequency`] (rounded).
    pub fn frequency_index(&self, nu: &RVec) -> (Vec<i64>, f64) {
        let y = self.basis.transpose() * nu / (2.0 * PI);
        let mut defect: f64 = 0.0;
        let idx = y
            .iter()
            .map(|&v| {
                defect = defect.max(dist_to_int(v));
                v.round() as i64
            })
            .collect();
        (idx, defect)
    }

    /// B⁻¹·R·B rounded to integers, with the rounding defect. R preserves Λ
    /// iff the defect is ~0 and the integer matrix is unimodular.
    pub fn integer_form(&self, rot: &RMat) -> (Vec<Vec<i64>>, f64) {
        round_integer(&(&self.inv * rot * &self.basis))
    }

    /// Maximal violation of "rot·Λ = Λ".
    pub fn preservation_defect(&self, rot: &RMat) -> f64 {
        let (int, defect) = self.integer_form(rot);
        let m = int.len();
        let det = crate::linalg::int_to_real(&int, m).determinant();
        defect.max((det.abs() - 1.0).abs())
    }

    pub fn transformed(&self, frame: &RMat) -> Lattice {
        Lattice::from_basis(frame * &self.basis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_lattice_preservation() {
        let l = Lattice::from_periods(&[2.0 * PI, 2.0 * PI]);
        let quarter = RMat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(l.preservation_defect(&quarter) < 1e-14);
        let c = (2.0 * PI / 3.0).cos();
        let s = (2.0 * PI / 3.0).sin();
        let third = RMat::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!(l.preservation_defect(&third) > 0.1);
    }

    #[test]
    fn frequency_round_trip() {
        let l = Lattice::from_periods(&[2.0 * PI, PI]);
        let nu = l.frequency(&[3, -2]);
        assert!((nu[0] - 3.0).abs() < 1e-14);
        assert!((nu[1] + 4.0).abs() < 1e-14);
        let (idx, d) = l.frequency_index(&nu);
        assert_eq!(idx, vec![3, -2]);
        assert!(d < 1e-12);
    }
}
