//! Small dense and integer linear-algebra helpers shared by the geometry,
//! symbol and oracle modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| C64::new(v, 0.0))
}

/// max |RᵀR − I| entrywise.
pub fn orthogonality_defect(r: &RMat) -> f64 {
    if r.nrows() != r.ncols() {
        return f64::INFINITY;
    }
    let p = r.transpose() * r - RMat::identity(r.nrows(), r.ncols());
    p.amax()
}

/// max |UᴴU − I| entrywise.
pub fn unitarity_defect(u: &CMat) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    let p = u.adjoint() * u - CMat::identity(u.nrows(), u.ncols());
    p.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn cmax_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Splits ℝᵐ into ker(A) and its orthogonal complement using singular values
/// below `tol` as the kernel threshold. `A` has m columns and any number of rows.
/// Returns (kernel basis m×n, complement basis m×(m−n)).
pub fn kernel_split(a: &RMat, tol: f64) -> (RMat, RMat) {
    let m = a.ncols();
    if m == 0 {
        return (RMat::zeros(0, 0), RMat::zeros(0, 0));
    }
    // Pad to at least m rows so the SVD yields a full m×m right factor.
    let padded = if a.nrows() < m {
        let mut p = RMat::zeros(m, m);
        p.view_mut((0, 0), (a.nrows(), m)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut ker = Vec::new();
    let mut comp = Vec::new();
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        let row: RVec = vt.row(i).transpose();
        if sv < tol {
            ker.push(row);
        } else {
            comp.push(row);
        }
    }
    let f = columns(m, &ker);
    let n = columns(m, &comp);
    (canonical_basis(f), canonical_basis(n))
}

fn columns(m: usize, cols: &[RVec]) -> RMat {
    let mut out = RMat::zeros(m, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Re-orthonormalizes a basis by QR and fixes signs so the largest-magnitude
/// entry of each column is positive. Keeps outputs reproducible across SVD
/// implementations.
fn canonical_basis(b: RMat) -> RMat {
    if b.ncols() == 0 {
        return b;
    }
    // Prefer a basis aligned with coordinate axes when the subspace allows it:
    // project e_1..e_m and Gram-Schmidt the projections.
    let m = b.nrows();
    let proj = &b * b.transpose();
    let mut out: Vec<RVec> = Vec::new();
    for i in 0..m {
        let mut v: RVec = proj.column(i).into_owned();
        for u in &out {
            let d = u.dot(&v);
            v -= u * d;
        }
        let nv = v.norm();
        if nv > 1e-6 {
            v /= nv;
            // Repeat once for numerical orthogonality.
            for u in &out {
                let d = u.dot(&v);
                v -= u * d;
            }
            v /= v.norm();
            out.push(v);
        }
        if out.len() == b.ncols() {
            break;
        }
    }
    columns(m, &out)
}

/// Integer diagonalization U·A·V = D with U, V unimodular. D is diagonal
/// (not necessarily in Smith divisibility order, which the callers do not need).
#[derive(Debug, Clone)]
pub struct IntDiagonalization {
    pub u: Vec<Vec<i64>>,
    pub d: Vec<i64>,
    pub v: Vec<Vec<i64>>,
    pub rows: usize,
    pub cols: usize,
}

pub fn diagonalize_integer(a: &[Vec<i64>], cols: usize) -> IntDiagonalization {
    let rows = a.len();
    let mut a: Vec<Vec<i64>> = a.to_vec();
    let mut u: Vec<Vec<i64>> = (0..rows)
        .map(|i| (0..rows).map(|j| i64::from(i == j)).collect())
        .collect();
    let mut v: Vec<Vec<i64>> = (0..cols)
        .map(|i| (0..cols).map(|j| i64::from(i == j)).collect())
        .collect();
    let steps = rows.min(cols);
    for t in 0..steps {
        loop {
            // Pivot: smallest nonzero |entry| in the trailing block.
            let mut best: Option<(usize, usize)> = None;
            for (i, row) in a.iter().enumerate().skip(t) {
                for (j, &x) in row.iter().enumerate().skip(t) {
                    if x != 0 {
                        match best {
                            Some((bi, bj)) if a[bi][bj].abs() <= x.abs() => {}
                            _ => best = Some((i, j)),
                        }
                    }
                }
            }
            let Some((pi, pj)) = best else { break };
            a.swap(t, pi);
            u.swap(t, pi);
            for row in a.iter_mut() {
                row.swap(t, pj);
            }
            for row in v.iter_mut() {
                row.swap(t, pj);
            }
            let p = a[t][t];
            let mut clean = true;
            for i in (t + 1)..rows {
                let q = a[i][t].div_euclid(p);
                if q != 0 {
                    for j in 0..cols {
                        a[i][j] -= q * a[t][j];
                    }
                    for j in 0..rows {
                        u[i][j] -= q * u[t][j];
                    }
                }
                if a[i][t] != 0 {
                    clean = false;
                }
            }
            for j in (t + 1)..cols {
                let q = a[t][j].div_euclid(p);
                if q != 0 {
                    for row in a.iter_mut() {
                        let x = row[t];
                        row[j] -= q * x;
                    }
                    for row in v.iter_mut() {
                        let x = row[t];
                        row[j] -= q * x;
                    }
                }
                if a[t][j] != 0 {
                    clean = false;
                }
            }
            if clean {
                break;
            }
        }
    }
    let d = (0..steps).map(|i| a[i][i]).collect();
    IntDiagonalization { u, d, v, rows, cols }
}

/// Rounds a real matrix to integers, returning the max rounding defect.
pub fn round_integer(m: &RMat) -> (Vec<Vec<i64>>, f64) {
    let mut defect: f64 = 0.0;
    let out = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| {
                    let x = m[(i, j)];
                    let r = x.round();
                    defect = defect.max((x - r).abs());
                    r as i64
                })
                .collect()
        })
        .collect();
    (out, defect)
}

pub fn int_to_real(m: &[Vec<i64>], cols: usize) -> RMat {
    RMat::from_fn(m.len(), cols, |i, j| m[i][j] as f64)
}

/// Integer kernel basis of an integer matrix (columns of the returned matrix).
pub fn integer_kernel(a: &[Vec<i64>], cols: usize) -> RMat {
    let diag = diagonalize_integer(a, cols);
    let v = int_to_real(&diag.v, cols);
    let free: Vec<usize> = (0..cols)
        .filter(|&j| j >= diag.d.len() || diag.d[j] == 0)
        .collect();
    RMat::from_fn(cols, free.len(), |i, j| v[(i, free[j])])
}

/// Reduces `x` modulo 1 into [0, 1), snapping values within `tol` of 1 to 0.
pub fn frac(x: f64, tol: f64) -> f64 {
    let f = x - x.floor();
    if (1.0 - f) < tol {
        0.0
    } else {
        f
    }
}

/// Distance of `x` to the nearest integer.
pub fn dist_to_int(x: f64) -> f64 {
    (x - x.round()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
        let n = a.len();
        let k = b.len();
        let m = b[0].len();
        (0..n)
            .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
            .collect()
    }

    #[test]
    fn diagonalization_reproduces_product() {
        let a = vec![vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16]];
        let dg = diagonalize_integer(&a, 3);
        let uav = mul(&mul(&dg.u, &a), &dg.v);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { dg.d[i] } else { 0 };
                assert_eq!(uav[i][j], expect, "entry ({i},{j})");
            }
        }
        let det: i64 = dg.d.iter().product();
        assert_eq!(det.abs(), 144);
    }

    #[test]
    fn rectangular_diagonalization() {
        let a = vec![vec![-2, 0], vec![0, 0], vec![0, -2], vec![-1, -1]];
        let dg = diagonalize_integer(&a, 2);
        let uav = mul(&mul(&dg.u, &a), &dg.v);
        for (i, row) in uav.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(x, 0);
                }
            }
        }
    }

    #[test]
    fn kernel_of_reflection() {
        let r = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let a = &r - RMat::identity(2, 2);
        let (f, n) = kernel_split(&a, 1e-9);
        assert_eq!(f.ncols(), 1);
        assert_eq!(n.ncols(), 1);
        assert!((f[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((n[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integer_kernel_of_swap() {
        // (K − I) for the coordinate swap.
        let a = vec![vec![-1, 1], vec![1, -1]];
        let k = integer_kernel(&a, 2);
        assert_eq!(k.ncols(), 1);
        assert!((k[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((k[(0, 0)] - k[(1, 0)]).abs() < 1e-12);
    }
}
