//! Gauss rules and the rescaled sphere quadrature used for the residue
//! densities.
//!
//! Sphere weights carry the `(2π)^{-n}` normalization, so the total weight of
//! the rule on S^{n-1} ⊂ ℝⁿ is `vol(S^{n-1}) / (2π)^n`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Gauss–Gegenbauer nodes/weights on [−1, 1] for the weight (1 − t²)^a, via
/// Golub–Welsch. `a = 0` gives Gauss–Legendre.
pub fn gauss_symmetric_jacobi(npts: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(npts >= 1);
    let lam = a + 0.5;
    let mut j = DMatrix::<f64>::zeros(npts, npts);
    for k in 1..npts {
        let kf = k as f64;
        let beta = kf * (kf + 2.0 * lam - 1.0) / (4.0 * (kf + lam) * (kf + lam - 1.0));
        let b = beta.sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let mu0 = 2f64.powf(2.0 * a + 1.0) * gamma(a + 1.0).powi(2) / gamma(2.0 * a + 2.0);
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..npts)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

pub fn gauss_legendre(npts: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_symmetric_jacobi(npts, 0.0)
}

/// Composite Gauss–Legendre integration of `f` over [a, b].
pub fn integrate<T, F>(f: F, a: f64, b: f64, panels: usize, order: usize, zero: T) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn(f64) -> T,
{
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut acc = zero;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (xi, wi) in x.iter().zip(&w) {
            acc = acc + f(mid + 0.5 * h * xi) * (0.5 * h * wi);
        }
    }
    acc
}

/// Node/weight list on S^{n−1}.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub n: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// Surface area of S^{n−1}.
pub fn sphere_volume(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// Rule on S^{n−1} exact for polynomials of degree ≤ 2·level, weights
/// rescaled by (2π)^{−n}.
pub fn sphere_quadrature(n: usize, level: usize) -> Result<SphereRule> {
    if n == 0 {
        return Err(Error::Precondition(
            "sphere quadrature needs n ≥ 1 (S^{-1} is empty)".into(),
        ));
    }
    let (nodes, weights) = raw_sphere(n, level);
    let scale = (2.0 * PI).powi(-(n as i32));
    Ok(SphereRule {
        n,
        nodes,
        weights: weights.into_iter().map(|w| w * scale).collect(),
    })
}

// Unscaled product rule: total weight vol(S^{n−1}).
fn raw_sphere(n: usize, level: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    match n {
        1 => (vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]),
        2 => {
            let np = 2 * level + 1;
            let w = 2.0 * PI / np as f64;
            let nodes = (0..np)
                .map(|i| {
                    let th = 2.0 * PI * i as f64 / np as f64;
                    vec![th.cos(), th.sin()]
                })
                .collect();
            (nodes, vec![w; np])
        }
        _ => {
            let a = (n as f64 - 3.0) / 2.0;
            let (ts, tw) = gauss_symmetric_jacobi(level + 1, a);
            let (sub_nodes, sub_w) = raw_sphere(n - 1, level);
            let mut nodes = Vec::with_capacity(ts.len() * sub_nodes.len());
            let mut weights = Vec::with_capacity(nodes.capacity());
            for (t, wt) in ts.iter().zip(&tw) {
                let r = (1.0 - t * t).max(0.0).sqrt();
                for (om, wo) in sub_nodes.iter().zip(&sub_w) {
                    let mut p: Vec<f64> = om.iter().map(|v| r * v).collect();
                    p.push(*t);
                    nodes.push(p);
                    weights.push(wt * wo);
                }
            }
            (nodes, weights)
        }
    }
}

/// Exact ∫_{S^{n−1}} ξ^μ dS (unscaled). Zero unless every exponent is even.
pub fn sphere_monomial_moment(mu: &[u32]) -> f64 {
    if mu.iter().any(|&k| k % 2 == 1) {
        return 0.0;
    }
    let n = mu.len() as f64;
    let total: u32 = mu.iter().sum();
    let num: f64 = mu
        .iter()
        .map(|&k| gamma((k as f64 + 1.0) / 2.0))
        .product();
    2.0 * num / gamma((total as f64 + n) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        for deg in 0..12u32 {
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((approx - exact).abs() < 1e-13, "deg {deg}");
        }
    }

    #[test]
    fn s0_convention() {
        let r = sphere_quadrature(1, 3).unwrap();
        assert_eq!(r.nodes, vec![vec![1.0], vec![-1.0]]);
        for w in &r.weights {
            assert!((w - 1.0 / (2.0 * PI)).abs() < 1e-15);
        }
        assert!((r.total_weight() - 2.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn circle_total_and_second_moment() {
        let r = sphere_quadrature(2, 4).unwrap();
        assert!((r.total_weight() - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let m2 = r.integrate(|x| x[0] * x[0]);
        assert!((m2 - 1.0 / (4.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn zero_sphere_rejected() {
        assert!(sphere_quadrature(0, 2).is_err());
    }

    #[test]
    fn three_sphere_total_weight() {
        let r = sphere_quadrature(3, 5).unwrap();
        let expect = 4.0 * PI / (2.0 * PI).powi(3);
        assert!((r.total_weight() - expect).abs() < 1e-14);
    }
}
