//! Jacobi-preconditioned Krylov methods.

use super::sparse::SparseMatrix;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn jacobi(m: &SparseMatrix) -> Vec<f64> {
    m.diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// pᵀAp ≤ 0 was encountered.
    pub breakdown: bool,
    /// Extreme Ritz values of the preconditioned operator from the Lanczos tridiagonal.
    pub ritz: Option<(f64, f64)>,
    /// Search directions kept for later Rayleigh–Ritz estimates.
    pub directions: Vec<Vec<f64>>,
}

/// Preconditioned CG; relative residual ‖b − Ax‖/‖b‖ ≤ `tol` stops the iteration.
pub fn conjugate_gradient(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    keep_directions: usize,
) -> CgResult {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return CgResult {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
            breakdown: false,
            ritz: None,
            directions: Vec::new(),
        };
    }
    let dinv = jacobi(a);
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut directions = Vec::new();
    let mut residual = 1.0;
    let mut breakdown = false;
    let mut extra_rayleigh: Option<f64> = None;
    let mut it = 0;
    while it < max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if directions.len() < keep_directions {
            directions.push(p.clone());
        }
        if !(pap > 0.0) {
            breakdown = true;
            // Rayleigh quotient of the scaled operator along p
            let pdp: f64 = p.iter().zip(&dinv).map(|(p, d)| p * p / d).sum();
            extra_rayleigh = Some(pap / pdp);
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        alphas.push(alpha);
        it += 1;
        residual = norm(&r) / bnorm;
        if residual <= tol {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let mut ritz = lanczos_extremes(&alphas, &betas);
    if let Some(q) = extra_rayleigh {
        ritz = Some(match ritz {
            Some((lo, hi)) => (lo.min(q), hi.max(q)),
            None => (q, q),
        });
    }
    // true residual
    let ax = a.mul_vec(&x);
    let true_res = norm(&b.iter().zip(&ax).map(|(b, y)| b - y).collect::<Vec<_>>()) / bnorm;
    CgResult {
        x,
        iterations: it,
        residual: true_res,
        converged: !breakdown && residual <= tol,
        breakdown,
        ritz,
        directions,
    }
}

/// Extreme eigenvalues of the Lanczos tridiagonal assembled from CG step sizes.
fn lanczos_extremes(alphas: &[f64], betas: &[f64]) -> Option<(f64, f64)> {
    let m = alphas.len();
    if m == 0 {
        return None;
    }
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    for j in 0..m {
        diag[j] = 1.0 / alphas[j];
        if j > 0 {
            diag[j] += betas[j - 1] / alphas[j - 1];
        }
        if j + 1 < m {
            off[j] = betas[j].sqrt() / alphas[j];
        }
    }
    Some(tridiagonal_extremes(&diag, &off))
}

/// Smallest and largest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
pub fn tridiagonal_extremes(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let m = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < m { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    // number of eigenvalues strictly below x
    let count_below = |x: f64| {
        let mut c = 0;
        let mut q = 1.0;
        for i in 0..m {
            let o2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            q = diag[i] - x - if i > 0 { o2 / q } else { 0.0 };
            if q == 0.0 {
                q = -f64::EPSILON * (x.abs() + 1.0);
            }
            if q < 0.0 {
                c += 1;
            }
        }
        c
    };
    let bisect = |k: usize| {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if count_below(mid) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (bisect(0), bisect(m - 1))
}

#[derive(Debug, Clone)]
pub struct BiCgStabResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub breakdown: bool,
}

/// Right-preconditioned BiCGStab.
pub fn bicgstab(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> BiCgStabResult {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return BiCgStabResult {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
            breakdown: false,
        };
    }
    let dinv = jacobi(a);
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut zs = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut residual = 1.0;
    let mut breakdown = false;
    let mut it = 0;
    while it < max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            breakdown = true;
            break;
        }
        let beta = rho_new / rho * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * dinv[i];
        }
        a.mul_vec_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            breakdown = true;
            break;
        }
        alpha = rho / rv;
        let mut s = r.clone();
        for i in 0..n {
            s[i] -= alpha * v[i];
            x[i] += alpha * y[i];
        }
        it += 1;
        if norm(&s) / bnorm <= tol {
            r = s;
            residual = norm(&r) / bnorm;
            break;
        }
        for i in 0..n {
            zs[i] = s[i] * dinv[i];
        }
        a.mul_vec_into(&zs, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += omega * zs[i];
            r[i] = s[i] - omega * t[i];
        }
        residual = norm(&r) / bnorm;
        if residual <= tol {
            break;
        }
    }
    let ax = a.mul_vec(&x);
    let true_res = norm(&b.iter().zip(&ax).map(|(b, y)| b - y).collect::<Vec<_>>()) / bnorm;
    BiCgStabResult {
        x,
        iterations: it,
        residual: true_res,
        converged: !breakdown && residual <= tol,
        breakdown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::sparse::TripletBuilder;
    use nalgebra::DMatrix;

    fn laplacian_1d(n: usize, shift: f64) -> SparseMatrix {
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 2.0 + shift);
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
                b.add(i + 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = SparseMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        let r = conjugate_gradient(&a, &b, 1e-12, 10, 0);
        assert!(r.converged);
        assert!(r.iterations <= 1);
        assert_eq!(r.x, b);
    }

    #[test]
    fn ritz_values_bracket_spectrum() {
        let n = 50;
        let a = laplacian_1d(n, 0.0);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let r = conjugate_gradient(&a, &b, 1e-14, 500, 0);
        assert!(r.converged);
        let (lo, hi) = r.ritz.unwrap();
        // Jacobi-scaled operator D^{-1/2} A D^{-1/2} = A / 2
        let exact_lo = 1.0 - (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        let exact_hi = 1.0 + (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!(lo >= exact_lo - 1e-10 && lo < 2.0 * exact_lo);
        assert!(hi <= exact_hi + 1e-10 && hi > 0.9 * exact_hi);
    }

    #[test]
    fn indefinite_matrix_yields_negative_ritz() {
        let a = laplacian_1d(40, -0.5);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let r = conjugate_gradient(&a, &b, 1e-12, 400, 0);
        assert!(r.ritz.unwrap().0 < 0.0);
    }

    #[test]
    fn sturm_bisection_against_dense() {
        let diag = [2.0, -1.0, 3.5, 0.2, 1.0];
        let off = [0.5, -1.2, 0.3, 2.0];
        let (lo, hi) = tridiagonal_extremes(&diag, &off);
        let dense = DMatrix::from_fn(5, 5, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        });
        let e = dense.symmetric_eigenvalues();
        assert!((lo - e.min()).abs() < 1e-12);
        assert!((hi - e.max()).abs() < 1e-12);
    }

    #[test]
    fn bicgstab_on_convection_diffusion() {
        let n = 60;
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 3.0);
            if i + 1 < n {
                b.add(i, i + 1, -1.0 + 0.3);
                b.add(i + 1, i, -1.0 - 0.3);
            }
        }
        let a = b.build();
        let rhs = vec![1.0; n];
        let r = bicgstab(&a, &rhs, 1e-12, 1000);
        assert!(r.converged);
        assert!(r.residual < 1e-10, "{r:?}");
    }
}
