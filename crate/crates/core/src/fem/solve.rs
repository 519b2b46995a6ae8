use super::constraints::LinearSystem;
use super::direct::BandedLu;
use super::krylov::{bicgstab, conjugate_gradient};
use super::sparse::{SparseMatrix, TripletBuilder};
use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ConjugateGradient,
    BiCgStab,
    DirectLu,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ConjugateGradient => "cg",
            Method::BiCgStab => "bicgstab",
            Method::DirectLu => "direct",
        })
    }
}

/// Outcome of a linear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual ‖b − Ax‖/‖b‖ of the returned solution.
    pub residual: f64,
    pub method: Method,
    pub breakdown: bool,
    /// Extreme Ritz values of the Jacobi-scaled operator (CG only).
    pub ritz_min: Option<f64>,
    pub ritz_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest dimension handled by the banded direct solver.
    pub direct_cap: usize,
    /// CG search directions to retain (see [`solve_cg`]).
    pub keep_directions: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 20_000,
            direct_cap: 20_000,
            keep_directions: 0,
        }
    }
}

/// Symmetric systems without a multiplier go to CG, everything else to the
/// direct solver (or BiCGStab beyond `direct_cap`).
pub fn solve(sys: &LinearSystem, tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveReport)> {
    solve_with(
        sys,
        &SolverOptions {
            tol,
            max_iter,
            ..Default::default()
        },
    )
}

pub fn solve_with(sys: &LinearSystem, opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    if sys.matrix.is_symmetric() && !sys.has_multiplier() {
        let (x, report, _) = solve_cg(sys, opts)?;
        Ok((x, report))
    } else {
        solve_general(sys, opts)
    }
}

/// CG that also returns the retained search directions. Fails on breakdown or stagnation.
pub fn solve_cg(
    sys: &LinearSystem,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport, Vec<Vec<f64>>)> {
    let r = conjugate_gradient(&sys.matrix, &sys.rhs, opts.tol, opts.max_iter, opts.keep_directions);
    let report = SolveReport {
        iterations: r.iterations,
        residual: r.residual,
        method: Method::ConjugateGradient,
        breakdown: r.breakdown,
        ritz_min: r.ritz.map(|p| p.0),
        ritz_max: r.ritz.map(|p| p.1),
    };
    if !r.converged {
        let message = if r.breakdown {
            "non-positive curvature pᵀAp ≤ 0".to_string()
        } else {
            format!("no convergence after {} iterations (residual {:e})", r.iterations, r.residual)
        };
        return Err(Error::Solver {
            method: Method::ConjugateGradient.to_string(),
            message,
            report: Some(report),
        });
    }
    Ok((r.x, report, r.directions))
}

/// Direct banded LU up to `direct_cap`, otherwise BiCGStab.
pub fn solve_general(sys: &LinearSystem, opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = sys.dim();
    if n == 0 {
        return Ok((
            Vec::new(),
            SolveReport {
                iterations: 0,
                residual: 0.0,
                method: Method::DirectLu,
                breakdown: false,
                ritz_min: None,
                ritz_max: None,
            },
        ));
    }
    if n <= opts.direct_cap {
        let fail = |message: String| Error::Solver {
            method: Method::DirectLu.to_string(),
            message,
            report: None,
        };
        let x = if sys.has_multiplier() {
            solve_bordered(&sys.matrix, &sys.rhs).map_err(fail)?
        } else {
            BandedLu::factor(&sys.matrix).map_err(fail)?.solve(&sys.rhs)
        };
        let residual = relative_residual(&sys.matrix, &x, &sys.rhs);
        if !residual.is_finite() {
            return Err(fail("non-finite solution".into()));
        }
        Ok((
            x,
            SolveReport {
                iterations: 1,
                residual,
                method: Method::DirectLu,
                breakdown: false,
                ritz_min: None,
                ritz_max: None,
            },
        ))
    } else {
        let r = bicgstab(&sys.matrix, &sys.rhs, opts.tol, opts.max_iter);
        let report = SolveReport {
            iterations: r.iterations,
            residual: r.residual,
            method: Method::BiCgStab,
            breakdown: r.breakdown,
            ritz_min: None,
            ritz_max: None,
        };
        if !r.converged {
            return Err(Error::Solver {
                method: Method::BiCgStab.to_string(),
                message: format!("no convergence after {} iterations (residual {:e})", r.iterations, r.residual),
                report: Some(report),
            });
        }
        Ok((r.x, report))
    }
}

pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let num: f64 = b.iter().zip(&ax).map(|(b, y)| (b - y) * (b - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Solves [[K, w], [vᵀ, z]] [x; λ] = [b; c] where K may be singular on a
/// one-dimensional kernel. A rank-one shift K + σ eₚeₚᵀ is factored once and the
/// remaining two unknowns (xₚ, λ) follow from a 2×2 system.
fn solve_bordered(a: &SparseMatrix, rhs: &[f64]) -> std::result::Result<Vec<f64>, String> {
    let n = a.dim() - 1;
    let mut w = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut z = 0.0;
    let mut kb = TripletBuilder::with_capacity(n, a.nnz());
    for (i, j, val) in a.iter() {
        match (i < n, j < n) {
            (true, true) => kb.add(i, j, val),
            (true, false) => w[i] = val,
            (false, true) => v[j] = val,
            (false, false) => z = val,
        }
    }
    let p = (0..n)
        .max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs()))
        .ok_or("empty primal block")?;
    let kpp = a.get(p, p);
    let sigma = kpp.abs().max(1.0);
    kb.add(p, p, sigma);
    let lu = BandedLu::factor(&kb.build())?;
    let b = &rhs[..n];
    let c = rhs[n];
    let y0 = lu.solve(b);
    let mut ep = vec![0.0; n];
    ep[p] = 1.0;
    let y1 = lu.solve(&ep);
    let y2 = lu.solve(&w);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    // unknowns (xp, λ):  (1 − σ y1ₚ) xp + y2ₚ λ = y0ₚ
    //                    σ vᵀy1 xp + (z − vᵀy2) λ = c − vᵀy0
    let m11 = 1.0 - sigma * y1[p];
    let m12 = y2[p];
    let m21 = sigma * dot(&v, &y1);
    let m22 = z - dot(&v, &y2);
    let r1 = y0[p];
    let r2 = c - dot(&v, &y0);
    let det = m11 * m22 - m12 * m21;
    let scale = (m11.abs() + m12.abs()) * (m21.abs() + m22.abs());
    if !(det.abs() > 1e-14 * scale) {
        return Err("singular bordered system".into());
    }
    let xp = (r1 * m22 - m12 * r2) / det;
    let lambda = (m11 * r2 - m21 * r1) / det;
    let mut x: Vec<f64> = (0..n).map(|i| y0[i] + sigma * xp * y1[i] - lambda * y2[i]).collect();
    x.push(lambda);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::constraints::{apply_constraints, Constraints};
    use crate::geometry::PeriodicPair;
    use nalgebra::{DMatrix, DVector};

    fn ring_laplacian(n: usize) -> SparseMatrix {
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            let j = (i + 1) % n;
            b.add(i, i, 1.0);
            b.add(j, j, 1.0);
            b.add(i, j, -1.0);
            b.add(j, i, -1.0);
        }
        b.build()
    }

    #[test]
    fn bordered_singular_laplacian_matches_dense() {
        let n = 12;
        let k = ring_laplacian(n);
        let mut f: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).cos()).collect();
        let mean = f.iter().sum::<f64>() / n as f64;
        f.iter_mut().for_each(|v| *v -= mean);
        let w = vec![1.0 / n as f64; n];
        let sys = apply_constraints(
            &LinearSystem::new(k.clone(), f.clone()),
            &Constraints {
                zero_mean: Some(&w),
                ..Default::default()
            },
        )
        .unwrap();
        let (x, rep) = solve(&sys, 1e-12, 100).unwrap();
        assert_eq!(rep.method, Method::DirectLu);
        assert!(rep.residual < 1e-12);
        let dense = DMatrix::from_fn(n + 1, n + 1, |i, j| sys.matrix.get(i, j));
        let xr = dense.lu().solve(&DVector::from_vec(sys.rhs.clone())).unwrap();
        for i in 0..=n {
            assert!((x[i] - xr[i]).abs() < 1e-10);
        }
        assert!(x[..n].iter().sum::<f64>().abs() < 1e-12);
        assert!(x[n].abs() < 1e-12);
    }

    #[test]
    fn symmetric_system_uses_cg() {
        let k = SparseMatrix::linear_combination(&[(1.0, &ring_laplacian(8)), (1.0, &SparseMatrix::identity(8))]);
        let sys = LinearSystem::new(k, vec![1.0; 8]);
        let (x, rep) = solve(&sys, 1e-12, 100).unwrap();
        assert_eq!(rep.method, Method::ConjugateGradient);
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(rep.ritz_min.unwrap() > 0.0);
    }

    #[test]
    fn periodic_then_solve() {
        let k = SparseMatrix::linear_combination(&[(1.0, &ring_laplacian(6)), (0.5, &SparseMatrix::identity(6))]);
        let pairs = [PeriodicPair { master: 0, slave: 3 }];
        let sys = apply_constraints(
            &LinearSystem::new(k, vec![1.0; 6]),
            &Constraints {
                periodic: &pairs,
                ..Default::default()
            },
        )
        .unwrap();
        let (x, _) = solve(&sys, 1e-12, 100).unwrap();
        let full = sys.expand(&x);
        assert_eq!(full[0], full[3]);
    }

    #[test]
    fn large_nonsymmetric_goes_iterative() {
        let n = 30;
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 3.0);
            if i + 1 < n {
                b.add(i, i + 1, -1.2);
                b.add(i + 1, i, -0.8);
            }
        }
        let sys = LinearSystem::new(b.build(), vec![1.0; n]);
        let opts = SolverOptions {
            tol: 1e-12,
            max_iter: 500,
            direct_cap: 10,
            keep_directions: 0,
        };
        let (x, rep) = solve_with(&sys, &opts).unwrap();
        assert_eq!(rep.method, Method::BiCgStab);
        let (xd, repd) = solve_general(&sys, &SolverOptions::default()).unwrap();
        assert_eq!(repd.method, Method::DirectLu);
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let sys = LinearSystem::new(SparseMatrix::identity(3), vec![0.0; 3]);
        let (x, rep) = solve(&sys, 1e-12, 10).unwrap();
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(rep.iterations, 0);
    }
}
