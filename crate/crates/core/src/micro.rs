//! Direct simulation of the ε-periodic two-phase problem with jump coupling on Σ^ε.

use crate::cell::csv_err;
use crate::coefficients::{CoefficientSet, TensorField};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::fem::assembly::midpoints;
use crate::fem::{
    apply_constraints, assemble_interface_coupling, assemble_mass, assemble_source,
    assemble_stiffness, solve_cg, Constraints, LinearSystem, SolveReport, SolverOptions,
    SparseMatrix,
};
use crate::geometry::{build_micro_mesh, GeometrySpec, Mesh, MicroMesh, Phase};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use std::io::Write;

/// CG search directions kept for the coercivity estimate.
pub const RITZ_DIRECTIONS: usize = 150;

#[derive(Debug, Clone)]
pub struct MicroSystem {
    pub mesh: MicroMesh,
    /// Unconstrained matrix and load.
    pub full: LinearSystem,
    /// After Dirichlet elimination on both phases.
    pub system: LinearSystem,
    /// Gram matrix of the V^ε inner product (full numbering).
    pub gram: SparseMatrix,
    /// ‖f‖ in L²(Ω), phase by phase.
    pub f_norm: f64,
    /// Phase 2 has no boundary trace (disk inclusions).
    pub outside_hypotheses: bool,
}

#[derive(Debug, Clone)]
pub struct MicroSolution {
    pub mesh: MicroMesh,
    /// Nodal values; vertex v carries u of phase `mesh.mesh.vertex_phase[v]`.
    pub u: Vec<f64>,
    pub epsilon: f64,
    pub report: SolveReport,
    pub energy_norm: f64,
    pub f_norm: f64,
    /// Rayleigh–Ritz estimate of inf a(v,v)/‖v‖²_V.
    pub c0_estimate: f64,
    pub outside_hypotheses: bool,
}

/// V^ε Gram matrix: unit mass + Laplacian stiffness on both phases + unit jump coupling.
pub fn vnorm_gram(mesh: &Mesh) -> Result<SparseMatrix> {
    let one = Expression::constant(1.0);
    let id = TensorField::identity();
    let mut parts = Vec::new();
    for phase in Phase::BOTH {
        parts.push(assemble_mass(mesh, &one, phase)?);
        parts.push(assemble_stiffness(mesh, &id, phase)?);
    }
    parts.push(assemble_interface_coupling(mesh, &one)?);
    let terms: Vec<(f64, &SparseMatrix)> = parts.iter().map(|m| (1.0, m)).collect();
    Ok(SparseMatrix::linear_combination(&terms))
}

/// L²(Ω) norm of the phase-wise source, edge-midpoint rule.
pub fn source_norm(mesh: &Mesh, source: &[Expression; 2]) -> Result<f64> {
    let mut s = 0.0;
    for t in 0..mesh.triangles.len() {
        let f = &source[mesh.triangle_phase[t].index()];
        let area = mesh.triangle_area(t);
        for x in midpoints(mesh, t) {
            s += area / 3.0 * f.eval(x)?.powi(2);
        }
    }
    Ok(s.sqrt())
}

pub fn assemble_micro(mesh: &MicroMesh, coeffs: &CoefficientSet) -> Result<MicroSystem> {
    let m = &mesh.mesh;
    let mut parts = Vec::new();
    let mut rhs = vec![0.0; m.num_vertices()];
    for phase in Phase::BOTH {
        parts.push(assemble_stiffness(m, coeffs.conductivity(phase), phase)?);
        parts.push(assemble_mass(m, coeffs.reaction(phase), phase)?);
        let load = assemble_source(m, coeffs.source(phase), phase)?;
        for (r, l) in rhs.iter_mut().zip(load) {
            *r += l;
        }
    }
    parts.push(assemble_interface_coupling(m, &coeffs.alpha)?);
    let terms: Vec<(f64, &SparseMatrix)> = parts.iter().map(|p| (1.0, p)).collect();
    let full = LinearSystem::new(SparseMatrix::linear_combination(&terms), rhs);
    let fixed: Vec<usize> = mesh.dirichlet.iter().flatten().copied().collect();
    let system = apply_constraints(
        &full,
        &Constraints {
            fixed: &fixed,
            ..Default::default()
        },
    )?;
    Ok(MicroSystem {
        gram: vnorm_gram(m)?,
        f_norm: source_norm(m, &coeffs.source)?,
        outside_hypotheses: !mesh.geometry.both_phases_touch_boundary(),
        mesh: mesh.clone(),
        full,
        system,
    })
}

/// Smallest generalized Ritz value of (K, G) over span(basis).
pub fn ritz_coercivity(k: &SparseMatrix, g: &SparseMatrix, basis: &[Vec<f64>]) -> f64 {
    let m = basis.len();
    if m == 0 {
        return f64::NAN;
    }
    let kb: Vec<Vec<f64>> = basis.iter().map(|b| k.mul_vec(b)).collect();
    let gb: Vec<Vec<f64>> = basis.iter().map(|b| g.mul_vec(b)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let kq = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&basis[i], &kb[j]) + dot(&basis[j], &kb[i])));
    let gq = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&basis[i], &gb[j]) + dot(&basis[j], &gb[i])));
    // G-orthonormal basis of the span, dropping numerically dependent directions
    let ge = SymmetricEigen::new(gq);
    let top = ge.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..m).filter(|&i| ge.eigenvalues[i] > 1e-12 * top).collect();
    let w = DMatrix::from_fn(m, keep.len(), |i, j| {
        ge.eigenvectors[(i, keep[j])] / ge.eigenvalues[keep[j]].sqrt()
    });
    let reduced = w.transpose() * kq * &w;
    let sym = (&reduced + reduced.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// CG solve with coercivity diagnostics. `alpha_minus_sup` is only echoed in errors.
pub fn solve_micro(sys: &MicroSystem, opts: &SolverOptions, alpha_minus_sup: f64) -> Result<MicroSolution> {
    let opts = SolverOptions {
        keep_directions: opts.keep_directions.max(RITZ_DIRECTIONS),
        ..*opts
    };
    let (x, report, mut directions) = match solve_cg(&sys.system, &opts) {
        Ok(r) => r,
        Err(Error::Solver { report: Some(report), .. }) => {
            return Err(Error::IndefiniteForm {
                ritz_min: report.ritz_min.unwrap_or(f64::NAN),
                alpha_minus_sup,
                report,
            })
        }
        Err(e) => return Err(e),
    };
    if let Some(r) = report.ritz_min {
        if r <= 0.0 {
            return Err(Error::IndefiniteForm {
                ritz_min: r,
                alpha_minus_sup,
                report,
            });
        }
    }
    let u = sys.system.expand(&x);
    let energy_norm = vnorm_values(&sys.gram, &u);
    let c0_estimate = if x.iter().any(|v| *v != 0.0) {
        let gram_red = apply_constraints(
            &LinearSystem::new(sys.gram.clone(), vec![0.0; sys.gram.dim()]),
            &Constraints {
                fixed: &sys.mesh.dirichlet.iter().flatten().copied().collect::<Vec<_>>(),
                ..Default::default()
            },
        )?
        .matrix;
        directions.push(x.clone());
        ritz_coercivity(&sys.system.matrix, &gram_red, &directions)
    } else {
        f64::NAN
    };
    Ok(MicroSolution {
        mesh: sys.mesh.clone(),
        u,
        epsilon: sys.mesh.epsilon,
        report,
        energy_norm,
        f_norm: sys.f_norm,
        c0_estimate,
        outside_hypotheses: sys.outside_hypotheses,
    })
}

/// √(uᵀ G u).
pub fn vnorm_values(gram: &SparseMatrix, u: &[f64]) -> f64 {
    gram.bilinear(u, u).max(0.0).sqrt()
}

pub fn vnorm(sol: &MicroSolution) -> Result<f64> {
    Ok(vnorm_values(&vnorm_gram(&sol.mesh.mesh)?, &sol.u))
}

impl MicroSolution {
    /// ‖u‖_V ≤ ‖f‖ / c₀.
    pub fn apriori_bound_holds(&self) -> bool {
        self.c0_estimate.is_nan() || self.energy_norm * self.c0_estimate <= self.f_norm * (1.0 + 1e-9)
    }

    pub fn dof_count(&self) -> usize {
        self.u.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AprioriRow {
    pub epsilon: f64,
    pub vnorm: f64,
    pub fnorm: f64,
    pub ratio: f64,
    pub ritz_min: f64,
    pub c0_estimate: f64,
}

/// Solves the micro problem for every ε (concurrently) and tabulates ‖u‖_V / ‖f‖.
pub fn apriori_sweep(
    coeffs: &CoefficientSet,
    geometry: &GeometrySpec,
    n: usize,
    eps_list: &[f64],
    size_cap: usize,
    opts: &SolverOptions,
    alpha_minus_sup: f64,
) -> Result<(Vec<AprioriRow>, Vec<MicroSolution>)> {
    let sols: Vec<Result<MicroSolution>> = eps_list
        .par_iter()
        .map(|&eps| {
            let mesh = build_micro_mesh(geometry, n, eps, size_cap)?;
            let sys = assemble_micro(&mesh, coeffs)?;
            solve_micro(&sys, opts, alpha_minus_sup)
        })
        .collect();
    let sols: Vec<MicroSolution> = sols.into_iter().collect::<Result<_>>()?;
    let rows = sols.iter().map(apriori_row).collect();
    Ok((rows, sols))
}

pub fn apriori_row(s: &MicroSolution) -> AprioriRow {
    AprioriRow {
        epsilon: s.epsilon,
        vnorm: s.energy_norm,
        fnorm: s.f_norm,
        ratio: if s.f_norm > 0.0 { s.energy_norm / s.f_norm } else { 0.0 },
        ritz_min: s.report.ritz_min.unwrap_or(f64::NAN),
        c0_estimate: s.c0_estimate,
    }
}

/// max ratio / min ratio over rows with non-zero source.
pub fn ratio_spread(rows: &[AprioriRow]) -> f64 {
    let r: Vec<f64> = rows.iter().filter(|r| r.fnorm > 0.0).map(|r| r.ratio).collect();
    if r.is_empty() {
        return 1.0;
    }
    r.iter().cloned().fold(f64::MIN, f64::max) / r.iter().cloned().fold(f64::MAX, f64::min)
}

pub fn write_apriori_csv<W: Write>(rows: &[AprioriRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epsilon", "vnorm", "fnorm", "ratio", "ritz_min"]).map_err(csv_err)?;
    for r in rows {
        out.write_record([r.epsilon, r.vnorm, r.fnorm, r.ratio, r.ritz_min].map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// `vertex,x1,x2,phase,value` rows.
pub fn write_micro_csv<W: Write>(sol: &MicroSolution, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["vertex", "x1", "x2", "phase", "value"]).map_err(csv_err)?;
    let m = &sol.mesh.mesh;
    for (v, x) in m.vertices.iter().enumerate() {
        out.write_record([
            v.to_string(),
            x[0].to_string(),
            x[1].to_string(),
            m.vertex_phase[v].number().to_string(),
            sol.u[v].to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
