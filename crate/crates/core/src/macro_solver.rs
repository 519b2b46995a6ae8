//! Coupled two-field homogenized problem on Ω = (0,1)² with zero Dirichlet data.

use crate::cell::csv_err;
use crate::coefficients::{min_sym_eigenvalue, TensorField};
use crate::effective::EffectiveCoefficients;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::fem::{
    apply_constraints, assemble_convection, assemble_mass, assemble_source, assemble_stiffness,
    solve_general, Constraints, LinearSystem, SolveReport, SolverOptions, SparseMatrix,
    TripletBuilder,
};
use crate::geometry::{Mesh, Phase};
use std::io::Write;

#[derive(Debug, Clone)]
pub struct MacroSystem {
    pub mesh: Mesh,
    /// Full block matrix and load before boundary elimination, ordered [u₁; u₂].
    pub full: LinearSystem,
    /// Reduced system after Dirichlet elimination.
    pub system: LinearSystem,
    pub coefficients: EffectiveCoefficients,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MacroSolution {
    pub mesh: Mesh,
    pub u: [Vec<f64>; 2],
    pub report: SolveReport,
    pub warnings: Vec<String>,
}

impl MacroSolution {
    pub fn field(&self, phase: Phase) -> &[f64] {
        &self.u[phase.index()]
    }
}

/// Vertices on ∂Ω of a mesh of the unit square.
pub fn boundary_vertices(mesh: &Mesh) -> Vec<usize> {
    let on = |s: f64| s.abs() < 1e-12 || (s - 1.0).abs() < 1e-12;
    (0..mesh.num_vertices())
        .filter(|&v| on(mesh.vertices[v][0]) || on(mesh.vertices[v][1]))
        .collect()
}

fn transpose(a: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn place(b: &mut TripletBuilder, m: &SparseMatrix, row0: usize, col0: usize, scale: f64) {
    for (i, j, v) in m.iter() {
        b.add(row0 + i, col0 + j, scale * v);
    }
}

/// Mesh Péclet numbers ‖Bᵢ‖h / (2 λ_min(Aᵢ)) for non-degenerate phases.
pub fn peclet_warnings(eff: &EffectiveCoefficients, h: f64) -> Vec<String> {
    let mut out = Vec::new();
    for p in 0..2 {
        let lam = min_sym_eigenvalue(eff.a_eff[p]);
        if lam > 1e-12 {
            let b = eff.b[p][0].hypot(eff.b[p][1]);
            let pe = b * h / (2.0 * lam);
            if pe > 1.0 {
                out.push(format!("phase {}: mesh Péclet number {pe:.3} exceeds 1 (unstabilised convection)", p + 1));
            }
        }
    }
    out
}

/// Assembles the block system on `mesh` (a triangulation of the unit square).
pub fn assemble_macro(
    mesh: &Mesh,
    eff: &EffectiveCoefficients,
    g: [&Expression; 2],
) -> Result<MacroSystem> {
    let n = mesh.num_vertices();
    let one = Expression::constant(1.0);
    let mass = assemble_mass(mesh, &one, Phase::One)?;
    let mut b = TripletBuilder::with_capacity(2 * n, 8 * mass.nnz());
    let mut rhs = vec![0.0; 2 * n];
    for phase in Phase::BOTH {
        let i = phase.index();
        let j = phase.other().index();
        // homogenized flux is Σₖ a^{kj} ∂ₖu in direction j
        let tensor = TensorField::constant(transpose(eff.a_eff[i]));
        let stiff = assemble_stiffness(mesh, &tensor, Phase::One)?;
        let conv_own = assemble_convection(mesh, eff.b[i], Phase::One);
        let conv_other = assemble_convection(mesh, eff.b[j], Phase::One);
        place(&mut b, &stiff, i * n, i * n, 1.0);
        place(&mut b, &conv_own, i * n, i * n, 1.0);
        place(&mut b, &mass, i * n, i * n, eff.c[i]);
        place(&mut b, &conv_other, i * n, j * n, -1.0);
        place(&mut b, &mass, i * n, j * n, -eff.d);
        let load = assemble_source(mesh, g[i], Phase::One)?;
        rhs[i * n..(i + 1) * n].copy_from_slice(&load);
    }
    let full = LinearSystem::new(b.build(), rhs);
    let bnd = boundary_vertices(mesh);
    let fixed: Vec<usize> = bnd.iter().flat_map(|&v| [v, v + n]).collect();
    let system = apply_constraints(
        &full,
        &Constraints {
            fixed: &fixed,
            ..Default::default()
        },
    )?;
    let h = mesh
        .triangles
        .first()
        .map(|t| {
            let [a, c] = [mesh.vertices[t[0]], mesh.vertices[t[1]]];
            (a[0] - c[0]).hypot(a[1] - c[1])
        })
        .unwrap_or(0.0);
    Ok(MacroSystem {
        mesh: mesh.clone(),
        full,
        system,
        coefficients: eff.clone(),
        warnings: peclet_warnings(eff, h),
    })
}

/// Non-symmetric solve; failures carry the coupling magnitudes that can destroy coercivity.
pub fn solve_macro(sys: &MacroSystem, opts: &SolverOptions) -> Result<MacroSolution> {
    let eff = &sys.coefficients;
    let (x, report) = solve_general(&sys.system, opts).map_err(|e| match e {
        Error::Solver { method, message, report } => Error::Solver {
            method,
            message: format!(
                "{message}; possible loss of coercivity: |d| = {:e}, |B1| = {:e}, |B2| = {:e}, c = ({:e}, {:e}), \
                 min eig Aeff = ({:e}, {:e})",
                eff.d.abs(),
                eff.b[0][0].hypot(eff.b[0][1]),
                eff.b[1][0].hypot(eff.b[1][1]),
                eff.c[0],
                eff.c[1],
                min_sym_eigenvalue(eff.a_eff[0]),
                min_sym_eigenvalue(eff.a_eff[1]),
            ),
            report,
        },
        other => other,
    })?;
    let full = sys.system.expand(&x);
    let n = sys.mesh.num_vertices();
    Ok(MacroSolution {
        mesh: sys.mesh.clone(),
        u: [full[..n].to_vec(), full[n..].to_vec()],
        report,
        warnings: sys.warnings.clone(),
    })
}

/// `vertex,x1,x2,value` rows.
pub fn write_macro_csv<W: Write>(sol: &MacroSolution, phase: Phase, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["vertex", "x1", "x2", "value"]).map_err(csv_err)?;
    for (v, x) in sol.mesh.vertices.iter().enumerate() {
        out.write_record([v.to_string(), x[0].to_string(), x[1].to_string(), sol.field(phase)[v].to_string()])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// L² norm of a P1 field minus `exact` with the edge-midpoint rule.
pub fn l2_distance(mesh: &Mesh, u: &[f64], exact: impl Fn([f64; 2]) -> f64) -> f64 {
    let mut s = 0.0;
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let area = mesh.triangle_area(t);
        let mids = crate::fem::assembly::midpoints(mesh, t);
        for (k, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
            let uh = 0.5 * (u[tri[a]] + u[tri[b]]);
            s += area / 3.0 * (uh - exact(mids[k])).powi(2);
        }
    }
    s.sqrt()
}
