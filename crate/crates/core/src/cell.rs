//! Periodic cell problems: gradient correctors and barrier potentials, one
//! phase at a time, normalised to zero mean over their phase.

use crate::coefficients::{CoefficientSet, TensorField};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::fem::{
    apply_constraints, assemble_flux_load, assemble_interface_load, assemble_stiffness,
    lumped_mass, solve_with, Constraints, LinearSystem, SolveReport, SolverOptions,
};
use crate::geometry::{Phase, UnitCellMesh};
use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

/// Sign of the interface load in the barrier-potential problem of each phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaSign {
    /// −1 on the phase-1 trace, +1 on the phase-2 trace (normal pointing out of phase 1 on both sides).
    #[default]
    Derived,
    /// −1 on both traces.
    PaperLiteral,
}

impl GammaSign {
    pub fn sign(self, phase: Phase) -> f64 {
        match (self, phase) {
            (_, Phase::One) => -1.0,
            (GammaSign::Derived, Phase::Two) => 1.0,
            (GammaSign::PaperLiteral, Phase::Two) => -1.0,
        }
    }
}

impl fmt::Display for GammaSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GammaSign::Derived => "derived",
            GammaSign::PaperLiteral => "paper-literal",
        })
    }
}

impl FromStr for GammaSign {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "derived" => Ok(GammaSign::Derived),
            "paper-literal" => Ok(GammaSign::PaperLiteral),
            other => Err(format!("unknown gamma_sign `{other}` (derived | paper-literal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOptions {
    /// Largest admissible |mean of α over Σ|.
    pub compat_tol: f64,
    pub gamma_sign: GammaSign,
    pub solver: SolverOptions,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            compat_tol: 1e-8,
            gamma_sign: GammaSign::Derived,
            solver: SolverOptions {
                tol: 1e-12,
                ..Default::default()
            },
        }
    }
}

/// The six cell fields, each stored on the full cell mesh (zero off its phase).
#[derive(Debug, Clone, PartialEq)]
pub struct CellSolutions {
    /// `xi[i][k]`: corrector of phase i for direction k.
    pub xi: [[Vec<f64>; 2]; 2],
    pub gamma: [Vec<f64>; 2],
    /// One report per solve, labelled by field name.
    pub reports: Vec<(String, SolveReport)>,
    pub gamma_sign: GammaSign,
    /// Mean of α over the discrete interface.
    pub alpha_mean: f64,
}

impl CellSolutions {
    pub fn xi(&self, phase: Phase, k: usize) -> &[f64] {
        &self.xi[phase.index()][k]
    }

    pub fn gamma(&self, phase: Phase) -> &[f64] {
        &self.gamma[phase.index()]
    }
}

/// Mean of α over the interface of the cell mesh (two-point Gauss per edge).
pub fn discrete_alpha_mean(cell: &UnitCellMesh, alpha: &Expression) -> Result<f64> {
    let mut integral = 0.0;
    let mut length = 0.0;
    for q in cell.mesh.interface_quadrature() {
        integral += q.weight * alpha.eval(q.point)?;
        length += q.weight;
    }
    Ok(if length > 0.0 { integral / length } else { 0.0 })
}

/// Fails with COMPAT_VIOLATION when α has non-zero interface mean.
pub fn check_compatibility(cell: &UnitCellMesh, alpha: &Expression, tol: f64) -> Result<f64> {
    let mean = discrete_alpha_mean(cell, alpha)?;
    if mean.abs() > tol {
        return Err(Error::CompatViolation { mean, tol });
    }
    Ok(mean)
}

fn phase_system(
    cell: &UnitCellMesh,
    a: &TensorField,
    phase: Phase,
    rhs: Vec<f64>,
) -> Result<LinearSystem> {
    let mesh = &cell.mesh;
    let k = assemble_stiffness(mesh, a, phase)?;
    let active = mesh.phase_vertex_mask(phase);
    let fixed: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| !active[v]).collect();
    let pairs: Vec<_> = cell
        .periodic_pairs
        .iter()
        .copied()
        .filter(|p| active[p.slave] && active[p.master])
        .collect();
    let weights = lumped_mass(mesh, phase);
    apply_constraints(
        &LinearSystem::new(k, rhs),
        &Constraints {
            fixed: &fixed,
            periodic: &pairs,
            zero_mean: Some(&weights),
        },
    )
}

fn solve_phase(sys: &LinearSystem, opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    let (x, report) = solve_with(sys, opts)?;
    let n = sys.reduction.as_ref().map_or(x.len(), |r| r.primal_dim);
    Ok((sys.expand(&x[..n.min(x.len())]), report))
}

/// Corrector of direction `k` (0 or 1) in `phase`: ∫ A(eₖ + ∇ξ)·∇φ = 0 for all periodic φ.
pub fn solve_xi(
    cell: &UnitCellMesh,
    a: &TensorField,
    phase: Phase,
    k: usize,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let rhs = assemble_flux_load(&cell.mesh, a, phase, k)?;
    let sys = phase_system(cell, a, phase, rhs)?;
    solve_phase(&sys, opts)
}

/// Barrier potential of `phase`: ∫ A∇γ·∇φ = s ∫_Σ α φ.
pub fn solve_gamma(
    cell: &UnitCellMesh,
    a: &TensorField,
    alpha: &Expression,
    phase: Phase,
    opts: &CellOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    check_compatibility(cell, alpha, opts.compat_tol)?;
    let rhs = assemble_interface_load(&cell.mesh, alpha, phase, opts.gamma_sign.sign(phase))?;
    let sys = phase_system(cell, a, phase, rhs)?;
    solve_phase(&sys, &opts.solver)
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Xi(Phase, usize),
    Gamma(Phase),
}

/// Runs the six independent solves concurrently and gathers them in a fixed order.
pub fn solve_all(
    cell: &UnitCellMesh,
    coeffs: &CoefficientSet,
    opts: &CellOptions,
) -> Result<CellSolutions> {
    let alpha_mean = check_compatibility(cell, &coeffs.alpha, opts.compat_tol)?;
    let jobs = [
        Job::Xi(Phase::One, 0),
        Job::Xi(Phase::One, 1),
        Job::Gamma(Phase::One),
        Job::Xi(Phase::Two, 0),
        Job::Xi(Phase::Two, 1),
        Job::Gamma(Phase::Two),
    ];
    let results: Vec<Result<(String, Vec<f64>, SolveReport)>> = jobs
        .par_iter()
        .map(|job| match *job {
            Job::Xi(p, k) => solve_xi(cell, coeffs.conductivity(p), p, k, &opts.solver)
                .map(|(x, r)| (format!("xi_{}_{}", p.number(), k + 1), x, r)),
            Job::Gamma(p) => solve_gamma(cell, coeffs.conductivity(p), &coeffs.alpha, p, opts)
                .map(|(x, r)| (format!("gamma_{}", p.number()), x, r)),
        })
        .collect();
    let mut fields = Vec::with_capacity(6);
    let mut reports = Vec::with_capacity(6);
    for r in results {
        let (name, x, rep) = r?;
        fields.push(x);
        reports.push((name, rep));
    }
    let mut it = fields.into_iter();
    let mut next = || it.next().unwrap();
    let (x10, x11, g1, x20, x21, g2) = (next(), next(), next(), next(), next(), next());
    Ok(CellSolutions {
        xi: [[x10, x11], [x20, x21]],
        gamma: [g1, g2],
        reports,
        gamma_sign: opts.gamma_sign,
        alpha_mean,
    })
}

/// Writes `vertex,y1,y2,value` rows for the vertices of `phase`.
pub fn write_field<W: Write>(cell: &UnitCellMesh, phase: Phase, values: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["vertex", "y1", "y2", "value"]).map_err(csv_err)?;
    let active = cell.mesh.phase_vertex_mask(phase);
    for (v, y) in cell.mesh.vertices.iter().enumerate() {
        if active[v] {
            out.write_record([v.to_string(), y[0].to_string(), y[1].to_string(), values[v].to_string()])
                .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Internal(format!("csv: {other:?}")),
    }
}

/// Exports xi_<i>_<k>.csv and gamma_<i>.csv into `dir`.
pub fn export_fields(dir: &Path, cell: &UnitCellMesh, sols: &CellSolutions) -> Result<()> {
    for phase in Phase::BOTH {
        let i = phase.number();
        for k in 0..2 {
            let f = std::fs::File::create(dir.join(format!("xi_{i}_{}.csv", k + 1)))?;
            write_field(cell, phase, sols.xi(phase, k), std::io::BufWriter::new(f))?;
        }
        let f = std::fs::File::create(dir.join(format!("gamma_{i}.csv")))?;
        write_field(cell, phase, sols.gamma(phase), std::io::BufWriter::new(f))?;
    }
    Ok(())
}

/// Mass-weighted mean of a nodal field over `phase`.
pub fn phase_mean(cell: &UnitCellMesh, phase: Phase, values: &[f64]) -> f64 {
    let w = lumped_mass(&cell.mesh, phase);
    let total: f64 = w.iter().sum();
    w.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / total
}
