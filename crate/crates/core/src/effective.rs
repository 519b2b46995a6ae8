//! Homogenized coefficients from the cell solutions.

use crate::cell::{csv_err, CellSolutions};
use crate::coefficients::{min_sym_eigenvalue, CoefficientSet, TensorField};
use crate::error::Result;
use crate::expr::Expression;
use crate::fem::assembly::{element_tensor, p1_gradients};
use crate::geometry::{Phase, UnitCellMesh};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

/// Sign attached to the ∫A∇γ term of the convection vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BConvention {
    /// σᵢ = (−1)ⁱ: the two contributions cancel for symmetric conductivities.
    #[default]
    RemarkConsistent,
    /// σᵢ = (−1)ⁱ⁻¹.
    PaperLiteral,
}

impl BConvention {
    pub fn sigma(self, phase: Phase) -> f64 {
        let odd = phase == Phase::One;
        match self {
            BConvention::RemarkConsistent => if odd { -1.0 } else { 1.0 },
            BConvention::PaperLiteral => if odd { 1.0 } else { -1.0 },
        }
    }
}

impl fmt::Display for BConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BConvention::RemarkConsistent => "remark-consistent",
            BConvention::PaperLiteral => "paper-literal",
        })
    }
}

impl FromStr for BConvention {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "remark-consistent" => Ok(BConvention::RemarkConsistent),
            "paper-literal" => Ok(BConvention::PaperLiteral),
            other => Err(format!("unknown convention `{other}` (remark-consistent | paper-literal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCoefficients {
    /// Energy form of the effective conductivity, per phase.
    pub a_eff: [[[f64; 2]; 2]; 2],
    /// Flux form (cross-check).
    pub a_eff_flux: [[[f64; 2]; 2]; 2],
    pub b: [[f64; 2]; 2],
    pub d: f64,
    pub c: [f64; 2],
    pub vol: [f64; 2],
    pub convention: BConvention,
    pub resolution: usize,
    pub solver_tol: f64,
    pub geometry_hash: u64,
    pub warnings: Vec<String>,
}

impl EffectiveCoefficients {
    /// Coefficients of a macro problem given directly (no cell data behind them).
    pub fn manual(a_eff: [[[f64; 2]; 2]; 2], b: [[f64; 2]; 2], d: f64, c: [f64; 2]) -> Self {
        EffectiveCoefficients {
            a_eff,
            a_eff_flux: a_eff,
            b,
            d,
            c,
            vol: [0.0; 2],
            convention: BConvention::default(),
            resolution: 0,
            solver_tol: 0.0,
            geometry_hash: 0,
            warnings: Vec::new(),
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn element_gradient(cell: &UnitCellMesh, t: usize, u: &[f64]) -> ([f64; 2], f64) {
    let (g, area) = p1_gradients(&cell.mesh, t);
    let mut grad = [0.0; 2];
    for (p, &v) in cell.mesh.triangles[t].iter().enumerate() {
        grad[0] += u[v] * g[p][0];
        grad[1] += u[v] * g[p][1];
    }
    (grad, area)
}

fn apply(a: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Energy and flux forms of the effective conductivity of `phase`.
pub fn compute_aeff(
    cell: &UnitCellMesh,
    sols: &CellSolutions,
    a: &TensorField,
    phase: Phase,
) -> Result<([[f64; 2]; 2], [[f64; 2]; 2])> {
    let mesh = &cell.mesh;
    let mut energy = [[0.0; 2]; 2];
    let mut flux = [[0.0; 2]; 2];
    for t in 0..mesh.triangles.len() {
        if mesh.triangle_phase[t] != phase {
            continue;
        }
        let at = element_tensor(mesh, a, t)?;
        let mut corrected = [[0.0; 2]; 2];
        let mut area = 0.0;
        for k in 0..2 {
            let (g, ar) = element_gradient(cell, t, sols.xi(phase, k));
            area = ar;
            corrected[k] = g;
            corrected[k][k] += 1.0;
        }
        for k in 0..2 {
            let q = apply(&at, corrected[k]);
            for j in 0..2 {
                energy[k][j] += area * (q[0] * corrected[j][0] + q[1] * corrected[j][1]);
                flux[k][j] += area * q[j];
            }
        }
    }
    Ok((energy, flux))
}

/// ∫_Σ α u on the `phase` trace, two Gauss points per edge.
pub fn interface_integral(cell: &UnitCellMesh, alpha: &Expression, u: &[f64], phase: Phase) -> Result<f64> {
    let mut s = 0.0;
    for q in cell.mesh.interface_quadrature() {
        let dofs = match phase {
            Phase::One => q.dofs1,
            Phase::Two => q.dofs2,
        };
        let trace = q.shape[0] * u[dofs[0]] + q.shape[1] * u[dofs[1]];
        s += q.weight * alpha.eval(q.point)? * trace;
    }
    Ok(s)
}

/// ∫_{Yᵢ} A∇γᵢ.
pub fn gamma_flux(cell: &UnitCellMesh, sols: &CellSolutions, a: &TensorField, phase: Phase) -> Result<[f64; 2]> {
    let mesh = &cell.mesh;
    let mut out = [0.0; 2];
    for t in 0..mesh.triangles.len() {
        if mesh.triangle_phase[t] != phase {
            continue;
        }
        let at = element_tensor(mesh, a, t)?;
        let (g, area) = element_gradient(cell, t, sols.gamma(phase));
        let q = apply(&at, g);
        out[0] += area * q[0];
        out[1] += area * q[1];
    }
    Ok(out)
}

/// Convection vector of `phase`: σ [∫A∇γ]ₖ + ∫_Σ α ξᵏ.
pub fn compute_b(
    cell: &UnitCellMesh,
    sols: &CellSolutions,
    a: &TensorField,
    alpha: &Expression,
    phase: Phase,
    convention: BConvention,
) -> Result<[f64; 2]> {
    let flux = gamma_flux(cell, sols, a, phase)?;
    let sigma = convention.sigma(phase);
    let mut b = [0.0; 2];
    for k in 0..2 {
        b[k] = sigma * flux[k] + interface_integral(cell, alpha, sols.xi(phase, k), phase)?;
    }
    Ok(b)
}

/// d = ∫_Σ α(γ₁ − γ₂) and cᵢ = d + ∫_{Yᵢ} aᵢ.
pub fn compute_d_c(
    cell: &UnitCellMesh,
    sols: &CellSolutions,
    alpha: &Expression,
    reaction: &[Expression; 2],
) -> Result<(f64, [f64; 2])> {
    let d = interface_integral(cell, alpha, sols.gamma(Phase::One), Phase::One)?
        - interface_integral(cell, alpha, sols.gamma(Phase::Two), Phase::Two)?;
    let mut c = [d; 2];
    for phase in Phase::BOTH {
        c[phase.index()] += phase_integral(cell, &reaction[phase.index()], phase)?;
    }
    Ok((d, c))
}

/// ∫_{Yᵢ} f by the edge-midpoint rule.
pub fn phase_integral(cell: &UnitCellMesh, f: &Expression, phase: Phase) -> Result<f64> {
    let mesh = &cell.mesh;
    let mut s = 0.0;
    for t in 0..mesh.triangles.len() {
        if mesh.triangle_phase[t] != phase {
            continue;
        }
        let area = mesh.triangle_area(t);
        for x in crate::fem::assembly::midpoints(mesh, t) {
            s += area / 3.0 * f.eval(x)?;
        }
    }
    Ok(s)
}

/// Macro source gᵢ = |Yᵢ| fᵢ.
pub fn compute_g(f: &Expression, vol: f64) -> Expression {
    f.scaled(vol)
}

/// All effective quantities with consistency warnings.
pub fn compute_effective(
    cell: &UnitCellMesh,
    sols: &CellSolutions,
    coeffs: &CoefficientSet,
    convention: BConvention,
    solver_tol: f64,
) -> Result<EffectiveCoefficients> {
    let mut a_eff = [[[0.0; 2]; 2]; 2];
    let mut a_eff_flux = [[[0.0; 2]; 2]; 2];
    let mut b = [[0.0; 2]; 2];
    let mut warnings = Vec::new();
    for phase in Phase::BOTH {
        let i = phase.index();
        let a = coeffs.conductivity(phase);
        let (energy, flux) = compute_aeff(cell, sols, a, phase)?;
        a_eff[i] = energy;
        a_eff_flux[i] = flux;
        let gap = (0..4)
            .map(|n| (energy[n / 2][n % 2] - flux[n / 2][n % 2]).abs())
            .fold(0.0, f64::max);
        if gap > 1e-8 {
            warnings.push(format!(
                "phase {}: energy and flux forms of Aeff differ by {gap:e}",
                phase.number()
            ));
        }
        if min_sym_eigenvalue(energy) < 1e-10 {
            warnings.push(format!(
                "phase {}: degenerate effective conductivity (smallest eigenvalue {:e})",
                phase.number(),
                min_sym_eigenvalue(energy)
            ));
        }
        b[i] = compute_b(cell, sols, a, &coeffs.alpha, phase, convention)?;
    }
    let (d, c) = compute_d_c(cell, sols, &coeffs.alpha, &coeffs.reaction)?;
    let hash_input = format!("{};N={}", cell.geometry.canonical(), cell.resolution);
    Ok(EffectiveCoefficients {
        a_eff,
        a_eff_flux,
        b,
        d,
        c,
        vol: cell.phase_areas,
        convention,
        resolution: cell.resolution,
        solver_tol,
        geometry_hash: fnv1a(hash_input.as_bytes()),
        warnings,
    })
}

/// `name,i,j,value,convention,N,geometry_hash` rows.
pub fn write_effective_csv<W: Write>(eff: &EffectiveCoefficients, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["name", "i", "j", "value", "convention", "N", "geometry_hash"])
        .map_err(csv_err)?;
    let conv = eff.convention.to_string();
    let n = eff.resolution.to_string();
    let hash = format!("{:016x}", eff.geometry_hash);
    let mut row = |name: &str, i: &str, j: &str, v: f64| {
        out.write_record([name, i, j, &v.to_string(), &conv, &n, &hash])
            .map_err(csv_err)
    };
    for p in 0..2 {
        let i = (p + 1).to_string();
        row("vol", &i, "", eff.vol[p])?;
        for k in 0..2 {
            for j in 0..2 {
                row(&format!("Aeff{i}"), &(k + 1).to_string(), &(j + 1).to_string(), eff.a_eff[p][k][j])?;
            }
        }
        for k in 0..2 {
            row(&format!("B{i}"), &(k + 1).to_string(), "", eff.b[p][k])?;
        }
    }
    row("d", "", "", eff.d)?;
    row("c", "1", "", eff.c[0])?;
    row("c", "2", "", eff.c[1])?;
    out.flush()?;
    Ok(())
}
