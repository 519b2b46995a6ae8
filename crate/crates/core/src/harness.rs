//! End-to-end pipeline: validation, cell problems, effective coefficients,
//! macro solve, ε-sweep of micro solves, and micro/macro error reports.

use crate::cell::{export_fields, solve_all, CellSolutions};
use crate::coefficients::{alpha_diagnostics, validate_coefficients, CoefficientSet};
use crate::config::RunConfig;
use crate::effective::{compute_effective, compute_g, write_effective_csv, EffectiveCoefficients};
use crate::error::{Error, Result};
use crate::fem::p1_gradients;
use crate::geometry::{build_unit_cell_mesh, wrap_unit, Mesh, MicroMesh, Phase, UnitCellMesh};
use crate::macro_solver::{assemble_macro, solve_macro, write_macro_csv, MacroSolution};
use crate::micro::{apriori_row, apriori_sweep, ratio_spread, write_apriori_csv, write_micro_csv, AprioriRow, MicroSolution};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

const LOCATE_TOL: f64 = 1e-10;

/// Uniform bucket grid over a mesh's bounding box for point location.
pub struct Locator<'a> {
    mesh: &'a Mesh,
    origin: [f64; 2],
    cell: [f64; 2],
    n: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &mesh.vertices {
            for a in 0..2 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        let n = ((mesh.triangles.len() as f64).sqrt().ceil() as usize).max(1);
        let cell = [0, 1].map(|a| ((hi[a] - lo[a]) / n as f64).max(f64::MIN_POSITIVE));
        let mut loc = Locator {
            mesh,
            origin: lo,
            cell,
            n,
            buckets: vec![Vec::new(); n * n],
        };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut blo = [usize::MAX; 2];
            let mut bhi = [0usize; 2];
            for &v in tri {
                for a in 0..2 {
                    let p = mesh.vertices[v][a];
                    blo[a] = blo[a].min(loc.bucket(a, p - LOCATE_TOL));
                    bhi[a] = bhi[a].max(loc.bucket(a, p + LOCATE_TOL));
                }
            }
            for j in blo[1]..=bhi[1] {
                for i in blo[0]..=bhi[0] {
                    loc.buckets[j * n + i].push(t);
                }
            }
        }
        loc
    }

    fn bucket(&self, axis: usize, p: f64) -> usize {
        let b = ((p - self.origin[axis]) / self.cell[axis]).floor();
        (b.max(0.0) as usize).min(self.n - 1)
    }

    /// Lowest-index triangle containing `x` (optionally of one phase) and its barycentric weights.
    pub fn locate(&self, x: [f64; 2], phase: Option<Phase>) -> Option<(usize, [f64; 3])> {
        let bucket = &self.buckets[self.bucket(1, x[1]) * self.n + self.bucket(0, x[0])];
        bucket.iter().find_map(|&t| {
            if phase.is_some_and(|p| self.mesh.triangle_phase[t] != p) {
                return None;
            }
            let w = barycentric(self.mesh, t, x);
            w.iter().all(|&c| c >= -LOCATE_TOL).then_some((t, w))
        })
    }
}

fn barycentric(mesh: &Mesh, t: usize, x: [f64; 2]) -> [f64; 3] {
    let [a, b, c] = mesh.triangles[t].map(|v| mesh.vertices[v]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (x[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

fn p1_value(mesh: &Mesh, t: usize, w: [f64; 3], u: &[f64]) -> f64 {
    let tri = mesh.triangles[t];
    w[0] * u[tri[0]] + w[1] * u[tri[1]] + w[2] * u[tri[2]]
}

fn locate_or_err(loc: &Locator, x: [f64; 2]) -> Result<(usize, [f64; 3])> {
    loc.locate(x, None)
        .ok_or_else(|| Error::Internal(format!("point ({}, {}) outside the macro mesh", x[0], x[1])))
}

/// Value of the phase-i macro field at every micro vertex of phase i, aligned with the micro layout.
pub fn interpolate_macro_on_micro(macro_mesh: &Mesh, u: [&[f64]; 2], micro: &MicroMesh) -> Result<Vec<f64>> {
    let loc = Locator::new(macro_mesh);
    let m = &micro.mesh;
    m.vertices
        .iter()
        .zip(&m.vertex_phase)
        .map(|(&x, &p)| {
            let (t, w) = locate_or_err(&loc, x)?;
            Ok(p1_value(macro_mesh, t, w, u[p.index()]))
        })
        .collect()
}

/// Relative L² distance per phase, edge-midpoint rule on each micro triangle.
pub fn l2_errors(mesh: &Mesh, approx: &[f64], reference: &[f64]) -> [f64; 2] {
    let mut diff = [0.0; 2];
    let mut norm = [0.0; 2];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_phase[t].index();
        let w = mesh.triangle_area(t) / 3.0;
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let (i, j) = (tri[a], tri[b]);
            let r = 0.5 * (reference[i] + reference[j]);
            let d = 0.5 * (approx[i] + approx[j]) - r;
            diff[p] += w * d * d;
            norm[p] += w * r * r;
        }
    }
    [0, 1].map(|p| diff[p].sqrt() / norm[p].sqrt().max(1e-14))
}

/// First-order two-scale reconstruction uᵢ + ε(Σₖ ξᵢᵏ ∂ₖuᵢ + γᵢ(u₁ − u₂)) at micro vertices.
pub fn reconstruct_corrector(
    macro_sol: &MacroSolution,
    cell: &UnitCellMesh,
    sols: &CellSolutions,
    micro: &MicroMesh,
) -> Result<Vec<f64>> {
    let macro_mesh = &macro_sol.mesh;
    let mloc = Locator::new(macro_mesh);
    let cloc = Locator::new(&cell.mesh);
    let eps = micro.epsilon;
    let m = &micro.mesh;
    let mut out = Vec::with_capacity(m.num_vertices());
    for (&x, &phase) in m.vertices.iter().zip(&m.vertex_phase) {
        let (t, w) = locate_or_err(&mloc, x)?;
        let i = phase.index();
        let ui = p1_value(macro_mesh, t, w, &macro_sol.u[i]);
        let jump = p1_value(macro_mesh, t, w, &macro_sol.u[0]) - p1_value(macro_mesh, t, w, &macro_sol.u[1]);
        let (grads, _) = p1_gradients(macro_mesh, t);
        let tri = macro_mesh.triangles[t];
        let grad = [0, 1].map(|k| (0..3).map(|a| grads[a][k] * macro_sol.u[i][tri[a]]).sum::<f64>());
        let y = [wrap_unit(x[0] / eps), wrap_unit(x[1] / eps)];
        let (ct, cw) = locate_periodic(&cloc, y, phase).ok_or_else(|| {
            Error::Internal(format!("cell point ({}, {}) not in phase {}", y[0], y[1], phase.number()))
        })?;
        let field = |u: &[f64]| p1_value(&cell.mesh, ct, cw, u);
        let corr = field(sols.xi(phase, 0)) * grad[0] + field(sols.xi(phase, 1)) * grad[1] + field(sols.gamma(phase)) * jump;
        out.push(ui + eps * corr);
    }
    Ok(out)
}

/// Tries `y` and its images across the periodic seams, so a wrapped 0 can match a phase that only touches 1.
fn locate_periodic(loc: &Locator, y: [f64; 2], phase: Phase) -> Option<(usize, [f64; 3])> {
    let near = |c: f64| if c < LOCATE_TOL { vec![c, c + 1.0] } else { vec![c] };
    for a in near(y[0]) {
        for b in near(y[1]) {
            if let Some(hit) = loc.locate([a, b], Some(phase)) {
                return Some(hit);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub error: [f64; 2],
    pub corrected_error: [f64; 2],
    pub micro_dofs: usize,
    pub apriori: AprioriRow,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flags {
    pub coercive: bool,
    pub apriori_band: bool,
    pub apriori_bound: bool,
    pub monotone: [bool; 2],
    pub corrector_not_worse: bool,
}

impl Flags {
    pub fn all(&self) -> bool {
        self.coercive && self.apriori_band && self.apriori_bound && self.monotone[0] && self.monotone[1] && self.corrector_not_worse
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Sorted by decreasing ε.
    pub rows: Vec<ConvergenceRow>,
    pub effective: EffectiveCoefficients,
    pub flags: Flags,
    pub warnings: Vec<String>,
    pub outside_hypotheses: bool,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.flags.all()
    }
}

fn flags(rows: &[ConvergenceRow], sols: &[MicroSolution]) -> Flags {
    let decreasing = |p: usize| rows.windows(2).all(|w| w[1].error[p] < w[0].error[p]);
    let last = rows.last();
    let apriori: Vec<AprioriRow> = rows.iter().map(|r| r.apriori.clone()).collect();
    Flags {
        coercive: sols.iter().all(|s| s.report.ritz_min.is_some_and(|r| r > 0.0)),
        apriori_band: ratio_spread(&apriori) <= 2.0,
        apriori_bound: sols.iter().all(|s| s.apriori_bound_holds()),
        monotone: [decreasing(0), decreasing(1)],
        corrector_not_worse: last.is_some_and(|r| (0..2).all(|p| r.corrected_error[p] <= r.error[p])),
    }
}

/// Stage products kept by [`run_all`].
pub struct RunArtifacts {
    pub report: ConvergenceReport,
    pub cell: UnitCellMesh,
    pub cells: CellSolutions,
    pub macro_solution: MacroSolution,
    pub micro: Vec<MicroSolution>,
}

/// Checks coefficients and returns them with alpha's negative-part sup.
pub fn validate_stage(cfg: &RunConfig) -> Result<(CoefficientSet, f64, Vec<String>)> {
    let stage = |e: Error| e.in_stage("validate");
    cfg.geometry.validate().map_err(stage)?;
    let coeffs = cfg.coefficients.build().map_err(stage)?;
    let report = validate_coefficients(&coeffs, &cfg.geometry, cfg.validation_grid).map_err(stage)?;
    let diag = alpha_diagnostics(&coeffs.alpha, &cfg.geometry, 4 * cfg.cell_n).map_err(stage)?;
    Ok((coeffs, diag.alpha_minus_sup, report.warnings))
}

/// Validation, cell problems and effective coefficients; writes effective.csv.
pub fn run_cell(cfg: &RunConfig) -> Result<(CoefficientSet, f64, UnitCellMesh, CellSolutions, EffectiveCoefficients, Vec<String>)> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("resolved_config.txt"), cfg.emit())?;
    let (coeffs, alpha_minus_sup, mut warnings) = validate_stage(cfg)?;
    let cell = build_unit_cell_mesh(&cfg.geometry, cfg.cell_n).map_err(|e| e.in_stage("cell"))?;
    let sols = solve_all(&cell, &coeffs, &cfg.into()).map_err(|e| e.in_stage("cell"))?;
    if cfg.write_fields {
        export_fields(out, &cell, &sols).map_err(|e| e.in_stage("cell"))?;
    }
    let eff = compute_effective(&cell, &sols, &coeffs, cfg.convention, cfg.solver.tol.min(1e-12))
        .map_err(|e| e.in_stage("effective"))?;
    write_effective_csv(&eff, BufWriter::new(File::create(out.join("effective.csv"))?))?;
    warnings.extend(eff.warnings.iter().cloned());
    Ok((coeffs, alpha_minus_sup, cell, sols, eff, warnings))
}

fn eps_label(eps: f64) -> String {
    format!("1_{}", (1.0 / eps).round() as usize)
}

/// Full pipeline; writes every artifact under `cfg.output_dir`.
pub fn run_all(cfg: &RunConfig) -> Result<RunArtifacts> {
    let start = Instant::now();
    let out = cfg.output_dir.clone();
    let (coeffs, alpha_minus_sup, cell, cells, eff, mut warnings) = run_cell(cfg)?;

    let macro_mesh = Mesh::structured_square(cfg.macro_n);
    let g = [compute_g(&coeffs.source[0], eff.vol[0]), compute_g(&coeffs.source[1], eff.vol[1])];
    let macro_solution = assemble_macro(&macro_mesh, &eff, [&g[0], &g[1]])
        .and_then(|sys| solve_macro(&sys, &cfg.solver))
        .map_err(|e| e.in_stage("macro"))?;
    warnings.extend(macro_solution.warnings.iter().cloned());
    for phase in Phase::BOTH {
        let f = File::create(out.join(format!("macro_u{}.csv", phase.number())))?;
        write_macro_csv(&macro_solution, phase, BufWriter::new(f))?;
    }

    let micro_start = Instant::now();
    let (_, micro) = apriori_sweep(
        &coeffs,
        &cfg.geometry,
        cfg.micro_n,
        &cfg.epsilons(),
        cfg.micro_size_cap,
        &cfg.solver,
        alpha_minus_sup,
    )
    .map_err(|e| e.in_stage("micro"))?;
    let micro_seconds = micro_start.elapsed().as_secs_f64() / micro.len().max(1) as f64;

    let mut micro = micro;
    micro.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let mut rows = Vec::new();
    for sol in &micro {
        let stage = |e: Error| e.in_stage("errors");
        let mm = &sol.mesh;
        let interp = interpolate_macro_on_micro(&macro_mesh, [&macro_solution.u[0], &macro_solution.u[1]], mm).map_err(stage)?;
        let rec = reconstruct_corrector(&macro_solution, &cell, &cells, mm).map_err(stage)?;
        rows.push(ConvergenceRow {
            epsilon: sol.epsilon,
            error: l2_errors(&mm.mesh, &sol.u, &interp),
            corrected_error: l2_errors(&mm.mesh, &sol.u, &rec),
            micro_dofs: sol.dof_count(),
            apriori: apriori_row(sol),
            seconds: micro_seconds,
        });
        if cfg.write_fields {
            let f = File::create(out.join(format!("micro_u_{}.csv", eps_label(sol.epsilon))))?;
            write_micro_csv(sol, BufWriter::new(f))?;
        }
    }
    let apriori: Vec<AprioriRow> = rows.iter().map(|r| r.apriori.clone()).collect();
    write_apriori_csv(&apriori, BufWriter::new(File::create(out.join("apriori.csv"))?))?;

    let outside_hypotheses = micro.iter().any(|s| s.outside_hypotheses);
    if outside_hypotheses {
        warnings.push("phase 2 does not meet the outer boundary; micro problem is outside the stated hypotheses".into());
    }
    let report = ConvergenceReport {
        flags: flags(&rows, &micro),
        rows,
        effective: eff,
        warnings,
        outside_hypotheses,
    };
    write_report_csv(&report, &out.join("report.csv"))?;
    fs::write(out.join("report.txt"), report_text(&report, start.elapsed().as_secs_f64()))?;
    Ok(RunArtifacts {
        report,
        cell,
        cells,
        macro_solution,
        micro,
    })
}

/// Numeric rows only, so repeated runs compare byte for byte.
fn write_report_csv(report: &ConvergenceReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::cell::csv_err)?;
    w.write_record([
        "epsilon", "err1", "err2", "corr_err1", "corr_err2", "micro_dofs", "vnorm", "fnorm", "ratio", "ritz_min",
    ])
    .map_err(crate::cell::csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.epsilon.to_string(),
            r.error[0].to_string(),
            r.error[1].to_string(),
            r.corrected_error[0].to_string(),
            r.corrected_error[1].to_string(),
            r.micro_dofs.to_string(),
            r.apriori.vnorm.to_string(),
            r.apriori.fnorm.to_string(),
            r.apriori.ratio.to_string(),
            r.apriori.ritz_min.to_string(),
        ])
        .map_err(crate::cell::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn report_text(report: &ConvergenceReport, seconds: f64) -> String {
    let e = &report.effective;
    let mut s = String::new();
    let _ = writeln!(s, "wall time: {seconds:.2} s");
    for p in 0..2 {
        let a = e.a_eff[p];
        let _ = writeln!(
            s,
            "phase {}: vol {:.6}  Aeff [[{:.6e}, {:.6e}], [{:.6e}, {:.6e}]]  B [{:.3e}, {:.3e}]  c {:.6}",
            p + 1, e.vol[p], a[0][0], a[0][1], a[1][0], a[1][1], e.b[p][0], e.b[p][1], e.c[p]
        );
    }
    let _ = writeln!(s, "d = {:.6}", e.d);
    let _ = writeln!(s, "\n{:>8} {:>11} {:>11} {:>11} {:>11} {:>8} {:>8} {:>8}", "eps", "err1", "err2", "corr1", "corr2", "dofs", "ratio", "secs");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:>8.5} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>8} {:>8.4} {:>8.2}",
            r.epsilon, r.error[0], r.error[1], r.corrected_error[0], r.corrected_error[1], r.micro_dofs, r.apriori.ratio, r.seconds
        );
    }
    let f = &report.flags;
    let mark = |b: bool| if b { "PASS" } else { "FAIL" };
    let _ = writeln!(s, "\ncoercive (Ritz > 0)        {}", mark(f.coercive));
    let _ = writeln!(s, "a priori ratio band <= 2   {}", mark(f.apriori_band));
    let _ = writeln!(s, "a priori bound             {}", mark(f.apriori_bound));
    let _ = writeln!(s, "phase 1 error decreasing   {}", mark(f.monotone[0]));
    let _ = writeln!(s, "phase 2 error decreasing   {}", mark(f.monotone[1]));
    let _ = writeln!(s, "corrector at smallest eps  {}", mark(f.corrector_not_worse));
    for w in &report.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::geometry::{build_micro_mesh, GeometrySpec};
    use rand::{Rng, SeedableRng};

    const LAM: GeometrySpec = GeometrySpec::Laminate { theta: 0.5 };

    fn micro() -> MicroMesh {
        build_micro_mesh(&LAM, 4, 0.25, 1024).unwrap()
    }

    #[test]
    fn interpolation_reproduces_constants_and_linears() {
        let mesh = Mesh::structured_square(8);
        let ones = vec![1.0; mesh.num_vertices()];
        let x1: Vec<f64> = mesh.vertices.iter().map(|v| v[0]).collect();
        let x2: Vec<f64> = mesh.vertices.iter().map(|v| v[1]).collect();
        let mm = micro();
        let c = interpolate_macro_on_micro(&mesh, [&ones, &ones], &mm).unwrap();
        assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let l = interpolate_macro_on_micro(&mesh, [&x1, &x2], &mm).unwrap();
        for (v, x) in mm.mesh.vertices.iter().enumerate() {
            let want = if mm.mesh.vertex_phase[v] == Phase::One { x[0] } else { x[1] };
            assert!((l[v] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_at_macro_nodes_is_exact() {
        let macro_mesh = Mesh::structured_square(4);
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let u: Vec<f64> = (0..macro_mesh.num_vertices()).map(|_| rng.random()).collect();
        let mm = micro();
        let got = interpolate_macro_on_micro(&macro_mesh, [&u, &u], &mm).unwrap();
        for (v, x) in mm.mesh.vertices.iter().enumerate() {
            if let Some(k) = macro_mesh.vertices.iter().position(|m| (m[0] - x[0]).abs() < 1e-12 && (m[1] - x[1]).abs() < 1e-12) {
                assert_eq!(got[v], u[k]);
            }
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let mesh = Mesh::structured_square(2);
        let loc = Locator::new(&mesh);
        let (t, _) = loc.locate([0.5, 0.5], None).unwrap();
        let owners: Vec<usize> = (0..mesh.triangles.len())
            .filter(|&k| mesh.triangles[k].iter().any(|&v| mesh.vertices[v] == [0.5, 0.5]))
            .collect();
        assert_eq!(t, owners[0]);
        assert!(loc.locate([1.5, 0.5], None).is_none());
    }

    #[test]
    fn l2_error_identities() {
        let mm = micro();
        let m = &mm.mesh;
        let u = vec![1.0; m.num_vertices()];
        assert_eq!(l2_errors(m, &u, &u), [0.0, 0.0]);
        // ‖u‖ = 1 on a phase of area 0.5
        let s = 2f64.sqrt();
        let reference = vec![s; m.num_vertices()];
        let shifted: Vec<f64> = reference.iter().map(|v| v + 0.1).collect();
        for e in l2_errors(m, &shifted, &reference) {
            assert!((e - 0.1 * 0.5f64.sqrt()).abs() < 1e-12, "{e}");
        }
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let mut field = || (0..m.num_vertices()).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
        let (a, b, c) = (field(), field(), field());
        // against a zero reference the floor makes the metric a scaled absolute norm
        let zero = vec![0.0; m.num_vertices()];
        let abs = |x: &[f64], y: &[f64]| {
            let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
            l2_errors(m, &d, &zero)
        };
        let (ab, bc, ac) = (abs(&a, &b), abs(&b, &c), abs(&a, &c));
        for p in 0..2 {
            assert!(ac[p] <= (ab[p] + bc[p]) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn corrector_terms_bounded_by_epsilon() {
        let cfg = parse_config("[cell]\nn = 16\n[macro]\nn = 8\n[micro]\nn = 4\nepsilon = 1/4, 1/8\n").unwrap();
        let coeffs = cfg.coefficients.build().unwrap();
        let cell = build_unit_cell_mesh(&cfg.geometry, cfg.cell_n).unwrap();
        let cells = solve_all(&cell, &coeffs, &(&cfg).into()).unwrap();
        let eff = compute_effective(&cell, &cells, &coeffs, cfg.convention, 1e-12).unwrap();
        let mesh = Mesh::structured_square(8);
        let g = [compute_g(&coeffs.source[0], eff.vol[0]), compute_g(&coeffs.source[1], eff.vol[1])];
        let sol = solve_macro(&assemble_macro(&mesh, &eff, [&g[0], &g[1]]).unwrap(), &cfg.solver).unwrap();
        let cell_max = cells.xi.iter().flatten().chain(cells.gamma.iter()).flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut grad_max = 0.0f64;
        for t in 0..mesh.triangles.len() {
            let (gr, _) = p1_gradients(&mesh, t);
            for u in &sol.u {
                for k in 0..2 {
                    grad_max = grad_max.max((0..3).map(|a| gr[a][k] * u[mesh.triangles[t][a]]).sum::<f64>().abs());
                }
            }
        }
        let jump_max = sol.u[0].iter().zip(&sol.u[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        for eps in [0.25, 0.125] {
            let mm = build_micro_mesh(&cfg.geometry, 4, eps, 1024).unwrap();
            let rec = reconstruct_corrector(&sol, &cell, &cells, &mm).unwrap();
            let plain = interpolate_macro_on_micro(&mesh, [&sol.u[0], &sol.u[1]], &mm).unwrap();
            let dev = rec.iter().zip(&plain).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            // three cell terms, each bounded by the product of maxima
            assert!(dev <= 3.0 * eps * cell_max * grad_max.max(jump_max) + 1e-12);
            assert!(dev > 0.0);
        }
    }

    #[test]
    fn isotropic_uncoupled_corrector_only_moves_through_the_normal_direction() {
        let mut cfg = parse_config("[cell]\nn = 16\n[coefficients]\nalpha = 0\n").unwrap();
        cfg.compat_tol = 1e-8;
        let coeffs = cfg.coefficients.build().unwrap();
        let cell = build_unit_cell_mesh(&cfg.geometry, 16).unwrap();
        let cells = solve_all(&cell, &coeffs, &(&cfg).into()).unwrap();
        for p in Phase::BOTH {
            assert!(cells.xi(p, 0).iter().all(|v| v.abs() < 1e-10));
            assert!(cells.gamma(p).iter().all(|v| v.abs() < 1e-10));
            assert!(cells.xi(p, 1).iter().any(|v| v.abs() > 1e-3));
        }
    }

    #[test]
    fn zero_source_run_is_zero_everywhere() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "[cell]\nn = 16\n[macro]\nn = 8\n[micro]\nn = 4\nepsilon = 1/2, 1/4\n[coefficients]\nf1 = 0\nf2 = 0\n[output]\ndir = {}\n",
            dir.path().display()
        );
        let art = run_all(&parse_config(&text).unwrap()).unwrap();
        assert!(art.macro_solution.u.iter().flatten().all(|v| *v == 0.0));
        for r in &art.report.rows {
            assert_eq!(r.error, [0.0, 0.0]);
            assert_eq!(r.corrected_error, [0.0, 0.0]);
        }
        for name in ["resolved_config.txt", "effective.csv", "macro_u1.csv", "macro_u2.csv", "report.csv", "report.txt", "apriori.csv", "micro_u_1_4.csv"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
    }

    #[test]
    fn failing_stage_is_tagged() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("[cell]\nn = 16\n[coefficients]\nalpha = 0.1 + cos(2*pi*y1)\n[output]\ndir = {}\n", dir.path().display());
        let err = run_all(&parse_config(&text).unwrap()).err().unwrap();
        assert_eq!(err.code(), "COMPAT_VIOLATION");
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(err, Error::Stage { stage: "cell", .. }));
    }
}
