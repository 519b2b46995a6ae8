//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use barrier_hom::cell::{solve_all, CellOptions, CellSolutions};
use barrier_hom::coefficients::{CoefficientSet, TensorField};
use barrier_hom::config::parse_config;
use barrier_hom::effective::{compute_effective, BConvention, EffectiveCoefficients};
use barrier_hom::expr::{parse_expression, Expression, Symbol};
use barrier_hom::geometry::{build_unit_cell_mesh, GeometrySpec, Mesh, Phase, UnitCellMesh};
use barrier_hom::harness::run_all;
use barrier_hom::macro_solver::{assemble_macro, solve_macro};
use barrier_hom::fem::SolverOptions;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

const LAMINATE: GeometrySpec = GeometrySpec::Laminate { theta: 0.5 };

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cell_expr(s: &str) -> Expression {
    parse_expression(s, Symbol::CELL).unwrap()
}

fn coeffs(a1: TensorField, a2: TensorField, alpha: &str) -> CoefficientSet {
    CoefficientSet {
        conductivity: [a1, a2],
        reaction: [Expression::constant(1.0), Expression::constant(1.0)],
        alpha: cell_expr(alpha),
        source: [Expression::constant(1.0), parse_expression("sin(pi*x1)", Symbol::MACRO).unwrap()],
    }
}

fn cell_run(
    g: &GeometrySpec,
    n: usize,
    c: &CoefficientSet,
    convention: BConvention,
) -> (UnitCellMesh, CellSolutions, EffectiveCoefficients) {
    let cell = build_unit_cell_mesh(g, n).unwrap();
    let sols = solve_all(&cell, c, &CellOptions::default()).unwrap();
    let eff = compute_effective(&cell, &sols, c, convention, 1e-12).unwrap();
    (cell, sols, eff)
}

fn max_abs(m: [[f64; 2]; 2]) -> f64 {
    m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn laminate_exactness() -> Outcome {
    let start = Instant::now();
    let c = coeffs(TensorField::identity(), TensorField::identity(), "cos(2*pi*y1)");
    let (_, _, eff) = cell_run(&LAMINATE, 64, &c, BConvention::RemarkConsistent);
    let secs = start.elapsed().as_secs_f64();
    let target = [[0.5, 0.0], [0.0, 0.0]];
    let dev = (0..2)
        .map(|p| max_abs([0, 1].map(|i| [0, 1].map(|j| eff.a_eff[p][i][j] - target[i][j]))))
        .fold(0.0, f64::max);
    let vol = eff.vol.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    outcome(
        dev <= 1e-8 && vol <= 1e-12 && secs < 10.0,
        format!("max |Aeff - diag(0.5,0)| = {dev:.2e}, |vol - 0.5| = {vol:.2e}, {secs:.2} s"),
    )
}

fn inclusion_insulation() -> Outcome {
    let start = Instant::now();
    let g = GeometrySpec::Disk { radius: 0.25, n_seg: 64 };
    // zero interface mean on the circle
    let c = coeffs(TensorField::identity(), TensorField::identity(), "sin(2*pi*y1)");
    let (_, _, eff) = cell_run(&g, 32, &c, BConvention::RemarkConsistent);
    let secs = start.elapsed().as_secs_f64();
    let norm = max_abs(eff.a_eff[1]);
    outcome(norm <= 1e-6 && secs < 30.0, format!("||Aeff[2]||_inf = {norm:.2e}, {secs:.2} s"))
}

fn compatibility_gate() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("compat.cfg");
    std::fs::write(
        &cfg,
        format!("[coefficients]\nalpha = 0.1 + cos(2*pi*y1)\n[output]\ndir = {}\n", dir.path().join("out").display()),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_barrier-hom")).arg("cell").arg(&cfg).output().unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    let code = out.status.code();
    outcome(
        code == Some(2) && stderr.contains("COMPAT_VIOLATION") && stderr.contains("compatibility condition"),
        format!("exit {code:?}, stderr: {}", stderr.trim()),
    )
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// ∫_Σ α u over the phase-`phase` trace, five Gauss points per interface edge.
fn interface_oracle(cell: &UnitCellMesh, alpha: &Expression, u: &[f64], phase: Phase) -> f64 {
    let m = &cell.mesh;
    let mut s = 0.0;
    for e in &m.interface {
        let [a, b] = e.side1.map(|v| m.vertices[v]);
        let dofs = if phase == Phase::One { e.side1 } else { e.side2 };
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        for (x, w) in GAUSS5 {
            let t = 0.5 * (x + 1.0);
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let val = (1.0 - t) * u[dofs[0]] + t * u[dofs[1]];
            s += 0.5 * len * w * alpha.eval(p).unwrap() * val;
        }
    }
    s
}

fn symmetric_convection() -> Outcome {
    let a1 = TensorField::constant([[2.0, 0.5], [0.5, 1.0]]);
    let a2 = TensorField::constant([[1.0, 0.2], [0.2, 2.0]]);
    let c = coeffs(a1, a2, "cos(2*pi*y1)");
    let cell = build_unit_cell_mesh(&LAMINATE, 64).unwrap();
    let sols = solve_all(&cell, &c, &CellOptions::default()).unwrap();
    let remark = compute_effective(&cell, &sols, &c, BConvention::RemarkConsistent, 1e-12).unwrap();
    let literal = compute_effective(&cell, &sols, &c, BConvention::PaperLiteral, 1e-12).unwrap();
    let b_norm = remark.b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut literal_gap = 0.0f64;
    for p in Phase::BOTH {
        for k in 0..2 {
            let oracle = 2.0 * interface_oracle(&cell, &c.alpha, sols.xi(p, k), p);
            literal_gap = literal_gap.max((literal.b[p.index()][k] - oracle).abs());
        }
    }
    outcome(
        b_norm <= 1e-6 && literal_gap <= 1e-6,
        format!("remark-consistent max|B| = {b_norm:.2e}, literal |b - 2 int alpha xi| = {literal_gap:.2e}"),
    )
}

fn gamma_exact(phase: Phase, y: [f64; 2]) -> f64 {
    let scale = 2.0 * PI * (PI / 2.0).sinh();
    let c = (2.0 * PI * y[0]).cos();
    match phase {
        Phase::One => -c * (2.0 * PI * (y[1] - 0.25)).cosh() / scale,
        Phase::Two => c * (2.0 * PI * (y[1] - 0.75)).cosh() / scale,
    }
}

/// L² distance between a nodal P1 field and a function over one phase, 7-point rule.
fn l2_phase(mesh: &Mesh, u: &[f64], phase: Phase, f: impl Fn([f64; 2]) -> f64) -> f64 {
    // Dunavant degree-5 rule in barycentric coordinates
    let (a1, b1, w1) = (0.059_715_871_789_77, 0.470_142_064_105_115, 0.132_394_152_788_506);
    let (a2, b2, w2) = (0.797_426_985_353_087, 0.101_286_507_323_456, 0.125_939_180_544_827);
    let mut pts = vec![([1.0 / 3.0; 3], 0.225)];
    for (a, b, w) in [(a1, b1, w1), (a2, b2, w2)] {
        pts.extend([([a, b, b], w), ([b, a, b], w), ([b, b, a], w)]);
    }
    let mut s = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.triangle_phase[t] != phase {
            continue;
        }
        let v = tri.map(|k| mesh.vertices[k]);
        let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
        for (l, w) in &pts {
            let x = [0, 1].map(|a| l[0] * v[0][a] + l[1] * v[1][a] + l[2] * v[2][a]);
            let uh = l[0] * u[tri[0]] + l[1] * u[tri[1]] + l[2] * u[tri[2]];
            s += area * w * (uh - f(x)).powi(2);
        }
    }
    s.sqrt()
}

fn gamma_oracle() -> Outcome {
    let c = coeffs(TensorField::identity(), TensorField::identity(), "cos(2*pi*y1)");
    let (cell, sols, eff) = cell_run(&LAMINATE, 64, &c, BConvention::RemarkConsistent);
    let e1 = l2_phase(&cell.mesh, sols.gamma(Phase::One), Phase::One, |y| gamma_exact(Phase::One, y));
    let e2 = l2_phase(&cell.mesh, sols.gamma(Phase::Two), Phase::Two, |y| gamma_exact(Phase::Two, y));
    let d_exact = -1.0 / ((PI / 2.0).tanh() * PI);
    let d_err = (eff.d - d_exact).abs();
    outcome(
        e1 <= 1e-4 && e2 <= 1e-4 && d_err <= 1e-4,
        format!("L2(gamma1) = {e1:.2e}, L2(gamma2) = {e2:.2e}, |d - d_exact| = {d_err:.2e} (d = {:.6}, exact {d_exact:.6})", eff.d),
    )
}

fn energy_flux_identity() -> Outcome {
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    let mut random_spd = || {
        let t: f64 = rng.random::<f64>() * PI;
        let l = [0.5 + 2.5 * rng.random::<f64>(), 0.5 + 2.5 * rng.random::<f64>()];
        let (c, s) = (t.cos(), t.sin());
        let a = [
            [l[0] * c * c + l[1] * s * s, (l[0] - l[1]) * c * s],
            [(l[0] - l[1]) * c * s, l[0] * s * s + l[1] * c * c],
        ];
        TensorField::constant(a)
    };
    let mut gap = 0.0f64;
    let mut asym = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for _ in 0..5 {
        let c = coeffs(random_spd(), random_spd(), "cos(2*pi*y1)");
        let (_, _, eff) = cell_run(&LAMINATE, 32, &c, BConvention::RemarkConsistent);
        for p in 0..2 {
            let (a, f) = (eff.a_eff[p], eff.a_eff_flux[p]);
            for i in 0..2 {
                for j in 0..2 {
                    gap = gap.max((a[i][j] - f[i][j]).abs());
                }
            }
            asym = asym.max((a[0][1] - a[1][0]).abs());
            let (tr, det) = (a[0][0] + a[1][1], a[0][0] * a[1][1] - 0.5 * (a[0][1] + a[1][0]).powi(2) + 0.25 * (a[0][1] - a[1][0]).powi(2));
            min_eig = min_eig.min(0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt());
        }
    }
    outcome(
        gap <= 1e-8 && asym <= 1e-10 && min_eig >= -1e-10,
        format!("energy/flux gap {gap:.2e}, asymmetry {asym:.2e}, min eigenvalue {min_eig:.3e}"),
    )
}

fn manufactured_macro() -> Outcome {
    let id = [[1.0, 0.0], [0.0, 1.0]];
    let eff = EffectiveCoefficients::manual([id, id], [[0.0; 2]; 2], 0.0, [1.0, 1.0]);
    let g = parse_expression("(2*pi*pi + 1)*sin(pi*x1)*sin(pi*x2)", Symbol::MACRO).unwrap();
    let exact = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let opts = SolverOptions { tol: 1e-12, ..Default::default() };
    let errs: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let mesh = Mesh::structured_square(n);
            let s = solve_macro(&assemble_macro(&mesh, &eff, [&g, &g]).unwrap(), &opts).unwrap();
            // the square mesh carries phase 1 tags only
            l2_phase(&mesh, &s.u[0], Phase::One, exact).max(l2_phase(&mesh, &s.u[1], Phase::One, exact))
        })
        .collect();
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    outcome(
        ratios.iter().all(|r| *r >= 3.5),
        format!("L2 errors {:.3e}, {:.3e}, {:.3e}; ratios {:.2}, {:.2}", errs[0], errs[1], errs[2], ratios[0], ratios[1]),
    )
}

fn pipeline_config(dir: &Path) -> String {
    format!("[micro]\nn = 8\nepsilon = 1/4, 1/8, 1/16\n[output]\ndir = {}\n", dir.display())
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "laminate exactness", laminate_exactness()),
        (2, "inclusion insulation", inclusion_insulation()),
        (3, "compatibility gate", compatibility_gate()),
        (4, "symmetric convection", symmetric_convection()),
        (5, "gamma oracle", gamma_oracle()),
        (6, "energy/flux identity", energy_flux_identity()),
    ];

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let start = Instant::now();
    let first = run_all(&parse_config(&pipeline_config(dirs[0].path())).unwrap()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rep = &first.report;

    let rows = &rep.rows;
    let ritz: Vec<f64> = rows.iter().map(|r| r.apriori.ritz_min).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.apriori.ratio).collect();
    let converged = first.micro.iter().all(|s| s.report.residual <= 1e-10);
    let band = ratios.iter().cloned().fold(f64::MIN, f64::max) / ratios.iter().cloned().fold(f64::MAX, f64::min);
    results.push((
        7,
        "micro coercivity and a priori band",
        outcome(
            converged && ritz.iter().all(|r| *r > 0.0) && band <= 2.0,
            format!("Ritz min {ritz:?}, ratios {ratios:.4?}, band {band:.3}"),
        ),
    ));

    let decreasing = |p: usize| rows.windows(2).all(|w| w[1].error[p] < w[0].error[p]);
    let last = rows.last().unwrap();
    let corr_ok = (0..2).all(|p| last.corrected_error[p] <= last.error[p]);
    let err: Vec<[f64; 2]> = rows.iter().map(|r| r.error).collect();
    results.push((
        8,
        "homogenization convergence",
        outcome(
            decreasing(0) && decreasing(1) && corr_ok && secs < 300.0,
            format!(
                "errors {err:?}; corrected at 1/16 {:?} vs {:?}; {secs:.1} s",
                last.corrected_error, last.error
            ),
        ),
    ));

    results.push((9, "manufactured macro convergence", manufactured_macro()));

    run_all(&parse_config(&pipeline_config(dirs[1].path())).unwrap()).unwrap();
    let mut differing = Vec::new();
    let mut compared = 0;
    for entry in std::fs::read_dir(dirs[0].path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap();
            compared += 1;
            if std::fs::read(&path).unwrap() != std::fs::read(dirs[1].path().join(name)).unwrap_or_default() {
                differing.push(name.to_string_lossy().into_owned());
            }
        }
    }
    results.push((
        10,
        "determinism",
        outcome(differing.is_empty() && compared > 0, format!("{compared} CSV files compared, differing: {differing:?}")),
    ));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {name:<36} {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
