//! P1 assembly on [`Mesh`]. Volume integrals use the edge-midpoint rule
//! (exact for quadratics); interface integrals use two Gauss points per edge.

use super::sparse::{SparseMatrix, TripletBuilder};
use crate::coefficients::TensorField;
use crate::error::Result;
use crate::expr::Expression;
use crate::geometry::{Mesh, Phase};

/// Physical edge midpoints of triangle `t`.
pub fn midpoints(mesh: &Mesh, t: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.triangles[t].map(|v| mesh.vertices[v]);
    let mid = |p: [f64; 2], q: [f64; 2]| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
    [mid(a, b), mid(b, c), mid(c, a)]
}

/// P1 shape values at the three edge midpoints, row = point, column = local vertex.
const MIDPOINT_SHAPES: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

/// Constant gradients of the three local hat functions and the (positive) area.
pub fn p1_gradients(mesh: &Mesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = mesh.triangles[t].map(|v| mesh.vertices[v]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let g = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    (g, 0.5 * det.abs())
}

/// Quadrature mean of the tensor over triangle `t`.
pub fn element_tensor(mesh: &Mesh, a: &TensorField, t: usize) -> Result<[[f64; 2]; 2]> {
    let mut m = [[0.0; 2]; 2];
    for x in midpoints(mesh, t) {
        let v = a.eval(mesh.coefficient_point(x))?;
        for r in 0..2 {
            for s in 0..2 {
                m[r][s] += v[r][s] / 3.0;
            }
        }
    }
    Ok(m)
}

fn phase_triangles(mesh: &Mesh, phase: Phase) -> impl Iterator<Item = usize> + '_ {
    (0..mesh.triangles.len()).filter(move |&t| mesh.triangle_phase[t] == phase)
}

/// Kᵢⱼ = ∫ A∇φⱼ·∇φᵢ over the triangles of `phase`.
pub fn assemble_stiffness(mesh: &Mesh, a: &TensorField, phase: Phase) -> Result<SparseMatrix> {
    let mut b = TripletBuilder::with_capacity(mesh.num_vertices(), 9 * mesh.triangles.len());
    for t in phase_triangles(mesh, phase) {
        let (g, area) = p1_gradients(mesh, t);
        let at = element_tensor(mesh, a, t)?;
        let tri = mesh.triangles[t];
        let mut local = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                let flux = [
                    at[0][0] * g[q][0] + at[0][1] * g[q][1],
                    at[1][0] * g[q][0] + at[1][1] * g[q][1],
                ];
                local[p][q] = area * (flux[0] * g[p][0] + flux[1] * g[p][1]);
            }
        }
        // keep the assembled matrix bitwise symmetric for symmetric data
        if at[0][1] == at[1][0] {
            for p in 0..3 {
                for q in 0..p {
                    local[p][q] = local[q][p];
                }
            }
        }
        for p in 0..3 {
            for q in 0..3 {
                b.add(tri[p], tri[q], local[p][q]);
            }
        }
    }
    Ok(b.build())
}

/// Mᵢⱼ = ∫ c φⱼ φᵢ over `phase`.
pub fn assemble_mass(mesh: &Mesh, c: &Expression, phase: Phase) -> Result<SparseMatrix> {
    let mut b = TripletBuilder::with_capacity(mesh.num_vertices(), 9 * mesh.triangles.len());
    for t in phase_triangles(mesh, phase) {
        let (_, area) = p1_gradients(mesh, t);
        let tri = mesh.triangles[t];
        let mids = midpoints(mesh, t);
        let mut local = [[0.0; 3]; 3];
        for (k, x) in mids.iter().enumerate() {
            let w = area / 3.0 * c.eval(mesh.coefficient_point(*x))?;
            let s = MIDPOINT_SHAPES[k];
            for p in 0..3 {
                for q in 0..3 {
                    local[p][q] += w * (s[p] * s[q]);
                }
            }
        }
        for p in 0..3 {
            for q in 0..3 {
                b.add(tri[p], tri[q], local[p][q]);
            }
        }
    }
    Ok(b.build())
}

/// ∫ f φᵢ over `phase`, with `f` evaluated at physical coordinates.
pub fn assemble_source(mesh: &Mesh, f: &Expression, phase: Phase) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; mesh.num_vertices()];
    for t in phase_triangles(mesh, phase) {
        let (_, area) = p1_gradients(mesh, t);
        let tri = mesh.triangles[t];
        for (k, x) in midpoints(mesh, t).iter().enumerate() {
            let w = area / 3.0 * f.eval(*x)?;
            for p in 0..3 {
                rhs[tri[p]] += w * MIDPOINT_SHAPES[k][p];
            }
        }
    }
    Ok(rhs)
}

/// −∫ A eₖ·∇φᵢ over `phase` (right-hand side of the k-th corrector problem).
pub fn assemble_flux_load(mesh: &Mesh, a: &TensorField, phase: Phase, k: usize) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; mesh.num_vertices()];
    for t in phase_triangles(mesh, phase) {
        let (g, area) = p1_gradients(mesh, t);
        let at = element_tensor(mesh, a, t)?;
        let col = [at[0][k], at[1][k]];
        for (p, &v) in mesh.triangles[t].iter().enumerate() {
            rhs[v] -= area * (col[0] * g[p][0] + col[1] * g[p][1]);
        }
    }
    Ok(rhs)
}

/// ∫_Σ α [u][v] with the jump taken as side1 − side2.
pub fn assemble_interface_coupling(mesh: &Mesh, alpha: &Expression) -> Result<SparseMatrix> {
    let mut b = TripletBuilder::with_capacity(mesh.num_vertices(), 16 * mesh.interface.len());
    for q in mesh.interface_quadrature() {
        let w = q.weight * alpha.eval(mesh.coefficient_point(q.point))?;
        let dofs = [q.dofs1[0], q.dofs1[1], q.dofs2[0], q.dofs2[1]];
        let signs = [q.shape[0], q.shape[1], -q.shape[0], -q.shape[1]];
        for p in 0..4 {
            for r in 0..4 {
                b.add(dofs[p], dofs[r], w * (signs[p] * signs[r]));
            }
        }
    }
    Ok(b.build())
}

/// sign · ∫_Σ α φᵢ on the `phase` side of the interface.
pub fn assemble_interface_load(
    mesh: &Mesh,
    alpha: &Expression,
    phase: Phase,
    sign: f64,
) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; mesh.num_vertices()];
    for q in mesh.interface_quadrature() {
        let w = sign * q.weight * alpha.eval(mesh.coefficient_point(q.point))?;
        let dofs = match phase {
            Phase::One => q.dofs1,
            Phase::Two => q.dofs2,
        };
        rhs[dofs[0]] += w * q.shape[0];
        rhs[dofs[1]] += w * q.shape[1];
    }
    Ok(rhs)
}

/// ∫ (b·∇φⱼ) φᵢ over `phase` for a constant vector `b` (centred, no upwinding).
pub fn assemble_convection(mesh: &Mesh, b_vec: [f64; 2], phase: Phase) -> SparseMatrix {
    let mut b = TripletBuilder::with_capacity(mesh.num_vertices(), 9 * mesh.triangles.len());
    for t in phase_triangles(mesh, phase) {
        let (g, area) = p1_gradients(mesh, t);
        let tri = mesh.triangles[t];
        for q in 0..3 {
            let adv = b_vec[0] * g[q][0] + b_vec[1] * g[q][1];
            for p in 0..3 {
                b.add(tri[p], tri[q], adv * area / 3.0);
            }
        }
    }
    b.build()
}

/// Lumped mass of every vertex restricted to `phase` (row sums of the unit mass matrix).
pub fn lumped_mass(mesh: &Mesh, phase: Phase) -> Vec<f64> {
    let mut w = vec![0.0; mesh.num_vertices()];
    for t in phase_triangles(mesh, phase) {
        let (_, area) = p1_gradients(mesh, t);
        for &v in &mesh.triangles[t] {
            w[v] += area / 3.0;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, Symbol};
    use proptest::prelude::*;

    fn unit_square(n: usize) -> Mesh {
        Mesh::structured_square(n)
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_symmetric() {
        let mesh = unit_square(4);
        let a = TensorField::parse([["1 + 0.5*cos(2*pi*y1)", "0.2"], ["0.2", "2"]]).unwrap();
        let k = assemble_stiffness(&mesh, &a, Phase::One).unwrap();
        assert!(k.is_symmetric());
        for i in 0..k.dim() {
            assert!(k.row(i).map(|(_, v)| v).sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn mass_total_is_integral_of_coefficient() {
        let mesh = unit_square(6);
        let c = parse_expression("2 + x1*x2", Symbol::MACRO).unwrap();
        let m = assemble_mass(&mesh, &c, Phase::One).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        // ∫ (2 + x1 x2) = 2.25 exactly; the midpoint rule is exact for quadratics
        assert!((m.bilinear(&ones, &ones) - 2.25).abs() < 1e-13);
    }

    #[test]
    fn linear_field_energy_is_exact() {
        let mesh = unit_square(5);
        let k = assemble_stiffness(&mesh, &TensorField::identity(), Phase::One).unwrap();
        let u: Vec<f64> = mesh.vertices.iter().map(|x| 3.0 * x[0] - 2.0 * x[1]).collect();
        assert!((k.bilinear(&u, &u) - 13.0).abs() < 1e-12);
    }

    #[test]
    fn flux_load_matches_stiffness_times_coordinate() {
        let mesh = unit_square(4);
        let a = TensorField::parse([["2", "0.3"], ["0.1", "1"]]).unwrap();
        let k = assemble_stiffness(&mesh, &a, Phase::One).unwrap();
        for axis in 0..2 {
            let x: Vec<f64> = mesh.vertices.iter().map(|v| v[axis]).collect();
            let kx = k.mul_vec(&x);
            let load = assemble_flux_load(&mesh, &a, Phase::One, axis).unwrap();
            for i in 0..kx.len() {
                assert!((kx[i] + load[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convection_annihilates_constants() {
        let mesh = unit_square(4);
        let c = assemble_convection(&mesh, [1.0, -2.0], Phase::One);
        let ones = vec![1.0; mesh.num_vertices()];
        assert!(c.mul_vec(&ones).iter().all(|v| v.abs() < 1e-14));
        // ∫ b·∇x φ summed over all φ is b₁ |Ω|
        let x: Vec<f64> = mesh.vertices.iter().map(|v| v[0]).collect();
        assert!((c.bilinear(&ones, &x) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn lumped_mass_sums_to_area() {
        let mesh = unit_square(7);
        assert!((lumped_mass(&mesh, Phase::One).iter().sum::<f64>() - 1.0).abs() < 1e-13);
        assert_eq!(lumped_mass(&mesh, Phase::Two).iter().sum::<f64>(), 0.0);
    }

    proptest! {
        #[test]
        fn stiffness_of_symmetric_constant_tensor_is_psd(
            a11 in 0.5f64..3.0, a22 in 0.5f64..3.0, a12 in -0.4f64..0.4,
            u in proptest::collection::vec(-1.0f64..1.0, 16)
        ) {
            let mesh = unit_square(3);
            let a = TensorField::constant([[a11, a12], [a12, a22]]);
            let k = assemble_stiffness(&mesh, &a, Phase::One).unwrap();
            prop_assert!(k.is_symmetric());
            prop_assert!(k.bilinear(&u, &u) >= -1e-12);
        }
    }
}
