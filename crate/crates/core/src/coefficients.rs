//! Material data of the two-phase cell and the macroscopic sources.

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expression, Symbol};
use crate::geometry::{GeometrySpec, Phase};

/// 2×2 matrix of cell expressions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub entries: [[Expression; 2]; 2],
}

impl TensorField {
    pub fn identity() -> Self {
        Self::constant([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn constant(m: [[f64; 2]; 2]) -> Self {
        TensorField {
            entries: m.map(|row| row.map(Expression::constant)),
        }
    }

    /// Parses four entries `[[a11, a12], [a21, a22]]` in the cell scope.
    pub fn parse(texts: [[&str; 2]; 2]) -> Result<Self> {
        let mut rows = Vec::with_capacity(2);
        for row in texts {
            rows.push([
                parse_expression(row[0], Symbol::CELL)?,
                parse_expression(row[1], Symbol::CELL)?,
            ]);
        }
        let r1 = rows.pop().unwrap();
        let r0 = rows.pop().unwrap();
        Ok(TensorField { entries: [r0, r1] })
    }

    pub fn eval(&self, y: [f64; 2]) -> Result<[[f64; 2]; 2]> {
        Ok([
            [self.entries[0][0].eval(y)?, self.entries[0][1].eval(y)?],
            [self.entries[1][0].eval(y)?, self.entries[1][1].eval(y)?],
        ])
    }

    /// Structural symmetry: the off-diagonal trees are identical.
    pub fn is_symmetric(&self) -> bool {
        self.entries[0][1] == self.entries[1][0]
    }

    pub fn transpose(&self) -> Self {
        let e = &self.entries;
        TensorField {
            entries: [
                [e[0][0].clone(), e[1][0].clone()],
                [e[0][1].clone(), e[1][1].clone()],
            ],
        }
    }
}

/// All cell-periodic material data and the macro sources.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    /// A₁, A₂.
    pub conductivity: [TensorField; 2],
    /// a₁, a₂.
    pub reaction: [Expression; 2],
    /// Barrier resistivity α on Σ.
    pub alpha: Expression,
    /// f₁, f₂ (functions of x).
    pub source: [Expression; 2],
}

impl CoefficientSet {
    pub fn conductivity(&self, phase: Phase) -> &TensorField {
        &self.conductivity[phase.index()]
    }

    pub fn reaction(&self, phase: Phase) -> &Expression {
        &self.reaction[phase.index()]
    }

    pub fn source(&self, phase: Phase) -> &Expression {
        &self.source[phase.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Ellipticity constants mᵢ (smallest eigenvalue of sym Aᵢ).
    pub m: [f64; 2],
    /// Bounds Mᵢ (largest singular value of Aᵢ).
    pub big_m: [f64; 2],
    /// ηᵢ = min aᵢ.
    pub eta: [f64; 2],
    /// Non-fatal findings such as periodicity mismatches.
    pub warnings: Vec<String>,
}

/// Smallest eigenvalue of the symmetric part of a 2×2 matrix.
pub fn min_sym_eigenvalue(a: [[f64; 2]; 2]) -> f64 {
    let p = a[0][0];
    let q = a[1][1];
    let r = 0.5 * (a[0][1] + a[1][0]);
    0.5 * (p + q) - (0.25 * (p - q) * (p - q) + r * r).sqrt()
}

/// Largest singular value of a 2×2 matrix.
pub fn max_singular_value(a: [[f64; 2]; 2]) -> f64 {
    // eigenvalues of AᵀA
    let p = a[0][0] * a[0][0] + a[1][0] * a[1][0];
    let q = a[0][1] * a[0][1] + a[1][1] * a[1][1];
    let r = a[0][0] * a[0][1] + a[1][0] * a[1][1];
    (0.5 * (p + q) + (0.25 * (p - q) * (p - q) + r * r).sqrt()).sqrt()
}

/// Samples Aᵢ and aᵢ at the centres of a `grid_n`×`grid_n` lattice restricted to each phase.
pub fn validate_coefficients(
    c: &CoefficientSet,
    geometry: &GeometrySpec,
    grid_n: usize,
) -> Result<ValidationReport> {
    if grid_n < 8 {
        return Err(Error::Geometry(format!("validation grid {grid_n} below 8")));
    }
    let mut m = [f64::INFINITY; 2];
    let mut big_m = [0.0f64; 2];
    let mut eta = [f64::INFINITY; 2];
    let h = 1.0 / grid_n as f64;
    for j in 0..grid_n {
        for i in 0..grid_n {
            let y = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            let k = geometry.phase_at(y).index();
            let a = c.conductivity[k].eval(y)?;
            m[k] = m[k].min(min_sym_eigenvalue(a));
            big_m[k] = big_m[k].max(max_singular_value(a));
            eta[k] = eta[k].min(c.reaction[k].eval(y)?);
        }
    }
    for phase in Phase::BOTH {
        let k = phase.index();
        // a grid too coarse to hit a thin phase leaves it unsampled
        if m[k].is_infinite() {
            return Err(Error::Geometry(format!(
                "validation grid {grid_n} has no sample in phase {}",
                phase.number()
            )));
        }
        if m[k] <= 0.0 {
            return Err(Error::Ellipticity {
                phase: phase.number(),
                min_eig: m[k],
            });
        }
        if eta[k] <= 0.0 {
            return Err(Error::Positivity {
                phase: phase.number(),
                min: eta[k],
            });
        }
    }
    let warnings = periodicity_warnings(c, grid_n)?;
    Ok(ValidationReport {
        m,
        big_m,
        eta,
        warnings,
    })
}

fn periodicity_warnings(c: &CoefficientSet, grid_n: usize) -> Result<Vec<String>> {
    let mut fields: Vec<(String, &Expression)> = Vec::new();
    for (k, t) in c.conductivity.iter().enumerate() {
        for r in 0..2 {
            for s in 0..2 {
                fields.push((format!("A{}[{}{}]", k + 1, r + 1, s + 1), &t.entries[r][s]));
            }
        }
    }
    fields.push(("a1".into(), &c.reaction[0]));
    fields.push(("a2".into(), &c.reaction[1]));
    fields.push(("alpha".into(), &c.alpha));
    let mut out = Vec::new();
    for (name, e) in fields {
        let mut worst = 0.0f64;
        for i in 0..=grid_n {
            let s = i as f64 / grid_n as f64;
            worst = worst.max((e.eval([0.0, s])? - e.eval([1.0, s])?).abs());
            worst = worst.max((e.eval([s, 0.0])? - e.eval([s, 1.0])?).abs());
        }
        if worst > 1e-10 {
            out.push(format!("{name} is not Y-periodic (edge mismatch {worst:e})"));
        }
    }
    Ok(out)
}

/// Sign and mean information about α on Σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaDiagnostics {
    pub mean_on_sigma: f64,
    /// Minimum of α over samples where α > 0 (estimate of α₀).
    pub alpha_plus_min_on_support: f64,
    /// Supremum of max(−α, 0) over samples.
    pub alpha_minus_sup: f64,
}

/// Mean of α over the exact interface by composite two-point Gauss quadrature
/// (`quad_n` points per component), with sign splits sampled densely.
pub fn alpha_diagnostics(
    alpha: &Expression,
    geometry: &GeometrySpec,
    quad_n: usize,
) -> Result<AlphaDiagnostics> {
    let panels = (quad_n / 2).max(1);
    let g = 0.5 / 3f64.sqrt();
    let mut integral = 0.0;
    let mut length = 0.0;
    let mut plus_min = f64::INFINITY;
    let mut minus_sup = 0.0f64;
    let mut sample = |v: f64| {
        if v > 0.0 {
            plus_min = plus_min.min(v);
        }
        minus_sup = minus_sup.max((-v).max(0.0));
    };
    for curve in geometry.interface_components() {
        let h = 1.0 / panels as f64;
        for p in 0..panels {
            for s in [(p as f64 + 0.5 - g) * h, (p as f64 + 0.5 + g) * h] {
                let (y, jac) = curve(s);
                let v = alpha.eval(y)?;
                integral += 0.5 * h * jac * v;
                length += 0.5 * h * jac;
                sample(v);
            }
        }
        let dense = 64 * panels;
        for i in 0..=dense {
            let (y, _) = curve(i as f64 / dense as f64);
            sample(alpha.eval(y)?);
        }
    }
    Ok(AlphaDiagnostics {
        mean_on_sigma: integral / length,
        alpha_plus_min_on_support: if plus_min.is_finite() { plus_min } else { 0.0 },
        alpha_minus_sup: minus_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;
    use rand::{Rng, SeedableRng};

    fn cell(s: &str) -> Expression {
        parse_expression(s, Symbol::CELL).unwrap()
    }

    fn set_with(a1: TensorField, a2: TensorField) -> CoefficientSet {
        CoefficientSet {
            conductivity: [a1, a2],
            reaction: [Expression::constant(1.0), Expression::constant(1.0)],
            alpha: cell("cos(2*pi*y1)"),
            source: [Expression::constant(1.0), Expression::constant(0.0)],
        }
    }

    const LAM: GeometrySpec = GeometrySpec::Laminate { theta: 0.5 };

    #[test]
    fn identity_coefficients() {
        let c = set_with(TensorField::identity(), TensorField::identity());
        let r = validate_coefficients(&c, &LAM, 16).unwrap();
        assert_eq!(r.m, [1.0, 1.0]);
        assert_eq!(r.big_m, [1.0, 1.0]);
        assert_eq!(r.eta, [1.0, 1.0]);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn diagonal_eigenvalues() {
        let c = set_with(
            TensorField::constant([[2.0, 0.0], [0.0, 0.5]]),
            TensorField::identity(),
        );
        let r = validate_coefficients(&c, &LAM, 16).unwrap();
        assert_eq!(r.m[0], 0.5);
        assert_eq!(r.big_m[0], 2.0);
    }

    #[test]
    fn non_symmetric_tensor_against_dense_eigensolve() {
        let a1 = TensorField::parse([["1", "y1"], ["0", "1"]]).unwrap();
        let c = set_with(a1.clone(), TensorField::identity());
        let r = validate_coefficients(&c, &LAM, 64).unwrap();
        // brute force over the same sample points with a dense solver
        let mut m_ref = f64::INFINITY;
        let mut big_ref = 0.0f64;
        let h = 1.0 / 64.0;
        for j in 0..64 {
            for i in 0..64 {
                let y = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                if LAM.phase_at(y) != Phase::One {
                    continue;
                }
                let a = a1.eval(y).unwrap();
                let m = Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]);
                let sym = (m + m.transpose()) * 0.5;
                m_ref = m_ref.min(sym.symmetric_eigenvalues().min());
                big_ref = big_ref.max(m.singular_values().max());
            }
        }
        assert!((r.m[0] - m_ref).abs() < 1e-12);
        assert!((r.big_m[0] - big_ref).abs() < 1e-12);
        // closed forms at random points
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let y = [rng.random::<f64>(), rng.random::<f64>()];
            let a = a1.eval(y).unwrap();
            let m = Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]);
            let sym = (m + m.transpose()) * 0.5;
            assert!((min_sym_eigenvalue(a) - sym.symmetric_eigenvalues().min()).abs() < 1e-12);
            assert!((max_singular_value(a) - m.singular_values().max()).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_gives_identical_bounds() {
        let a1 = TensorField::parse([["2 + 0.5*sin(2*pi*y1)", "0.3*y2"], ["-0.2", "1.5"]]).unwrap();
        let c = set_with(a1.clone(), TensorField::identity());
        let ct = set_with(a1.transpose(), TensorField::identity());
        let r = validate_coefficients(&c, &LAM, 32).unwrap();
        let rt = validate_coefficients(&ct, &LAM, 32).unwrap();
        assert_eq!(r.m, rt.m);
        assert!((r.big_m[0] - rt.big_m[0]).abs() < 1e-14);
    }

    #[test]
    fn ellipticity_and_positivity_failures() {
        let c = set_with(
            TensorField::constant([[1.0, 0.0], [0.0, -0.1]]),
            TensorField::identity(),
        );
        assert!(matches!(
            validate_coefficients(&c, &LAM, 16),
            Err(Error::Ellipticity { phase: 1, .. })
        ));
        let mut c = set_with(TensorField::identity(), TensorField::identity());
        c.reaction[1] = cell("y1 - 0.5");
        assert!(matches!(
            validate_coefficients(&c, &LAM, 16),
            Err(Error::Positivity { phase: 2, .. })
        ));
        assert!(validate_coefficients(&c, &LAM, 4).is_err());
    }

    #[test]
    fn periodicity_mismatch_is_a_warning() {
        let mut c = set_with(TensorField::identity(), TensorField::identity());
        c.reaction[0] = cell("1 + y1");
        let r = validate_coefficients(&c, &LAM, 16).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].starts_with("a1"));
    }

    #[test]
    fn cosine_mean_and_split() {
        let d = alpha_diagnostics(&cell("cos(2*pi*y1)"), &LAM, 16).unwrap();
        assert!(d.mean_on_sigma.abs() < 1e-12);
        assert!((d.alpha_minus_sup - 1.0).abs() < 1e-6);
        let shifted = alpha_diagnostics(&cell("0.1 + cos(2*pi*y1)"), &LAM, 16).unwrap();
        assert!((shifted.mean_on_sigma - 0.1).abs() < 1e-12);
    }

    #[test]
    fn minus_sup_against_dense_sampling() {
        let alpha = cell("cos(2*pi*y1) - 0.3*sin(2*pi*y2)");
        let geo = GeometrySpec::Disk {
            radius: 0.3,
            n_seg: 32,
        };
        let d = alpha_diagnostics(&alpha, &geo, 32).unwrap();
        let mut sup = 0.0f64;
        for i in 0..200_000 {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / 200_000.0;
            let y = [0.5 + 0.3 * phi.cos(), 0.5 + 0.3 * phi.sin()];
            sup = sup.max(-alpha.eval(y).unwrap());
        }
        assert!((d.alpha_minus_sup - sup).abs() < 1e-4);
        assert!(d.alpha_plus_min_on_support >= 0.0);
    }

    #[test]
    fn mean_quadrature_converges_at_fourth_order() {
        let exact_shift = 0.3;
        let periodic = cell("cos(2*pi*y1) + 0.3");
        let smooth = cell("exp(y1)");
        let exact_exp = std::f64::consts::E - 1.0;
        let mut prev: Option<(f64, f64)> = None;
        for q in [16, 32, 64, 128] {
            let e1 = (alpha_diagnostics(&periodic, &LAM, q).unwrap().mean_on_sigma - exact_shift).abs();
            let e2 = (alpha_diagnostics(&smooth, &LAM, q).unwrap().mean_on_sigma - exact_exp).abs();
            if let Some((p1, p2)) = prev {
                // trigonometric data is integrated exactly up to round-off
                assert!(e1 <= (p1 / 4.0).max(1e-14));
                assert!(e2 <= p2 / 4.0, "{e2} vs {p2}");
            }
            prev = Some((e1, e2));
        }
    }
}
