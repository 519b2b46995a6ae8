//! Unit-cell and ε-periodic triangulations with duplicated interface vertices.
//!
//! Every vertex belongs to exactly one phase. Vertices on the interface Σ are
//! stored twice (one copy per phase) so the discrete solution can be two-valued
//! there; the copies are linked through [`InterfaceEdge`] twin pairs.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // 0.5 / sqrt(3)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::One, Phase::Two];

    pub fn index(self) -> usize {
        match self {
            Phase::One => 0,
            Phase::Two => 1,
        }
    }

    /// 1 or 2, matching the usual material numbering.
    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn other(self) -> Phase {
        match self {
            Phase::One => Phase::Two,
            Phase::Two => Phase::One,
        }
    }
}

/// Microstructure of the periodicity cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometrySpec {
    /// Y₁ = {0 < y₂ < θ}; Y₂ is the complementary stripe.
    Laminate { theta: f64 },
    /// Y₂ = disk of `radius` centred at (0.5, 0.5), approximated by an `n_seg`-gon.
    Disk { radius: f64, n_seg: usize },
}

impl GeometrySpec {
    /// Parameter checks that do not depend on mesh resolution.
    pub fn validate(&self) -> Result<()> {
        match *self {
            GeometrySpec::Laminate { theta } => {
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::Geometry(format!("theta {theta} outside (0,1)")));
                }
            }
            GeometrySpec::Disk { radius, n_seg } => {
                if !(0.05..=0.45).contains(&radius) {
                    return Err(Error::Geometry(format!(
                        "radius {radius} outside [0.05, 0.45]"
                    )));
                }
                if n_seg == 0 || n_seg % 8 != 0 {
                    return Err(Error::Geometry(format!(
                        "n_seg {n_seg} is not a positive multiple of 8"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks compatibility with an N×N cell resolution.
    pub fn check_resolution(&self, n: usize) -> Result<()> {
        self.validate()?;
        if n < 4 {
            return Err(Error::Geometry(format!("resolution {n} below 4")));
        }
        match *self {
            GeometrySpec::Laminate { theta } => {
                laminate_rows(theta, n)?;
            }
            GeometrySpec::Disk { n_seg, .. } => {
                if n_seg > 4 * n {
                    return Err(Error::Geometry(format!(
                        "n_seg {n_seg} exceeds 4N = {}",
                        4 * n
                    )));
                }
            }
        }
        Ok(())
    }

    /// Phase of the exact (non-polygonal) geometry at cell point `y`.
    pub fn phase_at(&self, y: [f64; 2]) -> Phase {
        match *self {
            GeometrySpec::Laminate { theta } => {
                if y[1] < theta {
                    Phase::One
                } else {
                    Phase::Two
                }
            }
            GeometrySpec::Disk { radius, .. } => {
                let (dx, dy) = (y[0] - 0.5, y[1] - 0.5);
                if dx * dx + dy * dy < radius * radius {
                    Phase::Two
                } else {
                    Phase::One
                }
            }
        }
    }

    /// Exact interface curves, each parametrised on [0,1]: returns (point, |dσ/ds|).
    pub fn interface_components(&self) -> Vec<Box<dyn Fn(f64) -> ([f64; 2], f64) + Send + Sync>> {
        match *self {
            GeometrySpec::Laminate { theta } => vec![
                Box::new(|s| ([s, 0.0], 1.0)),
                Box::new(move |s| ([s, theta], 1.0)),
            ],
            GeometrySpec::Disk { radius, .. } => vec![Box::new(move |s| {
                let phi = 2.0 * PI * s;
                (
                    [0.5 + radius * phi.cos(), 0.5 + radius * phi.sin()],
                    2.0 * PI * radius,
                )
            })],
        }
    }

    /// Whether both phases meet the outer boundary of Ω (|Γᵢ^ε| ≠ 0).
    pub fn both_phases_touch_boundary(&self) -> bool {
        matches!(self, GeometrySpec::Laminate { .. })
    }

    /// Canonical text used for provenance hashing.
    pub fn canonical(&self) -> String {
        match *self {
            GeometrySpec::Laminate { theta } => format!("laminate theta={theta:?}"),
            GeometrySpec::Disk { radius, n_seg } => {
                format!("disk radius={radius:?} n_seg={n_seg}")
            }
        }
    }
}

fn laminate_rows(theta: f64, n: usize) -> Result<usize> {
    let rows = theta * n as f64;
    let m = rows.round();
    if (rows - m).abs() > 1e-9 || m < 1.0 || m > (n - 1) as f64 {
        return Err(Error::Geometry(format!(
            "theta*N = {rows} must be an integer in [1, N-1] (theta {theta}, N {n})"
        )));
    }
    Ok(m as usize)
}

/// Twin pair of interface edges. `side2` coordinates equal `side1` + `shift`
/// (the shift is a lattice vector, non-zero only where Σ wraps across the cell boundary).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceEdge {
    pub side1: [usize; 2],
    pub side2: [usize; 2],
    /// Unit normal pointing out of phase 1 into phase 2.
    pub normal: [f64; 2],
    pub shift: [f64; 2],
}

/// Quadrature point on Σ with the twin dofs it couples.
#[derive(Debug, Clone, Copy)]
pub struct InterfacePoint {
    /// Location on the phase-1 side.
    pub point: [f64; 2],
    pub weight: f64,
    pub normal: [f64; 2],
    pub dofs1: [usize; 2],
    pub dofs2: [usize; 2],
    /// P1 shape values of the two edge endpoints.
    pub shape: [f64; 2],
}

/// Triangulation shared by the cell, micro and macro discretisations.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub vertex_phase: Vec<Phase>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub triangle_phase: Vec<Phase>,
    pub interface: Vec<InterfaceEdge>,
    /// `Some(ε)` for ε-periodic micro meshes: coefficients are sampled at x/ε mod 1.
    pub epsilon: Option<f64>,
}

impl Mesh {
    /// Uniform N×N square mesh of Ω = (0,1)², each square split along its SW–NE diagonal.
    pub fn structured_square(n: usize) -> Mesh {
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let nt = triangles.len();
        Mesh {
            vertex_phase: vec![Phase::One; vertices.len()],
            vertices,
            triangles,
            triangle_phase: vec![Phase::One; nt],
            interface: Vec::new(),
            epsilon: None,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Signed area (positive for counter-clockwise triangles).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn phase_area(&self, phase: Phase) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.triangle_phase[t] == phase)
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Point at which cell-periodic coefficients are sampled for physical point `x`.
    pub fn coefficient_point(&self, x: [f64; 2]) -> [f64; 2] {
        match self.epsilon {
            None => x,
            Some(eps) => [wrap_unit(x[0] / eps), wrap_unit(x[1] / eps)],
        }
    }

    /// Vertices referenced by at least one triangle of `phase`.
    pub fn phase_vertex_mask(&self, phase: Phase) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            if self.triangle_phase[t] == phase {
                for &v in tri {
                    mask[v] = true;
                }
            }
        }
        mask
    }

    /// Two-point Gauss rule on every interface edge.
    pub fn interface_quadrature(&self) -> Vec<InterfacePoint> {
        let mut out = Vec::with_capacity(2 * self.interface.len());
        for e in &self.interface {
            let p = self.vertices[e.side1[0]];
            let q = self.vertices[e.side1[1]];
            let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
            for s in [0.5 - GAUSS_OFFSET, 0.5 + GAUSS_OFFSET] {
                out.push(InterfacePoint {
                    point: [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])],
                    weight: 0.5 * len,
                    normal: e.normal,
                    dofs1: e.side1,
                    dofs2: e.side2,
                    shape: [1.0 - s, s],
                });
            }
        }
        out
    }

    /// Total interface length |Σ|.
    pub fn interface_length(&self) -> f64 {
        self.interface_quadrature().iter().map(|q| q.weight).sum()
    }

    fn check_triangles(&self) -> Result<()> {
        for t in 0..self.triangles.len() {
            let area = self.triangle_area(t);
            if area < 1e-14 {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
        }
        Ok(())
    }

    /// Plain-text dump: header line with counts, then one section per array.
    pub fn write_dump<W: Write>(&self, periodic: &[PeriodicPair], mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# mesh vertices={} triangles={} interface={} periodic={}",
            self.vertices.len(),
            self.triangles.len(),
            self.interface.len(),
            periodic.len()
        )?;
        writeln!(w, "vertices")?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(w, "{i} {:?} {:?}", v[0], v[1])?;
        }
        writeln!(w, "triangles")?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(
                w,
                "{i} {} {} {} {}",
                t[0],
                t[1],
                t[2],
                self.triangle_phase[i].number()
            )?;
        }
        writeln!(w, "interface")?;
        for e in &self.interface {
            writeln!(
                w,
                "{} {} {} {}",
                e.side1[0], e.side1[1], e.side2[0], e.side2[1]
            )?;
        }
        writeln!(w, "periodic")?;
        for p in periodic {
            writeln!(w, "{} {}", p.master, p.slave)?;
        }
        Ok(())
    }
}

/// y ↦ y mod 1 in the half-open interval [0, 1).
pub fn wrap_unit(y: f64) -> f64 {
    let w = y - y.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Periodic identification: `slave` = `master` + lattice vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicPair {
    pub master: usize,
    pub slave: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitCellMesh {
    pub mesh: Mesh,
    pub periodic_pairs: Vec<PeriodicPair>,
    pub geometry: GeometrySpec,
    pub resolution: usize,
    /// |Y₁|, |Y₂| of the discrete geometry.
    pub phase_areas: [f64; 2],
    /// Exact minus polygonal inclusion area (zero for laminates).
    pub polygon_area_deficit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroMesh {
    pub mesh: Mesh,
    pub epsilon: f64,
    /// K = 1/ε cells per side.
    pub cells_per_side: usize,
    /// Γ₁^ε, Γ₂^ε: boundary vertices of each phase.
    pub dirichlet: [Vec<usize>; 2],
    pub geometry: GeometrySpec,
}

impl MicroMesh {
    pub fn boundary_nodes(&self, phase: Phase) -> &[usize] {
        &self.dirichlet[phase.index()]
    }
}

pub fn build_unit_cell_mesh(g: &GeometrySpec, n: usize) -> Result<UnitCellMesh> {
    g.check_resolution(n)?;
    let (mesh, periodic_pairs, deficit) = match *g {
        GeometrySpec::Laminate { theta } => {
            let (m, p) = laminate_cell(n, laminate_rows(theta, n)?);
            (m, p, 0.0)
        }
        GeometrySpec::Disk { radius, n_seg } => {
            let (m, p) = disk_cell(n, radius, n_seg)?;
            let polygon = 0.5 * n_seg as f64 * radius * radius * (2.0 * PI / n_seg as f64).sin();
            (m, p, PI * radius * radius - polygon)
        }
    };
    mesh.check_triangles()?;
    let phase_areas = [mesh.phase_area(Phase::One), mesh.phase_area(Phase::Two)];
    Ok(UnitCellMesh {
        mesh,
        periodic_pairs,
        geometry: *g,
        resolution: n,
        phase_areas,
        polygon_area_deficit: deficit,
    })
}

/// Criss-cross structured laminate: every grid square is split into four
/// triangles around its centre. Interface lines at y₂ = 0 (≡ 1) and y₂ = θ.
fn laminate_cell(n: usize, m: usize) -> (Mesh, Vec<PeriodicPair>) {
    let mut vertices = Vec::new();
    let mut vertex_phase = Vec::new();
    let mut grid: [HashMap<(usize, usize), usize>; 2] = [HashMap::new(), HashMap::new()];
    let mut centre: HashMap<(usize, usize), usize> = HashMap::new();
    let h = 1.0 / n as f64;

    for phase in Phase::BOTH {
        let rows = match phase {
            Phase::One => 0..=m,
            Phase::Two => m..=n,
        };
        for j in rows.clone() {
            for i in 0..=n {
                grid[phase.index()].insert((i, j), vertices.len());
                vertices.push([i as f64 * h, j as f64 * h]);
                vertex_phase.push(phase);
            }
            if j < *rows.end() {
                for i in 0..n {
                    centre.insert((i, j), vertices.len());
                    vertices.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
                    vertex_phase.push(phase);
                }
            }
        }
    }

    let mut triangles = Vec::with_capacity(4 * n * n);
    let mut triangle_phase = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        let phase = if j < m { Phase::One } else { Phase::Two };
        let g = &grid[phase.index()];
        for i in 0..n {
            let a = g[&(i, j)];
            let b = g[&(i + 1, j)];
            let c = g[&(i + 1, j + 1)];
            let d = g[&(i, j + 1)];
            let e = centre[&(i, j)];
            for tri in [[a, b, e], [b, c, e], [c, d, e], [d, a, e]] {
                triangles.push(tri);
                triangle_phase.push(phase);
            }
        }
    }

    let mut interface = Vec::with_capacity(2 * n);
    for i in 0..n {
        interface.push(InterfaceEdge {
            side1: [grid[0][&(i, 0)], grid[0][&(i + 1, 0)]],
            side2: [grid[1][&(i, n)], grid[1][&(i + 1, n)]],
            normal: [0.0, -1.0],
            shift: [0.0, 1.0],
        });
    }
    for i in 0..n {
        interface.push(InterfaceEdge {
            side1: [grid[0][&(i, m)], grid[0][&(i + 1, m)]],
            side2: [grid[1][&(i, m)], grid[1][&(i + 1, m)]],
            normal: [0.0, 1.0],
            shift: [0.0, 0.0],
        });
    }

    let mut periodic = Vec::new();
    for (phase, rows) in [(Phase::One, 0..=m), (Phase::Two, m..=n)] {
        for j in rows {
            periodic.push(PeriodicPair {
                master: grid[phase.index()][&(0, j)],
                slave: grid[phase.index()][&(n, j)],
            });
        }
    }

    (
        Mesh {
            vertices,
            vertex_phase,
            triangles,
            triangle_phase,
            interface,
            epsilon: None,
        },
        periodic,
    )
}

/// Polygonal inclusion inside a periodic square: constrained Delaunay
/// triangulation of the square boundary, the inclusion polygon, graded rings
/// inside the inclusion and lattice points outside it.
fn disk_cell(n: usize, radius: f64, n_seg: usize) -> Result<(Mesh, Vec<PeriodicPair>)> {
    use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

    let h = 1.0 / n as f64;
    let c = [0.5, 0.5];
    let mut points: Vec<[f64; 2]> = Vec::new();

    // square boundary, counter-clockwise from the origin
    for i in 0..n {
        points.push([i as f64 * h, 0.0]);
    }
    for i in 0..n {
        points.push([1.0, i as f64 * h]);
    }
    for i in (1..=n).rev() {
        points.push([i as f64 * h, 1.0]);
    }
    for i in (1..=n).rev() {
        points.push([0.0, i as f64 * h]);
    }
    let n_boundary = points.len();

    let polygon_start = points.len();
    for k in 0..n_seg {
        let phi = 2.0 * PI * k as f64 / n_seg as f64;
        points.push([c[0] + radius * phi.cos(), c[1] + radius * phi.sin()]);
    }
    let polygon: Vec<[f64; 2]> = points[polygon_start..].to_vec();

    // radially graded rings inside the inclusion
    let chord = 2.0 * PI * radius / n_seg as f64;
    let spacing = h.max(chord);
    let rings = (radius / spacing).round().max(1.0) as usize;
    points.push(c);
    for j in 1..rings {
        let rj = radius * j as f64 / rings as f64;
        let count = ((n_seg as f64 * j as f64 / rings as f64).ceil() as usize).max(6);
        let offset = if j % 2 == 0 { 0.0 } else { 0.5 };
        for k in 0..count {
            let phi = 2.0 * PI * (k as f64 + offset) / count as f64;
            points.push([c[0] + rj * phi.cos(), c[1] + rj * phi.sin()]);
        }
    }

    // lattice points in the matrix, kept away from the polygon
    let margin = 0.5 * spacing;
    for j in 1..n {
        for i in 1..n {
            let p = [i as f64 * h, j as f64 * h];
            let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
            if d > radius + margin {
                points.push(p);
            }
        }
    }

    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mut handles = Vec::with_capacity(points.len());
    for p in &points {
        let handle = cdt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| Error::Geometry(format!("triangulation insert failed: {e:?}")))?;
        handles.push(handle);
    }
    if cdt.num_vertices() != points.len() {
        return Err(Error::Geometry("duplicate triangulation points".into()));
    }
    for k in 0..n_seg {
        let a = handles[polygon_start + k];
        let b = handles[polygon_start + (k + 1) % n_seg];
        cdt.add_constraint(a, b);
    }
    for k in 0..n_boundary {
        cdt.add_constraint(handles[k], handles[(k + 1) % n_boundary]);
    }

    // spade indices → our point indices
    let mut index_of = vec![usize::MAX; cdt.num_vertices()];
    for (ours, h) in handles.iter().enumerate() {
        index_of[h.index()] = ours;
    }

    let mut vertices = points.clone();
    let mut vertex_phase = vec![Phase::One; vertices.len()];
    let mut twin = vec![0usize; n_seg];
    let mut triangles = Vec::new();
    let mut triangle_phase = Vec::new();
    let mut used_inside = vec![false; points.len()];

    for face in cdt.inner_faces() {
        let vs = face.vertices();
        let mut tri = [0usize; 3];
        for (slot, v) in vs.iter().enumerate() {
            tri[slot] = index_of[v.fix().index()];
        }
        if signed_area(points[tri[0]], points[tri[1]], points[tri[2]]) < 0.0 {
            tri.swap(1, 2);
        }
        let cen = [
            (points[tri[0]][0] + points[tri[1]][0] + points[tri[2]][0]) / 3.0,
            (points[tri[0]][1] + points[tri[1]][1] + points[tri[2]][1]) / 3.0,
        ];
        if inside_convex_polygon(&polygon, cen) {
            for &v in &tri {
                if !(polygon_start..polygon_start + n_seg).contains(&v) {
                    used_inside[v] = true;
                }
            }
            triangles.push(tri);
            triangle_phase.push(Phase::Two);
        } else {
            triangles.push(tri);
            triangle_phase.push(Phase::One);
        }
    }
    for (v, inside) in used_inside.iter().enumerate() {
        if *inside {
            vertex_phase[v] = Phase::Two;
        }
    }
    for k in 0..n_seg {
        twin[k] = vertices.len();
        vertices.push(polygon[k]);
        vertex_phase.push(Phase::Two);
    }
    for (t, tri) in triangles.iter_mut().enumerate() {
        if triangle_phase[t] == Phase::Two {
            for v in tri.iter_mut() {
                if (polygon_start..polygon_start + n_seg).contains(v) {
                    *v = twin[*v - polygon_start];
                }
            }
        }
    }

    let mut interface = Vec::with_capacity(n_seg);
    for k in 0..n_seg {
        let k1 = (k + 1) % n_seg;
        let (p, q) = (polygon[k], polygon[k1]);
        let (tx, ty) = (q[0] - p[0], q[1] - p[1]);
        let len = (tx * tx + ty * ty).sqrt();
        interface.push(InterfaceEdge {
            side1: [polygon_start + k, polygon_start + k1],
            side2: [twin[k], twin[k1]],
            normal: [-ty / len, tx / len],
            shift: [0.0, 0.0],
        });
    }

    // periodic pairing of the outer boundary (phase 1 only)
    let mut periodic = Vec::new();
    let left = |j: usize| if j == 0 { 0 } else { n_boundary - j };
    for j in 1..n {
        periodic.push(PeriodicPair {
            master: left(j),
            slave: n + j,
        });
    }
    for i in 1..n {
        periodic.push(PeriodicPair {
            master: i,
            slave: 3 * n - i,
        });
    }
    // corners (1,0), (1,1), (0,1) all identify with the origin
    for slave in [n, 2 * n, 3 * n] {
        periodic.push(PeriodicPair { master: 0, slave });
    }

    Ok((
        Mesh {
            vertices,
            vertex_phase,
            triangles,
            triangle_phase,
            interface,
            epsilon: None,
        },
        periodic,
    ))
}

fn inside_convex_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    (0..n).all(|k| signed_area(poly[k], poly[(k + 1) % n], p) > 0.0)
}

/// Reciprocal integer K of ε, or an error.
pub fn cells_per_side(epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::NotReciprocal(epsilon));
    }
    let k = (1.0 / epsilon).round();
    if (1.0 / epsilon - k).abs() > 1e-9 * k {
        return Err(Error::NotReciprocal(epsilon));
    }
    Ok(k as usize)
}

/// K×K tiling of the unit-cell mesh, scaled by ε = 1/K, with same-phase
/// tile boundaries merged and interface twins kept distinct.
pub fn build_micro_mesh(
    g: &GeometrySpec,
    n: usize,
    epsilon: f64,
    size_cap: usize,
) -> Result<MicroMesh> {
    let k = cells_per_side(epsilon)?;
    if k * n > size_cap {
        return Err(Error::SizeCap {
            size: k * n,
            cap: size_cap,
        });
    }
    let cell = build_unit_cell_mesh(g, n)?;
    let eps = 1.0 / k as f64;
    let cm = &cell.mesh;
    let nv = cm.num_vertices();

    let quant = |x: f64| (x * 1e9).round() as i64;
    let mut lookup: HashMap<(i64, i64, Phase), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex_phase = Vec::new();
    // tile-local map: tile index * nv + cell vertex → micro vertex
    let mut local = vec![0usize; k * k * nv];

    for tj in 0..k {
        for ti in 0..k {
            let tile = tj * k + ti;
            for (v, y) in cm.vertices.iter().enumerate() {
                let x = [eps * (y[0] + ti as f64), eps * (y[1] + tj as f64)];
                let phase = cm.vertex_phase[v];
                let key = (quant(x[0]), quant(x[1]), phase);
                let id = *lookup.entry(key).or_insert_with(|| {
                    vertices.push(x);
                    vertex_phase.push(phase);
                    vertices.len() - 1
                });
                local[tile * nv + v] = id;
            }
        }
    }

    let mut triangles = Vec::with_capacity(k * k * cm.triangles.len());
    let mut triangle_phase = Vec::with_capacity(k * k * cm.triangles.len());
    for tile in 0..k * k {
        for (t, tri) in cm.triangles.iter().enumerate() {
            triangles.push(tri.map(|v| local[tile * nv + v]));
            triangle_phase.push(cm.triangle_phase[t]);
        }
    }

    let mut interface = Vec::new();
    for tj in 0..k as i64 {
        for ti in 0..k as i64 {
            for e in &cm.interface {
                let sj = tj - e.shift[1].round() as i64;
                let si = ti - e.shift[0].round() as i64;
                if si < 0 || sj < 0 || si >= k as i64 || sj >= k as i64 {
                    continue; // lies on ∂Ω
                }
                let t1 = (tj as usize * k + ti as usize) * nv;
                let t2 = (sj as usize * k + si as usize) * nv;
                interface.push(InterfaceEdge {
                    side1: e.side1.map(|v| local[t1 + v]),
                    side2: e.side2.map(|v| local[t2 + v]),
                    normal: e.normal,
                    shift: [0.0, 0.0],
                });
            }
        }
    }

    let on_boundary = |x: [f64; 2]| {
        x[0].abs() < 1e-12 || x[1].abs() < 1e-12 || (x[0] - 1.0).abs() < 1e-12 || (x[1] - 1.0).abs() < 1e-12
    };
    let mut dirichlet = [Vec::new(), Vec::new()];
    for (v, x) in vertices.iter().enumerate() {
        if on_boundary(*x) {
            dirichlet[vertex_phase[v].index()].push(v);
        }
    }

    let mesh = Mesh {
        vertices,
        vertex_phase,
        triangles,
        triangle_phase,
        interface,
        epsilon: Some(eps),
    };
    mesh.check_triangles()?;
    Ok(MicroMesh {
        mesh,
        epsilon: eps,
        cells_per_side: k,
        dirichlet,
        geometry: *g,
    })
}
