//! Scalar Helmholtz problems on the waveguide cross-section `G = (0,1)²`.
//!
//! All modes share the weak form
//!
//! ```text
//! ∫ a ∇u·∇ψ − k0² ∫ c u ψ − i k0 ∮ u ψ = ∮ g ψ,   g = ∂u_inc/∂n − i k0 u_inc
//! ```
//!
//! with `(a, c) = (1, ε_η)` for the electric-parallel reduction,
//! `(1/ε_η, 1)` for the magnetic-parallel reduction and `(A_eff, μ_eff)`
//! inside the slab for the homogenized model. Units are normalized
//! (`ε0 = μ0 = 1`), so `ω = k0`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MacroDomain, Microstructure, PermittivityField};
use crate::linalg::TripletBuilder;
use crate::mesh::{p1_gradients, map_point, Region, StructuredGrid, TriMesh, GAUSS3, QUAD7};

/// Relative residual accepted from a domain solve.
pub const DOMAIN_RESIDUAL_TOL: f64 = 1e-8;
/// Largest node count a domain mesh may have unless overridden.
pub const DEFAULT_NODE_CAP: usize = 2_000_000;
/// Largest `k0·h` accepted without a pollution warning.
pub const MAX_K0_H: f64 = 0.4;
/// Default probe strip in `Q_L` for transmission measurements.
pub const DEFAULT_STRIP: (f64, f64) = (0.05, 0.20);

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    EParallel,
    HParallel,
    Homogenized,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::EParallel => "e-parallel",
            Mode::HParallel => "h-parallel",
            Mode::Homogenized => "homogenized",
        }
    }
}

/// Treatment of the faces `x2 = 0` and `x2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LateralBoundary {
    /// Impedance condition on all four faces.
    #[default]
    Impedance,
    /// Periodic identification of `x2 = 0` with `x2 = 1`; reduces
    /// normally incident problems on laterally uniform media to 1D.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentWave {
    pub k0: f64,
    pub direction: [f64; 2],
}

impl IncidentWave {
    pub fn new(k0: f64, direction: [f64; 2]) -> Result<Self> {
        let len = (direction[0].powi(2) + direction[1].powi(2)).sqrt();
        if !(k0 > 0.0) || (len - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!(
                "incident wave needs k0 > 0 and a unit direction (k0 = {k0}, |d| = {len})"
            )));
        }
        Ok(IncidentWave { k0, direction })
    }

    /// Unit-amplitude plane wave arriving from the right.
    pub fn from_right(k0: f64) -> Result<Self> {
        IncidentWave::new(k0, [-1.0, 0.0])
    }

    pub fn value(&self, x: [f64; 2]) -> Complex64 {
        (I * self.k0 * (self.direction[0] * x[0] + self.direction[1] * x[1])).exp()
    }

    /// `∂u_inc/∂n − i k0 u_inc` for outward normal `n`.
    pub fn impedance_data(&self, x: [f64; 2], n: [f64; 2]) -> Complex64 {
        let dn = self.direction[0] * n[0] + self.direction[1] * n[1];
        I * self.k0 * (dn - 1.0) * self.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub normal: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct DomainMesh {
    pub mesh: TriMesh,
    pub domain: MacroDomain,
    pub h: f64,
    pub n: usize,
    pub boundary: Vec<BoundaryEdge>,
    /// Microstructure resolved by the mesh; `None` for homogenized meshes.
    pub microstructure: Option<Microstructure>,
}

impl DomainMesh {
    fn structured(
        domain: MacroDomain,
        n: usize,
        cap: usize,
        microstructure: Option<Microstructure>,
    ) -> Result<Self> {
        let nodes = (n + 1) * (n + 1);
        if nodes > cap {
            return Err(Error::Resource(format!(
                "domain mesh would have {nodes} nodes, above the cap of {cap}"
            )));
        }
        let grid = StructuredGrid {
            origin: [0.0, 0.0],
            h: 1.0 / n as f64,
            nx: n,
            ny: n,
        };
        let mesh = TriMesh::structured(grid, |x| match microstructure {
            Some(m) => {
                if domain.in_slab(x[0]) && m.contains(domain.cell_coordinate(x)) {
                    Region::Inclusion
                } else {
                    Region::Air
                }
            }
            None => {
                if domain.in_slab(x[0]) {
                    Region::Homogenized
                } else {
                    Region::Air
                }
            }
        });
        let mut boundary = Vec::with_capacity(4 * n);
        for k in 0..n {
            boundary.push(BoundaryEdge {
                nodes: [grid.node_index(k, 0), grid.node_index(k + 1, 0)],
                normal: [0.0, -1.0],
            });
            boundary.push(BoundaryEdge {
                nodes: [grid.node_index(n, k), grid.node_index(n, k + 1)],
                normal: [1.0, 0.0],
            });
            boundary.push(BoundaryEdge {
                nodes: [grid.node_index(k + 1, n), grid.node_index(k, n)],
                normal: [0.0, 1.0],
            });
            boundary.push(BoundaryEdge {
                nodes: [grid.node_index(0, k + 1), grid.node_index(0, k)],
                normal: [-1.0, 0.0],
            });
        }
        Ok(DomainMesh {
            mesh,
            domain,
            h: grid.h,
            n,
            boundary,
            microstructure,
        })
    }

    pub fn node_count(&self) -> usize {
        self.mesh.nodes.len()
    }
}

/// Microstructure-resolving mesh with `h = η / cells_per_eta`.
pub fn build_domain_mesh(
    domain: &MacroDomain,
    m: &Microstructure,
    cells_per_eta: usize,
) -> Result<DomainMesh> {
    build_domain_mesh_capped(domain, m, cells_per_eta, DEFAULT_NODE_CAP)
}

pub fn build_domain_mesh_capped(
    domain: &MacroDomain,
    m: &Microstructure,
    cells_per_eta: usize,
    node_cap: usize,
) -> Result<DomainMesh> {
    if cells_per_eta < 4 || !cells_per_eta.is_multiple_of(4) {
        return Err(Error::param(format!(
            "cells_per_eta must be a multiple of 4 and at least 4, got {cells_per_eta}"
        )));
    }
    let per_unit = (1.0 / domain.eta).round() as usize;
    DomainMesh::structured(*domain, per_unit * cells_per_eta, node_cap, Some(*m))
}

/// Coarse mesh for the homogenized problem; `n` subdivisions per unit
/// length, which must place the slab faces on grid lines.
pub fn build_macro_mesh(domain: &MacroDomain, n: usize) -> Result<DomainMesh> {
    let aligned = |x: f64| ((x * n as f64) - (x * n as f64).round()).abs() < 1e-9;
    if n == 0 || !aligned(domain.qm.0) || !aligned(domain.qm.1) {
        return Err(Error::param(format!(
            "macro resolution {n} does not place the slab faces {:?} on grid lines",
            domain.qm
        )));
    }
    DomainMesh::structured(*domain, n, DEFAULT_NODE_CAP, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveOptions {
    pub lateral: LateralBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub residual: f64,
    pub symmetry_defect: f64,
    pub unknowns: usize,
    pub k0_h: f64,
}

#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub mesh: Arc<DomainMesh>,
    /// Nodal values, one per mesh node.
    pub u: Vec<Complex64>,
    pub mode: Mode,
    pub k0: f64,
    pub eta: f64,
    pub eps1: Option<Complex64>,
    pub diagnostics: Option<SolveDiagnostics>,
}

impl FieldSolution {
    /// P1 interpolation at `x` (clamped into `G`).
    pub fn eval(&self, x: [f64; 2]) -> Complex64 {
        let (t, b) = self.mesh.mesh.grid.locate(x);
        let tri = self.mesh.mesh.triangles[t];
        self.u[tri[0]] * b[0] + self.u[tri[1]] * b[1] + self.u[tri[2]] * b[2]
    }

    /// Nodal interpolation onto another mesh.
    pub fn interpolate_to(&self, mesh: &DomainMesh) -> Vec<Complex64> {
        mesh.mesh.nodes.iter().map(|&x| self.eval(x)).collect()
    }

    pub fn zeros_like(&self) -> FieldSolution {
        FieldSolution {
            u: vec![Complex64::new(0.0, 0.0); self.u.len()],
            diagnostics: None,
            ..self.clone()
        }
    }
}

/// Per-triangle coefficients `(a, c)`.
type Coefficients<'a> = dyn Fn(usize) -> ([[Complex64; 2]; 2], Complex64) + Sync + 'a;

fn scalar_tensor(a: Complex64) -> [[Complex64; 2]; 2] {
    [[a, Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), a]]
}

fn solve_with_coefficients(
    mesh: &DomainMesh,
    coeff: &Coefficients,
    wave: &IncidentWave,
    opts: SolveOptions,
) -> Result<(Vec<Complex64>, SolveDiagnostics)> {
    let k0 = wave.k0;
    let k0_h = k0 * mesh.h;
    if k0_h > MAX_K0_H {
        log::warn!("k0*h = {k0_h:.3} exceeds {MAX_K0_H}; expect pollution error");
    }
    let grid = mesh.mesh.grid;
    let n = mesh.n;
    let periodic = opts.lateral == LateralBoundary::Periodic;
    let dof = |node: usize| -> usize {
        if periodic {
            let i = node % (n + 1);
            let j = (node / (n + 1)) % n;
            i + j * (n + 1)
        } else {
            node
        }
    };
    let ndof = if periodic { (n + 1) * n } else { grid.node_count() };

    let mut builder =
        TripletBuilder::<Complex64>::with_capacity(ndof, 9 * mesh.mesh.triangles.len() + 8 * n);
    for (t, tri) in mesh.mesh.triangles.iter().enumerate() {
        let (a, c) = coeff(t);
        let (g, area) = p1_gradients(&mesh.mesh.vertices(t));
        for p in 0..3 {
            for q in 0..3 {
                let ag = [
                    a[0][0] * g[q][0] + a[0][1] * g[q][1],
                    a[1][0] * g[q][0] + a[1][1] * g[q][1],
                ];
                let stiff = (ag[0] * g[p][0] + ag[1] * g[p][1]) * area;
                let mass = area / 12.0 * if p == q { 2.0 } else { 1.0 };
                builder.add(dof(tri[p]), dof(tri[q]), stiff - c * (k0 * k0 * mass));
            }
        }
    }
    let mut rhs = vec![Complex64::new(0.0, 0.0); ndof];
    for e in &mesh.boundary {
        if periodic && e.normal[0] == 0.0 {
            continue;
        }
        let [p0, p1] = [mesh.mesh.nodes[e.nodes[0]], mesh.mesh.nodes[e.nodes[1]]];
        let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
        let [d0, d1] = [dof(e.nodes[0]), dof(e.nodes[1])];
        let edge_mass = [[len / 3.0, len / 6.0], [len / 6.0, len / 3.0]];
        let ids = [d0, d1];
        for p in 0..2 {
            for q in 0..2 {
                builder.add(ids[p], ids[q], -I * k0 * edge_mass[p][q]);
            }
        }
        for &(s, w) in &GAUSS3 {
            let x = [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])];
            let g = wave.impedance_data(x, e.normal) * (w * len);
            rhs[d0] += g * (1.0 - s);
            rhs[d1] += g * s;
        }
    }
    let k = builder.build();
    let symmetry_defect = k.symmetry_defect();
    let x = k.solve(&rhs, DOMAIN_RESIDUAL_TOL)?;
    let residual = k.relative_residual(&x, &rhs);
    let u = (0..grid.node_count()).map(|node| x[dof(node)]).collect();
    Ok((
        u,
        SolveDiagnostics {
            residual,
            symmetry_defect,
            unknowns: ndof,
            k0_h,
        },
    ))
}

/// Fine-scale solve resolving the high-contrast microstructure.
pub fn assemble_and_solve(
    mesh: &Arc<DomainMesh>,
    mode: Mode,
    eps1: Complex64,
    wave: &IncidentWave,
    opts: SolveOptions,
) -> Result<FieldSolution> {
    let m = mesh.microstructure.ok_or_else(|| {
        Error::param("fine-scale solves need a microstructure-resolving mesh")
    })?;
    let field = PermittivityField::new(eps1, mesh.domain.eta, m)?;
    let inclusion = field.inclusion_value();
    let one = Complex64::new(1.0, 0.0);
    let coeff = |t: usize| {
        let eps = match mesh.mesh.regions[t] {
            Region::Inclusion => inclusion,
            _ => one,
        };
        match mode {
            Mode::EParallel => (scalar_tensor(one), eps),
            _ => (scalar_tensor(one / eps), one),
        }
    };
    if mode == Mode::Homogenized {
        return Err(Error::param(
            "homogenized mode is solved by the homogenized pipeline",
        ));
    }
    let (u, diag) = solve_with_coefficients(mesh, &coeff, wave, opts)?;
    Ok(FieldSolution {
        mesh: Arc::clone(mesh),
        u,
        mode,
        k0: wave.k0,
        eta: mesh.domain.eta,
        eps1: Some(eps1),
        diagnostics: Some(diag),
    })
}

/// Solve with an anisotropic coefficient `a_slab` and mass weight `c_slab`
/// inside the slab and the identity outside.
pub fn solve_slab_coefficients(
    mesh: &Arc<DomainMesh>,
    a_slab: [[Complex64; 2]; 2],
    c_slab: Complex64,
    wave: &IncidentWave,
    opts: SolveOptions,
) -> Result<(Vec<Complex64>, SolveDiagnostics)> {
    let one = Complex64::new(1.0, 0.0);
    let qm = mesh.domain.qm;
    let coeff = |t: usize| {
        let x1 = mesh.mesh.barycenter(t)[0];
        if x1 >= qm.0 && x1 < qm.1 {
            (a_slab, c_slab)
        } else {
            (scalar_tensor(one), one)
        }
    };
    solve_with_coefficients(mesh, &coeff, wave, opts)
}

/// Root mean square of `|u|` over the strip `x1 ∈ [a, b]`, `x2 ∈ (0, 1)`.
pub fn measure_transmission(sol: &FieldSolution, strip: (f64, f64)) -> Result<f64> {
    let (a, b) = strip;
    let qm = sol.mesh.domain.qm;
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::param(format!("invalid probe strip [{a}, {b}]")));
    }
    if b > qm.0 && a < qm.1 {
        return Err(Error::param(format!(
            "probe strip [{a}, {b}] intersects the slab [{}, {}]",
            qm.0, qm.1
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, tri) in sol.mesh.mesh.triangles.iter().enumerate() {
        let v = sol.mesh.mesh.vertices(t);
        let lo = v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        if hi < a || lo > b {
            continue;
        }
        let area = crate::mesh::triangle_area(&v);
        for (bary, w) in &QUAD7 {
            let x = map_point(&v, bary);
            if x[0] < a || x[0] > b {
                continue;
            }
            let u = sol.u[tri[0]] * bary[0] + sol.u[tri[1]] * bary[1] + sol.u[tri[2]] * bary[2];
            num += w * area * u.norm_sqr();
            den += w * area;
        }
    }
    if den == 0.0 {
        return Err(Error::param("probe strip contains no quadrature points"));
    }
    Ok((num / den).sqrt())
}

/// Axis-aligned rectangle `x1 ∈ [x1.0, x1.1]`, `x2 ∈ [x2.0, x2.1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x1: (0.0, 1.0),
        x2: (0.0, 1.0),
    };

    pub fn strip(x1: (f64, f64)) -> Rect {
        Rect { x1, x2: (0.0, 1.0) }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        x[0] >= self.x1.0 && x[0] <= self.x1.1 && x[1] >= self.x2.0 && x[1] <= self.x2.1
    }
}

/// Triangles of `mesh` whose barycenter lies in `region`.
pub(crate) fn triangles_in(mesh: &DomainMesh, region: &Rect) -> Vec<usize> {
    (0..mesh.mesh.triangles.len())
        .filter(|&t| region.contains(mesh.mesh.barycenter(t)))
        .collect()
}

/// Squared L² norm of a nodal field over the listed triangles.
pub(crate) fn l2_squared(mesh: &DomainMesh, u: &[Complex64], tris: &[usize]) -> f64 {
    tris.iter()
        .map(|&t| {
            let tri = mesh.mesh.triangles[t];
            let area = crate::mesh::triangle_area(&mesh.mesh.vertices(t));
            QUAD7
                .iter()
                .map(|(b, w)| {
                    (u[tri[0]] * b[0] + u[tri[1]] * b[1] + u[tri[2]] * b[2]).norm_sqr() * w
                })
                .sum::<f64>()
                * area
        })
        .sum()
}

/// L² norm over `region`, optionally restricted to inclusion triangles.
pub fn region_norm(sol: &FieldSolution, region: &Rect, inclusions_only: bool) -> f64 {
    let tris: Vec<usize> = triangles_in(&sol.mesh, region)
        .into_iter()
        .filter(|&t| !inclusions_only || sol.mesh.mesh.regions[t] == Region::Inclusion)
        .collect();
    l2_squared(&sol.mesh, &sol.u, &tris).sqrt()
}

/// Relative L² distance between a P1 field and an exact function.
pub fn relative_l2_error(sol: &FieldSolution, exact: impl Fn([f64; 2]) -> Complex64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, tri) in sol.mesh.mesh.triangles.iter().enumerate() {
        let v = sol.mesh.mesh.vertices(t);
        let area = crate::mesh::triangle_area(&v);
        for (b, w) in &QUAD7 {
            let uh = sol.u[tri[0]] * b[0] + sol.u[tri[1]] * b[1] + sol.u[tri[2]] * b[2];
            let ue = exact(map_point(&v, b));
            num += (uh - ue).norm_sqr() * w * area;
            den += ue.norm_sqr() * w * area;
        }
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_microstructure, GeometryId, ShapeVariant};

    fn sigma1() -> Microstructure {
        make_microstructure(GeometryId::Sigma1, ShapeVariant::SquareBase, 0.25).unwrap()
    }

    #[test]
    fn mesh_sizes() {
        let d = MacroDomain::default();
        let m = build_domain_mesh(&d, &sigma1(), 8).unwrap();
        assert_eq!(m.h, 1.0 / 64.0);
        assert_eq!(m.mesh.triangles.len(), 8192);
        assert_eq!(m.boundary.len(), 256);
        let d16 = MacroDomain::new((0.25, 0.75), 1.0 / 16.0).unwrap();
        assert_eq!(build_domain_mesh(&d16, &sigma1(), 8).unwrap().h, 1.0 / 128.0);
        assert!(matches!(build_domain_mesh(&d, &sigma1(), 6), Err(Error::Parameter(_))));
        assert!(matches!(
            build_domain_mesh_capped(&d, &sigma1(), 8, 1000),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn boundary_normals_point_outward() {
        let d = MacroDomain::default();
        let m = build_macro_mesh(&d, 8).unwrap();
        for e in &m.boundary {
            let p = m.mesh.nodes[e.nodes[0]];
            let q = m.mesh.nodes[e.nodes[1]];
            let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
            let inward = [mid[0] - 0.5, mid[1] - 0.5];
            assert!(inward[0] * e.normal[0] + inward[1] * e.normal[1] > 0.0);
        }
        assert!(build_macro_mesh(&d, 6).is_err());
    }

    #[test]
    fn impedance_data_vanishes_on_outflow_face() {
        let w = IncidentWave::from_right(12.0).unwrap();
        assert_eq!(w.impedance_data([0.0, 0.3], [-1.0, 0.0]), Complex64::new(0.0, 0.0));
        assert!(IncidentWave::new(12.0, [1.0, 1.0]).is_err());
    }

    #[test]
    fn homogeneous_plane_wave_is_reproduced() {
        let d = MacroDomain::default();
        let mesh = Arc::new(build_macro_mesh(&d, 64).unwrap());
        let wave = IncidentWave::from_right(12.0).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let (u, diag) =
            solve_slab_coefficients(&mesh, scalar_tensor(one), one, &wave, SolveOptions::default())
                .unwrap();
        assert!(diag.residual < 1e-8 && diag.symmetry_defect < 1e-10);
        let sol = FieldSolution {
            mesh: Arc::clone(&mesh),
            u,
            mode: Mode::Homogenized,
            k0: 12.0,
            eta: d.eta,
            eps1: None,
            diagnostics: Some(diag),
        };
        assert!(relative_l2_error(&sol, |x| wave.value(x)) < 0.05);
        let t = measure_transmission(&sol, DEFAULT_STRIP).unwrap();
        assert!((t - 1.0).abs() < 0.05, "T = {t}");
        assert!((region_norm(&sol, &Rect::UNIT, false) - 1.0).abs() < 0.05);
        assert_eq!(region_norm(&sol.zeros_like(), &Rect::UNIT, false), 0.0);
        assert!(measure_transmission(&sol, (0.1, 0.3)).is_err());
    }

    #[test]
    fn interpolation_reproduces_nodal_values() {
        let d = MacroDomain::default();
        let mesh = Arc::new(build_macro_mesh(&d, 8).unwrap());
        let u: Vec<Complex64> = mesh
            .mesh
            .nodes
            .iter()
            .map(|p| Complex64::new(2.0 * p[0] - p[1], p[0]))
            .collect();
        let sol = FieldSolution {
            mesh: Arc::clone(&mesh),
            u,
            mode: Mode::Homogenized,
            k0: 1.0,
            eta: d.eta,
            eps1: None,
            diagnostics: None,
        };
        let v = sol.eval([0.3, 0.77]);
        assert!((v - Complex64::new(0.6 - 0.77, 0.3)).norm() < 1e-13);
    }
}
