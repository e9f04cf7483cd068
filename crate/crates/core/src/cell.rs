//! Periodic P1 finite elements on the unit cell `Y = [0,1)²`.
//!
//! Opposite boundary nodes are merged into one degree of freedom, so node
//! `(i, j)` carries DOF `(i mod n) + (j mod n)·n`.
//!
//! Four cell problems are provided:
//! - the floating-conductor potential giving the perfect-conductor
//!   permittivity entry `γ`,
//! - the stream-function problems giving the perfect-conductor permeability,
//! - the perforated Neumann problem giving the diffusion tensor `A_eff` of
//!   the air skeleton,
//! - the high-contrast inclusion problem giving the frequency-dependent
//!   permeability `μ_eff(ω)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Microstructure;
use crate::linalg::TripletBuilder;
use crate::mesh::{p1_gradients, Region, StructuredGrid, TriMesh};

/// Relative residual required from every cell solve.
pub const CELL_RESIDUAL_TOL: f64 = 1e-10;

/// Solution amplitude (relative to `k0²`) above which the inclusion problem
/// is considered to sit on a Dirichlet eigenvalue.
const RESONANCE_BLOWUP: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct CellMesh {
    pub mesh: TriMesh,
    pub n: usize,
    pub microstructure: Microstructure,
    dof: Vec<usize>,
}

pub fn build_cell_mesh(m: &Microstructure, n: usize) -> Result<CellMesh> {
    if n == 0 || !n.is_multiple_of(4) {
        return Err(Error::param(format!(
            "cell resolution must be a positive multiple of 4, got {n}"
        )));
    }
    let grid = StructuredGrid {
        origin: [0.0, 0.0],
        h: 1.0 / n as f64,
        nx: n,
        ny: n,
    };
    let mesh = TriMesh::structured(grid, |y| {
        if m.contains(y) {
            Region::Inclusion
        } else {
            Region::Air
        }
    });
    let dof = (0..=n)
        .flat_map(|j| (0..=n).map(move |i| (i % n) + (j % n) * n))
        .collect();
    Ok(CellMesh {
        mesh,
        n,
        microstructure: *m,
        dof,
    })
}

impl CellMesh {
    pub fn dof_count(&self) -> usize {
        self.n * self.n
    }

    pub fn dof(&self, node: usize) -> usize {
        self.dof[node]
    }

    /// Node pairs identified across the faces `y1 = 0 ~ 1` and `y2 = 0 ~ 1`,
    /// corners included; `n + 1` pairs per axis.
    pub fn periodic_pairs(&self) -> [Vec<(usize, usize)>; 2] {
        let g = &self.mesh.grid;
        let n = self.n;
        let across_1 = (0..=n)
            .map(|j| (g.node_index(0, j), g.node_index(n, j)))
            .collect();
        let across_2 = (0..=n)
            .map(|i| (g.node_index(i, 0), g.node_index(i, n)))
            .collect();
        [across_1, across_2]
    }

    /// Periodic partner of a boundary node (the node itself when interior).
    /// Applying it twice returns the original node.
    pub fn partner(&self, node: usize) -> usize {
        let n = self.n;
        let i = node % (n + 1);
        let j = node / (n + 1);
        let flip = |k: usize| if k == 0 { n } else if k == n { 0 } else { k };
        self.mesh.grid.node_index(flip(i), flip(j))
    }

    pub fn region_area(&self, region: Region) -> f64 {
        self.mesh.area(region)
    }

    fn dof_touch(&self, region: Region) -> Vec<bool> {
        let mut touch = vec![false; self.dof_count()];
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            if self.mesh.regions[t] == region {
                for &v in tri {
                    touch[self.dof[v]] = true;
                }
            }
        }
        touch
    }

    fn require_compact(&self) -> Result<()> {
        let on_face = self.mesh.triangles.iter().enumerate().any(|(t, tri)| {
            self.mesh.regions[t] == Region::Inclusion
                && tri.iter().any(|&v| {
                    let p = self.mesh.nodes[v];
                    p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0
                })
        });
        if on_face {
            Err(Error::Geometry(format!(
                "{} inclusion touches the cell boundary; the conductor problem needs a compact inclusion",
                self.microstructure.id
            )))
        } else {
            Ok(())
        }
    }

    fn has_inclusion(&self) -> bool {
        self.mesh.regions.contains(&Region::Inclusion)
    }
}

/// Periodic potential `ψ` harmonic in air with `∇ψ + d` flux-free, equal to
/// `−d·y` on the inclusion (the floating constant is fixed to zero). Returns
/// the per-air-triangle field `∇ψ + d` paired with the triangle area.
fn floating_potential(cell: &CellMesh, d: [f64; 2]) -> Result<Vec<(f64, [f64; 2])>> {
    let ndof = cell.dof_count();
    let air = cell.dof_touch(Region::Air);
    let incl = cell.dof_touch(Region::Inclusion);
    let mut values = vec![0.0; ndof];
    let mut free_index = vec![usize::MAX; ndof];
    let mut nfree = 0;
    for (node, p) in cell.mesh.nodes.iter().enumerate() {
        let k = cell.dof[node];
        if incl[k] {
            values[k] = -(d[0] * p[0] + d[1] * p[1]);
        }
    }
    for k in 0..ndof {
        if air[k] && !incl[k] {
            free_index[k] = nfree;
            nfree += 1;
        }
    }
    let mut builder = TripletBuilder::<f64>::with_capacity(nfree, 9 * cell.mesh.triangles.len());
    let mut rhs = vec![0.0; nfree];
    for (t, tri) in cell.mesh.triangles.iter().enumerate() {
        if cell.mesh.regions[t] != Region::Air {
            continue;
        }
        let (g, area) = p1_gradients(&cell.mesh.vertices(t));
        for a in 0..3 {
            let ka = cell.dof[tri[a]];
            let ia = free_index[ka];
            if ia == usize::MAX {
                continue;
            }
            rhs[ia] -= area * (g[a][0] * d[0] + g[a][1] * d[1]);
            for b in 0..3 {
                let kb = cell.dof[tri[b]];
                let kab = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                match free_index[kb] {
                    usize::MAX => rhs[ia] -= kab * values[kb],
                    ib => builder.add(ia, ib, kab),
                }
            }
        }
    }
    let k = builder.build();
    let x = k.solve(&rhs, CELL_RESIDUAL_TOL).map_err(|e| match e {
        Error::Accuracy { .. } | Error::Solver(_) => Error::Geometry(format!(
            "conductor potential problem is singular ({e}); the air region is disconnected"
        )),
        other => other,
    })?;
    for k in 0..ndof {
        if free_index[k] != usize::MAX {
            values[k] = x[free_index[k]];
        }
    }
    Ok(cell
        .mesh
        .triangles
        .iter()
        .enumerate()
        .filter(|(t, _)| cell.mesh.regions[*t] == Region::Air)
        .map(|(t, tri)| {
            let (g, area) = p1_gradients(&cell.mesh.vertices(t));
            let mut e = d;
            for a in 0..3 {
                let v = values[cell.dof[tri[a]]];
                e[0] += v * g[a][0];
                e[1] += v * g[a][1];
            }
            (area, e)
        })
        .collect())
}

/// Perfect-conductor permittivity entry `γ = ∫_air |∇φ + e1|²`.
pub fn solve_pc_permittivity(cell: &CellMesh) -> Result<f64> {
    if !cell.has_inclusion() {
        return Ok(1.0);
    }
    cell.require_compact()?;
    let field = floating_potential(cell, [1.0, 0.0])?;
    Ok(field
        .iter()
        .map(|(area, e)| area * (e[0] * e[0] + e[1] * e[1]))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcPermeability {
    pub tensor: [[f64; 3]; 3],
}

impl PcPermeability {
    pub fn diagonal(&self) -> [f64; 3] {
        [self.tensor[0][0], self.tensor[1][1], self.tensor[2][2]]
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let t = &self.tensor;
        [t[0][1], t[1][0], t[0][2], t[2][0], t[1][2], t[2][1]]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Perfect-conductor permeability from the in-plane stream-function
/// problems; the out-of-plane entry is the air fraction `alpha`.
pub fn solve_pc_permeability(cell: &CellMesh, alpha: f64) -> Result<PcPermeability> {
    if !cell.has_inclusion() {
        let mut tensor = [[0.0; 3]; 3];
        tensor[0][0] = 1.0;
        tensor[1][1] = 1.0;
        tensor[2][2] = alpha;
        return Ok(PcPermeability { tensor });
    }
    cell.require_compact()?;
    // column 1: H = rot(ψ + y2) = (∂2ψ + 1, −∂1ψ)
    let f1 = floating_potential(cell, [0.0, 1.0])?;
    // column 2: H = rot(ψ − y1) = (∂2ψ, 1 − ∂1ψ)
    let f2 = floating_potential(cell, [-1.0, 0.0])?;
    let integrate = |f: &[(f64, [f64; 2])]| {
        f.iter().fold([0.0, 0.0], |acc, (area, g)| {
            [acc[0] + area * g[1], acc[1] - area * g[0]]
        })
    };
    let h1 = integrate(&f1);
    let h2 = integrate(&f2);
    let tensor = [[h1[0], h2[0], 0.0], [h1[1], h2[1], 0.0], [0.0, 0.0, alpha]];
    Ok(PcPermeability { tensor })
}

/// Diffusion tensor of the air skeleton with flux-free inclusion boundaries:
/// `A[k][l] = ∫_air (∇χ^l + e_l)·(∇χ^k + e_k)`.
pub fn solve_neumann_cell(cell: &CellMesh) -> Result<[[f64; 2]; 2]> {
    let ndof = cell.dof_count();
    let air = cell.dof_touch(Region::Air);
    let mut index = vec![usize::MAX; ndof];
    let mut nfree = 0;
    for k in 0..ndof {
        if air[k] {
            index[k] = nfree;
            nfree += 1;
        }
    }
    if nfree == 0 {
        return Ok([[0.0; 2]; 2]);
    }
    // one pinned DOF per connected component of the air skeleton
    let mut parent: Vec<usize> = (0..nfree).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let air_tris: Vec<usize> = (0..cell.mesh.triangles.len())
        .filter(|&t| cell.mesh.regions[t] == Region::Air)
        .collect();
    for &t in &air_tris {
        let tri = cell.mesh.triangles[t];
        let r0 = find(&mut parent, index[cell.dof[tri[0]]]);
        for &v in &tri[1..] {
            let r = find(&mut parent, index[cell.dof[v]]);
            if r != r0 {
                let (lo, hi) = (r0.min(r), r0.max(r));
                parent[hi] = lo;
            }
        }
    }
    let pinned: Vec<bool> = (0..nfree).map(|i| find(&mut parent, i) == i).collect();

    let mut builder = TripletBuilder::<f64>::with_capacity(nfree, 9 * air_tris.len());
    let mut rhs = [vec![0.0; nfree], vec![0.0; nfree]];
    let elems: Vec<([usize; 3], [[f64; 2]; 3], f64)> = air_tris
        .iter()
        .map(|&t| {
            let tri = cell.mesh.triangles[t];
            let (g, area) = p1_gradients(&cell.mesh.vertices(t));
            ([0, 1, 2].map(|a| index[cell.dof[tri[a]]]), g, area)
        })
        .collect();
    for (ids, g, area) in &elems {
        for a in 0..3 {
            if pinned[ids[a]] {
                continue;
            }
            for (l, r) in rhs.iter_mut().enumerate() {
                r[ids[a]] -= area * g[a][l];
            }
            for b in 0..3 {
                if !pinned[ids[b]] {
                    builder.add(ids[a], ids[b], area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]));
                }
            }
        }
    }
    for (i, &p) in pinned.iter().enumerate() {
        if p {
            builder.add(i, i, 1.0);
        }
    }
    let k = builder.build();
    let chi = [
        k.solve(&rhs[0], CELL_RESIDUAL_TOL)?,
        k.solve(&rhs[1], CELL_RESIDUAL_TOL)?,
    ];
    let mut a_eff = [[0.0; 2]; 2];
    for (ids, g, area) in &elems {
        let mut grad = [[0.0; 2]; 2];
        for l in 0..2 {
            grad[l][l] = 1.0;
            for a in 0..3 {
                grad[l][0] += chi[l][ids[a]] * g[a][0];
                grad[l][1] += chi[l][ids[a]] * g[a][1];
            }
        }
        for kk in 0..2 {
            for l in 0..2 {
                a_eff[kk][l] += area * (grad[l][0] * grad[kk][0] + grad[l][1] * grad[kk][1]);
            }
        }
    }
    Ok(a_eff)
}

/// Solution of the inclusion problem `−(1/ε1) Δw = k0² (1 + w)` with `w = 0`
/// where the inclusion meets air.
#[derive(Debug, Clone)]
pub struct InclusionCorrector {
    pub omega: f64,
    pub k0: f64,
    pub eps1: Complex64,
    pub mu_eff: Complex64,
    /// Nodal values on the cell mesh (zero off the inclusion interior).
    pub w: Vec<Complex64>,
    pub grid: StructuredGrid,
}

impl InclusionCorrector {
    /// P1 interpolation of `w` at a cell coordinate in `[0, 1]²`.
    pub fn eval(&self, y: [f64; 2]) -> Complex64 {
        let (t, b) = self.grid.locate(y);
        let square = t / 2;
        let (i, j) = (square % self.grid.nx, square / self.grid.nx);
        let g = &self.grid;
        let verts = if t % 2 == 0 {
            [g.node_index(i, j), g.node_index(i + 1, j), g.node_index(i + 1, j + 1)]
        } else {
            [g.node_index(i, j), g.node_index(i + 1, j + 1), g.node_index(i, j + 1)]
        };
        verts
            .iter()
            .zip(b.iter())
            .map(|(&v, &c)| self.w[v] * c)
            .sum()
    }
}

pub fn solve_inclusion_corrector(
    cell: &CellMesh,
    omega: f64,
    eps0: f64,
    mu0: f64,
    eps1: Complex64,
) -> Result<InclusionCorrector> {
    if !(omega >= 0.0 && omega.is_finite()) || eps0 <= 0.0 || mu0 <= 0.0 {
        return Err(Error::param(format!(
            "inclusion problem requires omega >= 0 and positive vacuum constants (omega = {omega})"
        )));
    }
    if eps1.norm() == 0.0 || !eps1.is_finite() {
        return Err(Error::param(format!("invalid inclusion permittivity {eps1}")));
    }
    let k0 = omega * (eps0 * mu0).sqrt();
    let k2 = k0 * k0;
    let ndof = cell.dof_count();
    let air = cell.dof_touch(Region::Air);
    let incl = cell.dof_touch(Region::Inclusion);
    let mut index = vec![usize::MAX; ndof];
    let mut nfree = 0;
    for k in 0..ndof {
        if incl[k] && !air[k] {
            index[k] = nfree;
            nfree += 1;
        }
    }
    let inv_eps = Complex64::new(1.0, 0.0) / eps1;
    let mut builder = TripletBuilder::<Complex64>::with_capacity(nfree, 9 * cell.mesh.triangles.len());
    let mut rhs = vec![Complex64::new(0.0, 0.0); nfree];
    for (t, tri) in cell.mesh.triangles.iter().enumerate() {
        if cell.mesh.regions[t] != Region::Inclusion {
            continue;
        }
        let (g, area) = p1_gradients(&cell.mesh.vertices(t));
        for a in 0..3 {
            let ia = index[cell.dof[tri[a]]];
            if ia == usize::MAX {
                continue;
            }
            rhs[ia] += Complex64::new(k2 * area / 3.0, 0.0);
            for b in 0..3 {
                let ib = index[cell.dof[tri[b]]];
                if ib == usize::MAX {
                    continue;
                }
                let stiff = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                let mass = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                builder.add(ia, ib, inv_eps * stiff - Complex64::new(k2 * mass, 0.0));
            }
        }
    }
    let k = builder.build();
    let near_resonance = |detail: String| {
        Error::Resonance(format!(
            "k0 = {k0:.6} with eps1 = {eps1} is at a Dirichlet eigenvalue of the inclusion ({detail})"
        ))
    };
    let x = k
        .solve(&rhs, CELL_RESIDUAL_TOL)
        .map_err(|e| near_resonance(e.to_string()))?;
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if peak > RESONANCE_BLOWUP * k2.max(1.0) {
        return Err(near_resonance(format!("|w| = {peak:.3e}")));
    }
    let w: Vec<Complex64> = cell
        .dof
        .iter()
        .map(|&k| match index[k] {
            usize::MAX => Complex64::new(0.0, 0.0),
            i => x[i],
        })
        .collect();
    let mut integral = Complex64::new(0.0, 0.0);
    for (t, tri) in cell.mesh.triangles.iter().enumerate() {
        if cell.mesh.regions[t] == Region::Inclusion {
            let area = crate::mesh::triangle_area(&cell.mesh.vertices(t));
            integral += (w[tri[0]] + w[tri[1]] + w[tri[2]]) * (area / 3.0);
        }
    }
    Ok(InclusionCorrector {
        omega,
        k0,
        eps1,
        mu_eff: Complex64::new(1.0, 0.0) + integral,
        w,
        grid: cell.mesh.grid,
    })
}

/// High-contrast effective permeability `μ_eff(ω) = 1 + ∫_inclusion w`.
pub fn solve_inclusion_resonance(
    cell: &CellMesh,
    omega: f64,
    eps0: f64,
    mu0: f64,
    eps1: Complex64,
) -> Result<Complex64> {
    solve_inclusion_corrector(cell, omega, eps0, mu0, eps1).map(|c| c.mu_eff)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSample {
    pub omega: f64,
    pub k0: f64,
    /// `None` when the sample failed (e.g. exactly on a resonance).
    pub mu: Option<Complex64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCurve {
    pub samples: Vec<ResonanceSample>,
}

impl ResonanceCurve {
    /// Indices `i` such that `Re μ` has opposite signs at samples `i` and `i + 1`.
    pub fn sign_changes(&self) -> Vec<usize> {
        self.samples
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| match (w[0].mu, w[1].mu) {
                (Some(a), Some(b)) if a.re * b.re < 0.0 => Some(i),
                _ => None,
            })
            .collect()
    }

    pub fn failed(&self) -> usize {
        self.samples.iter().filter(|s| s.mu.is_none()).count()
    }
}

/// Evaluates `μ_eff` over an increasing frequency grid. Samples run in
/// parallel; the result keeps grid order.
pub fn sweep_mu_eff(
    cell: &CellMesh,
    omegas: &[f64],
    eps0: f64,
    mu0: f64,
    eps1: Complex64,
) -> Result<ResonanceCurve> {
    if omegas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("frequency grid must be strictly increasing"));
    }
    let samples = omegas
        .par_iter()
        .map(|&omega| {
            let k0 = omega * (eps0 * mu0).sqrt();
            match solve_inclusion_resonance(cell, omega, eps0, mu0, eps1) {
                Ok(mu) => ResonanceSample {
                    omega,
                    k0,
                    mu: Some(mu),
                    error: None,
                },
                Err(e) => ResonanceSample {
                    omega,
                    k0,
                    mu: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(ResonanceCurve { samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensors {
    /// Perfect-conductor permittivity entry (compact inclusions only).
    pub gamma: Option<f64>,
    /// Diagonal of the perfect-conductor permeability (compact inclusions only).
    pub mu_pc: Option<[f64; 3]>,
    pub a_eff: [[f64; 2]; 2],
    pub mu_hc: Option<Complex64>,
}

/// Runs every cell problem applicable to the mesh's microstructure.
pub fn effective_tensors(
    cell: &CellMesh,
    high_contrast: Option<(f64, f64, f64, Complex64)>,
) -> Result<EffectiveTensors> {
    let compact = cell.microstructure.is_compact();
    let gamma = if compact {
        Some(solve_pc_permittivity(cell)?)
    } else {
        None
    };
    let mu_pc = if compact {
        Some(solve_pc_permeability(cell, cell.microstructure.alpha)?.diagonal())
    } else {
        None
    };
    let a_eff = solve_neumann_cell(cell)?;
    let mu_hc = match high_contrast {
        Some((omega, eps0, mu0, eps1)) => Some(solve_inclusion_resonance(cell, omega, eps0, mu0, eps1)?),
        None => None,
    };
    Ok(EffectiveTensors {
        gamma,
        mu_pc,
        a_eff,
        mu_hc,
    })
}
