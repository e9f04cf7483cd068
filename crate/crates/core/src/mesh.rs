//! Structured triangulations of rectangles.
//!
//! Every grid square `(i, j)` is split along its rising diagonal into the
//! counter-clockwise triangles `[(i,j), (i+1,j), (i+1,j+1)]` and
//! `[(i,j), (i+1,j+1), (i,j+1)]`. Node `(i, j)` has index `i + j·(nx+1)`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Air,
    Inclusion,
    /// Slab carrying effective (homogenized) coefficients.
    Homogenized,
}

impl Region {
    pub fn code(self) -> i32 {
        match self {
            Region::Air => 0,
            Region::Inclusion => 1,
            Region::Homogenized => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl StructuredGrid {
    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn triangle_count(&self) -> usize {
        2 * self.nx * self.ny
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i + j * (self.nx + 1)
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    /// Triangle containing `x` (clamped to the grid) and the barycentric
    /// coordinates of `x` with respect to its vertices.
    pub fn locate(&self, x: [f64; 2]) -> (usize, [f64; 3]) {
        let sx = (x[0] - self.origin[0]) / self.h;
        let sy = (x[1] - self.origin[1]) / self.h;
        let i = (sx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (sy.floor().max(0.0) as usize).min(self.ny - 1);
        let u = (sx - i as f64).clamp(0.0, 1.0);
        let v = (sy - j as f64).clamp(0.0, 1.0);
        let square = i + j * self.nx;
        if v <= u {
            // vertices (i,j), (i+1,j), (i+1,j+1)
            (2 * square, [1.0 - u, u - v, v])
        } else {
            // vertices (i,j), (i+1,j+1), (i,j+1)
            (2 * square + 1, [1.0 - v, u, v - u])
        }
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub grid: StructuredGrid,
}

impl TriMesh {
    /// Builds the grid and tags each triangle by evaluating `region_of` at
    /// its barycenter.
    pub fn structured(grid: StructuredGrid, region_of: impl Fn([f64; 2]) -> Region) -> Self {
        let mut nodes = Vec::with_capacity(grid.node_count());
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                nodes.push(grid.node(i, j));
            }
        }
        let mut triangles = Vec::with_capacity(grid.triangle_count());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let a = grid.node_index(i, j);
                let b = grid.node_index(i + 1, j);
                let c = grid.node_index(i + 1, j + 1);
                let d = grid.node_index(i, j + 1);
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let regions = triangles
            .iter()
            .map(|t| region_of(barycenter(&nodes, t)))
            .collect();
        TriMesh {
            nodes,
            triangles,
            regions,
            grid,
        }
    }

    pub fn vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    pub fn barycenter(&self, t: usize) -> [f64; 2] {
        barycenter(&self.nodes, &self.triangles[t])
    }

    pub fn count(&self, region: Region) -> usize {
        self.regions.iter().filter(|&&r| r == region).count()
    }

    pub fn area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.regions[t] == region)
            .map(|t| triangle_area(&self.vertices(t)))
            .sum()
    }
}

fn barycenter(nodes: &[[f64; 2]], t: &[usize; 3]) -> [f64; 2] {
    let [a, b, c] = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

pub fn triangle_area(v: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

/// Gradients of the three barycentric basis functions and the triangle area.
pub fn p1_gradients(v: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area = triangle_area(v);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = v[(k + 1) % 3];
        let b = v[(k + 2) % 3];
        g[k] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
    }
    (g, area)
}

/// Symmetric 7-point rule of degree 5 on the reference triangle:
/// barycentric coordinates and weights summing to one.
pub const QUAD7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506_2;
    const W2: f64 = 0.125_939_180_544_827_1;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// 3-point Gauss–Legendre rule on `[0, 1]`.
pub const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

pub fn map_point(v: &[[f64; 2]; 3], bary: &[f64; 3]) -> [f64; 2] {
    [
        bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
        bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
    ]
}
