//! Legacy ASCII VTK export of nodal fields on triangle meshes.

use std::fmt::Write as _;

use crate::helmholtz::FieldSolution;

/// Unstructured grid with point arrays `re_u`, `im_u` and the cell array
/// `material` (0 air, 1 inclusion, 2 homogenized slab).
pub fn field_to_vtk(sol: &FieldSolution, title: &str) -> String {
    let mesh = &sol.mesh.mesh;
    let np = mesh.nodes.len();
    let nt = mesh.triangles.len();
    let mut s = String::with_capacity(64 * np + 32 * nt);
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(&title);
    s.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {np} double");
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "CELL_DATA {nt}");
    s.push_str("SCALARS material int 1\nLOOKUP_TABLE default\n");
    for r in &mesh.regions {
        let _ = writeln!(s, "{}", r.code());
    }
    let _ = writeln!(s, "POINT_DATA {np}");
    s.push_str("SCALARS re_u double 1\nLOOKUP_TABLE default\n");
    for u in &sol.u {
        let _ = writeln!(s, "{:.16e}", u.re);
    }
    s.push_str("SCALARS im_u double 1\nLOOKUP_TABLE default\n");
    for u in &sol.u {
        let _ = writeln!(s, "{:.16e}", u.im);
    }
    s
}
