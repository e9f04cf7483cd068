//! Two-level homogenized pipeline for the magnetic-parallel reduction:
//! cell solves, a coarse macro solve with effective coefficients in the
//! slab, and zeroth-order reconstruction of the oscillating field.
//!
//! The media are exactly periodic, so a single cell solve serves every
//! macro quadrature point.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cell::{build_cell_mesh, solve_inclusion_corrector, solve_neumann_cell, InclusionCorrector};
use crate::error::{Error, Result};
use crate::geometry::{MacroDomain, Microstructure};
use crate::helmholtz::{
    assemble_and_solve, build_domain_mesh, build_macro_mesh, l2_squared, measure_transmission,
    solve_slab_coefficients, triangles_in, DomainMesh, FieldSolution, IncidentWave, Mode, Rect,
    SolveOptions, DEFAULT_STRIP,
};

/// Diagonal floor applied to the effective tensor when the macro system
/// cannot be factorized with the raw (degenerate) entries.
pub const TENSOR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedModel {
    pub a_eff: [[f64; 2]; 2],
    pub mu_eff: Complex64,
    pub k0: f64,
    pub eps1: Option<Complex64>,
}

impl HomogenizedModel {
    /// No meta-material: identity coefficients everywhere.
    pub fn vacuum(k0: f64) -> Self {
        HomogenizedModel {
            a_eff: [[1.0, 0.0], [0.0, 1.0]],
            mu_eff: Complex64::new(1.0, 0.0),
            k0,
            eps1: None,
        }
    }

    /// Effective model and inclusion corrector from the unit cell.
    pub fn from_cell(
        m: &Microstructure,
        cell_n: usize,
        k0: f64,
        eps1: Complex64,
    ) -> Result<(Self, InclusionCorrector)> {
        let cell = build_cell_mesh(m, cell_n)?;
        let a_eff = solve_neumann_cell(&cell)?;
        let corrector = solve_inclusion_corrector(&cell, k0, 1.0, 1.0, eps1)?;
        Ok((
            HomogenizedModel {
                a_eff,
                mu_eff: corrector.mu_eff,
                k0,
                eps1: Some(eps1),
            },
            corrector,
        ))
    }

    /// Model of the microstructure turned by 90° in the cross-section.
    pub fn rotated(&self) -> Self {
        let a = self.a_eff;
        HomogenizedModel {
            a_eff: [[a[1][1], a[1][0]], [a[0][1], a[0][0]]],
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        let a = self.a_eff;
        let sym = (a[0][1] - a[1][0]).abs() <= 1e-10 * (1.0 + a[0][0].abs() + a[1][1].abs());
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let psd = tr >= -1e-12 && det >= -1e-12 * (1.0 + tr * tr);
        if !sym || !psd || !self.mu_eff.is_finite() {
            return Err(Error::param(format!(
                "effective model must have a symmetric psd tensor and finite mu_eff: {self:?}"
            )));
        }
        Ok(())
    }
}

fn complexify(a: [[f64; 2]; 2]) -> [[Complex64; 2]; 2] {
    a.map(|row| row.map(|v| Complex64::new(v, 0.0)))
}

/// Macro solve with `(A_eff, μ_eff)` in the slab and `(I, 1)` outside.
pub fn homogenized_solve(
    mesh: &Arc<DomainMesh>,
    model: &HomogenizedModel,
    wave: &IncidentWave,
    opts: SolveOptions,
) -> Result<FieldSolution> {
    model.validate()?;
    if (model.k0 - wave.k0).abs() > 1e-12 * wave.k0.max(1.0) {
        return Err(Error::Consistency(format!(
            "effective model computed at k0 = {} but the incident wave has k0 = {}",
            model.k0, wave.k0
        )));
    }
    let solved = solve_slab_coefficients(mesh, complexify(model.a_eff), model.mu_eff, wave, opts);
    let (u, diag) = match solved {
        Ok(ok) => ok,
        Err(Error::Solver(_)) | Err(Error::Accuracy { .. }) => {
            let mut a = model.a_eff;
            a[0][0] = a[0][0].max(TENSOR_FLOOR);
            a[1][1] = a[1][1].max(TENSOR_FLOOR);
            log::warn!("macro factorization failed; retrying with tensor floor {TENSOR_FLOOR}");
            solve_slab_coefficients(mesh, complexify(a), model.mu_eff, wave, opts)?
        }
        Err(e) => return Err(e),
    };
    Ok(FieldSolution {
        mesh: Arc::clone(mesh),
        u,
        mode: Mode::Homogenized,
        k0: wave.k0,
        eta: mesh.domain.eta,
        eps1: model.eps1,
        diagnostics: Some(diag),
    })
}

/// Zeroth-order reconstruction `u⁰ = û (1 + w({x/η}))` inside the slab and
/// `u⁰ = û` elsewhere, sampled at the nodes of `fine`.
pub fn reconstruct_zeroth_order(
    macro_sol: &FieldSolution,
    corrector: &InclusionCorrector,
    fine: &Arc<DomainMesh>,
) -> Result<FieldSolution> {
    if (macro_sol.k0 - corrector.k0).abs() > 1e-12 * corrector.k0.max(1.0) {
        return Err(Error::Consistency(format!(
            "macro field solved at k0 = {} but the corrector was computed at k0 = {}",
            macro_sol.k0, corrector.k0
        )));
    }
    if let Some(e) = macro_sol.eps1 {
        if (e - corrector.eps1).norm() > 1e-12 * e.norm() {
            return Err(Error::Consistency(format!(
                "macro field uses eps1 = {e} but the corrector uses {}",
                corrector.eps1
            )));
        }
    }
    let domain = fine.domain;
    let u = fine
        .mesh
        .nodes
        .iter()
        .map(|&x| {
            let u_hat = macro_sol.eval(x);
            if domain.in_slab(x[0]) {
                u_hat * (Complex64::new(1.0, 0.0) + corrector.eval(domain.cell_coordinate(x)))
            } else {
                u_hat
            }
        })
        .collect();
    Ok(FieldSolution {
        mesh: Arc::clone(fine),
        u,
        mode: Mode::Homogenized,
        k0: macro_sol.k0,
        eta: domain.eta,
        eps1: Some(corrector.eps1),
        diagnostics: None,
    })
}

/// Relative L² difference `‖a − b‖ / ‖b‖` over `region`, evaluated on the
/// finer of the two meshes after nodal interpolation of the coarser field.
pub fn compare_fields(a: &FieldSolution, b: &FieldSolution, region: &Rect) -> Result<f64> {
    let fine = if a.mesh.h <= b.mesh.h { &a.mesh } else { &b.mesh };
    let tris = triangles_in(fine, region);
    if tris.is_empty() {
        return Err(Error::param(format!(
            "comparison region {region:?} contains no mesh triangles"
        )));
    }
    let ua = a.interpolate_to(fine);
    let ub = b.interpolate_to(fine);
    let diff: Vec<Complex64> = ua.iter().zip(&ub).map(|(x, y)| x - y).collect();
    let num = l2_squared(fine, &diff, &tris);
    let den = l2_squared(fine, &ub, &tris);
    if num == 0.0 {
        return Ok(0.0);
    }
    if den == 0.0 {
        return Err(Error::param("reference field vanishes on the comparison region"));
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmmResolution {
    pub cell_n: usize,
    pub macro_n: usize,
    pub cells_per_eta: usize,
}

impl Default for HmmResolution {
    fn default() -> Self {
        HmmResolution {
            cell_n: 64,
            macro_n: 32,
            cells_per_eta: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmReport {
    #[serde(rename = "gamma_or_Aeff")]
    pub a_eff: [[f64; 2]; 2],
    pub mu_eff: Complex64,
    #[serde(rename = "T_num_macro")]
    pub t_num_macro: f64,
    #[serde(rename = "T_num_fine")]
    pub t_num_fine: f64,
    /// `u⁰` against the fine reference over `Q_L`.
    #[serde(rename = "rel_err_QL")]
    pub rel_err_ql: f64,
    /// `u⁰` against the fine reference over `Q_M`.
    #[serde(rename = "rel_err_QM")]
    pub rel_err_qm: f64,
    /// `û` (no corrector) against the fine reference over `Q_M`.
    #[serde(rename = "rel_err_QM_uncorrected")]
    pub rel_err_qm_uncorrected: f64,
    pub macro_nodes: usize,
    pub fine_nodes: usize,
}

pub struct HmmRun {
    pub report: HmmReport,
    pub macro_solution: FieldSolution,
    pub reconstruction: FieldSolution,
    pub fine: FieldSolution,
}

/// Cell solves, macro solve, reconstruction and fine reference for one
/// configuration.
pub fn run_hmm(
    domain: &MacroDomain,
    m: &Microstructure,
    eps1: Complex64,
    wave: &IncidentWave,
    res: HmmResolution,
    opts: SolveOptions,
) -> Result<HmmRun> {
    let (model, corrector) = HomogenizedModel::from_cell(m, res.cell_n, wave.k0, eps1)?;
    let macro_mesh = Arc::new(build_macro_mesh(domain, res.macro_n)?);
    let macro_solution = homogenized_solve(&macro_mesh, &model, wave, opts)?;
    let fine_mesh = Arc::new(build_domain_mesh(domain, m, res.cells_per_eta)?);
    let fine = assemble_and_solve(&fine_mesh, Mode::HParallel, eps1, wave, opts)?;
    let reconstruction = reconstruct_zeroth_order(&macro_solution, &corrector, &fine_mesh)?;
    let ql = Rect::strip((0.0, domain.qm.0));
    let qm = Rect::strip(domain.qm);
    let report = HmmReport {
        a_eff: model.a_eff,
        mu_eff: model.mu_eff,
        t_num_macro: measure_transmission(&macro_solution, DEFAULT_STRIP)?,
        t_num_fine: measure_transmission(&fine, DEFAULT_STRIP)?,
        rel_err_ql: compare_fields(&reconstruction, &fine, &ql)?,
        rel_err_qm: compare_fields(&reconstruction, &fine, &qm)?,
        rel_err_qm_uncorrected: compare_fields(&macro_solution, &fine, &qm)?,
        macro_nodes: macro_mesh.node_count(),
        fine_nodes: fine_mesh.node_count(),
    };
    Ok(HmmRun {
        report,
        macro_solution,
        reconstruction,
        fine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::solve_inclusion_corrector;
    use crate::geometry::{make_microstructure, GeometryId, ShapeVariant};
    use crate::helmholtz::LateralBoundary;

    fn sigma1() -> Microstructure {
        make_microstructure(GeometryId::Sigma1, ShapeVariant::SquareBase, 0.25).unwrap()
    }

    #[test]
    fn vacuum_model_matches_fine_solve_without_inclusions() {
        let d = MacroDomain::default();
        let wave = IncidentWave::from_right(12.0).unwrap();
        let mesh = Arc::new(build_macro_mesh(&d, 64).unwrap());
        let u = homogenized_solve(&mesh, &HomogenizedModel::vacuum(12.0), &wave, SolveOptions::default())
            .unwrap();
        let exact = FieldSolution {
            u: mesh.mesh.nodes.iter().map(|&x| wave.value(x)).collect(),
            diagnostics: None,
            ..u.clone()
        };
        assert!(compare_fields(&u, &exact, &Rect::UNIT).unwrap() < 0.05);
        assert_eq!(compare_fields(&u, &u, &Rect::UNIT).unwrap(), 0.0);
        let empty = Rect {
            x1: (2.0, 3.0),
            x2: (0.0, 1.0),
        };
        assert!(compare_fields(&u, &u, &empty).is_err());
    }

    #[test]
    fn mismatched_frequencies_are_rejected() {
        let d = MacroDomain::default();
        let wave = IncidentWave::from_right(12.0).unwrap();
        let mesh = Arc::new(build_macro_mesh(&d, 16).unwrap());
        let err = homogenized_solve(&mesh, &HomogenizedModel::vacuum(11.0), &wave, SolveOptions::default());
        assert!(matches!(err, Err(Error::Consistency(_))));

        let u = homogenized_solve(&mesh, &HomogenizedModel::vacuum(12.0), &wave, SolveOptions::default())
            .unwrap();
        let cell = build_cell_mesh(&sigma1(), 16).unwrap();
        let w = solve_inclusion_corrector(&cell, 10.0, 1.0, 1.0, Complex64::new(1.0, 0.0)).unwrap();
        let fine = Arc::new(build_domain_mesh(&d, &sigma1(), 4).unwrap());
        assert!(matches!(
            reconstruct_zeroth_order(&u, &w, &fine),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn reconstruction_only_changes_inclusions() {
        let d = MacroDomain::default();
        let k0 = 6.0;
        let eps1 = Complex64::new(1.0, 0.1);
        let wave = IncidentWave::from_right(k0).unwrap();
        let (model, w) = HomogenizedModel::from_cell(&sigma1(), 16, k0, eps1).unwrap();
        let mesh = Arc::new(build_macro_mesh(&d, 16).unwrap());
        let opts = SolveOptions {
            lateral: LateralBoundary::Periodic,
        };
        let u = homogenized_solve(&mesh, &model, &wave, opts).unwrap();
        let fine = Arc::new(build_domain_mesh(&d, &sigma1(), 8).unwrap());
        let u0 = reconstruct_zeroth_order(&u, &w, &fine).unwrap();
        let u_hat = u.interpolate_to(&fine);
        let mut changed = 0;
        for (node, x) in fine.mesh.nodes.iter().enumerate() {
            if (u0.u[node] - u_hat[node]).norm() > 1e-14 {
                changed += 1;
                assert!(d.in_slab(x[0]) && sigma1().contains(d.cell_coordinate(*x)));
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn rotation_swaps_axes() {
        let m = HomogenizedModel {
            a_eff: [[0.5, 0.0], [0.0, 1e-6]],
            ..HomogenizedModel::vacuum(1.0)
        };
        assert_eq!(m.rotated().a_eff, [[1e-6, 0.0], [0.0, 0.5]]);
    }
}
