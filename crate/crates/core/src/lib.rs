//! Transmission through periodic meta-material slabs: closed-form slab
//! coefficients, unit-cell homogenization, a fine-scale 2D Helmholtz solver
//! and a homogenized two-level pipeline.

pub mod error;
pub mod cell;
pub mod geometry;
pub mod helmholtz;
pub mod hmm;
pub mod linalg;
pub mod mesh;
pub mod runner;
pub mod slab;
pub mod vtk;

pub use error::{Error, Result};
pub use geometry::{
    make_microstructure, permittivity_at, GeometryId, IndexSet, IndexSets, MacroDomain,
    Microstructure, PermittivityField, ShapeVariant,
};
pub use mesh::{Region, StructuredGrid, TriMesh};
pub use num_complex::Complex64;
pub use slab::{
    closed_form_coeffs, field_ansatz_eval, interface_matching_oracle, layer_parameters,
    CoefficientSet, SlabParams,
};
pub use cell::{
    build_cell_mesh, solve_inclusion_corrector, solve_inclusion_resonance, solve_neumann_cell,
    solve_pc_permeability, solve_pc_permittivity, sweep_mu_eff, CellMesh, EffectiveTensors,
    InclusionCorrector, ResonanceCurve,
};
pub use helmholtz::{
    assemble_and_solve, build_domain_mesh, build_macro_mesh, measure_transmission, region_norm,
    DomainMesh, FieldSolution, IncidentWave, LateralBoundary, Mode, Rect, SolveOptions,
};
pub use hmm::{
    compare_fields, homogenized_solve, reconstruct_zeroth_order, run_hmm, HmmReport,
    HmmResolution, HomogenizedModel,
};
pub use runner::{
    parse_config, parse_config_str, run_mu_sweep, run_scenario, run_sweep, verify_oracle,
    RunMode, RunReport, ScenarioConfig, SweepSpec,
};
pub use vtk::field_to_vtk;
