//! Shared fixtures for the benchmarks.

use metawave_core::{make_microstructure, Complex64, GeometryId, Microstructure, ShapeVariant};

pub fn square(id: GeometryId) -> Microstructure {
    make_microstructure(id, ShapeVariant::SquareBase, 0.25).expect("valid microstructure")
}

/// `ε1` with `1/ε1 = 1 − 0.01i`.
pub fn lossy_eps1() -> Complex64 {
    Complex64::new(1.0, 0.0) / Complex64::new(1.0, -0.01)
}
