//! Microstructures, the waveguide partition and the high-contrast permittivity.
//!
//! Unit-cell coordinates live in `[0, 1)²` with every inclusion centered at
//! `(1/2, 1/2)`. Membership tests use half-open intervals `[lo, hi)` so that
//! points on grid lines resolve deterministically.
//!
//! All geometry is expressed in the `(x1, x2)` cross-section. The two
//! microstructures whose cylinder axis is `e1` (`Sigma2`, `Sigma4`) are
//! represented in 2D by turning that axis onto `e3`, which is the only way to
//! obtain an `x3`-invariant structure; this keeps their air fraction unchanged.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryId {
    /// Metal cylinder along `e3`.
    Sigma1,
    /// Metal cylinder along `e1`.
    Sigma2,
    /// Metal plate perpendicular to `e2`.
    Sigma3,
    /// Metal cube with an air cylinder along `e1` removed.
    Sigma4,
}

impl GeometryId {
    pub const ALL: [GeometryId; 4] = [
        GeometryId::Sigma1,
        GeometryId::Sigma2,
        GeometryId::Sigma3,
        GeometryId::Sigma4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeometryId::Sigma1 => "sigma1",
            GeometryId::Sigma2 => "sigma2",
            GeometryId::Sigma3 => "sigma3",
            GeometryId::Sigma4 => "sigma4",
        }
    }

    pub fn index_sets(self) -> IndexSets {
        use IndexSet as S;
        match self {
            GeometryId::Sigma1 => IndexSets {
                n_sigma: S::of(&[1, 2]),
                l_sigma: S::of(&[3]),
                n_air: S::EMPTY,
            },
            GeometryId::Sigma2 => IndexSets {
                n_sigma: S::of(&[2, 3]),
                l_sigma: S::of(&[1]),
                n_air: S::EMPTY,
            },
            GeometryId::Sigma3 => IndexSets {
                n_sigma: S::of(&[2]),
                l_sigma: S::of(&[1, 3]),
                n_air: S::of(&[2]),
            },
            GeometryId::Sigma4 => IndexSets {
                n_sigma: S::EMPTY,
                l_sigma: S::of(&[1, 2, 3]),
                n_air: S::of(&[2, 3]),
            },
        }
    }
}

impl fmt::Display for GeometryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GeometryId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma1" => Ok(GeometryId::Sigma1),
            "sigma2" => Ok(GeometryId::Sigma2),
            "sigma3" => Ok(GeometryId::Sigma3),
            "sigma4" => Ok(GeometryId::Sigma4),
            other => Err(Error::param(format!("unknown geometry '{other}'"))),
        }
    }
}

/// Cross-section shape of the cylinder-type microstructures. Ignored for the plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeVariant {
    Round,
    /// Square of side `2r`; inclusion boundaries align with structured grids.
    #[default]
    SquareBase,
}

/// Subset of the axis labels `{1, 2, 3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct IndexSet(u8);

impl IndexSet {
    pub const EMPTY: IndexSet = IndexSet(0);

    pub fn of(axes: &[u8]) -> Self {
        let mut bits = 0;
        for &a in axes {
            assert!((1..=3).contains(&a), "axis label {a} out of range");
            bits |= 1 << (a - 1);
        }
        IndexSet(bits)
    }

    pub fn contains(self, axis: u8) -> bool {
        (1..=3).contains(&axis) && self.0 & (1 << (axis - 1)) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn axes(self) -> Vec<u8> {
        (1..=3).filter(|&a| self.contains(a)).collect()
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axes: Vec<String> = self.axes().iter().map(u8::to_string).collect();
        write!(f, "{{{}}}", axes.join(","))
    }
}

/// Topological index sets of a microstructure: non-looping metal directions,
/// looping metal directions, and non-looping air directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexSets {
    pub n_sigma: IndexSet,
    pub l_sigma: IndexSet,
    pub n_air: IndexSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Microstructure {
    pub id: GeometryId,
    pub variant: ShapeVariant,
    /// Cylinder radius, half side of the square base, or plate half-width.
    pub r: f64,
    /// Air volume fraction `|Y \ Σ|`.
    pub alpha: f64,
    pub index_sets: IndexSets,
    /// Cross-section turned by 90° in the `(x1, x2)` plane.
    pub quarter_turn: bool,
}

pub fn make_microstructure(id: GeometryId, variant: ShapeVariant, r: f64) -> Result<Microstructure> {
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::param(format!("r must lie in (0, 1/2), got {r}")));
    }
    let section = match variant {
        ShapeVariant::Round => PI * r * r,
        ShapeVariant::SquareBase => 4.0 * r * r,
    };
    let alpha = match id {
        GeometryId::Sigma1 | GeometryId::Sigma2 => 1.0 - section,
        GeometryId::Sigma3 => 1.0 - 2.0 * r,
        GeometryId::Sigma4 => section,
    };
    Ok(Microstructure {
        id,
        variant,
        r,
        alpha,
        index_sets: id.index_sets(),
        quarter_turn: false,
    })
}

impl Microstructure {
    /// The same microstructure with its cross-section turned by 90°.
    pub fn rotated(mut self) -> Self {
        self.quarter_turn = !self.quarter_turn;
        self
    }

    /// Whether the cell point `y ∈ [0,1)²` lies in the metal/inclusion cross-section.
    pub fn contains(&self, y: [f64; 2]) -> bool {
        let [mut a, mut b] = y;
        if self.quarter_turn {
            std::mem::swap(&mut a, &mut b);
        }
        let (lo, hi) = (0.5 - self.r, 0.5 + self.r);
        let in_band = |t: f64| lo <= t && t < hi;
        let in_base = || match self.variant {
            ShapeVariant::SquareBase => in_band(a) && in_band(b),
            ShapeVariant::Round => (a - 0.5).powi(2) + (b - 0.5).powi(2) < self.r * self.r,
        };
        match self.id {
            GeometryId::Sigma1 | GeometryId::Sigma2 => in_base(),
            GeometryId::Sigma3 => in_band(b),
            GeometryId::Sigma4 => !in_base(),
        }
    }

    /// Inclusion cross-section does not meet the cell boundary.
    pub fn is_compact(&self) -> bool {
        matches!(self.id, GeometryId::Sigma1 | GeometryId::Sigma2)
    }
}

/// Truncated waveguide cross-section `(0,1)²` with the meta-material slab
/// `Q_M = [qm.0, qm.1) × (0,1)` tiled by cells of size `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroDomain {
    pub qm: (f64, f64),
    pub eta: f64,
}

impl Default for MacroDomain {
    fn default() -> Self {
        MacroDomain {
            qm: (0.25, 0.75),
            eta: 0.125,
        }
    }
}

const GRID_TOL: f64 = 1e-12;

fn is_multiple(x: f64, step: f64) -> bool {
    let q = x / step;
    (q - q.round()).abs() < GRID_TOL * q.abs().max(1.0)
}

impl MacroDomain {
    pub fn new(qm: (f64, f64), eta: f64) -> Result<Self> {
        let inv = 1.0 / eta;
        let is_pow2 = eta > 0.0
            && is_multiple(inv, 1.0)
            && (inv.round() as u64).is_power_of_two();
        if !is_pow2 {
            return Err(Error::param(format!(
                "eta must be a reciprocal power of two dividing |Q_M|, got {eta}"
            )));
        }
        if !(0.0 < qm.0 && qm.0 < qm.1 && qm.1 < 1.0) {
            return Err(Error::param(format!(
                "Q_M = [{}, {}] must lie in the interior of (0, 1)",
                qm.0, qm.1
            )));
        }
        if !is_multiple(qm.0, eta) || !is_multiple(qm.1, eta) {
            return Err(Error::param(format!(
                "eta must be a reciprocal power of two dividing |Q_M|: Q_M = [{}, {}] is not tiled by cells of size {eta}",
                qm.0, qm.1
            )));
        }
        Ok(MacroDomain { qm, eta })
    }

    /// Slab width `|Q_M|`.
    pub fn width(&self) -> f64 {
        self.qm.1 - self.qm.0
    }

    pub fn in_slab(&self, x1: f64) -> bool {
        self.qm.0 <= x1 && x1 < self.qm.1
    }

    /// Wrapped unit-cell coordinate `x/η mod 1`.
    pub fn cell_coordinate(&self, x: [f64; 2]) -> [f64; 2] {
        let wrap = |t: f64| {
            let s = t / self.eta;
            // snap values within rounding of a cell boundary onto it
            let s = if (s - s.round()).abs() < 1e-9 { s.round() } else { s };
            s - s.floor()
        };
        [wrap(x[0]), wrap(x[1])]
    }
}

/// `ε_η(x) = ε1/η²` inside the scaled inclusions of `Q_M`, `1` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermittivityField {
    pub eps1: Complex64,
    pub eta: f64,
    pub microstructure: Microstructure,
}

impl PermittivityField {
    /// Requires `Re ε1 > 0` and `Im ε1 ≥ 0`; the lossless limit `Im ε1 = 0` is
    /// accepted for resonance studies.
    pub fn new(eps1: Complex64, eta: f64, microstructure: Microstructure) -> Result<Self> {
        if !(eps1.re > 0.0 && eps1.im >= 0.0) || !eps1.is_finite() {
            return Err(Error::param(format!(
                "eps1 must satisfy Re > 0 and Im >= 0, got {eps1}"
            )));
        }
        if eps1.im == 0.0 {
            static LOSSLESS: std::sync::Once = std::sync::Once::new();
            LOSSLESS.call_once(|| {
                log::warn!("eps1 = {eps1} is lossless; resonant configurations may be singular")
            });
        }
        Ok(PermittivityField {
            eps1,
            eta,
            microstructure,
        })
    }

    pub fn inclusion_value(&self) -> Complex64 {
        self.eps1 / (self.eta * self.eta)
    }

    pub fn is_inclusion(&self, domain: &MacroDomain, x: [f64; 2]) -> bool {
        domain.in_slab(x[0]) && self.microstructure.contains(domain.cell_coordinate(x))
    }
}

pub fn permittivity_at(field: &PermittivityField, domain: &MacroDomain, x: [f64; 2]) -> Complex64 {
    if field.is_inclusion(domain, x) {
        field.inclusion_value()
    } else {
        Complex64::new(1.0, 0.0)
    }
}
