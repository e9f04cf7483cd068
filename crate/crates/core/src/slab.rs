//! Reflection and transmission of a normally incident plane wave by an
//! effective perfect-conductor slab.
//!
//! The slab occupies `Q_M = (-L, 0)`; the incident wave `e^{-i k0 x1}` arrives
//! from `Q_R = {x1 ≥ 0}` and the transmitted wave `T e^{-i k0 (x1 + L)}` leaves
//! through `Q_L = {x1 ≤ -L}`. Time dependence is `e^{-iωt}`. Square roots of
//! complex parameters use the principal branch (non-negative real part).
//!
//! Inside the slab each geometry reduces to a homogeneous layer with interior
//! wavenumber `k_M` and magnetic flux weight `a_M`, and the four amplitudes
//! follow from continuity of `E2` and of the weighted `H3` at both interfaces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometryId;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Denominators below this magnitude are treated as a Fabry–Pérot singularity.
pub const DEGENERATE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabParams {
    pub omega: f64,
    pub eps0: f64,
    pub mu0: f64,
    /// Slab width `L`.
    pub length: f64,
    /// Air volume fraction.
    pub alpha: f64,
    /// Effective permittivity entry `(ε_eff)_{11}`.
    pub gamma: Complex64,
}

impl SlabParams {
    /// Normalized units (`ε0 = μ0 = 1`, so `ω = k0`).
    pub fn normalized(k0: f64, length: f64, alpha: f64, gamma: Complex64) -> Self {
        SlabParams {
            omega: k0,
            eps0: 1.0,
            mu0: 1.0,
            length,
            alpha,
            gamma,
        }
    }

    pub fn k0(&self) -> f64 {
        self.omega * (self.eps0 * self.mu0).sqrt()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.omega > 0.0
            && self.eps0 > 0.0
            && self.mu0 > 0.0
            && self.length >= 0.0
            && self.alpha > 0.0
            && self.alpha <= 1.0
            && self.gamma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid slab parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub r: Complex64,
    pub t: Complex64,
    pub r_m: Complex64,
    pub t_m: Complex64,
}

impl CoefficientSet {
    pub fn max_deviation(&self, other: &CoefficientSet) -> f64 {
        [
            self.r - other.r,
            self.t - other.t,
            self.r_m - other.r_m,
            self.t_m - other.t_m,
        ]
        .iter()
        .map(|d| d.norm())
        .fold(0.0, f64::max)
    }

    /// `|R|² + |T|²`, equal to one for lossless slabs.
    pub fn energy(&self) -> f64 {
        self.r.norm_sqr() + self.t.norm_sqr()
    }
}

fn check_denominator(d: Complex64) -> Result<()> {
    if d.norm() < DEGENERATE_TOL {
        Err(Error::Degenerate(format!(
            "Fabry-Perot denominator |D| = {:.3e}",
            d.norm()
        )))
    } else {
        Ok(())
    }
}

/// Closed-form coefficients for the four microstructures.
pub fn closed_form_coeffs(id: GeometryId, params: &SlabParams) -> Result<CoefficientSet> {
    params.validate()?;
    let k0 = params.k0();
    let l = params.length;
    let alpha = Complex64::new(params.alpha, 0.0);
    let gamma = params.gamma;
    match id {
        GeometryId::Sigma1 => {
            let sa = alpha.sqrt();
            let sg = gamma.sqrt();
            let sag = sa * sg;
            let p = (I * k0 * sag * l).exp();
            let p2 = p * p;
            let d = (alpha + gamma) * (ONE - p2) + 2.0 * sag * (ONE + p2);
            check_denominator(d)?;
            Ok(CoefficientSet {
                r: (alpha - gamma) * (ONE - p2) / d,
                t: 4.0 * sag * p / d,
                t_m: 2.0 * sa * (sa + sg) / d,
                r_m: -2.0 * sa * p2 * (sa - sg) / d,
            })
        }
        GeometryId::Sigma2 => {
            let sg = gamma.sqrt();
            let p = (I * k0 * sg * l).exp();
            let p2 = p * p;
            let d = (ONE + gamma) * (ONE - p2) + 2.0 * sg * (ONE + p2);
            check_denominator(d)?;
            Ok(CoefficientSet {
                r: (ONE - gamma) * (ONE - p2) / d,
                t: 4.0 * p * sg / d,
                t_m: 2.0 * (ONE + sg) / d,
                r_m: -2.0 * p2 * (ONE - sg) / d,
            })
        }
        GeometryId::Sigma3 => {
            let p = (I * k0 * l).exp();
            let p2 = p * p;
            let d = (ONE + alpha * alpha) * (ONE - p2) + 2.0 * alpha * (ONE + p2);
            check_denominator(d)?;
            Ok(CoefficientSet {
                r: (alpha * alpha - ONE) * (ONE - p2) / d,
                t: 4.0 * p * alpha / d,
                t_m: 2.0 * alpha * (alpha + ONE) / d,
                r_m: -2.0 * alpha * p2 * (alpha - ONE) / d,
            })
        }
        GeometryId::Sigma4 => Ok(CoefficientSet {
            r: -ONE,
            t: Complex64::new(0.0, 0.0),
            r_m: Complex64::new(0.0, 0.0),
            t_m: Complex64::new(0.0, 0.0),
        }),
    }
}

/// Flux weight `a_M` and interior wavenumber `k_M` of the equivalent layer,
/// or `None` for the air cylinder, whose slab carries no field.
pub fn layer_parameters(id: GeometryId, params: &SlabParams) -> Option<(Complex64, Complex64)> {
    let k0 = params.k0();
    let alpha = Complex64::new(params.alpha, 0.0);
    let sg = params.gamma.sqrt();
    match id {
        GeometryId::Sigma1 => Some((sg / alpha.sqrt(), k0 * alpha.sqrt() * sg)),
        GeometryId::Sigma2 => Some((sg, k0 * sg)),
        GeometryId::Sigma3 => Some((ONE / alpha, Complex64::new(k0, 0.0))),
        GeometryId::Sigma4 => None,
    }
}

/// Solves the four interface conditions
///
/// ```text
/// T_M + R_M           = 1 + R        (E2 at x1 = 0)
/// p T_M + R_M / p     = T            (E2 at x1 = -L)
/// a (T_M - R_M)       = 1 - R        (weighted H3 at x1 = 0)
/// a (p T_M - R_M / p) = T            (weighted H3 at x1 = -L)
/// ```
///
/// with `p = e^{i k_M L}` by Gaussian elimination.
pub fn interface_matching_oracle(
    a_m: Complex64,
    k_m: Complex64,
    k0: f64,
    length: f64,
) -> Result<CoefficientSet> {
    if !(k0 > 0.0 && length >= 0.0) || k_m.norm() == 0.0 {
        return Err(Error::param(format!(
            "oracle requires k0 > 0, L >= 0 and k_M != 0 (k0 = {k0}, L = {length}, k_M = {k_m})"
        )));
    }
    let p = (I * k_m * length).exp();
    let z = Complex64::new(0.0, 0.0);
    // unknowns: [R, T, T_M, R_M]
    let mut a = [
        [-ONE, z, ONE, ONE],
        [z, -ONE, p, ONE / p],
        [ONE, z, a_m, -a_m],
        [z, -ONE, a_m * p, -a_m / p],
    ];
    let mut b = [ONE, z, ONE, z];
    let x = solve_dense(&mut a, &mut b)?;
    Ok(CoefficientSet {
        r: x[0],
        t: x[1],
        t_m: x[2],
        r_m: x[3],
    })
}

fn solve_dense<const N: usize>(
    a: &mut [[Complex64; N]; N],
    b: &mut [Complex64; N],
) -> Result<[Complex64; N]> {
    let scale = a
        .iter()
        .flatten()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        if a[pivot][col].norm() < DEGENERATE_TOL * scale {
            return Err(Error::Degenerate(
                "interface matching system is singular".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = [Complex64::new(0.0, 0.0); N];
    for row in (0..N).rev() {
        let mut s = b[row];
        for k in row + 1..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Effective fields at `x1`: `E` is polarized along `e2`, `H` along `e3`.
pub fn field_ansatz_eval(
    id: GeometryId,
    params: &SlabParams,
    coeffs: &CoefficientSet,
    x1: f64,
) -> ([Complex64; 3], [Complex64; 3]) {
    let k0 = params.k0();
    let l = params.length;
    let h_scale = -k0 / (params.omega * params.mu0);
    let z = Complex64::new(0.0, 0.0);
    let (e, h) = if x1 >= 0.0 {
        let inc = (-I * k0 * x1).exp();
        let refl = (I * k0 * x1).exp();
        (inc + coeffs.r * refl, h_scale * (inc - coeffs.r * refl))
    } else if x1 <= -l {
        if id == GeometryId::Sigma4 {
            (z, z)
        } else {
            let w = coeffs.t * (-I * k0 * (x1 + l)).exp();
            (w, h_scale * w)
        }
    } else {
        match layer_parameters(id, params) {
            None => (z, z),
            Some((a_m, k_m)) => {
                let fwd = coeffs.t_m * (-I * k_m * x1).exp();
                let back = coeffs.r_m * (I * k_m * x1).exp();
                (fwd + back, h_scale * a_m * (fwd - back))
            }
        }
    };
    ([z, e, z], [z, z, h])
}
