//! Ring geometry, material constants and strain-displacement operators.
//!
//! Displacement coefficient vectors are ordered `[x-block, y-block]`, each
//! block holding one coefficient per spline function.

use crate::error::{Error, Result};
use crate::spline::{BasisValues, SplineSpace};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub youngs_modulus: f64,
    pub area: f64,
    pub second_moment: f64,
    pub density: f64,
    pub radius: f64,
    pub thickness: f64,
    pub width: f64,
}

impl RingParams {
    /// Rectangular `width x thickness` cross-section.
    pub fn rectangular(youngs_modulus: f64, density: f64, radius: f64, thickness: f64, width: f64) -> Result<Self> {
        let params = Self {
            youngs_modulus,
            area: width * thickness,
            second_moment: width * thickness.powi(3) / 12.0,
            density,
            radius,
            thickness,
            width,
        };
        params.validate()?;
        Ok(params)
    }

    /// R = 1, rho = 1, E = 1.2e6, b = 1, t = 3/2000 (R/t = 2000/3).
    pub fn canonical() -> Self {
        Self::with_slenderness(2000.0 / 3.0)
    }

    /// Canonical material and radius with `t = R / slenderness`.
    pub fn with_slenderness(slenderness: f64) -> Self {
        let t = 1.0 / slenderness;
        Self {
            youngs_modulus: 1.2e6,
            area: t,
            second_moment: t * t * t / 12.0,
            density: 1.0,
            radius: 1.0,
            thickness: t,
            width: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("youngs_modulus", self.youngs_modulus),
            ("area", self.area),
            ("second_moment", self.second_moment),
            ("density", self.density),
            ("radius", self.radius),
            ("thickness", self.thickness),
            ("width", self.width),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn ea(&self) -> f64 {
        self.youngs_modulus * self.area
    }

    pub fn ei(&self) -> f64 {
        self.youngs_modulus * self.second_moment
    }

    pub fn rho_a(&self) -> f64 {
        self.density * self.area
    }

    pub fn slenderness(&self) -> f64 {
        self.radius / self.thickness
    }

    pub fn scaled_modulus(&self, factor: f64) -> Self {
        Self { youngs_modulus: self.youngs_modulus * factor, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisplacementFrame {
    Curvilinear { v: f64, w: f64 },
    Cartesian { ux: f64, uy: f64 },
}

impl DisplacementFrame {
    pub fn to_cartesian(self, theta: f64) -> Self {
        match self {
            Self::Curvilinear { v, w } => {
                let (ux, uy) = rotate_to_cartesian(w, v, theta);
                Self::Cartesian { ux, uy }
            }
            c => c,
        }
    }

    pub fn to_curvilinear(self, theta: f64) -> Self {
        match self {
            Self::Cartesian { ux, uy } => {
                let (w, v) = rotate_to_curvilinear(ux, uy, theta);
                Self::Curvilinear { v, w }
            }
            c => c,
        }
    }
}

pub fn geometry_map(radius: f64, theta: f64) -> (f64, f64) {
    (radius * theta.cos(), radius * theta.sin())
}

/// Returns `(w, v)`: radial and circumferential components.
pub fn rotate_to_curvilinear(ux: f64, uy: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (ux * c + uy * s, -ux * s + uy * c)
}

/// Inverse of [`rotate_to_curvilinear`]; returns `(ux, uy)`.
pub fn rotate_to_cartesian(w: f64, v: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (w * c - v * s, w * s + v * c)
}

/// Membrane strain (v' + w) / R.
pub fn membrane_strain_curvilinear(v1: f64, w: f64, radius: f64) -> f64 {
    (v1 + w) / radius
}

/// Change of curvature (v' - w'') / R^2.
pub fn bending_strain_curvilinear(v1: f64, w2: f64, radius: f64) -> f64 {
    (v1 - w2) / (radius * radius)
}

/// Membrane strain from Cartesian first derivatives.
pub fn membrane_strain_cartesian(ux1: f64, uy1: f64, theta: f64, radius: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    (-ux1 * s + uy1 * c) / radius
}

/// Change of curvature from Cartesian first and second derivatives.
pub fn bending_strain_cartesian(ux1: f64, ux2: f64, uy1: f64, uy2: f64, theta: f64, radius: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    (-ux2 * c + ux1 * s - uy2 * s - uy1 * c) / (radius * radius)
}

/// Sparse row over the `2 * dim` displacement coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainRow {
    pub len: usize,
    pub entries: Vec<(usize, f64)>,
}

impl StrainRow {
    pub fn dot(&self, u: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, b)| b * u[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for &(i, b) in &self.entries {
            out[i] += b;
        }
        out
    }
}

pub(crate) fn membrane_row_from(values: &BasisValues, dim: usize, theta: f64, radius: f64) -> StrainRow {
    let (s, c) = theta.sin_cos();
    let mut entries = Vec::with_capacity(2 * values.len());
    for (i, d1) in values.iter(1) {
        entries.push((i, -d1 * s / radius));
    }
    for (i, d1) in values.iter(1) {
        entries.push((dim + i, d1 * c / radius));
    }
    StrainRow { len: 2 * dim, entries }
}

pub(crate) fn bending_row_from(values: &BasisValues, dim: usize, theta: f64, radius: f64) -> StrainRow {
    let (s, c) = theta.sin_cos();
    let r2 = radius * radius;
    let mut entries = Vec::with_capacity(2 * values.len());
    for ((i, d1), d2) in values.iter(1).zip(&values.derivs[2]) {
        entries.push((i, (-d2 * c + d1 * s) / r2));
    }
    for ((i, d1), d2) in values.iter(1).zip(&values.derivs[2]) {
        entries.push((dim + i, (-d2 * s - d1 * c) / r2));
    }
    StrainRow { len: 2 * dim, entries }
}

pub fn membrane_strain_row(space: &SplineSpace, theta: f64, radius: f64) -> Result<StrainRow> {
    let v = space.eval(theta, 1)?;
    Ok(membrane_row_from(&v, space.dim(), theta, radius))
}

pub fn bending_strain_row(space: &SplineSpace, theta: f64, radius: f64) -> Result<StrainRow> {
    if space.degree() < 2 {
        return Err(Error::DerivativeOrder { requested: 2, degree: space.degree() });
    }
    let v = space.eval(theta, 2)?;
    Ok(bending_row_from(&v, space.dim(), theta, radius))
}

/// Coefficients interpolating Cartesian fields at the Greville abscissae.
pub fn interpolate_cartesian<F>(space: &SplineSpace, field: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> (f64, f64),
{
    let n = space.dim();
    let g = space.greville();
    let mut a = nalgebra::DMatrix::zeros(n, n);
    let mut bx = nalgebra::DVector::zeros(n);
    let mut by = nalgebra::DVector::zeros(n);
    for (row, &x) in g.iter().enumerate() {
        for (j, v) in space.eval(x, 0)?.iter(0) {
            a[(row, j)] += v;
        }
        let (ux, uy) = field(x);
        bx[row] = ux;
        by[row] = uy;
    }
    let lu = a.lu();
    let cx = lu.solve(&bx).ok_or(Error::Singular("Greville interpolation"))?;
    let cy = lu.solve(&by).ok_or(Error::Singular("Greville interpolation"))?;
    Ok(cx.iter().chain(cy.iter()).copied().collect())
}
