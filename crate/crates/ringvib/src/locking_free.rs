//! Membrane treatments that remove locking: B-bar strain projection,
//! discrete strain gaps, and Hellinger-Reissner static condensation.

use crate::assembly::{for_each_point, gram};
use crate::error::{Error, Result};
use crate::ring::{bending_row_from, membrane_row_from, RingParams, StrainRow};
use crate::spline::SplineSpace;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpaces {
    pub displacement: SplineSpace,
    /// Degree `p - 1`, same continuity class as the displacement space.
    pub strain: SplineSpace,
    /// Open space of degree `p` carrying the strain gaps.
    pub gap: SplineSpace,
}

impl ProjectionSpaces {
    pub fn for_space(space: &SplineSpace) -> Result<Self> {
        let p = space.degree();
        if p < 2 {
            return Err(Error::InvalidSpace(format!("locking-free spaces need p >= 2, got {p}")));
        }
        let n = space.n_elements();
        let (a, b) = space.domain();
        let strain = if space.is_periodic() {
            SplineSpace::periodic_on(p - 1, n, a, b)?
        } else {
            SplineSpace::open(p - 1, n, a, b)?
        };
        Ok(Self { displacement: space.clone(), strain, gap: SplineSpace::open(p, n, a, b)? })
    }
}

fn symmetrize(k: DMatrix<f64>) -> DMatrix<f64> {
    (&k + k.transpose()) * 0.5
}

fn check_compatible(space: &SplineSpace, other: &SplineSpace) -> Result<()> {
    if space.n_elements() != other.n_elements() || space.domain() != other.domain() {
        return Err(Error::DimensionMismatch("auxiliary space must share the element partition".into()));
    }
    Ok(())
}

/// `∫ N̄_i row_j R dθ` for strain rows produced by `row`.
fn coupling<F>(space: &SplineSpace, strain: &SplineSpace, params: &RingParams, n_points: usize, row: F) -> Result<DMatrix<f64>>
where
    F: Fn(&crate::spline::BasisValues, f64) -> StrainRow,
{
    check_compatible(space, strain)?;
    let r = params.radius;
    let mut c = DMatrix::zeros(strain.dim(), 2 * space.dim());
    let rule = crate::quadrature::gauss_rule(n_points)?;
    let nd = space.degree().min(2);
    for e in 0..space.n_elements() {
        let (lo, hi) = space.element_bounds(e);
        for (theta, w) in rule.mapped(lo, hi) {
            let v = space.eval_in_element(e, theta, nd);
            let bar = strain.eval_in_element(e, theta, 0);
            let b = row(&v, theta);
            for (i, ni) in bar.iter(0) {
                let s = w * r * ni;
                for &(j, bj) in &b.entries {
                    c[(i, j)] += s * bj;
                }
            }
        }
    }
    Ok(c)
}

/// L2 projection of the membrane strain onto the strain space.
#[derive(Debug, Clone)]
pub struct BBarProjection {
    /// `M̄_ij = ∫ N̄_i N̄_j R dθ`.
    pub gram: DMatrix<f64>,
    /// `B̄ = [B̄_1 | B̄_2]`, one row per strain function.
    pub coupling: DMatrix<f64>,
}

impl BBarProjection {
    /// Coefficients of the projected strain of displacement `u`.
    pub fn project(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let chol = self.gram.clone().cholesky().ok_or(Error::Singular("projection Gram"))?;
        Ok(chol.solve(&(&self.coupling * u)))
    }

    /// `sqrt(scale) L⁻¹ B̄` with `M̄ = L Lᵀ`, so that `FᵀF = scale B̄ᵀ M̄⁻¹ B̄`.
    pub fn factor(&self, scale: f64) -> Result<DMatrix<f64>> {
        let chol = self.gram.clone().cholesky().ok_or(Error::Singular("projection Gram"))?;
        let f = chol.l().solve_lower_triangular(&self.coupling).ok_or(Error::Singular("projection Gram"))?;
        Ok(f * scale.sqrt())
    }

    /// `EA B̄ᵀ M̄⁻¹ B̄`.
    pub fn stiffness(&self, ea: f64) -> Result<DMatrix<f64>> {
        let chol = self.gram.clone().cholesky().ok_or(Error::Singular("projection Gram"))?;
        let x = chol.solve(&self.coupling);
        Ok(symmetrize(self.coupling.transpose() * x * ea))
    }
}

pub fn bbar_projection(
    space: &SplineSpace,
    strain_space: &SplineSpace,
    params: &RingParams,
    n_points: usize,
) -> Result<BBarProjection> {
    let n = space.dim();
    let r = params.radius;
    let coupling = coupling(space, strain_space, params, n_points, |v, t| membrane_row_from(v, n, t, r))?;
    let gram = gram(strain_space, r, n_points)?;
    Ok(BBarProjection { gram, coupling })
}

/// Projected membrane stiffness with `p` points per element.
pub fn bbar_membrane_stiffness(space: &SplineSpace, strain_space: &SplineSpace, params: &RingParams) -> Result<DMatrix<f64>> {
    bbar_projection(space, strain_space, params, space.degree())?.stiffness(params.ea())
}

/// Strain-gap operator: `B̄_m(θ) = (1/R) Ñ'(θ)ᵀ A⁻¹ [C | D]`.
#[derive(Debug, Clone)]
pub struct DsgOperator {
    gap_space: SplineSpace,
    collocation: Vec<f64>,
    /// `[C | D]`: gaps at the collocation points, one row per point.
    gap_values: DMatrix<f64>,
    /// `A⁻¹ [C | D]`: gap interpolant coefficients.
    gap_map: DMatrix<f64>,
    radius: f64,
}

impl DsgOperator {
    pub fn gap_space(&self) -> &SplineSpace {
        &self.gap_space
    }

    pub fn collocation(&self) -> &[f64] {
        &self.collocation
    }

    pub fn gap_values(&self) -> &DMatrix<f64> {
        &self.gap_values
    }

    pub fn gap_map(&self) -> &DMatrix<f64> {
        &self.gap_map
    }

    /// Interpolated gap of displacement `u` at `theta`.
    pub fn gap_interpolant(&self, u: &DVector<f64>, theta: f64) -> Result<f64> {
        let coeffs = &self.gap_map * u;
        self.gap_space.evaluate(coeffs.as_slice(), theta, 0)
    }

    /// Dense modified membrane strain row at `theta`.
    pub fn strain_row(&self, theta: f64) -> Result<DVector<f64>> {
        let v = self.gap_space.eval(theta, 1)?;
        let mut row = DVector::zeros(self.gap_map.ncols());
        for (k, d1) in v.iter(1) {
            row.axpy(d1 / self.radius, &self.gap_map.row(k).transpose(), 1.0);
        }
        Ok(row)
    }

    /// `EA ∫ B̄ᵀ B̄ R dθ`, evaluated as `EA Gᵀ Ã G` with `Ã = ∫ Ñ' Ñ'ᵀ / R dθ`.
    pub fn stiffness(&self, params: &RingParams, n_points: usize) -> Result<DMatrix<f64>> {
        let ng = self.gap_space.dim();
        let mut a = DMatrix::zeros(ng, ng);
        let r = self.radius;
        for_each_point(&self.gap_space, n_points, 1, |_, w, v| {
            for (k, dk) in v.iter(1) {
                for (l, dl) in v.iter(1) {
                    a[(k, l)] += w * dk * dl / r;
                }
            }
        })?;
        let ag = a * &self.gap_map;
        Ok(symmetrize(self.gap_map.transpose() * ag * params.ea()))
    }
}

impl DsgOperator {
    /// Rows `sqrt(EA w / R) Ñ'(θ_q)ᵀ G`, so that `FᵀF` is the DSG membrane
    /// stiffness.
    pub fn factor(&self, params: &RingParams, n_points: usize) -> Result<DMatrix<f64>> {
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let ea = params.ea();
        let r = self.radius;
        let ncols = self.gap_map.ncols();
        for_each_point(&self.gap_space, n_points, 1, |_, w, v| {
            let mut row = DVector::zeros(ncols);
            for (k, dk) in v.iter(1) {
                row.axpy(dk, &self.gap_map.row(k).transpose(), 1.0);
            }
            rows.push(row * (ea * w / r).sqrt());
        })?;
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

/// Builds the strain-gap operator collocated at the gap-space Greville
/// abscissae, with gaps measured from the start of the domain.
pub fn dsg_membrane_b(space: &SplineSpace, gap_space: &SplineSpace, params: &RingParams) -> Result<DsgOperator> {
    check_compatible(space, gap_space)?;
    if gap_space.is_periodic() {
        return Err(Error::InvalidSpace("gap space must be open".into()));
    }
    let n = space.dim();
    let r = params.radius;
    let p = space.degree();
    let rule = crate::quadrature::gauss_rule(p + 1)?;
    let collocation = gap_space.greville();
    let ng = collocation.len();

    // R ε = -sinθ u_x' + cosθ u_y', integrated piecewise from the origin.
    let element_integral = |e: usize, lo: f64, hi: f64, acc: &mut DVector<f64>| {
        for (theta, w) in rule.mapped(lo, hi) {
            let v = space.eval_in_element(e, theta, 1);
            for &(j, b) in &membrane_row_from(&v, n, theta, r).entries {
                acc[j] += w * r * b;
            }
        }
    };
    let mut gap_values = DMatrix::zeros(ng, 2 * n);
    let mut acc = DVector::zeros(2 * n);
    let mut cursor = 0;
    for (i, &x) in collocation.iter().enumerate() {
        let (e, x) = space.locate_closed(x)?;
        while cursor < e {
            let (lo, hi) = space.element_bounds(cursor);
            element_integral(cursor, lo, hi, &mut acc);
            cursor += 1;
        }
        let mut row = acc.clone();
        let (lo, _) = space.element_bounds(e);
        if x > lo {
            element_integral(e, lo, x, &mut row);
        }
        gap_values.set_row(i, &row.transpose());
    }

    let mut a = DMatrix::zeros(ng, ng);
    for (i, &x) in collocation.iter().enumerate() {
        for (j, v) in gap_space.eval(x, 0)?.iter(0) {
            a[(i, j)] += v;
        }
    }
    let gap_map = a.lu().solve(&gap_values).ok_or(Error::Singular("gap collocation"))?;
    Ok(DsgOperator { gap_space: gap_space.clone(), collocation, gap_values, gap_map, radius: r })
}

/// Membrane and bending parts of the condensed mixed stiffness.
#[derive(Debug, Clone)]
pub struct HrParts {
    pub membrane: DMatrix<f64>,
    pub bending: DMatrix<f64>,
}

/// Condenses independent strain and curvature fields out of the mixed system:
/// `K = -K12ᵀ K11⁻¹ K12` with block-diagonal `K11 = diag(-EA M̄, -EI M̄)`.
pub fn hr_condensed_parts(
    space: &SplineSpace,
    strain_space: &SplineSpace,
    params: &RingParams,
    n_points: usize,
) -> Result<HrParts> {
    if space.degree() < 2 {
        return Err(Error::InvalidSpace("mixed formulation needs p >= 2".into()));
    }
    let n = space.dim();
    let r = params.radius;
    let m_bar = gram(strain_space, r, n_points)?;
    let k11 = &m_bar * -params.ea();
    let k22 = &m_bar * -params.ei();
    let k1 = coupling(space, strain_space, params, n_points, |v, t| membrane_row_from(v, n, t, r))? * params.ea();
    let k2 = coupling(space, strain_space, params, n_points, |v, t| bending_row_from(v, n, t, r))? * params.ei();
    let c11 = (-k11).cholesky().ok_or(Error::Singular("mixed strain block K11"))?;
    let c22 = (-k22).cholesky().ok_or(Error::Singular("mixed strain block K11"))?;
    let membrane = symmetrize(k1.transpose() * c11.solve(&k1));
    let bending = symmetrize(k2.transpose() * c22.solve(&k2));
    Ok(HrParts { membrane, bending })
}

/// `[sqrt(EA) L⁻¹ C_m; sqrt(EI) L⁻¹ C_b]` with `M̄ = L Lᵀ` and `C` the
/// strain couplings, so that `FᵀF` is the condensed stiffness.
pub fn hr_factor(space: &SplineSpace, strain_space: &SplineSpace, params: &RingParams, n_points: usize) -> Result<DMatrix<f64>> {
    let n = space.dim();
    let r = params.radius;
    let gram = gram(strain_space, r, n_points)?;
    let membrane = BBarProjection {
        gram: gram.clone(),
        coupling: coupling(space, strain_space, params, n_points, |v, t| membrane_row_from(v, n, t, r))?,
    };
    let bending = BBarProjection {
        gram,
        coupling: coupling(space, strain_space, params, n_points, |v, t| bending_row_from(v, n, t, r))?,
    };
    let fm = membrane.factor(params.ea())?;
    let fb = bending.factor(params.ei())?;
    let mut out = DMatrix::zeros(fm.nrows() + fb.nrows(), 2 * n);
    out.rows_mut(0, fm.nrows()).copy_from(&fm);
    out.rows_mut(fm.nrows(), fb.nrows()).copy_from(&fb);
    Ok(out)
}

/// Full condensed stiffness with `p + 1` points per element.
pub fn hr_condensed_stiffness(space: &SplineSpace, strain_space: &SplineSpace, params: &RingParams) -> Result<DMatrix<f64>> {
    let parts = hr_condensed_parts(space, strain_space, params, space.degree() + 1)?;
    Ok(parts.membrane + parts.bending)
}
