//! Dense assembly of mass and stiffness matrices over Bezier elements.

use crate::error::{Error, Result};
use crate::locking_free::{self, ProjectionSpaces};
use crate::quadrature::gauss_rule;
use crate::ring::{bending_row_from, membrane_row_from, RingParams, StrainRow};
use crate::spline::{BasisValues, SplineSpace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulationKind {
    StandardFull,
    StandardReduced,
    BBar,
    Dsg,
    HellingerReissner,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 5] = [
        Self::StandardFull,
        Self::StandardReduced,
        Self::BBar,
        Self::Dsg,
        Self::HellingerReissner,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::StandardFull => "standard-full",
            Self::StandardReduced => "standard-reduced",
            Self::BBar => "b-bar",
            Self::Dsg => "dsg",
            Self::HellingerReissner => "hellinger-reissner",
        }
    }

    /// Conforming displacement-based formulations.
    pub fn is_standard(self) -> bool {
        matches!(self, Self::StandardFull | Self::StandardReduced)
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for FormulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        match key.as_str() {
            "standard-full" | "full" => Ok(Self::StandardFull),
            "standard-reduced" | "reduced" => Ok(Self::StandardReduced),
            "b-bar" | "bbar" => Ok(Self::BBar),
            "dsg" => Ok(Self::Dsg),
            "hellinger-reissner" | "hr" => Ok(Self::HellingerReissner),
            _ => Err(Error::InvalidParams(format!("unknown formulation '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureOverrides {
    pub membrane: Option<usize>,
    pub bending: Option<usize>,
    pub mass: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulationSpec {
    pub kind: FormulationKind,
    pub degree: usize,
    pub n_elem: usize,
    pub quadrature: QuadratureOverrides,
}

impl FormulationSpec {
    pub fn new(kind: FormulationKind, degree: usize, n_elem: usize) -> Self {
        Self { kind, degree, n_elem, quadrature: QuadratureOverrides::default() }
    }

    /// Points per element for the membrane term: `p` for reduced
    /// integration and the B-bar projection, `p + 1` otherwise.
    pub fn membrane_points(&self) -> usize {
        self.quadrature.membrane.unwrap_or(match self.kind {
            FormulationKind::StandardReduced | FormulationKind::BBar => self.degree,
            _ => self.degree + 1,
        })
    }

    pub fn bending_points(&self) -> usize {
        self.quadrature.bending.unwrap_or(self.degree + 1)
    }

    pub fn mass_points(&self) -> usize {
        self.quadrature.mass.unwrap_or(self.degree + 1)
    }
}

#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub stiffness: DMatrix<f64>,
    pub membrane: DMatrix<f64>,
    pub bending: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub formulation: FormulationSpec,
    pub space: SplineSpace,
}

impl SystemMatrices {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }
}

/// Calls `f(theta, weight, basis)` at every Gauss point, with `weight`
/// already including the element Jacobian.
pub(crate) fn for_each_point<F>(space: &SplineSpace, n_points: usize, max_deriv: usize, mut f: F) -> Result<()>
where
    F: FnMut(f64, f64, &BasisValues),
{
    let rule = gauss_rule(n_points)?;
    for e in 0..space.n_elements() {
        let (lo, hi) = space.element_bounds(e);
        for (theta, w) in rule.mapped(lo, hi) {
            f(theta, w, &space.eval_in_element(e, theta, max_deriv));
        }
    }
    Ok(())
}

fn add_outer(k: &mut DMatrix<f64>, row: &StrainRow, scale: f64) {
    for &(i, bi) in &row.entries {
        let s = scale * bi;
        for &(j, bj) in &row.entries {
            k[(i, j)] += s * bj;
        }
    }
}

/// Scalar Gram matrix `scale * ∫ N_i N_j R dθ`.
pub(crate) fn gram(space: &SplineSpace, scale: f64, n_points: usize) -> Result<DMatrix<f64>> {
    let n = space.dim();
    let mut g = DMatrix::zeros(n, n);
    for_each_point(space, n_points, 0, |_, w, v| {
        for (i, ni) in v.iter(0) {
            for (j, nj) in v.iter(0) {
                g[(i, j)] += scale * w * ni * nj;
            }
        }
    })?;
    Ok(g)
}

pub fn assemble_mass_with(space: &SplineSpace, params: &RingParams, n_points: usize) -> Result<DMatrix<f64>> {
    let n = space.dim();
    let block = gram(space, params.rho_a() * params.radius, n_points)?;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&block);
    m.view_mut((n, n), (n, n)).copy_from(&block);
    Ok(m)
}

/// Consistent mass with `p + 1` points per element.
pub fn assemble_mass(space: &SplineSpace, params: &RingParams) -> Result<DMatrix<f64>> {
    assemble_mass_with(space, params, space.degree() + 1)
}

pub fn assemble_membrane_standard(space: &SplineSpace, params: &RingParams, n_points: usize) -> Result<DMatrix<f64>> {
    let n = space.dim();
    let r = params.radius;
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    for_each_point(space, n_points, 1, |theta, w, v| {
        add_outer(&mut k, &membrane_row_from(v, n, theta, r), params.ea() * w * r);
    })?;
    Ok(k)
}

pub fn assemble_bending_standard(space: &SplineSpace, params: &RingParams, n_points: usize) -> Result<DMatrix<f64>> {
    if space.degree() < 2 {
        return Err(Error::InvalidSpace("bending stiffness needs degree >= 2".into()));
    }
    let n = space.dim();
    let r = params.radius;
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    for_each_point(space, n_points, 2, |theta, w, v| {
        add_outer(&mut k, &bending_row_from(v, n, theta, r), params.ei() * w * r);
    })?;
    Ok(k)
}

/// `(K_m, K_b)`; `reduced` drops the membrane rule to `p` points.
pub fn assemble_stiffness_standard(
    space: &SplineSpace,
    params: &RingParams,
    reduced: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = space.degree();
    let km = assemble_membrane_standard(space, params, if reduced { p } else { p + 1 })?;
    let kb = assemble_bending_standard(space, params, p + 1)?;
    Ok((km, kb))
}

/// Assembles any formulation on a given displacement space.
pub fn assemble(spec: &FormulationSpec, space: &SplineSpace, params: &RingParams) -> Result<SystemMatrices> {
    params.validate()?;
    if space.degree() != spec.degree || space.n_elements() != spec.n_elem {
        return Err(Error::DimensionMismatch(format!(
            "space (p={}, {} elements) does not match formulation (p={}, {} elements)",
            space.degree(),
            space.n_elements(),
            spec.degree,
            spec.n_elem
        )));
    }
    let mass = assemble_mass_with(space, params, spec.mass_points())?;
    let mut bending = assemble_bending_standard(space, params, spec.bending_points())?;
    let membrane = match spec.kind {
        FormulationKind::StandardFull | FormulationKind::StandardReduced => {
            assemble_membrane_standard(space, params, spec.membrane_points())?
        }
        FormulationKind::BBar => {
            let spaces = ProjectionSpaces::for_space(space)?;
            locking_free::bbar_projection(space, &spaces.strain, params, spec.membrane_points())?
                .stiffness(params.ea())?
        }
        FormulationKind::Dsg => {
            let spaces = ProjectionSpaces::for_space(space)?;
            let op = locking_free::dsg_membrane_b(space, &spaces.gap, params)?;
            op.stiffness(params, spec.membrane_points())?
        }
        FormulationKind::HellingerReissner => {
            let spaces = ProjectionSpaces::for_space(space)?;
            let hr = locking_free::hr_condensed_parts(space, &spaces.strain, params, spec.membrane_points())?;
            bending = hr.bending;
            hr.membrane
        }
    };
    let stiffness = &membrane + &bending;
    Ok(SystemMatrices { stiffness, membrane, bending, mass, formulation: *spec, space: space.clone() })
}

fn pointwise_rows<F>(space: &SplineSpace, n_points: usize, max_deriv: usize, scale: f64, radius: f64, row: F) -> Result<DMatrix<f64>>
where
    F: Fn(&BasisValues, f64) -> StrainRow,
{
    let n = 2 * space.dim();
    let mut rows: Vec<(f64, StrainRow)> = Vec::new();
    for_each_point(space, n_points, max_deriv, |theta, w, v| rows.push(((scale * w * radius).sqrt(), row(v, theta))))?;
    let mut out = DMatrix::zeros(rows.len(), n);
    for (i, (s, r)) in rows.iter().enumerate() {
        for &(j, b) in &r.entries {
            out[(i, j)] = s * b;
        }
    }
    Ok(out)
}

/// Rectangular factor `F` with `FᵀF = K`, built from weighted strain
/// samples or projected strains. Solving through `F` avoids the squared
/// conditioning of the assembled stiffness in thin structures.
pub fn stiffness_factor(spec: &FormulationSpec, space: &SplineSpace, params: &RingParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let n = space.dim();
    let r = params.radius;
    let bending = || pointwise_rows(space, spec.bending_points(), 2, params.ei(), r, |v, t| bending_row_from(v, n, t, r));
    let (membrane, bending) = match spec.kind {
        FormulationKind::StandardFull | FormulationKind::StandardReduced => (
            pointwise_rows(space, spec.membrane_points(), 1, params.ea(), r, |v, t| membrane_row_from(v, n, t, r))?,
            bending()?,
        ),
        FormulationKind::BBar => {
            let spaces = ProjectionSpaces::for_space(space)?;
            let proj = locking_free::bbar_projection(space, &spaces.strain, params, spec.membrane_points())?;
            (proj.factor(params.ea())?, bending()?)
        }
        FormulationKind::Dsg => {
            let spaces = ProjectionSpaces::for_space(space)?;
            let op = locking_free::dsg_membrane_b(space, &spaces.gap, params)?;
            (op.factor(params, spec.membrane_points())?, bending()?)
        }
        FormulationKind::HellingerReissner => {
            let spaces = ProjectionSpaces::for_space(space)?;
            return locking_free::hr_factor(space, &spaces.strain, params, spec.membrane_points());
        }
    };
    let mut out = DMatrix::zeros(membrane.nrows() + bending.nrows(), 2 * n);
    out.rows_mut(0, membrane.nrows()).copy_from(&membrane);
    out.rows_mut(membrane.nrows(), bending.nrows()).copy_from(&bending);
    Ok(out)
}

/// Assembles the closed ring on a periodic space over `[0, 2π]`.
pub fn assemble_ring(spec: &FormulationSpec, params: &RingParams) -> Result<SystemMatrices> {
    let space = SplineSpace::periodic(spec.degree, spec.n_elem)?;
    assemble(spec, &space, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn symmetric_gap(a: &DMatrix<f64>) -> f64 {
        (a - a.transpose()).amax() / a.amax()
    }

    #[test]
    fn factor_reproduces_stiffness() {
        let params = RingParams::canonical();
        for kind in FormulationKind::ALL {
            for space in [SplineSpace::periodic(3, 12).unwrap(), SplineSpace::open(2, 10, 0.0, 1.5).unwrap()] {
                let spec = FormulationSpec::new(kind, space.degree(), space.n_elements());
                let k = assemble(&spec, &space, &params).unwrap().stiffness;
                let f = stiffness_factor(&spec, &space, &params).unwrap();
                assert!((f.transpose() * &f - &k).amax() < 1e-10 * k.amax(), "{kind}");
            }
        }
    }

    #[test]
    fn formulation_ids_roundtrip() {
        for k in FormulationKind::ALL {
            assert_eq!(k.id().parse::<FormulationKind>().unwrap(), k);
        }
        assert!("ans".parse::<FormulationKind>().is_err());
    }

    #[test]
    fn default_quadrature() {
        let f = FormulationSpec::new(FormulationKind::StandardFull, 3, 16);
        assert_eq!((f.membrane_points(), f.bending_points(), f.mass_points()), (4, 4, 4));
        let r = FormulationSpec::new(FormulationKind::StandardReduced, 3, 16);
        assert_eq!((r.membrane_points(), r.bending_points(), r.mass_points()), (3, 4, 4));
    }

    #[test]
    fn mass_block_structure_and_sums() {
        let s = SplineSpace::periodic(2, 8).unwrap();
        let params = RingParams { density: 1.0, area: 1.0, radius: 1.0, ..RingParams::canonical() };
        let m = assemble_mass(&s, &params).unwrap();
        assert_eq!(m.view((0, 8), (8, 8)).amax(), 0.0);
        assert_eq!(m.view((8, 0), (8, 8)).amax(), 0.0);
        assert_eq!(m.view((0, 0), (8, 8)), m.view((8, 8), (8, 8)));
        assert_abs_diff_eq!(m.view((0, 0), (8, 8)).sum(), 2.0 * PI, epsilon = 1e-13);
        for i in 0..8 {
            assert_abs_diff_eq!(m.row(i).sum(), 2.0 * PI / 8.0, epsilon = 1e-14);
        }
        assert!(m.clone().cholesky().is_some());
        assert!(symmetric_gap(&m) < 1e-15);
    }

    #[test]
    fn translation_in_kernel_and_symmetry() {
        let params = RingParams::canonical();
        for reduced in [false, true] {
            let s = SplineSpace::periodic(3, 16).unwrap();
            let (km, kb) = assemble_stiffness_standard(&s, &params, reduced).unwrap();
            let k = &km + &kb;
            assert!(symmetric_gap(&k) < 1e-12);
            let mut t = nalgebra::DVector::zeros(32);
            t.rows_mut(0, 16).fill(1.0);
            assert!((&k * &t).amax() < 1e-9 * k.amax());
            t.fill(0.0);
            t.rows_mut(16, 16).fill(1.0);
            assert!((&k * &t).amax() < 1e-9 * k.amax());
        }
    }

    #[test]
    fn reduced_only_changes_membrane() {
        let s = SplineSpace::periodic(2, 16).unwrap();
        let params = RingParams::canonical();
        let (km_f, kb_f) = assemble_stiffness_standard(&s, &params, false).unwrap();
        let (km_r, kb_r) = assemble_stiffness_standard(&s, &params, true).unwrap();
        assert_eq!(kb_f, kb_r);
        assert!((km_f - km_r).amax() > 0.0);
    }

    #[test]
    fn linear_scaling_in_modulus_and_density() {
        let params = RingParams::canonical();
        let spec = FormulationSpec::new(FormulationKind::StandardFull, 2, 12);
        let a = assemble_ring(&spec, &params).unwrap();
        let b = assemble_ring(&spec, &params.scaled_modulus(2.0)).unwrap();
        let c = assemble_ring(&spec, &RingParams { density: 2.0, ..params }).unwrap();
        assert_eq!(b.stiffness, &a.stiffness * 2.0);
        assert_eq!(c.mass, &a.mass * 2.0);
    }

    #[test]
    fn locking_free_variants_share_mass_and_bending() {
        let params = RingParams::canonical();
        let base = assemble_ring(&FormulationSpec::new(FormulationKind::StandardFull, 2, 12), &params).unwrap();
        for kind in [FormulationKind::BBar, FormulationKind::Dsg] {
            let s = assemble_ring(&FormulationSpec::new(kind, 2, 12), &params).unwrap();
            assert_eq!(s.mass, base.mass);
            assert_eq!(s.bending, base.bending);
        }
        let hr = assemble_ring(&FormulationSpec::new(FormulationKind::HellingerReissner, 2, 12), &params).unwrap();
        assert_eq!(hr.mass, base.mass);
    }

    #[test]
    fn mismatched_space_is_rejected() {
        let s = SplineSpace::periodic(2, 12).unwrap();
        let spec = FormulationSpec::new(FormulationKind::StandardFull, 3, 12);
        assert!(assemble(&spec, &s, &RingParams::canonical()).is_err());
    }
}
