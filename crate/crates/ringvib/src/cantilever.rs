//! Quarter-circle cantilever under a radial tip force.
//!
//! The arc runs over θ ∈ [0, π/2] with the free end at θ = 0 and the
//! clamp at θ = π/2.

use crate::assembly::{stiffness_factor, FormulationKind, FormulationSpec};
use crate::eigen::ConstraintBasis;
use crate::error::{Error, Result};
use crate::quadrature::gauss_rule;
use crate::ring::RingParams;
use crate::spectral::fit_slope;
use crate::spline::SplineSpace;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;

pub const FREE_END: f64 = 0.0;
pub const CLAMPED_END: f64 = FRAC_PI_2;
/// Default slenderness `R / t`.
pub const DEFAULT_SLENDERNESS: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CantileverCase {
    pub params: RingParams,
    pub formulation: FormulationSpec,
    /// Radial force at the free end.
    pub load: f64,
}

impl CantileverCase {
    pub fn new(kind: FormulationKind, degree: usize, n_elem: usize, slenderness: f64) -> Self {
        Self {
            params: RingParams::with_slenderness(slenderness),
            formulation: FormulationSpec::new(kind, degree, n_elem),
            load: 1.0,
        }
    }

    pub fn space(&self) -> Result<SplineSpace> {
        if self.formulation.degree < 2 {
            return Err(Error::InvalidSpace("cantilever needs C1 splines (p >= 2)".into()));
        }
        SplineSpace::open(self.formulation.degree, self.formulation.n_elem, FREE_END, CLAMPED_END)
    }
}

/// `u_x(b) = 0`, `u_y(b) = 0` and the rotation
/// `φ = (v - w') / R = -(u_x' cos b + u_y' sin b) / R = 0` at the clamp.
pub fn clamp_rows(space: &SplineSpace, radius: f64) -> Result<DMatrix<f64>> {
    let n = space.dim();
    let b = space.domain().1;
    let v = space.eval(b, 1)?;
    let (s, c) = b.sin_cos();
    let mut rows = DMatrix::zeros(3, 2 * n);
    for (i, val) in v.iter(0) {
        rows[(0, i)] = val;
        rows[(1, n + i)] = val;
    }
    for (i, d) in v.iter(1) {
        rows[(2, i)] = -d * c / radius;
        rows[(2, n + i)] = -d * s / radius;
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct CantileverSystem {
    pub case: CantileverCase,
    pub space: SplineSpace,
    /// `F` with `K = FᵀF`.
    pub factor: DMatrix<f64>,
    pub load: DVector<f64>,
    pub basis: ConstraintBasis,
}

/// Stiffness factor of the chosen formulation and the tip load
/// `f = F (cos 0, sin 0) ⊗ N(0)`.
pub fn assemble_cantilever(case: &CantileverCase) -> Result<CantileverSystem> {
    let space = case.space()?;
    let factor = stiffness_factor(&case.formulation, &space, &case.params)?;
    let n = space.dim();
    let mut load = DVector::zeros(2 * n);
    let (s, c) = FREE_END.sin_cos();
    for (i, val) in space.eval(FREE_END, 0)?.iter(0) {
        load[i] += case.load * c * val;
        load[n + i] += case.load * s * val;
    }
    let basis = ConstraintBasis::from_rows(&clamp_rows(&space, case.params.radius)?)?;
    Ok(CantileverSystem { case: *case, space, factor, load, basis })
}

#[derive(Debug, Clone)]
pub struct CantileverSolution {
    pub case: CantileverCase,
    pub space: SplineSpace,
    /// Full coefficients `[u_x | u_y]`.
    pub coefficients: DVector<f64>,
    /// `K u - f` on the full system; nonzero only through the clamp.
    pub reactions: DVector<f64>,
    /// `uᵀ K u`.
    pub energy: f64,
    /// `fᵀ u`.
    pub work: f64,
}

impl CantileverSolution {
    /// `(u_x, u_y)` at `θ`.
    pub fn displacement(&self, theta: f64) -> Result<(f64, f64)> {
        let n = self.space.dim();
        let (e, _) = self.space.locate_closed(theta)?;
        let v = self.space.eval_in_element(e, theta, 0);
        let (mut x, mut y) = (0.0, 0.0);
        for (i, b) in v.iter(0) {
            x += self.coefficients[i] * b;
            y += self.coefficients[n + i] * b;
        }
        Ok((x, y))
    }

    /// Net reaction force `(Σ r_x, Σ r_y)`; by partition of unity this is
    /// the force the clamp exerts.
    pub fn reaction_force(&self) -> (f64, f64) {
        let n = self.space.dim();
        (self.reactions.rows(0, n).sum(), self.reactions.rows(n, n).sum())
    }
}

impl CantileverSystem {
    pub fn stiffness(&self) -> DMatrix<f64> {
        self.factor.transpose() * &self.factor
    }

    /// Eliminates the clamp and solves `Tᵀ FᵀF T y = Tᵀ f` through a QR
    /// factorization of `F T`, never forming the stiffness.
    pub fn solve(&self) -> Result<CantileverSolution> {
        let reduced_factor = self.basis.restrict_columns(&self.factor);
        if reduced_factor.nrows() < reduced_factor.ncols() {
            return Err(Error::Singular("constrained cantilever stiffness"));
        }
        let f = self.basis.reduce_vector(&self.load);
        let r = reduced_factor.qr().r();
        let scale = r.diagonal().amax();
        if r.diagonal().iter().any(|d| d.abs() <= 1e-14 * scale) {
            return Err(Error::Singular("constrained cantilever stiffness"));
        }
        let z = r.tr_solve_upper_triangular(&f).ok_or(Error::Singular("constrained cantilever stiffness"))?;
        let y = r.solve_upper_triangular(&z).ok_or(Error::Singular("constrained cantilever stiffness"))?;
        let u = self.basis.expand_vector(&y);
        let strains = &self.factor * &u;
        let reactions = self.factor.tr_mul(&strains) - &self.load;
        Ok(CantileverSolution {
            case: self.case,
            space: self.space.clone(),
            energy: strains.norm_squared(),
            work: self.load.dot(&u),
            coefficients: u,
            reactions,
        })
    }
}

pub fn solve_cantilever(case: &CantileverCase) -> Result<CantileverSolution> {
    assemble_cantilever(case)?.solve()
}

/// The overkill reference: Hellinger-Reissner, p = 5, 1024 elements.
pub fn reference_case(slenderness: f64) -> CantileverCase {
    CantileverCase::new(FormulationKind::HellingerReissner, 5, 1024, slenderness)
}

/// Independent reference used to bound the error of [`reference_case`].
pub fn alternate_reference_case(slenderness: f64) -> CantileverCase {
    CantileverCase::new(FormulationKind::HellingerReissner, 4, 2048, slenderness)
}

/// `‖u - u_ref‖ / ‖u_ref‖` in L2(R dθ), integrated on the reference mesh.
pub fn relative_l2_error(u: &CantileverSolution, reference: &CantileverSolution) -> Result<f64> {
    let fine = &reference.space;
    if u.space.domain() != fine.domain() {
        return Err(Error::InvalidSpace("solutions live on different arcs".into()));
    }
    let (coarse_n, fine_n) = (u.space.n_elements(), fine.n_elements());
    let (host, q) = if fine_n >= coarse_n { (fine, fine.degree()) } else { (&u.space, u.space.degree()) };
    let rule = gauss_rule(q.max(u.space.degree()) + 2)?;
    let r = reference.case.params.radius;
    let (mut err, mut norm) = (0.0, 0.0);
    for e in 0..host.n_elements() {
        let (lo, hi) = host.element_bounds(e);
        for (t, w) in rule.mapped(lo, hi) {
            let a = u.displacement(t)?;
            let b = reference.displacement(t)?;
            err += w * r * ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2));
            norm += w * r * (b.0 * b.0 + b.1 * b.1);
        }
    }
    if norm == 0.0 {
        return Err(Error::Singular("zero reference solution"));
    }
    Ok((err / norm).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateauRule {
    /// Error reduction factor below which a refinement step stalls.
    pub stall_factor: f64,
    /// Minimum number of consecutive stalled steps.
    pub min_steps: usize,
    /// Local slope some other step must exceed.
    pub asymptotic_slope: f64,
}

impl Default for PlateauRule {
    fn default() -> Self {
        Self { stall_factor: 1.3, min_steps: 2, asymptotic_slope: 1.5 }
    }
}

/// Longest run of stalled refinements, as `(first mesh index, steps)`,
/// provided some step outside it converges faster than the rule's slope.
/// Meshes are assumed to halve `h` at each step.
pub fn detect_plateau(n_elems: &[usize], errors: &[f64], rule: &PlateauRule) -> Option<(usize, usize)> {
    let steps: Vec<(f64, f64)> = n_elems
        .windows(2)
        .zip(errors.windows(2))
        .map(|(n, e)| {
            let ratio = e[0] / e[1];
            (ratio, ratio.ln() / (n[1] as f64 / n[0] as f64).ln())
        })
        .collect();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < steps.len() {
        if steps[i].0 < rule.stall_factor {
            let start = i;
            while i < steps.len() && steps[i].0 < rule.stall_factor {
                i += 1;
            }
            let len = i - start;
            let converges_elsewhere = steps
                .iter()
                .enumerate()
                .any(|(k, s)| (k < start || k >= i) && s.1 > rule.asymptotic_slope);
            if len >= rule.min_steps && converges_elsewhere && best.map_or(true, |b| len > b.1) {
                best = Some((start, len));
            }
        } else {
            i += 1;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CantileverRow {
    pub formulation: FormulationKind,
    pub degree: usize,
    pub n_elem: usize,
    pub slenderness: f64,
    pub rel_l2_err: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CantileverStudy {
    pub rows: Vec<CantileverRow>,
    /// Least-squares slope over the three finest meshes.
    pub slope: f64,
    pub plateau: Option<(usize, usize)>,
}

/// Errors against `reference` under uniform refinement.
pub fn cantilever_convergence(
    kind: FormulationKind,
    degree: usize,
    meshes: &[usize],
    slenderness: f64,
    reference: &CantileverSolution,
    rule: &PlateauRule,
) -> Result<CantileverStudy> {
    let mut rows = Vec::with_capacity(meshes.len());
    for &ne in meshes {
        let sol = solve_cantilever(&CantileverCase::new(kind, degree, ne, slenderness))?;
        rows.push(CantileverRow {
            formulation: kind,
            degree,
            n_elem: ne,
            slenderness,
            rel_l2_err: relative_l2_error(&sol, reference)?,
            energy: sol.energy,
        });
    }
    let tail = rows.len().saturating_sub(3);
    let h: Vec<f64> = rows[tail..].iter().map(|r| 1.0 / r.n_elem as f64).collect();
    let e: Vec<f64> = rows[tail..].iter().map(|r| r.rel_l2_err).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.rel_l2_err).collect();
    Ok(CantileverStudy { slope: fit_slope(&h, &e), plateau: detect_plateau(meshes, &errors, rule), rows })
}
