//! Symmetric-definite generalized eigenproblems `K U = λ M U`.
//!
//! The mass matrix is factored `M = L Lᵀ`, the problem reduced to the
//! standard form `L⁻¹ K L⁻ᵀ y = λ y`, solved by Householder tridiagonalization
//! with implicit symmetric QR, and mapped back with `U = L⁻ᵀ y`.

use crate::error::{Error, Result};
use crate::spline::SplineSpace;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeLabel {
    Transverse,
    Circumferential,
    #[default]
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeMeta {
    pub label: ModeLabel,
    pub analytical_n: Option<usize>,
    pub free_floating: bool,
}

/// Ascending eigenvalues with M-orthonormal coefficient vectors as columns.
#[derive(Debug, Clone)]
pub struct ModeSet {
    eigenvalues: Vec<f64>,
    modes: DMatrix<f64>,
    meta: Vec<ModeMeta>,
}

impl ModeSet {
    pub fn new(eigenvalues: Vec<f64>, modes: DMatrix<f64>) -> Result<Self> {
        if modes.ncols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} eigenvalues for {} modes",
                eigenvalues.len(),
                modes.ncols()
            )));
        }
        let meta = vec![ModeMeta::default(); eigenvalues.len()];
        Ok(Self { eigenvalues, modes, meta })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> DVector<f64> {
        self.modes.column(i).into_owned()
    }

    pub fn meta(&self) -> &[ModeMeta] {
        &self.meta
    }

    pub fn with_meta(mut self, meta: Vec<ModeMeta>) -> Result<Self> {
        if meta.len() != self.len() {
            return Err(Error::DimensionMismatch("metadata length differs from mode count".into()));
        }
        self.meta = meta;
        Ok(self)
    }

    /// Subset of modes, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            eigenvalues: indices.iter().map(|&i| self.eigenvalues[i]).collect(),
            modes: self.modes.select_columns(indices),
            meta: indices.iter().map(|&i| self.meta[i]).collect(),
        }
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// Largest `‖K u - λ M u‖ / (λ_max ‖u‖_M)` over all modes.
    pub fn max_residual(&self, k: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
        let lmax = self.lambda_max().max(f64::MIN_POSITIVE);
        (0..self.len())
            .map(|i| {
                let u = self.modes.column(i);
                let mu = m * u;
                let r = k * u - &mu * self.eigenvalues[i];
                r.norm() / (lmax * u.dot(&mu).sqrt())
            })
            .fold(0.0, f64::max)
    }
}

/// Solves `K U = λ M U` for all eigenpairs.
pub fn solve_gevp(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<ModeSet> {
    let n = m.nrows();
    if !m.is_square() || k.shape() != m.shape() {
        return Err(Error::DimensionMismatch(format!(
            "K is {:?} while M is {:?}",
            k.shape(),
            m.shape()
        )));
    }
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite("mass"))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(k)
        .ok_or(Error::NotPositiveDefinite("mass"))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::NotPositiveDefinite("mass"))?;
    let c = (&c + c.transpose()) * 0.5;
    let max_sweeps = 64 * n.max(1);
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, max_sweeps)
        .ok_or(Error::NoConvergence { iterations: max_sweeps, dim: n })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = eig.eigenvectors.select_columns(&order);
    let modes = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or(Error::NotPositiveDefinite("mass"))?;
    ModeSet::new(eigenvalues, modes)
}

/// Number of eigenvalues below `rel_tol * λ_max`.
pub fn count_near_zero(eigenvalues: &[f64], rel_tol: f64) -> usize {
    let lmax = eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    eigenvalues.iter().filter(|&&l| l < rel_tol * lmax).count()
}

/// Orthonormal basis `T` of the null space of a few sparse constraint rows.
///
/// Coefficients untouched by every row pass through as identity columns;
/// the rows' support is completed by Householder reflections. Columns are
/// ordered: untouched coefficients ascending, then the support block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBasis {
    n_full: usize,
    free: Vec<usize>,
    support: Vec<usize>,
    block: DMatrix<f64>,
}

impl ConstraintBasis {
    /// `rows` is `m x N` with `m` independent constraints `rows * u = 0`.
    pub fn from_rows(rows: &DMatrix<f64>) -> Result<Self> {
        let n_full = rows.ncols();
        let m = rows.nrows();
        let support: Vec<usize> = (0..n_full).filter(|&j| rows.column(j).iter().any(|&v| v != 0.0)).collect();
        let free: Vec<usize> = (0..n_full).filter(|j| !support.contains(j)).collect();
        let s = support.len();
        if s < m {
            return Err(Error::RankDeficientConstraints { pivot: 0.0 });
        }
        // Householder QR of the restricted transpose, accumulating Q.
        let mut a = rows.select_columns(&support).transpose();
        let mut q = DMatrix::<f64>::identity(s, s);
        let scale = a.amax().max(f64::MIN_POSITIVE);
        for j in 0..m {
            let x = a.view((j, j), (s - j, 1)).into_owned();
            let norm = x.norm();
            if norm <= 1e-12 * scale {
                return Err(Error::RankDeficientConstraints { pivot: norm });
            }
            let mut v = x;
            v[0] += v[0].signum().max(0.0).mul_add(2.0, -1.0) * norm;
            let vv = v.dot(&v);
            let mut tail = a.view_mut((j, 0), (s - j, m));
            let proj = v.transpose() * &tail;
            tail -= &v * proj * (2.0 / vv);
            let mut qcols = q.view_mut((0, j), (s, s - j));
            let qv = &qcols * &v;
            qcols -= qv * v.transpose() * (2.0 / vv);
        }
        let block = q.columns(m, s - m).into_owned();
        Ok(Self { n_full, free, support, block })
    }

    pub fn n_full(&self) -> usize {
        self.n_full
    }

    pub fn n_reduced(&self) -> usize {
        self.free.len() + self.block.ncols()
    }

    /// Dense `N x (N - m)` basis matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.n_full, self.n_reduced());
        for (c, &i) in self.free.iter().enumerate() {
            t[(i, c)] = 1.0;
        }
        let off = self.free.len();
        for (r, &i) in self.support.iter().enumerate() {
            for c in 0..self.block.ncols() {
                t[(i, off + c)] = self.block[(r, c)];
            }
        }
        t
    }

    /// `Tᵀ A T` for symmetric `A`.
    pub fn reduce(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.free.len();
        let nb = self.block.ncols();
        let mut out = DMatrix::zeros(nf + nb, nf + nb);
        let aff = a.select_rows(&self.free).select_columns(&self.free);
        out.view_mut((0, 0), (nf, nf)).copy_from(&aff);
        let afs = a.select_rows(&self.free).select_columns(&self.support);
        let fb = afs * &self.block;
        out.view_mut((0, nf), (nf, nb)).copy_from(&fb);
        out.view_mut((nf, 0), (nb, nf)).copy_from(&fb.transpose());
        let ass = a.select_rows(&self.support).select_columns(&self.support);
        let bb = self.block.transpose() * ass * &self.block;
        out.view_mut((nf, nf), (nb, nb)).copy_from(&bb);
        out
    }

    /// `A T` for any `A` with `N` columns.
    pub fn restrict_columns(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.free.len();
        let nb = self.block.ncols();
        let mut out = DMatrix::zeros(a.nrows(), nf + nb);
        out.columns_mut(0, nf).copy_from(&a.select_columns(&self.free));
        out.columns_mut(nf, nb).copy_from(&(a.select_columns(&self.support) * &self.block));
        out
    }

    /// `Tᵀ f`.
    pub fn reduce_vector(&self, f: &DVector<f64>) -> DVector<f64> {
        let nf = self.free.len();
        let mut out = DVector::zeros(self.n_reduced());
        for (c, &i) in self.free.iter().enumerate() {
            out[c] = f[i];
        }
        let fs = DVector::from_iterator(self.support.len(), self.support.iter().map(|&i| f[i]));
        out.rows_mut(nf, self.block.ncols()).copy_from(&(self.block.transpose() * fs));
        out
    }

    /// `T U` column by column.
    pub fn expand(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.free.len();
        let mut out = DMatrix::zeros(self.n_full, u.ncols());
        for (c, &i) in self.free.iter().enumerate() {
            out.row_mut(i).copy_from(&u.row(c));
        }
        let sb = &self.block * u.rows(nf, self.block.ncols());
        for (r, &i) in self.support.iter().enumerate() {
            out.row_mut(i).copy_from(&sb.row(r));
        }
        out
    }

    pub fn expand_vector(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(u.len(), 1, u.as_slice());
        self.expand(&m).column(0).into_owned()
    }
}

/// Rows of `U_x,θ(a) = 0` and `U_y(a) = 0` at the start `a` of the domain.
pub fn phase_constraint_rows(space: &SplineSpace) -> Result<DMatrix<f64>> {
    let n = space.dim();
    let (a, _) = space.domain();
    let v = space.eval(a, 1)?;
    let mut rows = DMatrix::zeros(2, 2 * n);
    for (i, d1) in v.iter(1) {
        rows[(0, i)] += d1;
    }
    for (i, d0) in v.iter(0) {
        rows[(1, n + i)] += d0;
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub basis: ConstraintBasis,
}

impl ConstrainedSystem {
    /// Solves the reduced problem and maps modes back to full coefficients.
    pub fn solve(&self) -> Result<ModeSet> {
        let reduced = solve_gevp(&self.stiffness, &self.mass)?;
        let modes = self.basis.expand(reduced.modes());
        ModeSet::new(reduced.eigenvalues().to_vec(), modes)
    }
}

/// Restricts a periodic ring system to the phase-fixing null space.
pub fn apply_phase_constraints(k: &DMatrix<f64>, m: &DMatrix<f64>, space: &SplineSpace) -> Result<ConstrainedSystem> {
    if !space.is_periodic() {
        return Err(Error::InvalidSpace("phase constraints apply to periodic ring spaces".into()));
    }
    if k.nrows() != 2 * space.dim() || m.shape() != k.shape() {
        return Err(Error::DimensionMismatch("system size differs from 2 x space dimension".into()));
    }
    let basis = ConstraintBasis::from_rows(&phase_constraint_rows(space)?)?;
    Ok(ConstrainedSystem { stiffness: basis.reduce(k), mass: basis.reduce(m), basis })
}

/// `c_n = (U_nᵀ f) / (λ_n U_nᵀ M U_n)` for every mode of the set.
pub fn modal_expansion_coefficients(modes: &ModeSet, m: &DMatrix<f64>, f: &DVector<f64>) -> Result<Vec<f64>> {
    let lmax = modes.lambda_max();
    (0..modes.len())
        .map(|i| {
            let lambda = modes.eigenvalues()[i];
            if !(lambda > 1e-12 * lmax) {
                return Err(Error::ZeroEigenvalue { index: i, lambda });
            }
            let u = modes.modes().column(i);
            Ok(u.dot(f) / (lambda * u.dot(&(m * u))))
        })
        .collect()
}

/// `Σ c_n U_n`.
pub fn modal_superposition(modes: &ModeSet, coeffs: &[f64]) -> DVector<f64> {
    modes.modes() * DVector::from_column_slice(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_ring, FormulationKind, FormulationSpec};
    use crate::ring::RingParams;
    use approx::assert_abs_diff_eq;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        let a = DMatrix::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        &a * a.transpose() + DMatrix::identity(n, n) * n as f64
    }

    #[test]
    fn equal_matrices_give_unit_spectrum() {
        let m = spd(6, 3);
        let modes = solve_gevp(&m, &m).unwrap();
        for &l in modes.eigenvalues() {
            assert_abs_diff_eq!(l, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_two_by_two() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let modes = solve_gevp(&k, &DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(modes.eigenvalues()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(modes.eigenvalues()[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_indefinite_mass_and_bad_shapes() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(solve_gevp(&m, &m).unwrap_err(), Error::NotPositiveDefinite("mass"));
        assert!(solve_gevp(&DMatrix::zeros(3, 3), &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn mass_orthonormal_and_small_residual() {
        let k = spd(20, 5);
        let m = spd(20, 9);
        let modes = solve_gevp(&k, &m).unwrap();
        let g = modes.modes().transpose() * &m * modes.modes();
        assert!((g - DMatrix::identity(20, 20)).amax() < 1e-10);
        assert!(modes.max_residual(&k, &m) < 1e-12);
        assert!(modes.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn small_ring_matches_explicit_inverse() {
        let sys = assemble_ring(&FormulationSpec::new(FormulationKind::StandardFull, 2, 8), &RingParams::canonical()).unwrap();
        let modes = solve_gevp(&sys.stiffness, &sys.mass).unwrap();
        let a = sys.mass.clone().try_inverse().unwrap() * &sys.stiffness;
        let mut brute: Vec<f64> = a.complex_eigenvalues().iter().map(|z| z.re).collect();
        brute.sort_by(f64::total_cmp);
        let lmax = brute[brute.len() - 1];
        for (x, y) in modes.eigenvalues().iter().zip(&brute) {
            assert!((x - y).abs() <= 1e-8 * y.abs() + 1e-12 * lmax, "{x} vs {y}");
        }
    }

    #[test]
    fn null_space_basis_properties() {
        let s = SplineSpace::periodic(2, 64).unwrap();
        let rows = phase_constraint_rows(&s).unwrap();
        let b = ConstraintBasis::from_rows(&rows).unwrap();
        assert_eq!(b.n_reduced(), 126);
        let t = b.to_dense();
        assert!((&rows * &t).amax() < 1e-14);
        assert!((t.transpose() * &t - DMatrix::identity(126, 126)).amax() < 1e-14);
        let a = spd(128, 1);
        assert!((b.reduce(&a) - t.transpose() * &a * &t).amax() < 1e-10);
        let f = DVector::from_fn(128, |i, _| i as f64);
        assert!((b.reduce_vector(&f) - t.transpose() * &f).amax() < 1e-12);
        let u = DMatrix::from_fn(126, 3, |i, j| (i * j) as f64);
        assert!((b.expand(&u) - &t * &u).amax() < 1e-12);
    }

    #[test]
    fn dependent_rows_are_rejected() {
        let mut rows = DMatrix::zeros(2, 6);
        rows[(0, 1)] = 1.0;
        rows[(0, 2)] = 2.0;
        rows[(1, 1)] = 2.0;
        rows[(1, 2)] = 4.0;
        assert!(matches!(ConstraintBasis::from_rows(&rows), Err(Error::RankDeficientConstraints { .. })));
    }

    #[test]
    fn constrained_ring_interlaces_and_satisfies_constraints() {
        let sys = assemble_ring(&FormulationSpec::new(FormulationKind::StandardFull, 2, 16), &RingParams::canonical()).unwrap();
        let full = solve_gevp(&sys.stiffness, &sys.mass).unwrap();
        let con = apply_phase_constraints(&sys.stiffness, &sys.mass, &sys.space).unwrap();
        let modes = con.solve().unwrap();
        assert_eq!(modes.len(), 30);
        let rows = phase_constraint_rows(&sys.space).unwrap();
        assert!((rows * modes.modes()).amax() < 1e-10);
        let lmax = full.lambda_max();
        let (u, c) = (full.eigenvalues(), modes.eigenvalues());
        for i in 0..c.len() {
            assert!(u[i] <= c[i] + 1e-10 * lmax && c[i] <= u[i + 2] + 1e-10 * lmax);
        }
    }

    #[test]
    fn modal_expansion_examples() {
        let k = spd(10, 11);
        let m = spd(10, 12);
        let modes = solve_gevp(&k, &m).unwrap();
        let x = DVector::from_fn(10, |i, _| (i as f64).sin());
        let c = modal_expansion_coefficients(&modes, &m, &(&k * &x)).unwrap();
        assert!((modal_superposition(&modes, &c) - &x).amax() < 1e-10);
        let f = &m * modes.mode(0);
        let c = modal_expansion_coefficients(&modes, &m, &f).unwrap();
        assert_abs_diff_eq!(c[0], 1.0 / modes.eigenvalues()[0], epsilon = 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn modal_expansion_rejects_rigid_modes() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
        let modes = solve_gevp(&k, &DMatrix::identity(2, 2)).unwrap();
        let err = modal_expansion_coefficients(&modes, &DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 1.0]));
        assert!(matches!(err, Err(Error::ZeroEigenvalue { index: 0, .. })));
    }
}
