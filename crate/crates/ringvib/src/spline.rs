//! Uniform open and periodic B-spline spaces.
//!
//! Both kinds share one layout: element `e` is knot span `e + p`, and its
//! `p + 1` supported functions have global indices `e..=e + p`, reduced
//! modulo the dimension for periodic spaces.

use crate::error::{Error, Result};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidSpace("degree must be at least 1".into()));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::InvalidSpace(format!(
                "{} knots cannot carry a degree {degree} basis",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSpace("knots must be finite and nondecreasing".into()));
        }
        let mut run = 1;
        for w in knots.windows(2) {
            run = if w[1] == w[0] { run + 1 } else { 1 };
            if run > degree + 1 {
                return Err(Error::InvalidSpace(format!(
                    "knot {} repeated more than {} times",
                    w[0],
                    degree + 1
                )));
            }
        }
        Ok(Self { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of B-splines the knot vector defines.
    pub fn n_functions(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct breakpoints of the active region `[t_p, t_{m-p}]`.
    pub fn element_boundaries(&self) -> Vec<f64> {
        let p = self.degree;
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.knots[p..self.knots.len() - p] {
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        out
    }

    /// Knot averages, one per B-spline.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree as f64;
        (0..self.n_functions())
            .map(|i| self.knots[i + 1..=i + self.degree].iter().sum::<f64>() / p)
            .collect()
    }

    /// Values and derivatives up to `nd` of the `p + 1` B-splines supported on
    /// knot span `span` at `u`; result is indexed `[derivative][local]`.
    pub fn basis_derivatives(&self, span: usize, u: f64, nd: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let t = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - t[span + 1 - j];
            right[j] = t[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=nd.min(p) {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }
}

/// Nonzero basis functions at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    /// Global function indices, one per local function.
    pub indices: Vec<usize>,
    /// `derivs[k][j]`: k-th derivative of local function j.
    pub derivs: Vec<Vec<f64>>,
}

impl BasisValues {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_derivative(&self) -> usize {
        self.derivs.len() - 1
    }

    /// (global index, k-th derivative) pairs.
    pub fn iter(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.derivs[k].iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace {
    knots: KnotVector,
    dim: usize,
    n_elem: usize,
    periodic: bool,
    a: f64,
    b: f64,
}

impl SplineSpace {
    /// Uniform periodic space on `[0, 2π]` with `n_elem` functions.
    /// Rejects `p < 2`: displacement fields need C1 continuity.
    pub fn periodic(p: usize, n_elem: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidSpace(format!(
                "periodic displacement spaces need degree >= 2, got {p}"
            )));
        }
        Self::periodic_on(p, n_elem, 0.0, 2.0 * PI)
    }

    /// Periodic space of any degree >= 1 on `[a, b]`, e.g. a strain space.
    pub fn periodic_on(p: usize, n_elem: usize, a: f64, b: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidSpace("degree must be at least 1".into()));
        }
        if n_elem < 2 * p + 1 {
            return Err(Error::InvalidSpace(format!(
                "{n_elem} elements are too few to wrap a degree {p} basis (need >= {})",
                2 * p + 1
            )));
        }
        check_domain(a, b)?;
        let h = (b - a) / n_elem as f64;
        let knots = (0..=n_elem + 2 * p)
            .map(|j| a + (j as f64 - p as f64) * h)
            .collect();
        Ok(Self {
            knots: KnotVector::new(p, knots)?,
            dim: n_elem,
            n_elem,
            periodic: true,
            a,
            b,
        })
    }

    /// Uniform open space with end multiplicity `p + 1`.
    pub fn open(p: usize, n_elem: usize, a: f64, b: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidSpace("degree must be at least 1".into()));
        }
        if n_elem == 0 {
            return Err(Error::InvalidSpace("at least one element is required".into()));
        }
        check_domain(a, b)?;
        let h = (b - a) / n_elem as f64;
        let mut knots = vec![a; p + 1];
        knots.extend((1..n_elem).map(|k| a + k as f64 * h));
        knots.extend(std::iter::repeat_n(b, p + 1));
        Ok(Self {
            knots: KnotVector::new(p, knots)?,
            dim: n_elem + p,
            n_elem,
            periodic: false,
            a,
            b,
        })
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.n_elem
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.knots
    }

    pub fn element_size(&self) -> f64 {
        (self.b - self.a) / self.n_elem as f64
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        let h = self.element_size();
        let hi = if e + 1 == self.n_elem { self.b } else { self.a + (e + 1) as f64 * h };
        (self.a + e as f64 * h, hi)
    }

    /// Element containing `theta` and the parameter reduced into the domain.
    /// Periodic spaces wrap; open spaces reject points outside `[a, b]`.
    pub fn locate(&self, theta: f64) -> Result<(usize, f64)> {
        let len = self.b - self.a;
        let tol = 1e-12 * len.max(1.0);
        let x = if self.periodic {
            let r = (theta - self.a).rem_euclid(len);
            if len - r < tol {
                self.a
            } else {
                self.a + r
            }
        } else {
            if !(theta >= self.a - tol && theta <= self.b + tol) {
                return Err(Error::OutOfDomain { value: theta, lo: self.a, hi: self.b });
            }
            theta.clamp(self.a, self.b)
        };
        let e = (((x - self.a) / self.element_size()).floor() as usize).min(self.n_elem - 1);
        Ok((e, x))
    }

    /// Element containing `theta` in the closed interval `[a, b]`, without
    /// periodic wrapping; `b` belongs to the last element.
    pub fn locate_closed(&self, theta: f64) -> Result<(usize, f64)> {
        let len = self.b - self.a;
        let tol = 1e-12 * len.max(1.0);
        if !(theta >= self.a - tol && theta <= self.b + tol) {
            return Err(Error::OutOfDomain { value: theta, lo: self.a, hi: self.b });
        }
        let x = theta.clamp(self.a, self.b);
        let e = (((x - self.a) / self.element_size()).floor() as usize).min(self.n_elem - 1);
        Ok((e, x))
    }

    /// Global index of local function `j` on element `e`.
    pub fn global_index(&self, e: usize, j: usize) -> usize {
        if self.periodic {
            (e + j) % self.dim
        } else {
            e + j
        }
    }

    /// Basis values on a known element; `theta` is not range checked.
    pub fn eval_in_element(&self, e: usize, theta: f64, max_deriv: usize) -> BasisValues {
        let p = self.degree();
        let derivs = self.knots.basis_derivatives(e + p, theta, max_deriv);
        let indices = (0..=p).map(|j| self.global_index(e, j)).collect();
        BasisValues { indices, derivs }
    }

    pub fn eval(&self, theta: f64, max_deriv: usize) -> Result<BasisValues> {
        if max_deriv > self.degree() {
            return Err(Error::DerivativeOrder { requested: max_deriv, degree: self.degree() });
        }
        let (e, x) = self.locate(theta)?;
        Ok(self.eval_in_element(e, x, max_deriv))
    }

    /// k-th derivative of the spline with coefficients `coeffs` at `theta`.
    pub fn evaluate(&self, coeffs: &[f64], theta: f64, k: usize) -> Result<f64> {
        if coeffs.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a space of dimension {}",
                coeffs.len(),
                self.dim
            )));
        }
        let v = self.eval(theta, k)?;
        Ok(v.iter(k).map(|(i, n)| coeffs[i] * n).sum())
    }

    /// One abscissa per basis function, in function order.
    pub fn greville(&self) -> Vec<f64> {
        if !self.periodic {
            return self.knots.greville();
        }
        let p = self.degree() as f64;
        let h = self.element_size();
        let len = self.b - self.a;
        (0..self.dim)
            .map(|g| {
                let x = (g as f64 - 0.5 * (p - 1.0)) * h;
                self.a + x.rem_euclid(len)
            })
            .collect()
    }
}

fn check_domain(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && b > a {
        Ok(())
    } else {
        Err(Error::InvalidSpace(format!("empty domain [{a}, {b}]")))
    }
}
