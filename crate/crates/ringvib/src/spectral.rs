//! Mode classification, free-floating filtering, analytical matching,
//! error spectra and the locking indicator for the ring.

use crate::analytical::{analytical_mode, classify_analytical, AnalyticalClassification, AnalyticalMode, Branch};
use crate::assembly::{assemble_ring, FormulationKind, FormulationSpec};
use crate::eigen::{apply_phase_constraints, phase_constraint_rows, ModeLabel, ModeMeta, ModeSet};
use crate::error::{Error, Result};
use crate::locking_free::{bbar_projection, ProjectionSpaces};
use crate::quadrature::gauss_rule;
use crate::ring::{bending_strain_cartesian, membrane_strain_cartesian, rotate_to_curvilinear, RingParams};
use crate::spline::SplineSpace;
use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// Relative coefficient-reflection residual above which a mode is
    /// not free-floating.
    pub parity_tol: f64,
    /// Phase-constraint residual of a unit-norm mode.
    pub constraint_tol: f64,
    /// `| |r^h| - 1 |` below which the amplitude ratio counts as one.
    pub unit_ratio_tol: f64,
    /// `λ^h < zero_tol * λ_max` counts as a zero eigenvalue.
    pub zero_tol: f64,
    /// Two candidate errors closer than this make an assignment ambiguous.
    pub ambiguity_tol: f64,
    /// Eigenvalues within `cluster_tol * λ_max` form one repeated eigenspace.
    pub cluster_tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { parity_tol: 1e-6, constraint_tol: 1e-8, unit_ratio_tol: 1e-3, zero_tol: 1e-8, ambiguity_tol: 1e-6, cluster_tol: 1e-12 }
    }
}

/// Evaluates ring modes at `p + 2` Gauss points per element.
#[derive(Debug, Clone)]
pub struct ModeSampler {
    space: SplineSpace,
    n_q: usize,
    thetas: Vec<f64>,
    weights: Vec<f64>,
    basis: Vec<(Vec<usize>, Vec<f64>)>,
    /// Gauss offsets and weights inside one element.
    offsets: Vec<(f64, f64)>,
}

impl ModeSampler {
    pub fn new(space: &SplineSpace, radius: f64) -> Result<Self> {
        let n_q = space.degree() + 2;
        let rule = gauss_rule(n_q)?;
        let mut thetas = Vec::with_capacity(space.n_elements() * n_q);
        let mut weights = Vec::with_capacity(thetas.capacity());
        let mut basis = Vec::with_capacity(thetas.capacity());
        for e in 0..space.n_elements() {
            let (lo, hi) = space.element_bounds(e);
            for (t, w) in rule.mapped(lo, hi) {
                let v = space.eval_in_element(e, t, 0);
                thetas.push(t);
                weights.push(w * radius);
                basis.push((v.indices, v.derivs.into_iter().next().unwrap_or_default()));
            }
        }
        let (lo, hi) = space.element_bounds(0);
        let offsets = rule.mapped(lo, hi).map(|(t, w)| (t, w * radius)).collect();
        Ok(Self { space: space.clone(), n_q, thetas, weights, basis, offsets })
    }

    pub fn space(&self) -> &SplineSpace {
        &self.space
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// `(u_x, u_y)` at every sample point.
    pub fn sample(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.space.dim();
        let mut ux = Vec::with_capacity(self.thetas.len());
        let mut uy = Vec::with_capacity(self.thetas.len());
        for (idx, val) in &self.basis {
            let (mut x, mut y) = (0.0, 0.0);
            for (&i, &b) in idx.iter().zip(val) {
                x += u[i] * b;
                y += u[n + i] * b;
            }
            ux.push(x);
            uy.push(y);
        }
        (ux, uy)
    }

    pub fn norm(&self, ux: &[f64], uy: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(ux.iter().zip(uy))
            .map(|(w, (x, y))| w * (x * x + y * y))
            .sum::<f64>()
            .sqrt()
    }

    /// `(∫ v² R dθ, ∫ w² R dθ)`.
    pub fn curvilinear_energies(&self, ux: &[f64], uy: &[f64]) -> (f64, f64) {
        let (mut vv, mut ww) = (0.0, 0.0);
        for (k, &t) in self.thetas.iter().enumerate() {
            let (w, v) = rotate_to_curvilinear(ux[k], uy[k], t);
            vv += self.weights[k] * v * v;
            ww += self.weights[k] * w * w;
        }
        (vv, ww)
    }

    /// `min_s ‖s·U^h - U‖` for unit-norm samples and analytical mode, with
    /// the minimizing sign.
    pub fn error_to(&self, ux: &[f64], uy: &[f64], mode: &AnalyticalMode) -> (f64, f64) {
        let (mut plus, mut minus) = (0.0, 0.0);
        for (k, &t) in self.thetas.iter().enumerate() {
            let (ax, ay) = mode.cartesian(t, 0);
            let w = self.weights[k];
            plus += w * ((ux[k] - ax).powi(2) + (uy[k] - ay).powi(2));
            minus += w * ((ux[k] + ax).powi(2) + (uy[k] + ay).powi(2));
        }
        if plus <= minus {
            (plus.sqrt(), 1.0)
        } else {
            (minus.sqrt(), -1.0)
        }
    }

    /// Quadrature-exact Fourier moments `∫ f cos(kθ) R dθ`, `∫ f sin(kθ) R dθ`
    /// for `k = 0..=k_max`, computed per Gauss offset with one FFT over elements.
    fn fourier(&self, f: &[f64], k_max: usize, planner: &mut FftPlanner<f64>) -> (Vec<f64>, Vec<f64>) {
        let ne = self.space.n_elements();
        let fft = planner.plan_fft_forward(ne);
        let (mut cos_m, mut sin_m) = (vec![0.0; k_max + 1], vec![0.0; k_max + 1]);
        let mut buf = vec![Complex::new(0.0, 0.0); ne];
        for (q, &(xi, w)) in self.offsets.iter().enumerate() {
            for (e, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(f[e * self.n_q + q], 0.0);
            }
            fft.process(&mut buf);
            for k in 0..=k_max {
                // Σ_e f_e e^{ik(eh + ξ)} = e^{ikξ} conj(F[k])
                let z = Complex::from_polar(1.0, k as f64 * xi) * buf[k % ne].conj();
                cos_m[k] += w * z.re;
                sin_m[k] += w * z.im;
            }
        }
        (cos_m, sin_m)
    }
}

/// Coefficient-level reflection `θ -> -θ` about the domain start:
/// `u_x` stays, `u_y` flips sign. Free-floating modes are invariant.
pub fn reflect(space: &SplineSpace, u: &[f64]) -> Vec<f64> {
    let n = space.dim();
    let p = space.degree();
    let mut out = vec![0.0; 2 * n];
    for g in 0..n {
        let m = (p - 1 + n - g % n) % n;
        out[g] = u[m];
        out[n + g] = -u[n + m];
    }
    out
}

/// `‖u - Pu‖ / (2‖u‖)` for the reflection `P`.
pub fn reflection_residual(space: &SplineSpace, u: &[f64]) -> f64 {
    let norm: f64 = u.iter().map(|x| x * x).sum();
    if norm == 0.0 {
        return 0.0;
    }
    let diff: f64 = reflect(space, u).iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum();
    (diff / norm).sqrt() / 2.0
}

/// Rotates each cluster of (numerically) repeated eigenvalues so its
/// vectors are reflection eigenvectors. The solver returns an arbitrary
/// basis of a repeated eigenspace, which would otherwise mix symmetric and
/// antisymmetric members.
pub fn align_degenerate_clusters(modes: &ModeSet, mass: &DMatrix<f64>, space: &SplineSpace, rel_tol: f64) -> Result<ModeSet> {
    let eigs = modes.eigenvalues();
    let gap = rel_tol * modes.lambda_max().max(f64::MIN_POSITIVE);
    let mut u = modes.modes().clone();
    let mut start = 0;
    while start < eigs.len() {
        let mut end = start + 1;
        while end < eigs.len() && eigs[end] - eigs[end - 1] <= gap {
            end += 1;
        }
        if end - start > 1 {
            let block = u.columns(start, end - start).into_owned();
            let mut reflected = DMatrix::zeros(block.nrows(), block.ncols());
            for j in 0..block.ncols() {
                let r = reflect(space, block.column(j).as_slice());
                reflected.column_mut(j).copy_from_slice(&r);
            }
            let q = block.transpose() * mass * reflected;
            let q = 0.5 * (&q + q.transpose());
            let rot = nalgebra::SymmetricEigen::new(q).eigenvectors;
            u.columns_mut(start, end - start).copy_from(&(block * rot));
        }
        start = end;
    }
    ModeSet::new(eigs.to_vec(), u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeFloatingCheck {
    /// `|U_x,θ(0)| / dim` for the unit-norm mode.
    pub slope_residual: f64,
    /// `|U_y(0)|` for the unit-norm mode.
    pub value_residual: f64,
    pub reflection_residual: f64,
    pub retained: bool,
}

/// Keeps modes satisfying the phase constraints and the reflection symmetry
/// of the free-floating family.
pub fn filter_free_floating(modes: &ModeSet, sampler: &ModeSampler, opts: &SpectralOptions) -> Result<(Vec<usize>, Vec<FreeFloatingCheck>)> {
    let space = sampler.space();
    let rows = phase_constraint_rows(space)?;
    let mut kept = Vec::new();
    let mut checks = Vec::with_capacity(modes.len());
    for i in 0..modes.len() {
        let u = modes.modes().column(i);
        let (ux, uy) = sampler.sample(u.as_slice());
        let norm = sampler.norm(&ux, &uy).max(f64::MIN_POSITIVE);
        let r = &rows * u;
        let slope_residual = r[0].abs() / (norm * space.dim() as f64);
        let value_residual = r[1].abs() / norm;
        let reflection = reflection_residual(space, u.as_slice());
        let retained = slope_residual < opts.constraint_tol
            && value_residual < opts.constraint_tol
            && reflection < opts.parity_tol;
        if retained {
            kept.push(i);
        }
        checks.push(FreeFloatingCheck { slope_residual, value_residual, reflection_residual: reflection, retained });
    }
    Ok((kept, checks))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteClass {
    /// `|r^h| = sqrt(∫ v² / ∫ w²)`; infinite when `w ≡ 0`.
    pub ratio: f64,
    pub label: ModeLabel,
}

/// Labels each mode transverse (`|r^h| < 1`) or circumferential
/// (`|r^h| > 1`); at `|r^h| ≈ 1` zero eigenvalues go to transverse and the
/// rest to circumferential.
pub fn classify_discrete(modes: &ModeSet, sampler: &ModeSampler, opts: &SpectralOptions) -> Vec<DiscreteClass> {
    let lmax = modes.lambda_max();
    (0..modes.len())
        .map(|i| {
            let (ux, uy) = sampler.sample(modes.modes().column(i).as_slice());
            let (vv, ww) = sampler.curvilinear_energies(&ux, &uy);
            if ww == 0.0 {
                return DiscreteClass { ratio: f64::INFINITY, label: ModeLabel::Circumferential };
            }
            let ratio = (vv / ww).sqrt();
            let label = if (ratio - 1.0).abs() <= opts.unit_ratio_tol {
                if modes.eigenvalues()[i].abs() < opts.zero_tol * lmax {
                    ModeLabel::Transverse
                } else {
                    ModeLabel::Circumferential
                }
            } else if ratio < 1.0 {
                ModeLabel::Transverse
            } else {
                ModeLabel::Circumferential
            };
            DiscreteClass { ratio, label }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Assignment {
    pub mode_index: usize,
    pub n: usize,
    pub branch: Branch,
    /// Relative L2 mode error after sign selection.
    pub error: f64,
    pub sign: f64,
    /// Error of the best competing candidate.
    pub runner_up: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatchOutcome {
    pub assigned: Vec<Assignment>,
    /// Modes whose two best candidates are within the ambiguity tolerance.
    pub ambiguous: Vec<usize>,
    /// Modes losing a shared analytical target to a better match.
    pub duplicates: Vec<usize>,
}

/// Assigns each retained mode to the analytical mode with the smallest L2
/// error among candidates of its type on either root.
pub fn match_modes(
    modes: &ModeSet,
    retained: &[usize],
    classes: &[DiscreteClass],
    sampler: &ModeSampler,
    params: &RingParams,
    opts: &SpectralOptions,
) -> Result<MatchOutcome> {
    let space = sampler.space();
    if !space.is_periodic() || space.domain().0 != 0.0 {
        return Err(Error::InvalidSpace("mode matching needs a periodic ring space starting at 0".into()));
    }
    let n_max = space.n_elements() / 2 + 2;
    let table = classify_analytical(n_max, params);
    let analytical: BTreeMap<(usize, Branch), AnalyticalMode> = (0..=n_max)
        .flat_map(|n| Branch::BOTH.map(|b| ((n, b), analytical_mode(n, b, params))))
        .collect();
    let mut planner = FftPlanner::new();
    let mut outcome = MatchOutcome::default();
    let mut best_for: BTreeMap<(usize, Branch), usize> = BTreeMap::new();

    for &i in retained {
        let (mut ux, mut uy) = sampler.sample(modes.modes().column(i).as_slice());
        let norm = sampler.norm(&ux, &uy);
        if norm == 0.0 {
            continue;
        }
        ux.iter_mut().chain(uy.iter_mut()).for_each(|v| *v /= norm);
        let (cx, sx) = sampler.fourier(&ux, n_max + 1, &mut planner);
        let (cy, sy) = sampler.fourier(&uy, n_max + 1, &mut planner);
        let inner = |m: &AnalyticalMode| -> f64 {
            let (hx, hy) = m.harmonics();
            let term = |h: &crate::analytical::Harmonic, c: &[f64], s: &[f64]| {
                let k = h.freq as usize;
                h.amp * if h.sine { s[k] } else { c[k] }
            };
            hx.iter().map(|h| term(h, &cx, &sx)).sum::<f64>() + hy.iter().map(|h| term(h, &cy, &sy)).sum::<f64>()
        };
        let transverse_type = classes[i].label != ModeLabel::Circumferential;
        // squared-error estimates 2 - 2|<U^h, U>| for ranking
        let mut ranked: Vec<(f64, usize, Branch)> = Vec::new();
        for b in Branch::BOTH {
            for &n in AnalyticalClassification::candidates(&table, transverse_type, b) {
                let est = 2.0 - 2.0 * inner(&analytical[&(n, b)]).abs();
                ranked.push((est, n, b));
            }
        }
        if ranked.is_empty() {
            continue;
        }
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let (_, n, b) = ranked[0];
        let (error, sign) = sampler.error_to(&ux, &uy, &analytical[&(n, b)]);
        let runner_up = ranked
            .get(1)
            .map(|&(_, n2, b2)| sampler.error_to(&ux, &uy, &analytical[&(n2, b2)]).0)
            .unwrap_or(f64::INFINITY);
        if (runner_up - error).abs() < opts.ambiguity_tol {
            outcome.ambiguous.push(i);
            continue;
        }
        let a = Assignment { mode_index: i, n, branch: b, error, sign, runner_up };
        match best_for.get(&(n, b)) {
            Some(&k) if outcome.assigned[k].error <= error => outcome.duplicates.push(i),
            Some(&k) => {
                outcome.duplicates.push(outcome.assigned[k].mode_index);
                outcome.assigned[k] = a;
            }
            None => {
                best_for.insert((n, b), outcome.assigned.len());
                outcome.assigned.push(a);
            }
        }
    }
    outcome.assigned.sort_by_key(|a| (a.branch, a.n));
    outcome.duplicates.sort_unstable();
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Eigenvalue,
    Mode,
}

impl Quantity {
    pub const BOTH: [Quantity; 2] = [Quantity::Eigenvalue, Quantity::Mode];

    pub fn id(self) -> &'static str {
        match self {
            Self::Eigenvalue => "eigenvalue",
            Self::Mode => "mode",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEntry {
    pub branch: Branch,
    pub n: usize,
    pub n_over_n: f64,
    pub lambda_h: f64,
    pub lambda_exact: f64,
    /// Signed `(λ^h - λ) / λ`.
    pub ev_err: f64,
    pub mode_err: f64,
    pub pyth_residual: Option<f64>,
    pub mode_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub formulation: FormulationKind,
    pub degree: usize,
    pub n_elem: usize,
    /// Nonrigid matched modes sorted by branch, then n.
    pub entries: Vec<SpectrumEntry>,
    /// Matched retained modes per branch (rigid ones included).
    pub n_matched: [usize; 2],
    pub n_modes: usize,
    pub n_retained: usize,
    pub n_ambiguous: usize,
    pub n_duplicates: usize,
    /// Whether ascending λ^h maps to ascending n on each branch.
    pub ordered: [bool; 2],
}

impl SpectrumReport {
    pub fn branch(&self, b: Branch) -> impl Iterator<Item = &SpectrumEntry> {
        self.entries.iter().filter(move |e| e.branch == b)
    }

    pub fn entry(&self, b: Branch, n: usize) -> Option<&SpectrumEntry> {
        self.entries.iter().find(|e| e.branch == b && e.n == n)
    }

    /// `(n/N, |error|)` sorted by `n/N`.
    pub fn curve(&self, b: Branch, q: Quantity) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .branch(b)
            .map(|e| {
                let y = match q {
                    Quantity::Eigenvalue => e.ev_err.abs(),
                    Quantity::Mode => e.mode_err,
                };
                (e.n_over_n, y)
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }
}

/// Builds the report from an assignment; rigid analytical targets count
/// towards `N` but carry no relative error.
pub fn error_spectra(
    spec: &FormulationSpec,
    modes: &ModeSet,
    outcome: &MatchOutcome,
    n_retained: usize,
    params: &RingParams,
) -> SpectrumReport {
    let count = |b: Branch| outcome.assigned.iter().filter(|a| a.branch == b).count();
    let n_matched = [count(Branch::Transverse), count(Branch::Circumferential)];
    let mut entries = Vec::new();
    for a in &outcome.assigned {
        let exact = analytical_mode(a.n, a.branch, params).lambda;
        if exact == 0.0 {
            continue;
        }
        let lambda_h = modes.eigenvalues()[a.mode_index];
        let big_n = n_matched[a.branch.index() - 1].max(1) as f64;
        entries.push(SpectrumEntry {
            branch: a.branch,
            n: a.n,
            n_over_n: a.n as f64 / big_n,
            lambda_h,
            lambda_exact: exact,
            ev_err: (lambda_h - exact) / exact,
            mode_err: a.error,
            pyth_residual: None,
            mode_index: a.mode_index,
        });
    }
    entries.sort_by_key(|e| (e.branch, e.n));
    let ordered = Branch::BOTH.map(|b| {
        let mut by_n: Vec<&Assignment> = outcome.assigned.iter().filter(|a| a.branch == b).collect();
        by_n.sort_by_key(|a| a.n);
        by_n.windows(2).all(|w| modes.eigenvalues()[w[0].mode_index] <= modes.eigenvalues()[w[1].mode_index])
    });
    SpectrumReport {
        formulation: spec.kind,
        degree: spec.degree,
        n_elem: spec.n_elem,
        entries,
        n_matched,
        n_modes: modes.len(),
        n_retained,
        n_ambiguous: outcome.ambiguous.len(),
        n_duplicates: outcome.duplicates.len(),
        ordered,
    }
}

/// Full pipeline output for one ring case.
#[derive(Debug, Clone)]
pub struct RingSpectrum {
    pub spec: FormulationSpec,
    pub params: RingParams,
    pub space: SplineSpace,
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    /// Constrained eigenpairs expanded to full coefficients, with metadata.
    pub modes: ModeSet,
    pub classes: Vec<DiscreteClass>,
    pub checks: Vec<FreeFloatingCheck>,
    pub outcome: MatchOutcome,
    pub report: SpectrumReport,
}

/// Assemble, constrain, solve, filter, classify, match and report.
pub fn analyze_ring(spec: &FormulationSpec, params: &RingParams, opts: &SpectralOptions) -> Result<RingSpectrum> {
    let system = assemble_ring(spec, params)?;
    let constrained = apply_phase_constraints(&system.stiffness, &system.mass, &system.space)?;
    let modes = align_degenerate_clusters(&constrained.solve()?, &system.mass, &system.space, opts.cluster_tol)?;
    drop(constrained);
    let sampler = ModeSampler::new(&system.space, params.radius)?;
    let (retained, checks) = filter_free_floating(&modes, &sampler, opts)?;
    let classes = classify_discrete(&modes, &sampler, opts);
    let outcome = match_modes(&modes, &retained, &classes, &sampler, params, opts)?;
    let report = error_spectra(spec, &modes, &outcome, retained.len(), params);
    let mut meta: Vec<ModeMeta> = classes
        .iter()
        .zip(&checks)
        .map(|(c, f)| ModeMeta { label: c.label, analytical_n: None, free_floating: f.retained })
        .collect();
    for a in &outcome.assigned {
        meta[a.mode_index].analytical_n = Some(a.n);
    }
    let modes = modes.with_meta(meta)?;
    Ok(RingSpectrum {
        spec: *spec,
        params: *params,
        space: system.space,
        stiffness: system.stiffness,
        mass: system.mass,
        modes,
        classes,
        checks,
        outcome,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Locking,
    LockingFree,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockingThresholds {
    pub locking: f64,
    pub locking_free: f64,
}

impl Default for LockingThresholds {
    fn default() -> Self {
        Self { locking: 1.0, locking_free: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LockingVerdict {
    pub formulation: FormulationKind,
    pub branch: Branch,
    pub quantity: Quantity,
    /// Median decade deviation between coarse and overkill curves.
    pub metric: f64,
    pub n_points: usize,
    pub locking: bool,
    pub verdict: Verdict,
}

fn interpolate(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let (first, last) = (curve.first()?, curve.last()?);
    if x < first.0 || x > last.0 {
        return None;
    }
    let k = curve.partition_point(|p| p.0 < x);
    if k == 0 {
        return Some(first.1);
    }
    let (a, b) = (curve[k - 1], curve[k.min(curve.len() - 1)]);
    if b.0 == a.0 {
        return Some(b.1);
    }
    Some(a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0))
}

/// Median over shared `n/N` of `|log10(coarse / overkill)|`, the overkill
/// curve linearly interpolated.
pub fn locking_metric(
    coarse: &SpectrumReport,
    overkill: &SpectrumReport,
    branch: Branch,
    quantity: Quantity,
    thresholds: &LockingThresholds,
) -> Result<LockingVerdict> {
    if coarse.formulation != overkill.formulation {
        return Err(Error::InvalidParams("locking metric compares reports of one formulation".into()));
    }
    let reference = overkill.curve(branch, quantity);
    let floor = f64::MIN_POSITIVE;
    let mut devs: Vec<f64> = coarse
        .curve(branch, quantity)
        .into_iter()
        .filter_map(|(x, y)| interpolate(&reference, x).map(|r| (y.max(floor) / r.max(floor)).log10().abs()))
        .collect();
    if devs.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    devs.sort_by(f64::total_cmp);
    let k = devs.len();
    let metric = if k % 2 == 1 { devs[k / 2] } else { 0.5 * (devs[k / 2 - 1] + devs[k / 2]) };
    let verdict = if metric > thresholds.locking {
        Verdict::Locking
    } else if metric < thresholds.locking_free {
        Verdict::LockingFree
    } else {
        Verdict::Indeterminate
    };
    Ok(LockingVerdict {
        formulation: coarse.formulation,
        branch,
        quantity,
        metric,
        n_points: k,
        locking: metric > thresholds.locking,
        verdict,
    })
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fit_slope(h: &[f64], err: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(err)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub n_elem: usize,
    pub lambda_h: f64,
    pub ev_err: f64,
    pub mode_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub formulation: FormulationKind,
    pub degree: usize,
    pub target_n: usize,
    pub branch: Branch,
    pub points: Vec<ConvergencePoint>,
    pub ev_slope: f64,
    pub mode_slope: f64,
}

/// Errors of one analytical mode under uniform refinement, with fitted rates.
pub fn eigen_convergence_study(
    kind: FormulationKind,
    degree: usize,
    meshes: &[usize],
    target: (usize, Branch),
    params: &RingParams,
    opts: &SpectralOptions,
) -> Result<ConvergenceStudy> {
    let mut points = Vec::new();
    for &ne in meshes {
        let spec = FormulationSpec::new(kind, degree, ne);
        let s = analyze_ring(&spec, params, opts)?;
        let e = s.report.entry(target.1, target.0).ok_or_else(|| {
            Error::InvalidParams(format!("mode {} ({}) not matched on {ne} elements", target.0, target.1))
        })?;
        points.push(ConvergencePoint { n_elem: ne, lambda_h: e.lambda_h, ev_err: e.ev_err, mode_err: e.mode_err });
    }
    let h: Vec<f64> = points.iter().map(|p| 1.0 / p.n_elem as f64).collect();
    let ev: Vec<f64> = points.iter().map(|p| p.ev_err.abs()).collect();
    let md: Vec<f64> = points.iter().map(|p| p.mode_err).collect();
    Ok(ConvergenceStudy {
        formulation: kind,
        degree,
        target_n: target.0,
        branch: target.1,
        ev_slope: fit_slope(&h, &ev),
        mode_slope: fit_slope(&h, &md),
        points,
    })
}

/// Exact prolongation of coarse coefficients into a nested fine space,
/// via the L2 projection `M_f⁻¹ ∫ N_f N_c R dθ`, applied per block.
pub fn prolongation(coarse: &SplineSpace, fine: &SplineSpace, radius: f64) -> Result<DMatrix<f64>> {
    if fine.n_elements() % coarse.n_elements() != 0 || fine.domain() != coarse.domain() {
        return Err(Error::InvalidSpace("fine space is not a uniform refinement of the coarse one".into()));
    }
    let (nf, nc) = (fine.dim(), coarse.dim());
    let q = gauss_rule(fine.degree() + coarse.degree() + 1)?;
    let mut mixed = DMatrix::zeros(nf, nc);
    let mut gram = DMatrix::zeros(nf, nf);
    for e in 0..fine.n_elements() {
        let (lo, hi) = fine.element_bounds(e);
        for (t, w) in q.mapped(lo, hi) {
            let vf = fine.eval_in_element(e, t, 0);
            let vc = coarse.eval(0.5 * (lo + hi), 0).map(|_| coarse.locate(t))??;
            let vc = coarse.eval_in_element(vc.0, t, 0);
            for (i, a) in vf.iter(0) {
                for (j, b) in vc.iter(0) {
                    mixed[(i, j)] += w * radius * a * b;
                }
                for (j, b) in vf.iter(0) {
                    gram[(i, j)] += w * radius * a * b;
                }
            }
        }
    }
    let chol = gram.cholesky().ok_or(Error::Singular("fine Gram"))?;
    Ok(chol.solve(&mixed))
}

/// L2 projection of an analytical mode onto a space, as full coefficients.
pub fn project_analytical(space: &SplineSpace, mode: &AnalyticalMode, radius: f64) -> Result<DVector<f64>> {
    let n = space.dim();
    let q = gauss_rule(space.degree() + 4)?;
    let mut gram = DMatrix::zeros(n, n);
    let mut rhs = DMatrix::zeros(n, 2);
    for e in 0..space.n_elements() {
        let (lo, hi) = space.element_bounds(e);
        for (t, w) in q.mapped(lo, hi) {
            let v = space.eval_in_element(e, t, 0);
            let (ux, uy) = mode.cartesian(t, 0);
            for (i, a) in v.iter(0) {
                rhs[(i, 0)] += w * radius * a * ux;
                rhs[(i, 1)] += w * radius * a * uy;
                for (j, b) in v.iter(0) {
                    gram[(i, j)] += w * radius * a * b;
                }
            }
        }
    }
    let c = gram.cholesky().ok_or(Error::Singular("Gram"))?.solve(&rhs);
    Ok(DVector::from_iterator(2 * n, c.column(0).iter().chain(c.column(1).iter()).copied()))
}

/// Energy norm used for the Pythagorean check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyNorm {
    /// `EA‖ε_m‖² + EI‖κ‖²`.
    Continuous,
    /// `EA‖Π ε_m‖² + EI‖κ‖²`, with `Π` the L2 projection onto the
    /// degree `p - 1` strain space.
    Projected,
}

impl EnergyNorm {
    /// The norm matching a formulation's bilinear form.
    pub fn for_kind(kind: FormulationKind) -> Self {
        if kind.is_standard() {
            Self::Continuous
        } else {
            Self::Projected
        }
    }
}

/// Residual of `ev_err + mode_err² = ‖U^h - U‖²_E / ‖U‖²_E` per report
/// entry, for unit-norm modes with the matched sign. Integrals use `p + 6`
/// Gauss points per element; the discrete projected strain uses the
/// formulation's own `p`-point coupling.
pub fn pythagorean_residuals(spectrum: &RingSpectrum, norm: EnergyNorm) -> Result<Vec<f64>> {
    let space = &spectrum.space;
    let params = &spectrum.params;
    let r = params.radius;
    let n = space.dim();
    let q = gauss_rule(space.degree() + 6)?;
    let sampler = ModeSampler::new(space, r)?;
    let projection = match norm {
        EnergyNorm::Continuous => None,
        EnergyNorm::Projected => {
            let strain = ProjectionSpaces::for_space(space)?.strain;
            let proj = bbar_projection(space, &strain, params, space.degree())?;
            let chol = proj.gram.clone().cholesky().ok_or(Error::Singular("projection Gram"))?;
            Some((strain, proj.coupling, chol))
        }
    };
    let mut out = Vec::with_capacity(spectrum.report.entries.len());
    for e in &spectrum.report.entries {
        let a = spectrum
            .outcome
            .assigned
            .iter()
            .find(|a| a.mode_index == e.mode_index)
            .ok_or_else(|| Error::InvalidParams(format!("mode {} has no assignment", e.mode_index)))?;
        let u = spectrum.modes.mode(e.mode_index);
        let (ux, uy) = sampler.sample(u.as_slice());
        let uh = u * (a.sign / sampler.norm(&ux, &uy));
        let exact = analytical_mode(e.n, e.branch, params);
        let (mut membrane_err, mut membrane) = (0.0, 0.0);
        let (mut bending_err, mut bending) = (0.0, 0.0);
        let mut moments = projection.as_ref().map(|p| DVector::zeros(p.0.dim()));
        for el in 0..space.n_elements() {
            let (lo, hi) = space.element_bounds(el);
            for (t, w) in q.mapped(lo, hi) {
                let wr = w * r;
                let v = space.eval_in_element(el, t, 2);
                let mut d = [[0.0; 3]; 2];
                for k in 1..3 {
                    for (i, b) in v.iter(k) {
                        d[0][k] += uh[i] * b;
                        d[1][k] += uh[n + i] * b;
                    }
                }
                let x1 = exact.cartesian(t, 1);
                let x2 = exact.cartesian(t, 2);
                let em = membrane_strain_cartesian(x1.0, x1.1, t, r);
                let kb = bending_strain_cartesian(x1.0, x2.0, x1.1, x2.1, t, r);
                let hb = bending_strain_cartesian(d[0][1], d[0][2], d[1][1], d[1][2], t, r);
                bending += wr * kb * kb;
                bending_err += wr * (hb - kb).powi(2);
                match (&projection, moments.as_mut()) {
                    (Some((strain, _, _)), Some(m)) => {
                        let (se, _) = strain.locate_closed(t)?;
                        for (j, b) in strain.eval_in_element(se, t, 0).iter(0) {
                            m[j] += wr * b * em;
                        }
                    }
                    _ => {
                        let hm = membrane_strain_cartesian(d[0][1], d[1][1], t, r);
                        membrane += wr * em * em;
                        membrane_err += wr * (hm - em).powi(2);
                    }
                }
            }
        }
        if let (Some((_, coupling, chol)), Some(m)) = (&projection, moments) {
            let diff = coupling * &uh - &m;
            membrane_err = diff.dot(&chol.solve(&diff));
            membrane = m.dot(&chol.solve(&m));
        }
        let err = params.ea() * membrane_err + params.ei() * bending_err;
        let energy = params.ea() * membrane + params.ei() * bending;
        out.push(e.ev_err + e.mode_err * e.mode_err - err / energy);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve_gevp;
    use crate::ring::interpolate_cartesian;
    use approx::assert_abs_diff_eq;

    fn canonical() -> RingParams {
        RingParams::canonical()
    }

    #[test]
    fn fourier_moments_match_direct_quadrature() {
        let s = SplineSpace::periodic(3, 16).unwrap();
        let sampler = ModeSampler::new(&s, 1.3).unwrap();
        let u: Vec<f64> = (0..32).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let (ux, _) = sampler.sample(&u);
        let mut planner = FftPlanner::new();
        let (c, sn) = sampler.fourier(&ux, 12, &mut planner);
        for k in 0..=12 {
            let (mut dc, mut ds) = (0.0, 0.0);
            for (i, &t) in sampler.thetas().iter().enumerate() {
                dc += sampler.weights[i] * ux[i] * (k as f64 * t).cos();
                ds += sampler.weights[i] * ux[i] * (k as f64 * t).sin();
            }
            assert_abs_diff_eq!(c[k], dc, epsilon = 1e-12);
            assert_abs_diff_eq!(sn[k], ds, epsilon = 1e-12);
        }
    }

    #[test]
    fn analytical_against_itself_has_zero_error() {
        let p = canonical();
        let s = SplineSpace::periodic(2, 32).unwrap();
        let sampler = ModeSampler::new(&s, p.radius).unwrap();
        let m = analytical_mode(3, Branch::Transverse, &p);
        let ux: Vec<f64> = sampler.thetas().iter().map(|&t| m.cartesian(t, 0).0).collect();
        let uy: Vec<f64> = sampler.thetas().iter().map(|&t| m.cartesian(t, 0).1).collect();
        assert_abs_diff_eq!(sampler.norm(&ux, &uy), 1.0, epsilon = 1e-12);
        assert!(sampler.error_to(&ux, &uy, &m).0 < 1e-12);
        let neg: Vec<f64> = ux.iter().map(|v| -v).collect();
        let negy: Vec<f64> = uy.iter().map(|v| -v).collect();
        let (err, sign) = sampler.error_to(&neg, &negy, &m);
        assert!(err < 1e-12 && sign == -1.0);
    }

    #[test]
    fn reflection_residual_of_symmetric_fields() {
        let s = SplineSpace::periodic(3, 16).unwrap();
        let even = interpolate_cartesian(&s, |t| ((2.0 * t).cos(), (3.0 * t).sin())).unwrap();
        assert!(reflection_residual(&s, &even) < 1e-12);
        let odd = interpolate_cartesian(&s, |t| ((2.0 * t).sin(), (3.0 * t).cos())).unwrap();
        assert!(reflection_residual(&s, &odd) > 0.4);
    }

    #[test]
    fn classification_examples() {
        let p = canonical();
        let s = SplineSpace::periodic(2, 16).unwrap();
        let sampler = ModeSampler::new(&s, p.radius).unwrap();
        let breathing = interpolate_cartesian(&s, |t| (t.cos(), t.sin())).unwrap();
        let rotation = interpolate_cartesian(&s, |t| (-t.sin(), t.cos())).unwrap();
        let modes = ModeSet::new(
            vec![1.0e6, 0.0],
            DMatrix::from_columns(&[DVector::from_vec(breathing), DVector::from_vec(rotation)]),
        )
        .unwrap();
        let c = classify_discrete(&modes, &sampler, &SpectralOptions::default());
        assert!(c[0].ratio < 1e-3 && c[0].label == ModeLabel::Transverse);
        assert!(c[1].ratio > 1e2 && c[1].label == ModeLabel::Circumferential);
    }

    #[test]
    fn unconstrained_solve_rejects_at_least_half() {
        let p = canonical();
        let sys = assemble_ring(&FormulationSpec::new(FormulationKind::StandardFull, 2, 16), &p).unwrap();
        let modes = solve_gevp(&sys.stiffness, &sys.mass).unwrap();
        let sampler = ModeSampler::new(&sys.space, p.radius).unwrap();
        let (kept, checks) = filter_free_floating(&modes, &sampler, &SpectralOptions::default()).unwrap();
        assert!(kept.len() <= modes.len() / 2, "kept {}", kept.len());
        // rigid y-translation violates U_y(0) = 0
        let mut ty = DVector::zeros(32);
        ty.rows_mut(16, 16).fill(1.0);
        let single = ModeSet::new(vec![0.0], DMatrix::from_columns(&[ty])).unwrap();
        let (k2, c2) = filter_free_floating(&single, &sampler, &SpectralOptions::default()).unwrap();
        assert!(k2.is_empty() && c2[0].value_residual > 0.1);
        assert_eq!(checks.len(), 32);
    }

    #[test]
    fn constrained_pipeline_counts() {
        let p = canonical();
        let s = analyze_ring(&FormulationSpec::new(FormulationKind::StandardFull, 2, 64), &p, &SpectralOptions::default()).unwrap();
        let r = &s.report;
        assert_eq!(r.n_modes, 126);
        assert_eq!(r.n_retained, 64);
        assert_eq!(r.n_ambiguous + r.n_duplicates, 0);
        assert_eq!(r.n_matched[0] + r.n_matched[1], 64);
        // every constrained mode satisfies the phase constraints
        assert!(s.checks.iter().all(|c| c.slope_residual < 1e-8 && c.value_residual < 1e-10));
        for e in &r.entries {
            assert!(e.ev_err >= -1.0 && (0.0..=2.0).contains(&e.mode_err));
        }
        // conforming method: below the aliased top harmonic the discrete
        // eigenvalues sit above the exact ones
        assert!(r.entries.iter().filter(|e| e.n < 32).all(|e| e.ev_err > -1e-10));
    }

    #[test]
    fn matching_is_invariant_to_mode_sign() {
        let p = canonical();
        let s = analyze_ring(&FormulationSpec::new(FormulationKind::BBar, 2, 16), &p, &SpectralOptions::default()).unwrap();
        let sampler = ModeSampler::new(&s.space, p.radius).unwrap();
        let flipped = ModeSet::new(s.modes.eigenvalues().to_vec(), -s.modes.modes()).unwrap();
        let retained: Vec<usize> = s.checks.iter().enumerate().filter(|c| c.1.retained).map(|c| c.0).collect();
        let o = match_modes(&flipped, &retained, &s.classes, &sampler, &p, &SpectralOptions::default()).unwrap();
        assert_eq!(o.assigned.len(), s.outcome.assigned.len());
        for (a, b) in o.assigned.iter().zip(&s.outcome.assigned) {
            assert_eq!((a.n, a.branch, a.mode_index), (b.n, b.branch, b.mode_index));
            assert_abs_diff_eq!(a.error, b.error, epsilon = 1e-12);
            assert_eq!(a.sign, -b.sign);
        }
    }

    #[test]
    fn locking_metric_against_itself_is_zero() {
        let p = canonical();
        let s = analyze_ring(&FormulationSpec::new(FormulationKind::StandardFull, 2, 16), &p, &SpectralOptions::default()).unwrap();
        for b in Branch::BOTH {
            for q in Quantity::BOTH {
                let v = locking_metric(&s.report, &s.report, b, q, &LockingThresholds::default()).unwrap();
                assert_eq!(v.metric, 0.0);
                assert_eq!(v.verdict, Verdict::LockingFree);
            }
        }
        let mut empty = s.report.clone();
        empty.entries.clear();
        assert_eq!(
            locking_metric(&s.report, &empty, Branch::Transverse, Quantity::Eigenvalue, &LockingThresholds::default()),
            Err(Error::EmptyOverlap)
        );
    }

    #[test]
    fn slope_fit() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(4)).collect();
        assert_abs_diff_eq!(fit_slope(&h, &e), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn pythagorean_identity_holds_for_conforming_method() {
        let p = canonical();
        // overintegrated so the discrete form equals the continuous one
        let mut spec = FormulationSpec::new(FormulationKind::StandardFull, 3, 32);
        spec.quadrature = crate::assembly::QuadratureOverrides { membrane: Some(10), bending: Some(10), mass: None };
        let s = analyze_ring(&spec, &p, &SpectralOptions::default()).unwrap();
        let r = pythagorean_residuals(&s, EnergyNorm::Continuous).unwrap();
        for (e, x) in s.report.entries.iter().zip(&r) {
            if e.n <= 10 {
                assert!(x.abs() < 1e-6, "{} {}: {x}", e.branch, e.n);
            }
        }
        let b = analyze_ring(&FormulationSpec::new(FormulationKind::BBar, 3, 32), &p, &SpectralOptions::default()).unwrap();
        let continuous = pythagorean_residuals(&b, EnergyNorm::Continuous).unwrap();
        let projected = pythagorean_residuals(&b, EnergyNorm::Projected).unwrap();
        // the continuous norm sees the membrane strain B-bar discards
        assert!(continuous[0] < -0.1);
        assert!(projected[0].abs() < 1e-5);
    }

    #[test]
    fn prolongation_is_exact_for_nested_spaces() {
        let c = SplineSpace::periodic(2, 8).unwrap();
        let f = SplineSpace::periodic(2, 32).unwrap();
        let p = prolongation(&c, &f, 1.0).unwrap();
        let u: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let uf = &p * DVector::from_vec(u.clone());
        for k in 0..40 {
            let t = 0.157 * k as f64;
            assert_abs_diff_eq!(c.evaluate(&u, t, 0).unwrap(), f.evaluate(uf.as_slice(), t, 0).unwrap(), epsilon = 1e-12);
        }
        assert!(prolongation(&c, &SplineSpace::periodic(2, 12).unwrap(), 1.0).is_err());
    }
}
