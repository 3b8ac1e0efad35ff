//! Closed-form eigensolution of the free circular Euler-Bernoulli ring.
//!
//! Mode `(n, branch)` has `v = A1 sin(nθ)`, `w = A2 cos(nθ)`, with the
//! transverse branch carrying the smaller eigenvalue `λ_1n`.

use crate::error::{Error, Result};
use crate::ring::{rotate_to_curvilinear, RingParams};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Embedded reference table for the canonical parameter set.
pub const RING_EIGENPAIRS_FIXTURE: &str = include_str!("../fixtures/ring_eigenpairs.csv");

/// Root of the characteristic quadratic: `Transverse` is λ_1n, `Circumferential` λ_2n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Transverse,
    Circumferential,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Transverse, Branch::Circumferential];

    /// 1 or 2.
    pub fn index(self) -> usize {
        match self {
            Self::Transverse => 1,
            Self::Circumferential => 2,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::Transverse => "transverse",
            Self::Circumferential => "circumferential",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Ring stiffness coefficients of the 2x2 modal system for wavenumber n.
struct ModalStiffness {
    k11: f64,
    k12: f64,
    k22: f64,
}

fn modal_stiffness(n: usize, params: &RingParams) -> ModalStiffness {
    let nf = n as f64;
    let r2 = params.radius * params.radius;
    let (ea, ei) = (params.ea() / r2, params.ei() / (r2 * r2));
    ModalStiffness {
        k11: (ea + ei) * nf * nf,
        k12: (ea + ei * nf * nf) * nf,
        k22: ea + ei * nf.powi(4),
    }
}

/// `(λ_1n, λ_2n)`. The smaller root uses the cancellation-free form
/// `(C - B)/2R⁴ = 2 EA R² EI n² (n² - 1)² / (R⁴ (C + B))`.
pub fn soedel_eigenvalues(n: usize, params: &RingParams) -> (f64, f64) {
    let nf = n as f64;
    let n2 = nf * nf;
    let r = params.radius;
    let (ea, ei) = (params.ea(), params.ei());
    let r2 = r * r;
    let r4 = r2 * r2;
    let c = (ea * r2 + ei * n2) * (n2 + 1.0);
    let b = ((ea * ea * r4 + ei * ei * n2 * n2) * (n2 + 1.0).powi(2)
        + 2.0 * ea * r2 * ei * n2 * (6.0 * n2 - n2 * n2 - 1.0))
        .sqrt();
    let k1 = 2.0 * ea * r2 * ei * n2 * (n2 - 1.0).powi(2) / (r4 * (c + b));
    let k2 = (c + b) / (2.0 * r4);
    (k1 / params.rho_a(), k2 / params.rho_a())
}

/// `r_in = A1 / A2`, with `r = 0` at n = 0 on both branches.
pub fn soedel_amplitude_ratio(n: usize, branch: Branch, params: &RingParams) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let k = modal_stiffness(n, params);
    let (l1, l2) = soedel_eigenvalues(n, params);
    match branch {
        Branch::Transverse => k.k12 / (params.rho_a() * l1 - k.k11),
        // equivalent second row of the modal system, free of cancellation
        Branch::Circumferential => (params.rho_a() * l2 - k.k22) / k.k12,
    }
}

/// A single trigonometric term `amp * cos(kθ)` or `amp * sin(kθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Harmonic {
    pub(crate) amp: f64,
    pub(crate) freq: f64,
    pub(crate) sine: bool,
}

impl Harmonic {
    fn eval(&self, theta: f64, d: usize) -> f64 {
        let (s, c) = (self.freq * theta).sin_cos();
        let scale = self.amp * self.freq.powi(d as i32);
        let v = match (self.sine, d % 4) {
            (false, 0) | (true, 1) => c,
            (false, 1) | (true, 2) => -s,
            (false, 2) | (true, 3) => -c,
            _ => s,
        };
        scale * v
    }
}

/// Unit-L2 analytical mode in Cartesian components.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticalMode {
    pub n: usize,
    pub branch: Branch,
    pub lambda: f64,
    pub ratio: f64,
    /// Normalized `(A1, A2)`; zero for the rigid rotation.
    pub amplitudes: (f64, f64),
    ux: Vec<Harmonic>,
    uy: Vec<Harmonic>,
}

impl AnalyticalMode {
    /// d-th derivatives of `(U_x, U_y)` at `theta`.
    pub fn cartesian(&self, theta: f64, d: usize) -> (f64, f64) {
        let ux = self.ux.iter().map(|h| h.eval(theta, d)).sum();
        let uy = self.uy.iter().map(|h| h.eval(theta, d)).sum();
        (ux, uy)
    }

    /// `(w, v)` at `theta`.
    pub fn curvilinear(&self, theta: f64) -> (f64, f64) {
        let (ux, uy) = self.cartesian(theta, 0);
        rotate_to_curvilinear(ux, uy, theta)
    }

    pub(crate) fn harmonics(&self) -> (&[Harmonic], &[Harmonic]) {
        (&self.ux, &self.uy)
    }

    pub fn is_rigid(&self) -> bool {
        self.lambda == 0.0
    }
}

/// Free-floating mode `(n, branch)`, normalized to `∫ (U_x² + U_y²) R dθ = 1`.
///
/// `(0, transverse)` is the rigid rotation `(-sinθ, cosθ)`; `(1, transverse)`
/// is the x-translation (`r = -1`); `(0, circumferential)` is the breathing mode.
pub fn analytical_mode(n: usize, branch: Branch, params: &RingParams) -> AnalyticalMode {
    let (l1, l2) = soedel_eigenvalues(n, params);
    let lambda = match branch {
        Branch::Transverse => l1,
        Branch::Circumferential => l2,
    };
    let r = params.radius;
    if n == 0 && branch == Branch::Transverse {
        let s = 1.0 / (2.0 * PI * r).sqrt();
        return AnalyticalMode {
            n,
            branch,
            lambda: 0.0,
            ratio: 0.0,
            amplitudes: (0.0, 0.0),
            ux: vec![Harmonic { amp: -s, freq: 1.0, sine: true }],
            uy: vec![Harmonic { amp: s, freq: 1.0, sine: false }],
        };
    }
    let ratio = match (n, branch) {
        (1, Branch::Transverse) => -1.0,
        (1, Branch::Circumferential) => 1.0,
        _ => soedel_amplitude_ratio(n, branch, params),
    };
    let norm2 = if n == 0 { 2.0 * PI * r } else { PI * r * (1.0 + ratio * ratio) };
    let a2 = 1.0 / norm2.sqrt();
    let a1 = ratio * a2;
    let (lo, hi) = ((n as f64 - 1.0).abs(), n as f64 + 1.0);
    // (n-1) terms flip sign for n = 0 because sin(-θ) = -sinθ
    let sgn = if n == 0 { -1.0 } else { 1.0 };
    let ux = vec![
        Harmonic { amp: 0.5 * (a2 - a1), freq: lo, sine: false },
        Harmonic { amp: 0.5 * (a2 + a1), freq: hi, sine: false },
    ];
    let uy = vec![
        Harmonic { amp: sgn * 0.5 * (a1 - a2), freq: lo, sine: true },
        Harmonic { amp: 0.5 * (a1 + a2), freq: hi, sine: true },
    ];
    AnalyticalMode { n, branch, lambda, ratio, amplitudes: (a1, a2), ux, uy }
}

/// Mode numbers per branch whose amplitude ratio marks them transverse
/// (`|r| <= 1`) or circumferential (`|r| > 1` on the first root, `|r| >= 1`
/// on the second), for n in `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnalyticalClassification {
    pub transverse_lambda1: Vec<usize>,
    pub circumferential_lambda1: Vec<usize>,
    pub transverse_lambda2: Vec<usize>,
    pub circumferential_lambda2: Vec<usize>,
}

impl AnalyticalClassification {
    /// Candidate mode numbers of a given discrete type on a given root.
    pub fn candidates(&self, transverse_type: bool, branch: Branch) -> &[usize] {
        match (transverse_type, branch) {
            (true, Branch::Transverse) => &self.transverse_lambda1,
            (false, Branch::Transverse) => &self.circumferential_lambda1,
            (true, Branch::Circumferential) => &self.transverse_lambda2,
            (false, Branch::Circumferential) => &self.circumferential_lambda2,
        }
    }
}

pub fn classify_analytical(n_max: usize, params: &RingParams) -> AnalyticalClassification {
    let mut out = AnalyticalClassification::default();
    for n in 0..=n_max {
        let r1 = analytical_mode(n, Branch::Transverse, params).ratio.abs();
        let r2 = analytical_mode(n, Branch::Circumferential, params).ratio.abs();
        if r1 <= 1.0 {
            out.transverse_lambda1.push(n);
        } else {
            out.circumferential_lambda1.push(n);
        }
        if r2 >= 1.0 {
            out.circumferential_lambda2.push(n);
        } else {
            out.transverse_lambda2.push(n);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub r1: f64,
    pub r2: f64,
}

impl TableRow {
    pub fn values(&self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.r1, self.r2]
    }
}

pub fn soedel_table(n_max: usize, params: &RingParams) -> Vec<TableRow> {
    (0..=n_max)
        .map(|n| {
            let (lambda1, lambda2) = soedel_eigenvalues(n, params);
            TableRow {
                n,
                lambda1,
                lambda2,
                r1: analytical_mode(n, Branch::Transverse, params).ratio,
                r2: analytical_mode(n, Branch::Circumferential, params).ratio,
            }
        })
        .collect()
}

/// Parses `n,lambda1,lambda2,r1,r2` rows; `#` lines and the header are skipped.
pub fn parse_fixture(text: &str) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("n,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::Fixture(format!("line {}: expected 5 fields, got {}", lineno + 1, fields.len())));
        }
        let bad = |f: &str| Error::Fixture(format!("line {}: cannot parse '{f}'", lineno + 1));
        let n = fields[0].parse::<usize>().map_err(|_| bad(fields[0]))?;
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse::<f64>().map_err(|_| bad(f))?;
        }
        rows.push(TableRow { n, lambda1: v[0], lambda2: v[1], r1: v[2], r2: v[3] });
    }
    if rows.is_empty() {
        return Err(Error::Fixture("no data rows".into()));
    }
    Ok(rows)
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_deviation(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Per-row comparison of a recomputed table against reference rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureCheck {
    pub n: usize,
    /// Relative deviations of `[λ1, λ2, r1, r2]`.
    pub deviations: [f64; 4],
    pub pass: bool,
}

pub fn compare_fixture(reference: &[TableRow], params: &RingParams, tol: f64) -> Vec<FixtureCheck> {
    reference
        .iter()
        .map(|row| {
            let computed = soedel_table(row.n, params)[row.n];
            let mut deviations = [0.0; 4];
            for (d, (a, b)) in deviations.iter_mut().zip(computed.values().iter().zip(row.values())) {
                *d = relative_deviation(*a, b);
            }
            FixtureCheck { n: row.n, deviations, pass: deviations.iter().all(|&d| d <= tol) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_rule;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn eigenvalue_examples() {
        let p = RingParams::canonical();
        let (l1, l2) = soedel_eigenvalues(0, &p);
        assert_eq!(l1, 0.0);
        assert_relative_eq!(l2, 1.2e6, max_relative = 1e-14);
        let (l1, l2) = soedel_eigenvalues(2, &p);
        assert_relative_eq!(l1, 1.619999222176224, max_relative = 1e-9);
        assert_relative_eq!(l2, 6.000002880000779e6, max_relative = 1e-13);
        let (l1, l2) = soedel_eigenvalues(20, &p);
        assert_relative_eq!(l1, 3.573087108895835e4, max_relative = 1e-12);
        assert_relative_eq!(l2, 4.812003591289111e8, max_relative = 1e-13);
        assert_eq!(soedel_eigenvalues(1, &p).0, 0.0);
    }

    #[test]
    fn ratio_examples() {
        let p = RingParams::canonical();
        assert_eq!(analytical_mode(1, Branch::Transverse, &p).ratio, -1.0);
        assert_eq!(analytical_mode(1, Branch::Circumferential, &p).ratio, 1.0);
        assert_relative_eq!(soedel_amplitude_ratio(1, Branch::Transverse, &p), -1.0, max_relative = 1e-12);
        assert_relative_eq!(soedel_amplitude_ratio(1, Branch::Circumferential, &p), 1.0, max_relative = 1e-12);
        assert_relative_eq!(soedel_amplitude_ratio(3, Branch::Transverse, &p), -3.333342333340016e-1, max_relative = 1e-13);
        assert_relative_eq!(soedel_amplitude_ratio(10, Branch::Circumferential, &p), 9.999632432768221, max_relative = 1e-13);
    }

    #[test]
    fn monotone_and_asymptotic_ratios() {
        let p = RingParams::canonical();
        let t = soedel_table(64, &p);
        for w in t.windows(2) {
            assert!(w[1].lambda2 > w[0].lambda2);
            if w[0].n >= 2 {
                assert!(w[1].lambda1 > w[0].lambda1);
            }
        }
        for row in &t {
            assert!(row.lambda1 <= row.lambda2);
            if row.n >= 10 {
                let nf = row.n as f64;
                assert!((row.r1.abs() * nf - 1.0).abs() < 0.01);
                assert!((row.r2.abs() / nf - 1.0).abs() < 0.01);
            }
        }
    }

    #[test]
    fn classification() {
        let c = classify_analytical(20, &RingParams::canonical());
        assert_eq!(c.transverse_lambda1, (0..=20).collect::<Vec<_>>());
        assert!(c.circumferential_lambda1.is_empty());
        assert_eq!(c.transverse_lambda2, vec![0]);
        assert_eq!(c.circumferential_lambda2, (1..=20).collect::<Vec<_>>());
    }

    fn inner(a: &AnalyticalMode, b: &AnalyticalMode, r: f64) -> f64 {
        let q = gauss_rule(12).unwrap();
        (0..64)
            .map(|e| {
                let lo = 2.0 * PI * e as f64 / 64.0;
                q.integrate(lo, lo + 2.0 * PI / 64.0, |t| {
                    let (ax, ay) = a.cartesian(t, 0);
                    let (bx, by) = b.cartesian(t, 0);
                    (ax * bx + ay * by) * r
                })
            })
            .sum()
    }

    #[test]
    fn modes_are_orthonormal() {
        let p = RingParams { radius: 1.7, ..RingParams::canonical() };
        let modes: Vec<_> = (0..8)
            .flat_map(|n| Branch::BOTH.map(|b| analytical_mode(n, b, &p)))
            .collect();
        for (i, a) in modes.iter().enumerate() {
            for (j, b) in modes.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(inner(a, b, p.radius), expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn special_shapes() {
        let p = RingParams::canonical();
        let s = 1.0 / (2.0 * PI).sqrt();
        let t = 0.37;
        let (ux, uy) = analytical_mode(0, Branch::Circumferential, &p).cartesian(t, 0);
        assert_abs_diff_eq!(ux, s * t.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(uy, s * t.sin(), epsilon = 1e-15);
        let (ux, uy) = analytical_mode(0, Branch::Transverse, &p).cartesian(t, 0);
        assert_abs_diff_eq!(ux, -s * t.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(uy, s * t.cos(), epsilon = 1e-15);
        let (ux, uy) = analytical_mode(1, Branch::Transverse, &p).cartesian(t, 0);
        assert_abs_diff_eq!(ux, 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(uy, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cartesian_form_matches_curvilinear_definition() {
        let p = RingParams::canonical();
        for n in 0..6 {
            for b in Branch::BOTH {
                let m = analytical_mode(n, b, &p);
                if n == 0 && b == Branch::Transverse {
                    continue;
                }
                let (a1, a2) = m.amplitudes;
                for k in 0..10 {
                    let t = 0.61 * k as f64;
                    let (w, v) = m.curvilinear(t);
                    assert_abs_diff_eq!(v, a1 * (n as f64 * t).sin(), epsilon = 1e-14);
                    assert_abs_diff_eq!(w, a2 * (n as f64 * t).cos(), epsilon = 1e-14);
                }
                // phase constraints hold for the free-floating family
                assert_abs_diff_eq!(m.cartesian(0.0, 1).0, 0.0, epsilon = 1e-14);
                assert_abs_diff_eq!(m.cartesian(0.0, 0).1, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = analytical_mode(3, Branch::Transverse, &RingParams::canonical());
        let h = 1e-5;
        for d in 0..3 {
            let (xp, yp) = m.cartesian(0.4 + h, d);
            let (xm, ym) = m.cartesian(0.4 - h, d);
            let (x1, y1) = m.cartesian(0.4, d + 1);
            assert_abs_diff_eq!((xp - xm) / (2.0 * h), x1, epsilon = 1e-6);
            assert_abs_diff_eq!((yp - ym) / (2.0 * h), y1, epsilon = 1e-6);
        }
    }

    #[test]
    fn fixture_parses_and_scaling_is_detected() {
        let rows = parse_fixture(RING_EIGENPAIRS_FIXTURE).unwrap();
        assert_eq!(rows.len(), 21);
        assert_eq!(rows[2].n, 2);
        let checks = compare_fixture(&rows, &RingParams::canonical().scaled_modulus(1.01), 1e-12);
        for c in checks.iter().filter(|c| c.n >= 1) {
            assert!(!c.pass);
            assert_relative_eq!(c.deviations[1], 0.01 / 1.01, max_relative = 1e-6);
        }
        assert!(parse_fixture("n,lambda1\n1,2\n").is_err());
        assert!(parse_fixture("# nothing\n").is_err());
    }
}
