//! Pass/fail evaluation of the project's acceptance criteria from study
//! results. Each function takes already computed data so the CLI and the
//! test suite share one definition.

use crate::analytical::{compare_fixture, parse_fixture, Branch, RING_EIGENPAIRS_FIXTURE};
use crate::assembly::{assemble_ring, FormulationKind, FormulationSpec};
use crate::cantilever::CantileverStudy;
use crate::eigen::{count_near_zero, solve_gevp};
use crate::error::Result;
use crate::ring::RingParams;
use crate::spectral::{
    locking_metric, pythagorean_residuals, ConvergenceStudy, EnergyNorm, LockingThresholds, Quantity, RingSpectrum,
    SpectrumReport, Verdict,
};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub criterion: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(criterion: u8, name: &'static str, pass: bool, detail: String) -> Self {
        Self { criterion, name, pass, detail }
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}]: {} - {}",
            self.criterion,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

fn find(reports: &[SpectrumReport], kind: FormulationKind) -> Option<&SpectrumReport> {
    reports.iter().find(|r| r.formulation == kind)
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn ratio(a: f64, b: f64) -> f64 {
    a.abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Closed-form table against the stored fixture.
pub fn fixture_reproduction(tol: f64) -> Result<CheckOutcome> {
    let rows = parse_fixture(RING_EIGENPAIRS_FIXTURE)?;
    let checks = compare_fixture(&rows, &RingParams::canonical(), tol);
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("n={} ({:.1e})", c.n, c.deviations.iter().fold(0.0_f64, |a, &b| a.max(b))))
        .collect();
    let worst = checks.iter().flat_map(|c| c.deviations).fold(0.0_f64, f64::max);
    Ok(CheckOutcome::new(
        1,
        "analytical fixture",
        failed.is_empty() && checks.len() == 21,
        format!("{} rows, worst deviation {worst:.2e}, failing: [{}]", checks.len(), failed.join(", ")),
    ))
}

/// Exactly three eigenvalues below `1e-8 λ_max` and none below `-1e-8 λ_max`
/// for unconstrained standard-full rings.
pub fn rank_sufficiency(cases: &[(usize, usize)], params: &RingParams) -> Result<CheckOutcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for &(p, ne) in cases {
        let sys = assemble_ring(&FormulationSpec::new(FormulationKind::StandardFull, p, ne), params)?;
        let modes = solve_gevp(&sys.stiffness, &sys.mass)?;
        let lmax = modes.lambda_max();
        let zeros = count_near_zero(modes.eigenvalues(), 1e-8);
        let min = modes.eigenvalues()[0] / lmax;
        let ok = zeros == 3 && min >= -1e-8 && lmax.is_finite();
        pass &= ok;
        parts.push(format!("p={p} n={ne}: {zeros} near-zero, min {min:.1e}"));
    }
    Ok(CheckOutcome::new(2, "rank sufficiency", pass, parts.join("; ")))
}

/// Standard-full overkill eigenvalues against the closed form for n <= 10.
pub fn overkill_correctness(report: &SpectrumReport) -> CheckOutcome {
    let worst = |b: Branch| {
        report
            .branch(b)
            .filter(|e| e.n <= 10)
            .map(|e| e.ev_err.abs())
            .fold(0.0_f64, f64::max)
    };
    let count = |b: Branch| report.branch(b).filter(|e| e.n <= 10).count();
    let (t, c) = (worst(Branch::Transverse), worst(Branch::Circumferential));
    CheckOutcome::new(
        3,
        "overkill correctness",
        t < 1e-4 && c < 1e-4 && count(Branch::Transverse) == 9 && count(Branch::Circumferential) == 11,
        format!(
            "{} p={} n={}: max transverse {t:.2e}, max circumferential {c:.2e}",
            report.formulation, report.degree, report.n_elem
        ),
    )
}

/// Standard-full transverse eigenvalue errors two decades above B-bar for
/// the lowest five nonrigid transverse modes, plus the locking verdicts.
pub fn locking_reproduction(
    coarse: &[SpectrumReport],
    overkill: &[SpectrumReport],
    thresholds: &LockingThresholds,
) -> Result<CheckOutcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    if let (Some(full), Some(bbar)) = (find(coarse, FormulationKind::StandardFull), find(coarse, FormulationKind::BBar)) {
        let lowest: Vec<f64> = full
            .branch(Branch::Transverse)
            .take(5)
            .map(|e| bbar.entry(Branch::Transverse, e.n).map_or(0.0, |b| ratio(e.ev_err, b.ev_err)))
            .collect();
        let min = lowest.iter().copied().fold(f64::INFINITY, f64::min);
        pass &= lowest.len() == 5 && min >= 100.0;
        parts.push(format!("min full/B-bar ratio over lowest 5 transverse {min:.1}"));
    } else {
        pass = false;
        parts.push("standard-full or B-bar report missing".into());
    }
    for kind in FormulationKind::ALL {
        let (Some(c), Some(o)) = (find(coarse, kind), find(overkill, kind)) else {
            pass = false;
            parts.push(format!("{kind}: missing"));
            continue;
        };
        let v = locking_metric(c, o, Branch::Transverse, Quantity::Eigenvalue, thresholds)?;
        let expected = if kind.is_standard() { Verdict::Locking } else { Verdict::LockingFree };
        pass &= v.verdict == expected;
        parts.push(format!("{kind} {:.2} {:?}", v.metric, v.verdict));
    }
    Ok(CheckOutcome::new(4, "locking reproduction", pass, parts.join("; ")))
}

/// Circumferential curves of standard-full and B-bar within a factor of
/// two over the lower 80% of the normalized spectrum.
pub fn non_locking_quantities(full: &SpectrumReport, bbar: &SpectrumReport) -> CheckOutcome {
    let mut worst = 1.0_f64;
    let mut compared = 0;
    for e in full.branch(Branch::Circumferential).filter(|e| e.n_over_n <= 0.8) {
        if let Some(b) = bbar.entry(Branch::Circumferential, e.n) {
            for (x, y) in [(e.ev_err, b.ev_err), (e.mode_err, b.mode_err)] {
                let r = ratio(x, y);
                worst = worst.max(r).max(1.0 / r);
            }
            compared += 1;
        }
    }
    CheckOutcome::new(
        5,
        "non-locking quantities",
        compared > 0 && worst <= 2.0,
        format!("{compared} modes compared, worst factor {worst:.3}"),
    )
}

/// DSG circumferential errors two decades above B-bar for the lowest five
/// modes, on every supplied mesh.
pub fn dsg_anomaly(pairs: &[(&SpectrumReport, &SpectrumReport)]) -> CheckOutcome {
    let mut pass = !pairs.is_empty();
    let mut parts = Vec::new();
    for (dsg, bbar) in pairs {
        let mut min = f64::INFINITY;
        let mut count = 0;
        for e in dsg.branch(Branch::Circumferential).take(5) {
            if let Some(b) = bbar.entry(Branch::Circumferential, e.n) {
                min = min.min(ratio(e.ev_err, b.ev_err)).min(ratio(e.mode_err, b.mode_err));
                count += 1;
            }
        }
        pass &= count == 5 && min >= 100.0;
        parts.push(format!("n={}: min DSG/B-bar ratio {min:.2}", dsg.n_elem));
    }
    CheckOutcome::new(6, "DSG anomaly", pass, parts.join("; "))
}

/// Reduced and full transverse eigenvalue errors within a factor of two.
pub fn reduced_integration_degradation(full: &SpectrumReport, reduced: &SpectrumReport) -> CheckOutcome {
    let mut worst = 1.0_f64;
    let mut compared = 0;
    for e in full.branch(Branch::Transverse) {
        if let Some(r) = reduced.entry(Branch::Transverse, e.n) {
            let q = ratio(r.ev_err, e.ev_err);
            worst = worst.max(q).max(1.0 / q);
            compared += 1;
        }
    }
    CheckOutcome::new(
        7,
        "reduced integration degradation",
        compared > 0 && worst <= 2.0,
        format!("p={} n={}: {compared} modes, worst factor {worst:.3}", full.degree, full.n_elem),
    )
}

/// Eigenvalue and mode convergence slopes of the fifth transverse mode.
pub fn convergence_rates(studies: &[ConvergenceStudy]) -> CheckOutcome {
    let get = |k: FormulationKind, p: usize| studies.iter().find(|s| s.formulation == k && s.degree == p);
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [FormulationKind::BBar, FormulationKind::Dsg] {
        for p in 2..=4 {
            let target = 2.0 * (p as f64 - 1.0);
            match get(kind, p) {
                Some(s) => {
                    let ok = (s.ev_slope - target).abs() <= 0.4;
                    pass &= ok;
                    parts.push(format!("{kind} p={p} ev {:.2} (target {target})", s.ev_slope));
                }
                None => pass = false,
            }
        }
    }
    for p in 2..=3 {
        match get(FormulationKind::BBar, p) {
            Some(s) => {
                let target = p as f64 + 1.0;
                pass &= (s.mode_slope - target).abs() <= 0.4;
                parts.push(format!("b-bar p={p} mode {:.2} (target {target})", s.mode_slope));
            }
            None => pass = false,
        }
    }
    match (get(FormulationKind::HellingerReissner, 2), get(FormulationKind::BBar, 2), get(FormulationKind::Dsg, 2)) {
        (Some(hr), Some(b), Some(d)) => {
            let gain = hr.ev_slope - b.ev_slope.max(d.ev_slope);
            pass &= gain >= 1.0;
            parts.push(format!("HR p=2 ev {:.2}, gain {gain:.2}", hr.ev_slope));
        }
        _ => pass = false,
    }
    CheckOutcome::new(8, "convergence rates", pass, parts.join("; "))
}

/// Pythagorean residuals of the lowest ten nonrigid matched modes of each
/// branch, in the formulation's own energy norm.
pub fn pythagorean_identity(spectrum: &RingSpectrum) -> Result<CheckOutcome> {
    let norm = EnergyNorm::for_kind(spectrum.spec.kind);
    let residuals = pythagorean_residuals(spectrum, norm)?;
    let mut worst = [0.0_f64; 2];
    let mut counts = [0usize; 2];
    for (e, r) in spectrum.report.entries.iter().zip(&residuals) {
        let k = e.branch.index() - 1;
        if counts[k] < 10 {
            counts[k] += 1;
            worst[k] = worst[k].max(r.abs());
        }
    }
    Ok(CheckOutcome::new(
        9,
        "Pythagorean identity",
        counts == [10, 10] && worst[0] < 1e-6 && worst[1] < 1e-6,
        format!(
            "{} p={} n={} ({norm:?} norm): max |residual| transverse {:.2e}, circumferential {:.2e}",
            spectrum.spec.kind, spectrum.spec.degree, spectrum.spec.n_elem, worst[0], worst[1]
        ),
    ))
}

/// Reference independence, the standard-full plateau and the locking-free
/// rates on the cantilever.
pub fn cantilever_plateau(independence: f64, studies: &[CantileverStudy]) -> CheckOutcome {
    let get = |k: FormulationKind, p: usize| {
        studies
            .iter()
            .find(|s| s.rows.first().is_some_and(|r| r.formulation == k && r.degree == p))
    };
    let mut pass = independence < 1e-9;
    let mut parts = vec![format!("reference independence {independence:.2e}")];
    match get(FormulationKind::StandardFull, 2) {
        Some(s) => {
            pass &= s.plateau.is_some();
            parts.push(format!("standard-full p=2 plateau {:?}", s.plateau));
        }
        None => pass = false,
    }
    for (kind, p, target) in [
        (FormulationKind::BBar, 3, 4.0),
        (FormulationKind::Dsg, 3, 4.0),
        (FormulationKind::HellingerReissner, 2, 3.0),
        (FormulationKind::BBar, 2, 2.0),
    ] {
        match get(kind, p) {
            Some(s) => {
                let ok = (s.slope - target).abs() <= 0.4 && (p == 2 || s.plateau.is_none());
                pass &= ok;
                parts.push(format!("{kind} p={p} slope {:.2}", s.slope));
            }
            None => pass = false,
        }
    }
    CheckOutcome::new(10, "cantilever plateau", pass, parts.join("; "))
}

/// Maximum transverse eigenvalue error over increasing degree on a fixed
/// mesh: nondecreasing for standard-full, nonincreasing for B-bar.
pub fn p_refinement_divergence(full: &[SpectrumReport], bbar: &[SpectrumReport]) -> CheckOutcome {
    let maxima = |reports: &[SpectrumReport]| -> Vec<f64> {
        let mut sorted: Vec<&SpectrumReport> = reports.iter().collect();
        sorted.sort_by_key(|r| r.degree);
        sorted
            .iter()
            .map(|r| r.branch(Branch::Transverse).map(|e| e.ev_err.abs()).fold(0.0_f64, f64::max))
            .collect()
    };
    let (f, b) = (maxima(full), maxima(bbar));
    let pass = f.len() >= 2
        && b.len() >= 2
        && f.windows(2).all(|w| w[1] >= w[0])
        && b.windows(2).all(|w| w[1] <= w[0]);
    CheckOutcome::new(
        11,
        "p-refinement divergence",
        pass,
        format!("standard-full [{}], b-bar [{}]", sci(&f), sci(&b)),
    )
}
