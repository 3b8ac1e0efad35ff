//! Study runners. Cases fan out on the worker pool; results come back in
//! case order, which is sorted by the row keys before any work starts.

use crate::config::{StudyConfig, StudyKind};
use crate::error::{CliError, CliResult};
use crate::output::{float, opt_float, Table};
use rayon::prelude::*;
use ringvib::analytical::{soedel_eigenvalues, Branch};
use ringvib::assembly::{FormulationKind, FormulationSpec};
use ringvib::cantilever::{
    alternate_reference_case, cantilever_convergence, reference_case, relative_l2_error, solve_cantilever,
    CantileverStudy,
};
use ringvib::checks::{self, CheckOutcome};
use ringvib::spectral::{
    analyze_ring, eigen_convergence_study, locking_metric, pythagorean_residuals, ConvergenceStudy, EnergyNorm,
    LockingVerdict, Quantity, SpectralOptions, SpectrumReport,
};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub case: String,
    #[serde(flatten)]
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictRow {
    pub n_elem: usize,
    pub degree: usize,
    pub overkill: usize,
    #[serde(flatten)]
    pub verdict: LockingVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdicts {
    pub study: StudyKind,
    pub locking_verdicts: Vec<VerdictRow>,
    pub acceptance_checks: Vec<CheckRecord>,
    /// `None` when no acceptance check applies to the configured cases.
    pub all_checks_pass: Option<bool>,
    pub details: serde_json::Value,
}

#[derive(Debug)]
pub struct StudyOutput {
    pub report: Table,
    /// Additional `(file name, table)` pairs.
    pub extra: Vec<(String, Table)>,
    pub verdicts: Verdicts,
}

fn find<'a>(reports: &[&'a SpectrumReport], k: FormulationKind) -> Option<&'a SpectrumReport> {
    reports.iter().copied().find(|r| r.formulation == k)
}

fn order(k: FormulationKind) -> usize {
    FormulationKind::ALL.iter().position(|&x| x == k).unwrap_or(usize::MAX)
}

fn case_id(k: FormulationKind, p: usize, ne: usize) -> String {
    format!("{k} p={p} n_elem={ne}")
}

fn verdicts(study: StudyKind, locking: Vec<VerdictRow>, checks: Vec<CheckRecord>, details: serde_json::Value) -> Verdicts {
    let all = if checks.is_empty() { None } else { Some(checks.iter().all(|c| c.outcome.pass)) };
    Verdicts { study, locking_verdicts: locking, acceptance_checks: checks, all_checks_pass: all, details }
}

pub fn run(cfg: &StudyConfig, pool: &rayon::ThreadPool) -> CliResult<StudyOutput> {
    match cfg.kind {
        StudyKind::Spectrum => ring_study(cfg, pool, true),
        StudyKind::LockingIndicator => ring_study(cfg, pool, false),
        StudyKind::EigenConvergence => convergence_study(cfg, pool),
        StudyKind::Cantilever => cantilever_study(cfg, pool),
    }
}

const SPECTRUM_HEADERS: [&str; 11] = [
    "formulation",
    "p",
    "n_elem",
    "branch",
    "n",
    "n_over_N",
    "lambda_h",
    "lambda_exact",
    "ev_err",
    "mode_err_L2",
    "pyth_residual",
];

fn spectrum_table(reports: &[&SpectrumReport]) -> Table {
    let mut t = Table::new(&SPECTRUM_HEADERS);
    for r in reports {
        for e in &r.entries {
            t.push(vec![
                r.formulation.id().into(),
                r.degree.to_string(),
                r.n_elem.to_string(),
                e.branch.id().into(),
                e.n.to_string(),
                float(e.n_over_n),
                float(e.lambda_h),
                float(e.lambda_exact),
                float(e.ev_err),
                float(e.mode_err),
                opt_float(e.pyth_residual),
            ]);
        }
    }
    t
}

struct RingCase {
    kind: FormulationKind,
    degree: usize,
    n_elem: usize,
    overkill: bool,
}

struct RingResult {
    report: SpectrumReport,
    pythagorean: Option<CheckOutcome>,
}

fn ring_study(cfg: &StudyConfig, pool: &rayon::ThreadPool, with_pythagorean: bool) -> CliResult<StudyOutput> {
    let mut cases = Vec::new();
    for &k in &cfg.formulations {
        for &p in &cfg.degrees {
            for &ne in &cfg.meshes {
                cases.push(RingCase { kind: k, degree: p, n_elem: ne, overkill: false });
            }
            if let Some(ov) = cfg.overkill {
                cases.push(RingCase { kind: k, degree: p, n_elem: ov, overkill: true });
            }
        }
    }
    cases.sort_by_key(|c| (order(c.kind), c.degree, c.n_elem));
    cases.dedup_by_key(|c| (c.kind, c.degree, c.n_elem));

    let opts = SpectralOptions::default();
    let results: Vec<RingResult> = pool.install(|| {
        cases
            .par_iter()
            .map(|c| {
                let id = case_id(c.kind, c.degree, c.n_elem);
                let mut s = analyze_ring(&FormulationSpec::new(c.kind, c.degree, c.n_elem), &cfg.ring, &opts)
                    .map_err(|e| CliError::numeric(&id, e))?;
                let mut pythagorean = None;
                if with_pythagorean && !c.overkill {
                    let res = pythagorean_residuals(&s, EnergyNorm::for_kind(c.kind)).map_err(|e| CliError::numeric(&id, e))?;
                    for (e, v) in s.report.entries.iter_mut().zip(res) {
                        e.pyth_residual = Some(v);
                    }
                    if c.kind == FormulationKind::BBar {
                        pythagorean = Some(checks::pythagorean_identity(&s).map_err(|e| CliError::numeric(&id, e))?);
                    }
                }
                Ok(RingResult { report: s.report, pythagorean })
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let mut coarse: BTreeMap<(usize, usize), Vec<&SpectrumReport>> = BTreeMap::new();
    let mut overkill: BTreeMap<(FormulationKind, usize), &SpectrumReport> = BTreeMap::new();
    for (c, r) in cases.iter().zip(&results) {
        if c.overkill {
            overkill.insert((c.kind, c.degree), &r.report);
        } else {
            coarse.entry((c.degree, c.n_elem)).or_default().push(&r.report);
        }
    }

    let mut locking = Vec::new();
    let mut metric_table = Table::new(&[
        "formulation",
        "p",
        "n_elem",
        "overkill",
        "branch",
        "quantity",
        "metric",
        "n_points",
        "verdict",
    ]);
    for reports in coarse.values() {
        for r in reports {
            let Some(o) = overkill.get(&(r.formulation, r.degree)) else { continue };
            for b in Branch::BOTH {
                for q in Quantity::BOTH {
                    let v = locking_metric(r, o, b, q, &cfg.thresholds)
                        .map_err(|e| CliError::numeric(format!("{} vs overkill {}", case_id(r.formulation, r.degree, r.n_elem), o.n_elem), e))?;
                    metric_table.push(vec![
                        r.formulation.id().into(),
                        r.degree.to_string(),
                        r.n_elem.to_string(),
                        o.n_elem.to_string(),
                        b.id().into(),
                        q.id().into(),
                        float(v.metric),
                        v.n_points.to_string(),
                        serde_json::to_value(v.verdict)?.as_str().unwrap_or_default().to_string(),
                    ]);
                    locking.push(VerdictRow { n_elem: r.n_elem, degree: r.degree, overkill: o.n_elem, verdict: v });
                }
            }
        }
    }

    let mut found = Vec::new();
    if let Some(ov) = cfg.overkill {
        for &p in &cfg.degrees {
            if let Some(r) = overkill.get(&(FormulationKind::StandardFull, p)) {
                found.push(CheckRecord { case: format!("p={p} n_elem={ov}"), outcome: checks::overkill_correctness(r) });
            }
        }
    }
    for (&(p, ne), reports) in &coarse {
        let case = format!("p={p} n_elem={ne}");
        let all_present = FormulationKind::ALL.iter().all(|&k| find(reports, k).is_some());
        if let (true, Some(ov)) = (all_present, cfg.overkill) {
            let owned: Vec<SpectrumReport> = reports.iter().map(|r| (*r).clone()).collect();
            let over: Vec<SpectrumReport> = FormulationKind::ALL.iter().map(|k| overkill[&(*k, p)].clone()).collect();
            let outcome = checks::locking_reproduction(&owned, &over, &cfg.thresholds)
                .map_err(|e| CliError::numeric(format!("{case} overkill={ov}"), e))?;
            found.push(CheckRecord { case: format!("{case} overkill={ov}"), outcome });
        }
        if !with_pythagorean {
            continue;
        }
        let full = find(reports, FormulationKind::StandardFull);
        let bbar = find(reports, FormulationKind::BBar);
        if let (Some(f), Some(b)) = (full, bbar) {
            found.push(CheckRecord { case: case.clone(), outcome: checks::non_locking_quantities(f, b) });
        }
        // Reduced integration is expected to help at p = 2; the check concerns higher degrees.
        if let (true, Some(f), Some(r)) = (p >= 3, full, find(reports, FormulationKind::StandardReduced)) {
            found.push(CheckRecord { case: case.clone(), outcome: checks::reduced_integration_degradation(f, r) });
        }
    }
    if with_pythagorean {
        for &p in &cfg.degrees {
            let pairs: Vec<(&SpectrumReport, &SpectrumReport)> = cfg
                .meshes
                .iter()
                .filter_map(|&ne| {
                    let reports = coarse.get(&(p, ne))?;
                    Some((find(reports, FormulationKind::Dsg)?, find(reports, FormulationKind::BBar)?))
                })
                .collect();
            if !pairs.is_empty() {
                let meshes: Vec<usize> = pairs.iter().map(|(d, _)| d.n_elem).collect();
                found.push(CheckRecord { case: format!("p={p} n_elem in {meshes:?}"), outcome: checks::dsg_anomaly(&pairs) });
            }
        }
        for (c, r) in cases.iter().zip(&results) {
            if let Some(outcome) = &r.pythagorean {
                found.push(CheckRecord { case: format!("p={} n_elem={}", c.degree, c.n_elem), outcome: outcome.clone() });
            }
        }
        for &ne in &cfg.meshes {
            let by_degree = |k| -> Vec<SpectrumReport> {
                cfg.degrees.iter().filter_map(|&p| find(coarse.get(&(p, ne))?, k).cloned()).collect()
            };
            let (f, b) = (by_degree(FormulationKind::StandardFull), by_degree(FormulationKind::BBar));
            if f.len() >= 2 && b.len() >= 2 {
                found.push(CheckRecord {
                    case: format!("n_elem={ne} p in {:?}", cfg.degrees),
                    outcome: checks::p_refinement_divergence(&f, &b),
                });
            }
        }
    }
    found.sort_by(|a, b| (a.outcome.criterion, &a.case).cmp(&(b.outcome.criterion, &b.case)));

    let summaries: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "formulation": r.report.formulation,
                "p": r.report.degree,
                "n_elem": r.report.n_elem,
                "n_modes": r.report.n_modes,
                "n_retained": r.report.n_retained,
                "n_matched": r.report.n_matched,
                "n_ambiguous": r.report.n_ambiguous,
                "n_duplicates": r.report.n_duplicates,
                "ordered": r.report.ordered,
            })
        })
        .collect();
    let details = serde_json::json!({ "spectra": summaries });

    if !with_pythagorean {
        return Ok(StudyOutput {
            report: metric_table,
            extra: Vec::new(),
            verdicts: verdicts(cfg.kind, locking, found, details),
        });
    }
    let coarse_reports: Vec<&SpectrumReport> = coarse.values().flatten().copied().collect();
    let mut sorted = coarse_reports.clone();
    sorted.sort_by_key(|r| (order(r.formulation), r.degree, r.n_elem));
    let mut extra: Vec<(String, Table)> = results
        .iter()
        .map(|r| {
            (
                format!("spectrum_{}_p{}_n{}.csv", r.report.formulation.id(), r.report.degree, r.report.n_elem),
                spectrum_table(&[&r.report]),
            )
        })
        .collect();
    if !metric_table.rows.is_empty() {
        extra.push(("locking_metrics.csv".into(), metric_table));
    }
    Ok(StudyOutput { report: spectrum_table(&sorted), extra, verdicts: verdicts(cfg.kind, locking, found, details) })
}

fn convergence_study(cfg: &StudyConfig, pool: &rayon::ThreadPool) -> CliResult<StudyOutput> {
    let mut cases: Vec<(FormulationKind, usize)> =
        cfg.formulations.iter().flat_map(|&k| cfg.degrees.iter().map(move |&p| (k, p))).collect();
    cases.sort_by_key(|&(k, p)| (order(k), p));
    let mut meshes = cfg.meshes.clone();
    meshes.sort_unstable();
    meshes.dedup();
    let opts = SpectralOptions::default();
    let studies: Vec<ConvergenceStudy> = pool.install(|| {
        cases
            .par_iter()
            .map(|&(k, p)| {
                eigen_convergence_study(k, p, &meshes, cfg.target, &cfg.ring, &opts)
                    .map_err(|e| CliError::numeric(format!("{k} p={p} meshes {meshes:?}"), e))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let (n, branch) = cfg.target;
    let (l1, l2) = soedel_eigenvalues(n, &cfg.ring);
    let exact = if branch == Branch::Transverse { l1 } else { l2 };
    let mut report = Table::new(&[
        "formulation",
        "p",
        "n_elem",
        "branch",
        "n",
        "lambda_h",
        "lambda_exact",
        "ev_err",
        "mode_err_L2",
    ]);
    let mut slopes = Table::new(&["formulation", "p", "branch", "n", "ev_slope", "mode_slope"]);
    for s in &studies {
        for pt in &s.points {
            report.push(vec![
                s.formulation.id().into(),
                s.degree.to_string(),
                pt.n_elem.to_string(),
                branch.id().into(),
                n.to_string(),
                float(pt.lambda_h),
                float(exact),
                float(pt.ev_err),
                float(pt.mode_err),
            ]);
        }
        slopes.push(vec![
            s.formulation.id().into(),
            s.degree.to_string(),
            branch.id().into(),
            n.to_string(),
            float(s.ev_slope),
            float(s.mode_slope),
        ]);
    }

    let mut found = Vec::new();
    let has = |k, p| studies.iter().any(|s| s.formulation == k && s.degree == p);
    let complete = (2..=4).all(|p| has(FormulationKind::BBar, p) && has(FormulationKind::Dsg, p))
        && has(FormulationKind::HellingerReissner, 2);
    if complete {
        found.push(CheckRecord {
            case: format!("{branch} n={n} meshes {meshes:?}"),
            outcome: checks::convergence_rates(&studies),
        });
    }
    let details = serde_json::json!({
        "slopes": studies.iter().map(|s| serde_json::json!({
            "formulation": s.formulation, "p": s.degree, "ev_slope": s.ev_slope, "mode_slope": s.mode_slope,
        })).collect::<Vec<_>>(),
    });
    Ok(StudyOutput {
        report,
        extra: vec![("slopes.csv".into(), slopes)],
        verdicts: verdicts(cfg.kind, Vec::new(), found, details),
    })
}

fn cantilever_study(cfg: &StudyConfig, pool: &rayon::ThreadPool) -> CliResult<StudyOutput> {
    let s = cfg.cantilever_slenderness;
    let reference_id = format!("cantilever reference R/t={s}");
    let (reference, alternate) = pool.install(|| {
        rayon::join(
            || solve_cantilever(&reference_case(s)),
            || cfg.reference_check.then(|| solve_cantilever(&alternate_reference_case(s))),
        )
    });
    let reference = reference.map_err(|e| CliError::numeric(&reference_id, e))?;
    let independence = match alternate {
        Some(a) => {
            let a = a.map_err(|e| CliError::numeric(format!("{reference_id} (alternate)"), e))?;
            Some(relative_l2_error(&a, &reference).map_err(|e| CliError::numeric(&reference_id, e))?)
        }
        None => None,
    };

    let mut cases: Vec<(FormulationKind, usize)> =
        cfg.formulations.iter().flat_map(|&k| cfg.degrees.iter().map(move |&p| (k, p))).collect();
    cases.sort_by_key(|&(k, p)| (order(k), p));
    let mut meshes = cfg.meshes.clone();
    meshes.sort_unstable();
    meshes.dedup();
    let studies: Vec<CantileverStudy> = pool.install(|| {
        cases
            .par_iter()
            .map(|&(k, p)| {
                cantilever_convergence(k, p, &meshes, s, &reference, &cfg.plateau)
                    .map_err(|e| CliError::numeric(format!("cantilever {k} p={p} R/t={s}"), e))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let mut report = Table::new(&[
        "formulation",
        "p",
        "n_elem",
        "R_over_t",
        "rel_L2_err",
        "slope_estimate",
        "plateau_flag",
    ]);
    for st in &studies {
        for r in &st.rows {
            report.push(vec![
                r.formulation.id().into(),
                r.degree.to_string(),
                r.n_elem.to_string(),
                float(r.slenderness),
                float(r.rel_l2_err),
                float(st.slope),
                st.plateau.is_some().to_string(),
            ]);
        }
    }

    let mut found = Vec::new();
    let has = |k, p| cases.contains(&(k, p));
    let complete = has(FormulationKind::StandardFull, 2)
        && has(FormulationKind::BBar, 3)
        && has(FormulationKind::Dsg, 3)
        && has(FormulationKind::HellingerReissner, 2)
        && has(FormulationKind::BBar, 2);
    if let (true, Some(ind)) = (complete, independence) {
        found.push(CheckRecord {
            case: format!("R/t={s} meshes {meshes:?}"),
            outcome: checks::cantilever_plateau(ind, &studies),
        });
    }
    let details = serde_json::json!({
        "reference": { "formulation": reference.case.formulation, "independence": independence },
        "studies": studies.iter().filter_map(|st| {
            let r = st.rows.first()?;
            Some(serde_json::json!({
                "formulation": r.formulation, "p": r.degree, "slope": st.slope,
                "plateau": st.plateau.map(|(a, l)| serde_json::json!({ "start_n_elem": meshes[a], "steps": l })),
            }))
        }).collect::<Vec<_>>(),
    });
    Ok(StudyOutput { report, extra: Vec::new(), verdicts: verdicts(cfg.kind, Vec::new(), found, details) })
}
