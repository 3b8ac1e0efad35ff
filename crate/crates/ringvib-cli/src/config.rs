//! TOML study configuration merged with command-line overrides.

use crate::error::{CliError, CliResult};
use ringvib::analytical::Branch;
use ringvib::assembly::FormulationKind;
use ringvib::cantilever::{PlateauRule, DEFAULT_SLENDERNESS};
use ringvib::ring::RingParams;
use ringvib::spectral::LockingThresholds;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Spectrum,
    LockingIndicator,
    EigenConvergence,
    Cantilever,
}

impl StudyKind {
    pub fn id(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::LockingIndicator => "locking-indicator",
            Self::EigenConvergence => "eigen-convergence",
            Self::Cantilever => "cantilever",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub study: StudySection,
    pub ring: RingSection,
    pub cantilever: CantileverSection,
    pub convergence: ConvergenceSection,
    pub tolerances: ToleranceSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub kind: Option<StudyKind>,
    pub formulations: Option<Vec<String>>,
    pub degrees: Option<Vec<usize>>,
    pub meshes: Option<Vec<usize>>,
    pub overkill: Option<usize>,
    pub output: Option<PathBuf>,
}

/// Either a full rectangular section or a slenderness applied to the
/// canonical material and radius.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingSection {
    pub youngs_modulus: Option<f64>,
    pub density: Option<f64>,
    pub radius: Option<f64>,
    pub thickness: Option<f64>,
    pub width: Option<f64>,
    pub slenderness: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CantileverSection {
    pub slenderness: Option<f64>,
    pub reference_check: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub target_mode: Option<usize>,
    pub branch: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    pub locking: Option<f64>,
    pub locking_free: Option<f64>,
    pub stall_factor: Option<f64>,
    pub plateau_min_steps: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config("config", e.to_string()))
    }
}

/// Command-line values; `Some` wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub formulations: Option<Vec<String>>,
    pub degrees: Option<Vec<usize>>,
    pub meshes: Option<Vec<usize>>,
    pub overkill: Option<usize>,
    pub slenderness: Option<f64>,
    pub output: Option<PathBuf>,
    pub target_mode: Option<usize>,
    pub branch: Option<String>,
    pub locking: Option<f64>,
    pub locking_free: Option<f64>,
    pub skip_reference_check: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub formulations: Vec<FormulationKind>,
    pub degrees: Vec<usize>,
    pub meshes: Vec<usize>,
    pub overkill: Option<usize>,
    pub ring: RingParams,
    pub cantilever_slenderness: f64,
    pub reference_check: bool,
    pub target: (usize, Branch),
    pub thresholds: LockingThresholds,
    pub plateau: PlateauRule,
    pub output: PathBuf,
}

pub fn parse_formulations(items: &[String]) -> CliResult<Vec<FormulationKind>> {
    let mut out = Vec::new();
    for item in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        if item.eq_ignore_ascii_case("all") {
            out.extend(FormulationKind::ALL);
        } else {
            out.push(item.parse().map_err(|e: ringvib::Error| CliError::config("formulations", e.to_string()))?);
        }
    }
    if out.is_empty() {
        return Err(CliError::config("formulations", "list is empty"));
    }
    let mut seen = Vec::new();
    out.retain(|k| {
        let fresh = !seen.contains(k);
        seen.push(*k);
        fresh
    });
    Ok(out)
}

pub fn parse_branch(s: &str) -> CliResult<Branch> {
    match s.trim().to_ascii_lowercase().as_str() {
        "transverse" | "1" => Ok(Branch::Transverse),
        "circumferential" | "2" => Ok(Branch::Circumferential),
        _ => Err(CliError::config("branch", format!("unknown branch '{s}'"))),
    }
}

fn positive(field: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn ring_params(section: &RingSection, slenderness: Option<f64>) -> CliResult<RingParams> {
    if let Some(s) = slenderness.or(section.slenderness) {
        let field = if slenderness.is_some() { "slenderness" } else { "ring.slenderness" };
        return Ok(RingParams::with_slenderness(positive(field, s)?));
    }
    let c = RingParams::canonical();
    let get = |name: &str, v: Option<f64>, d: f64| positive(&format!("ring.{name}"), v.unwrap_or(d));
    let e = get("youngs_modulus", section.youngs_modulus, c.youngs_modulus)?;
    let rho = get("density", section.density, c.density)?;
    let r = get("radius", section.radius, c.radius)?;
    let t = get("thickness", section.thickness, c.thickness)?;
    let b = get("width", section.width, c.width)?;
    RingParams::rectangular(e, rho, r, t, b).map_err(|err| CliError::config("ring", err.to_string()))
}

impl StudyConfig {
    pub fn resolve(kind: StudyKind, file: &FileConfig, o: &Overrides) -> CliResult<Self> {
        if let Some(k) = file.study.kind {
            if k != kind {
                return Err(CliError::config("study.kind", format!("config is for '{k}', subcommand is '{kind}'")));
            }
        }
        let (default_degrees, default_meshes, default_overkill): (Vec<usize>, Vec<usize>, Option<usize>) = match kind {
            StudyKind::Spectrum => (vec![2], vec![64], None),
            StudyKind::LockingIndicator => (vec![2], vec![64], Some(512)),
            StudyKind::EigenConvergence => (vec![2, 3, 4, 5], vec![32, 64, 128], None),
            StudyKind::Cantilever => (vec![2, 3], vec![8, 16, 32, 64, 128], None),
        };
        let formulations = parse_formulations(
            o.formulations
                .as_ref()
                .or(file.study.formulations.as_ref())
                .unwrap_or(&vec!["all".to_string()]),
        )?;
        let degrees = o.degrees.clone().or_else(|| file.study.degrees.clone()).unwrap_or(default_degrees);
        let meshes = o.meshes.clone().or_else(|| file.study.meshes.clone()).unwrap_or(default_meshes);
        let overkill = o.overkill.or(file.study.overkill).or(default_overkill);

        if degrees.is_empty() {
            return Err(CliError::config("degrees", "list is empty"));
        }
        let min_degree = 2;
        if let Some(&p) = degrees.iter().find(|&&p| p < min_degree || p > 10) {
            return Err(CliError::config("degrees", format!("degree {p} outside {min_degree}..=10")));
        }
        if meshes.is_empty() {
            return Err(CliError::config("meshes", "list is empty"));
        }
        if meshes.contains(&0) {
            return Err(CliError::config("meshes", "element counts must be positive"));
        }
        if let Some(ov) = overkill {
            let max = *meshes.iter().max().unwrap_or(&0);
            if ov <= max {
                return Err(CliError::config("overkill", format!("{ov} must exceed the largest coarse mesh {max}")));
            }
        }
        if kind == StudyKind::LockingIndicator && overkill.is_none() {
            return Err(CliError::config("overkill", "required for a locking-indicator study"));
        }

        let ring = ring_params(&file.ring, if kind == StudyKind::Cantilever { None } else { o.slenderness })?;
        let cantilever_slenderness = positive(
            "cantilever.slenderness",
            (if kind == StudyKind::Cantilever { o.slenderness } else { None })
                .or(file.cantilever.slenderness)
                .unwrap_or(DEFAULT_SLENDERNESS),
        )?;
        let reference_check = !o.skip_reference_check && file.cantilever.reference_check.unwrap_or(true);

        let target_mode = o.target_mode.or(file.convergence.target_mode).unwrap_or(5);
        let branch = match o.branch.as_ref().or(file.convergence.branch.as_ref()) {
            Some(b) => parse_branch(b)?,
            None => Branch::Transverse,
        };

        let defaults = LockingThresholds::default();
        let thresholds = LockingThresholds {
            locking: positive("tolerances.locking", o.locking.or(file.tolerances.locking).unwrap_or(defaults.locking))?,
            locking_free: positive(
                "tolerances.locking_free",
                o.locking_free.or(file.tolerances.locking_free).unwrap_or(defaults.locking_free),
            )?,
        };
        if thresholds.locking_free > thresholds.locking {
            return Err(CliError::config("tolerances.locking_free", "must not exceed tolerances.locking"));
        }
        let mut plateau = PlateauRule::default();
        if let Some(f) = file.tolerances.stall_factor {
            plateau.stall_factor = positive("tolerances.stall_factor", f)?;
        }
        if let Some(m) = file.tolerances.plateau_min_steps {
            if m == 0 {
                return Err(CliError::config("tolerances.plateau_min_steps", "must be positive"));
            }
            plateau.min_steps = m;
        }

        let output = o
            .output
            .clone()
            .or_else(|| file.study.output.clone())
            .unwrap_or_else(|| PathBuf::from("ringvib-out").join(kind.id()));

        Ok(Self {
            kind,
            formulations,
            degrees,
            meshes,
            overkill,
            ring,
            cantilever_slenderness,
            reference_check,
            target: (target_mode, branch),
            thresholds,
            plateau,
            output,
        })
    }
}
