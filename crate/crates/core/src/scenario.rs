//! Prescribed land-cover scenarios.
//!
//! A scenario requests a relative change of each class area. The requested
//! percentages generally do not conserve the total pixel count, so targets
//! are rounded (half away from zero) and the leftover pixels are handed to
//! the changed class with the largest requested increase in pixels
//! (`count * delta`, ties broken by lowest class code). If that class cannot
//! absorb a negative residual without going below zero the next candidate in
//! the same order is tried.

use std::path::Path;

use crate::error::{Error, Result};
use crate::runoff::{
    runoff_from_histogram, ClassHistogram, CoefficientTable, LulcClass, LulcGrid, RunoffResult,
    NUM_CLASSES,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClassChange {
    NoChange,
    /// Signed fraction of the current count, strictly greater than -1.
    RelativeDelta(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    name: String,
    changes: [ClassChange; NUM_CLASSES],
}

impl Scenario {
    pub fn new(name: impl Into<String>, changes: [ClassChange; NUM_CLASSES]) -> Result<Self> {
        let name = name.into();
        for (class, change) in LulcClass::ALL.iter().zip(&changes) {
            if let ClassChange::RelativeDelta(p) = *change {
                if !(p.is_finite() && p > -1.0) {
                    return Err(Error::InvalidScenario(format!(
                        "{name}: change for {class} must be greater than -1, got {p}"
                    )));
                }
            }
        }
        Ok(Self { name, changes })
    }

    /// Build from `(class, delta)` pairs; unlisted classes are unchanged.
    pub fn from_deltas(name: impl Into<String>, deltas: &[(LulcClass, f64)]) -> Result<Self> {
        let mut changes = [ClassChange::NoChange; NUM_CLASSES];
        for &(class, p) in deltas {
            changes[class.index()] = ClassChange::RelativeDelta(p);
        }
        Self::new(name, changes)
    }

    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            changes: [ClassChange::NoChange; NUM_CLASSES],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn change(&self, class: LulcClass) -> ClassChange {
        self.changes[class.index()]
    }

    pub fn changes(&self) -> &[ClassChange; NUM_CLASSES] {
        &self.changes
    }

    /// Parse rows of `class_name,delta` where delta is a signed fraction or
    /// `nc`. A `class_name,delta` header line is skipped.
    pub fn parse(name: impl Into<String>, text: &str, path: &Path) -> Result<Self> {
        let mut changes = [ClassChange::NoChange; NUM_CLASSES];
        let mut seen = [false; NUM_CLASSES];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            let lineno = i + 1;
            if line.is_empty() || (lineno == 1 && line.starts_with("class_name")) {
                continue;
            }
            let err = |detail: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                detail,
            };
            let (cls, delta) = line
                .split_once(',')
                .ok_or_else(|| err("expected `class_name,delta`".into()))?;
            let class: LulcClass = cls
                .parse()
                .map_err(|_| err(format!("unknown class `{}`", cls.trim())))?;
            if std::mem::replace(&mut seen[class.index()], true) {
                return Err(err(format!("duplicate entry for {class}")));
            }
            let delta = delta.trim();
            changes[class.index()] = if delta.eq_ignore_ascii_case("nc") {
                ClassChange::NoChange
            } else {
                ClassChange::RelativeDelta(
                    delta
                        .parse()
                        .map_err(|_| err(format!("invalid delta `{delta}`")))?,
                )
            };
        }
        Self::new(name, changes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Self::parse(name, &text, path)
    }
}

/// The five management scenarios, named `s1`..`s5`.
pub fn builtin_scenarios() -> Vec<Scenario> {
    use LulcClass::*;
    let table: [&[(LulcClass, f64)]; 5] = [
        &[(Barren, -0.50), (Agriculture, -0.10), (Grassland, 0.50), (Wetland, 0.10)],
        &[(Agriculture, 0.10), (Grassland, -0.50), (Forest, -0.10)],
        &[(Barren, 0.50), (Agriculture, 0.15), (Grassland, -0.20)],
        &[
            (Barren, -0.50),
            (Agriculture, 0.20),
            (Grassland, -0.875),
            (Forest, -0.50),
            (Wetland, -0.50),
        ],
        &[
            (Barren, -0.50),
            (Agriculture, -0.20),
            (Grassland, 0.75),
            (Forest, 1.00),
            (Wetland, 1.00),
        ],
    ];
    table
        .iter()
        .enumerate()
        .map(|(i, deltas)| {
            Scenario::from_deltas(format!("s{}", i + 1), deltas).expect("built-in scenarios are valid")
        })
        .collect()
}

pub fn builtin_scenario(id: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name() == id)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReallocationReport {
    pub before: ClassHistogram,
    /// Rounded per-class targets before the residual is applied.
    pub targets: [i64; NUM_CLASSES],
    /// `total - sum(targets)`.
    pub residual: i64,
    pub residual_assigned_to: Option<LulcClass>,
    pub after: ClassHistogram,
}

/// Changed classes in the order they are offered a rounding residual:
/// largest `count * delta` first, ties to the lowest class code.
pub fn residual_priority(hist: &ClassHistogram, scenario: &Scenario) -> Vec<LulcClass> {
    let mut candidates: Vec<(LulcClass, f64)> = LulcClass::ALL
        .iter()
        .filter_map(|&c| match scenario.change(c) {
            ClassChange::RelativeDelta(p) => Some((c, hist[c] as f64 * p)),
            ClassChange::NoChange => None,
        })
        .collect();
    // stable sort keeps lowest class code first among equal increases
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    candidates.into_iter().map(|(c, _)| c).collect()
}

pub fn apply_scenario(hist: &ClassHistogram, scenario: &Scenario) -> Result<ReallocationReport> {
    let total = hist.total();
    if total == 0 {
        return Err(Error::EmptyGrid);
    }

    let mut targets = [0i64; NUM_CLASSES];
    for class in LulcClass::ALL {
        let count = hist[class] as i64;
        targets[class.index()] = match scenario.change(class) {
            ClassChange::NoChange => count,
            ClassChange::RelativeDelta(p) => (count as f64 * (1.0 + p)).round() as i64,
        };
        if targets[class.index()] < 0 {
            return Err(Error::InfeasibleScenario {
                class: Some(class),
                reason: format!("target count {} is negative", targets[class.index()]),
            });
        }
    }

    let residual = total as i64 - targets.iter().sum::<i64>();
    let mut after = targets;
    let mut assigned = None;
    if residual != 0 {
        let candidates = residual_priority(hist, scenario);
        let chosen = candidates
            .iter()
            .copied()
            .find(|c| after[c.index()] + residual >= 0)
            .ok_or_else(|| Error::InfeasibleScenario {
                class: candidates.first().copied(),
                reason: format!("residual of {residual} pixels cannot be absorbed by any changed class"),
            })?;
        after[chosen.index()] += residual;
        assigned = Some(chosen);
    }

    Ok(ReallocationReport {
        before: *hist,
        targets,
        residual,
        residual_assigned_to: assigned,
        after: ClassHistogram::from_counts(after.map(|n| n as u64)),
    })
}

pub fn scenario_runoff(
    grid: &LulcGrid,
    scenario: &Scenario,
    table: &CoefficientTable,
) -> Result<RunoffResult> {
    let report = apply_scenario(&grid.histogram(), scenario)?;
    runoff_from_histogram(&report.after, table, grid.cell_area_m2())
}
