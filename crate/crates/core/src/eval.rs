//! Greedy policy sweeps, transition matrices and the runoff comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agent::Actor;
use crate::env::{EnvConfig, LulcEnv};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::runoff::{compute_runoff, CoefficientTable, LulcClass, LulcGrid, RunoffResult, NUM_CLASSES};
use crate::scenario::{scenario_runoff, Scenario};

/// Pixel counts by class before (rows) and after (columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl TransitionMatrix {
    pub const CSV_HEADER: &'static str = "from,water,urban,barren,forest,grassland,agriculture,wetland,total";

    pub fn from_grids(before: &LulcGrid, after: &LulcGrid) -> Result<Self> {
        if before.len() != after.len() {
            return Err(Error::ShapeMismatch {
                expected: before.len(),
                actual: after.len(),
            });
        }
        let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (b, a) in before.cells().iter().zip(after.cells()) {
            counts[b.index()][a.index()] += 1;
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[[u64; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn get(&self, from: LulcClass, to: LulcClass) -> u64 {
        self.counts[from.index()][to.index()]
    }

    pub fn row_total(&self, from: LulcClass) -> u64 {
        self.counts[from.index()].iter().sum()
    }

    pub fn column_total(&self, to: LulcClass) -> u64 {
        self.counts.iter().map(|row| row[to.index()]).sum()
    }

    pub fn grand_total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// True if no pixel of class `from` changed.
    pub fn is_row_diagonal(&self, from: LulcClass) -> bool {
        self.counts[from.index()]
            .iter()
            .enumerate()
            .all(|(j, &n)| j == from.index() || n == 0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for from in LulcClass::ALL {
            let _ = write!(out, "{from}");
            for n in self.counts[from.index()] {
                let _ = write!(out, ",{n}");
            }
            let _ = writeln!(out, ",{}", self.row_total(from));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct GreedyRun {
    pub initial_grid: LulcGrid,
    pub final_grid: LulcGrid,
    pub matrix: TransitionMatrix,
    pub runoff: RunoffResult,
    pub steps: usize,
}

/// Apply the policy's most likely (masked) action for `steps` cursor steps.
pub fn run_greedy(
    grid: &LulcGrid,
    table: &CoefficientTable,
    env_config: &EnvConfig,
    actor: &Actor,
    steps: usize,
) -> Result<GreedyRun> {
    let cfg = EnvConfig {
        steps_per_episode: Some(steps.max(1)),
        ..env_config.clone()
    };
    let mut env = LulcEnv::new(grid.clone(), cfg, table.clone())?;
    let initial = env.base_grid().clone();
    for _ in 0..steps {
        let obs = env.observation();
        let action = actor.greedy_action(&obs, &env.action_mask())?;
        env.step(action)?;
    }
    let final_grid = env.state().grid.clone();
    Ok(GreedyRun {
        matrix: TransitionMatrix::from_grids(&initial, &final_grid)?,
        runoff: compute_runoff(&final_grid, table)?,
        initial_grid: initial,
        final_grid,
        steps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonEntry {
    pub label: String,
    pub runoff_m3_per_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    /// `existing`, one entry per scenario in input order, then `optimized`.
    pub entries: Vec<ComparisonEntry>,
    pub optimized_is_strict_minimum: bool,
}

impl ComparisonReport {
    pub const CSV_HEADER: &'static str = "label,runoff_m3_per_s";

    pub fn value(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.label == label)
            .map(|e| e.runoff_m3_per_s)
    }

    pub fn existing(&self) -> f64 {
        self.value("existing").expect("report always has an existing entry")
    }

    pub fn optimized(&self) -> f64 {
        self.value("optimized").expect("report always has an optimized entry")
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for e in &self.entries {
            let _ = writeln!(out, "{},{}", e.label, e.runoff_m3_per_s);
        }
        out
    }

    /// Static bar chart, one `<rect class="bar">` per entry.
    pub fn to_svg(&self) -> String {
        let (bar_w, gap, height, left, top, bottom) = (60.0, 20.0, 300.0, 70.0, 40.0, 50.0);
        let n = self.entries.len() as f64;
        let width = left + n * (bar_w + gap) + gap;
        let max = self
            .entries
            .iter()
            .map(|e| e.runoff_m3_per_s)
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = width,
            h = top + height + bottom
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">Peak runoff (m³/s)</text>"#,
            width / 2.0
        );
        let _ = writeln!(
            svg,
            r#"  <line x1="{left}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
            y = top + height,
            x2 = width - gap / 2.0
        );
        for (i, e) in self.entries.iter().enumerate() {
            let h = height * e.runoff_m3_per_s / max;
            let x = left + gap + i as f64 * (bar_w + gap);
            let y = top + height - h;
            let fill = match e.label.as_str() {
                "existing" => "#7f7f7f",
                "optimized" => "#2ca02c",
                _ => "#1f77b4",
            };
            let _ = writeln!(
                svg,
                r#"  <rect class="bar" x="{x}" y="{y:.3}" width="{bar_w}" height="{h:.3}" fill="{fill}"><title>{label}: {v}</title></rect>"#,
                label = xml_escape(&e.label),
                v = e.runoff_m3_per_s
            );
            let _ = writeln!(
                svg,
                r#"  <text x="{cx}" y="{ly}" font-family="sans-serif" font-size="12" text-anchor="middle">{label}</text>"#,
                cx = x + bar_w / 2.0,
                ly = top + height + 18.0,
                label = xml_escape(&e.label)
            );
            let _ = writeln!(
                svg,
                r#"  <text x="{cx}" y="{vy:.3}" font-family="sans-serif" font-size="10" text-anchor="middle">{v:.4}</text>"#,
                cx = x + bar_w / 2.0,
                vy = y - 4.0,
                v = e.runoff_m3_per_s
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Existing runoff, each scenario's runoff and the runoff after one greedy
/// sweep over every pixel.
pub fn compare_all(
    grid: &LulcGrid,
    scenarios: &[Scenario],
    actor: &Actor,
    table: &CoefficientTable,
    env_config: &EnvConfig,
) -> Result<ComparisonReport> {
    let optimized = run_greedy(grid, table, env_config, actor, grid.len())?
        .runoff
        .total_m3_per_s;
    comparison_report(grid, scenarios, table, optimized)
}

/// Build the comparison around an already computed `optimized` runoff.
pub fn comparison_report(
    grid: &LulcGrid,
    scenarios: &[Scenario],
    table: &CoefficientTable,
    optimized: f64,
) -> Result<ComparisonReport> {
    let mut entries = vec![ComparisonEntry {
        label: "existing".into(),
        runoff_m3_per_s: compute_runoff(grid, table)?.total_m3_per_s,
    }];
    for s in scenarios {
        entries.push(ComparisonEntry {
            label: s.name().to_string(),
            runoff_m3_per_s: scenario_runoff(grid, s, table)?.total_m3_per_s,
        });
    }
    let optimized_is_strict_minimum = entries.iter().all(|e| optimized < e.runoff_m3_per_s);
    entries.push(ComparisonEntry {
        label: "optimized".into(),
        runoff_m3_per_s: optimized,
    });
    Ok(ComparisonReport {
        entries,
        optimized_is_strict_minimum,
    })
}

/// Write `comparison.csv`, `transition.csv` and `comparison.svg` into
/// `out_dir`, returning the written paths.
pub fn emit_reports(
    report: &ComparisonReport,
    matrix: &TransitionMatrix,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let files = [
        ("comparison.csv", report.to_csv()),
        ("transition.csv", matrix.to_csv()),
        ("comparison.svg", report.to_svg()),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = out_dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
