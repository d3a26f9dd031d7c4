//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/default"
//!
//! [grid]
//! # path = "grid.csv"          # omit to use the bundled seed grid
//! # frozen_mask = "mask.csv"
//!
//! [runoff]
//! rainfall_intensity_mm_hr = 10.0
//! # coefficients_path = "coefficients.csv"
//! # [runoff.coefficients]
//! # wetland = 0.05
//!
//! [env]
//! ...
//! [ppo]
//! ...
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.
//! Coefficients are layered: built-in defaults, then the CSV file, then the
//! inline table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::ppo::PpoConfig;
use crate::raster::{parse_coefficients, read_grid_with_mask};
use crate::runoff::{CoefficientTable, LulcClass, LulcGrid, NUM_CLASSES};
use crate::seed_grid::make_seed_grid;

pub const DEFAULT_SEED: u64 = 7;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub path: Option<PathBuf>,
    pub frozen_mask: Option<PathBuf>,
}

/// Per-class coefficient overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InlineCoefficients {
    pub water: Option<f64>,
    pub urban: Option<f64>,
    pub barren: Option<f64>,
    pub forest: Option<f64>,
    pub grassland: Option<f64>,
    pub agriculture: Option<f64>,
    pub wetland: Option<f64>,
}

impl InlineCoefficients {
    fn as_array(&self) -> [Option<f64>; NUM_CLASSES] {
        [
            self.water,
            self.urban,
            self.barren,
            self.forest,
            self.grassland,
            self.agriculture,
            self.wetland,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunoffSection {
    pub rainfall_intensity_mm_hr: f64,
    pub coefficients_path: Option<PathBuf>,
    pub coefficients: InlineCoefficients,
}

impl Default for RunoffSection {
    fn default() -> Self {
        Self {
            rainfall_intensity_mm_hr: CoefficientTable::DEFAULT_INTENSITY_MM_PER_HR,
            coefficients_path: None,
            coefficients: InlineCoefficients::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub grid: GridSection,
    pub runoff: RunoffSection,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            grid: GridSection::default(),
            runoff: RunoffSection::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

/// Everything a command needs, loaded from disk and validated.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub grid: LulcGrid,
    pub table: CoefficientTable,
    /// Input files that were read, for the run manifest.
    pub inputs: Vec<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a config file and make its relative paths absolute with respect
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.grid.path.as_mut(),
            self.grid.frozen_mask.as_mut(),
            self.runoff.coefficients_path.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.out_dir);
    }

    /// Copy of this config with every coefficient written inline, so the
    /// printed form documents the table actually used.
    pub fn with_explicit_coefficients(&self) -> Result<Self> {
        let table = self.coefficient_table()?;
        let c = |class: LulcClass| Some(table.coefficient(class));
        let mut out = self.clone();
        out.runoff.coefficients = InlineCoefficients {
            water: c(LulcClass::Water),
            urban: c(LulcClass::Urban),
            barren: c(LulcClass::Barren),
            forest: c(LulcClass::Forest),
            grassland: c(LulcClass::Grassland),
            agriculture: c(LulcClass::Agriculture),
            wetland: c(LulcClass::Wetland),
        };
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes to TOML")
    }

    /// Check every section and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        if self.grid.frozen_mask.is_some() && self.grid.path.is_none() {
            return Err(Error::Config(
                "grid.frozen_mask requires grid.path; the bundled grid has its own mask".into(),
            ));
        }
        for p in [
            self.grid.path.as_ref(),
            self.grid.frozen_mask.as_ref(),
            self.runoff.coefficients_path.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if !p.is_file() {
                return Err(Error::Config(format!("file not found: {}", p.display())));
            }
        }
        Ok(())
    }

    pub fn coefficient_table(&self) -> Result<CoefficientTable> {
        let intensity = self.runoff.rainfall_intensity_mm_hr;
        let base = match &self.runoff.coefficients_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_coefficients(&text, p, intensity)?
            }
            None => CoefficientTable::new(CoefficientTable::DEFAULT_COEFFICIENTS, intensity)?,
        };
        let mut coefficients = *base.coefficients();
        for (class, value) in LulcClass::ALL.iter().zip(self.runoff.coefficients.as_array()) {
            if let Some(v) = value {
                coefficients[class.index()] = v;
            }
        }
        let table = CoefficientTable::new(coefficients, intensity)?;
        table.validate_wetland_minimum()?;
        Ok(table)
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        self.validate()?;
        let mut inputs = Vec::new();
        let grid = match &self.grid.path {
            Some(p) => {
                inputs.push(p.clone());
                inputs.extend(self.grid.frozen_mask.clone());
                read_grid_with_mask(p, self.grid.frozen_mask.as_deref())?
            }
            None => make_seed_grid(),
        };
        inputs.extend(self.runoff.coefficients_path.clone());
        let table = self.coefficient_table()?;
        Ok(ResolvedRun { grid, table, inputs })
    }
}
