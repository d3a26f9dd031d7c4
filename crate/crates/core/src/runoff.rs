//! Land-cover grid and rational-method runoff.
//!
//! Peak runoff follows the rational method `Q = C * i * A` with the unit
//! convention `Q [m^3/s] = C * i [mm/hr] * A [m^2] / 3.6e6`. Because the
//! coefficient only depends on the class of a pixel, runoff is a function of
//! the class histogram alone.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts `mm/hr * m^2` into `m^3/s`.
pub const RATIONAL_UNIT_DIVISOR: f64 = 3.6e6;

pub const NUM_CLASSES: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum LulcClass {
    Water = 0,
    Urban = 1,
    Barren = 2,
    Forest = 3,
    Grassland = 4,
    Agriculture = 5,
    Wetland = 6,
}

impl LulcClass {
    pub const ALL: [LulcClass; NUM_CLASSES] = [
        LulcClass::Water,
        LulcClass::Urban,
        LulcClass::Barren,
        LulcClass::Forest,
        LulcClass::Grassland,
        LulcClass::Agriculture,
        LulcClass::Wetland,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LulcClass::Water => "water",
            LulcClass::Urban => "urban",
            LulcClass::Barren => "barren",
            LulcClass::Forest => "forest",
            LulcClass::Grassland => "grassland",
            LulcClass::Agriculture => "agriculture",
            LulcClass::Wetland => "wetland",
        }
    }
}

impl fmt::Display for LulcClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LulcClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown land-cover class `{s}`")))
    }
}

/// Per-class pixel counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ClassHistogram {
    counts: [u64; NUM_CLASSES],
}

impl ClassHistogram {
    pub fn from_counts(counts: [u64; NUM_CLASSES]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64; NUM_CLASSES] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of pixels in each class. All zeros for an empty histogram.
    pub fn fractions(&self) -> [f64; NUM_CLASSES] {
        let total = self.total();
        if total == 0 {
            return [0.0; NUM_CLASSES];
        }
        self.counts.map(|n| n as f64 / total as f64)
    }
}

impl Index<LulcClass> for ClassHistogram {
    type Output = u64;

    fn index(&self, class: LulcClass) -> &u64 {
        &self.counts[class.index()]
    }
}

impl IndexMut<LulcClass> for ClassHistogram {
    fn index_mut(&mut self, class: LulcClass) -> &mut u64 {
        &mut self.counts[class.index()]
    }
}

impl fmt::Display for ClassHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, class) in LulcClass::ALL.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", class, self.counts[i])?;
        }
        f.write_str("}")
    }
}

/// Raster of land-cover classes with a uniform cell area and a frozen mask.
///
/// The frozen mask is fixed once the grid is built; builder methods that touch
/// it consume the grid and return a new one.
#[derive(Clone, Debug, PartialEq)]
pub struct LulcGrid {
    width: usize,
    height: usize,
    cells: Vec<LulcClass>,
    cell_area_m2: f64,
    frozen: Vec<bool>,
}

impl LulcGrid {
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<LulcClass>,
        cell_area_m2: f64,
    ) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "{} cells for a {width}x{height} grid",
                cells.len()
            )));
        }
        if !(cell_area_m2.is_finite() && cell_area_m2 > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell area must be positive, got {cell_area_m2}"
            )));
        }
        let frozen = vec![false; cells.len()];
        Ok(Self {
            width,
            height,
            cells,
            cell_area_m2,
            frozen,
        })
    }

    /// Replace the frozen mask.
    pub fn with_frozen_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.cells.len() {
            return Err(Error::InvalidGrid(format!(
                "frozen mask has {} entries, grid has {}",
                mask.len(),
                self.cells.len()
            )));
        }
        self.frozen = mask;
        Ok(self)
    }

    /// Additionally freeze every pixel whose class is in `classes`.
    pub fn with_frozen_classes(mut self, classes: &[LulcClass]) -> Self {
        for (frozen, class) in self.frozen.iter_mut().zip(&self.cells) {
            if classes.contains(class) {
                *frozen = true;
            }
        }
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_area_m2(&self) -> f64 {
        self.cell_area_m2
    }

    pub fn total_area_m2(&self) -> f64 {
        self.cell_area_m2 * self.cells.len() as f64
    }

    pub fn cells(&self) -> &[LulcClass] {
        &self.cells
    }

    pub fn class_at(&self, index: usize) -> LulcClass {
        self.cells[index]
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen[index]
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.iter().filter(|&&f| f).count()
    }

    /// Rewrite a single pixel. Frozen pixels are not protected here; the
    /// environment enforces that.
    pub(crate) fn set_class(&mut self, index: usize, class: LulcClass) {
        self.cells[index] = class;
    }

    pub fn histogram(&self) -> ClassHistogram {
        class_histogram(self)
    }
}

pub fn class_histogram(grid: &LulcGrid) -> ClassHistogram {
    let mut hist = ClassHistogram::default();
    for &class in &grid.cells {
        hist[class] += 1;
    }
    hist
}

/// Runoff coefficients per class plus the design rainfall intensity.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTable {
    coefficients: [f64; NUM_CLASSES],
    intensity_mm_per_hr: f64,
}

impl CoefficientTable {
    /// Defaults used when no table is configured. Ordering matters more than
    /// the exact numbers: wetland is the strict minimum.
    pub const DEFAULT_COEFFICIENTS: [f64; NUM_CLASSES] = [0.95, 0.85, 0.60, 0.15, 0.30, 0.40, 0.05];
    pub const DEFAULT_INTENSITY_MM_PER_HR: f64 = 10.0;

    pub fn new(coefficients: [f64; NUM_CLASSES], intensity_mm_per_hr: f64) -> Result<Self> {
        for (class, &c) in LulcClass::ALL.iter().zip(&coefficients) {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidCoefficients(format!(
                    "coefficient for {class} must lie in [0, 1], got {c}"
                )));
            }
        }
        // zero intensity is allowed (dry conditions give zero runoff)
        if !(intensity_mm_per_hr.is_finite() && intensity_mm_per_hr >= 0.0) {
            return Err(Error::InvalidCoefficients(format!(
                "rainfall intensity must be non-negative, got {intensity_mm_per_hr}"
            )));
        }
        Ok(Self {
            coefficients,
            intensity_mm_per_hr,
        })
    }

    pub fn coefficients(&self) -> &[f64; NUM_CLASSES] {
        &self.coefficients
    }

    pub fn coefficient(&self, class: LulcClass) -> f64 {
        self.coefficients[class.index()]
    }

    pub fn intensity_mm_per_hr(&self) -> f64 {
        self.intensity_mm_per_hr
    }

    pub fn with_intensity(self, intensity_mm_per_hr: f64) -> Result<Self> {
        Self::new(self.coefficients, intensity_mm_per_hr)
    }

    pub fn min_coefficient(&self) -> f64 {
        self.coefficients.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_coefficient(&self) -> f64 {
        self.coefficients.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Check that wetland has the strictly smallest coefficient.
    pub fn validate_wetland_minimum(&self) -> Result<()> {
        let wetland = self.coefficient(LulcClass::Wetland);
        for class in LulcClass::ALL {
            if class != LulcClass::Wetland && self.coefficient(class) <= wetland {
                return Err(Error::InvalidCoefficients(format!(
                    "wetland coefficient {wetland} must be strictly below {class} ({})",
                    self.coefficient(class)
                )));
            }
        }
        Ok(())
    }

    /// Runoff of a single pixel of `class` with area `area_m2`.
    pub fn pixel_runoff(&self, class: LulcClass, area_m2: f64) -> f64 {
        self.coefficient(class) * self.intensity_mm_per_hr * area_m2 / RATIONAL_UNIT_DIVISOR
    }
}

impl Default for CoefficientTable {
    fn default() -> Self {
        Self {
            coefficients: Self::DEFAULT_COEFFICIENTS,
            intensity_mm_per_hr: Self::DEFAULT_INTENSITY_MM_PER_HR,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunoffResult {
    pub total_m3_per_s: f64,
    pub per_class_m3_per_s: [f64; NUM_CLASSES],
    pub composite_c: f64,
}

/// Area-weighted runoff coefficient.
pub fn composite_coefficient(hist: &ClassHistogram, table: &CoefficientTable) -> Result<f64> {
    let total = hist.total();
    if total == 0 {
        return Err(Error::EmptyGrid);
    }
    let weighted: f64 = hist
        .counts()
        .iter()
        .zip(table.coefficients())
        .map(|(&n, &c)| c * n as f64)
        .sum();
    let composite = weighted / total as f64;
    // guard against rounding pushing the mean outside the coefficient range
    Ok(composite.clamp(table.min_coefficient(), table.max_coefficient()))
}

/// Runoff of a class histogram at a uniform cell area.
pub fn runoff_from_histogram(
    hist: &ClassHistogram,
    table: &CoefficientTable,
    cell_area_m2: f64,
) -> Result<RunoffResult> {
    let composite_c = composite_coefficient(hist, table)?;
    let mut per_class = [0.0; NUM_CLASSES];
    for class in LulcClass::ALL {
        per_class[class.index()] = table.pixel_runoff(class, cell_area_m2 * hist[class] as f64);
    }
    Ok(RunoffResult {
        total_m3_per_s: per_class.iter().sum(),
        per_class_m3_per_s: per_class,
        composite_c,
    })
}

pub fn compute_runoff(grid: &LulcGrid, table: &CoefficientTable) -> Result<RunoffResult> {
    runoff_from_histogram(&grid.histogram(), table, grid.cell_area_m2())
}
