//! Bundled 25 x 40 demonstration grid.
//!
//! Class totals are water 5, urban 93, barren 4, forest 30, grassland 138,
//! agriculture 718, wetland 12 (1000 pixels of 900 m^2). The spatial layout is
//! synthetic: a fixed-seed shuffle of the class list.

use crate::rng;
use crate::runoff::{LulcClass, LulcGrid};

pub const SEED_GRID_WIDTH: usize = 25;
pub const SEED_GRID_HEIGHT: usize = 40;
pub const SEED_GRID_CELL_AREA_M2: f64 = 900.0;
pub const SEED_GRID_COUNTS: [u64; 7] = [5, 93, 4, 30, 138, 718, 12];
pub const SEED_GRID_FROZEN: [LulcClass; 2] = [LulcClass::Urban, LulcClass::Wetland];

const LAYOUT_SEED: u64 = 0x5EED_1000;

pub fn make_seed_grid() -> LulcGrid {
    let mut cells: Vec<LulcClass> = LulcClass::ALL
        .iter()
        .zip(SEED_GRID_COUNTS)
        .flat_map(|(&class, n)| std::iter::repeat_n(class, n as usize))
        .collect();
    let mut layout_rng = rng::stream(LAYOUT_SEED, 0);
    rng::shuffle(&mut layout_rng, &mut cells);
    LulcGrid::new(SEED_GRID_WIDTH, SEED_GRID_HEIGHT, cells, SEED_GRID_CELL_AREA_M2)
        .expect("seed grid dimensions are consistent")
        .with_frozen_classes(&SEED_GRID_FROZEN)
}
