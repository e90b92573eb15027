//! Space-time white noise on the lattice: one centered gaussian increment
//! per cell with variance dt dx, produced by a counter-based generator so
//! any cell of any replica can be evaluated independently, in any order, on
//! any number of workers, with bit-identical results.

use crate::error::Result;
use crate::grid::Grid;

/// splitmix64 finalizer; full-avalanche integer hash.
#[inline]
pub(crate) fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Distinct odd constants keep the (seed, replica, row, col) coordinates in
/// separate hash lanes.
const LANE_REPLICA: u64 = 0x9e3779b97f4a7c15;
const LANE_ROW: u64 = 0xc2b2ae3d27d4eb4f;
const LANE_COL: u64 = 0x165667b19e3779f9;
const LANE_SECOND: u64 = 0x27d4eb2f165667c5;

#[inline]
fn cell_hash(seed: u64, replica: u64, row: u64, col: u64) -> u64 {
    let h = mix(seed ^ LANE_REPLICA.wrapping_mul(replica.wrapping_add(1)));
    let h = mix(h ^ LANE_ROW.wrapping_mul(row.wrapping_add(1)));
    mix(h ^ LANE_COL.wrapping_mul(col.wrapping_add(1)))
}

/// Uniform in (0, 1]: top 53 bits, shifted off zero.
#[inline]
fn to_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 / 9007199254740992.0
}

/// Standard normal for one cell by Box-Muller (cosine branch).
#[inline]
pub fn standard_normal(seed: u64, replica: u64, row: u64, col: u64) -> f64 {
    let h1 = cell_hash(seed, replica, row, col);
    let h2 = mix(h1 ^ LANE_SECOND);
    let r = (-2.0 * to_unit(h1).ln()).sqrt();
    r * (2.0 * std::f64::consts::PI * to_unit(h2)).cos()
}

/// White-noise increments W([j dt, (j+1) dt) x cell_i) for one replica,
/// materialized row-major. Row j pairs with field row j in the solvers.
#[derive(Debug, Clone)]
pub struct NoiseField {
    pub grid: Grid,
    pub seed: u64,
    pub replica: u64,
    /// n_t * n_x increments, each N(0, dt dx).
    pub data: Vec<f64>,
}

pub fn noise_field(grid: &Grid, seed: u64, replica: u64) -> Result<NoiseField> {
    let scale = grid.cell_measure().sqrt();
    let mut data = vec![0.0; grid.cells()];
    for j in 0..grid.n_t {
        let row = &mut data[j * grid.n_x..(j + 1) * grid.n_x];
        for (i, slot) in row.iter_mut().enumerate() {
            *slot = scale * standard_normal(seed, replica, j as u64, i as u64);
        }
    }
    Ok(NoiseField {
        grid: *grid,
        seed,
        replica,
        data,
    })
}

impl NoiseField {
    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.grid.n_x..(j + 1) * self.grid.n_x]
    }

    #[inline]
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.grid.n_x + i]
    }
}
