//! Space-time lattice shared by the solvers. Field row j holds time
//! (j+1) dt: the t = 0 row is the initial measure itself and is never stored
//! as a field. The spatial lattice is x_i = -half_width + i dx with
//! n_x = 2 half_width / dx nodes (right endpoint excluded).

use crate::error::{Result, SpdeError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub dt: f64,
    /// Spatial domain is [-half_width, half_width).
    pub half_width: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub spec: GridSpec,
    pub n_t: usize,
    pub n_x: usize,
}

/// Relative slack allowed when checking that t_max/dt and 2 half_width/dx
/// are integers.
const INTEGRALITY_TOL: f64 = 1e-9;

/// Refuse grids above this many space-time cells.
const MAX_CELLS: usize = 1 << 30;

impl GridSpec {
    pub fn validate(&self) -> Result<Grid> {
        if !(self.dt > 0.0 && self.t_max > 0.0 && self.dx > 0.0 && self.half_width > 0.0) {
            return Err(SpdeError::parameter(
                "grid needs positive t_max, dt, half_width, dx",
            ));
        }
        let steps = self.t_max / self.dt;
        let n_t = steps.round();
        if n_t < 1.0 || (steps - n_t).abs() > INTEGRALITY_TOL * n_t.max(1.0) {
            return Err(SpdeError::parameter(format!(
                "t_max/dt = {steps} is not an integer",
            )));
        }
        let cols = 2.0 * self.half_width / self.dx;
        let n_x = cols.round();
        if n_x < 2.0 || (cols - n_x).abs() > INTEGRALITY_TOL * n_x {
            return Err(SpdeError::parameter(format!(
                "2 half_width/dx = {cols} is not an integer >= 2",
            )));
        }
        let (n_t, n_x) = (n_t as usize, n_x as usize);
        let cells = n_t
            .checked_mul(n_x)
            .ok_or_else(|| SpdeError::capacity("grid cell count overflows"))?;
        if cells > MAX_CELLS {
            return Err(SpdeError::capacity(format!(
                "grid has {cells} cells, above the {MAX_CELLS} cap",
            )));
        }
        Ok(Grid {
            spec: *self,
            n_t,
            n_x,
        })
    }
}

impl Grid {
    pub fn dt(&self) -> f64 {
        self.spec.dt
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx
    }

    /// Time carried by field row j.
    pub fn time_of_row(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.spec.dt
    }

    pub fn x_of_col(&self, i: usize) -> f64 {
        -self.spec.half_width + i as f64 * self.spec.dx
    }

    /// Nearest lattice column for x; error when x falls outside the domain.
    pub fn col_of_x(&self, x: f64) -> Result<usize> {
        if x < -self.spec.half_width || x >= self.spec.half_width {
            return Err(SpdeError::domain(format!(
                "x = {x} outside the spatial domain",
            )));
        }
        let raw = (x + self.spec.half_width) / self.spec.dx;
        Ok((raw.round() as usize).min(self.n_x - 1))
    }

    /// Row holding time t (which must sit on the lattice within 1e-9).
    pub fn row_of_time(&self, t: f64) -> Result<usize> {
        let raw = t / self.spec.dt - 1.0;
        let row = raw.round();
        if row < 0.0 || row >= self.n_t as f64 || (raw - row).abs() > 1e-6 {
            return Err(SpdeError::domain(format!(
                "t = {t} is not a positive lattice time <= t_max",
            )));
        }
        Ok(row as usize)
    }

    pub fn cells(&self) -> usize {
        self.n_t * self.n_x
    }

    /// Cell measure dt dx: the variance of one noise increment.
    pub fn cell_measure(&self) -> f64 {
        self.spec.dt * self.spec.dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(t_max: f64, dt: f64, half_width: f64, dx: f64) -> GridSpec {
        GridSpec {
            t_max,
            dt,
            half_width,
            dx,
        }
    }

    #[test]
    fn accepts_integral_grids() {
        let g = spec(4.0, 1.0 / 256.0, 8.0, 0.125).validate().unwrap();
        assert_eq!(g.n_t, 1024);
        assert_eq!(g.n_x, 128);
        assert_relative_eq!(g.time_of_row(0), 1.0 / 256.0);
        assert_relative_eq!(g.time_of_row(1023), 4.0);
        assert_relative_eq!(g.x_of_col(0), -8.0);
        assert_relative_eq!(g.x_of_col(64), 0.0);
        assert_eq!(g.col_of_x(0.0).unwrap(), 64);
        assert_eq!(g.row_of_time(4.0).unwrap(), 1023);
    }

    #[test]
    fn rejects_non_integral_ratios() {
        assert!(spec(1.0, 0.3, 4.0, 0.5).validate().is_err());
        assert!(spec(1.0, 0.25, 4.0, 0.3).validate().is_err());
        // A ratio off by 1e-12 is accepted as integral.
        assert!(spec(1.0, (1.0 + 1e-12) / 8.0, 4.0, 0.5).validate().is_ok());
    }

    #[test]
    fn rejects_degenerate_and_oversized() {
        assert!(spec(0.0, 0.1, 1.0, 0.1).validate().is_err());
        assert!(spec(1.0, -0.1, 1.0, 0.1).validate().is_err());
        assert!(spec(1e6, 1e-6, 1e3, 1e-3).validate().is_err());
    }

    #[test]
    fn out_of_domain_lookups_fail() {
        let g = spec(1.0, 0.25, 2.0, 0.5).validate().unwrap();
        assert!(g.col_of_x(5.0).is_err());
        assert!(g.col_of_x(-2.2).is_err());
        assert!(g.row_of_time(0.0).is_err());
        assert!(g.row_of_time(2.0).is_err());
        assert!(g.row_of_time(0.3).is_err());
        assert_eq!(g.row_of_time(0.25).unwrap(), 0);
    }
}
