//! Simulation configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    #[default]
    Double,
}

impl std::str::FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "single" | "f32" => Ok(Precision::Single),
            "double" | "f64" => Ok(Precision::Double),
            other => Err(format!("unknown precision `{other}` (expected single|double)")),
        }
    }
}

/// Physics settings for one scene. The workspace is the unit cube.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig<T> {
    /// Cells per axis of the global background grid.
    pub grid_n: usize,
    pub dx: T,
    pub dt: T,
    pub substeps_per_control: usize,
    pub gravity: Vec3<T>,
    pub precision: Precision,
    /// CFL coefficient and the speed it is checked against.
    pub c_cfl: T,
    pub v_max: T,
    /// Thickness of the sticky boundary layer, in cells.
    pub wall_cells: usize,
    /// Cells of padding around the particles' bounding box in lazy mode.
    pub region_margin: usize,
    /// Active-region extents are rounded up to multiples of this.
    pub region_block: usize,
    /// Process the whole grid every substep instead of the active region.
    pub full_grid: bool,
}

impl<T: Real> SimConfig<T> {
    pub fn with_grid(grid_n: usize, dt: f64, substeps_per_control: usize) -> Self {
        Self {
            grid_n,
            dx: T::one() / T::from_usize_lossy(grid_n),
            dt: T::lit(dt),
            substeps_per_control,
            gravity: Vec3::from_f64([0.0, 0.0, -9.8]),
            precision: if T::WIDTH == 8 { Precision::Double } else { Precision::Single },
            c_cfl: T::lit(0.5),
            v_max: T::lit(3.0),
            wall_cells: 3,
            region_margin: 2,
            region_block: 4,
            full_grid: false,
        }
    }

    pub fn inv_dx(&self) -> T {
        T::one() / self.dx
    }

    /// Control-step duration.
    pub fn control_dt(&self) -> T {
        self.dt * T::from_usize_lossy(self.substeps_per_control)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.grid_n < 2 * self.wall_cells + 4 {
            return bad(format!("grid_n {} too small for {} wall cells", self.grid_n, self.wall_cells));
        }
        if !(self.dx > T::zero()) {
            return bad("dx must be positive".into());
        }
        if !(self.dt >= T::zero()) {
            return bad("dt must be non-negative".into());
        }
        if self.substeps_per_control == 0 {
            return bad("substeps_per_control must be >= 1".into());
        }
        if self.region_margin < 2 || self.region_block == 0 {
            return bad("active region needs margin >= 2 and a positive block size".into());
        }
        if self.dt > self.c_cfl * self.dx / self.v_max {
            return bad(format!(
                "dt {} violates CFL bound {}·dx/v_max = {}",
                self.dt,
                self.c_cfl,
                self.c_cfl * self.dx / self.v_max
            ));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> SimConfig<U> {
        SimConfig {
            grid_n: self.grid_n,
            dx: U::lit(self.dx.as_f64()),
            dt: U::lit(self.dt.as_f64()),
            substeps_per_control: self.substeps_per_control,
            gravity: self.gravity.cast(),
            precision: if U::WIDTH == 8 { Precision::Double } else { Precision::Single },
            c_cfl: U::lit(self.c_cfl.as_f64()),
            v_max: U::lit(self.v_max.as_f64()),
            wall_cells: self.wall_cells,
            region_margin: self.region_margin,
            region_block: self.region_block,
            full_grid: self.full_grid,
        }
    }
}
