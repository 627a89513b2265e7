//! Sampled checks of the structural identities: reversibility `R∘f = f⁻¹∘R`,
//! `R∘R = id`, and `det Df = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::involution::InvolutionSpec;
use crate::maps::{MapError, MapSpec};
use crate::scalar::Scalar;
use crate::torus::{torus_distance, Point};

/// Rectangular sample grid; node `(i, j)` sits at `(x0 + i·(x1−x0)/nx, y0 + j·(y1−y0)/ny)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "one")]
    pub x1: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default = "one")]
    pub y1: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::square(64)
    }
}

impl GridSpec {
    pub fn square(n: usize) -> Self {
        GridSpec { nx: n, ny: n, x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn region(n: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        GridSpec { nx: n, ny: n, x0, x1, y0, y1 }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major node `idx` (x varies fastest).
    pub fn node<T: Scalar>(&self, idx: usize) -> Point<T> {
        let (i, j) = (idx % self.nx, idx / self.nx);
        let x = self.x0 + i as f64 * (self.x1 - self.x0) / self.nx as f64;
        let y = self.y0 + j as f64 * (self.y1 - self.y0) / self.ny as f64;
        Point::new(T::lit(x), T::lit(y))
    }

    pub fn points<T: Scalar>(&self) -> Vec<Point<T>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Cell width along x and y.
    pub fn spacing(&self) -> (f64, f64) {
        ((self.x1 - self.x0) / self.nx as f64, (self.y1 - self.y0) / self.ny as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub check: String,
    pub max_reversibility_error: f64,
    pub max_area_error: f64,
    pub max_involution_error: f64,
    pub sample_count: usize,
    pub worst_point: [f64; 2],
    pub tol: f64,
    pub passed: bool,
}

impl ValidationReport {
    fn new(check: &str, tol: f64, sample_count: usize, worst: (f64, [f64; 2]), field: fn(&mut Self) -> &mut f64) -> Self {
        let mut r = ValidationReport {
            check: check.to_string(),
            max_reversibility_error: 0.0,
            max_area_error: 0.0,
            max_involution_error: 0.0,
            sample_count,
            worst_point: worst.1,
            tol,
            passed: worst.0 <= tol,
        };
        *field(&mut r) = worst.0;
        r
    }

    /// The single error this report measures.
    pub fn error(&self) -> f64 {
        self.max_reversibility_error.max(self.max_area_error).max(self.max_involution_error)
    }
}

/// Maximum of `err` over the grid; ties resolve to the lowest node index.
fn grid_max<T, F>(grid: &GridSpec, err: F) -> Result<(f64, [f64; 2]), MapError>
where
    T: Scalar,
    F: Fn(Point<T>) -> Result<T, MapError> + Sync,
{
    let vals: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| err(grid.node(i)).map(|e| if e.is_nan() { f64::INFINITY } else { e.as_f64() }))
        .collect::<Result<_, _>>()?;
    let mut best = (0.0, [0.0, 0.0]);
    for (i, v) in vals.into_iter().enumerate() {
        if v > best.0 || i == 0 {
            let p: Point<T> = grid.node(i);
            best = (v, [p.x.as_f64(), p.y.as_f64()]);
        }
    }
    Ok(best)
}

/// `max torus_distance(R(f(p)), f⁻¹(R(p)))` over the grid.
pub fn check_reversibility<T: Scalar>(
    map: &MapSpec<T>,
    r: &InvolutionSpec<T>,
    grid: &GridSpec,
    tol: f64,
) -> Result<ValidationReport, MapError> {
    let worst = grid_max(grid, |p| {
        let lhs = r.apply(map.eval(p)?);
        let rhs = map.eval_inverse(r.apply(p))?;
        Ok(torus_distance(lhs, rhs))
    })?;
    Ok(ValidationReport::new("reversibility", tol, grid.len(), worst, |r| &mut r.max_reversibility_error))
}

/// `max torus_distance(R(R(p)), p)` over the grid.
pub fn check_involution<T: Scalar>(r: &InvolutionSpec<T>, grid: &GridSpec, tol: f64) -> ValidationReport {
    let worst = grid_max(grid, |p| Ok(torus_distance(r.apply(r.apply(p)), p))).expect("involutions do not fail");
    ValidationReport::new("involution", tol, grid.len(), worst, |r| &mut r.max_involution_error)
}

/// `max |det Df(p) − 1|` over the grid.
pub fn check_area<T: Scalar>(map: &MapSpec<T>, grid: &GridSpec, tol: f64) -> Result<ValidationReport, MapError> {
    let worst = grid_max(grid, |p| Ok((map.differential(p)?.det() - T::one()).abs()))?;
    Ok(ValidationReport::new("area", tol, grid.len(), worst, |r| &mut r.max_area_error))
}
