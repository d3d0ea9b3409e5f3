//! Exhaustive `(λ₁, λ₂)` grid search, the baseline the empirical-Bayes
//! tuner is compared against.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::als::{als_train, init_factors, rmse, AlsConfig, HyperParams};
use crate::data::SplitPair;
use crate::error::{Error, Result};
use crate::numerics::{RngStream, StreamLabel};

/// Default axis values, log-spaced. The weights multiply the mean squared
/// residual, so the useful range sits far below 1 at MovieLens scale.
pub const DEFAULT_GRID: [f64; 8] = [1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 1e-2];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lambda1_values: Vec<f64>,
    lambda2_values: Vec<f64>,
}

impl GridSpec {
    /// Both axes must be non-empty, strictly increasing and positive.
    pub fn new(lambda1_values: Vec<f64>, lambda2_values: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("lambda1", &lambda1_values), ("lambda2", &lambda2_values)] {
            if axis.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} grid is empty")));
            }
            if axis.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument(format!("{name} grid has a non-positive value")));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!("{name} grid is not strictly increasing")));
            }
        }
        Ok(GridSpec {
            lambda1_values,
            lambda2_values,
        })
    }

    pub fn lambda1_values(&self) -> &[f64] {
        &self.lambda1_values
    }

    pub fn lambda2_values(&self) -> &[f64] {
        &self.lambda2_values
    }

    /// Cells in grid order: `lambda1` outer, `lambda2` inner.
    pub fn cells(&self) -> Vec<HyperParams> {
        self.lambda1_values
            .iter()
            .flat_map(|&lambda1| {
                self.lambda2_values
                    .iter()
                    .map(move |&lambda2| HyperParams { lambda1, lambda2 })
            })
            .collect()
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lambda1_values: DEFAULT_GRID.to_vec(),
            lambda2_values: DEFAULT_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub hyper: HyperParams,
    pub test_rmse: f64,
    pub sweeps: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
    /// Index of the lowest test RMSE; the earliest cell in grid order wins
    /// ties.
    pub best: usize,
}

impl GridReport {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}

/// Trains and evaluates every cell of the grid. Every cell starts from the
/// same factors, drawn from `seed`.
pub fn grid_tune(split: &SplitPair, k: usize, spec: &GridSpec, seed: u64, als: &AlsConfig) -> Result<GridReport> {
    let train = &split.train;
    let init = init_factors(
        train.n_users(),
        train.n_items(),
        k,
        &mut RngStream::derive(seed, StreamLabel::Init),
    )?;
    let cells = spec
        .cells()
        .into_par_iter()
        .map(|hyper| {
            let start = Instant::now();
            let (factors, report) = als_train(train, &hyper, init.clone(), als)?;
            let test_rmse = rmse(&split.test, &factors)?;
            Ok(GridCell {
                hyper,
                test_rmse,
                sweeps: report.sweeps,
                wall_time: start.elapsed(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (idx, cell) in cells.iter().enumerate() {
        if cell.test_rmse < cells[best].test_rmse {
            best = idx;
        }
    }
    Ok(GridReport { cells, best })
}

/// Writes `lambda1,lambda2,test_rmse,sweeps,wall_time_ms` in grid order.
pub fn write_grid_csv<W: Write>(mut w: W, report: &GridReport) -> Result<()> {
    writeln!(w, "lambda1,lambda2,test_rmse,sweeps,wall_time_ms")?;
    for c in &report.cells {
        writeln!(
            w,
            "{},{},{:.15e},{},{}",
            c.hyper.lambda1,
            c.hyper.lambda2,
            c.test_rmse,
            c.sweeps,
            c.wall_time.as_millis()
        )?;
    }
    Ok(())
}
