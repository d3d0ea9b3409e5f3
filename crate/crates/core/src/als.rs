//! Regularized matrix factorization trained by alternating least squares.
//!
//! The objective is
//!
//! ```text
//! L(U, V) = (1/|κ|) Σ_{(i,j)∈κ} (m_ij − u_i·v_j)² + λ₁‖U‖²_F + λ₂‖V‖²_F
//! ```
//!
//! With `V` fixed, `L` separates over user rows, and each row minimizes
//! `(1/|κ|)‖m_i − V_κᵢ u_i‖² + λ₁‖u_i‖²`. Multiplying through by `|κ|`
//! gives the normal equations `(V_κᵢᵀV_κᵢ + λ₁|κ| I) u_i = V_κᵢᵀ m_i`,
//! which is the form solved here. Item rows are symmetric.
//!
//! Because every half-step minimizes `L` exactly over its block, `L` never
//! increases during training.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::data::{Entry, SparseRatings};
use crate::error::{Error, Result};
use crate::numerics::{cholesky_into, cholesky_solve_in_place, dot, frobenius_sq, DenseMatrix, RngStream};

/// Latent factors: `users` is n×k, `items` is p×k.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub users: DenseMatrix,
    pub items: DenseMatrix,
}

impl FactorPair {
    pub fn new(users: DenseMatrix, items: DenseMatrix) -> Result<Self> {
        if users.cols() != items.cols() {
            return Err(Error::DimensionMismatch(format!(
                "user factors have {} columns, item factors {}",
                users.cols(),
                items.cols()
            )));
        }
        Ok(FactorPair { users, items })
    }

    /// Latent dimension.
    pub fn k(&self) -> usize {
        self.users.cols()
    }

    #[inline]
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        dot(self.users.row(user), self.items.row(item))
    }

    fn check_dims(&self, data: &SparseRatings) -> Result<()> {
        if self.users.rows() != data.n_users() || self.items.rows() != data.n_items() {
            return Err(Error::DimensionMismatch(format!(
                "factors are {}x{} (users x items) but data is {}x{}",
                self.users.rows(),
                self.items.rows(),
                data.n_users(),
                data.n_items()
            )));
        }
        Ok(())
    }
}

/// Regularization weights (prior precisions) for the user and item factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl HyperParams {
    /// Validated constructor; both weights must be finite and strictly
    /// positive.
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be > 0")));
            }
        }
        Ok(HyperParams { lambda1, lambda2 })
    }
}

/// Mean squared residual over the observed ratings.
pub fn data_term(data: &SparseRatings, f: &FactorPair) -> Result<f64> {
    f.check_dims(data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = data
        .entries()
        .iter()
        .map(|e| {
            let r = e.rating - f.predict(e.user, e.item);
            r * r
        })
        .sum();
    Ok(sse / data.len() as f64)
}

/// The regularized loss, which is also the energy of the Boltzmann posterior
/// `π(U, V | M, λ) ∝ exp(−L)`.
pub fn boltzmann_energy(data: &SparseRatings, f: &FactorPair, h: &HyperParams) -> Result<f64> {
    Ok(data_term(data, f)?
        + h.lambda1 * frobenius_sq(&f.users)
        + h.lambda2 * frobenius_sq(&f.items))
}

/// Solves one row's ridge system `(Σ x xᵀ + ridge·I) w = Σ m x` into `out`,
/// where `x` runs over the rows of `other` named in `ratings`.
fn solve_row(ratings: &[(usize, f64)], other: &DenseMatrix, ridge: f64, out: &mut [f64]) -> Result<()> {
    let k = other.cols();
    let mut gram = vec![0.0; k * k];
    out.iter_mut().for_each(|x| *x = 0.0);
    for &(idx, m) in ratings {
        let x = other.row(idx);
        for a in 0..k {
            let xa = x[a];
            out[a] += m * xa;
            // Lower triangle only; the factorization never reads the rest.
            for b in 0..=a {
                gram[a * k + b] += xa * x[b];
            }
        }
    }
    for a in 0..k {
        gram[a * k + a] += ridge;
    }
    let mut chol = vec![0.0; k * k];
    cholesky_into(&gram, k, &mut chol)?;
    cholesky_solve_in_place(&chol, k, out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("row solve"));
    }
    Ok(())
}

/// Minimizer of the loss over user row `i` with the item factors held
/// fixed.
pub fn solve_user_row(i: usize, data: &SparseRatings, items: &DenseMatrix, lambda1: f64) -> Result<Vec<f64>> {
    let ratings = data.user_ratings(i);
    if ratings.is_empty() {
        return Err(Error::InvalidArgument(format!("user {i} has no ratings")));
    }
    let mut out = vec![0.0; items.cols()];
    solve_row(ratings, items, lambda1 * data.len() as f64, &mut out)?;
    Ok(out)
}

/// Minimizer of the loss over item row `j` with the user factors held
/// fixed.
pub fn solve_item_row(j: usize, data: &SparseRatings, users: &DenseMatrix, lambda2: f64) -> Result<Vec<f64>> {
    let ratings = data.item_ratings(j);
    if ratings.is_empty() {
        return Err(Error::InvalidArgument(format!("item {j} has no ratings")));
    }
    let mut out = vec![0.0; users.cols()];
    solve_row(ratings, users, lambda2 * data.len() as f64, &mut out)?;
    Ok(out)
}

/// Re-solves every user row against the current item factors. Users with
/// no ratings keep their current row.
pub fn update_users(data: &SparseRatings, f: &mut FactorPair, lambda1: f64) -> Result<()> {
    f.check_dims(data)?;
    let k = f.k();
    let ridge = lambda1 * data.len() as f64;
    let items = &f.items;
    f.users
        .data_mut()
        .par_chunks_mut(k)
        .enumerate()
        .try_for_each(|(i, row)| {
            let ratings = data.user_ratings(i);
            if ratings.is_empty() {
                return Ok(());
            }
            solve_row(ratings, items, ridge, row)
        })
}

/// Item counterpart of [`update_users`].
pub fn update_items(data: &SparseRatings, f: &mut FactorPair, lambda2: f64) -> Result<()> {
    f.check_dims(data)?;
    let k = f.k();
    let ridge = lambda2 * data.len() as f64;
    let users = &f.users;
    f.items
        .data_mut()
        .par_chunks_mut(k)
        .enumerate()
        .try_for_each(|(j, row)| {
            let ratings = data.item_ratings(j);
            if ratings.is_empty() {
                return Ok(());
            }
            solve_row(ratings, users, ridge, row)
        })
}

/// Stopping rule for [`als_train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsConfig {
    pub max_sweeps: usize,
    pub loss_tol: f64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            max_sweeps: 100,
            loss_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Full sweeps (user half-step then item half-step) performed.
    pub sweeps: usize,
    /// Training loss before the first sweep and after each sweep.
    pub train_loss_history: Vec<f64>,
    pub converged: bool,
    /// Filled in by callers that evaluate on held-out data.
    pub final_test_rmse: Option<f64>,
}

/// Alternates full user and item half-steps until the training loss changes
/// by less than `cfg.loss_tol` between sweeps, or `cfg.max_sweeps` is hit.
pub fn als_train(
    data: &SparseRatings,
    h: &HyperParams,
    init: FactorPair,
    cfg: &AlsConfig,
) -> Result<(FactorPair, TrainReport)> {
    if cfg.max_sweeps == 0 {
        return Err(Error::InvalidArgument("max_sweeps must be at least 1".into()));
    }
    let mut f = init;
    let mut history = vec![boltzmann_energy(data, &f, h)?];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        update_users(data, &mut f, h.lambda1)?;
        update_items(data, &mut f, h.lambda2)?;
        sweeps += 1;
        let loss = boltzmann_energy(data, &f, h)?;
        let prev = *history.last().expect("history starts non-empty");
        history.push(loss);
        if (prev - loss).abs() < cfg.loss_tol {
            converged = true;
            break;
        }
    }
    Ok((
        f,
        TrainReport {
            sweeps,
            train_loss_history: history,
            converged,
            final_test_rmse: None,
        },
    ))
}

/// Root mean squared error of raw (unclipped) dot-product predictions.
pub fn rmse(test: &[Entry], f: &FactorPair) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("rmse of an empty test set".into()));
    }
    let (n, p) = (f.users.rows(), f.items.rows());
    let mut sse = 0.0;
    for e in test {
        if e.user >= n || e.item >= p {
            return Err(Error::DimensionMismatch(format!(
                "test pair ({}, {}) outside {n}x{p} factors",
                e.user, e.item
            )));
        }
        let r = e.rating - f.predict(e.user, e.item);
        sse += r * r;
    }
    Ok((sse / test.len() as f64).sqrt())
}

/// Mean and variance of the iid normal factor entries that make every entry
/// of `U Vᵀ` have mean 3 and variance 1.
///
/// With `k` terms, `k μ² = 3` and `k (s⁴ + 2 μ² s²) = 1`.
pub fn init_moments(k: usize) -> (f64, f64) {
    let k = k as f64;
    let mean = (3.0 / k).sqrt();
    let var = -3.0 / k + (9.0 / (k * k) + 1.0 / k).sqrt();
    (mean, var)
}

/// Random starting factors; `U` is filled row by row, then `V`.
pub fn init_factors(n: usize, p: usize, k: usize, rng: &mut RngStream) -> Result<FactorPair> {
    if n == 0 || p == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot initialize {n}x{k} and {p}x{k} factors"
        )));
    }
    let (mean, var) = init_moments(k);
    let sd = var.sqrt();
    let users = DenseMatrix::from_fn(n, k, |_, _| mean + sd * rng.standard_normal());
    let items = DenseMatrix::from_fn(p, k, |_, _| mean + sd * rng.standard_normal());
    FactorPair::new(users, items)
}

/// Writes the text model format: a `n p k lambda1 lambda2` header, then the
/// user rows and the item rows, one per line.
pub fn write_model<W: Write>(mut w: W, f: &FactorPair, h: &HyperParams) -> Result<()> {
    writeln!(
        w,
        "{} {} {} {} {}",
        f.users.rows(),
        f.items.rows(),
        f.k(),
        h.lambda1,
        h.lambda2
    )?;
    for m in [&f.users, &f.items] {
        for i in 0..m.rows() {
            let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

/// Reads a model written by [`write_model`].
pub fn read_model<R: BufRead>(r: R) -> Result<(FactorPair, HyperParams)> {
    let mut lines = r.lines().enumerate();
    let bad = |line: usize, message: &str| Error::Parse {
        line,
        message: message.to_string(),
    };
    let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(bad(1, "header needs `n p k lambda1 lambda2`"));
    }
    let dims: Vec<usize> = fields[..3]
        .iter()
        .map(|s| s.parse().map_err(|_| bad(1, "bad dimension")))
        .collect::<Result<_>>()?;
    let lambda1: f64 = fields[3].parse().map_err(|_| bad(1, "bad lambda1"))?;
    let lambda2: f64 = fields[4].parse().map_err(|_| bad(1, "bad lambda2"))?;
    let (n, p, k) = (dims[0], dims[1], dims[2]);

    let mut read_block = |rows: usize| -> Result<DenseMatrix> {
        let mut data = Vec::with_capacity(rows * k);
        for _ in 0..rows {
            let (idx, line) = lines.next().ok_or_else(|| bad(0, "truncated model file"))?;
            let line = line?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| bad(idx + 1, "bad factor value"))?);
            }
            if data.len() - before != k {
                return Err(bad(idx + 1, "wrong number of factor values"));
            }
        }
        DenseMatrix::new(rows, k, data)
    };
    let users = read_block(n)?;
    let items = read_block(p)?;
    Ok((FactorPair::new(users, items)?, HyperParams { lambda1, lambda2 }))
}
