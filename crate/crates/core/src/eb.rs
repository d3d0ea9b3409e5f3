//! Empirical-Bayes tuning of `(λ₁, λ₂)` by stochastic approximation.
//!
//! The marginal likelihood `π(M | λ)` has no closed form, so its gradient is
//! replaced by a single-sample estimate. Each iteration `n`:
//!
//! 1. advances the Metropolis–Hastings chain one step at the current `λ`,
//!    giving `θₙ₊₁ = (U, V)`;
//! 2. moves `λ` along `H(λ, θₙ₊₁)` with step `aₙ = a/n`, where
//!    `H = ∂/∂λ log π(θ | λ)`.
//!
//! With the prior `π(U | λ₁) ∝ exp(−λ₁‖U‖²_F)` taken without its
//! normalizing constant, `H` reduces to `−‖U‖²_F` for `λ₁` and `−‖V‖²_F`
//! for `λ₂`, so both weights can only decrease. They are floored at
//! [`LAMBDA_FLOOR`] to keep the posterior proper.

use std::io::Write;

use crate::als::{init_factors, FactorPair, HyperParams};
use crate::data::SparseRatings;
use crate::error::{Error, Result};
use crate::mh::{mh_step, ChainState, ProposalConfig, SamplerRng};
use crate::numerics::{frobenius_sq, DenseMatrix, RngStream, StreamLabel};

/// Smallest value either regularization weight may take.
pub const LAMBDA_FLOOR: f64 = 1e-8;

/// Settings of the stochastic-approximation loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SAConfig {
    /// Step-size scale; iteration `n` moves by `a/n` times the gradient.
    pub a: f64,
    /// Stop once both weights move by less than this on two consecutive
    /// iterations.
    pub tol: f64,
    pub max_iters: u64,
    pub proposal: ProposalConfig,
    pub lambda0: HyperParams,
    pub seed: u64,
}

impl Default for SAConfig {
    fn default() -> Self {
        SAConfig {
            a: 5e-5,
            tol: 1e-5,
            max_iters: 200_000,
            proposal: ProposalConfig {
                alpha: 0.9,
                sigma1: 0.5,
                sigma2: 0.5,
            },
            lambda0: HyperParams {
                lambda1: 10.0,
                lambda2: 10.0,
            },
            seed: 42,
        }
    }
}

impl SAConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidArgument(format!("a = {} must be > 0", self.a)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tol = {} must be > 0", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        ProposalConfig::new(self.proposal.alpha, self.proposal.sigma1, self.proposal.sigma2)?;
        HyperParams::new(self.lambda0.lambda1, self.lambda0.lambda2)?;
        Ok(())
    }
}

/// One iteration of the tuner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: u64,
    /// Energy of the post-step factors under the post-update weights.
    pub energy: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub accepted: bool,
    /// `‖U‖²_F` of the factors that drove this iteration's update.
    pub user_norm_sq: f64,
    /// `‖V‖²_F` of the factors that drove this iteration's update.
    pub item_norm_sq: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SaTrace {
    pub records: Vec<TraceRecord>,
}

impl SaTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub lambda_hat: HyperParams,
    pub iterations: u64,
    pub converged: bool,
    pub trace: SaTrace,
    pub final_factors: FactorPair,
    pub acceptance_rate: f64,
    /// Iterations at which a weight hit [`LAMBDA_FLOOR`].
    pub floor_hits: u64,
}

/// `H` for the user weight: `−‖U‖²_F`.
pub fn h_user(users: &DenseMatrix) -> f64 {
    -frobenius_sq(users)
}

/// `H` for the item weight: `−‖V‖²_F`.
pub fn h_item(items: &DenseMatrix) -> f64 {
    -frobenius_sq(items)
}

/// The step-size sequence `a/n`, for `n ≥ 1`.
pub fn step_size(a: f64, n: u64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidArgument("step index starts at 1".into()));
    }
    Ok(a / n as f64)
}

fn floored(lambda: f64) -> f64 {
    lambda.max(LAMBDA_FLOOR)
}

/// Moves each weight by `a_n` times its `H`, given the gradient values
/// directly.
pub fn sa_update_with(h: &HyperParams, h_u: f64, h_v: f64, a_n: f64) -> HyperParams {
    HyperParams {
        lambda1: floored(h.lambda1 + a_n * h_u),
        lambda2: floored(h.lambda2 + a_n * h_v),
    }
}

/// `λ₁' = λ₁ − aₙ‖U‖²_F`, `λ₂' = λ₂ − aₙ‖V‖²_F`, floored at
/// [`LAMBDA_FLOOR`].
pub fn sa_update(h: &HyperParams, factors: &FactorPair, a_n: f64) -> HyperParams {
    sa_update_with(h, h_user(&factors.users), h_item(&factors.items), a_n)
}

/// Runs the stochastic-approximation loop from freshly initialized factors.
pub fn tune_eb(data: &SparseRatings, k: usize, cfg: &SAConfig) -> Result<TuneResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let init = init_factors(
        data.n_users(),
        data.n_items(),
        k,
        &mut RngStream::derive(cfg.seed, StreamLabel::Init),
    )?;
    let mut rng = SamplerRng::from_seed(cfg.seed);
    let mut lambda = cfg.lambda0;
    let mut state = ChainState::new(init, data, lambda)?;
    let mut trace = SaTrace::default();
    let mut below_tol = 0u32;
    let mut converged = false;
    let mut floor_hits = 0u64;

    for n in 1..=cfg.max_iters {
        let accepted = mh_step(&mut state, data, &lambda, &cfg.proposal, &mut rng)?;
        let a_n = step_size(cfg.a, n)?;
        let (hu, hv) = (-state.user_norm_sq(), -state.item_norm_sq());
        let next = sa_update_with(&lambda, hu, hv, a_n);
        if next.lambda1 == LAMBDA_FLOOR || next.lambda2 == LAMBDA_FLOOR {
            floor_hits += 1;
            if floor_hits == 1 {
                log::warn!("iteration {n}: a regularization weight reached the floor {LAMBDA_FLOOR}");
            }
        }
        let change = (next.lambda1 - lambda.lambda1)
            .abs()
            .max((next.lambda2 - lambda.lambda2).abs());
        lambda = next;
        trace.records.push(TraceRecord {
            iter: n,
            energy: state.energy_at(&lambda),
            lambda1: lambda.lambda1,
            lambda2: lambda.lambda2,
            accepted,
            user_norm_sq: -hu,
            item_norm_sq: -hv,
        });
        if change < cfg.tol {
            below_tol += 1;
            if below_tol >= 2 {
                converged = true;
                break;
            }
        } else {
            below_tol = 0;
        }
    }

    let iterations = trace.len() as u64;
    let acceptance_rate = state.acceptance_rate();
    log::info!(
        "tune_eb: {iterations} iterations, converged={converged}, acceptance rate {acceptance_rate:.4}, lambda=({}, {})",
        lambda.lambda1,
        lambda.lambda2
    );
    Ok(TuneResult {
        lambda_hat: lambda,
        iterations,
        converged,
        trace,
        final_factors: state.into_factors(),
        acceptance_rate,
        floor_hits,
    })
}

/// Writes `iter,energy,lambda1,lambda2,accepted`, one row per iteration.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &SaTrace) -> Result<()> {
    writeln!(w, "iter,energy,lambda1,lambda2,accepted")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{:.15e},{:.15e},{:.15e},{}",
            r.iter, r.energy, r.lambda1, r.lambda2, r.accepted as u8
        )?;
    }
    Ok(())
}
