//! Metropolis–Hastings transition kernel over the factor pair.
//!
//! The target is the Boltzmann posterior `π(U, V | M, λ) ∝ exp(−L(U, V))`
//! where `L` is [`boltzmann_energy`](crate::als::boltzmann_energy). Each
//! step proposes a new value for every entry of `U` and `V` at once with the
//! lag-one autoregressive map
//!
//! ```text
//! u*_ik = α u_ik + z¹_ik,   z¹ ~ N(0, σ₁²)
//! v*_jk = α v_jk + z²_jk,   z² ~ N(0, σ₂²)
//! ```
//!
//! and accepts with probability `min{1, exp(L − L*)}`. The proposal density
//! ratio is left out of the acceptance test, which is exact only for α = 1
//! (a symmetric random walk). For other α the kernel is the reduced-ratio
//! procedure, not an exact posterior sampler.

use crate::als::{data_term, FactorPair, HyperParams};
use crate::data::SparseRatings;
use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, DenseMatrix, RngStream, StreamLabel};

/// Parameters of the autoregressive proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalConfig {
    pub alpha: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl ProposalConfig {
    /// `alpha` must lie in `(-1, 1)` without 0 and both sigmas must be
    /// positive. `alpha = 1` is accepted too, as the symmetric random-walk
    /// limit.
    pub fn new(alpha: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        if !(alpha.abs() <= 1.0 && alpha != 0.0 && alpha > -1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha = {alpha} must be in (-1, 1] and nonzero"
            )));
        }
        for (name, s) in [("sigma1", sigma1), ("sigma2", sigma2)] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {s} must be > 0")));
            }
        }
        Ok(ProposalConfig { alpha, sigma1, sigma2 })
    }
}

/// The two random streams a chain consumes.
#[derive(Debug, Clone)]
pub struct SamplerRng {
    pub proposal: RngStream,
    pub acceptance: RngStream,
}

impl SamplerRng {
    pub fn from_seed(seed: u64) -> Self {
        SamplerRng {
            proposal: RngStream::derive(seed, StreamLabel::Proposal),
            acceptance: RngStream::derive(seed, StreamLabel::Acceptance),
        }
    }
}

/// Current state of a chain, with its energy cached by component so that a
/// change of λ only needs `O(1)` work to refresh.
#[derive(Debug, Clone)]
pub struct ChainState {
    factors: FactorPair,
    data_term: f64,
    user_norm_sq: f64,
    item_norm_sq: f64,
    hyper: HyperParams,
    energy: f64,
    pub step_count: u64,
    pub accept_count: u64,
}

impl ChainState {
    pub fn new(factors: FactorPair, data: &SparseRatings, h: HyperParams) -> Result<Self> {
        let data_term = data_term(data, &factors)?;
        let user_norm_sq = frobenius_sq(&factors.users);
        let item_norm_sq = frobenius_sq(&factors.items);
        let energy = data_term + h.lambda1 * user_norm_sq + h.lambda2 * item_norm_sq;
        if !energy.is_finite() {
            return Err(Error::NonFinite("chain energy"));
        }
        Ok(ChainState {
            factors,
            data_term,
            user_norm_sq,
            item_norm_sq,
            hyper: h,
            energy,
            step_count: 0,
            accept_count: 0,
        })
    }

    pub fn factors(&self) -> &FactorPair {
        &self.factors
    }

    pub fn into_factors(self) -> FactorPair {
        self.factors
    }

    /// Energy under the hyperparameters the cache was last written with.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Energy of the current factors under `h`, without touching the cache.
    pub fn energy_at(&self, h: &HyperParams) -> f64 {
        self.data_term + h.lambda1 * self.user_norm_sq + h.lambda2 * self.item_norm_sq
    }

    pub fn hyper(&self) -> HyperParams {
        self.hyper
    }

    /// `‖U‖²_F` of the current factors.
    pub fn user_norm_sq(&self) -> f64 {
        self.user_norm_sq
    }

    /// `‖V‖²_F` of the current factors.
    pub fn item_norm_sq(&self) -> f64 {
        self.item_norm_sq
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.step_count == 0 {
            0.0
        } else {
            self.accept_count as f64 / self.step_count as f64
        }
    }

    fn refresh(&mut self, h: &HyperParams) {
        if self.hyper != *h {
            self.hyper = *h;
            self.energy = self.energy_at(h);
        }
    }
}

fn ar1(current: &DenseMatrix, alpha: f64, sigma: f64, rng: &mut RngStream) -> DenseMatrix {
    let mut out = current.clone();
    for x in out.data_mut() {
        *x = alpha * *x + sigma * rng.standard_normal();
    }
    out
}

/// Draws a proposal from the autoregressive map; `U` entries are drawn
/// before `V` entries, row by row.
pub fn propose_ar1(current: &FactorPair, cfg: &ProposalConfig, rng: &mut RngStream) -> FactorPair {
    FactorPair {
        users: ar1(&current.users, cfg.alpha, cfg.sigma1, rng),
        items: ar1(&current.items, cfg.alpha, cfg.sigma2, rng),
    }
}

/// `min{1, exp(current − proposed)}`, evaluated in log space.
pub fn acceptance_prob(energy_current: f64, energy_proposed: f64) -> Result<f64> {
    if !energy_current.is_finite() || !energy_proposed.is_finite() {
        return Err(Error::NonFinite("energy"));
    }
    let log_ratio = energy_current - energy_proposed;
    Ok(if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() })
}

/// One Metropolis–Hastings transition at hyperparameters `h`. Returns
/// whether the proposal was accepted.
pub fn mh_step(
    state: &mut ChainState,
    data: &SparseRatings,
    h: &HyperParams,
    cfg: &ProposalConfig,
    rng: &mut SamplerRng,
) -> Result<bool> {
    state.refresh(h);
    let proposal = propose_ar1(&state.factors, cfg, &mut rng.proposal);
    let proposed_data = data_term(data, &proposal)?;
    let proposed_u = frobenius_sq(&proposal.users);
    let proposed_v = frobenius_sq(&proposal.items);
    let proposed_energy = proposed_data + h.lambda1 * proposed_u + h.lambda2 * proposed_v;
    let rho = acceptance_prob(state.energy, proposed_energy)?;
    let draw = rng.acceptance.uniform();
    state.step_count += 1;
    if draw < rho {
        state.factors = proposal;
        state.data_term = proposed_data;
        state.user_norm_sq = proposed_u;
        state.item_norm_sq = proposed_v;
        state.energy = proposed_energy;
        state.accept_count += 1;
        Ok(true)
    } else {
        Ok(false)
    }
}
