//! Bayesian pump controller on a Markov-chain model of the source.
//!
//! Chain state `k = 2n + x` counts emitted photons `n` and dot occupation
//! `x`. Pumping moves even `k` to `k + 1` at rate `r_p = Omega`, emission
//! moves odd `k` to `k + 1` at `r_e = 4 g^2 / kappa`; spontaneous emission is
//! neglected. The chain is cut at `k = K = 5`, which absorbs. Each record
//! sample reweights even states by `1 - xbar (y - xbar dt) / beta^2` and odd
//! states by `1 + (1 - xbar)(y - xbar dt) / beta^2`, with `xbar` the current
//! probability that the dot is occupied. Pumping stops once
//! `p_0 + p_1 + p_2 < 1 - epsilon`, i.e. the chance of a second photon
//! exceeds `epsilon`.

use crate::detect::Decision;
use crate::dynamics::ModelParams;
use crate::scalar::Real;

/// Highest chain state tracked.
pub const CHAIN_MAX: usize = 5;
pub const CHAIN_LEN: usize = CHAIN_MAX + 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainParams<T> {
    /// Pump rate.
    pub r_p: T,
    /// Effective emission rate.
    pub r_e: T,
}

impl<T: Real> ChainParams<T> {
    /// `r_p = Omega`, `r_e = 4 g^2 / kappa`.
    pub fn from_model(p: &ModelParams<T>) -> Self {
        Self {
            r_p: p.omega,
            r_e: T::lit(4.0) * p.g * p.g / p.kappa,
        }
    }

    fn rate_out(&self, k: usize) -> T {
        match k {
            CHAIN_MAX => T::zero(),
            k if k % 2 == 0 => self.r_p,
            _ => self.r_e,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BayesFilterState<T> {
    /// `p[k]` for `k = 0..=K`.
    pub p: [T; CHAIN_LEN],
    /// Probability the dot is occupied: sum of odd `p[k]`.
    pub xbar: T,
    /// Number of updates where a weight went negative and was clipped.
    pub clipped: u64,
}

impl<T: Real> Default for BayesFilterState<T> {
    fn default() -> Self {
        let mut p = [T::zero(); CHAIN_LEN];
        p[0] = T::one();
        Self {
            p,
            xbar: T::zero(),
            clipped: 0,
        }
    }
}

impl<T: Real> BayesFilterState<T> {
    pub fn odd_mass(&self) -> T {
        self.p.iter().skip(1).step_by(2).fold(T::zero(), |a, &x| a + x)
    }

    /// `p(k <= 2)`: at most one photon if pumping stops now.
    pub fn at_most_one(&self) -> T {
        self.p[0] + self.p[1] + self.p[2]
    }

    /// `p(k > 2) = 1 - p_0 - p_1 - p_2`.
    pub fn tail(&self) -> T {
        T::one() - self.at_most_one()
    }

    fn with_probs(p: [T; CHAIN_LEN], clipped: u64) -> Self {
        let mut s = Self {
            p,
            xbar: T::zero(),
            clipped,
        };
        s.xbar = s.odd_mass();
        s
    }
}

/// Forward-Euler step of the a-priori chain.
pub fn prior_step<T: Real>(state: &BayesFilterState<T>, chain: &ChainParams<T>, dt: T) -> BayesFilterState<T> {
    let mut p = state.p;
    for k in 0..CHAIN_LEN {
        let inflow = if k == 0 {
            T::zero()
        } else {
            chain.rate_out(k - 1) * state.p[k - 1]
        };
        p[k] = state.p[k] + (inflow - chain.rate_out(k) * state.p[k]) * dt;
    }
    BayesFilterState::with_probs(p, state.clipped)
}

/// Scalar recursion for the occupation probability alone, clipped to `[0, 1]`.
pub fn q1_step<T: Real>(xbar: T, chain: &ChainParams<T>, dt: T, y: T, beta: T) -> T {
    let next = xbar - (chain.r_p + chain.r_e) * xbar * dt
        + chain.r_p * dt
        + xbar * (T::one() - xbar) * (y - xbar * dt) / (beta * beta);
    next.max(T::zero()).min(T::one())
}

/// Conditions the chain on one integrated record sample `y`.
pub fn posterior_update<T: Real>(state: &BayesFilterState<T>, y: T, dt: T, beta: T) -> BayesFilterState<T> {
    let xbar = state.xbar;
    let innovation = (y - xbar * dt) / (beta * beta);
    let even = T::one() - xbar * innovation;
    let odd = T::one() + (T::one() - xbar) * innovation;
    let mut clipped = state.clipped;
    let mut p = state.p;
    let mut any_clip = false;
    for (k, pk) in p.iter_mut().enumerate() {
        let w = if k % 2 == 0 { even } else { odd };
        *pk = *pk * w;
        if *pk < T::zero() {
            *pk = T::zero();
            any_clip = true;
        }
    }
    if any_clip {
        clipped += 1;
    }
    let total = p.iter().fold(T::zero(), |a, &x| a + x);
    if total > T::zero() {
        for pk in p.iter_mut() {
            *pk = *pk / total;
        }
    } else {
        // every weight clipped: fall back to the prior
        p = state.p;
    }
    BayesFilterState::with_probs(p, clipped)
}

/// Stop iff `p_0 + p_1 + p_2 < 1 - epsilon`.
pub fn should_stop<T: Real>(state: &BayesFilterState<T>, epsilon: T) -> Decision {
    if state.at_most_one() < T::one() - epsilon {
        Decision::Stop
    } else {
        Decision::Continue
    }
}

/// Streaming controller: prior step, conditioning, stop rule, plus the
/// scalar occupation recursion tracked alongside for diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct BayesController<T: Real> {
    pub chain: ChainParams<T>,
    pub beta: T,
    pub dt: T,
    pub epsilon: T,
    pub state: BayesFilterState<T>,
    /// Occupation probability from [`q1_step`].
    pub q1: T,
    stopped: bool,
}

impl<T: Real> BayesController<T> {
    pub fn new(chain: ChainParams<T>, beta: T, dt: T, epsilon: T) -> Self {
        Self {
            chain,
            beta,
            dt,
            epsilon,
            state: BayesFilterState::default(),
            q1: T::zero(),
            stopped: false,
        }
    }

    pub fn observe(&mut self, y: T) -> Decision {
        if self.stopped {
            return Decision::Stop;
        }
        self.q1 = q1_step(self.q1, &self.chain, self.dt, y, self.beta);
        let prior = prior_step(&self.state, &self.chain, self.dt);
        self.state = posterior_update(&prior, y, self.dt, self.beta);
        let d = should_stop(&self.state, self.epsilon);
        self.stopped = d.is_stop();
        d
    }

    pub fn has_stopped(&self) -> bool {
        self.stopped
    }
}
