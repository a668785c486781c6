//! Dual rate control at fixed transmit powers.
//!
//! Each round every vehicle picks the rate maximizing its receivers' utility
//! minus `ε·μ` times the aggregated congestion price, and every vehicle moves
//! its own price along the excess of its sensed load over `γ`. Both updates
//! read only the previous round's snapshot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{LinkGraph, SenseIndex};
use crate::error::{Error, Result};
use crate::record::{RecordOptions, Recorder, RoundView, RunRecord};
use crate::utility::{RateBounds, UtilitySpec};

/// Whose prices a transmitter aggregates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceSet {
    /// `I_i`: every vehicle whose channel `i` loads, `i` included.
    #[default]
    Sense,
    /// `R_i`: every vehicle that decodes `i`.
    Receive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub p: Vec<f64>,
    pub t: usize,
    pub epsilon: f64,
    /// Load target, msg/s.
    pub gamma: f64,
}

impl ControllerState {
    /// Rates at the floor, zero prices.
    pub fn initial(p: Vec<f64>, epsilon: f64, gamma: f64, bounds: RateBounds) -> Self {
        let n = p.len();
        ControllerState {
            mu: vec![bounds.floor; n],
            lambda: vec![0.0; n],
            p,
            t: 0,
            epsilon,
            gamma,
        }
    }

    pub fn validate(&self, g: &LinkGraph, bounds: &RateBounds) -> Result<()> {
        let n = g.len();
        if self.mu.len() != n || self.lambda.len() != n || self.p.len() != n {
            return Err(Error::config(format!(
                "controller state must have {n} entries per vector"
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::config(format!(
                "epsilon = {} outside (0, 1]",
                self.epsilon
            )));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::config("gamma must be positive"));
        }
        if self.lambda.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::config("prices must be nonnegative"));
        }
        let tol = 1e-12;
        if self
            .mu
            .iter()
            .any(|m| *m < bounds.floor - tol || *m > bounds.max + tol)
        {
            return Err(Error::config("rates must lie within the rate bounds"));
        }
        if self
            .p
            .iter()
            .any(|p| *p < g.power_floor() - tol || *p > g.power_ceiling() + tol)
        {
            return Err(Error::config("powers must lie within [floor, ceiling]"));
        }
        Ok(())
    }
}

/// Multiplicative uniform perturbation of the loads fed to the price update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadNoise {
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub price_set: PriceSet,
    pub bounds: RateBounds,
    pub noise: Option<LoadNoise>,
    pub record: RecordOptions,
}

impl Default for RateParams {
    fn default() -> Self {
        RateParams {
            price_set: PriceSet::Sense,
            bounds: RateBounds::default(),
            noise: None,
            record: RecordOptions::default(),
        }
    }
}

/// Projected subgradient step on one price.
#[inline]
pub fn price_update(lambda: f64, load: f64, gamma: f64) -> f64 {
    (lambda + load - gamma).max(0.0)
}

/// Best response of one transmitter given its receivers' coefficient sum.
pub fn rate_response(
    u: &UtilitySpec,
    i: usize,
    coefficient_sum: f64,
    aggregated_price: f64,
    epsilon: f64,
    bounds: &RateBounds,
) -> f64 {
    if coefficient_sum <= 0.0 {
        return bounds.floor;
    }
    let penalty = epsilon * aggregated_price;
    if penalty <= 0.0 {
        return bounds.max;
    }
    if u.is_log() {
        return bounds.clamp(u.log_scale(i) * coefficient_sum / penalty);
    }
    let slope = |mu: f64| coefficient_sum * u.base_marginal(i, mu) - penalty;
    if slope(bounds.max) >= 0.0 {
        return bounds.max;
    }
    if slope(bounds.floor) <= 0.0 {
        return bounds.floor;
    }
    let (mut lo, mut hi) = (bounds.floor, bounds.max);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Rate of `i` maximizing `Σ_{j∈R_i} U_ij(μ) − ε μ Λ` over the rate bounds.
pub fn rate_update(
    u: &UtilitySpec,
    i: usize,
    receivers: &[usize],
    aggregated_price: f64,
    epsilon: f64,
    bounds: &RateBounds,
) -> f64 {
    rate_response(
        u,
        i,
        u.coefficient_sum(i, receivers),
        aggregated_price,
        epsilon,
        bounds,
    )
}

/// Synchronous rate controller at frozen powers.
pub struct RateController<'a> {
    u: &'a UtilitySpec,
    bounds: RateBounds,
    sense: SenseIndex,
    price_members: Vec<Vec<usize>>,
    coef: Vec<f64>,
    state: ControllerState,
    loads: Vec<f64>,
    noise: Option<(f64, ChaCha8Rng)>,
}

impl<'a> RateController<'a> {
    pub fn new(
        g: &'a LinkGraph,
        u: &'a UtilitySpec,
        state: ControllerState,
        price_set: PriceSet,
        bounds: RateBounds,
    ) -> Result<Self> {
        bounds.validate()?;
        u.validate(Some(g.len()))?;
        state.validate(g, &bounds)?;
        let sense = SenseIndex::new(g, &state.p);
        let receive: Vec<Vec<usize>> = (0..g.len())
            .into_par_iter()
            .map(|i| g.receive_set(&state.p, i))
            .collect();
        let coef = receive
            .iter()
            .enumerate()
            .map(|(i, r)| u.coefficient_sum(i, r))
            .collect();
        let price_members = match price_set {
            PriceSet::Sense => (0..g.len()).map(|i| sense.sensed_by(i).to_vec()).collect(),
            PriceSet::Receive => receive,
        };
        let loads = sense.loads(&state.mu);
        Ok(RateController {
            u,
            bounds,
            sense,
            price_members,
            coef,
            state,
            loads,
            noise: None,
        })
    }

    pub fn with_noise(mut self, noise: Option<LoadNoise>) -> Self {
        self.noise = noise.map(|n| (n.amplitude, ChaCha8Rng::seed_from_u64(n.seed)));
        self
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    /// Loads produced by the current rates.
    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    /// `Σ_{j∈R_i} c_ij` at the frozen powers.
    pub fn coefficient_sums(&self) -> &[f64] {
        &self.coef
    }

    pub fn objective(&self) -> f64 {
        objective_from_coefficients(self.u, &self.coef, &self.state.mu)
    }

    /// One synchronous round.
    pub fn step(&mut self) {
        let prev_lambda = &self.state.lambda;
        let eps = self.state.epsilon;
        let u = self.u;
        let bounds = self.bounds;
        let new_mu: Vec<f64> = (0..prev_lambda.len())
            .into_par_iter()
            .map(|i| {
                let agg: f64 = self.price_members[i].iter().map(|&j| prev_lambda[j]).sum();
                rate_response(u, i, self.coef[i], agg, eps, &bounds)
            })
            .collect();

        let gamma = self.state.gamma;
        let observed: Vec<f64> = match &mut self.noise {
            Some((a, rng)) => {
                let a = *a;
                self.loads
                    .iter()
                    .map(|l| l * (1.0 + rng.gen_range(-a..=a)))
                    .collect()
            }
            None => self.loads.clone(),
        };
        let new_lambda: Vec<f64> = prev_lambda
            .iter()
            .zip(&observed)
            .map(|(&l, &load)| price_update(l, load, gamma))
            .collect();

        self.state.mu = new_mu;
        self.state.lambda = new_lambda;
        self.state.t += 1;
        self.loads = self.sense.loads(&self.state.mu);
    }
}

pub(crate) fn objective_from_coefficients(u: &UtilitySpec, coef: &[f64], mu: &[f64]) -> f64 {
    coef.iter()
        .zip(mu)
        .enumerate()
        .filter(|(_, (c, _))| **c != 0.0)
        .map(|(i, (c, m))| c * u.base(i, *m))
        .sum()
}

/// Runs `rounds` synchronous rounds and records every one of them.
pub fn run_rate_control(
    state: ControllerState,
    g: &LinkGraph,
    u: &UtilitySpec,
    rounds: usize,
    params: &RateParams,
) -> Result<RunRecord> {
    if rounds == 0 {
        return Err(Error::config("rate control needs at least one round"));
    }
    let n = g.len();
    let gamma = state.gamma;
    let mut ctl = RateController::new(g, u, state, params.price_set, params.bounds)?.with_noise(params.noise);
    let mut rec = Recorder::new("rate", n, gamma, rounds, params.record);
    for _ in 0..rounds {
        ctl.step();
        let s = ctl.state();
        rec.push(RoundView {
            mu: &s.mu,
            p: &s.p,
            lambda: &s.lambda,
            load: &ctl.loads,
            gprime: None,
            rho: ctl.objective(),
        });
    }
    let s = ctl.state();
    Ok(rec.finish(&s.mu, &s.p, &s.lambda))
}
