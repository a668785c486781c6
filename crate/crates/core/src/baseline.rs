//! LIMERIC rate adaptation with EMBARC's 2-hop maximum load feedback, at a
//! fixed transmit power.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{LinkGraph, SenseIndex};
use crate::error::{Error, Result};
use crate::rate_control::objective_from_coefficients;
use crate::record::{RecordOptions, Recorder, RoundView, RunRecord};
use crate::utility::{RateBounds, UtilitySpec};

/// Which load each vehicle reacts to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    /// Largest load in the 2-hop sensing neighborhood.
    #[default]
    Embarc,
    /// The vehicle's own sensed load.
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimericParams {
    pub alpha_l: f64,
    pub beta_l: f64,
    /// Target total rate, msg/s.
    pub r_g: f64,
    pub r_init: Option<f64>,
    pub fixed_power: f64,
    pub feedback: Feedback,
}

impl Default for LimericParams {
    fn default() -> Self {
        LimericParams {
            alpha_l: 0.1,
            beta_l: 0.001,
            r_g: 1200.0,
            r_init: None,
            fixed_power: 0.0,
            feedback: Feedback::Embarc,
        }
    }
}

impl LimericParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_l > 0.0 && self.alpha_l < 1.0) {
            return Err(Error::config(format!(
                "alpha_l = {} outside (0, 1)",
                self.alpha_l
            )));
        }
        if !(self.beta_l > 0.0) || !self.beta_l.is_finite() {
            return Err(Error::config("beta_l must be positive"));
        }
        if !(self.r_g > 0.0) || !self.r_g.is_finite() {
            return Err(Error::config("r_g must be positive"));
        }
        if !self.fixed_power.is_finite() {
            return Err(Error::config("fixed_power must be finite"));
        }
        Ok(())
    }

    /// Per-vehicle steady state when `k` identical vehicles share one domain.
    pub fn single_domain_fixed_point(&self, k: usize) -> f64 {
        self.beta_l * self.r_g / (self.alpha_l + self.beta_l * k as f64)
    }
}

pub fn limeric_update(r_prev: f64, r_c: f64, params: &LimericParams, bounds: &RateBounds) -> f64 {
    bounds.clamp((1.0 - params.alpha_l) * r_prev + params.beta_l * (params.r_g - r_c))
}

/// Symmetric 1-hop sensing neighborhoods, self included.
pub struct Neighborhoods {
    adj: Vec<Vec<usize>>,
}

impl Neighborhoods {
    pub fn new(sense: &SenseIndex, n: usize) -> Self {
        let adj = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut v: Vec<usize> = sense
                    .sensed_by(i)
                    .iter()
                    .chain(sense.senders(i))
                    .copied()
                    .chain(std::iter::once(i))
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        Neighborhoods { adj }
    }

    pub fn from_adjacency(adj: Vec<Vec<usize>>) -> Self {
        let adj = adj
            .into_iter()
            .enumerate()
            .map(|(i, mut v)| {
                v.push(i);
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        Neighborhoods { adj }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    fn max_pass(&self, x: &[f64]) -> Vec<f64> {
        self.adj
            .par_iter()
            .map(|nb| nb.iter().map(|&j| x[j]).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// `embarc_rc` for every vehicle at once.
    pub fn two_hop_max(&self, loads: &[f64]) -> Vec<f64> {
        self.max_pass(&self.max_pass(loads))
    }
}

/// Largest load over the 2-hop sensing neighborhood of `i`.
pub fn embarc_rc(i: usize, loads: &[f64], nb: &Neighborhoods) -> f64 {
    nb.neighbors(i)
        .iter()
        .flat_map(|&j| nb.neighbors(j))
        .map(|&k| loads[k])
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn run_baseline(
    g: &LinkGraph,
    u: &UtilitySpec,
    params: &LimericParams,
    bounds: &RateBounds,
    rounds: usize,
    record: RecordOptions,
) -> Result<RunRecord> {
    params.validate()?;
    bounds.validate()?;
    u.validate(Some(g.len()))?;
    if rounds == 0 {
        return Err(Error::config("baseline needs at least one round"));
    }
    let n = g.len();
    let power = params.fixed_power.clamp(g.power_floor(), g.power_ceiling());
    let p = vec![power; n];
    let sense = SenseIndex::new(g, &p);
    let nb = Neighborhoods::new(&sense, n);
    let coef: Vec<f64> = (0..n)
        .map(|i| u.coefficient_sum(i, &g.receive_set(&p, i)))
        .collect();

    let mut r = vec![bounds.clamp(params.r_init.unwrap_or(bounds.floor)); n];
    let mut loads = sense.loads(&r);
    let lambda = vec![0.0; n];
    let mut rec = Recorder::new("limeric", n, params.r_g, rounds, record);
    for _ in 0..rounds {
        let rc = match params.feedback {
            Feedback::Embarc => nb.two_hop_max(&loads),
            Feedback::Local => loads.clone(),
        };
        r = r
            .iter()
            .zip(&rc)
            .map(|(&ri, &c)| limeric_update(ri, c, params, bounds))
            .collect();
        loads = sense.loads(&r);
        rec.push(RoundView {
            mu: &r,
            p: &p,
            lambda: &lambda,
            load: &loads,
            gprime: None,
            rho: objective_from_coefficients(u, &coef, &r),
        });
    }
    Ok(rec.finish(&r, &p, &lambda))
}
