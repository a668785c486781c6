//! Per-pair utilities and the global objective.
//!
//! Every supported family factors as `U_ij(μ) = c_ij · φ_i(μ)`: a pair
//! coefficient times a per-transmitter base curve. The controllers exploit
//! this to collapse a receive set into one coefficient sum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::LinkGraph;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Admissible broadcast rates, msg/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub floor: f64,
    pub max: f64,
}

impl Default for RateBounds {
    fn default() -> Self {
        RateBounds {
            floor: 0.1,
            max: 10.0,
        }
    }
}

impl RateBounds {
    pub fn clamp(&self, mu: f64) -> f64 {
        mu.clamp(self.floor, self.max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0) || !(self.floor < self.max) || !self.max.is_finite() {
            return Err(Error::config("rate bounds need 0 < floor < max < inf"));
        }
        Ok(())
    }
}

/// Dense `n x n` pair weights with a zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PairWeights {
    n: usize,
    data: Vec<f64>,
}

impl PairWeights {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl TryFrom<Vec<Vec<f64>>> for PairWeights {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::config(format!("pair weight row {i} has wrong length")));
            }
            for (j, w) in row.into_iter().enumerate() {
                if i == j {
                    data.push(0.0);
                } else if !(w > 0.0) || !w.is_finite() {
                    return Err(Error::config(format!(
                        "pair weight ({i},{j}) = {w} must be finite and positive"
                    )));
                } else {
                    data.push(w);
                }
            }
        }
        Ok(PairWeights { n, data })
    }
}

impl From<PairWeights> for Vec<Vec<f64>> {
    fn from(w: PairWeights) -> Self {
        if w.n == 0 {
            return Vec::new();
        }
        w.data.chunks(w.n).map(<[f64]>::to_vec).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `w_i μ^(1-α)/(1-α)`, or `w_i log μ` at `α = 1`; identical for every
    /// receiver of `i`.
    AlphaFair { weights: Vec<f64>, alpha_i: f64 },
    /// `w_ij log μ` with explicit pair weights.
    PairWeightedLog { pair_weights: PairWeights },
}

impl UtilitySpec {
    /// Pair weights `max(|v_i - v_j|, alpha_v) / d_ij` from a scenario.
    pub fn pair_weighted_log(s: &Scenario, alpha_v: f64) -> Result<Self> {
        if !(alpha_v > 0.0) || !alpha_v.is_finite() {
            return Err(Error::config("alpha_v must be positive"));
        }
        let n = s.len();
        let data: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                (0..n).map(move |j| {
                    if i == j {
                        0.0
                    } else {
                        let dv = (s.vehicles[i].v - s.vehicles[j].v).abs();
                        dv.max(alpha_v) / s.distance_unchecked(i, j).max(1e-9)
                    }
                })
            })
            .collect();
        Ok(UtilitySpec::PairWeightedLog {
            pair_weights: PairWeights { n, data },
        })
    }

    pub fn pair_weighted_log_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Ok(UtilitySpec::PairWeightedLog {
            pair_weights: PairWeights::try_from(rows)?,
        })
    }

    pub fn alpha_fair(weights: Vec<f64>, alpha_i: f64) -> Result<Self> {
        let u = UtilitySpec::AlphaFair { weights, alpha_i };
        u.validate(None)?;
        Ok(u)
    }

    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        let len = match self {
            UtilitySpec::AlphaFair { weights, alpha_i } => {
                if !(*alpha_i > 0.0) || !alpha_i.is_finite() {
                    return Err(Error::config("alpha_i must be positive"));
                }
                if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(Error::config("alpha-fair weights must be finite and positive"));
                }
                weights.len()
            }
            UtilitySpec::PairWeightedLog { pair_weights } => pair_weights.n,
        };
        match n {
            Some(n) if n != len => Err(Error::config(format!(
                "utility sized for {len} vehicles, network has {n}"
            ))),
            _ => Ok(()),
        }
    }

    /// True when the stationarity condition of the rate update has the
    /// closed form `μ = c / (ε Λ)`.
    pub fn is_log(&self) -> bool {
        match self {
            UtilitySpec::AlphaFair { alpha_i, .. } => *alpha_i == 1.0,
            UtilitySpec::PairWeightedLog { .. } => true,
        }
    }

    /// Coefficient `c_ij` of the factorization.
    #[inline]
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        match self {
            UtilitySpec::AlphaFair { .. } => 1.0,
            UtilitySpec::PairWeightedLog { pair_weights } => pair_weights.get(i, j),
        }
    }

    /// Base curve `φ_i(μ)`; `μ > 0` is the caller's responsibility.
    #[inline]
    pub fn base(&self, i: usize, mu: f64) -> f64 {
        match self {
            UtilitySpec::AlphaFair { weights, alpha_i } => {
                if *alpha_i == 1.0 {
                    weights[i] * mu.ln()
                } else {
                    weights[i] * mu.powf(1.0 - alpha_i) / (1.0 - alpha_i)
                }
            }
            UtilitySpec::PairWeightedLog { .. } => mu.ln(),
        }
    }

    #[inline]
    pub fn base_marginal(&self, i: usize, mu: f64) -> f64 {
        match self {
            UtilitySpec::AlphaFair { weights, alpha_i } => weights[i] * mu.powf(-alpha_i),
            UtilitySpec::PairWeightedLog { .. } => 1.0 / mu,
        }
    }

    /// Scale factor such that the closed-form log optimum is
    /// `log_scale(i) · Σc / (ε Λ)`.
    pub(crate) fn log_scale(&self, i: usize) -> f64 {
        match self {
            UtilitySpec::AlphaFair { weights, .. } => weights[i],
            UtilitySpec::PairWeightedLog { .. } => 1.0,
        }
    }

    pub fn pair_utility(&self, i: usize, j: usize, mu: f64) -> Result<f64> {
        check_rate(mu)?;
        Ok(self.coefficient(i, j) * self.base(i, mu))
    }

    pub fn pair_marginal(&self, i: usize, j: usize, mu: f64) -> Result<f64> {
        check_rate(mu)?;
        Ok(self.coefficient(i, j) * self.base_marginal(i, mu))
    }

    /// `Σ_{j ∈ receivers} c_ij`.
    pub fn coefficient_sum(&self, i: usize, receivers: &[usize]) -> f64 {
        receivers.iter().map(|&j| self.coefficient(i, j)).sum()
    }
}

fn check_rate(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("utility needs a positive rate, got {mu}")))
    }
}

/// `ρ = Σ_i Σ_{j ≠ i, p_i ≥ α_ij} U_ij(μ_i)`.
pub fn total_objective(g: &LinkGraph, u: &UtilitySpec, mu: &[f64], p: &[f64]) -> f64 {
    (0..g.len())
        .into_par_iter()
        .map(|i| objective_term(g, u, i, mu[i], p[i]))
        .collect::<Vec<f64>>()
        .into_iter()
        .sum()
}

/// Transmitter `i`'s share of the objective.
pub(crate) fn objective_term(g: &LinkGraph, u: &UtilitySpec, i: usize, mu: f64, p: f64) -> f64 {
    let c: f64 = g
        .alpha_row(i)
        .iter()
        .enumerate()
        .filter(|&(j, &a)| j != i && p >= a)
        .map(|(j, _)| u.coefficient(i, j))
        .sum();
    if c == 0.0 {
        0.0
    } else {
        c * u.base(i, mu)
    }
}
