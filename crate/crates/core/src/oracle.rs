//! Brute-force reference solvers for small instances.
//!
//! Nothing here calls into the controllers: objectives and loads are
//! evaluated straight from the threshold matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::LinkGraph;
use crate::error::{Error, Result};
use crate::utility::{RateBounds, UtilitySpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallInstance {
    pub graph: LinkGraph,
    pub utility: UtilitySpec,
    /// Load target, msg/s.
    pub gamma: f64,
    /// Frozen rates (power oracle).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Frozen powers (rate oracle).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default)]
    pub bounds: RateBounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutOptimum {
    pub cut: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateOptimum {
    pub mu: Vec<f64>,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerOptimum {
    pub p: Vec<f64>,
    pub rho: f64,
}

/// Smallest maximizer of the prefix sums `P(g)`, with `P(0) = 0`.
pub fn oracle_cut(f: &[f64]) -> CutOptimum {
    let mut best = CutOptimum { cut: 0, value: 0.0 };
    let mut prefix = 0.0;
    for (k, &x) in f.iter().enumerate() {
        prefix += x;
        if prefix > best.value {
            best = CutOptimum {
                cut: k + 1,
                value: prefix,
            };
        }
    }
    best
}

/// One transmitter's relaxed subproblem, stated over raw thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subproblem {
    /// Decode threshold and utility per receiver.
    pub receivers: Vec<(f64, f64)>,
    /// Sense threshold and price per sensor.
    pub sensors: Vec<(f64, f64)>,
    /// `ε·μ_i`.
    pub price_scale: f64,
}

/// Best objective over every binary `(x, y)` obeying the ordering
/// constraints: `x_j ≥ x_k` when `α_j ≤ α_k`, and `y_m ≥ x_j` when
/// `β_m ≤ α_j`.
pub fn oracle_subproblem(sp: &Subproblem) -> Result<f64> {
    let (nr, ns) = (sp.receivers.len(), sp.sensors.len());
    if nr + ns > 22 {
        return Err(Error::config("subproblem too large to enumerate"));
    }
    let mut best = f64::NEG_INFINITY;
    for xm in 0u32..(1 << nr) {
        let x = |j: usize| xm >> j & 1 == 1;
        let ordered =
            (0..nr).all(|j| (0..nr).all(|k| !(sp.receivers[j].0 <= sp.receivers[k].0 && x(k) && !x(j))));
        if !ordered {
            continue;
        }
        let gain: f64 = (0..nr).filter(|&j| x(j)).map(|j| sp.receivers[j].1).sum();
        for ym in 0u32..(1 << ns) {
            let y = |m: usize| ym >> m & 1 == 1;
            let covered =
                (0..ns).all(|m| y(m) || (0..nr).all(|j| !(x(j) && sp.sensors[m].0 <= sp.receivers[j].0)));
            if !covered {
                continue;
            }
            let cost: f64 = (0..ns).filter(|&m| y(m)).map(|m| sp.sensors[m].1).sum();
            best = best.max(gain - sp.price_scale * cost);
        }
    }
    Ok(best)
}

fn check_size(n: usize, limit: usize, what: &str) -> Result<()> {
    if n == 0 || n > limit {
        return Err(Error::config(format!(
            "{what} oracle supports 1..={limit} vehicles, got {n}"
        )));
    }
    Ok(())
}

fn pair_sum(u: &UtilitySpec, i: usize, mu: f64, js: impl Iterator<Item = usize>) -> f64 {
    js.map(|j| u.pair_utility(i, j, mu).unwrap_or(f64::NEG_INFINITY))
        .sum()
}

/// Grid search over the rate box, refined three times around the incumbent
/// (cell size shrinks twentyfold per level). Each level re-centres on the
/// incumbent until it stops improving.
/// `phase` in `[0, 1)` shifts the coarse grid by that fraction of a cell.
pub fn oracle_rate_opt(inst: &SmallInstance, phase: f64) -> Result<RateOptimum> {
    let g = &inst.graph;
    let n = g.len();
    check_size(n, 4, "rate")?;
    inst.bounds.validate()?;
    let p = inst
        .p
        .as_ref()
        .ok_or_else(|| Error::config("rate oracle needs frozen powers `p`"))?;
    if p.len() != n {
        return Err(Error::config("p has the wrong length"));
    }
    let u = &inst.utility;
    u.validate(Some(n))?;

    // senders[j]: transmitters whose transmissions j senses
    let senders: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&i| i == j || p[i] >= g.beta(i, j)).collect())
        .collect();
    let receivers: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && p[i] >= g.alpha(i, j)).collect())
        .collect();
    let b = inst.bounds;
    let worst = senders.iter().map(|s| s.len()).max().unwrap_or(0) as f64 * b.floor;
    if worst > inst.gamma {
        return Err(Error::Infeasible(format!(
            "rate floor alone loads a vehicle with {worst} > gamma = {}",
            inst.gamma
        )));
    }
    let value = |mu: &[f64]| -> Option<f64> {
        for s in &senders {
            let load: f64 = s.iter().map(|&i| mu[i]).sum();
            if load > inst.gamma {
                return None;
            }
        }
        Some(
            (0..n)
                .map(|i| pair_sum(u, i, mu[i], receivers[i].iter().copied()))
                .sum(),
        )
    };

    const POINTS: usize = 41;
    const REFINEMENTS: usize = 3;
    const MAX_MOVES: usize = 200;
    let coarse = (b.max - b.floor) / (POINTS - 1) as f64;
    let axis = |lo: f64, step: f64| -> Vec<f64> {
        (0..POINTS)
            .map(|k| lo + step * k as f64)
            .filter(|&x| x >= b.floor && x <= b.max)
            .collect()
    };
    let search = |axes: &[Vec<f64>]| -> Option<(Vec<f64>, f64)> {
        let total: usize = axes.iter().map(Vec::len).product();
        (0..total)
            .into_par_iter()
            .filter_map(|mut idx| {
                let mut mu = vec![0.0; n];
                for (d, a) in axes.iter().enumerate().rev() {
                    mu[d] = a[idx % a.len()];
                    idx /= a.len();
                }
                value(&mu).map(|v| (mu, v))
            })
            .reduce_with(|a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            })
    };
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut a = axis(b.floor + phase.rem_euclid(1.0) * coarse, coarse);
            a.insert(0, b.floor);
            a.push(b.max);
            a.dedup();
            a
        })
        .collect();
    let mut best = search(&axes);
    let mut window = coarse;
    for _ in 0..REFINEMENTS {
        let fine = 2.0 * window / (POINTS - 1) as f64;
        // Recentre at this scale until the incumbent stops improving, so the
        // search can walk along a constraint that cuts the grid diagonally.
        for _ in 0..MAX_MOVES {
            let Some((centre, rho)) = best.clone() else { break };
            let axes: Vec<Vec<f64>> = centre
                .iter()
                .map(|&c| {
                    let mut a = axis(c - window, fine);
                    a.push(c);
                    a.sort_by(f64::total_cmp);
                    a.dedup();
                    a
                })
                .collect();
            match search(&axes) {
                Some(f) if f.1 > rho => best = Some(f),
                _ => break,
            }
        }
        window = fine;
    }
    let (mu, rho) = best.ok_or_else(|| Error::Infeasible("no feasible grid point".into()))?;
    Ok(RateOptimum { mu, rho })
}

/// Distinct decode thresholds of `i` reachable below the ceiling.
fn own_levels(g: &LinkGraph, i: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..g.len())
        .filter(|&j| j != i)
        .map(|j| g.alpha(i, j))
        .filter(|&a| a <= g.power_ceiling())
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn power_inputs(inst: &SmallInstance) -> Result<&[f64]> {
    let n = inst.graph.len();
    check_size(n, 6, "power")?;
    inst.utility.validate(Some(n))?;
    let mu = inst
        .mu
        .as_deref()
        .ok_or_else(|| Error::config("power oracle needs frozen rates `mu`"))?;
    if mu.len() != n || mu.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::config("mu must hold one positive rate per vehicle"));
    }
    if mu.iter().any(|&m| m > inst.gamma) {
        return Err(Error::Infeasible(format!(
            "a self-load exceeds gamma = {}",
            inst.gamma
        )));
    }
    Ok(mu)
}

fn enumerate_powers(inst: &SmallInstance, mu: &[f64], options: &[Vec<f64>]) -> Result<PowerOptimum> {
    let g = &inst.graph;
    let u = &inst.utility;
    let n = g.len();
    let total: usize = options.iter().map(Vec::len).product();
    let mut best: Option<PowerOptimum> = None;
    let mut p = vec![0.0; n];
    for mut idx in 0..total {
        for i in (0..n).rev() {
            p[i] = options[i][idx % options[i].len()];
            idx /= options[i].len();
        }
        let feasible = (0..n).all(|j| {
            let load: f64 = (0..n)
                .filter(|&i| i == j || p[i] >= g.beta(i, j))
                .map(|i| mu[i])
                .sum();
            load <= inst.gamma
        });
        if !feasible {
            continue;
        }
        let rho: f64 = (0..n)
            .map(|i| pair_sum(u, i, mu[i], (0..n).filter(|&j| j != i && p[i] >= g.alpha(i, j))))
            .sum();
        if best.as_ref().is_none_or(|b| rho > b.rho) {
            best = Some(PowerOptimum { p: p.clone(), rho });
        }
    }
    best.ok_or_else(|| Error::Infeasible("no power assignment meets the load target".into()))
}

/// Exhaustive search over `{floor} ∪ levels(i)` for every vehicle.
pub fn oracle_power_opt(inst: &SmallInstance) -> Result<PowerOptimum> {
    let mu = power_inputs(inst)?;
    let g = &inst.graph;
    let options: Vec<Vec<f64>> = (0..g.len())
        .map(|i| {
            let lv = own_levels(g, i);
            std::iter::once(g.power_floor()).chain(lv).collect()
        })
        .collect();
    if options.iter().any(|o| o.len() > 7) {
        return Err(Error::config(
            "power oracle supports at most 6 levels per vehicle",
        ));
    }
    enumerate_powers(inst, mu, &options)
}

/// Exhaustive search with every vehicle choosing from the same grid.
pub fn oracle_power_opt_grid(inst: &SmallInstance, grid: &[f64]) -> Result<PowerOptimum> {
    let mu = power_inputs(inst)?;
    let g = &inst.graph;
    let mut grid: Vec<f64> = grid
        .iter()
        .map(|&x| x.clamp(g.power_floor(), g.power_ceiling()))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.is_empty() || grid.len().pow(g.len() as u32) > 5_000_000 {
        return Err(Error::config("power grid empty or too large to enumerate"));
    }
    enumerate_powers(inst, mu, &vec![grid; g.len()])
}

/// Union of all vehicles' levels plus the floor.
pub fn global_level_grid(g: &LinkGraph) -> Vec<f64> {
    let mut v: Vec<f64> = (0..g.len()).flat_map(|i| own_levels(g, i)).collect();
    v.push(g.power_floor());
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}
