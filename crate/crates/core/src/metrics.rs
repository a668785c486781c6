//! Awareness and coverage of the decode digraph, and reaction-time checks.

use serde::{Deserialize, Serialize};

use crate::channel::LinkGraph;
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn quartiles(values: &[usize]) -> Quartiles {
    let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    v.sort_by(f64::total_cmp);
    Quartiles {
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
    }
}

/// Unit-bin histogram: `h[k]` counts entries equal to `k`.
pub fn histogram(values: &[usize]) -> Vec<usize> {
    let top = values.iter().copied().max().map_or(0, |m| m + 1);
    let mut h = vec![0; top];
    for &v in values {
        h[v] += 1;
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AwarenessStats {
    /// In-degree: how many vehicles `j` decodes.
    pub awareness: Vec<usize>,
    /// Out-degree: how many vehicles decode `i`.
    pub coverage: Vec<usize>,
    pub awareness_hist: Vec<usize>,
    pub coverage_hist: Vec<usize>,
    pub awareness_quartiles: Quartiles,
    pub coverage_quartiles: Quartiles,
}

impl AwarenessStats {
    pub fn handshake_holds(&self) -> bool {
        self.awareness.iter().sum::<usize>() == self.coverage.iter().sum::<usize>()
    }
}

pub fn compute_awareness_coverage(g: &LinkGraph, p: &[f64]) -> AwarenessStats {
    let n = g.len();
    let mut awareness = vec![0; n];
    let mut coverage = vec![0; n];
    for i in 0..n {
        for j in g.receive_set(p, i) {
            coverage[i] += 1;
            awareness[j] += 1;
        }
    }
    AwarenessStats {
        awareness_hist: histogram(&awareness),
        coverage_hist: histogram(&coverage),
        awareness_quartiles: quartiles(&awareness),
        coverage_quartiles: quartiles(&coverage),
        awareness,
        coverage,
    }
}

/// Messages a closing pair must exchange before impact.
pub fn required_messages(p_msg: f64, p_min: f64) -> f64 {
    (1.0 - p_min).ln() / (1.0 - p_msg).ln()
}

/// Whether pair `(i, j)` meets the delivery target: receding pairs always do.
pub fn pair_meets_target(d: f64, v: f64, mu: f64, p_msg: f64, p_min: f64) -> bool {
    if v <= 0.0 {
        return true;
    }
    (d / v) * mu >= required_messages(p_msg, p_min)
}

/// Ordered pairs `(i, j)` on a collision course whose time to impact is too
/// short for `i`'s rate to deliver a message to `j` with probability `p_min`.
pub fn reaction_feasibility(s: &Scenario, mu: &[f64], p_msg: f64, p_min: f64) -> Vec<(usize, usize)> {
    let n = s.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let v = s.closing_speed(i, j);
            if v <= 0.0 {
                continue;
            }
            let d = s.distance_unchecked(i, j);
            if !pair_meets_target(d, v, mu[i], p_msg, p_min) {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairProduct {
    pub i: usize,
    pub j: usize,
    pub product: f64,
}

/// `(d_ij / v_ij)·μ_i` per pair. Pairs that are not closing are skipped and
/// returned separately.
pub fn fairness_ratio(
    s: &Scenario,
    mu: &[f64],
    pairs: &[(usize, usize)],
) -> (Vec<PairProduct>, Vec<(usize, usize)>) {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for &(i, j) in pairs {
        let v = s.closing_speed(i, j);
        if v <= 0.0 || i == j {
            skipped.push((i, j));
            continue;
        }
        kept.push(PairProduct {
            i,
            j,
            product: s.distance_unchecked(i, j) / v * mu[i],
        });
    }
    (kept, skipped)
}
