//! Deterministic propagation model and the per-link power thresholds derived
//! from it.
//!
//! `alpha[i][j]` is the smallest transmit power of `i` at which `j` decodes,
//! `beta[i][j]` the smallest at which `j` senses the carrier. All powers are
//! in dBm. The sensing threshold sits above the decoding threshold, so the
//! sense set of a transmitter is always contained in its receive set plus
//! itself.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    pub pathloss_exponent: f64,
    /// Path loss at the 1 m reference distance, dB.
    pub ref_loss_db: f64,
    pub decode_sensitivity_dbm: f64,
    pub sense_threshold_dbm: f64,
    pub power_floor_dbm: f64,
    pub power_ceiling_dbm: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        // Free space at 5.9 GHz; decoding 10 dB above a -96 dBm noise floor,
        // carrier sensing at -76 dBm.
        ChannelModel {
            pathloss_exponent: 2.0,
            ref_loss_db: 47.9,
            decode_sensitivity_dbm: -86.0,
            sense_threshold_dbm: -76.0,
            power_floor_dbm: -40.0,
            power_ceiling_dbm: 20.0,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pathloss_exponent,
            self.ref_loss_db,
            self.decode_sensitivity_dbm,
            self.sense_threshold_dbm,
            self.power_floor_dbm,
            self.power_ceiling_dbm,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("channel parameters must be finite"));
        }
        if !(self.pathloss_exponent > 0.0) {
            return Err(Error::config("pathloss_exponent must be positive"));
        }
        if self.decode_sensitivity_dbm > self.sense_threshold_dbm {
            return Err(Error::config(
                "decode_sensitivity_dbm must not exceed sense_threshold_dbm",
            ));
        }
        if self.power_floor_dbm >= self.power_ceiling_dbm {
            return Err(Error::config("power_floor_dbm must be below power_ceiling_dbm"));
        }
        Ok(())
    }

    /// Log-distance path loss in dB. Distances under 1 m count as 1 m.
    pub fn path_loss(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::domain(format!(
                "path loss distance must be positive, got {d}"
            )));
        }
        Ok(self.path_loss_clamped(d))
    }

    fn path_loss_clamped(&self, d: f64) -> f64 {
        self.ref_loss_db + 10.0 * self.pathloss_exponent * d.max(1.0).log10()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinkGraphRepr", into = "LinkGraphRepr")]
pub struct LinkGraph {
    n: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    power_floor: f64,
    power_ceiling: f64,
}

#[derive(Serialize, Deserialize)]
struct LinkGraphRepr {
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    power_floor_dbm: f64,
    power_ceiling_dbm: f64,
}

impl TryFrom<LinkGraphRepr> for LinkGraph {
    type Error = Error;

    fn try_from(r: LinkGraphRepr) -> Result<Self> {
        LinkGraph::from_matrices(&r.alpha, &r.beta, r.power_floor_dbm, r.power_ceiling_dbm)
    }
}

impl From<LinkGraph> for LinkGraphRepr {
    fn from(g: LinkGraph) -> Self {
        let rows = |m: &[f64]| m.chunks(g.n).map(<[f64]>::to_vec).collect();
        LinkGraphRepr {
            alpha: rows(&g.alpha),
            beta: rows(&g.beta),
            power_floor_dbm: g.power_floor,
            power_ceiling_dbm: g.power_ceiling,
        }
    }
}

/// Thresholds for every ordered pair of the scenario.
pub fn build_link_graph(s: &Scenario, m: &ChannelModel) -> Result<LinkGraph> {
    m.validate()?;
    s.validate()?;
    let n = s.len();
    let floor = m.power_floor_dbm;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut a = vec![floor; n];
            let mut b = vec![floor; n];
            for j in (0..n).filter(|&j| j != i) {
                let pl = m.path_loss_clamped(s.distance_unchecked(i, j));
                a[j] = (m.decode_sensitivity_dbm + pl).max(floor);
                b[j] = (m.sense_threshold_dbm + pl).max(floor);
            }
            (a, b)
        })
        .collect();
    let mut alpha = Vec::with_capacity(n * n);
    let mut beta = Vec::with_capacity(n * n);
    for (a, b) in rows {
        alpha.extend(a);
        beta.extend(b);
    }
    Ok(LinkGraph {
        n,
        alpha,
        beta,
        power_floor: floor,
        power_ceiling: m.power_ceiling_dbm,
    })
}

impl LinkGraph {
    /// Builds a graph from explicit threshold matrices. Diagonals are reset to
    /// the power floor so that a vehicle always loads its own channel.
    pub fn from_matrices(
        alpha: &[Vec<f64>],
        beta: &[Vec<f64>],
        power_floor: f64,
        power_ceiling: f64,
    ) -> Result<Self> {
        let n = alpha.len();
        if n == 0 || beta.len() != n {
            return Err(Error::config("alpha and beta must be non-empty n x n matrices"));
        }
        if !(power_floor < power_ceiling) {
            return Err(Error::config("power floor must be below the ceiling"));
        }
        let mut a = Vec::with_capacity(n * n);
        let mut b = Vec::with_capacity(n * n);
        for i in 0..n {
            if alpha[i].len() != n || beta[i].len() != n {
                return Err(Error::config(format!("row {i} of alpha/beta has wrong length")));
            }
            for j in 0..n {
                if i == j {
                    a.push(power_floor);
                    b.push(power_floor);
                    continue;
                }
                let (aij, bij) = (alpha[i][j], beta[i][j]);
                if aij.is_nan() || bij.is_nan() {
                    return Err(Error::config(format!("threshold ({i},{j}) is NaN")));
                }
                if aij > bij {
                    return Err(Error::config(format!(
                        "alpha[{i}][{j}] = {aij} exceeds beta[{i}][{j}] = {bij}"
                    )));
                }
                a.push(aij.max(power_floor));
                b.push(bij.max(power_floor));
            }
        }
        Ok(LinkGraph {
            n,
            alpha: a,
            beta: b,
            power_floor,
            power_ceiling,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.alpha[i * self.n + j]
    }

    #[inline]
    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.beta[i * self.n + j]
    }

    pub fn alpha_row(&self, i: usize) -> &[f64] {
        &self.alpha[i * self.n..(i + 1) * self.n]
    }

    pub fn beta_row(&self, i: usize) -> &[f64] {
        &self.beta[i * self.n..(i + 1) * self.n]
    }

    pub fn power_floor(&self) -> f64 {
        self.power_floor
    }

    pub fn power_ceiling(&self) -> f64 {
        self.power_ceiling
    }

    /// Vehicles other than `i` that decode `i` at power `p[i]`.
    pub fn receive_set(&self, p: &[f64], i: usize) -> Vec<usize> {
        let pi = p[i];
        self.alpha_row(i)
            .iter()
            .enumerate()
            .filter(|&(j, &a)| j != i && pi >= a)
            .map(|(j, _)| j)
            .collect()
    }

    /// Vehicles whose channel `i` occupies at power `p[i]`, `i` included.
    pub fn sense_set(&self, p: &[f64], i: usize) -> Vec<usize> {
        let pi = p[i];
        self.beta_row(i)
            .iter()
            .enumerate()
            .filter(|&(j, &b)| j == i || pi >= b)
            .map(|(j, _)| j)
            .collect()
    }

    /// Aggregate rate sensed at `j`, msg/s.
    pub fn channel_load(&self, mu: &[f64], p: &[f64], j: usize) -> f64 {
        (0..self.n)
            .filter(|&i| i == j || p[i] >= self.beta(i, j))
            .map(|i| mu[i])
            .sum()
    }

    pub fn loads(&self, mu: &[f64], p: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|j| self.channel_load(mu, p, j))
            .collect()
    }

    /// Largest channel load over `γ` at powers `p`, or zero when feasible.
    pub fn max_violation(&self, mu: &[f64], p: &[f64], gamma: f64) -> f64 {
        self.loads(mu, p)
            .into_iter()
            .map(|l| l - gamma)
            .fold(0.0, f64::max)
    }
}

/// Sense adjacency frozen at one power vector.
///
/// `sensed_by(i)` is the set `I_i`; `senders(j)` lists every `i` with
/// `j ∈ I_i`. Both include the diagonal.
#[derive(Clone, Debug)]
pub struct SenseIndex {
    sensed_by: Vec<Vec<usize>>,
    senders: Vec<Vec<usize>>,
}

impl SenseIndex {
    pub fn new(g: &LinkGraph, p: &[f64]) -> Self {
        let sensed_by: Vec<Vec<usize>> = (0..g.n).into_par_iter().map(|i| g.sense_set(p, i)).collect();
        let senders: Vec<Vec<usize>> = (0..g.n)
            .into_par_iter()
            .map(|j| (0..g.n).filter(|&i| i == j || p[i] >= g.beta(i, j)).collect())
            .collect();
        SenseIndex { sensed_by, senders }
    }

    pub fn sensed_by(&self, i: usize) -> &[usize] {
        &self.sensed_by[i]
    }

    pub fn senders(&self, j: usize) -> &[usize] {
        &self.senders[j]
    }

    pub fn loads(&self, mu: &[f64]) -> Vec<f64> {
        self.senders
            .par_iter()
            .map(|s| s.iter().map(|&i| mu[i]).sum())
            .collect()
    }
}

/// Writes `i,j,d_m,alpha_dbm,beta_dbm` for every ordered pair.
pub fn dump_links<W: Write>(s: &Scenario, g: &LinkGraph, mut out: W) -> std::io::Result<()> {
    use crate::io::fmt_sig;
    writeln!(out, "i,j,d_m,alpha_dbm,beta_dbm")?;
    for i in 0..g.n {
        for j in (0..g.n).filter(|&j| j != i) {
            writeln!(
                out,
                "{i},{j},{},{},{}",
                fmt_sig(s.distance_unchecked(i, j)),
                fmt_sig(g.alpha(i, j)),
                fmt_sig(g.beta(i, j))
            )?;
        }
    }
    Ok(())
}
