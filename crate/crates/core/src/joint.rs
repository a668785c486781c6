//! Alternating rate and power control.
//!
//! Each outer iteration runs the rate controller at frozen powers, then the
//! power controller at frozen rates. A stage hands over a representative
//! operating point rather than its last iterate: for rates the time average
//! over the final quarter, scaled back into the load budget; for powers the
//! best assignment visited in the final quarter, with rates scaled into the
//! budget it induces. A stage whose
//! representative is worse than the incumbent leaves the incumbent in place.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::channel::{LinkGraph, SenseIndex};
use crate::error::{Error, Result};
use crate::power_control::{median_levels, PowerController, PowerState};
use crate::rate_control::{ControllerState, PriceSet, RateController};
use crate::record::{OuterStep, RecordOptions, Recorder, RoundView, RunRecord, TailAverages};
use crate::utility::{total_objective, RateBounds, UtilitySpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub eps_stop: f64,
    pub inner_rounds_rate: usize,
    pub inner_rounds_power: usize,
    pub max_outer: usize,
    /// An inner run stops early once no component has moved by this much
    /// for `settle_rounds` consecutive rounds.
    pub settle_tol: f64,
    pub settle_rounds: usize,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            eps_stop: 1e-3,
            inner_rounds_rate: 2000,
            inner_rounds_power: 2000,
            max_outer: 20,
            settle_tol: 1e-6,
            settle_rounds: 50,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_stop > 0.0) {
            return Err(Error::config("eps_stop must be positive"));
        }
        if self.inner_rounds_rate == 0 || self.inner_rounds_power == 0 || self.max_outer == 0 {
            return Err(Error::config("inner rounds and max_outer must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    /// Dual step of the rate stage.
    pub epsilon: f64,
    /// Dual step of the power stage.
    pub power_epsilon: f64,
    /// Load target, msg/s.
    pub gamma: f64,
    pub price_set: PriceSet,
    pub bounds: RateBounds,
    pub level_cap: Option<f64>,
    pub config: JointConfig,
    pub record: RecordOptions,
}

impl JointParams {
    pub fn new(epsilon: f64, gamma: f64) -> Self {
        JointParams {
            epsilon,
            power_epsilon: epsilon,
            gamma,
            price_set: PriceSet::Sense,
            bounds: RateBounds::default(),
            level_cap: None,
            config: JointConfig::default(),
            record: RecordOptions::default(),
        }
    }
}

/// Scales each rate by its tightest sensed overload, then clamps.
pub fn project_rates(g: &LinkGraph, mu: &[f64], p: &[f64], gamma: f64, bounds: &RateBounds) -> Vec<f64> {
    let sense = SenseIndex::new(g, p);
    let loads = sense.loads(mu);
    (0..mu.len())
        .map(|i| {
            let s = sense
                .sensed_by(i)
                .iter()
                .map(|&j| if loads[j] > gamma { gamma / loads[j] } else { 1.0 })
                .fold(1.0, f64::min);
            bounds.clamp(mu[i] * s)
        })
        .collect()
}

fn feasible(g: &LinkGraph, mu: &[f64], p: &[f64], gamma: f64) -> bool {
    g.max_violation(mu, p, gamma) <= 0.0
}

/// Floor rates at each vehicle's lower-median level, scaled into the budget.
pub fn joint_initial_point(g: &LinkGraph, params: &JointParams) -> (Vec<f64>, Vec<f64>) {
    let p = median_levels(g);
    let mu = project_rates(
        g,
        &vec![params.bounds.floor; g.len()],
        &p,
        params.gamma,
        &params.bounds,
    );
    (mu, p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub mu: Vec<f64>,
    pub p: Vec<f64>,
    pub rho: f64,
    pub rounds: usize,
    /// Whether the stage's representative replaced the incumbent.
    pub improved: bool,
}

struct Settle {
    tol: f64,
    need: usize,
    quiet: usize,
}

impl Settle {
    /// Feeds one round's before/after primal and price vectors.
    fn observe(&mut self, prev: (&[f64], &[f64]), next: (&[f64], &[f64])) -> bool {
        let moved = |a: &[f64], b: &[f64]| a.iter().zip(b).any(|(x, y)| (x - y).abs() >= self.tol);
        let moved = moved(prev.0, next.0) || moved(prev.1, next.1);
        self.quiet = if moved { 0 } else { self.quiet + 1 };
        self.quiet >= self.need
    }
}

fn tail_start(rounds: usize) -> usize {
    rounds - (rounds / 4).max(1)
}

fn rate_stage(
    g: &LinkGraph,
    u: &UtilitySpec,
    mu: &[f64],
    p: &[f64],
    params: &JointParams,
    rec: &mut Option<&mut Recorder>,
) -> Result<StageOutcome> {
    let cfg = &params.config;
    let state = ControllerState {
        mu: mu.to_vec(),
        lambda: vec![0.0; g.len()],
        p: p.to_vec(),
        t: 0,
        epsilon: params.epsilon,
        gamma: params.gamma,
    };
    let mut ctl = RateController::new(g, u, state, params.price_set, params.bounds)?;
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(cfg.inner_rounds_rate);
    let mut settle = Settle {
        tol: cfg.settle_tol,
        need: cfg.settle_rounds,
        quiet: 0,
    };
    for _ in 0..cfg.inner_rounds_rate {
        let before = (ctl.state().mu.clone(), ctl.state().lambda.clone());
        ctl.step();
        let s = ctl.state();
        if let Some(r) = rec.as_deref_mut() {
            r.push(RoundView {
                mu: &s.mu,
                p: &s.p,
                lambda: &s.lambda,
                load: ctl.loads(),
                gprime: None,
                rho: ctl.objective(),
            });
        }
        history.push(s.mu.clone());
        if settle.observe((&before.0, &before.1), (&s.mu, &s.lambda)) {
            break;
        }
    }
    let rounds = history.len();
    let start = tail_start(rounds);
    let k = (rounds - start) as f64;
    let mut avg = vec![0.0; g.len()];
    for h in &history[start..] {
        for (a, x) in avg.iter_mut().zip(h) {
            *a += x / k;
        }
    }
    let cand = project_rates(g, &avg, p, params.gamma, &params.bounds);
    let rho = total_objective(g, u, &cand, p);
    Ok(StageOutcome {
        mu: cand,
        p: p.to_vec(),
        rho,
        rounds,
        improved: true,
    })
}

fn power_stage(
    g: &LinkGraph,
    u: &UtilitySpec,
    mu: &[f64],
    p: &[f64],
    params: &JointParams,
    rec: &mut Option<&mut Recorder>,
) -> Result<StageOutcome> {
    let cfg = &params.config;
    let state = PowerState::initial(mu.to_vec(), p.to_vec(), params.power_epsilon, params.gamma);
    let mut ctl = PowerController::new(g, u, state, params.level_cap)?;
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(cfg.inner_rounds_power);
    let mut settle = Settle {
        tol: cfg.settle_tol,
        need: cfg.settle_rounds,
        quiet: 0,
    };
    for _ in 0..cfg.inner_rounds_power {
        let before = (ctl.state().p.clone(), ctl.state().lambda.clone());
        ctl.step();
        let s = ctl.state();
        let rho = ctl.objective();
        if let Some(r) = rec.as_deref_mut() {
            r.push(RoundView {
                mu: &s.mu,
                p: &s.p,
                lambda: &s.lambda,
                load: ctl.loads(),
                gprime: Some(ctl.cuts()),
                rho,
            });
        }
        history.push(s.p.clone());
        if settle.observe((&before.0, &before.1), (&s.p, &s.lambda)) {
            break;
        }
    }
    let rounds = history.len();
    // Each distinct power vector of the tail, with the rates scaled into the
    // budget it induces; keep the best feasible one.
    let mut seen = HashSet::new();
    let mut best: Option<StageOutcome> = None;
    for hp in &history[tail_start(rounds)..] {
        if !seen.insert(hp.iter().map(|x| x.to_bits()).collect::<Vec<u64>>()) {
            continue;
        }
        let m = project_rates(g, mu, hp, params.gamma, &params.bounds);
        if !feasible(g, &m, hp, params.gamma) {
            continue;
        }
        let rho = total_objective(g, u, &m, hp);
        if best.as_ref().is_none_or(|b| rho > b.rho) {
            best = Some(StageOutcome {
                mu: m,
                p: hp.clone(),
                rho,
                rounds,
                improved: true,
            });
        }
    }
    Ok(best.unwrap_or_else(|| StageOutcome {
        mu: mu.to_vec(),
        p: p.to_vec(),
        rho: f64::NEG_INFINITY,
        rounds,
        improved: false,
    }))
}

fn keep_better(incumbent: (&mut Vec<f64>, &mut Vec<f64>, &mut f64), cand: StageOutcome, feasible_now: bool) {
    let (mu, p, rho) = incumbent;
    if cand.improved && (cand.rho > *rho || !feasible_now) {
        *mu = cand.mu;
        *p = cand.p;
        *rho = cand.rho;
    }
}

/// Rate control alone from `(mu, p)`, reduced to its representative point.
pub fn rate_only(
    g: &LinkGraph,
    u: &UtilitySpec,
    mu: &[f64],
    p: &[f64],
    params: &JointParams,
) -> Result<StageOutcome> {
    params.config.validate()?;
    rate_stage(g, u, mu, p, params, &mut None)
}

/// Power control alone from `(mu, p)`, reduced to its representative point.
/// Falls back to `p` when no feasible assignment was visited.
pub fn power_only(
    g: &LinkGraph,
    u: &UtilitySpec,
    mu: &[f64],
    p: &[f64],
    params: &JointParams,
) -> Result<StageOutcome> {
    params.config.validate()?;
    let out = power_stage(g, u, mu, p, params, &mut None)?;
    if out.improved {
        Ok(out)
    } else {
        Ok(StageOutcome {
            rho: total_objective(g, u, mu, p),
            ..out
        })
    }
}

/// Alternates the two controllers from `init` (or the default initial point)
/// until an outer iteration gains at most `eps_stop`.
pub fn run_joint(
    g: &LinkGraph,
    u: &UtilitySpec,
    init: Option<(Vec<f64>, Vec<f64>)>,
    params: &JointParams,
) -> Result<RunRecord> {
    params.config.validate()?;
    params.bounds.validate()?;
    u.validate(Some(g.len()))?;
    let n = g.len();
    let (mut mu, mut p) = init.unwrap_or_else(|| joint_initial_point(g, params));
    if mu.len() != n || p.len() != n {
        return Err(Error::config(format!(
            "initial point must have {n} entries per vector"
        )));
    }
    let mut rho = total_objective(g, u, &mu, &p);
    let mut rec = Recorder::new("joint", n, params.gamma, 0, params.record);
    let mut outer = vec![OuterStep { k: 0, rho }];
    let mut converged = false;
    let cfg = &params.config;
    for k in 1..=cfg.max_outer {
        let prev = rho;
        let feasible_now = feasible(g, &mu, &p, params.gamma);
        let cand = rate_stage(g, u, &mu, &p, params, &mut Some(&mut rec))?;
        keep_better((&mut mu, &mut p, &mut rho), cand, feasible_now);

        let feasible_now = feasible(g, &mu, &p, params.gamma);
        let cand = power_stage(g, u, &mu, &p, params, &mut Some(&mut rec))?;
        keep_better((&mut mu, &mut p, &mut rho), cand, feasible_now);

        outer.push(OuterStep { k, rho });
        if rho - prev <= cfg.eps_stop {
            converged = true;
            break;
        }
    }
    let loads = g.loads(&mu, &p);
    let rounds = rec.rounds();
    let mut out = rec.finish(&mu, &p, &vec![0.0; n]);
    out.tail = TailAverages {
        start: rounds,
        rounds: 0,
        mu,
        p,
        load: loads,
        rho,
    };
    out.outer = outer;
    out.converged = Some(converged);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_link_graph, ChannelModel};
    use crate::scenario::Scenario;

    fn line(xs: &[(f64, f64)]) -> (LinkGraph, UtilitySpec) {
        let s = Scenario::from_vehicles(100_000.0, 1, 4.0, xs.iter().map(|&(x, v)| (0, x, v))).unwrap();
        let g = build_link_graph(&s, &ChannelModel::default()).unwrap();
        let u = UtilitySpec::pair_weighted_log(&s, 1.0).unwrap();
        (g, u)
    }

    fn quick(gamma: f64) -> JointParams {
        let mut p = JointParams::new(0.05, gamma);
        p.config.inner_rounds_rate = 400;
        p.config.inner_rounds_power = 400;
        p
    }

    #[test]
    fn isolated_vehicle_stops_after_one_iteration() {
        let (g, u) = line(&[(0.0, 0.0)]);
        let rec = run_joint(&g, &u, None, &quick(6.0)).unwrap();
        assert_eq!(rec.outer.len(), 2);
        assert_eq!(rec.converged, Some(true));
    }

    #[test]
    fn infinite_threshold_runs_once() {
        let (g, u) = line(&[(0.0, 30.0), (40.0, 20.0), (90.0, -10.0)]);
        let mut p = quick(8.0);
        p.config.eps_stop = f64::INFINITY;
        let rec = run_joint(&g, &u, None, &p).unwrap();
        assert_eq!(rec.outer.len(), 2);
    }

    #[test]
    fn objective_never_drops_and_beats_rate_only() {
        let (g, u) = line(&[
            (0.0, 30.0),
            (50.0, 20.0),
            (100.0, -10.0),
            (150.0, 0.0),
            (200.0, 15.0),
        ]);
        let params = quick(6.0);
        let rec = run_joint(&g, &u, None, &params).unwrap();
        for w in rec.outer.windows(2) {
            assert!(w[1].rho >= w[0].rho - 1e-6 * (1.0 + w[0].rho.abs()));
        }
        let (mu0, p0) = joint_initial_point(&g, &params);
        let ro = rate_only(&g, &u, &mu0, &p0, &params).unwrap();
        assert!(rec.tail.rho >= ro.rho - 1e-6 * (1.0 + ro.rho.abs()));
        assert!(g.max_violation(&rec.tail.mu, &rec.tail.p, 6.0) <= 0.0);
    }

    #[test]
    fn projection_restores_feasibility() {
        let (g, _) = line(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)]);
        let p = vec![10.0; 3];
        let b = RateBounds::default();
        let mu = project_rates(&g, &[10.0; 3], &p, 6.0, &b);
        assert!(g.max_violation(&mu, &p, 6.0) <= 1e-12);
        assert_eq!(project_rates(&g, &[1.0; 3], &p, 6.0, &b), vec![1.0; 3]);
    }

    #[test]
    fn rejects_bad_config() {
        let (g, u) = line(&[(0.0, 0.0)]);
        let mut p = quick(6.0);
        p.config.max_outer = 0;
        assert!(run_joint(&g, &u, None, &p).is_err());
    }
}
