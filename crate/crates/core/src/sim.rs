//! JSON run configuration and the driver that turns it into run records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baseline::{run_baseline, Feedback, LimericParams};
use crate::channel::{build_link_graph, ChannelModel, LinkGraph};
use crate::error::{Error, Result};
use crate::joint::{run_joint, JointConfig, JointParams};
use crate::metrics::compute_awareness_coverage;
use crate::power_control::{median_levels, run_power_control, PowerParams, PowerState};
use crate::rate_control::{run_rate_control, ControllerState, LoadNoise, PriceSet, RateParams};
use crate::record::{RecordOptions, RunRecord, DEFAULT_AIRTIME_S};
use crate::scenario::{generate_six_lane, Scenario, SixLaneParams};
use crate::utility::{RateBounds, UtilitySpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    SixLane,
    SingleLane,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub preset: Preset,
    pub seed: u64,
    pub lanes: Option<usize>,
    pub per_lane: Option<usize>,
    pub dense_gaps_m: Option<[f64; 2]>,
    pub sparse_gaps_m: Option<[f64; 2]>,
    pub lane_speeds: Option<Vec<f64>>,
    pub lane_width: Option<f64>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            preset: Preset::SixLane,
            seed: 7,
            lanes: None,
            per_lane: None,
            dense_gaps_m: None,
            sparse_gaps_m: None,
            lane_speeds: None,
            lane_width: None,
        }
    }
}

impl ScenarioSection {
    pub fn params(&self) -> SixLaneParams {
        let mut p = match self.preset {
            Preset::SixLane => SixLaneParams::default(),
            Preset::SingleLane => SixLaneParams::single_lane(self.per_lane.unwrap_or(300)),
        };
        if let Some(l) = self.lanes {
            p.lanes = l;
        }
        if let Some(n) = self.per_lane {
            p.per_lane = n;
        }
        if let Some(g) = self.dense_gaps_m {
            p.dense_gaps_m = g;
        }
        if let Some(g) = self.sparse_gaps_m {
            p.sparse_gaps_m = g;
        }
        if let Some(v) = &self.lane_speeds {
            p.lane_speeds = v.clone();
        }
        if let Some(w) = self.lane_width {
            p.lane_width = w;
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelSection {
    #[serde(flatten)]
    pub model: ChannelModel,
    /// Target channel load as a fraction of airtime.
    pub gamma_frac: f64,
    pub airtime_s: f64,
    /// Keys matching no channel field; rejected on use. Flattening rules out
    /// `deny_unknown_fields` here.
    #[serde(flatten, skip_serializing)]
    pub unknown: BTreeMap<String, serde_json::Value>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            model: ChannelModel::default(),
            gamma_frac: 0.6,
            airtime_s: DEFAULT_AIRTIME_S,
            unknown: BTreeMap::new(),
        }
    }
}

impl ChannelSection {
    /// Load target in msg/s.
    pub fn gamma(&self) -> Result<f64> {
        if let Some(k) = self.unknown.keys().next() {
            return Err(Error::config(format!("unknown channel key `{k}`")));
        }
        if !(self.gamma_frac > 0.0) || !(self.airtime_s > 0.0) {
            return Err(Error::config("gamma_frac and airtime_s must be positive"));
        }
        Ok(self.gamma_frac / self.airtime_s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityVariant {
    #[default]
    PairWeightedLog,
    AlphaFair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilitySection {
    pub variant: UtilityVariant,
    pub alpha_i: f64,
    pub alpha_v: f64,
    /// Per-vehicle weights of the alpha-fair family; all ones when absent.
    pub weights: Option<Vec<f64>>,
}

impl Default for UtilitySection {
    fn default() -> Self {
        UtilitySection {
            variant: UtilityVariant::PairWeightedLog,
            alpha_i: 1.0,
            alpha_v: 1.0,
            weights: None,
        }
    }
}

impl UtilitySection {
    pub fn build(&self, s: &Scenario) -> Result<UtilitySpec> {
        match self.variant {
            UtilityVariant::PairWeightedLog => UtilitySpec::pair_weighted_log(s, self.alpha_v),
            UtilityVariant::AlphaFair => {
                let w = self.weights.clone().unwrap_or_else(|| vec![1.0; s.len()]);
                if w.len() != s.len() {
                    return Err(Error::config(format!(
                        "utility.weights has {} entries for {} vehicles",
                        w.len(),
                        s.len()
                    )));
                }
                UtilitySpec::alpha_fair(w, self.alpha_i)
            }
        }
    }
}

/// Starting (or frozen) transmit power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerInit {
    Named(PowerLevel),
    Dbm(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerLevel {
    Floor,
    Median,
    Ceiling,
}

impl PowerInit {
    pub fn resolve(&self, g: &LinkGraph) -> Vec<f64> {
        match self {
            PowerInit::Named(PowerLevel::Floor) => vec![g.power_floor(); g.len()],
            PowerInit::Named(PowerLevel::Ceiling) => vec![g.power_ceiling(); g.len()],
            PowerInit::Named(PowerLevel::Median) => median_levels(g),
            PowerInit::Dbm(p) => vec![p.clamp(g.power_floor(), g.power_ceiling()); g.len()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    /// Dual step of the rate controller.
    pub epsilon: f64,
    /// Dual step of the power controller. Per-group utilities are far smaller
    /// than a vehicle's summed utility, so this is much finer than `epsilon`.
    pub power_epsilon: f64,
    pub rounds: usize,
    pub price_set: PriceSet,
    pub mu_floor: f64,
    pub mu_max: f64,
    /// Frozen rate of every vehicle in power-only runs, msg/s.
    pub fixed_rate: f64,
    pub initial_power: PowerInit,
    pub level_cap: Option<f64>,
    pub noise: Option<LoadNoise>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            epsilon: 2.5e-4,
            power_epsilon: 1e-6,
            rounds: 2000,
            price_set: PriceSet::Sense,
            mu_floor: 0.1,
            mu_max: 10.0,
            fixed_rate: 5.0,
            initial_power: PowerInit::Named(PowerLevel::Median),
            level_cap: None,
            noise: None,
        }
    }
}

impl ControllerSection {
    pub fn bounds(&self) -> RateBounds {
        RateBounds {
            floor: self.mu_floor,
            max: self.mu_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub alpha_l: f64,
    pub beta_l: f64,
    /// Target total rate, msg/s; the load target when absent.
    pub r_g: Option<f64>,
    pub r_init: Option<f64>,
    pub fixed_power: f64,
    pub feedback: Feedback,
    pub rounds: Option<usize>,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let d = LimericParams::default();
        BaselineSection {
            alpha_l: d.alpha_l,
            beta_l: d.beta_l,
            r_g: None,
            r_init: None,
            fixed_power: d.fixed_power,
            feedback: d.feedback,
            rounds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub stride: usize,
    pub keep_snapshots: bool,
    pub dump_links: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            stride: 1,
            keep_snapshots: true,
            dump_links: false,
        }
    }
}

impl OutputSection {
    pub fn record(&self) -> RecordOptions {
        RecordOptions {
            stride: self.stride,
            keep_snapshots: self.keep_snapshots,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: Option<ScenarioSection>,
    pub scenario_file: Option<PathBuf>,
    pub channel: ChannelSection,
    pub utility: UtilitySection,
    pub controller: ControllerSection,
    pub joint: JointConfig,
    pub baseline: BaselineSection,
    pub output: OutputSection,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Config = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if let (Some(f), Some(dir)) = (&cfg.scenario_file, path.parent()) {
            if f.is_relative() {
                cfg.scenario_file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Rate,
    Power,
    Joint,
    Limeric,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Rate => "rate",
            Algo::Power => "power",
            Algo::Joint => "joint",
            Algo::Limeric => "limeric",
        }
    }
}

/// A configured scenario with its link graph and utilities.
pub struct Simulation {
    pub config: Config,
    pub seed: u64,
    pub scenario: Scenario,
    pub graph: LinkGraph,
    pub utility: UtilitySpec,
    pub gamma: f64,
}

impl Simulation {
    /// `seed` overrides the scenario section's seed (ignored with a scenario
    /// file, whose positions are fixed).
    pub fn new(config: Config, seed: Option<u64>) -> Result<Self> {
        let (scenario, seed) = match (&config.scenario_file, &config.scenario) {
            (Some(_), Some(_)) => {
                return Err(Error::config("give either scenario or scenario_file, not both"));
            }
            (Some(f), None) => {
                let s = Scenario::load(f)?;
                let seed = seed.unwrap_or(s.seed);
                (s, seed)
            }
            (None, sec) => {
                let sec = sec.clone().unwrap_or_default();
                let seed = seed.unwrap_or(sec.seed);
                (generate_six_lane(&sec.params(), seed)?, seed)
            }
        };
        let bounds = config.controller.bounds();
        bounds.validate()?;
        let gamma = config.channel.gamma()?;
        let graph = build_link_graph(&scenario, &config.channel.model)?;
        let utility = config.utility.build(&scenario)?;
        Ok(Simulation {
            config,
            seed,
            scenario,
            graph,
            utility,
            gamma,
        })
    }

    pub fn run(&self, algo: Algo) -> Result<RunRecord> {
        let c = &self.config.controller;
        let bounds = c.bounds();
        let record = self.config.output.record();
        let g = &self.graph;
        let u = &self.utility;
        let mut rec = match algo {
            Algo::Rate => {
                let p = c.initial_power.resolve(g);
                let state = ControllerState::initial(p, c.epsilon, self.gamma, bounds);
                let params = RateParams {
                    price_set: c.price_set,
                    bounds,
                    noise: c.noise,
                    record,
                };
                run_rate_control(state, g, u, c.rounds, &params)?
            }
            Algo::Power => {
                let p = c.initial_power.resolve(g);
                let mu = bounds.clamp(c.fixed_rate);
                if mu > self.gamma {
                    return Err(Error::Infeasible(format!(
                        "fixed_rate {mu} alone exceeds the load target {}",
                        self.gamma
                    )));
                }
                let state = PowerState::initial(vec![mu; g.len()], p, c.power_epsilon, self.gamma);
                let params = PowerParams {
                    level_cap: c.level_cap,
                    record,
                };
                run_power_control(state, g, u, c.rounds, &params)?
            }
            Algo::Joint => {
                let params = JointParams {
                    epsilon: c.epsilon,
                    power_epsilon: c.power_epsilon,
                    gamma: self.gamma,
                    price_set: c.price_set,
                    bounds,
                    level_cap: c.level_cap,
                    config: self.config.joint.clone(),
                    record,
                };
                run_joint(g, u, None, &params)?
            }
            Algo::Limeric => {
                let b = &self.config.baseline;
                let params = LimericParams {
                    alpha_l: b.alpha_l,
                    beta_l: b.beta_l,
                    r_g: b.r_g.unwrap_or(self.gamma),
                    r_init: b.r_init,
                    fixed_power: b.fixed_power,
                    feedback: b.feedback,
                };
                let mut r = run_baseline(g, u, &params, &bounds, b.rounds.unwrap_or(c.rounds), record)?;
                // the baseline's own target is in total rate; report against
                // the load target like every other run
                r.gamma = self.gamma;
                r
            }
        };
        rec.airtime_s = self.config.channel.airtime_s;
        rec.seed = Some(self.seed);
        rec.config = Some(serde_json::to_value(&self.config).map_err(|e| Error::json("<config>", e))?);
        Ok(rec)
    }

    /// Joint control against the fixed-power baseline on the same scenario.
    pub fn compare(&self) -> Result<(RunRecord, RunRecord, serde_json::Value)> {
        let joint = self.run(Algo::Joint)?;
        let lim = self.run(Algo::Limeric)?;
        let air = self.config.channel.airtime_s;
        let side = |r: &RunRecord| {
            let st = compute_awareness_coverage(&self.graph, &r.final_state.p);
            json!({
                "rho": r.tail.rho,
                "max_load_frac": r.max_tail_load() * air,
                "awareness_iqr": st.awareness_quartiles.iqr(),
                "coverage_iqr": st.coverage_quartiles.iqr(),
                "awareness_median": st.awareness_quartiles.median,
            })
        };
        let (a, b) = (side(&joint), side(&lim));
        let delta = |k: &str| a[k].as_f64().unwrap_or(f64::NAN) - b[k].as_f64().unwrap_or(f64::NAN);
        let diff = json!({
            "joint": a,
            "limeric": b,
            "joint_minus_limeric": {
                "rho": delta("rho"),
                "max_load_frac": delta("max_load_frac"),
                "awareness_iqr": delta("awareness_iqr"),
                "coverage_iqr": delta("coverage_iqr"),
            },
        });
        Ok((joint, lim, diff))
    }
}
