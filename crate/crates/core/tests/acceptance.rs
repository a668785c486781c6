//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! process exits nonzero if any check fails.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsrc_ctl::baseline::{run_baseline, Feedback, LimericParams};
use dsrc_ctl::joint::{joint_initial_point, rate_only, run_joint, JointParams};
use dsrc_ctl::metrics::{compute_awareness_coverage, fairness_ratio};
use dsrc_ctl::oracle::{
    oracle_cut, oracle_power_opt, oracle_rate_opt, oracle_subproblem, SmallInstance, Subproblem,
};
use dsrc_ctl::power_control::{
    optimal_cut, run_power_control, CutScores, GroupStructure, PowerParams, PowerState,
};
use dsrc_ctl::rate_control::{run_rate_control, ControllerState, RateParams};
use dsrc_ctl::record::{RecordOptions, RunRecord};
use dsrc_ctl::{
    build_link_graph, Algo, ChannelModel, Config, LinkGraph, RateBounds, Scenario, Simulation, UtilitySpec,
};

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn line_instance(xs: &[(f64, f64)], model: &ChannelModel) -> (Scenario, LinkGraph, UtilitySpec) {
    let s = Scenario::from_vehicles(100_000.0, 1, 4.0, xs.iter().map(|&(x, v)| (0, x, v))).unwrap();
    let g = build_link_graph(&s, model).unwrap();
    let u = UtilitySpec::pair_weighted_log(&s, 1.0).unwrap();
    (s, g, u)
}

fn sci(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn quiet() -> RecordOptions {
    RecordOptions {
        stride: 1,
        keep_snapshots: false,
    }
}

fn cut_solver_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vectors: Vec<Vec<f64>> = (0..1000)
        .map(|_| {
            let len = rng.gen_range(1..=12);
            (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        })
        .collect();
    let start = Instant::now();
    let mut bad = 0;
    for f in &vectors {
        let scores = CutScores::new(f.clone());
        let cut = optimal_cut(&scores);
        let want = oracle_cut(f);
        if cut != want.cut || scores.value(cut) != want.value {
            bad += 1;
        }
    }
    let took = start.elapsed();
    outcome(
        bad == 0 && took < Duration::from_secs(1),
        format!("{bad}/1000 mismatches in {took:?}"),
    )
}

fn relaxation_tightness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // eighths keep every sum exact in any order
    let dyadic = |rng: &mut ChaCha8Rng, hi: i32| rng.gen_range(0..=hi * 8) as f64 / 8.0;
    let mut bad = 0;
    for _ in 0..200 {
        let levels = rng.gen_range(1..=6);
        let nr = rng.gen_range(levels..=8);
        let ns = rng.gen_range(0..=8);
        let mut receivers: Vec<(f64, f64)> = (0..levels).map(|l| (l as f64, 0.0)).collect();
        receivers.extend((levels..nr).map(|_| (rng.gen_range(0..levels) as f64, 0.0)));
        for r in receivers.iter_mut() {
            r.1 = dyadic(&mut rng, 2);
        }
        // sensor thresholds fall between, on, and beyond the levels
        let sensors: Vec<(f64, f64)> = (0..ns)
            .map(|_| (rng.gen_range(-2..=2 * levels) as f64 / 2.0, dyadic(&mut rng, 2)))
            .collect();
        let price_scale = dyadic(&mut rng, 1);
        let sp = Subproblem {
            receivers: receivers.clone(),
            sensors: sensors.clone(),
            price_scale,
        };

        let rx: Vec<(usize, f64)> = receivers.iter().enumerate().map(|(j, r)| (j, r.0)).collect();
        let sx: Vec<(usize, f64)> = sensors.iter().enumerate().map(|(m, s)| (m, s.0)).collect();
        let gs = GroupStructure::from_thresholds(usize::MAX, &rx, &sx, f64::INFINITY);
        let gu: Vec<f64> = gs
            .receivers
            .iter()
            .map(|g| g.iter().map(|&j| receivers[j].1).sum())
            .collect();
        let prices: Vec<f64> = sensors.iter().map(|s| s.1).collect();
        let scores = CutScores::compute(&gs, &gu, &prices, 1.0, price_scale);
        let got = scores.value(optimal_cut(&scores));
        if got != oracle_subproblem(&sp).unwrap() {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad}/200 mismatches"))
}

fn rate_optimality() -> Outcome {
    let start = Instant::now();
    let (_, g, u) = line_instance(
        &[(0.0, 30.0), (100.0, 20.0), (200.0, -10.0), (300.0, 0.0)],
        &ChannelModel::default(),
    );
    let gamma = 6.0;
    let p = vec![g.beta(0, 1); 4];
    let inst = SmallInstance {
        graph: g.clone(),
        utility: u.clone(),
        gamma,
        mu: None,
        p: Some(p.clone()),
        bounds: RateBounds::default(),
    };
    let star = oracle_rate_opt(&inst, 0.0).unwrap().rho;
    let tol = 1e-3;
    let gaps: Vec<f64> = [0.1, 0.05, 0.01]
        .iter()
        .map(|&eps| {
            let st = ControllerState::initial(p.clone(), eps, gamma, RateBounds::default());
            let params = RateParams {
                record: quiet(),
                ..Default::default()
            };
            let rec = run_rate_control(st, &g, &u, 20_000, &params).unwrap();
            star - rec.tail.rho
        })
        .collect();
    let took = start.elapsed();
    let pass =
        gaps.iter().all(|&x| x >= -tol) && gaps[2] <= 0.5 * gaps[0] + tol && took < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "rho* {star:.6}, gaps [{}] at eps 0.1/0.05/0.01, {took:?}",
            sci(&gaps)
        ),
    )
}

fn load_convergence() -> Outcome {
    let start = Instant::now();
    let mut cfg = Config::default();
    cfg.output.keep_snapshots = false;
    let sim = Simulation::new(cfg, None).unwrap();
    let rec = sim.run(Algo::Rate).unwrap();
    let took = start.elapsed();
    let air = rec.airtime_s;
    let target = sim.config.channel.gamma_frac;
    let last = rec.running_max_load.last().copied().unwrap_or(0.0) * air;
    let pass = sim.scenario.len() == 1800
        && rec.rounds() == 2000
        && last <= target * 1.05
        && last >= target * 0.95
        && took < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "{} vehicles, largest running-average load fraction {last:.4} after {} rounds, {took:?}",
            sim.scenario.len(),
            rec.rounds()
        ),
    )
}

fn power_optimality() -> Outcome {
    let start = Instant::now();
    let (_, g, u) = line_instance(
        &[
            (0.0, 30.0),
            (25.0, 20.0),
            (50.0, -10.0),
            (120.0, 0.0),
            (150.0, 15.0),
        ],
        &ChannelModel::default(),
    );
    let (mu, gamma) = (2.0, 4.0);
    let levels_ok = (0..5).all(|i| dsrc_ctl::power_control::build_groups(&g, i, None).g_max() <= 4);
    let inst = SmallInstance {
        graph: g.clone(),
        utility: u.clone(),
        gamma,
        mu: Some(vec![mu; 5]),
        p: None,
        bounds: RateBounds::default(),
    };
    let star = oracle_power_opt(&inst).unwrap().rho;
    let mut gaps = Vec::new();
    let mut worst_violation: f64 = 0.0;
    for eps in [0.1, 0.05, 0.01] {
        let st = PowerState::initial(vec![mu; 5], vec![g.power_floor(); 5], eps, gamma);
        let params = PowerParams {
            level_cap: None,
            record: quiet(),
        };
        let rec = run_power_control(st, &g, &u, 20_000, &params).unwrap();
        gaps.push(star - rec.tail.rho);
        worst_violation = worst_violation.max((rec.max_tail_load() - gamma).max(0.0));
    }
    let took = start.elapsed();
    let tol = 1e-9;
    let pass = levels_ok
        && gaps.iter().all(|&x| x >= -tol)
        && gaps.windows(2).all(|w| w[1] <= w[0] + tol)
        && worst_violation <= 0.02 * gamma
        && took < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "rho* {star:.6}, gaps [{}] at eps 0.1/0.05/0.01, violation {:.2e} of gamma, {took:?}",
            sci(&gaps),
            worst_violation / gamma
        ),
    )
}

fn limeric_underutilization() -> Outcome {
    let k = 50;
    let m = vec![vec![-10.0; k]; k];
    let g = LinkGraph::from_matrices(&m, &m, -40.0, 20.0).unwrap();
    let rows = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
        .collect();
    let u = UtilitySpec::pair_weighted_log_from(rows).unwrap();
    let params = LimericParams {
        alpha_l: 0.1,
        beta_l: 0.001,
        feedback: Feedback::Local,
        ..Default::default()
    };
    let rec = run_baseline(&g, &u, &params, &RateBounds::default(), 5000, quiet()).unwrap();
    let total: f64 = rec.final_state.mu.iter().sum();
    let want = params.r_g * (params.beta_l * k as f64) / (params.alpha_l + params.beta_l * k as f64);
    let rel = (total - want).abs() / want;
    outcome(
        rel <= 1e-3 && total < params.r_g,
        format!(
            "total rate {total:.4} vs fixed point {want:.4} (r_g {}), rel err {rel:.2e}",
            params.r_g
        ),
    )
}

fn bottleneck_fairness() -> Outcome {
    // one receiver in the middle hears both others; decoding and sensing
    // share one threshold so the two links form a single domain
    let model = ChannelModel {
        sense_threshold_dbm: -86.0,
        ..Default::default()
    };
    let (s, g, u) = line_instance(&[(900.0, 30.0), (1250.0, -10.0), (1000.0, 20.0)], &model);
    let p = vec![g.alpha(0, 2), g.alpha(1, 2), g.power_floor()];
    let one_domain =
        g.receive_set(&p, 0) == vec![2] && g.receive_set(&p, 1) == vec![2] && g.sense_set(&p, 2) == vec![2];
    let eps = Config::default().controller.epsilon;
    let st = ControllerState::initial(p, eps, 6.0, RateBounds::default());
    let params = RateParams {
        record: quiet(),
        ..Default::default()
    };
    let rec = run_rate_control(st, &g, &u, 20_000, &params).unwrap();
    let (kept, _) = fairness_ratio(&s, &rec.tail.mu, &[(0, 2), (1, 2)]);
    if kept.len() != 2 {
        return outcome(false, "pairs not closing".into());
    }
    let (a, b) = (kept[0].product, kept[1].product);
    let rel = (a - b).abs() / a.max(b);
    outcome(
        one_domain && rel <= 0.01,
        format!("products {a:.4} and {b:.4} at eps {eps}, rel diff {rel:.2e}"),
    )
}

fn joint_monotonicity() -> Outcome {
    let mut failures = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = rng.gen_range(4..=6);
        let mut x = 0.0;
        let xs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                x += rng.gen_range(20.0..120.0);
                (x, rng.gen_range(-30.0..30.0))
            })
            .collect();
        let gamma = rng.gen_range(4.0..10.0);
        let (_, g, u) = line_instance(&xs, &ChannelModel::default());
        let mut params = JointParams::new(0.05, gamma);
        params.record = quiet();
        let rec = run_joint(&g, &u, None, &params).unwrap();
        let monotone = rec
            .outer
            .windows(2)
            .all(|w| w[1].rho >= w[0].rho - 1e-6 * (1.0 + w[0].rho.abs()));
        let (mu0, p0) = joint_initial_point(&g, &params);
        let ro = rate_only(&g, &u, &mu0, &p0, &params).unwrap().rho;
        let beats = rec.tail.rho >= ro - 1e-6 * (1.0 + ro.abs());
        if !(monotone && beats) {
            failures.push(seed);
        }
    }
    outcome(failures.is_empty(), format!("failing seeds {failures:?} of 10"))
}

fn single_lane(airtime_s: f64) -> Simulation {
    let mut cfg: Config = serde_json::from_str(r#"{"scenario":{"preset":"single-lane"}}"#).unwrap();
    cfg.channel.airtime_s = airtime_s;
    Simulation::new(cfg, None).unwrap()
}

fn handshake_everywhere(g: &LinkGraph, rec: &RunRecord) -> bool {
    let mut seen = HashSet::new();
    rec.snapshots
        .iter()
        .map(|s| &s.p)
        .chain([&rec.final_state.p])
        .filter(|p| seen.insert(p.iter().map(|x| x.to_bits()).collect::<Vec<u64>>()))
        .all(|p| compute_awareness_coverage(g, p).handshake_holds())
}

fn awareness_iqrs(sim: &Simulation) -> (f64, f64, bool) {
    let joint = sim.run(Algo::Joint).unwrap();
    let lim = sim.run(Algo::Limeric).unwrap();
    let iqr = |r: &RunRecord| {
        compute_awareness_coverage(&sim.graph, &r.final_state.p)
            .awareness_quartiles
            .iqr()
    };
    let hs = handshake_everywhere(&sim.graph, &joint) && handshake_everywhere(&sim.graph, &lim);
    (iqr(&joint), iqr(&lim), hs)
}

fn awareness_equalization() -> Outcome {
    let sim = single_lane(Config::default().channel.airtime_s);
    let (j, l, hs) = awareness_iqrs(&sim);
    // informational: the same comparison with twice the airtime, where the
    // load target binds on a single lane
    let busy = single_lane(2.0 * Config::default().channel.airtime_s);
    let (bj, bl, bhs) = awareness_iqrs(&busy);
    outcome(
        sim.scenario.len() == 300 && j < l && hs,
        format!(
            "awareness IQR joint {j} vs limeric {l}, handshake {hs}; at doubled airtime joint {bj} vs limeric {bl}, handshake {bhs}"
        ),
    )
}

fn run_cli(config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_dsrc-ctl"))
        .args(["run", "--algo", "joint", "--seed", "11", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"scenario": {"preset": "single-lane"}, "controller": {"rounds": 300}}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if !(run_cli(&cfg, &a) && run_cli(&cfg, &b)) {
        return outcome(false, "cli run failed".into());
    }
    let ta = std::fs::read(a.join("trace.csv")).unwrap();
    let tb = std::fs::read(b.join("trace.csv")).unwrap();
    outcome(
        ta == tb && ta.len() > 100,
        format!(
            "trace.csv {} and {} bytes, identical {}",
            ta.len(),
            tb.len(),
            ta == tb
        ),
    )
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("cut solver exactness", cut_solver_exactness),
        ("relaxation tightness", relaxation_tightness),
        ("rate control optimality", rate_optimality),
        ("load convergence on the six-lane highway", load_convergence),
        ("power control optimality", power_optimality),
        ("LIMERIC under-utilization", limeric_underutilization),
        ("single-bottleneck fairness", bottleneck_fairness),
        ("joint monotonicity", joint_monotonicity),
        ("awareness equalization", awareness_equalization),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {name}: {}", k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
