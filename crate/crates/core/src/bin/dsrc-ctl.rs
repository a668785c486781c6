use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use dsrc_ctl::channel::dump_links;
use dsrc_ctl::io::emit;
use dsrc_ctl::oracle::{oracle_cut, oracle_power_opt, oracle_rate_opt, SmallInstance};
use dsrc_ctl::sim::{Algo, Config, Preset, ScenarioSection, Simulation};
use dsrc_ctl::{generate_six_lane, Error, Result};

#[derive(Parser)]
#[command(
    name = "dsrc-ctl",
    version,
    about = "Rate and power control for vehicular broadcast networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    SixLane,
    SingleLane,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Rate,
    Power,
    Joint,
    Limeric,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Cut,
    Rate,
    Power,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a scenario file.
    Generate {
        #[arg(long, value_enum, default_value = "six-lane")]
        preset: PresetArg,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        per_lane: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one controller and write its traces.
    Run {
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write links.csv with every pair's thresholds.
        #[arg(long)]
        dump_links: bool,
    },
    /// Solve a small instance by enumeration.
    Oracle {
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid offset of the rate oracle, in cells.
        #[arg(long, default_value_t = 0.0)]
        phase: f64,
    },
    /// Run joint control and the baseline on the same scenario.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Deserialize)]
struct CutInstance {
    f: Vec<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let io_err = |e| Error::Io {
        path: path.into(),
        source: e,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    std::fs::write(path, text + "\n").map_err(io_err)
}

fn run_one(sim: &Simulation, algo: Algo, out: &Path, links: bool) -> Result<()> {
    let rec = sim.run(algo)?;
    emit(&rec, Some(&sim.graph), out)?;
    if links || sim.config.output.dump_links {
        let path = out.join("links.csv");
        let f = File::create(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        dump_links(&sim.scenario, &sim.graph, BufWriter::new(f))
            .map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Generate {
            preset,
            seed,
            per_lane,
            out,
        } => {
            let sec = ScenarioSection {
                preset: match preset {
                    PresetArg::SixLane => Preset::SixLane,
                    PresetArg::SingleLane => Preset::SingleLane,
                },
                per_lane,
                ..Default::default()
            };
            generate_six_lane(&sec.params(), seed)?.save(&out)
        }
        Cmd::Run {
            algo,
            config,
            out,
            seed,
            dump_links,
        } => {
            let algo = match algo {
                AlgoArg::Rate => Algo::Rate,
                AlgoArg::Power => Algo::Power,
                AlgoArg::Joint => Algo::Joint,
                AlgoArg::Limeric => Algo::Limeric,
            };
            let sim = Simulation::new(Config::load(&config)?, seed)?;
            run_one(&sim, algo, &out, dump_links)
        }
        Cmd::Oracle {
            which,
            instance,
            out,
            phase,
        } => match which {
            Which::Cut => {
                let inst: CutInstance = read_json(&instance)?;
                write_json(&out, &oracle_cut(&inst.f))
            }
            Which::Rate => {
                let inst: SmallInstance = read_json(&instance)?;
                write_json(&out, &oracle_rate_opt(&inst, phase)?)
            }
            Which::Power => {
                let inst: SmallInstance = read_json(&instance)?;
                write_json(&out, &oracle_power_opt(&inst)?)
            }
        },
        Cmd::Compare { config, out, seed } => {
            let sim = Simulation::new(Config::load(&config)?, seed)?;
            let (joint, lim, diff) = sim.compare()?;
            emit(&joint, Some(&sim.graph), &out.join("joint"))?;
            emit(&lim, Some(&sim.graph), &out.join("limeric"))?;
            write_json(&out.join("compare.json"), &diff)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dsrc-ctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
