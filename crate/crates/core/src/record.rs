//! Per-round trajectories and their running statistics.

use serde::{Deserialize, Serialize};

/// Default per-message airtime used to express loads as channel fractions:
/// 300 B at 6 Mbps plus PHY/MAC overhead.
pub const DEFAULT_AIRTIME_S: f64 = 0.5e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub mu: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub load: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gprime: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub k: usize,
    pub rho: f64,
}

/// Per-vehicle averages over the final half of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TailAverages {
    pub start: usize,
    pub rounds: usize,
    pub mu: Vec<f64>,
    pub p: Vec<f64>,
    pub load: Vec<f64>,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub mu: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo: String,
    pub n: usize,
    /// Load target, msg/s.
    pub gamma: f64,
    pub airtime_s: f64,
    pub snapshots: Vec<Snapshot>,
    /// Objective at every round.
    pub rho: Vec<f64>,
    /// Largest instantaneous load at every round.
    pub max_load: Vec<f64>,
    /// Largest per-vehicle running-average load at every round.
    pub running_max_load: Vec<f64>,
    pub tail: TailAverages,
    pub final_state: FinalState,
    pub outer: Vec<OuterStep>,
    pub converged: Option<bool>,
    pub config: Option<serde_json::Value>,
    pub seed: Option<u64>,
}

impl RunRecord {
    pub fn rounds(&self) -> usize {
        self.rho.len()
    }

    /// Mean objective over the final half of the run.
    pub fn rho_avg(&self) -> f64 {
        self.tail.rho
    }

    pub fn max_tail_load(&self) -> f64 {
        self.tail.load.iter().copied().fold(0.0, f64::max)
    }

    /// First round after which the largest running-average load stays within
    /// `±band` (relative) of `gamma`.
    pub fn rounds_to_band(&self, band: f64) -> Option<usize> {
        let (lo, hi) = (self.gamma * (1.0 - band), self.gamma * (1.0 + band));
        let mut first = None;
        for (t, &m) in self.running_max_load.iter().enumerate() {
            if (lo..=hi).contains(&m) {
                first.get_or_insert(t);
            } else {
                first = None;
            }
        }
        first
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordOptions {
    /// Keep a full snapshot every `stride` rounds; scalar series are always
    /// kept for every round.
    pub stride: usize,
    pub keep_snapshots: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions {
            stride: 1,
            keep_snapshots: true,
        }
    }
}

pub(crate) struct Recorder {
    record: RunRecord,
    opts: RecordOptions,
    cum_load: Vec<f64>,
    tail_mu: Vec<f64>,
    tail_p: Vec<f64>,
    tail_load: Vec<f64>,
    tail_rho: f64,
}

pub(crate) struct RoundView<'a> {
    pub mu: &'a [f64],
    pub p: &'a [f64],
    pub lambda: &'a [f64],
    pub load: &'a [f64],
    pub gprime: Option<&'a [usize]>,
    pub rho: f64,
}

impl Recorder {
    pub fn new(algo: &str, n: usize, gamma: f64, total_rounds: usize, opts: RecordOptions) -> Self {
        Recorder {
            record: RunRecord {
                algo: algo.to_string(),
                n,
                gamma,
                airtime_s: DEFAULT_AIRTIME_S,
                snapshots: Vec::new(),
                rho: Vec::with_capacity(total_rounds),
                max_load: Vec::with_capacity(total_rounds),
                running_max_load: Vec::with_capacity(total_rounds),
                tail: TailAverages {
                    start: total_rounds / 2,
                    ..Default::default()
                },
                final_state: FinalState {
                    mu: Vec::new(),
                    p: Vec::new(),
                    lambda: Vec::new(),
                },
                outer: Vec::new(),
                converged: None,
                config: None,
                seed: None,
            },
            opts: RecordOptions {
                stride: opts.stride.max(1),
                ..opts
            },
            cum_load: vec![0.0; n],
            tail_mu: vec![0.0; n],
            tail_p: vec![0.0; n],
            tail_load: vec![0.0; n],
            tail_rho: 0.0,
        }
    }

    pub fn rounds(&self) -> usize {
        self.record.rho.len()
    }

    pub fn push(&mut self, r: RoundView<'_>) {
        let t = self.record.rho.len();
        self.record.rho.push(r.rho);
        self.record
            .max_load
            .push(r.load.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let rounds = (t + 1) as f64;
        let mut running_max = f64::NEG_INFINITY;
        for (c, &l) in self.cum_load.iter_mut().zip(r.load) {
            *c += l;
            running_max = running_max.max(*c / rounds);
        }
        self.record.running_max_load.push(running_max);
        if t >= self.record.tail.start {
            for k in 0..self.cum_load.len() {
                self.tail_mu[k] += r.mu[k];
                self.tail_p[k] += r.p[k];
                self.tail_load[k] += r.load[k];
            }
            self.tail_rho += r.rho;
        }
        if self.opts.keep_snapshots && t.is_multiple_of(self.opts.stride) {
            self.record.snapshots.push(Snapshot {
                t,
                mu: r.mu.to_vec(),
                p: r.p.to_vec(),
                lambda: r.lambda.to_vec(),
                load: r.load.to_vec(),
                gprime: r.gprime.map(<[usize]>::to_vec),
            });
        }
    }

    pub fn finish(mut self, mu: &[f64], p: &[f64], lambda: &[f64]) -> RunRecord {
        let rounds = self.record.rho.len();
        let start = self.record.tail.start.min(rounds);
        let count = rounds - start;
        let scale = if count == 0 { 0.0 } else { 1.0 / count as f64 };
        let avg = |v: Vec<f64>| v.into_iter().map(|x| x * scale).collect::<Vec<f64>>();
        self.record.tail = TailAverages {
            start,
            rounds: count,
            mu: avg(self.tail_mu),
            p: avg(self.tail_p),
            load: avg(self.tail_load),
            rho: self.tail_rho * scale,
        };
        self.record.final_state = FinalState {
            mu: mu.to_vec(),
            p: p.to_vec(),
            lambda: lambda.to_vec(),
        };
        self.record
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view<'a>(v: &'a [f64], rho: f64) -> RoundView<'a> {
        RoundView {
            mu: v,
            p: v,
            lambda: v,
            load: v,
            gprime: None,
            rho,
        }
    }

    #[test]
    fn tail_covers_final_half() {
        let mut r = Recorder::new("x", 1, 1.0, 4, RecordOptions::default());
        for k in 0..4 {
            r.push(view(&[k as f64], k as f64));
        }
        let rec = r.finish(&[0.0], &[0.0], &[0.0]);
        assert_eq!(rec.tail.start, 2);
        assert_eq!(rec.tail.load, vec![2.5]);
        assert_eq!(rec.tail.rho, 2.5);
        assert_eq!(rec.running_max_load, vec![0.0, 0.5, 1.0, 1.5]);
        assert_eq!(rec.snapshots.len(), 4);
        assert_eq!(rec.snapshots[3].t, 3);
    }

    #[test]
    fn stride_thins_snapshots_only() {
        let opts = RecordOptions {
            stride: 3,
            keep_snapshots: true,
        };
        let mut r = Recorder::new("x", 1, 1.0, 7, opts);
        for _ in 0..7 {
            r.push(view(&[1.0], 0.0));
        }
        let rec = r.finish(&[1.0], &[1.0], &[1.0]);
        assert_eq!(rec.rho.len(), 7);
        let ts: Vec<usize> = rec.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0, 3, 6]);
    }

    #[test]
    fn band_entry_must_persist() {
        let mut rec = Recorder::new("x", 1, 1.0, 0, RecordOptions::default()).finish(&[], &[], &[]);
        rec.running_max_load = vec![0.2, 0.97, 1.2, 1.01, 0.99];
        assert_eq!(rec.rounds_to_band(0.05), Some(3));
        rec.running_max_load.push(2.0);
        assert_eq!(rec.rounds_to_band(0.05), None);
    }
}
