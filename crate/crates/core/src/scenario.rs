//! Vehicle layouts on a wrap-around multi-lane road.
//!
//! Positions are static for the lifetime of a run. Longitudinal coordinates
//! live on a ring of circumference `road_length`; lateral coordinates are the
//! lane index times the lane width.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: usize,
    pub lane: usize,
    /// Longitudinal position in meters, `0 <= x < road_length`.
    pub x: f64,
    /// Lateral position in meters.
    pub y: f64,
    /// Signed speed in m/s; the sign is the direction of travel.
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub road_length: f64,
    pub lane_count: usize,
    pub lane_width: f64,
    pub seed: u64,
    pub vehicles: Vec<Vehicle>,
}

/// Parameters of the dense-sparse-dense-sparse highway layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SixLaneParams {
    pub lanes: usize,
    pub per_lane: usize,
    pub dense_gaps_m: [f64; 2],
    pub sparse_gaps_m: [f64; 2],
    pub lane_speeds: Vec<f64>,
    pub lane_width: f64,
}

impl Default for SixLaneParams {
    fn default() -> Self {
        SixLaneParams {
            lanes: 6,
            per_lane: 300,
            dense_gaps_m: [4.0, 5.0],
            sparse_gaps_m: [16.0, 17.0],
            lane_speeds: vec![30.0, 32.0, 34.0, -30.0, -32.0, -34.0],
            lane_width: 4.0,
        }
    }
}

impl SixLaneParams {
    /// A single-lane variant of the default layout with `per_lane` vehicles.
    pub fn single_lane(per_lane: usize) -> Self {
        SixLaneParams {
            lanes: 1,
            per_lane,
            lane_speeds: vec![30.0],
            ..Default::default()
        }
    }

    /// Segment sizes of the 0.4/0.1/0.4/0.1 dense-sparse pattern.
    fn segments(&self) -> Result<[usize; 4]> {
        if self.per_lane == 0 || !self.per_lane.is_multiple_of(10) {
            return Err(Error::config(format!(
                "per_lane = {} cannot be split into the 0.4/0.1/0.4/0.1 dense-sparse pattern",
                self.per_lane
            )));
        }
        let dense = self.per_lane / 10 * 4;
        let sparse = self.per_lane / 10;
        Ok([dense, sparse, dense, sparse])
    }
}

/// Builds the dense-sparse highway. Gaps are drawn per vehicle from a seeded
/// ChaCha stream; the ring circumference is the largest per-lane gap sum so
/// that no lane overlaps itself across the seam.
pub fn generate_six_lane(params: &SixLaneParams, seed: u64) -> Result<Scenario> {
    if params.lanes == 0 {
        return Err(Error::config("lanes must be at least 1"));
    }
    if params.lane_speeds.len() != params.lanes {
        return Err(Error::config(format!(
            "lane_speeds has {} entries for {} lanes",
            params.lane_speeds.len(),
            params.lanes
        )));
    }
    if !(params.lane_width > 0.0) {
        return Err(Error::config("lane_width must be positive"));
    }
    for g in params.dense_gaps_m.iter().chain(&params.sparse_gaps_m) {
        if !(*g > 0.0) || !g.is_finite() {
            return Err(Error::config("gap sizes must be positive and finite"));
        }
    }
    let segments = params.segments()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lane_gaps = Vec::with_capacity(params.lanes);
    for _ in 0..params.lanes {
        let mut gaps = Vec::with_capacity(params.per_lane);
        for (s, &count) in segments.iter().enumerate() {
            let choices = if s % 2 == 0 {
                params.dense_gaps_m
            } else {
                params.sparse_gaps_m
            };
            for _ in 0..count {
                let pick = usize::from(rng.gen_bool(0.5));
                gaps.push(choices[pick]);
            }
        }
        lane_gaps.push(gaps);
    }

    let road_length = lane_gaps
        .iter()
        .map(|g| g.iter().sum::<f64>())
        .fold(0.0, f64::max);

    let mut vehicles = Vec::with_capacity(params.lanes * params.per_lane);
    for (lane, gaps) in lane_gaps.iter().enumerate() {
        let mut x = 0.0;
        for gap in gaps {
            vehicles.push(Vehicle {
                id: vehicles.len(),
                lane,
                x,
                y: lane as f64 * params.lane_width,
                v: params.lane_speeds[lane],
            });
            x += gap;
        }
    }

    Ok(Scenario {
        road_length,
        lane_count: params.lanes,
        lane_width: params.lane_width,
        seed,
        vehicles,
    })
}

impl Scenario {
    /// Builds a scenario from explicit vehicles, re-numbering ids in order.
    pub fn from_vehicles(
        road_length: f64,
        lane_count: usize,
        lane_width: f64,
        vehicles: impl IntoIterator<Item = (usize, f64, f64)>,
    ) -> Result<Self> {
        let vehicles = vehicles
            .into_iter()
            .enumerate()
            .map(|(id, (lane, x, v))| Vehicle {
                id,
                lane,
                x,
                y: lane as f64 * lane_width,
                v,
            })
            .collect();
        let s = Scenario {
            road_length,
            lane_count,
            lane_width,
            seed: 0,
            vehicles,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.road_length > 0.0) || !self.road_length.is_finite() {
            return Err(Error::config("road_length must be positive"));
        }
        if self.vehicles.is_empty() {
            return Err(Error::config("scenario has no vehicles"));
        }
        for (k, v) in self.vehicles.iter().enumerate() {
            if v.id != k {
                return Err(Error::config(format!(
                    "vehicle ids must be 0..n in order; found {} at index {k}",
                    v.id
                )));
            }
            if !(0.0..self.road_length).contains(&v.x) {
                return Err(Error::config(format!(
                    "vehicle {k} at x = {} lies outside [0, {})",
                    v.x, self.road_length
                )));
            }
            if v.lane >= self.lane_count {
                return Err(Error::config(format!(
                    "vehicle {k} in lane {} of {}",
                    v.lane, self.lane_count
                )));
            }
            if !v.y.is_finite() || !v.v.is_finite() {
                return Err(Error::config(format!("vehicle {k} has non-finite state")));
            }
        }
        Ok(())
    }

    /// Signed shortest longitudinal displacement from `i` to `j` on the ring,
    /// in `(-road_length/2, road_length/2]`.
    pub fn displacement(&self, i: usize, j: usize) -> f64 {
        let l = self.road_length;
        let mut dx = (self.vehicles[j].x - self.vehicles[i].x).rem_euclid(l);
        if dx > l / 2.0 {
            dx -= l;
        }
        dx
    }

    /// Euclidean distance with wrap-around along the road.
    pub fn wrap_distance(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::domain(format!(
                "self-distance of vehicle {i} is undefined"
            )));
        }
        Ok(self.distance_unchecked(i, j))
    }

    pub(crate) fn distance_unchecked(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.vehicles[i], &self.vehicles[j]);
        let raw = (a.x - b.x).abs();
        let dx = raw.min(self.road_length - raw);
        let dy = (a.y - b.y).abs();
        dx.hypot(dy)
    }

    /// Rate at which the longitudinal gap between `i` and `j` shrinks.
    /// Positive for approaching pairs, zero when they share a position.
    pub fn closing_speed(&self, i: usize, j: usize) -> f64 {
        let dx = self.displacement(i, j);
        if dx == 0.0 {
            return 0.0;
        }
        dx.signum() * (self.vehicles[i].v - self.vehicles[j].v)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}
