//! Offline product: per-leg samples, neighbour sets with steering
//! solutions, and safety certificates, with binary and JSON persistence.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic        8 bytes  "CWHFMT\0\0"
//! version      u32
//! fingerprint  32 bytes (SHA-256 of the scenario fields that shape the data)
//! j_bar        f64
//! dim          u32      (4 planar, 6 spatial)
//! n_legs       u32
//! per leg:
//!   bounds     12 x f64 (lower[6], upper[6])
//!   goal       8 x f64  (center[6], eps_r, eps_v)
//!   n, n_goal  u32, u32
//!   states     (n + n_goal) x 6 x f64
//!   certs      (n + n_goal) x (u8 safe, f64 theta, f64 t_h, 3 x f64 dv)
//!   edges      per sample: u32 count, then count x
//!              (u32 to, 3 x f64 dv1, 3 x f64 dv2, f64 duration, f64 cost)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwh::State;
use crate::geometry::StateSpaceBox;
use crate::reach::{build_neighbor_sets, Edge, NeighborSets, ReachSpec};
use crate::safety::CamSummary;
use crate::sampling::{sample_free, GoalRegion, SampleSet, SamplingError};
use crate::scenario::Scenario;
use crate::steering::SteeringSolution;

pub const MAGIC: &[u8; 8] = b"CWHFMT\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a precomputed data file")]
    BadMagic,
    #[error("unsupported data format version {0}")]
    BadVersion(u32),
    #[error("data file was built for a different scenario (fingerprint mismatch)")]
    FingerprintMismatch,
    #[error("malformed data file: {0}")]
    Malformed(String),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum PrecomputeError {
    #[error("leg {leg}: {source}")]
    Sampling {
        leg: usize,
        #[source]
        source: SamplingError,
    },
}

/// Offline data of one leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegData {
    pub bounds: StateSpaceBox,
    pub goal: GoalRegion,
    pub samples: SampleSet,
    /// Forward lists only; backward lists are rebuilt on load.
    #[serde(with = "forward_only")]
    pub neighbors: NeighborSets,
    pub certs: Vec<CamSummary>,
}

mod forward_only {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ns: &NeighborSets, s: S) -> Result<S::Ok, S::Error> {
        ns.fwd.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NeighborSets, D::Error> {
        Ok(NeighborSets::from_forward(Vec::<Vec<Edge>>::deserialize(d)?))
    }
}

impl LegData {
    /// Subset with the first `n` space samples, the first `n_goal` goal
    /// samples and only edges cheaper than `j_bar`.
    pub fn restricted(&self, n: usize, n_goal: usize, j_bar: f64) -> Self {
        let n = n.min(self.samples.n);
        let n_goal = n_goal.min(self.samples.n_goal);
        let old_n = self.samples.n;
        let map = |i: usize| -> Option<usize> {
            if i < n {
                Some(i)
            } else if i >= old_n && i < old_n + n_goal {
                Some(i - old_n + n)
            } else {
                None
            }
        };
        let keep: Vec<usize> = (0..n).chain(old_n..old_n + n_goal).collect();
        let states = keep.iter().map(|&i| self.samples.states[i]).collect();
        let certs = keep.iter().map(|&i| self.certs[i]).collect();
        let fwd = keep
            .iter()
            .map(|&i| {
                self.neighbors.fwd[i]
                    .iter()
                    .filter(|e| e.sol.cost < j_bar)
                    .filter_map(|e| map(e.to).map(|to| Edge { to, sol: e.sol }))
                    .collect()
            })
            .collect();
        Self {
            bounds: self.bounds,
            goal: self.goal,
            samples: SampleSet { states, n, n_goal },
            neighbors: NeighborSets::from_forward(fwd),
            certs,
        }
    }
}

/// Offline product for a whole scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedGraphData {
    #[serde(with = "hex_bytes")]
    pub fingerprint: [u8; 32],
    pub j_bar: f64,
    pub dim: u32,
    pub legs: Vec<LegData>,
}

mod hex_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let v = hex::decode(text).map_err(D::Error::custom)?;
        v.try_into().map_err(|_| D::Error::custom("fingerprint must be 32 bytes"))
    }
}

/// Counts reported after precomputation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSummary {
    pub legs: usize,
    pub samples: usize,
    pub edges: usize,
    pub certified_safe: usize,
}

impl PrecomputedGraphData {
    pub fn summary(&self) -> DataSummary {
        DataSummary {
            legs: self.legs.len(),
            samples: self.legs.iter().map(|l| l.samples.len()).sum(),
            edges: self.legs.iter().map(|l| l.neighbors.edge_count()).sum(),
            certified_safe: self.legs.iter().map(|l| l.certs.iter().filter(|c| c.safe).count()).sum(),
        }
    }

    /// Subset of every leg; see [`LegData::restricted`].
    pub fn restricted(&self, n_per_leg: usize, n_goal: usize, j_bar: f64) -> Self {
        Self {
            fingerprint: self.fingerprint,
            j_bar: j_bar.min(self.j_bar),
            dim: self.dim,
            legs: self.legs.iter().map(|l| l.restricted(n_per_leg, n_goal, j_bar)).collect(),
        }
    }

    pub fn check_fingerprint(&self, scenario: &Scenario) -> Result<(), DataError> {
        if self.fingerprint == scenario.fingerprint() {
            Ok(())
        } else {
            Err(DataError::FingerprintMismatch)
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        self.write_to(&mut w).expect("writing to memory cannot fail");
        w
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        w.write_all(&self.fingerprint)?;
        w.write_f64::<LE>(self.j_bar)?;
        w.write_u32::<LE>(self.dim)?;
        w.write_u32::<LE>(self.legs.len() as u32)?;
        let f = |w: &mut W, v: f64| w.write_f64::<LE>(v);
        for leg in &self.legs {
            for v in leg.bounds.lower.iter().chain(&leg.bounds.upper) {
                f(w, *v)?;
            }
            for v in leg.goal.center.to_array() {
                f(w, v)?;
            }
            f(w, leg.goal.eps_r)?;
            f(w, leg.goal.eps_v)?;
            w.write_u32::<LE>(leg.samples.n as u32)?;
            w.write_u32::<LE>(leg.samples.n_goal as u32)?;
            for s in &leg.samples.states {
                for v in s.to_array() {
                    f(w, v)?;
                }
            }
            for c in &leg.certs {
                w.write_u8(c.safe as u8)?;
                f(w, c.theta_star)?;
                f(w, c.t_h)?;
                for v in c.dv {
                    f(w, v)?;
                }
            }
            for row in &leg.neighbors.fwd {
                w.write_u32::<LE>(row.len() as u32)?;
                for e in row {
                    w.write_u32::<LE>(e.to as u32)?;
                    for v in e.sol.dv1.iter().chain(e.sol.dv2.iter()) {
                        f(w, *v)?;
                    }
                    f(w, e.sol.duration)?;
                    f(w, e.sol.cost)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, DataError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DataError::BadMagic);
        }
        let version = r.read_u32::<LE>()?;
        if version != FORMAT_VERSION {
            return Err(DataError::BadVersion(version));
        }
        let mut fingerprint = [0u8; 32];
        r.read_exact(&mut fingerprint)?;
        let j_bar = r.read_f64::<LE>()?;
        let dim = r.read_u32::<LE>()?;
        let n_legs = r.read_u32::<LE>()? as usize;
        let mut legs = Vec::with_capacity(n_legs.min(1024));
        let f = |r: &mut R| r.read_f64::<LE>();
        for _ in 0..n_legs {
            let mut b = [0.0; 12];
            for v in b.iter_mut() {
                *v = f(r)?;
            }
            let mut lower = [0.0; 6];
            let mut upper = [0.0; 6];
            lower.copy_from_slice(&b[..6]);
            upper.copy_from_slice(&b[6..]);
            let mut g = [0.0; 8];
            for v in g.iter_mut() {
                *v = f(r)?;
            }
            let goal = GoalRegion {
                center: State::from_array([g[0], g[1], g[2], g[3], g[4], g[5]]),
                eps_r: g[6],
                eps_v: g[7],
            };
            let n = r.read_u32::<LE>()? as usize;
            let n_goal = r.read_u32::<LE>()? as usize;
            let total = n + n_goal;
            let mut states = Vec::with_capacity(total);
            for _ in 0..total {
                let mut a = [0.0; 6];
                for v in a.iter_mut() {
                    *v = f(r)?;
                }
                states.push(State::from_array(a));
            }
            let mut certs = Vec::with_capacity(total);
            for _ in 0..total {
                let safe = match r.read_u8()? {
                    0 => false,
                    1 => true,
                    other => return Err(DataError::Malformed(format!("certificate flag {other}"))),
                };
                let theta_star = f(r)?;
                let t_h = f(r)?;
                let dv = [f(r)?, f(r)?, f(r)?];
                certs.push(CamSummary { safe, theta_star, t_h, dv });
            }
            let mut fwd = Vec::with_capacity(total);
            for _ in 0..total {
                let count = r.read_u32::<LE>()? as usize;
                let mut row = Vec::with_capacity(count.min(total));
                for _ in 0..count {
                    let to = r.read_u32::<LE>()? as usize;
                    if to >= total {
                        return Err(DataError::Malformed(format!("edge target {to} out of range")));
                    }
                    let dv1 = Vector3::new(f(r)?, f(r)?, f(r)?);
                    let dv2 = Vector3::new(f(r)?, f(r)?, f(r)?);
                    let duration = f(r)?;
                    let cost = f(r)?;
                    row.push(Edge {
                        to,
                        sol: SteeringSolution { dv1, dv2, duration, cost },
                    });
                }
                fwd.push(row);
            }
            legs.push(LegData {
                bounds: StateSpaceBox { lower, upper },
                goal,
                samples: SampleSet { states, n, n_goal },
                neighbors: NeighborSets::from_forward(fwd),
                certs,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(DataError::Malformed("trailing bytes".into()));
        }
        Ok(Self {
            fingerprint,
            j_bar,
            dim,
            legs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("data serialises to JSON")
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads a binary file and checks it against `scenario`.
    pub fn load_for(path: &Path, scenario: &Scenario) -> Result<Self, DataError> {
        let data = Self::load(path)?;
        data.check_fingerprint(scenario)?;
        Ok(data)
    }
}

/// Builds samples, neighbour sets and certificates for every leg.
pub fn precompute(scenario: &Scenario) -> Result<PrecomputedGraphData, PrecomputeError> {
    let model = scenario.model();
    let safety = scenario.safety_context();
    let env = scenario.environment();
    let spec = ReachSpec {
        j_bar: scenario.planner.j_bar_mps,
        limits: scenario.steering_limits(),
    };
    let mut legs = Vec::with_capacity(scenario.waypoints.len());
    for leg in 0..scenario.waypoints.len() {
        let space = scenario.sample_space(leg);
        let env_leg = env.with_bounds(Some(space.bounds));
        let goal = scenario.goal_region(leg);
        let filter = |s: &State| env_leg.point_feasible(s) && safety.certify(s).safe;
        let samples = sample_free(&space, scenario.planner.n_per_leg, &goal, scenario.n_goal(), filter)
            .map_err(|source| PrecomputeError::Sampling { leg, source })?;
        let certs: Vec<CamSummary> = samples.states.par_iter().map(|s| safety.certify(s).summary()).collect();
        let neighbors = build_neighbor_sets(&model, &samples.states, &spec, scenario.planner.prune);
        legs.push(LegData {
            bounds: space.bounds,
            goal,
            samples,
            neighbors,
            certs,
        });
    }
    Ok(PrecomputedGraphData {
        fingerprint: scenario.fingerprint(),
        j_bar: spec.j_bar,
        dim: if scenario.planner.planar { 4 } else { 6 },
        legs,
    })
}
