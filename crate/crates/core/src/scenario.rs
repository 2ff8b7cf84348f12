//! Scenario files: TOML schema, validation and construction of the
//! planning objects.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::allocation::{Chaser, Thruster, ThrusterConfig};
use crate::cwh::{OrbitModel, State};
use crate::geometry::{ConeObstacle, EllipsoidKoz, Environment, PlumeModel, StateSpaceBox, TargetSphere};
use crate::safety::SafetyContext;
use crate::sampling::{GoalRegion, SampleSpace};
use crate::smoothing::SmoothingOptions;
use crate::socp::SocpOptions;
use crate::steering::SteeringLimits;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario field `{path}`: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSection {
    pub omega_rad_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub position_m: [f64; 3],
    pub velocity_mps: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KozSection {
    pub semi_axes_m: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaSection {
    pub apex_m: [f64; 3],
    pub axis: [f64; 3],
    /// Full cone angle.
    pub beamwidth_deg: f64,
    pub height_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub radius_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrusterSection {
    pub position_m: [f64; 3],
    pub direction: [f64; 3],
    #[serde(default)]
    pub dv_min_mps: f64,
    #[serde(default = "infinity")]
    pub dv_max_mps: f64,
}

fn infinity() -> f64 {
    f64::INFINITY
}

fn default_cube_edge() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaserSection {
    pub radius_m: f64,
    pub plume_half_angle_deg: f64,
    pub plume_height_m: f64,
    pub fault_tolerance: usize,
    /// Edge of the default sixteen-thruster cube, used when `thrusters` is
    /// empty.
    #[serde(default = "default_cube_edge")]
    pub cube_edge_m: f64,
    #[serde(default)]
    pub thrusters: Vec<ThrusterSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lower: [f64; 6],
    pub upper: [f64; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSection {
    pub position_m: [f64; 3],
    pub velocity_mps: [f64; 3],
    #[serde(default)]
    pub eps_r_m: f64,
    #[serde(default)]
    pub eps_v_mps: f64,
    /// Explicit sample space of the leg ending here; derived from the
    /// sampling margins when absent.
    #[serde(default)]
    pub bounds: Option<BoxSection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingScope {
    WholePlan,
    PerLeg,
}

fn yes() -> bool {
    true
}
fn default_t_max_frac() -> f64 {
    0.1
}
fn default_dt_frac() -> f64 {
    0.0005
}
fn default_goal_fraction() -> f64 {
    0.04
}
fn default_t_grid() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    pub n_per_leg: usize,
    pub j_bar_mps: f64,
    #[serde(default = "default_t_max_frac")]
    pub t_max_frac: f64,
    #[serde(default = "default_dt_frac")]
    pub dt_frac: f64,
    #[serde(default = "default_goal_fraction")]
    pub goal_fraction: f64,
    #[serde(default = "yes")]
    pub merge_mode: bool,
    #[serde(default)]
    pub strict_safety: bool,
    #[serde(default = "default_t_grid")]
    pub t_grid: usize,
    #[serde(default = "infinity")]
    pub dv_max_mps: f64,
    #[serde(default = "yes")]
    pub planar: bool,
    /// Skip refinement of pairs that the duration grid shows to be far
    /// above the threshold.
    #[serde(default = "yes")]
    pub prune: bool,
}

fn default_position_margin() -> f64 {
    50.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_position_margin")]
    pub position_margin_m: f64,
    /// Half-width of the velocity ranges; the cost threshold when absent.
    #[serde(default)]
    pub velocity_margin_mps: Option<f64>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            position_margin_m: default_position_margin(),
            velocity_margin_mps: None,
        }
    }
}

fn default_alpha_tol() -> f64 {
    1.0 / 64.0
}
fn default_scope() -> SmoothingScope {
    SmoothingScope::WholePlan
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_alpha_tol")]
    pub alpha_tol: f64,
    #[serde(default = "default_scope")]
    pub scope: SmoothingScope,
}

impl Default for SmoothingSection {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha_tol: default_alpha_tol(),
            scope: default_scope(),
        }
    }
}

/// Complete scenario description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub orbit: OrbitSection,
    pub initial: InitialSection,
    pub koz: KozSection,
    #[serde(default)]
    pub antenna: Vec<AntennaSection>,
    pub target: TargetSection,
    pub chaser: ChaserSection,
    pub waypoints: Vec<WaypointSection>,
    pub planner: PlannerSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub smoothing: SmoothingSection,
}

/// Fields that determine the precomputed data.
#[derive(Serialize)]
struct FingerprintView<'a> {
    schema_version: u32,
    orbit: &'a OrbitSection,
    initial: &'a InitialSection,
    koz: &'a KozSection,
    antenna: &'a [AntennaSection],
    target: &'a TargetSection,
    chaser: &'a ChaserSection,
    waypoints: &'a [WaypointSection],
    n_per_leg: usize,
    j_bar_mps: f64,
    t_max_frac: f64,
    dt_frac: f64,
    goal_fraction: f64,
    t_grid: usize,
    dv_max_mps: Option<f64>,
    planar: bool,
    prune: bool,
    position_margin_m: f64,
    velocity_margin_mps: f64,
}

fn check_finite(path: &str, v: &[f64]) -> Result<(), ScenarioError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(path, "all components must be finite"))
    }
}

fn check_positive(path: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, "must be positive and finite"))
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises to TOML")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        check_positive("orbit.omega_rad_s", self.orbit.omega_rad_s)?;
        check_finite("initial.position_m", &self.initial.position_m)?;
        check_finite("initial.velocity_mps", &self.initial.velocity_mps)?;
        for (i, a) in self.koz.semi_axes_m.iter().enumerate() {
            check_positive(&format!("koz.semi_axes_m[{i}]"), *a)?;
        }
        for (i, a) in self.antenna.iter().enumerate() {
            let p = format!("antenna[{i}]");
            check_finite(&format!("{p}.apex_m"), &a.apex_m)?;
            check_finite(&format!("{p}.axis"), &a.axis)?;
            if Vector3::from(a.axis).norm() == 0.0 {
                return Err(invalid(format!("{p}.axis"), "must be non-zero"));
            }
            if !(a.beamwidth_deg > 0.0 && a.beamwidth_deg < 180.0) {
                return Err(invalid(format!("{p}.beamwidth_deg"), "must lie in (0, 180)"));
            }
            check_positive(&format!("{p}.height_m"), a.height_m)?;
        }
        check_positive("target.radius_m", self.target.radius_m)?;
        let c = &self.chaser;
        if !(c.radius_m >= 0.0 && c.radius_m.is_finite()) {
            return Err(invalid("chaser.radius_m", "must be non-negative and finite"));
        }
        if !(c.plume_half_angle_deg > 0.0 && c.plume_half_angle_deg < 90.0) {
            return Err(invalid("chaser.plume_half_angle_deg", "must lie in (0, 90)"));
        }
        check_positive("chaser.plume_height_m", c.plume_height_m)?;
        check_positive("chaser.cube_edge_m", c.cube_edge_m)?;
        for (i, t) in c.thrusters.iter().enumerate() {
            let p = format!("chaser.thrusters[{i}]");
            check_finite(&format!("{p}.position_m"), &t.position_m)?;
            check_finite(&format!("{p}.direction"), &t.direction)?;
            if Vector3::from(t.direction).norm() == 0.0 {
                return Err(invalid(format!("{p}.direction"), "must be non-zero"));
            }
            if !(t.dv_min_mps >= 0.0 && t.dv_min_mps <= t.dv_max_mps) {
                return Err(invalid(format!("{p}.dv_min_mps"), "must satisfy 0 <= dv_min_mps <= dv_max_mps"));
            }
        }
        if c.fault_tolerance >= self.thruster_count() {
            return Err(invalid("chaser.fault_tolerance", "must be smaller than the thruster count"));
        }
        if self.waypoints.is_empty() {
            return Err(invalid("waypoints", "at least one waypoint is required"));
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            let p = format!("waypoints[{i}]");
            check_finite(&format!("{p}.position_m"), &w.position_m)?;
            check_finite(&format!("{p}.velocity_mps"), &w.velocity_mps)?;
            if !(w.eps_r_m >= 0.0 && w.eps_r_m.is_finite()) {
                return Err(invalid(format!("{p}.eps_r_m"), "must be non-negative and finite"));
            }
            if !(w.eps_v_mps >= 0.0 && w.eps_v_mps.is_finite()) {
                return Err(invalid(format!("{p}.eps_v_mps"), "must be non-negative and finite"));
            }
            if (w.eps_r_m == 0.0) != (w.eps_v_mps == 0.0) {
                return Err(invalid(format!("{p}.eps_r_m"), "position and velocity tolerances must be both zero or both positive"));
            }
            if let Some(b) = &w.bounds {
                if StateSpaceBox::new(b.lower, b.upper).is_none() {
                    return Err(invalid(format!("{p}.bounds"), "lower must not exceed upper"));
                }
            }
            if self.planner.planar && (w.position_m[2] != 0.0 || w.velocity_mps[2] != 0.0) {
                return Err(invalid(format!("{p}.position_m"), "planar scenarios need zero out-of-plane components"));
            }
        }
        if self.planner.planar && (self.initial.position_m[2] != 0.0 || self.initial.velocity_mps[2] != 0.0) {
            return Err(invalid("initial.position_m", "planar scenarios need zero out-of-plane components"));
        }
        let pl = &self.planner;
        if pl.n_per_leg == 0 {
            return Err(invalid("planner.n_per_leg", "must be at least 1"));
        }
        check_positive("planner.j_bar_mps", pl.j_bar_mps)?;
        if !(pl.t_max_frac > 0.0 && pl.t_max_frac < 1.0) {
            return Err(invalid("planner.t_max_frac", "must lie in (0, 1)"));
        }
        if !(pl.dt_frac > 0.0 && pl.dt_frac < pl.t_max_frac) {
            return Err(invalid("planner.dt_frac", "must lie in (0, t_max_frac)"));
        }
        if !(pl.goal_fraction >= 0.0 && pl.goal_fraction <= 1.0) {
            return Err(invalid("planner.goal_fraction", "must lie in [0, 1]"));
        }
        if pl.t_grid < 16 {
            return Err(invalid("planner.t_grid", "must be at least 16"));
        }
        if !(pl.dv_max_mps > 0.0) {
            return Err(invalid("planner.dv_max_mps", "must be positive"));
        }
        if !(self.sampling.position_margin_m >= 0.0 && self.sampling.position_margin_m.is_finite()) {
            return Err(invalid("sampling.position_margin_m", "must be non-negative and finite"));
        }
        if let Some(v) = self.sampling.velocity_margin_mps {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid("sampling.velocity_margin_mps", "must be non-negative and finite"));
            }
        }
        if !(self.smoothing.alpha_tol > 0.0 && self.smoothing.alpha_tol < 1.0) {
            return Err(invalid("smoothing.alpha_tol", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn model(&self) -> OrbitModel {
        OrbitModel::new(self.orbit.omega_rad_s).expect("validated mean motion")
    }

    pub fn initial_state(&self) -> State {
        State::new(self.initial.position_m, self.initial.velocity_mps)
    }

    pub fn dt(&self) -> f64 {
        self.planner.dt_frac * self.model().period()
    }

    pub fn steering_limits(&self) -> SteeringLimits {
        let model = self.model();
        let mut l = SteeringLimits::with_t_max(self.planner.t_max_frac * model.period());
        l.t_grid = self.planner.t_grid;
        l.dv_max = self.planner.dv_max_mps;
        l
    }

    pub fn velocity_margin(&self) -> f64 {
        self.sampling.velocity_margin_mps.unwrap_or(self.planner.j_bar_mps)
    }

    pub fn n_goal(&self) -> usize {
        (self.planner.goal_fraction * self.planner.n_per_leg as f64).ceil() as usize
    }

    fn thruster_count(&self) -> usize {
        if self.chaser.thrusters.is_empty() {
            16
        } else {
            self.chaser.thrusters.len()
        }
    }

    pub fn thrusters(&self) -> ThrusterConfig {
        if self.chaser.thrusters.is_empty() {
            return ThrusterConfig::default_cube(self.chaser.cube_edge_m);
        }
        ThrusterConfig {
            thrusters: self
                .chaser
                .thrusters
                .iter()
                .map(|t| Thruster {
                    position: Vector3::from(t.position_m),
                    direction: Vector3::from(t.direction).normalize(),
                    dv_min: t.dv_min_mps,
                    dv_max: t.dv_max_mps,
                })
                .collect(),
        }
    }

    pub fn chaser(&self) -> Chaser {
        Chaser {
            thrusters: self.thrusters(),
            plume: PlumeModel {
                half_angle: self.chaser.plume_half_angle_deg.to_radians(),
                height: self.chaser.plume_height_m,
            },
            radius: self.chaser.radius_m,
        }
    }

    pub fn target(&self) -> TargetSphere {
        TargetSphere {
            radius: self.target.radius_m,
        }
    }

    /// Obstacles without state bounds.
    pub fn environment(&self) -> Environment {
        let koz = EllipsoidKoz::new(Vector3::from(self.koz.semi_axes_m)).expect("validated semi-axes");
        let cones = self
            .antenna
            .iter()
            .map(|a| {
                ConeObstacle::new(
                    Vector3::from(a.apex_m),
                    Vector3::from(a.axis),
                    (0.5 * a.beamwidth_deg).to_radians(),
                    a.height_m,
                )
                .expect("validated antenna")
            })
            .collect();
        Environment::new(koz, cones, None, self.chaser.radius_m)
    }

    pub fn safety_context(&self) -> SafetyContext {
        SafetyContext::new(
            self.model(),
            &self.environment(),
            self.chaser(),
            self.target(),
            self.chaser.fault_tolerance,
            self.dt(),
        )
    }

    pub fn goal_region(&self, leg: usize) -> GoalRegion {
        let w = &self.waypoints[leg];
        GoalRegion {
            center: State::new(w.position_m, w.velocity_mps),
            eps_r: w.eps_r_m,
            eps_v: w.eps_v_mps,
        }
    }

    /// Start of leg `leg`: the initial state or the previous waypoint.
    pub fn leg_start(&self, leg: usize) -> State {
        if leg == 0 {
            self.initial_state()
        } else {
            self.goal_region(leg - 1).center
        }
    }

    pub fn sample_space(&self, leg: usize) -> SampleSpace {
        if let Some(b) = &self.waypoints[leg].bounds {
            return SampleSpace {
                bounds: StateSpaceBox {
                    lower: b.lower,
                    upper: b.upper,
                },
                planar: self.planner.planar,
            };
        }
        SampleSpace::around(
            &self.model(),
            &self.leg_start(leg),
            &self.goal_region(leg).center,
            self.sampling.position_margin_m,
            self.velocity_margin(),
            self.planner.planar,
        )
    }

    pub fn smoothing_options(&self) -> SmoothingOptions {
        SmoothingOptions {
            alpha_tol: self.smoothing.alpha_tol,
            socp: SocpOptions::default(),
        }
    }

    /// SHA-256 of the fields that determine the precomputed data.
    pub fn fingerprint(&self) -> [u8; 32] {
        let pl = &self.planner;
        let view = FingerprintView {
            schema_version: self.schema_version,
            orbit: &self.orbit,
            initial: &self.initial,
            koz: &self.koz,
            antenna: &self.antenna,
            target: &self.target,
            chaser: &self.chaser,
            waypoints: &self.waypoints,
            n_per_leg: pl.n_per_leg,
            j_bar_mps: pl.j_bar_mps,
            t_max_frac: pl.t_max_frac,
            dt_frac: pl.dt_frac,
            goal_fraction: pl.goal_fraction,
            t_grid: pl.t_grid,
            dv_max_mps: pl.dv_max_mps.is_finite().then_some(pl.dv_max_mps),
            planar: pl.planar,
            prune: pl.prune,
            position_margin_m: self.sampling.position_margin_m,
            velocity_margin_mps: self.velocity_margin(),
        };
        let bytes = serde_json::to_vec(&view).expect("fingerprint view serialises");
        Sha256::digest(bytes).into()
    }
}
