//! Obstacles, plume cones, state-space boxes and time-discretised trajectory
//! feasibility.
//!
//! The chaser is treated as a point at its centre of mass. Obstacles are
//! inflated by the chaser's circumscribing radius once, when the
//! [`Environment`] is built. All obstacle sets are closed: touching the
//! boundary counts as a collision.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cwh::{sample_trajectory, BurnSchedule, OrbitModel, State};

/// Axis-aligned ellipsoidal keep-out zone centred on the target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidKoz {
    pub semi_axes: Vector3<f64>,
}

impl EllipsoidKoz {
    pub fn new(semi_axes: Vector3<f64>) -> Option<Self> {
        semi_axes
            .iter()
            .all(|a| a.is_finite() && *a > 0.0)
            .then_some(Self { semi_axes })
    }

    /// Same ellipsoid with every semi-axis grown by `r`.
    pub fn inflated(&self, r: f64) -> Self {
        Self {
            semi_axes: self.semi_axes.add_scalar(r),
        }
    }

    /// Quadratic form `r^T E r`; at most 1 means inside or on the boundary.
    #[inline]
    pub fn level(&self, r: &Vector3<f64>) -> f64 {
        r.component_div(&self.semi_axes).norm_squared()
    }

    #[inline]
    pub fn contains(&self, r: &Vector3<f64>) -> bool {
        if r.x.abs() > self.semi_axes.x || r.y.abs() > self.semi_axes.y || r.z.abs() > self.semi_axes.z {
            return false;
        }
        self.level(r) <= 1.0
    }

    #[inline]
    pub fn contains_unpruned(&self, r: &Vector3<f64>) -> bool {
        self.level(r) <= 1.0
    }

    /// Radial half-width of the keep-out band.
    pub fn rho_x(&self) -> f64 {
        self.semi_axes.x
    }
}

/// Solid right circular cone of finite height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeObstacle {
    pub apex: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub half_angle: f64,
    pub height: f64,
}

impl ConeObstacle {
    /// Returns `None` for a degenerate axis, angle outside `(0, pi/2)` or
    /// non-positive height. The axis is normalised.
    pub fn new(apex: Vector3<f64>, axis: Vector3<f64>, half_angle: f64, height: f64) -> Option<Self> {
        let n = axis.norm();
        let ok = n.is_finite()
            && n > 0.0
            && half_angle > 0.0
            && half_angle < std::f64::consts::FRAC_PI_2
            && height.is_finite()
            && height > 0.0
            && apex.iter().all(|v| v.is_finite());
        ok.then(|| Self {
            apex,
            axis: axis / n,
            half_angle,
            height,
        })
    }

    /// Euclidean distance from `p` to the solid cone (zero inside).
    ///
    /// The cone is a solid of revolution, so the distance equals the planar
    /// distance from `(h, rho)` to the triangle `(0,0), (H,0), (H, H tan b)`.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.apex;
        let h = d.dot(&self.axis);
        let rho = (d - self.axis * h).norm();
        let big_h = self.height;
        let tan_b = self.half_angle.tan();
        let rim = big_h * tan_b;
        if h >= 0.0 && h <= big_h && rho <= h * tan_b {
            return 0.0;
        }
        let seg = |ax: f64, ay: f64, bx: f64, by: f64| -> f64 {
            let (ex, ey) = (bx - ax, by - ay);
            let t = (((h - ax) * ex + (rho - ay) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
            ((h - ax - t * ex).powi(2) + (rho - ay - t * ey).powi(2)).sqrt()
        };
        let slant = seg(0.0, 0.0, big_h, rim);
        let base = seg(big_h, 0.0, big_h, rim);
        let axis_seg = seg(0.0, 0.0, big_h, 0.0);
        slant.min(base).min(axis_seg)
    }

    /// Closed membership of the cone grown by `margin`.
    #[inline]
    pub fn contains_inflated(&self, p: &Vector3<f64>, margin: f64) -> bool {
        self.distance(p) <= margin
    }

    /// Centre and radius of a sphere enclosing the cone.
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        let rim = self.height * self.half_angle.tan();
        // The smallest enclosing sphere either has the base disc as a great
        // circle or passes through the apex and the rim.
        if rim >= self.height {
            (self.apex + self.axis * self.height, rim)
        } else {
            let c = (self.height * self.height + rim * rim) / (2.0 * self.height);
            (self.apex + self.axis * c, c)
        }
    }
}

/// Exact finite-cone versus sphere intersection (closed sets).
pub fn cone_sphere_intersects(cone: &ConeObstacle, center: &Vector3<f64>, radius: f64) -> bool {
    cone.distance(center) <= radius
}

/// Exhaust plume geometry shared by every thruster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlumeModel {
    pub half_angle: f64,
    pub height: f64,
}

impl PlumeModel {
    /// Plume cone of a thruster at `apex` producing an impulse along
    /// `thrust_dir`; exhaust leaves along `-thrust_dir`.
    pub fn cone(&self, apex: Vector3<f64>, thrust_dir: Vector3<f64>) -> Option<ConeObstacle> {
        ConeObstacle::new(apex, -thrust_dir, self.half_angle, self.height)
    }
}

/// Circumscribing sphere of the target, centred at the LVLH origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSphere {
    pub radius: f64,
}

impl TargetSphere {
    /// True when a plume from `apex` along `-thrust_dir` touches the sphere
    /// grown by `margin`.
    pub fn impinged_by(&self, plume: &PlumeModel, apex: Vector3<f64>, thrust_dir: Vector3<f64>, margin: f64) -> bool {
        match plume.cone(apex, thrust_dir) {
            Some(cone) => cone_sphere_intersects(&cone, &Vector3::zeros(), self.radius + margin),
            None => false,
        }
    }
}

/// Axis-aligned bounds on the six state components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceBox {
    pub lower: [f64; 6],
    pub upper: [f64; 6],
}

impl StateSpaceBox {
    pub fn new(lower: [f64; 6], upper: [f64; 6]) -> Option<Self> {
        lower
            .iter()
            .zip(&upper)
            .all(|(l, u)| l <= u && !l.is_nan() && !u.is_nan())
            .then_some(Self { lower, upper })
    }

    /// Box over positions only; velocities unbounded.
    pub fn positions(lower: Vector3<f64>, upper: Vector3<f64>) -> Option<Self> {
        let inf = f64::INFINITY;
        Self::new(
            [lower.x, lower.y, lower.z, -inf, -inf, -inf],
            [upper.x, upper.y, upper.z, inf, inf, inf],
        )
    }

    #[inline]
    pub fn contains(&self, x: &State) -> bool {
        x.to_array()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| v >= l && v <= u)
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &Self) -> Self {
        let mut out = *self;
        for i in 0..6 {
            out.lower[i] = out.lower[i].min(other.lower[i]);
            out.upper[i] = out.upper[i].max(other.upper[i]);
        }
        out
    }
}

/// Obstacles and bounds for point and trajectory checks, already inflated
/// by the chaser radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Inflated keep-out zone.
    pub koz: EllipsoidKoz,
    /// Uninflated antenna cones; membership uses `chaser_radius` as margin.
    pub cones: Vec<ConeObstacle>,
    /// Optional state bounds. `None` disables the box test.
    pub bounds: Option<StateSpaceBox>,
    pub chaser_radius: f64,
    cone_spheres: Vec<(Vector3<f64>, f64)>,
}

impl Environment {
    pub fn new(koz: EllipsoidKoz, cones: Vec<ConeObstacle>, bounds: Option<StateSpaceBox>, chaser_radius: f64) -> Self {
        let cone_spheres = cones
            .iter()
            .map(|c| {
                let (center, r) = c.bounding_sphere();
                (center, r + chaser_radius)
            })
            .collect();
        Self {
            koz: koz.inflated(chaser_radius),
            cones,
            bounds,
            chaser_radius,
            cone_spheres,
        }
    }

    /// Copy with different bounds.
    pub fn with_bounds(&self, bounds: Option<StateSpaceBox>) -> Self {
        Self {
            bounds,
            ..self.clone()
        }
    }

    #[inline]
    fn in_cone(&self, k: usize, r: &Vector3<f64>) -> bool {
        let (c, rad) = &self.cone_spheres[k];
        if (r - c).norm_squared() > rad * rad {
            return false;
        }
        self.cones[k].contains_inflated(r, self.chaser_radius)
    }

    /// Position collides with the keep-out zone or an antenna cone.
    #[inline]
    pub fn collides(&self, r: &Vector3<f64>) -> bool {
        self.koz.contains(r) || (0..self.cones.len()).any(|k| self.in_cone(k, r))
    }

    /// Same predicate without bounding-volume pruning.
    pub fn collides_unpruned(&self, r: &Vector3<f64>) -> bool {
        self.koz.contains_unpruned(r) || self.cones.iter().any(|c| c.contains_inflated(r, self.chaser_radius))
    }

    /// Inside the bounds (if any), outside the keep-out zone and every cone.
    #[inline]
    pub fn point_feasible(&self, x: &State) -> bool {
        self.bounds.map_or(true, |b| b.contains(x)) && !self.collides(&x.r)
    }

    pub fn point_feasible_unpruned(&self, x: &State) -> bool {
        self.bounds.map_or(true, |b| b.contains(x)) && !self.collides_unpruned(&x.r)
    }

    /// Checks every `dt` grid time, every burn instant (pre- and post-burn)
    /// and the terminal time of the scheduled trajectory on `[0, t_end]`.
    pub fn trajectory_feasible(
        &self,
        model: &OrbitModel,
        x0: &State,
        schedule: &BurnSchedule,
        t_end: f64,
        dt: f64,
    ) -> bool {
        self.first_violation(model, x0, schedule, t_end, dt).is_none()
    }

    /// Time of the first infeasible sample point, if any.
    pub fn first_violation(
        &self,
        model: &OrbitModel,
        x0: &State,
        schedule: &BurnSchedule,
        t_end: f64,
        dt: f64,
    ) -> Option<f64> {
        sample_trajectory(model, x0, schedule, t_end, dt)
            .into_iter()
            .find(|(_, x)| !self.point_feasible(x))
            .map(|(t, _)| t)
    }
}
