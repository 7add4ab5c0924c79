//! Smooth trajectories and per-epoch world snapshots.
//!
//! Waypoints are interpolated by a natural cubic spline per coordinate
//! (which reduces to straight-line motion for two waypoints), so velocity is
//! continuous and is the exact derivative of the position interpolant.

use crate::error::{Error, Result};
use crate::geometry::{self, Vec3};
use crate::scene::{MobileBody, Mount, Scene};

/// Slack allowed on trajectory bounds to absorb epoch-grid rounding.
const TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    pub yaw_rate: f64,
}

/// Natural cubic spline through `(knots[i], values[i])`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    curvature: Vec<f64>,
}

impl CubicSpline {
    /// `knots` must be strictly increasing and at least two long.
    pub fn natural(knots: &[f64], values: &[f64]) -> Self {
        assert_eq!(knots.len(), values.len());
        assert!(knots.len() >= 2);
        let n = knots.len();
        let mut curvature = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let m = n - 2;
            let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            let mut upper = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                diag[k] = 2.0 * (h[i - 1] + h[i]);
                upper[k] = h[i];
                rhs[k] = 6.0 * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
            }
            for k in 1..m {
                let w = h[k] / diag[k - 1];
                diag[k] -= w * upper[k - 1];
                rhs[k] -= w * rhs[k - 1];
            }
            curvature[m] = rhs[m - 1] / diag[m - 1];
            for k in (0..m - 1).rev() {
                curvature[k + 1] = (rhs[k] - upper[k] * curvature[k + 2]) / diag[k];
            }
        }
        CubicSpline {
            knots: knots.to_vec(),
            values: values.to_vec(),
            curvature,
        }
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.knots.partition_point(|&k| k <= t);
        i.clamp(1, self.knots.len() - 1) - 1
    }

    /// Value, first and second derivative at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let i = self.segment(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
        let y = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let dy = (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
        let ddy = a * m0 + b * m1;
        (y, dy, ddy)
    }
}

/// Interpolated trajectory of one mobile body.
#[derive(Debug, Clone)]
pub struct Trajectory {
    id: String,
    start: f64,
    end: f64,
    axes: [CubicSpline; 3],
    yaw: Option<CubicSpline>,
}

impl Trajectory {
    pub fn new(body: &MobileBody) -> Self {
        let t: Vec<f64> = body.trajectory.iter().map(|w| w.t).collect();
        let axis = |k: usize| {
            let v: Vec<f64> = body.trajectory.iter().map(|w| w.position[k]).collect();
            CubicSpline::natural(&t, &v)
        };
        let yaw = if body.trajectory.iter().all(|w| w.yaw.is_some()) {
            // unwrap so the spline does not spin through +-pi jumps
            let mut unwrapped = Vec::with_capacity(t.len());
            let mut prev: Option<f64> = None;
            for w in &body.trajectory {
                let mut y = w.yaw.unwrap();
                if let Some(p) = prev {
                    while y - p > std::f64::consts::PI {
                        y -= 2.0 * std::f64::consts::PI;
                    }
                    while y - p < -std::f64::consts::PI {
                        y += 2.0 * std::f64::consts::PI;
                    }
                }
                prev = Some(y);
                unwrapped.push(y);
            }
            Some(CubicSpline::natural(&t, &unwrapped))
        } else {
            None
        };
        Trajectory {
            id: body.id.clone(),
            start: t[0],
            end: t[t.len() - 1],
            axes: [axis(0), axis(1), axis(2)],
            yaw,
        }
    }

    pub fn span(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    pub fn sample(&self, t: f64) -> Result<PoseSample> {
        if t < self.start - TIME_SLACK || t > self.end + TIME_SLACK || !t.is_finite() {
            return Err(Error::OutOfRange {
                what: format!("body '{}'", self.id),
                t,
                start: self.start,
                end: self.end,
            });
        }
        let t = t.clamp(self.start, self.end);
        let [x, y, z] = [self.axes[0].eval(t), self.axes[1].eval(t), self.axes[2].eval(t)];
        let position = Vec3::new(x.0, y.0, z.0);
        let velocity = Vec3::new(x.1, y.1, z.1);
        let (yaw, yaw_rate) = match &self.yaw {
            Some(s) => {
                let (v, d, _) = s.eval(t);
                (v, d)
            }
            None => {
                // heading of the horizontal velocity
                let speed2 = x.1 * x.1 + y.1 * y.1;
                if speed2 > 1e-18 {
                    (y.1.atan2(x.1), (x.1 * y.2 - y.1 * x.2) / speed2)
                } else {
                    (0.0, 0.0)
                }
            }
        };
        Ok(PoseSample {
            t,
            position,
            velocity,
            yaw,
            yaw_rate,
        })
    }
}

/// Pose of `body` at time `t`.
pub fn interpolate(body: &MobileBody, t: f64) -> Result<PoseSample> {
    Trajectory::new(body).sample(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransceiverState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub boresight: Vec3,
}

/// World-frame geometry of one facet plus its rigid velocity field.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetState {
    pub vertices: Vec<Vec3>,
    pub normal: Vec3,
    pub area: f64,
    /// Velocity of the body reference point.
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
    /// Body reference point (world frame).
    pub origin: Vec3,
}

impl FacetState {
    /// Rigid-body velocity `v + omega x (p - origin)` of the material point at `p`.
    pub fn point_velocity(&self, p: &Vec3) -> Vec3 {
        self.linear_velocity + self.angular_velocity.cross(&(p - self.origin))
    }

    pub fn is_static(&self) -> bool {
        self.linear_velocity == Vec3::zeros() && self.angular_velocity == Vec3::zeros()
    }
}

/// World state at one chirp epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSnapshot {
    pub t: f64,
    pub bodies: Vec<PoseSample>,
    pub transceivers: Vec<TransceiverState>,
    pub facets: Vec<FacetState>,
}

/// Precomputed trajectories for every body of a scene.
#[derive(Debug, Clone)]
pub struct SceneKinematics {
    trajectories: Vec<Trajectory>,
}

impl SceneKinematics {
    pub fn new(scene: &Scene) -> Self {
        SceneKinematics {
            trajectories: scene.bodies.iter().map(Trajectory::new).collect(),
        }
    }

    pub fn snapshot(&self, scene: &Scene, t: f64) -> Result<WorldSnapshot> {
        let bodies = self
            .trajectories
            .iter()
            .map(|tr| tr.sample(t))
            .collect::<Result<Vec<_>>>()?;

        let facets = scene
            .facets
            .iter()
            .map(|f| match f.body {
                None => FacetState {
                    vertices: f.vertices.clone(),
                    normal: f.normal,
                    area: f.area,
                    linear_velocity: Vec3::zeros(),
                    angular_velocity: Vec3::zeros(),
                    origin: Vec3::zeros(),
                },
                Some(b) => {
                    let pose = &bodies[b];
                    FacetState {
                        vertices: f
                            .vertices
                            .iter()
                            .map(|v| geometry::rotate_z(v, pose.yaw) + pose.position)
                            .collect(),
                        normal: geometry::rotate_z(&f.normal, pose.yaw),
                        area: f.area,
                        linear_velocity: pose.velocity,
                        angular_velocity: Vec3::new(0.0, 0.0, pose.yaw_rate),
                        origin: pose.position,
                    }
                }
            })
            .collect();

        let transceivers = scene
            .transceivers
            .iter()
            .map(|tr| match &tr.mount {
                Mount::Fixed { position, boresight } => TransceiverState {
                    position: *position,
                    velocity: Vec3::zeros(),
                    boresight: *boresight,
                },
                Mount::Attached {
                    body,
                    offset,
                    boresight,
                } => {
                    let pose = &bodies[*body];
                    let lever = geometry::rotate_z(offset, pose.yaw);
                    TransceiverState {
                        position: pose.position + lever,
                        velocity: pose.velocity + Vec3::new(0.0, 0.0, pose.yaw_rate).cross(&lever),
                        boresight: geometry::rotate_z(boresight, pose.yaw),
                    }
                }
            })
            .collect();

        Ok(WorldSnapshot {
            t,
            bodies,
            transceivers,
            facets,
        })
    }
}

/// World snapshot of `scene` at time `t`.
pub fn snapshot(scene: &Scene, t: f64) -> Result<WorldSnapshot> {
    SceneKinematics::new(scene).snapshot(scene, t)
}
