//! Planar forward kinematics of the closed-chain foot.
//!
//! Chain 1 runs from the ankle through the posterior arch and heel along the
//! sole to the toe; chain 2 is the anterior arch hinged on the posterior
//! arch. The loop is closed by a point coincidence at the metatarsal joint,
//! which the solver enforces as a penalty on [`loop_closure_residual`].
//!
//! Generalized coordinates are ordered `[slider_z, arch_angle, θ_0 … θ_{n-1}]`.

use nalgebra::{Isometry2, Point2, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{FootModel, ModuleSpec, ANTERIOR_ARCH_ID, POSTERIOR_ARCH_ID};

pub const SLIDER: usize = 0;
pub const ARCH: usize = 1;
pub const FIRST_COUPLING: usize = 2;

/// Margin beyond the soft limits at which coupling angles are hard-capped.
pub const HARD_CAP_MARGIN: f64 = 5.0 * PI / 180.0;

/// Generalized coordinates and velocities of the foot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configuration {
    /// Height of the sole contact line at the heel when not inclined (m).
    pub slider_z: f64,
    /// Fixed inclination of the foot about the ankle (rad, toes up positive).
    pub pitch0: f64,
    /// Rotation of the anterior arch relative to its closed rest direction (rad).
    pub arch_angle: f64,
    /// heel–m1, m1–m2, …, m6–metatarsus, metatarsus–toe (rad).
    pub coupling_angles: Vec<f64>,
    /// Time derivatives of `[slider_z, arch_angle, couplings…]`.
    pub velocities: Vec<f64>,
}

impl Configuration {
    /// All couplings and the arch at rest, zero velocity.
    pub fn flat(model: &FootModel, slider_z: f64, pitch0: f64) -> Self {
        Self {
            slider_z,
            pitch0,
            arch_angle: 0.0,
            coupling_angles: model.couplings.iter().map(|c| c.rest_angle).collect(),
            velocities: vec![0.0; model.dof()],
        }
    }

    pub fn dof(&self) -> usize {
        FIRST_COUPLING + self.coupling_angles.len()
    }

    /// Generalized positions as a flat vector.
    pub fn positions(&self) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.dof());
        q.push(self.slider_z);
        q.push(self.arch_angle);
        q.extend_from_slice(&self.coupling_angles);
        q
    }

    pub fn set_positions(&mut self, q: &[f64]) {
        self.slider_z = q[SLIDER];
        self.arch_angle = q[ARCH];
        self.coupling_angles.copy_from_slice(&q[FIRST_COUPLING..]);
    }

    pub fn coordinate_name(index: usize) -> String {
        match index {
            SLIDER => "slider_z".into(),
            ARCH => "arch_angle".into(),
            i => format!("coupling[{}]", i - FIRST_COUPLING),
        }
    }

    /// Relative rotation between the anterior arch and the metatarsus (rad).
    /// The metatarsal revolute is unconstrained, so this is an output only.
    pub fn meta_angle(&self, model: &FootModel) -> f64 {
        let kin = FootKinematics::new(model, self);
        let meta = kin.sole[model.metatarsus_index()].rotation.angle();
        normalize_angle(meta - kin.anterior_angle)
    }

    /// Checks finiteness and the hard cap on coupling angles.
    pub fn check(&self, model: &FootModel) -> Result<()> {
        if self.coupling_angles.len() != model.couplings.len() || self.velocities.len() != self.dof() {
            return Err(Error::Domain("configuration does not match the model".into()));
        }
        for (i, v) in self.positions().iter().chain(&self.velocities).enumerate() {
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite value in {}",
                    Configuration::coordinate_name(i % self.dof())
                )));
            }
        }
        for (i, (a, c)) in self.coupling_angles.iter().zip(&model.couplings).enumerate() {
            if *a < c.lower_limit - HARD_CAP_MARGIN - 1e-12 || *a > c.upper_limit + HARD_CAP_MARGIN + 1e-12 {
                return Err(Error::Domain(format!("coupling[{i}] = {a} rad is beyond the hard cap")));
            }
        }
        Ok(())
    }
}

/// World pose of one body; `position` is the body centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPose {
    pub body: String,
    pub position: [f64; 2],
    /// rad, in (−π, π]
    pub rotation: f64,
}

/// A body of the assembly, for Jacobian queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyRef {
    /// Rigidly welded to the heel.
    PosteriorArch,
    /// Sole body by index, heel = 0.
    Sole(usize),
    AnteriorArch,
}

/// An oriented collider rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedBox {
    pub body: String,
    /// Sole index of the owning body.
    pub sole_index: usize,
    /// Body frame (origin at the proximal contact).
    pub frame: Isometry2<f64>,
    /// Box centre in the body frame.
    pub local_center: Point2<f64>,
    pub half_extents: Vector2<f64>,
}

impl OrientedBox {
    pub fn center(&self) -> Point2<f64> {
        self.frame * self.local_center
    }

    pub fn rotation(&self) -> f64 {
        self.frame.rotation.angle()
    }

    /// Corners in the body frame, counter-clockwise.
    pub fn local_corners(&self) -> [Point2<f64>; 4] {
        let c = self.local_center;
        let h = self.half_extents;
        [
            Point2::new(c.x - h.x, c.y - h.y),
            Point2::new(c.x + h.x, c.y - h.y),
            Point2::new(c.x + h.x, c.y + h.y),
            Point2::new(c.x - h.x, c.y + h.y),
        ]
    }

    pub fn corners(&self) -> [Point2<f64>; 4] {
        self.local_corners().map(|p| self.frame * p)
    }
}

/// Transform from the distal-contact frame of `module_a` to the frame of
/// `module_b` for a rolling coupling flexed by `theta_total`.
///
/// The rolling surfaces are arcs of radius `half_height` centred inside each
/// module; the coupling behaves as two hinges at those centres that each turn
/// by half the total angle, which keeps the contact point coincident on both
/// surfaces.
pub fn rolling_coupling_transform(
    theta_total: f64,
    module_a: &ModuleSpec,
    module_b: &ModuleSpec,
) -> Isometry2<f64> {
    let ra = module_a.half_height;
    let rb = module_b.half_height;
    let half = 0.5 * theta_total;
    Isometry2::translation(-ra, 0.0)
        * Isometry2::rotation(half)
        * Isometry2::translation(ra + rb, 0.0)
        * Isometry2::rotation(half)
        * Isometry2::translation(-rb, 0.0)
}

/// Cached kinematic quantities for one configuration.
#[derive(Debug, Clone)]
pub struct FootKinematics {
    /// World frame of each sole body.
    pub sole: Vec<Isometry2<f64>>,
    /// Instantaneous centre of relative rotation of each coupling.
    pub instant_centers: Vec<Point2<f64>>,
    pub ankle: Point2<f64>,
    pub arch_joint: Point2<f64>,
    /// World direction of the anterior arch (rad).
    pub anterior_angle: f64,
    /// Distal end of the anterior arch.
    pub anterior_tip: Point2<f64>,
    /// Metatarsal joint as carried by the metatarsus.
    pub metatarsal_joint: Point2<f64>,
}

impl FootKinematics {
    pub fn new(model: &FootModel, q: &Configuration) -> Self {
        let sole_specs = model.sole();
        let ankle_local = Vector2::new(model.heel.ankle[0], model.heel.ankle[1]);
        let ankle = Point2::new(ankle_local.x, q.slider_z + ankle_local.y);
        let heel = Isometry2::new(ankle.coords, q.pitch0) * Isometry2::translation(-ankle_local.x, -ankle_local.y);

        let mut sole = Vec::with_capacity(sole_specs.len());
        let mut instant_centers = Vec::with_capacity(q.coupling_angles.len());
        sole.push(heel);
        for (j, theta) in q.coupling_angles.iter().enumerate() {
            let a = sole_specs[j];
            let b = sole_specs[j + 1];
            let distal_contact = sole[j] * Isometry2::translation(a.pitch, 0.0);
            let ca = distal_contact * Point2::new(-a.half_height, 0.0);
            let next = distal_contact * rolling_coupling_transform(*theta, a, b);
            let cb = next * Point2::new(b.half_height, 0.0);
            instant_centers.push(Point2::from((ca.coords + cb.coords) * 0.5));
            sole.push(next);
        }

        let arch_joint = heel * Point2::new(model.heel.arch_joint[0], model.heel.arch_joint[1]);
        let anterior_angle = heel.rotation.angle() + model.anterior_rest_direction() + q.arch_angle;
        let anterior_tip = arch_joint + model.anterior_arch.length * Vector2::new(anterior_angle.cos(), anterior_angle.sin());
        let mj = model.metatarsus.joint;
        let metatarsal_joint = sole[model.metatarsus_index()] * Point2::new(mj[0], mj[1]);

        Self {
            sole,
            instant_centers,
            ankle,
            arch_joint,
            anterior_angle,
            anterior_tip,
            metatarsal_joint,
        }
    }

    /// Loop-closure gap vector: anterior-arch tip minus metatarsal joint.
    pub fn closure_gap(&self) -> Vector2<f64> {
        self.anterior_tip - self.metatarsal_joint
    }

    /// Centre of mass of a body in world coordinates.
    pub fn center_of_mass(&self, model: &FootModel, body: BodyRef) -> Point2<f64> {
        match body {
            BodyRef::Sole(k) => {
                let c = model.sole()[k].center();
                self.sole[k] * Point2::new(c[0], c[1])
            }
            BodyRef::PosteriorArch => Point2::from((self.ankle.coords + self.arch_joint.coords) * 0.5),
            BodyRef::AnteriorArch => Point2::from((self.arch_joint.coords + self.anterior_tip.coords) * 0.5),
        }
    }

    /// Velocity of a world point rigidly attached to `body` per unit rate of
    /// generalized coordinate `coord`.
    pub fn point_jacobian_column(&self, body: BodyRef, point: Point2<f64>, coord: usize) -> Vector2<f64> {
        match coord {
            SLIDER => Vector2::new(0.0, 1.0),
            ARCH => match body {
                BodyRef::AnteriorArch => rot90(point - self.arch_joint),
                _ => Vector2::zeros(),
            },
            c => {
                let j = c - FIRST_COUPLING;
                match body {
                    BodyRef::Sole(k) if k > j => rot90(point - self.instant_centers[j]),
                    _ => Vector2::zeros(),
                }
            }
        }
    }

    /// All Jacobian columns of a point on `body`.
    pub fn point_jacobian(&self, body: BodyRef, point: Point2<f64>, dof: usize) -> Vec<Vector2<f64>> {
        (0..dof).map(|c| self.point_jacobian_column(body, point, c)).collect()
    }

    /// Angular velocity of `body` per unit rate of coordinate `coord`.
    pub fn angular_jacobian(&self, body: BodyRef, coord: usize) -> f64 {
        match (body, coord) {
            (_, SLIDER) => 0.0,
            (BodyRef::AnteriorArch, ARCH) => 1.0,
            (BodyRef::Sole(k), c) if c >= FIRST_COUPLING && k > c - FIRST_COUPLING => 1.0,
            _ => 0.0,
        }
    }
}

/// Counter-clockwise quarter turn.
pub fn rot90(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Body poses of chain 1 (posterior arch, heel … toe) then chain 2
/// (anterior arch), in world coordinates.
pub fn forward_kinematics(model: &FootModel, q: &Configuration) -> Vec<BodyPose> {
    poses_from(model, &FootKinematics::new(model, q))
}

pub(crate) fn poses_from(model: &FootModel, kin: &FootKinematics) -> Vec<BodyPose> {
    let mut out = Vec::with_capacity(model.sole_len() + 2);
    let heel_rot = kin.sole[0].rotation.angle();
    let post_com = kin.center_of_mass(model, BodyRef::PosteriorArch);
    out.push(BodyPose {
        body: POSTERIOR_ARCH_ID.into(),
        position: [post_com.x, post_com.y],
        rotation: normalize_angle(heel_rot),
    });
    for (k, spec) in model.sole().iter().enumerate() {
        let c = kin.center_of_mass(model, BodyRef::Sole(k));
        out.push(BodyPose {
            body: spec.id.clone(),
            position: [c.x, c.y],
            rotation: normalize_angle(kin.sole[k].rotation.angle()),
        });
    }
    let ant = kin.center_of_mass(model, BodyRef::AnteriorArch);
    out.push(BodyPose {
        body: ANTERIOR_ARCH_ID.into(),
        position: [ant.x, ant.y],
        rotation: normalize_angle(kin.anterior_angle),
    });
    out
}

/// Distance between the anterior-arch tip and the metatarsal joint (m).
/// Only position is constrained; relative orientation is free.
pub fn loop_closure_residual(model: &FootModel, q: &Configuration) -> f64 {
    FootKinematics::new(model, q).closure_gap().norm()
}

/// One collider box per sole body.
pub fn collider_boxes(model: &FootModel, q: &Configuration) -> Vec<OrientedBox> {
    boxes_from(model, &FootKinematics::new(model, q))
}

pub(crate) fn boxes_from(model: &FootModel, kin: &FootKinematics) -> Vec<OrientedBox> {
    model
        .sole()
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let c = spec.center();
            OrientedBox {
                body: spec.id.clone(),
                sole_index: k,
                frame: kin.sole[k],
                local_center: Point2::new(c[0], c[1]),
                half_extents: Vector2::new(spec.collider[0], spec.collider[1]),
            }
        })
        .collect()
}

/// Rebuilds sole body frames from poses produced by [`forward_kinematics`].
pub(crate) fn sole_frames_from_poses(model: &FootModel, poses: &[BodyPose]) -> Result<Vec<Isometry2<f64>>> {
    model
        .sole()
        .iter()
        .map(|spec| {
            let pose = poses
                .iter()
                .find(|p| p.body == spec.id)
                .ok_or_else(|| Error::UnknownBody(spec.id.clone()))?;
            let c = spec.center();
            let frame = Isometry2::new(Vector2::new(pose.position[0], pose.position[1]), pose.rotation);
            Ok(frame * Isometry2::translation(-c[0], -c[1]))
        })
        .collect()
}
