//! Minimal-path tendon routing over module pulleys.
//!
//! Each route waypoint is either a fixed pin or a circular pulley that the
//! tendon must pass on a given side. The taut path is built with a stack
//! sweep over common tangents: a pulley stays in the path only while the
//! incoming and outgoing tangents actually wrap it (positive wrap angle),
//! otherwise the tendon runs straight past it. Path length therefore follows
//! the rotation of the sole modules.

use nalgebra::{Isometry2, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{rot90, sole_frames_from_poses, BodyPose, Configuration, FootKinematics};
use crate::model::{FootModel, PulleySide, TendonSpec};

/// One element of a routed tendon path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PathElement {
    Straight {
        from: [f64; 2],
        to: [f64; 2],
        length: f64,
    },
    Arc {
        module: String,
        center: [f64; 2],
        radius: f64,
        entry_angle: f64,
        exit_angle: f64,
        /// Wrap angle (rad), positive.
        wrap: f64,
        length: f64,
    },
}

impl PathElement {
    pub fn length(&self) -> f64 {
        match self {
            PathElement::Straight { length, .. } | PathElement::Arc { length, .. } => *length,
        }
    }
}

/// A routed tendon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendonPath {
    pub elements: Vec<PathElement>,
    /// m
    pub total_length: f64,
    /// Signed `dL/dθ` per coupling (m): the perpendicular distance from the
    /// coupling's rolling centre to the tendon line crossing it, positive
    /// when flexing the coupling lengthens the tendon.
    pub moment_arms: Vec<f64>,
}

impl TendonPath {
    pub fn arcs(&self) -> impl Iterator<Item = &PathElement> {
        self.elements.iter().filter(|e| matches!(e, PathElement::Arc { .. }))
    }
}

/// Routing element resolved in world coordinates.
#[derive(Debug, Clone, Copy)]
struct Wrap {
    sole_index: usize,
    center: Point2<f64>,
    radius: f64,
    /// +1 when the pulley centre is on the left of the direction of travel.
    sigma: f64,
}

impl Wrap {
    fn signed_radius(&self) -> f64 {
        self.sigma * self.radius
    }

    fn is_pin(&self) -> bool {
        self.radius == 0.0
    }
}

/// Common tangent from `a` to `b` respecting both sides: unit direction plus
/// the two tangent points.
fn tangent(a: &Wrap, b: &Wrap) -> Option<(Vector2<f64>, Point2<f64>, Point2<f64>)> {
    let d = b.center - a.center;
    let l = d.norm();
    let delta = b.signed_radius() - a.signed_radius();
    if l == 0.0 || delta.abs() > l {
        return None;
    }
    let beta = d.y.atan2(d.x) - (delta / l).asin();
    let dir = Vector2::new(beta.cos(), beta.sin());
    let n = rot90(dir);
    let pa = a.center - a.signed_radius() * n;
    let pb = b.center - b.signed_radius() * n;
    Some((dir, pa, pb))
}

fn signed_turn(from: Vector2<f64>, to: Vector2<f64>) -> f64 {
    (from.x * to.y - from.y * to.x).atan2(from.dot(&to))
}

fn resolve(model: &FootModel, frames: &[Isometry2<f64>]) -> Result<Vec<Wrap>> {
    let sole = model.sole();
    model
        .tendon
        .route
        .iter()
        .map(|wp| {
            let k = sole
                .iter()
                .position(|m| m.id == wp.module)
                .ok_or_else(|| Error::UnknownBody(wp.module.clone()))?;
            let spec = sole[k];
            let center = frames[k] * Point2::new(spec.pulley_offset[0], spec.pulley_offset[1]);
            let (radius, sigma) = match wp.side {
                PulleySide::Pin => (0.0, 0.0),
                PulleySide::Below => (spec.pulley_radius, 1.0),
                PulleySide::Above => (spec.pulley_radius, -1.0),
            };
            Ok(Wrap {
                sole_index: k,
                center,
                radius,
                sigma,
            })
        })
        .collect()
}

fn overlap_error(model: &FootModel, a: &Wrap, b: &Wrap) -> Error {
    let sole = model.sole();
    Error::PulleyOverlap {
        first: sole[a.sole_index].id.clone(),
        second: sole[b.sole_index].id.clone(),
    }
}

/// Wrap angle at `b` between neighbours `a` and `c`.
fn wrap_angle(model: &FootModel, a: &Wrap, b: &Wrap, c: &Wrap) -> Result<f64> {
    let (d_in, _, _) = tangent(a, b).ok_or_else(|| overlap_error(model, a, b))?;
    let (d_out, _, _) = tangent(b, c).ok_or_else(|| overlap_error(model, b, c))?;
    Ok(b.sigma * signed_turn(d_in, d_out))
}

/// Routes the tendon through the sole given world body poses.
pub fn compute_tendon_path(model: &FootModel, poses: &[BodyPose]) -> Result<TendonPath> {
    let frames = sole_frames_from_poses(model, poses)?;
    route(model, &frames)
}

/// Routes the tendon for a configuration using cached kinematics.
pub fn tendon_path_for(model: &FootModel, kin: &FootKinematics) -> Result<TendonPath> {
    route(model, &kin.sole)
}

fn route(model: &FootModel, frames: &[Isometry2<f64>]) -> Result<TendonPath> {
    let wraps = resolve(model, frames)?;
    if wraps.len() < 2 {
        return Err(Error::Domain("tendon route needs at least two waypoints".into()));
    }

    let mut active: Vec<usize> = vec![0];
    for e in 1..wraps.len() {
        active.push(e);
        while active.len() >= 3 {
            let n = active.len();
            let (a, b, c) = (&wraps[active[n - 3]], &wraps[active[n - 2]], &wraps[active[n - 1]]);
            if b.is_pin() || wrap_angle(model, a, b, c)? >= 0.0 {
                break;
            }
            active.remove(n - 2);
        }
    }

    let sole = model.sole();
    let mut elements = Vec::new();
    let mut moment_arms = vec![0.0; model.couplings.len()];
    let instant_centers = instant_centers(model, frames);
    let mut prev_exit: Option<(Vector2<f64>, Point2<f64>)> = None;
    for pair in active.windows(2) {
        let (a, b) = (&wraps[pair[0]], &wraps[pair[1]]);
        let (dir, pa, pb) = tangent(a, b).ok_or_else(|| overlap_error(model, a, b))?;
        if let Some((d_in, p_in)) = prev_exit {
            if !a.is_pin() {
                let wrap = a.sigma * signed_turn(d_in, dir);
                let entry = p_in - a.center;
                let exit = pa - a.center;
                elements.push(PathElement::Arc {
                    module: sole[a.sole_index].id.clone(),
                    center: [a.center.x, a.center.y],
                    radius: a.radius,
                    entry_angle: entry.y.atan2(entry.x),
                    exit_angle: exit.y.atan2(exit.x),
                    wrap,
                    length: a.radius * wrap,
                });
            }
        }
        elements.push(PathElement::Straight {
            from: [pa.x, pa.y],
            to: [pb.x, pb.y],
            length: (pb - pa).norm(),
        });
        // rigid rotation of everything distal of coupling j about its
        // instantaneous centre changes L by d·(v(pb) − v(pa))
        for (j, ic) in instant_centers.iter().enumerate() {
            let mut rate = 0.0;
            if b.sole_index > j {
                rate += dir.dot(&rot90(pb - ic));
            }
            if a.sole_index > j {
                rate -= dir.dot(&rot90(pa - ic));
            }
            moment_arms[j] += rate;
        }
        prev_exit = Some((dir, pb));
    }

    let total_length = elements.iter().map(PathElement::length).sum();
    Ok(TendonPath {
        elements,
        total_length,
        moment_arms,
    })
}

fn instant_centers(model: &FootModel, frames: &[Isometry2<f64>]) -> Vec<Point2<f64>> {
    let sole = model.sole();
    (0..model.couplings.len())
        .map(|j| {
            let a = sole[j];
            let b = sole[j + 1];
            let ca = frames[j] * Point2::new(a.pitch - a.half_height, 0.0);
            let cb = frames[j + 1] * Point2::new(b.half_height, 0.0);
            Point2::from((ca.coords + cb.coords) * 0.5)
        })
        .collect()
}

/// Tendon length with every coupling at rest.
pub fn flat_tendon_length(model: &FootModel) -> Result<f64> {
    let q = Configuration::flat(model, 0.0, 0.0);
    let kin = FootKinematics::new(model, &q);
    Ok(tendon_path_for(model, &kin)?.total_length)
}

/// Unilateral stiff spring: zero while slack, `k (L − L_max)` once taut.
pub fn tendon_tension(path: &TendonPath, spec: &TendonSpec) -> f64 {
    spec.tension_stiffness * (path.total_length - spec.max_length).max(0.0)
}

/// Elastic energy stored in the tendon (J).
pub fn tendon_energy(path: &TendonPath, spec: &TendonSpec) -> f64 {
    let stretch = (path.total_length - spec.max_length).max(0.0);
    0.5 * spec.tension_stiffness * stretch * stretch
}

/// Coupling torques from a tendon tension, opposing path lengthening.
pub fn tendon_joint_torques(path: &TendonPath, tension: f64) -> Vec<f64> {
    path.moment_arms.iter().map(|r| -tension * r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;
    use crate::model::{build_default_softfoot, Waypoint};
    use approx::assert_abs_diff_eq;

    fn pin(x: f64, y: f64) -> Wrap {
        Wrap {
            sole_index: 0,
            center: Point2::new(x, y),
            radius: 0.0,
            sigma: 0.0,
        }
    }

    #[test]
    fn tangent_around_quarter_circle() {
        // anchors (-0.05, 0.01) and (0.01, -0.05) around a 10 mm pulley at
        // the origin: two 50 mm tangents plus a quarter turn of arc
        let a = pin(-0.05, 0.01);
        let c = pin(0.01, -0.05);
        let b = Wrap {
            sole_index: 0,
            center: Point2::origin(),
            radius: 0.01,
            sigma: -1.0,
        };
        let (d1, _, p1) = tangent(&a, &b).unwrap();
        let (d2, p2, _) = tangent(&b, &c).unwrap();
        assert_abs_diff_eq!((p1 - a.center).norm(), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!((c.center - p2).norm(), 0.05, epsilon = 1e-15);
        let wrap = b.sigma * signed_turn(d1, d2);
        assert_abs_diff_eq!(wrap, std::f64::consts::FRAC_PI_2, epsilon = 1e-14);
        let total = 0.05 + 0.01 * wrap + 0.05;
        assert_abs_diff_eq!(total, 0.115708, epsilon = 1e-6);
    }

    #[test]
    fn straight_when_nothing_wraps() {
        let a = pin(0.0, 0.0);
        let b = pin(0.1, 0.0);
        let (_, pa, pb) = tangent(&a, &b).unwrap();
        assert_abs_diff_eq!((pb - pa).norm(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn flexing_a_coupling_lengthens_the_path() {
        let model = build_default_softfoot();
        let flat = Configuration::flat(&model, 0.05, 0.0);
        let l0 = compute_tendon_path(&model, &forward_kinematics(&model, &flat)).unwrap().total_length;
        assert_abs_diff_eq!(l0, model.tendon.rest_length, epsilon = 1e-15);
        let mut bent = flat.clone();
        bent.coupling_angles[3] = 20f64.to_radians();
        let l1 = compute_tendon_path(&model, &forward_kinematics(&model, &bent)).unwrap().total_length;
        assert!(l1 > l0, "{l1} <= {l0}");
    }

    #[test]
    fn overlapping_pulleys_are_reported() {
        let mut model = build_default_softfoot();
        // make m2 pass above and m3 below with pulleys large enough to cross
        for m in &mut model.fascia {
            m.pulley_radius = 0.0099;
            m.pulley_offset = [0.011, 0.0];
        }
        model.tendon.route[2] = Waypoint {
            module: "m2".into(),
            side: PulleySide::Above,
        };
        model.fascia[1].pulley_offset = [0.0215, 0.0];
        model.fascia[2].pulley_offset = [0.0005, 0.0];
        let q = Configuration::flat(&model, 0.05, 0.0);
        let err = compute_tendon_path(&model, &forward_kinematics(&model, &q)).unwrap_err();
        assert!(matches!(err, Error::PulleyOverlap { ref first, ref second } if first == "m2" && second == "m3"), "{err}");
    }

    #[test]
    fn tension_law() {
        let model = build_default_softfoot();
        let spec = TendonSpec {
            max_length: 0.3,
            tension_stiffness: 1e5,
            ..model.tendon.clone()
        };
        let path = |l: f64| TendonPath {
            elements: vec![],
            total_length: l,
            moment_arms: vec![0.005, 0.0],
        };
        assert_eq!(tendon_tension(&path(0.299), &spec), 0.0);
        assert_abs_diff_eq!(tendon_tension(&path(0.301), &spec), 100.0, epsilon = 1e-9);
        assert_eq!(tendon_joint_torques(&path(0.3), 0.0), vec![0.0, 0.0]);
        let tau = tendon_joint_torques(&path(0.3), 10.0);
        assert_abs_diff_eq!(tau[0].abs(), 0.05, epsilon = 1e-15);
        let mut last = 0.0;
        for i in 0..100 {
            let t = tendon_tension(&path(0.29 + 2e-4 * i as f64), &spec);
            assert!(t >= last);
            last = t;
        }
    }
}
