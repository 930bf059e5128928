//! Penetration-based soft contact between sole colliders and obstacles.
//!
//! Contacts are vertical and frictionless. Each (body, obstacle) pair yields
//! at most one contact at the deepest point of the body's collider within
//! the obstacle's horizontal extent. Foot bodies never collide with each
//! other.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::kinematics::OrientedBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleRole {
    Heel,
    Moving,
    Metatarsus,
    Ground,
}

/// A square-section obstacle standing on the ground (or the ground itself).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub center_x: f64,
    /// m; infinite for the ground plane.
    pub width: f64,
    /// Top surface height (m).
    pub height: f64,
    pub role: ObstacleRole,
}

impl ObstacleSpec {
    pub const DEFAULT_WIDTH: f64 = 0.02;

    pub fn new(role: ObstacleRole, center_x: f64, height: f64) -> Self {
        Self {
            center_x,
            width: Self::DEFAULT_WIDTH,
            height,
            role,
        }
    }

    /// The ground plane z = 0.
    pub fn ground() -> Self {
        Self {
            center_x: 0.0,
            width: f64::INFINITY,
            height: 0.0,
            role: ObstacleRole::Ground,
        }
    }

    fn x_range(&self) -> (f64, f64) {
        let h = 0.5 * self.width;
        (self.center_x - h, self.center_x + h)
    }
}

/// Where on the body the contact sits: the point `a + t (b − a)` of two
/// body-frame corners, evaluated where the obstacle edge cuts the collider
/// boundary. Vertices have `a == b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSite {
    pub local_a: Point2<f64>,
    pub local_b: Point2<f64>,
    /// Interpolation weight of `b`.
    pub t: f64,
    /// World slope dz/dx of the cut edge; zero for vertices.
    pub slope: f64,
    /// Fixed world x of the cut, when the site lies on an obstacle edge.
    pub cut_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactRecord {
    pub body: String,
    pub sole_index: usize,
    pub role: ObstacleRole,
    /// Index into the obstacle list passed to [`detect_contacts`].
    pub obstacle: usize,
    /// m, positive when overlapping
    pub penetration: f64,
    /// Vertical force on the body (N), ≥ 0. Filled by the solver.
    pub normal_force: f64,
    pub contact_point: [f64; 2],
    pub site: ContactSite,
}

/// Lowest point of a collider within `[x0, x1]`, with its site.
fn lowest_point(bx: &OrientedBox, x0: f64, x1: f64) -> Option<(Point2<f64>, ContactSite)> {
    let local = bx.local_corners();
    let world = bx.corners();
    let mut best: Option<(Point2<f64>, ContactSite)> = None;
    let mut consider = |p: Point2<f64>, site: ContactSite| {
        if best.as_ref().map_or(true, |(b, _)| p.y < b.y) {
            best = Some((p, site));
        }
    };
    for (l, w) in local.iter().zip(&world) {
        if w.x >= x0 && w.x <= x1 {
            consider(
                *w,
                ContactSite {
                    local_a: *l,
                    local_b: *l,
                    t: 0.0,
                    slope: 0.0,
                    cut_x: None,
                },
            );
        }
    }
    for i in 0..4 {
        let j = (i + 1) % 4;
        let (wa, wb) = (world[i], world[j]);
        let dx = wb.x - wa.x;
        if dx.abs() < 1e-15 {
            continue;
        }
        for xe in [x0, x1] {
            if !xe.is_finite() {
                continue;
            }
            let t = (xe - wa.x) / dx;
            if (0.0..=1.0).contains(&t) {
                let slope = (wb.y - wa.y) / dx;
                let p = Point2::new(xe, wa.y + t * (wb.y - wa.y));
                consider(
                    p,
                    ContactSite {
                        local_a: local[i],
                        local_b: local[j],
                        t,
                        slope,
                        cut_x: Some(xe),
                    },
                );
            }
        }
    }
    best
}

/// One record per (body, obstacle) pair with positive overlap. Only
/// body–obstacle pairs are tested; inter-module pairs never are.
pub fn detect_contacts(boxes: &[OrientedBox], obstacles: &[ObstacleSpec]) -> Vec<ContactRecord> {
    let mut out = Vec::new();
    for bx in boxes {
        for (oi, ob) in obstacles.iter().enumerate() {
            let (x0, x1) = ob.x_range();
            let Some((p, site)) = lowest_point(bx, x0, x1) else {
                continue;
            };
            let penetration = ob.height - p.y;
            if penetration > 0.0 {
                out.push(ContactRecord {
                    body: bx.body.clone(),
                    sole_index: bx.sole_index,
                    role: ob.role,
                    obstacle: oi,
                    penetration,
                    normal_force: 0.0,
                    contact_point: [p.x, p.y],
                    site,
                });
            }
        }
    }
    out
}

/// Normal force (N): `max(0, k d + c ḋ)`, zero without penetration.
/// `approach_speed` is the penetration rate, positive when closing.
pub fn contact_force(record: &ContactRecord, k_c: f64, c_c: f64, approach_speed: f64) -> f64 {
    if record.penetration <= 0.0 {
        return 0.0;
    }
    (k_c * record.penetration + c_c * approach_speed).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{collider_boxes, Configuration};
    use crate::model::build_default_softfoot;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Isometry2, Vector2};

    fn unit_box(x: f64, bottom: f64, angle: f64) -> OrientedBox {
        OrientedBox {
            body: "b".into(),
            sole_index: 1,
            frame: Isometry2::new(Vector2::new(x, bottom + 0.01), angle),
            local_center: Point2::new(0.011, 0.0),
            half_extents: Vector2::new(0.011, 0.01),
        }
    }

    #[test]
    fn no_contact_above_obstacles() {
        let model = build_default_softfoot();
        let q = Configuration::flat(&model, 0.05, 0.0);
        let boxes = collider_boxes(&model, &q);
        let obstacles = [ObstacleSpec::new(ObstacleRole::Moving, 0.1, 0.019), ObstacleSpec::ground()];
        assert!(detect_contacts(&boxes, &obstacles).is_empty());
    }

    #[test]
    fn penetration_depth() {
        let bx = unit_box(0.0, 0.019 - 5e-4, 0.0);
        let obstacles = [ObstacleSpec::new(ObstacleRole::Moving, 0.011, 0.019)];
        let c = detect_contacts(&[bx], &obstacles);
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c[0].penetration, 5e-4, epsilon = 1e-15);
    }

    #[test]
    fn tilted_box_cut_by_obstacle_edge() {
        // box tilted so its lowest corner lies outside the obstacle: the
        // deepest point inside is where the bottom edge crosses the obstacle edge
        let bx = unit_box(0.0, 0.0, 0.2);
        let ob = ObstacleSpec {
            center_x: 0.025,
            width: 0.02,
            height: 0.05,
            role: ObstacleRole::Moving,
        };
        let c = detect_contacts(&[bx.clone()], &[ob]);
        assert_eq!(c.len(), 1);
        let s = c[0].site;
        assert_abs_diff_eq!(s.cut_x.unwrap(), 0.015, epsilon = 1e-15);
        let pa = bx.frame * s.local_a;
        let pb = bx.frame * s.local_b;
        let p = pa + s.t * (pb - pa);
        assert_abs_diff_eq!(p.x, c[0].contact_point[0], epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, c[0].contact_point[1], epsilon = 1e-15);
    }

    #[test]
    fn overlapping_modules_do_not_collide() {
        let a = unit_box(0.0, 0.05, 0.0);
        let mut b = unit_box(0.005, 0.05, 0.3);
        b.sole_index = 2;
        assert!(detect_contacts(&[a, b], &[]).is_empty());
    }

    #[test]
    fn force_law() {
        let bx = unit_box(0.0, -0.001, 0.0);
        let rec = &detect_contacts(&[bx], &[ObstacleSpec::ground()])[0];
        assert_abs_diff_eq!(contact_force(rec, 1e5, 100.0, 0.0), 100.0, epsilon = 1e-9);
        assert_eq!(contact_force(rec, 1e5, 100.0, -10.0), 0.0);
        let mut touching = rec.clone();
        touching.penetration = 0.0;
        assert_eq!(contact_force(&touching, 1e5, 100.0, -0.5), 0.0);
        assert_eq!(contact_force(&touching, 1e5, 100.0, 0.0), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn forces_are_non_negative_and_monotone(d1 in 0.0f64..0.01, d2 in 0.0f64..0.01, v in -1.0f64..1.0) {
                let bx = unit_box(0.0, -d1, 0.0);
                let rec = &detect_contacts(&[bx], &[ObstacleSpec::ground()]);
                if let Some(rec) = rec.first() {
                    prop_assert!(contact_force(rec, 2e5, 200.0, v) >= 0.0);
                    let mut deeper = rec.clone();
                    deeper.penetration = rec.penetration + d2;
                    prop_assert!(contact_force(&deeper, 2e5, 200.0, 0.0) >= contact_force(rec, 2e5, 200.0, 0.0));
                }
            }

            #[test]
            fn records_never_pair_two_bodies(z in -0.02f64..0.03, a in -0.5f64..0.5) {
                let boxes = [unit_box(0.0, z, a), unit_box(0.02, z, -a)];
                let obstacles = [ObstacleSpec::ground(), ObstacleSpec::new(ObstacleRole::Heel, 0.01, 0.01)];
                for r in detect_contacts(&boxes, &obstacles) {
                    prop_assert!(r.obstacle < obstacles.len());
                    prop_assert!(r.penetration > 0.0);
                }
            }
        }
    }
}
