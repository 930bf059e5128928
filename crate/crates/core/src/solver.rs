//! Damped dynamic relaxation to quasi-static equilibrium.
//!
//! Forces from gravity, the slider load, coupling springs and limits, the
//! tendon, soft contacts and the loop-closure penalty are assembled on the
//! generalized coordinates and integrated with a lumped diagonal mass. Each
//! step is semi-implicit in velocity: the damping and the Gauss-Newton
//! stiffness of the penalty terms are taken implicitly, which keeps stiff
//! contacts and the closure penalty stable at a 0.1 ms step without
//! affecting the equilibrium that is reached.

use nalgebra::{DMatrix, DVector, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::contact::{detect_contacts, ContactRecord, ObstacleSpec};
use crate::error::{Error, Result};
use crate::kinematics::{
    boxes_from, BodyRef, Configuration, FootKinematics, FIRST_COUPLING, HARD_CAP_MARGIN, SLIDER,
};
use crate::model::FootModel;
use crate::tendon::{tendon_energy, tendon_path_for, tendon_tension, TendonPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// s
    pub timestep: f64,
    /// s
    pub duration: f64,
    /// N/m
    pub loop_penalty_stiffness: f64,
    /// Viscous damping rate applied to all coordinates (1/s).
    pub global_damping: f64,
    /// Kinetic energy below which motion counts as settled (J).
    pub convergence_ke: f64,
    /// Time the kinetic energy must stay below the threshold (s).
    pub convergence_window: f64,
    /// N/m per contact
    pub contact_stiffness: f64,
    /// N·s/m per contact
    pub contact_damping: f64,
    /// Horizontal viscous damping at contacts (N·s/m); never reported.
    pub tangential_damping: f64,
    /// m/s²
    pub gravity: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            timestep: 1.0e-4,
            duration: 5.0,
            loop_penalty_stiffness: 1.0e7,
            global_damping: 10.0,
            convergence_ke: 1.0e-8,
            convergence_window: 0.1,
            contact_stiffness: 2.0e5,
            contact_damping: 200.0,
            tangential_damping: 50.0,
            gravity: crate::GRAVITY,
        }
    }
}

impl SolverSettings {
    pub fn check(&self) -> Result<()> {
        if !(self.timestep > 0.0 && self.duration > 0.0 && self.convergence_ke > 0.0) {
            return Err(Error::Domain(
                "timestep, duration and convergence_ke must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// External conditions of one settle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub obstacles: Vec<ObstacleSpec>,
    /// Downward force on the slider (N).
    pub load: f64,
    /// Initial inclination of the foot about the ankle (rad).
    pub pitch0: f64,
}

#[derive(Debug, Clone)]
pub struct DynamicsState {
    pub q: Configuration,
    pub time: f64,
    pub kinetic_energy: f64,
    pub contacts: Vec<ContactRecord>,
    pub tendon: TendonPath,
}

/// Everything computed while assembling forces at one state.
#[derive(Debug, Clone)]
pub struct ForceEvaluation {
    /// Generalized force including velocity-dependent terms.
    pub forces: Vec<f64>,
    /// Gauss-Newton stiffness of the penalty terms.
    pub stiffness: DMatrix<f64>,
    /// Linear damping matrix (joint, contact and tangential dampers).
    pub damping: DMatrix<f64>,
    pub contacts: Vec<ContactRecord>,
    pub tendon: TendonPath,
    pub tension: f64,
    pub closure_residual: f64,
}

/// Vertical (and horizontal) Jacobian rows of a contact site.
fn contact_rows(kin: &FootKinematics, rec: &ContactRecord, dof: usize) -> (Vec<f64>, Vec<f64>) {
    let body = BodyRef::Sole(rec.sole_index);
    let frame = kin.sole[rec.sole_index];
    let pa = frame * rec.site.local_a;
    let pb = frame * rec.site.local_b;
    let point = Point2::new(rec.contact_point[0], rec.contact_point[1]);
    let t = rec.site.t;
    let mut dz = vec![0.0; dof];
    let mut dx = vec![0.0; dof];
    for c in 0..dof {
        let ja = kin.point_jacobian_column(body, pa, c);
        let jb = kin.point_jacobian_column(body, pb, c);
        dz[c] = match rec.site.cut_x {
            // the cut point slides along the edge at fixed world x
            Some(_) => (1.0 - t) * ja.y + t * jb.y - rec.site.slope * ((1.0 - t) * ja.x + t * jb.x),
            None => ja.y,
        };
        dx[c] = kin.point_jacobian_column(body, point, c).x;
    }
    (dz, dx)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_outer(m: &mut DMatrix<f64>, scale: f64, a: &[f64]) {
    for i in 0..a.len() {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..a.len() {
            m[(i, j)] += scale * a[i] * a[j];
        }
    }
}

/// Assembles all generalized forces at `q` (using `q.velocities` for the
/// dissipative terms).
pub fn evaluate(
    model: &FootModel,
    q: &Configuration,
    scene: &Scene,
    settings: &SolverSettings,
) -> Result<ForceEvaluation> {
    let n = model.dof();
    let kin = FootKinematics::new(model, q);
    let v = &q.velocities;
    let mut f = vec![0.0; n];
    let mut stiffness = DMatrix::zeros(n, n);
    let mut damping = DMatrix::zeros(n, n);

    // gravity
    for (body, mass) in bodies_with_mass(model) {
        let p = kin.center_of_mass(model, body);
        for (c, fc) in f.iter_mut().enumerate() {
            *fc -= mass * settings.gravity * kin.point_jacobian_column(body, p, c).y;
        }
    }
    f[SLIDER] -= scene.load;

    // coupling springs, dampers and limits
    for (j, (theta, spec)) in q.coupling_angles.iter().zip(&model.couplings).enumerate() {
        let c = FIRST_COUPLING + j;
        let excess = spec.limit_excess(*theta);
        f[c] += -spec.joint_stiffness * (theta - spec.rest_angle)
            - spec.joint_damping * v[c]
            - spec.limit_stiffness * excess;
        stiffness[(c, c)] += spec.joint_stiffness + if excess != 0.0 { spec.limit_stiffness } else { 0.0 };
        damping[(c, c)] += spec.joint_damping;
    }

    // loop-closure penalty on the metatarsal joint position
    let gap = kin.closure_gap();
    let meta = BodyRef::Sole(model.metatarsus_index());
    let mut gap_rows = [vec![0.0; n], vec![0.0; n]];
    for c in 0..n {
        let d = kin.point_jacobian_column(BodyRef::AnteriorArch, kin.anterior_tip, c)
            - kin.point_jacobian_column(meta, kin.metatarsal_joint, c);
        gap_rows[0][c] = d.x;
        gap_rows[1][c] = d.y;
        f[c] -= settings.loop_penalty_stiffness * gap.dot(&d);
    }
    for row in &gap_rows {
        add_outer(&mut stiffness, settings.loop_penalty_stiffness, row);
    }

    // tendon
    let tendon = tendon_path_for(model, &kin)?;
    let tension = tendon_tension(&tendon, &model.tendon);
    let mut arm_row = vec![0.0; n];
    for (j, r) in tendon.moment_arms.iter().enumerate() {
        arm_row[FIRST_COUPLING + j] = *r;
        f[FIRST_COUPLING + j] -= tension * r;
    }
    if tension > 0.0 {
        add_outer(&mut stiffness, model.tendon.tension_stiffness, &arm_row);
    }

    // contacts
    let boxes = boxes_from(model, &kin);
    let mut contacts = detect_contacts(&boxes, &scene.obstacles);
    for rec in &mut contacts {
        let (dz, dx) = contact_rows(&kin, rec, n);
        let approach = -dot(&dz, v);
        let normal = (settings.contact_stiffness * rec.penetration + settings.contact_damping * approach).max(0.0);
        rec.normal_force = normal;
        let tangential = -settings.tangential_damping * dot(&dx, v);
        for c in 0..n {
            f[c] += normal * dz[c] + tangential * dx[c];
        }
        if normal > 0.0 {
            add_outer(&mut stiffness, settings.contact_stiffness, &dz);
            add_outer(&mut damping, settings.contact_damping, &dz);
        }
        add_outer(&mut damping, settings.tangential_damping, &dx);
    }

    Ok(ForceEvaluation {
        forces: f,
        stiffness,
        damping,
        contacts,
        tendon,
        tension,
        closure_residual: gap.norm(),
    })
}

/// Generalized force vector at `q`.
pub fn generalized_forces(
    model: &FootModel,
    q: &Configuration,
    scene: &Scene,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    Ok(evaluate(model, q, scene, settings)?.forces)
}

/// Potential energy of the conservative force elements (J).
pub fn potential_energy(
    model: &FootModel,
    q: &Configuration,
    scene: &Scene,
    settings: &SolverSettings,
) -> Result<f64> {
    let kin = FootKinematics::new(model, q);
    let mut e = 0.0;
    for (body, mass) in bodies_with_mass(model) {
        e += mass * settings.gravity * kin.center_of_mass(model, body).y;
    }
    e += scene.load * q.slider_z;
    for (theta, spec) in q.coupling_angles.iter().zip(&model.couplings) {
        let d = theta - spec.rest_angle;
        let x = spec.limit_excess(*theta);
        e += 0.5 * spec.joint_stiffness * d * d + 0.5 * spec.limit_stiffness * x * x;
    }
    e += 0.5 * settings.loop_penalty_stiffness * kin.closure_gap().norm_squared();
    e += tendon_energy(&tendon_path_for(model, &kin)?, &model.tendon);
    for rec in detect_contacts(&boxes_from(model, &kin), &scene.obstacles) {
        e += 0.5 * settings.contact_stiffness * rec.penetration * rec.penetration;
    }
    Ok(e)
}

fn bodies_with_mass(model: &FootModel) -> Vec<(BodyRef, f64)> {
    let mut out: Vec<(BodyRef, f64)> = model
        .sole()
        .iter()
        .enumerate()
        .map(|(k, m)| (BodyRef::Sole(k), m.mass))
        .collect();
    out.push((BodyRef::PosteriorArch, model.posterior_arch.mass));
    out.push((BodyRef::AnteriorArch, model.anterior_arch.mass));
    out
}

/// Diagonal of the generalized mass matrix at `q`: translational and
/// rotational inertia of every body projected on each coordinate.
pub fn lumped_mass(model: &FootModel, q: &Configuration) -> Vec<f64> {
    let kin = FootKinematics::new(model, q);
    let sole = model.sole();
    let mut m = vec![0.0; model.dof()];
    for (body, mass) in bodies_with_mass(model) {
        let inertia = match body {
            BodyRef::Sole(k) => {
                let s = sole[k];
                mass * (4.0 * s.collider[0].powi(2) + 4.0 * s.collider[1].powi(2)) / 12.0
            }
            BodyRef::PosteriorArch => mass * model.posterior_arch.length.powi(2) / 12.0,
            BodyRef::AnteriorArch => mass * model.anterior_arch.length.powi(2) / 12.0,
        };
        let p = kin.center_of_mass(model, body);
        for (c, mc) in m.iter_mut().enumerate() {
            let j: Vector2<f64> = kin.point_jacobian_column(body, p, c);
            let w = kin.angular_jacobian(body, c);
            *mc += mass * j.norm_squared() + inertia * w * w;
        }
    }
    m
}

/// A single relaxation run with fixed masses.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    pub model: &'a FootModel,
    pub scene: &'a Scene,
    pub settings: &'a SolverSettings,
    pub mass: Vec<f64>,
}

impl<'a> Solver<'a> {
    pub fn new(model: &'a FootModel, scene: &'a Scene, settings: &'a SolverSettings, q0: &Configuration) -> Self {
        Self {
            model,
            scene,
            settings,
            mass: lumped_mass(model, q0),
        }
    }

    pub fn initial_state(&self, q: Configuration) -> Result<DynamicsState> {
        let eval = evaluate(self.model, &q, self.scene, self.settings)?;
        Ok(DynamicsState {
            kinetic_energy: kinetic_energy(&self.mass, &q.velocities),
            q,
            time: 0.0,
            contacts: eval.contacts,
            tendon: eval.tendon,
        })
    }

    /// Advances one timestep: velocities from
    /// `(M + h(C + γM) + h²K) v' = M v + h F`, then positions from `v'`.
    pub fn step(&self, state: &DynamicsState) -> Result<DynamicsState> {
        let h = self.settings.timestep;
        let n = self.model.dof();
        let eval = evaluate(self.model, &state.q, self.scene, self.settings)?;
        let v = &state.q.velocities;

        let mut a = eval.damping * h + eval.stiffness * (h * h);
        let mut b = DVector::zeros(n);
        for i in 0..n {
            let m = self.mass[i];
            a[(i, i)] += m * (1.0 + h * self.settings.global_damping);
            b[i] = m * v[i] + h * eval.forces[i];
        }
        let v_new = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a.lu().solve(&b).ok_or_else(|| Error::Divergence {
                time: state.time,
                coordinate: "system matrix".into(),
            })?,
        };

        let mut q = state.q.clone();
        let mut pos = q.positions();
        let mut vel: Vec<f64> = v_new.iter().copied().collect();
        for i in 0..n {
            pos[i] += h * vel[i];
        }
        for (j, spec) in self.model.couplings.iter().enumerate() {
            let i = FIRST_COUPLING + j;
            let lo = spec.lower_limit - HARD_CAP_MARGIN;
            let hi = spec.upper_limit + HARD_CAP_MARGIN;
            if pos[i] < lo || pos[i] > hi {
                pos[i] = pos[i].clamp(lo, hi);
                vel[i] = 0.0;
            }
        }
        for (i, (p, w)) in pos.iter().zip(&vel).enumerate() {
            if !p.is_finite() || !w.is_finite() {
                return Err(Error::Divergence {
                    time: state.time + h,
                    coordinate: Configuration::coordinate_name(i),
                });
            }
        }
        q.set_positions(&pos);
        q.velocities = vel;
        Ok(DynamicsState {
            kinetic_energy: kinetic_energy(&self.mass, &q.velocities),
            q,
            time: state.time + h,
            contacts: eval.contacts,
            tendon: eval.tendon,
        })
    }
}

pub fn kinetic_energy(mass: &[f64], v: &[f64]) -> f64 {
    0.5 * mass.iter().zip(v).map(|(m, w)| m * w * w).sum::<f64>()
}

/// Result of [`settle`].
#[derive(Debug, Clone)]
pub struct Settled {
    pub state: DynamicsState,
    /// Contacts, tendon and residuals evaluated at the final configuration
    /// with velocities zeroed.
    pub contacts: Vec<ContactRecord>,
    pub tendon: TendonPath,
    pub tension: f64,
    pub closure_residual: f64,
    /// Norm of the static generalized force at the final configuration.
    pub residual_force_norm: f64,
    pub converged_early: bool,
    pub steps: usize,
}

impl Settled {
    /// Sum of vertical contact forces (N).
    pub fn total_contact_force(&self) -> f64 {
        self.contacts.iter().map(|c| c.normal_force).sum()
    }
}

/// Clearance between the lowest collider corner and the highest obstacle at
/// the start of a settle (m).
pub const INITIAL_CLEARANCE: f64 = 0.002;

/// Flat configuration at `pitch0` placed just above every obstacle.
pub fn initial_configuration(model: &FootModel, scene: &Scene) -> Configuration {
    let mut q = Configuration::flat(model, 0.0, scene.pitch0);
    let kin = FootKinematics::new(model, &q);
    let lowest = boxes_from(model, &kin)
        .iter()
        .flat_map(|b| b.corners())
        .map(|p| p.y)
        .fold(f64::INFINITY, f64::min);
    let top = scene.obstacles.iter().map(|o| o.height).fold(0.0, f64::max);
    q.slider_z = top + INITIAL_CLEARANCE - lowest;
    q
}

/// Relaxes the foot from a contact-free start until the duration elapses
/// or the kinetic energy stays below the threshold for the convergence
/// window.
pub fn settle(model: &FootModel, scene: &Scene, settings: &SolverSettings) -> Result<Settled> {
    settings.check()?;
    let q0 = initial_configuration(model, scene);
    let solver = Solver::new(model, scene, settings, &q0);
    let mut state = solver.initial_state(q0)?;
    let total_steps = (settings.duration / settings.timestep).round() as usize;
    let window_steps = (settings.convergence_window / settings.timestep).round().max(1.0) as usize;
    let mut quiet = 0usize;
    let mut steps = 0usize;
    let mut converged_early = false;
    while steps < total_steps {
        state = solver.step(&state)?;
        steps += 1;
        if state.kinetic_energy < settings.convergence_ke {
            quiet += 1;
            if quiet >= window_steps {
                converged_early = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }

    let mut still = state.q.clone();
    still.velocities.iter_mut().for_each(|v| *v = 0.0);
    let eval = evaluate(model, &still, scene, settings)?;
    Ok(Settled {
        residual_force_norm: eval.forces.iter().map(|f| f * f).sum::<f64>().sqrt(),
        contacts: eval.contacts,
        tendon: eval.tendon,
        tension: eval.tension,
        closure_residual: eval.closure_residual,
        state,
        converged_early,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_default_softfoot;
    use approx::assert_abs_diff_eq;

    fn empty_scene() -> Scene {
        Scene {
            obstacles: vec![],
            load: 0.0,
            pitch0: 0.0,
        }
    }

    #[test]
    fn rest_without_gravity_is_force_free() {
        let model = build_default_softfoot();
        let settings = SolverSettings {
            gravity: 0.0,
            ..Default::default()
        };
        let q = Configuration::flat(&model, 0.05, 0.0);
        let f = generalized_forces(&model, &q, &empty_scene(), &settings).unwrap();
        for v in f {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn spring_torque() {
        let mut model = build_default_softfoot();
        model.couplings[4].joint_stiffness = 0.2;
        let settings = SolverSettings {
            gravity: 0.0,
            ..Default::default()
        };
        let mut q = Configuration::flat(&model, 0.05, 0.0);
        // flex downward so the tendon stays slack
        q.coupling_angles[4] = -0.1;
        let kin = FootKinematics::new(&model, &q);
        let f = generalized_forces(&model, &q, &empty_scene(), &settings).unwrap();
        let tendon = tendon_path_for(&model, &kin).unwrap();
        assert_eq!(tendon_tension(&tendon, &model.tendon), 0.0);
        // remove the closure penalty contribution to isolate the spring
        let mut no_loop = settings.clone();
        no_loop.loop_penalty_stiffness = 0.0;
        let f2 = generalized_forces(&model, &q, &empty_scene(), &no_loop).unwrap();
        assert_abs_diff_eq!(f2[FIRST_COUPLING + 4], 0.02, epsilon = 1e-12);
        assert!(f[FIRST_COUPLING + 4].is_finite());
    }

    #[test]
    fn zero_force_step_only_advances_time() {
        let model = build_default_softfoot();
        let settings = SolverSettings {
            gravity: 0.0,
            ..Default::default()
        };
        let scene = empty_scene();
        let q = Configuration::flat(&model, 0.05, 0.0);
        let solver = Solver::new(&model, &scene, &settings, &q);
        let s0 = solver.initial_state(q.clone()).unwrap();
        let s1 = solver.step(&s0).unwrap();
        assert_abs_diff_eq!(s1.time, settings.timestep);
        for (a, b) in s1.q.positions().iter().zip(q.positions()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(s1.q.velocities.iter().all(|v| v.abs() < 1e-9), "{:?}", s1.q.velocities);
    }

    #[test]
    fn free_fall_matches_semi_implicit_euler() {
        let model = build_default_softfoot();
        let settings = SolverSettings {
            global_damping: 0.0,
            ..Default::default()
        };
        let scene = empty_scene();
        let q = Configuration::flat(&model, 1.0, 0.0);
        let solver = Solver::new(&model, &scene, &settings, &q);
        assert_abs_diff_eq!(solver.mass[SLIDER], model.total_mass(), epsilon = 1e-12);
        let mut s = solver.initial_state(q).unwrap();
        let h = settings.timestep;
        let g = settings.gravity;
        for k in 1..=200usize {
            s = solver.step(&s).unwrap();
            let expected_v = -g * h * k as f64;
            let expected_z = 1.0 - g * h * h * (k * (k + 1)) as f64 / 2.0;
            assert_abs_diff_eq!(s.q.velocities[SLIDER], expected_v, epsilon = 1e-10);
            assert_abs_diff_eq!(s.q.slider_z, expected_z, epsilon = 1e-12);
        }
    }

    #[test]
    fn settle_on_ground_balances_load() {
        let model = build_default_softfoot();
        let scene = Scene {
            obstacles: vec![ObstacleSpec::ground()],
            load: 12.0,
            pitch0: 0.0,
        };
        let settled = settle(&model, &scene, &SolverSettings::default()).unwrap();
        let expected = 12.0 + model.weight();
        let total = settled.total_contact_force();
        assert!((total - expected).abs() / expected < 0.01, "{total} vs {expected}");
        assert!(settled.closure_residual <= 1e-4);
    }

    #[test]
    fn divergence_is_reported() {
        let model = build_default_softfoot();
        let scene = empty_scene();
        let settings = SolverSettings::default();
        let mut q = Configuration::flat(&model, 0.05, 0.0);
        q.velocities[SLIDER] = f64::NAN;
        let solver = Solver::new(&model, &scene, &settings, &q);
        let s = DynamicsState {
            q,
            time: 0.0,
            kinetic_energy: 0.0,
            contacts: vec![],
            tendon: crate::tendon::TendonPath {
                elements: vec![],
                total_length: 0.0,
                moment_arms: vec![],
            },
        };
        assert!(matches!(solver.step(&s), Err(Error::Divergence { .. })));
    }
}
