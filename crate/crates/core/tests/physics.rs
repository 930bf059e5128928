use nalgebra::{Point2, Vector2};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

use softfoot::bench::{BenchSetup, TrialConfig};
use softfoot::kinematics::{Configuration, FootKinematics};
use softfoot::model::FootModel;
use softfoot::solver::{
    evaluate, lumped_mass, potential_energy, settle, Scene, Solver, SolverSettings,
};
use softfoot::tendon::{tendon_path_for, tendon_tension, PathElement, TendonPath};
use softfoot::build_default_softfoot;

fn path(model: &FootModel, q: &Configuration) -> TendonPath {
    tendon_path_for(model, &FootKinematics::new(model, q)).unwrap()
}

fn config(model: &FootModel, z: f64, arch: f64, pitch0: f64, angles: &[f64]) -> Configuration {
    let mut q = Configuration::flat(model, z, pitch0);
    q.arch_angle = arch;
    q.coupling_angles.copy_from_slice(angles);
    q
}

fn angles() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-0.25f64..0.5, 8)
}

fn bench_scene(model: &FootModel) -> Scene {
    let trial = TrialConfig {
        load: 12.0,
        obstacle_height: 0.019,
        position: 3,
        initial_inclination: 0.0,
        heel_dx: 0.0,
        meta_dx: 0.0,
    };
    BenchSetup::default().scene(model, &trial)
}

/// Points and arcs of a path as (exit point, next entry point) pairs plus
/// the arcs between them.
struct Skeleton {
    arcs: Vec<(Point2<f64>, f64, f64, f64)>,
    start: Point2<f64>,
    end: Point2<f64>,
}

fn skeleton(p: &TendonPath) -> Skeleton {
    let mut arcs = Vec::new();
    let mut start = None;
    let mut end = Point2::origin();
    for e in &p.elements {
        match e {
            PathElement::Straight { from, to, .. } => {
                start.get_or_insert(Point2::new(from[0], from[1]));
                end = Point2::new(to[0], to[1]);
            }
            PathElement::Arc {
                center,
                radius,
                entry_angle,
                exit_angle,
                ..
            } => arcs.push((Point2::new(center[0], center[1]), *radius, *entry_angle, *exit_angle)),
        }
    }
    Skeleton {
        arcs,
        start: start.unwrap(),
        end,
    }
}

fn on_circle(c: Point2<f64>, r: f64, a: f64) -> Point2<f64> {
    c + r * Vector2::new(a.cos(), a.sin())
}

fn wrapped(d: f64) -> f64 {
    (d.sin()).atan2(d.cos())
}

/// Length of the path through perturbed tangent points, or `None` when a
/// straight piece would cut into the pulley it leaves or enters.
fn perturbed_length(s: &Skeleton, deltas: &[(f64, f64)]) -> Option<f64> {
    let mut total = 0.0;
    let mut prev = s.start;
    let mut prev_circle: Option<(Point2<f64>, f64)> = None;
    for (&(c, r, a0, a1), &(d0, d1)) in s.arcs.iter().zip(deltas) {
        let entry = on_circle(c, r, a0 + d0);
        let exit = on_circle(c, r, a1 + d1);
        if let Some((pc, _)) = prev_circle {
            if (entry - prev).dot(&(prev - pc)) < -1e-15 {
                return None;
            }
        }
        if (prev - entry).dot(&(entry - c)) < -1e-15 {
            return None;
        }
        total += (entry - prev).norm();
        total += r * wrapped(a1 + d1 - (a0 + d0)).abs();
        prev = exit;
        prev_circle = Some((c, r));
    }
    if let Some((pc, _)) = prev_circle {
        if (s.end - prev).dot(&(prev - pc)) < -1e-15 {
            return None;
        }
    }
    Some(total + (s.end - prev).norm())
}

#[test]
fn tendon_path_is_locally_minimal() {
    let model = build_default_softfoot();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let mut feasible = 0;
    let mut tried = 0;
    while feasible < 100 {
        tried += 1;
        assert!(tried < 20_000, "too few feasible perturbations");
        let q_angles = angles().new_tree(&mut runner).unwrap().current();
        let q = config(&model, 0.05, 0.0, 0.0, &q_angles);
        let p = path(&model, &q);
        let s = skeleton(&p);
        if s.arcs.is_empty() {
            continue;
        }
        let deltas: Vec<(f64, f64)> = proptest::collection::vec((-0.05f64..0.05, -0.05f64..0.05), s.arcs.len())
            .new_tree(&mut runner)
            .unwrap()
            .current();
        let base = perturbed_length(&s, &vec![(0.0, 0.0); s.arcs.len()]).unwrap();
        assert!((base - p.total_length).abs() < 1e-12, "{base} vs {}", p.total_length);
        if let Some(l) = perturbed_length(&s, &deltas) {
            feasible += 1;
            assert!(l >= p.total_length - 1e-12, "perturbed {l} < minimal {}", p.total_length);
        }
    }
}

#[test]
fn length_continuous_across_wrap_transition() {
    let model = build_default_softfoot();
    let base = [0.05, 0.12, -0.08, 0.2, 0.0, 0.1, 0.15, 0.1];
    let arcs_at = |t: f64| {
        let mut a = base;
        a[3] = t;
        let q = config(&model, 0.05, 0.0, 0.0, &a);
        let p = path(&model, &q);
        (p.arcs().count(), p.total_length)
    };
    let mut transitions = 0;
    let n = 400;
    for i in 0..n {
        let (mut lo, mut hi) = (-0.3 + 0.8 * i as f64 / n as f64, -0.3 + 0.8 * (i + 1) as f64 / n as f64);
        if arcs_at(lo).0 == arcs_at(hi).0 {
            continue;
        }
        transitions += 1;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if arcs_at(mid).0 == arcs_at(lo).0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let jump = (arcs_at(lo).1 - arcs_at(hi).1).abs();
        assert!(jump < 1e-9, "length jumps by {jump} at θ = {lo}");
    }
    assert!(transitions > 0, "sweep crossed no wrap transition");
}

#[test]
fn windlass_tightens_with_dorsiflexion() {
    let model = build_default_softfoot();
    let mut last_len = f64::NEG_INFINITY;
    let mut last_tension = 0.0;
    for i in 0..=300 {
        let deg = 30.0 * i as f64 / 300.0;
        let mut q = Configuration::flat(&model, 0.05, 0.0);
        *q.coupling_angles.last_mut().unwrap() = deg.to_radians();
        let p = path(&model, &q);
        let t = tendon_tension(&p, &model.tendon);
        assert!(p.total_length >= last_len, "length fell at {deg}°");
        if last_tension > 0.0 {
            assert!(t >= last_tension, "tension fell at {deg}°");
        }
        last_len = p.total_length;
        last_tension = t;
    }
    assert!(last_tension > 0.0, "tendon never became taut");
}

fn energy_gradient_error(model: &FootModel, q: &Configuration, scene: &Scene, settings: &SolverSettings) -> f64 {
    let mut q = q.clone();
    q.velocities = vec![0.0; model.dof()];
    let f = evaluate(model, &q, scene, settings).unwrap().forces;
    let x = q.positions();
    let h = 1e-6;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp.set_positions(&xp);
        qm.set_positions(&xm);
        let g = (potential_energy(model, &qp, scene, settings).unwrap()
            - potential_energy(model, &qm, scene, settings).unwrap())
            / (2.0 * h);
        num += (f[i] + g).powi(2);
        den += g * g;
    }
    num.sqrt() / den.sqrt().max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn forces_are_minus_energy_gradient(
        z in 0.015f64..0.03,
        arch in -0.02f64..0.02,
        pitch0 in -0.05f64..0.05,
        a in proptest::collection::vec(-0.4f64..0.3, 8),
    ) {
        let model = build_default_softfoot();
        let scene = bench_scene(&model);
        let settings = SolverSettings::default();
        let q = config(&model, z, arch, pitch0, &a);
        let err = energy_gradient_error(&model, &q, &scene, &settings);
        prop_assert!(err < 1e-5, "relative gradient error {err}");

        // without the loop penalty the smaller terms are no longer masked
        let soft = SolverSettings { loop_penalty_stiffness: 0.0, ..settings };
        let err = energy_gradient_error(&model, &q, &scene, &soft);
        prop_assert!(err < 1e-5, "relative gradient error without loop penalty {err}");
    }

    #[test]
    fn moment_arms_match_length_derivative(a in angles(), arch in -0.05f64..0.05) {
        let model = build_default_softfoot();
        let q = config(&model, 0.05, arch, 0.0, &a);
        let p = path(&model, &q);
        let h = 1e-6;
        for i in 0..a.len() {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[i] += h;
            am[i] -= h;
            let lp = path(&model, &config(&model, 0.05, arch, 0.0, &ap)).total_length;
            let lm = path(&model, &config(&model, 0.05, arch, 0.0, &am)).total_length;
            let fd = (lp - lm) / (2.0 * h);
            prop_assert!((fd - p.moment_arms[i]).abs() < 1e-4, "coupling {i}: fd {fd}, arm {}", p.moment_arms[i]);
        }
    }
}

#[test]
fn unloaded_motion_is_passive() {
    let model = build_default_softfoot();
    let scene = Scene {
        obstacles: vec![],
        load: 0.0,
        pitch0: 0.0,
    };
    let settings = SolverSettings {
        gravity: 0.0,
        ..SolverSettings::default()
    };
    let q0 = config(&model, 0.05, 0.01, 0.0, &[0.2, -0.1, 0.15, 0.3, -0.2, 0.1, 0.25, 0.4]);
    let mut q0 = q0;
    q0.velocities = vec![0.0, 0.3, 1.0, -2.0, 0.5, 1.5, -1.0, 0.0, 2.0, -0.5];
    let solver = Solver::new(&model, &scene, &settings, &q0);
    let mass = lumped_mass(&model, &q0);
    let energy = |q: &Configuration| {
        let ke = 0.5 * mass.iter().zip(&q.velocities).map(|(m, v)| m * v * v).sum::<f64>();
        ke + potential_energy(&model, q, &scene, &settings).unwrap()
    };
    let mut state = solver.initial_state(q0.clone()).unwrap();
    let mut e = energy(&state.q);
    let e0 = e;
    for _ in 0..5000 {
        state = solver.step(&state).unwrap();
        let next = energy(&state.q);
        assert!(next <= e + 1e-12 * e0.max(1.0), "energy rose from {e} to {next} at t = {}", state.time);
        e = next;
    }
    assert!(e < e0);
}

#[test]
fn settling_is_bit_reproducible() {
    let model = build_default_softfoot();
    let scene = bench_scene(&model);
    let settings = SolverSettings {
        duration: 0.5,
        ..SolverSettings::default()
    };
    let a = settle(&model, &scene, &settings).unwrap();
    let b = settle(&model, &scene, &settings).unwrap();
    assert_eq!(a.state.q, b.state.q);
    assert_eq!(a.steps, b.steps);
    let fa: Vec<u64> = a.contacts.iter().map(|c| c.normal_force.to_bits()).collect();
    let fb: Vec<u64> = b.contacts.iter().map(|c| c.normal_force.to_bits()).collect();
    assert_eq!(fa, fb);
}
