//! Parametric description of the foot and derivation of lumped joint
//! stiffnesses from elastic-band material data.
//!
//! Every body of the sole (heel, six plantar-fascia modules, metatarsus and
//! toe) has a local frame whose origin is its proximal rolling contact. The
//! x axis points toward the toes along the contact line and z points up.
//! With every coupling at zero the contact lines of all sole bodies are
//! collinear.
//!
//! Coupling angles are positive when the distal body rotates upward
//! (dorsiflexion). The upward range is the wide one (90°); the downward
//! range is limited to 20°.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::tendon;

/// Number of plantar-fascia modules in the validation chain.
pub const FASCIA_MODULES: usize = 6;

/// Identifier of the heel body.
pub const HEEL_ID: &str = "heel";
/// Identifier of the metatarsus body.
pub const METATARSUS_ID: &str = "metatarsus";
/// Identifier of the toe body.
pub const TOE_ID: &str = "toe";
pub const POSTERIOR_ARCH_ID: &str = "posterior_arch";
pub const ANTERIOR_ARCH_ID: &str = "anterior_arch";

/// One rigid body of the sole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub id: String,
    /// Distance between the proximal and distal rolling contacts (m).
    pub pitch: f64,
    /// Half thickness about the contact line (m). Also the curvature radius
    /// of the rolling surfaces.
    pub half_height: f64,
    /// Mass (kg).
    pub mass: f64,
    /// Collider box half extents `[along, across]` (m), centred on the body.
    pub collider: [f64; 2],
    /// Pulley radius (m).
    pub pulley_radius: f64,
    /// Pulley centre in the module frame (m).
    pub pulley_offset: [f64; 2],
}

impl ModuleSpec {
    /// Centre of the body (and of its collider box) in the module frame.
    pub fn center(&self) -> [f64; 2] {
        [0.5 * self.pitch, 0.0]
    }

    fn check(&self, out: &mut Vec<Violation>) {
        let subject = format!("module `{}`", self.id);
        let mut fail = |msg: String| out.push(Violation::new(&subject, msg));
        if !(self.pitch > 0.0) {
            fail(format!("pitch must be positive, got {}", self.pitch));
        }
        if !(self.half_height > 0.0) {
            fail(format!("half_height must be positive, got {}", self.half_height));
        }
        if !(self.mass > 0.0) {
            fail(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.collider[0] > 0.0 && self.collider[1] > 0.0) {
            fail(format!("collider half extents must be positive, got {:?}", self.collider));
        }
        if !(self.pulley_radius > 0.0 && self.pulley_radius < self.half_height) {
            fail(format!(
                "pulley_radius must lie in (0, half_height = {}), got {}",
                self.half_height, self.pulley_radius
            ));
        }
        if !self.pulley_offset.iter().all(|v| v.is_finite()) {
            fail("pulley_offset must be finite".into());
        }
    }
}

/// The heel: a sole body rigidly welded to the posterior arch and the ankle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeelSpec {
    pub body: ModuleSpec,
    /// Ankle (slider attachment) point in the heel frame (m).
    pub ankle: [f64; 2],
    /// Revolute joint between the posterior and anterior arches, heel frame (m).
    pub arch_joint: [f64; 2],
}

/// The metatarsus: the sole body carrying the metatarsal joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetatarsusSpec {
    pub body: ModuleSpec,
    /// Metatarsal joint point in the metatarsus frame (m).
    pub joint: [f64; 2],
}

/// A rigid arch link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchLink {
    pub length: f64,
    pub mass: f64,
}

/// Rolling coupling between two adjacent sole bodies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// Downward limit (rad), negative.
    pub lower_limit: f64,
    /// Upward limit (rad).
    pub upper_limit: f64,
    pub rest_angle: f64,
    /// N·m/rad
    pub joint_stiffness: f64,
    /// N·m·s/rad
    pub joint_damping: f64,
    /// Stiffness of the one-sided limit spring (N·m/rad).
    pub limit_stiffness: f64,
}

impl CouplingSpec {
    pub const DEFAULT_LOWER_DEG: f64 = -20.0;
    pub const DEFAULT_UPPER_DEG: f64 = 90.0;
    pub const DEFAULT_DAMPING: f64 = 0.01;
    pub const DEFAULT_LIMIT_STIFFNESS: f64 = 200.0;

    /// Default limits and damping with the given stiffness.
    pub fn with_stiffness(joint_stiffness: f64) -> Self {
        Self {
            lower_limit: Self::DEFAULT_LOWER_DEG.to_radians(),
            upper_limit: Self::DEFAULT_UPPER_DEG.to_radians(),
            rest_angle: 0.0,
            joint_stiffness,
            joint_damping: Self::DEFAULT_DAMPING,
            limit_stiffness: Self::DEFAULT_LIMIT_STIFFNESS,
        }
    }

    /// Amount by which `angle` exceeds the limits (signed, zero inside).
    pub fn limit_excess(&self, angle: f64) -> f64 {
        if angle > self.upper_limit {
            angle - self.upper_limit
        } else if angle < self.lower_limit {
            angle - self.lower_limit
        } else {
            0.0
        }
    }
}

/// Elastic band data for one coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    /// Shore A hardness, in (0, 95].
    pub shore_a: f64,
    /// m²
    pub cross_section: f64,
    /// m
    pub rest_length: f64,
    /// Band anchor distance from the rolling contact (m).
    pub moment_arm: f64,
    pub count_per_coupling: u32,
}

impl BandSpec {
    fn check(&self, subject: &str, out: &mut Vec<Violation>) {
        if !(self.shore_a > 0.0 && self.shore_a <= 95.0) {
            out.push(Violation::new(subject, format!("shore_a must lie in (0, 95], got {}", self.shore_a)));
        }
        if !(self.cross_section > 0.0) {
            out.push(Violation::new(subject, format!("cross_section must be positive, got {}", self.cross_section)));
        }
        if !(self.rest_length > 0.0) {
            out.push(Violation::new(subject, format!("rest_length must be positive, got {}", self.rest_length)));
        }
        if !(self.moment_arm > 0.0) {
            out.push(Violation::new(subject, format!("moment_arm must be positive, got {}", self.moment_arm)));
        }
    }
}

/// Which side of a pulley the tendon passes on, for heel-to-toe travel.
/// `Pin` is a fixed routing point at the pulley centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulleySide {
    Above,
    Below,
    Pin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub module: String,
    pub side: PulleySide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TendonSpec {
    pub route: Vec<Waypoint>,
    /// m
    pub rest_length: f64,
    /// m
    pub max_length: f64,
    /// N/m
    pub tension_stiffness: f64,
}

impl TendonSpec {
    /// Relative elongation allowed beyond the rest length.
    pub const DEFAULT_ELONGATION: f64 = 0.005;
    pub const DEFAULT_STIFFNESS: f64 = 1.0e6;
}

/// Full parametric description of the foot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootModel {
    pub heel: HeelSpec,
    /// Plantar-fascia modules, `m1` nearest the heel.
    pub fascia: Vec<ModuleSpec>,
    pub metatarsus: MetatarsusSpec,
    pub toe: ModuleSpec,
    pub posterior_arch: ArchLink,
    pub anterior_arch: ArchLink,
    /// One per adjacent pair of sole bodies, heel–m1 first.
    pub couplings: Vec<CouplingSpec>,
    /// One per coupling.
    pub bands: Vec<BandSpec>,
    pub tendon: TendonSpec,
    /// m
    pub total_length: f64,
    /// Distance from the heel–m1 contact to the metatarsal joint (m).
    pub arch_span: f64,
}

impl FootModel {
    /// Sole bodies from heel to toe.
    pub fn sole(&self) -> Vec<&ModuleSpec> {
        let mut out = Vec::with_capacity(self.fascia.len() + 3);
        out.push(&self.heel.body);
        out.extend(self.fascia.iter());
        out.push(&self.metatarsus.body);
        out.push(&self.toe);
        out
    }

    pub fn sole_len(&self) -> usize {
        self.fascia.len() + 3
    }

    /// Index of the metatarsus among the sole bodies.
    pub fn metatarsus_index(&self) -> usize {
        self.fascia.len() + 1
    }

    /// Index of a sole body by id.
    pub fn sole_index(&self, id: &str) -> Option<usize> {
        self.sole().iter().position(|m| m.id == id)
    }

    /// Number of generalized coordinates: slider, arch angle, couplings.
    pub fn dof(&self) -> usize {
        2 + self.couplings.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.sole().iter().map(|m| m.mass).sum::<f64>()
            + self.posterior_arch.mass
            + self.anterior_arch.mass
    }

    pub fn weight(&self) -> f64 {
        self.total_mass() * crate::GRAVITY
    }

    /// Sum of the sole pitches.
    pub fn sole_pitch_sum(&self) -> f64 {
        self.sole().iter().map(|m| m.pitch).sum()
    }

    /// Metatarsal joint in the heel frame with every coupling at zero.
    pub fn flat_metatarsal_joint(&self) -> [f64; 2] {
        let x0: f64 = self.sole()[..self.metatarsus_index()].iter().map(|m| m.pitch).sum();
        [x0 + self.metatarsus.joint[0], self.metatarsus.joint[1]]
    }

    /// Direction of the anterior arch (heel frame, rad) in the closed flat
    /// configuration.
    pub fn anterior_rest_direction(&self) -> f64 {
        let m = self.flat_metatarsal_joint();
        let j = self.heel.arch_joint;
        (m[1] - j[1]).atan2(m[0] - j[0])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// Estimated Young's modulus (Pa) of an elastomer from its Shore A hardness.
///
/// Gent's relation in its tabulated Shore A form:
/// `E[MPa] = 0.0981 (56 + 7.62336 S) / (0.137505 (254 − 2.54 S))`.
/// The denominator vanishes at S = 100, so the accepted range is (0, 95].
pub fn gent_modulus(shore_a: f64) -> Result<f64> {
    if !(shore_a > 0.0 && shore_a <= 95.0) {
        return Err(Error::Domain(format!(
            "Shore A hardness must lie in (0, 95], got {shore_a}"
        )));
    }
    let mpa = 0.0981 * (56.0 + 7.62336 * shore_a) / (0.137505 * (254.0 - 2.54 * shore_a));
    Ok(mpa * 1.0e6)
}

/// Axial stiffness of one band (N/m): `E A / L0`.
pub fn band_linear_stiffness(band: &BandSpec) -> Result<f64> {
    check_band(band)?;
    Ok(gent_modulus(band.shore_a)? * band.cross_section / band.rest_length)
}

/// Torsional stiffness (N·m/rad) seen by the coupling joint from all of its
/// bands: `n k r²`.
pub fn band_to_joint_stiffness(band: &BandSpec) -> Result<f64> {
    let k = band_linear_stiffness(band)?;
    Ok(f64::from(band.count_per_coupling) * k * band.moment_arm * band.moment_arm)
}

fn check_band(band: &BandSpec) -> Result<()> {
    let mut v = Vec::new();
    band.check("band", &mut v);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Domain(v.iter().map(|v| v.message.clone()).collect::<Vec<_>>().join("; ")))
    }
}

/// A failed model invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl Violation {
    fn new(subject: &str, message: impl Into<String>) -> Self {
        Self {
            subject: subject.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Reference band: Shore 40, 4 mm², 20 mm long, anchored 8 mm from the contact.
pub fn default_band() -> BandSpec {
    BandSpec {
        shore_a: 40.0,
        cross_section: 4.0e-6,
        rest_length: 0.02,
        moment_arm: 0.008,
        count_per_coupling: 2,
    }
}

fn sole_module(id: &str, pitch: f64, mass: f64, pulley_x: f64) -> ModuleSpec {
    let half_height = 0.01;
    ModuleSpec {
        id: id.to_string(),
        pitch,
        half_height,
        mass,
        collider: [0.5 * pitch, half_height],
        pulley_radius: 0.003,
        pulley_offset: [pulley_x, -0.004],
    }
}

/// The reference single-chain foot: heel, six fascia modules, metatarsus and
/// toe, 0.27 m long with a 0.16 m arch span and 0.5 kg total mass.
pub fn build_default_softfoot() -> FootModel {
    const FASCIA_PITCH: f64 = 0.022;

    let mut heel_body = sole_module(HEEL_ID, 0.064, 0.08, 0.040);
    // routing pins sit on the line tangent to the bottom of the pulleys
    heel_body.pulley_offset = [0.040, -0.007];
    let fascia: Vec<ModuleSpec> = (1..=FASCIA_MODULES)
        .map(|i| sole_module(&format!("m{i}"), FASCIA_PITCH, 0.03, 0.5 * FASCIA_PITCH))
        .collect();
    let meta_body = sole_module(METATARSUS_ID, 0.032, 0.04, 0.016);
    let mut toe = sole_module(TOE_ID, 0.042, 0.03, 0.030);
    toe.pulley_offset = [0.030, -0.007];

    let band = default_band();
    let joint_stiffness =
        band_to_joint_stiffness(&band).expect("default band satisfies its invariants");
    let n_couplings = FASCIA_MODULES + 2;

    let mut route = vec![Waypoint {
        module: HEEL_ID.into(),
        side: PulleySide::Pin,
    }];
    route.extend(fascia.iter().map(|m| Waypoint {
        module: m.id.clone(),
        side: PulleySide::Below,
    }));
    route.push(Waypoint {
        module: METATARSUS_ID.into(),
        side: PulleySide::Below,
    });
    route.push(Waypoint {
        module: TOE_ID.into(),
        side: PulleySide::Pin,
    });

    let heel = HeelSpec {
        body: heel_body,
        ankle: [0.045, 0.075],
        arch_joint: [0.085, 0.065],
    };
    let metatarsus = MetatarsusSpec {
        body: meta_body,
        joint: [0.028, 0.020],
    };

    let mut model = FootModel {
        posterior_arch: ArchLink {
            length: dist(heel.ankle, heel.arch_joint),
            mass: 0.10,
        },
        anterior_arch: ArchLink {
            length: 0.0,
            mass: 0.07,
        },
        heel,
        fascia,
        metatarsus,
        toe,
        couplings: vec![CouplingSpec::with_stiffness(joint_stiffness); n_couplings],
        bands: vec![band; n_couplings],
        tendon: TendonSpec {
            route,
            rest_length: 0.0,
            max_length: 0.0,
            tension_stiffness: TendonSpec::DEFAULT_STIFFNESS,
        },
        total_length: 0.27,
        arch_span: 0.16,
    };
    model.anterior_arch.length = dist(model.heel.arch_joint, model.flat_metatarsal_joint());
    let rest = tendon::flat_tendon_length(&model).expect("default route is well formed");
    model.tendon.rest_length = rest;
    model.tendon.max_length = rest * (1.0 + TendonSpec::DEFAULT_ELONGATION);
    model
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Every violated invariant of `model`; empty when the model is usable.
pub fn validate_model(model: &FootModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let sole = model.sole();
    for m in &sole {
        m.check(&mut out);
    }
    let mut ids: Vec<&str> = sole.iter().map(|m| m.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        out.push(Violation::new("sole", "module ids must be unique"));
    }
    if model.fascia.len() != FASCIA_MODULES {
        out.push(Violation::new(
            "fascia",
            format!("expected {FASCIA_MODULES} modules, got {}", model.fascia.len()),
        ));
    }

    let n_couplings = sole.len() - 1;
    if model.couplings.len() != n_couplings {
        out.push(Violation::new(
            "couplings",
            format!("expected {n_couplings} couplings, got {}", model.couplings.len()),
        ));
    }
    for (i, c) in model.couplings.iter().enumerate() {
        let subject = coupling_label(&sole, i);
        if !(c.lower_limit < c.rest_angle && c.rest_angle < c.upper_limit) {
            out.push(Violation::new(
                &subject,
                format!(
                    "limits must satisfy lower < rest < upper, got {} < {} < {}",
                    c.lower_limit, c.rest_angle, c.upper_limit
                ),
            ));
        }
        if !(c.joint_stiffness >= 0.0) {
            out.push(Violation::new(&subject, "joint_stiffness must be non-negative"));
        }
        if !(c.joint_damping >= 0.0) {
            out.push(Violation::new(&subject, "joint_damping must be non-negative"));
        }
        if !(c.limit_stiffness > c.joint_stiffness) {
            out.push(Violation::new(&subject, "limit_stiffness must exceed joint_stiffness"));
        }
    }
    if model.bands.len() != n_couplings {
        out.push(Violation::new(
            "bands",
            format!("expected {n_couplings} bands, got {}", model.bands.len()),
        ));
    }
    for (i, b) in model.bands.iter().enumerate() {
        b.check(&format!("band {}", coupling_label(&sole, i)), &mut out);
    }

    for (name, link) in [
        (POSTERIOR_ARCH_ID, model.posterior_arch),
        (ANTERIOR_ARCH_ID, model.anterior_arch),
    ] {
        if !(link.length > 0.0 && link.mass > 0.0) {
            out.push(Violation::new(name, "length and mass must be positive"));
        }
    }
    let post = dist(model.heel.ankle, model.heel.arch_joint);
    if (post - model.posterior_arch.length).abs() > 1e-6 {
        out.push(Violation::new(
            POSTERIOR_ARCH_ID,
            format!("length {} does not match ankle-to-arch-joint distance {post}", model.posterior_arch.length),
        ));
    }
    let ant = dist(model.heel.arch_joint, model.flat_metatarsal_joint());
    if (ant - model.anterior_arch.length).abs() > 1e-6 {
        out.push(Violation::new(
            ANTERIOR_ARCH_ID,
            format!("length {} does not close the loop (needs {ant})", model.anterior_arch.length),
        ));
    }

    let pitch_sum = model.sole_pitch_sum();
    if !(model.total_length > 0.0) || (pitch_sum - model.total_length).abs() > 0.02 * model.total_length {
        out.push(Violation::new(
            "total_length",
            format!("{} differs from the sum of sole pitches {pitch_sum} by more than 2%", model.total_length),
        ));
    }
    let span = model.flat_metatarsal_joint()[0] - model.heel.body.pitch;
    if !(model.arch_span > 0.0) || (span - model.arch_span).abs() > 0.02 * model.arch_span {
        out.push(Violation::new(
            "arch_span",
            format!("{} differs from the geometric span {span} by more than 2%", model.arch_span),
        ));
    }

    check_tendon(model, &sole, &mut out);
    out
}

fn coupling_label(sole: &[&ModuleSpec], i: usize) -> String {
    match (sole.get(i), sole.get(i + 1)) {
        (Some(a), Some(b)) => format!("coupling {}-{}", a.id, b.id),
        _ => format!("coupling #{i}"),
    }
}

fn check_tendon(model: &FootModel, sole: &[&ModuleSpec], out: &mut Vec<Violation>) {
    let t = &model.tendon;
    if !(t.tension_stiffness > 0.0) {
        out.push(Violation::new("tendon", "tension_stiffness must be positive"));
    }
    if !(t.rest_length > 0.0 && t.max_length >= t.rest_length) {
        out.push(Violation::new(
            "tendon",
            format!("need 0 < rest_length <= max_length, got {} and {}", t.rest_length, t.max_length),
        ));
    }
    if t.route.len() < 2 {
        out.push(Violation::new("tendon route", "needs at least two waypoints"));
        return;
    }
    let mut visits = vec![0usize; sole.len()];
    let mut prev: Option<usize> = None;
    for wp in &t.route {
        let Some(idx) = sole.iter().position(|m| m.id == wp.module) else {
            out.push(Violation::new("tendon route", format!("unknown module `{}`", wp.module)));
            prev = None;
            continue;
        };
        visits[idx] += 1;
        if let Some(p) = prev {
            if p.abs_diff(idx) > 1 {
                out.push(Violation::new(
                    "tendon route",
                    format!(
                        "route is not continuous between `{}` and `{}`",
                        sole[p].id, sole[idx].id
                    ),
                ));
            }
        }
        prev = Some(idx);
    }
    for (m, n) in sole.iter().zip(&visits) {
        if *n > 2 {
            out.push(Violation::new("tendon route", format!("visits `{}` {n} times", m.id)));
        }
    }
}
