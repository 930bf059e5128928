//! MJCF scene export and a reader for the subset we emit.
//!
//! The sagittal plane maps to MuJoCo's x–z plane; planar rotations become
//! hinges about −y. Rolling couplings are exported as hinges at the
//! proximal end of each child module.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FootModel, ModuleSpec, PulleySide, ANTERIOR_ARCH_ID, POSTERIOR_ARCH_ID};

pub const TENDON_NAME: &str = "plantar_fascia";
pub const CONNECT_NAME: &str = "metatarsal_joint";
const DEPTH: f64 = 0.02;

fn f(v: f64) -> String {
    let r = (v * 1e9).round() / 1e9;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn deg(v: f64) -> String {
    f(v.to_degrees())
}

/// Name of the hinge between two sole bodies.
pub fn coupling_name(a: &str, b: &str) -> String {
    format!("{a}_{b}")
}

fn site_name(k: usize, module: &str) -> String {
    format!("fascia_{k}_{module}")
}

/// Body-frame site for route waypoint `k`.
fn waypoint_site(spec: &ModuleSpec, side: PulleySide) -> [f64; 2] {
    let [x, z] = spec.pulley_offset;
    match side {
        PulleySide::Pin => [x, z],
        PulleySide::Below => [x, z - spec.pulley_radius],
        PulleySide::Above => [x, z + spec.pulley_radius],
    }
}

/// The MJCF document for `model`, standing with its heel sole on z = 0.
pub fn export_mjcf(model: &FootModel) -> String {
    let sole = model.sole();
    let heel = &model.heel;
    let mut s = String::new();
    let _ = writeln!(s, r#"<mujoco model="softfoot">"#);
    let _ = writeln!(s, r#"  <compiler angle="degree"/>"#);
    let _ = writeln!(s, r#"  <option gravity="0 0 -9.81"/>"#);
    let _ = writeln!(s, "  <worldbody>");
    let _ = writeln!(s, r#"    <geom name="floor" type="plane" size="1 1 0.1"/>"#);

    let ankle = heel.ankle;
    let _ = writeln!(
        s,
        r#"    <body name="{POSTERIOR_ARCH_ID}" pos="{} 0 {}">"#,
        f(ankle[0]),
        f(ankle[1] + heel.body.half_height)
    );
    let _ = writeln!(s, r#"      <joint name="slider" type="slide" axis="0 0 1"/>"#);
    let arch = [heel.arch_joint[0] - ankle[0], heel.arch_joint[1] - ankle[1]];
    let _ = writeln!(
        s,
        r#"      <geom name="{POSTERIOR_ARCH_ID}_geom" type="capsule" size="0.004" fromto="0 0 0 {} 0 {}" mass="{}"/>"#,
        f(arch[0]),
        f(arch[1]),
        f(model.posterior_arch.mass)
    );

    // chain 1: heel welded to the posterior arch, then the sole
    let mut indent = String::from("      ");
    for (k, spec) in sole.iter().enumerate() {
        if k == 0 {
            let _ = writeln!(s, r#"{indent}<body name="{}" pos="{} 0 {}">"#, spec.id, f(-ankle[0]), f(-ankle[1]));
        } else {
            let prev = sole[k - 1];
            let c = &model.couplings[k - 1];
            let _ = writeln!(s, r#"{indent}<body name="{}" pos="{} 0 0">"#, spec.id, f(prev.pitch));
            let _ = writeln!(
                s,
                r#"{indent}  <joint name="{}" type="hinge" pos="0 0 0" axis="0 -1 0" limited="true" range="{} {}" stiffness="{}" damping="{}" springref="{}"/>"#,
                coupling_name(&prev.id, &spec.id),
                deg(c.lower_limit),
                deg(c.upper_limit),
                f(c.joint_stiffness),
                f(c.joint_damping),
                deg(c.rest_angle)
            );
        }
        let ctr = spec.center();
        let _ = writeln!(
            s,
            r#"{indent}  <geom name="{}_geom" type="box" pos="{} 0 {}" size="{} {} {}" mass="{}"/>"#,
            spec.id,
            f(ctr[0]),
            f(ctr[1]),
            f(spec.collider[0]),
            f(DEPTH),
            f(spec.collider[1]),
            f(spec.mass)
        );
        for (i, wp) in model.tendon.route.iter().enumerate() {
            if wp.module == spec.id {
                let p = waypoint_site(spec, wp.side);
                let _ = writeln!(s, r#"{indent}  <site name="{}" pos="{} 0 {}"/>"#, site_name(i, &spec.id), f(p[0]), f(p[1]));
            }
        }
        if k == model.metatarsus_index() {
            let j = model.metatarsus.joint;
            let _ = writeln!(s, r#"{indent}  <site name="{CONNECT_NAME}_site" pos="{} 0 {}"/>"#, f(j[0]), f(j[1]));
        }
        indent.push_str("  ");
    }
    for _ in 0..sole.len() {
        indent.truncate(indent.len() - 2);
        let _ = writeln!(s, "{indent}</body>");
    }

    // chain 2: anterior arch hinged at the arch joint
    let dir = model.anterior_rest_direction();
    let len = model.anterior_arch.length;
    let _ = writeln!(
        s,
        r#"      <body name="{ANTERIOR_ARCH_ID}" pos="{} 0 {}" euler="0 {} 0">"#,
        f(arch[0]),
        f(arch[1]),
        deg(-dir)
    );
    let _ = writeln!(s, r#"        <joint name="arch" type="hinge" pos="0 0 0" axis="0 -1 0"/>"#);
    let _ = writeln!(
        s,
        r#"        <geom name="{ANTERIOR_ARCH_ID}_geom" type="capsule" size="0.004" fromto="0 0 0 {} 0 0" mass="{}"/>"#,
        f(len),
        f(model.anterior_arch.mass)
    );
    let _ = writeln!(s, "      </body>");
    let _ = writeln!(s, "    </body>");
    let _ = writeln!(s, "  </worldbody>");

    let _ = writeln!(s, "  <equality>");
    let _ = writeln!(
        s,
        r#"    <connect name="{CONNECT_NAME}" body1="{ANTERIOR_ARCH_ID}" body2="{}" anchor="{} 0 0"/>"#,
        sole[model.metatarsus_index()].id,
        f(len)
    );
    let _ = writeln!(s, "  </equality>");

    let _ = writeln!(s, "  <tendon>");
    let _ = writeln!(
        s,
        r#"    <spatial name="{TENDON_NAME}" limited="true" range="0 {}" stiffness="{}" springlength="{}" width="0.001">"#,
        f(model.tendon.max_length),
        f(model.tendon.tension_stiffness),
        f(model.tendon.max_length)
    );
    for (i, wp) in model.tendon.route.iter().enumerate() {
        let _ = writeln!(s, r#"      <site site="{}"/>"#, site_name(i, &wp.module));
    }
    let _ = writeln!(s, "    </spatial>");
    let _ = writeln!(s, "  </tendon>");

    let _ = writeln!(s, "  <contact>");
    for pair in sole.windows(2) {
        let _ = writeln!(s, r#"    <exclude body1="{}" body2="{}"/>"#, pair[0].id, pair[1].id);
    }
    let _ = writeln!(s, r#"    <exclude body1="{POSTERIOR_ARCH_ID}" body2="{ANTERIOR_ARCH_ID}"/>"#);
    let _ = writeln!(
        s,
        r#"    <exclude body1="{ANTERIOR_ARCH_ID}" body2="{}"/>"#,
        sole[model.metatarsus_index()].id
    );
    let _ = writeln!(s, "  </contact>");
    s.push_str("</mujoco>\n");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MjcfBody {
    pub name: String,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MjcfJoint {
    pub name: String,
    pub body: String,
    pub kind: String,
    /// Degrees, when limited.
    pub range: Option<[f64; 2]>,
    pub stiffness: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MjcfConnect {
    pub name: String,
    pub body1: String,
    pub body2: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MjcfTendon {
    pub name: String,
    pub range: Option<[f64; 2]>,
    pub sites: Vec<String>,
}

/// What our reader recovers from an MJCF document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MjcfScene {
    pub bodies: Vec<MjcfBody>,
    pub joints: Vec<MjcfJoint>,
    pub connects: Vec<MjcfConnect>,
    pub tendons: Vec<MjcfTendon>,
    pub excludes: Vec<(String, String)>,
}

impl MjcfScene {
    pub fn body(&self, name: &str) -> Option<&MjcfBody> {
        self.bodies.iter().find(|b| b.name == name)
    }

    pub fn joint(&self, name: &str) -> Option<&MjcfJoint> {
        self.joints.iter().find(|j| j.name == name)
    }

    pub fn excludes_pair(&self, a: &str, b: &str) -> bool {
        self.excludes
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    /// Differences between this scene's topology and `model`; empty when
    /// they agree.
    pub fn topology_mismatches(&self, model: &FootModel) -> Vec<String> {
        let mut out = Vec::new();
        let sole = model.sole();
        let mut expect_parent = |name: &str, parent: Option<&str>| match self.body(name) {
            None => out.push(format!("missing body {name}")),
            Some(b) if b.parent.as_deref() != parent => {
                out.push(format!("body {name}: parent {:?}, expected {parent:?}", b.parent))
            }
            _ => {}
        };
        expect_parent(POSTERIOR_ARCH_ID, None);
        expect_parent(&sole[0].id, Some(POSTERIOR_ARCH_ID));
        for pair in sole.windows(2) {
            expect_parent(&pair[1].id, Some(&pair[0].id));
        }
        expect_parent(ANTERIOR_ARCH_ID, Some(POSTERIOR_ARCH_ID));
        if self.bodies.len() != sole.len() + 2 {
            out.push(format!("{} bodies, expected {}", self.bodies.len(), sole.len() + 2));
        }
        for (pair, c) in sole.windows(2).zip(&model.couplings) {
            let name = coupling_name(&pair[0].id, &pair[1].id);
            match self.joint(&name) {
                None => out.push(format!("missing joint {name}")),
                Some(j) => {
                    let want = [c.lower_limit.to_degrees(), c.upper_limit.to_degrees()];
                    let ok = j.range.is_some_and(|r| (r[0] - want[0]).abs() < 1e-6 && (r[1] - want[1]).abs() < 1e-6);
                    if !ok {
                        out.push(format!("joint {name}: range {:?}, expected {want:?}", j.range));
                    }
                    if j.body != pair[1].id {
                        out.push(format!("joint {name} sits on {}", j.body));
                    }
                }
            }
        }
        if self.connects.len() != 1 {
            out.push(format!("{} connect constraints, expected 1", self.connects.len()));
        }
        match self.tendons.as_slice() {
            [t] => {
                if t.sites.len() != model.tendon.route.len() {
                    out.push(format!("tendon has {} sites, expected {}", t.sites.len(), model.tendon.route.len()));
                }
                if t.range.is_none() {
                    out.push("tendon has no length range".into());
                }
            }
            other => out.push(format!("{} tendons, expected 1", other.len())),
        }
        for pair in sole.windows(2) {
            if !self.excludes_pair(&pair[0].id, &pair[1].id) {
                out.push(format!("no contact exclusion for {}-{}", pair[0].id, pair[1].id));
            }
        }
        out
    }
}

fn xml_error(text: &str, pos: usize, message: String) -> Error {
    let before = &text[..pos.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    Error::Parse { line, column, message }
}

fn parse_pair(node: roxmltree::Node, attr: &str, text: &str) -> Result<Option<[f64; 2]>> {
    let Some(raw) = node.attribute(attr) else {
        return Ok(None);
    };
    let v: Vec<f64> = raw.split_whitespace().filter_map(|t| t.parse().ok()).collect();
    if v.len() != 2 {
        return Err(xml_error(text, node.range().start, format!("{attr}=\"{raw}\" is not two numbers")));
    }
    Ok(Some([v[0], v[1]]))
}

fn parse_num(node: roxmltree::Node, attr: &str, text: &str) -> Result<f64> {
    match node.attribute(attr) {
        None => Ok(0.0),
        Some(raw) => raw
            .trim()
            .parse()
            .map_err(|_| xml_error(text, node.range().start, format!("{attr}=\"{raw}\" is not a number"))),
    }
}

fn required<'a>(node: roxmltree::Node<'a, 'a>, attr: &str, text: &str) -> Result<String> {
    node.attribute(attr)
        .map(str::to_string)
        .ok_or_else(|| xml_error(text, node.range().start, format!("<{}> lacks `{attr}`", node.tag_name().name())))
}

/// Reads the elements [`export_mjcf`] writes. Anything else is ignored.
pub fn read_mjcf(text: &str) -> Result<MjcfScene> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let p = e.pos();
        Error::Parse {
            line: p.row as usize,
            column: p.col as usize,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "mujoco" {
        return Err(Error::Xml(format!("root element is <{}>", root.tag_name().name())));
    }
    let mut scene = MjcfScene::default();
    for node in root.descendants().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "body" => {
                let parent = node
                    .ancestors()
                    .skip(1)
                    .find(|a| a.has_tag_name("body"))
                    .and_then(|a| a.attribute("name"))
                    .map(str::to_string);
                scene.bodies.push(MjcfBody {
                    name: required(node, "name", text)?,
                    parent,
                });
            }
            "joint" => {
                let body = node
                    .parent_element()
                    .and_then(|p| p.attribute("name"))
                    .unwrap_or_default()
                    .to_string();
                let limited = node.attribute("limited") == Some("true");
                scene.joints.push(MjcfJoint {
                    name: required(node, "name", text)?,
                    body,
                    kind: node.attribute("type").unwrap_or("hinge").to_string(),
                    range: if limited { parse_pair(node, "range", text)? } else { None },
                    stiffness: parse_num(node, "stiffness", text)?,
                    damping: parse_num(node, "damping", text)?,
                });
            }
            "connect" if node.parent_element().is_some_and(|p| p.has_tag_name("equality")) => {
                scene.connects.push(MjcfConnect {
                    name: node.attribute("name").unwrap_or_default().to_string(),
                    body1: required(node, "body1", text)?,
                    body2: required(node, "body2", text)?,
                });
            }
            "spatial" => {
                let limited = node.attribute("limited") == Some("true");
                let sites = node
                    .children()
                    .filter(|c| c.has_tag_name("site"))
                    .map(|c| required(c, "site", text))
                    .collect::<Result<Vec<_>>>()?;
                scene.tendons.push(MjcfTendon {
                    name: node.attribute("name").unwrap_or_default().to_string(),
                    range: if limited { parse_pair(node, "range", text)? } else { None },
                    sites,
                });
            }
            "exclude" => {
                scene
                    .excludes
                    .push((required(node, "body1", text)?, required(node, "body2", text)?));
            }
            _ => {}
        }
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_default_softfoot;

    #[test]
    fn number_format() {
        assert_eq!(f(0.0), "0");
        assert_eq!(f(-0.0), "0");
        assert_eq!(f(0.1 + 0.2), "0.3");
        assert_eq!(deg(std::f64::consts::FRAC_PI_2), "90");
    }

    #[test]
    fn malformed_xml_has_location() {
        match read_mjcf("<mujoco>\n  <body name=\"a\">\n</mujoco>") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_round_trip() {
        let m = build_default_softfoot();
        let xml = export_mjcf(&m);
        let scene = read_mjcf(&xml).unwrap();
        assert!(scene.topology_mismatches(&m).is_empty(), "{:?}", scene.topology_mismatches(&m));
        assert_eq!(scene.joint("slider").unwrap().kind, "slide");
    }
}
