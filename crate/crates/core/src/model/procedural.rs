//! Procedural default hand.
//!
//! The mesh is a set of open tube bands: two-ring bands per phalanx with a
//! fan cap on each fingertip, a superelliptic palm sweep, and one thenar band
//! joining the wrist to the thumb base. With the default subdivision it has
//! 1193 vertices and 1184 triangles. The hand is built at the rest pose with
//! the wrist at the origin, fingers pointing along −y and the palm facing −z.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bone, Dof, DofKind, HandModel, HandModelParts, Influence, Joint, MorphTarget, MAX_INFLUENCES};
use crate::error::{Error, Result};
use crate::math::{self, Mat4, Vec3};

pub const FINGER_NAMES: [&str; 5] = ["index", "middle", "ring", "pinky", "thumb"];
pub const SCALE_SLOT_NAMES: [&str; 6] = ["palm", "index", "middle", "ring", "pinky", "thumb"];
pub const MORPH_TARGET_NAMES: [&str; 7] = [
    "Length",
    "Mass",
    "Size",
    "Palm Length",
    "Fingers Inter-distance",
    "Fingers Length",
    "Fingers Tip-Size",
];
const SEGMENT_NAMES: [&str; 3] = ["proximal", "middle", "distal"];

const THUMB_INDEX: usize = 4;
const PALM_CENTER: [f64; 3] = [2.0, -42.0, 0.0];
const MCP_POSITIONS: [[f64; 3]; 5] = [
    [-25.0, -86.0, 0.0],
    [-6.0, -90.0, 0.0],
    [12.0, -86.0, 0.0],
    [28.0, -78.0, 0.0],
    [-42.0, -34.0, -10.0],
];
const PHALANX_LENGTHS: [[f64; 3]; 5] = [
    [39.0, 23.0, 19.0],
    [44.0, 27.0, 21.0],
    [41.0, 26.0, 20.0],
    [32.0, 19.0, 17.0],
    [33.0, 28.0, 24.0],
];
const FINGER_DIRECTIONS: [[f64; 3]; 5] = [
    [-0.08, -1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.05, -1.0, 0.0],
    [0.12, -1.0, 0.0],
    [-0.5, -0.8, -0.33],
];
/// Radius at the finger base; the finger tapers to 70% at the tip.
const FINGER_RADII: [f64; 5] = [9.5, 10.0, 9.3, 8.2, 11.0];
const FINGER_TAPER: f64 = 0.3;
const FINGER_FLATTEN: f64 = 0.85;

const PALM_TOP_Y: f64 = 6.0;
const PALM_BOTTOM_Y: f64 = -84.0;
const PALM_CENTER_X: f64 = 1.5;
const PALM_HALF_WIDTH: (f64, f64) = (30.0, 42.0);
const PALM_HALF_THICKNESS: (f64, f64) = (14.0, 12.0);
const THENAR_START: [f64; 3] = [-14.0, -6.0, -4.0];
const THENAR_RADII: (f64, f64) = (13.0, 11.0);

const REST_FLEXION: [f64; 3] = [0.12, 0.10, 0.06];
/// Falloff width of the distance-to-bone skin weights (mm).
const WEIGHT_SIGMA: f64 = 5.0;
const WEIGHT_CUTOFF: f64 = 0.01;

/// Proportions, subdivision and noise of the generated hand.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ProceduralConfig {
    pub seed: u64,
    /// Scales the palm and the finger base positions.
    pub palm_scale: f64,
    /// Scales every phalanx length.
    pub finger_length_scale: f64,
    /// Scales finger and palm cross-sections.
    pub girth_scale: f64,
    /// Segments around each finger ring.
    pub finger_segments: usize,
    /// Segments around each palm ring.
    pub palm_segments: usize,
    /// Bands along the palm.
    pub palm_bands: usize,
    /// Segments around the thenar ring.
    pub thenar_segments: usize,
    /// Amplitude of the radial surface noise (mm).
    pub jitter: f64,
}

impl Default for ProceduralConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            palm_scale: 1.0,
            finger_length_scale: 1.0,
            girth_scale: 1.0,
            finger_segments: 12,
            palm_segments: 23,
            palm_bands: 16,
            thenar_segments: 14,
            jitter: 0.3,
        }
    }
}

impl ProceduralConfig {
    fn check(&self) -> Result<()> {
        let gen = |m: &str| Err(Error::Generation(m.to_string()));
        for (name, v) in [
            ("palm_scale", self.palm_scale),
            ("finger_length_scale", self.finger_length_scale),
            ("girth_scale", self.girth_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return gen(&format!("{name} must be positive, got {v}"));
            }
        }
        if self.finger_segments < 3 || self.palm_segments < 3 || self.thenar_segments < 3 {
            return gen("rings need at least 3 segments");
        }
        if self.palm_bands == 0 {
            return gen("palm needs at least one band");
        }
        let min_radius = FINGER_RADII.iter().cloned().fold(f64::INFINITY, f64::min)
            * (1.0 - FINGER_TAPER)
            * FINGER_FLATTEN
            * self.girth_scale;
        if !(self.jitter.is_finite() && self.jitter >= 0.0 && self.jitter < 0.25 * min_radius) {
            return gen("jitter must be non-negative and small against the finger radius");
        }
        Ok(())
    }
}

/// Where a vertex belongs, for skin weights and morph targets.
#[derive(Clone, Copy)]
enum Home {
    Palm,
    Thenar,
    Finger(usize),
}

#[derive(Clone, Copy)]
struct VertexInfo {
    home: Home,
    /// Centre of the ring (or cap apex base) the vertex was generated around.
    axis: Vec3,
    /// Fraction of the finger length from the finger base (fingers only).
    along: f64,
}

struct Builder {
    vertices: Vec<Vec3>,
    info: Vec<VertexInfo>,
    labels: Vec<u8>,
    faces: Vec<[usize; 3]>,
}

impl Builder {
    /// Joins two rings of `k + 1` vertices (the last duplicates the first).
    fn band(&mut self, a: &[Vec3], b: &[Vec3], info: [VertexInfo; 2], label: u8) -> usize {
        let k = a.len() - 1;
        let start = self.vertices.len();
        for (ring, inf) in [a, b].into_iter().zip(info) {
            for p in ring {
                self.vertices.push(*p);
                self.info.push(inf);
                self.labels.push(label);
            }
        }
        let bs = start + k + 1;
        for i in 0..k {
            self.faces.push([start + i, start + i + 1, bs + i + 1]);
            self.faces.push([start + i, bs + i + 1, bs + i]);
        }
        bs
    }

    /// Closes a ring starting at `ring_start` with a fan around `apex`.
    fn cap(&mut self, ring_start: usize, k: usize, apex: Vec3, info: VertexInfo, label: u8) {
        let c = self.vertices.len();
        self.vertices.push(apex);
        self.info.push(info);
        self.labels.push(label);
        for i in 0..k {
            self.faces.push([ring_start + i, c, ring_start + i + 1]);
        }
    }
}

/// Orthonormal `(u, w)` spanning the plane perpendicular to `d`.
fn cross_frame(d: &Vec3) -> (Vec3, Vec3) {
    let reference = if d.x.abs() > 0.9 { Vec3::z() } else { Vec3::x() };
    let u = (reference - d * reference.dot(d)).normalize();
    let w = d.cross(&u);
    (u, w)
}

/// Radial noise for one ring station, shared by every copy of that ring.
fn station_noise(seed: u64, station: u64, k: usize, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(station);
    (0..k).map(|_| amplitude * rng.random_range(-1.0..=1.0)).collect()
}

/// Elliptic ring of `k + 1` points; point `k` is bitwise equal to point 0.
fn ellipse_ring(center: Vec3, u: Vec3, w: Vec3, ru: f64, rw: f64, noise: &[f64]) -> Vec<Vec3> {
    let k = noise.len();
    (0..=k)
        .map(|i| {
            let phi = 2.0 * PI * (i % k) as f64 / k as f64;
            let n = noise[i % k];
            center + u * ((ru + n) * phi.cos()) + w * ((rw + n) * phi.sin())
        })
        .collect()
}

/// Superelliptic palm ring in the x–z plane.
fn palm_ring(center: Vec3, a: f64, b: f64, noise: &[f64]) -> Vec<Vec3> {
    let k = noise.len();
    let root = |t: f64| t.signum() * t.abs().sqrt();
    (0..=k)
        .map(|i| {
            let phi = 2.0 * PI * (i % k) as f64 / k as f64;
            let n = noise[i % k];
            center + Vec3::new((a + n) * root(phi.cos()), 0.0, (b + n) * root(phi.sin()))
        })
        .collect()
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn finger_direction(f: usize) -> Vec3 {
    v3(FINGER_DIRECTIONS[f]).normalize()
}

/// Flexion and abduction axes of a finger in the finger-base frame.
fn finger_axes(f: usize) -> (Vec3, Vec3) {
    if f != THUMB_INDEX {
        return (Vec3::x(), Vec3::z());
    }
    let d = finger_direction(f);
    let m = Vec3::new(0.6, 0.0, -0.8);
    let m = (m - d * m.dot(&d)).normalize();
    let flex = d.cross(&m).normalize();
    let abd = d.cross(&flex).normalize();
    (flex, abd)
}

fn widen(lo: f64, hi: f64, factor: f64) -> (f64, f64) {
    let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo) * factor);
    (c - h, c + h)
}

fn mcp_joint(f: usize) -> usize {
    2 + 4 * f
}

fn skeleton(cfg: &ProceduralConfig) -> (Vec<Joint>, Vec<Dof>, Vec<f64>, Vec<Bone>) {
    let mut joints = vec![
        Joint { name: "wrist".into(), parent: None, bone: None },
        Joint { name: "palm_center".into(), parent: Some(0), bone: Some(0) },
    ];
    let palm_center = v3(PALM_CENTER) * cfg.palm_scale;
    let mut bones = vec![Bone {
        length: palm_center.norm(),
        direction: palm_center.normalize(),
        scale_slot: 0,
    }];

    let root_dof = |name: &str, kind, axis: Vec3, lo: f64, hi: f64| Dof {
        name: name.into(),
        joint: 0,
        kind,
        axis,
        lower: lo,
        upper: hi,
    };
    let mut dofs = vec![
        root_dof("wrist_tx", DofKind::Translation, Vec3::x(), -1000.0, 1000.0),
        root_dof("wrist_ty", DofKind::Translation, Vec3::y(), -1000.0, 1000.0),
        root_dof("wrist_tz", DofKind::Translation, Vec3::z(), -2000.0, 2000.0),
        root_dof("wrist_rz", DofKind::Rotation, Vec3::z(), -PI, PI),
        root_dof("wrist_ry", DofKind::Rotation, Vec3::y(), -PI, PI),
        root_dof("wrist_rx", DofKind::Rotation, Vec3::x(), -PI, PI),
    ];
    let mut theta_init = vec![0.0; 6];

    for (f, name) in FINGER_NAMES.iter().enumerate() {
        let mcp = v3(MCP_POSITIONS[f]) * cfg.palm_scale;
        let d = finger_direction(f);
        let (flex_axis, abd_axis) = finger_axes(f);
        let widen_by = if f == THUMB_INDEX { 1.2 } else { 1.0 };
        let limits = [
            widen((-30f64).to_radians(), 100f64.to_radians(), widen_by),
            widen(0.0, 110f64.to_radians(), widen_by),
            widen(0.0, 90f64.to_radians(), widen_by),
        ];
        let abd = widen((-20f64).to_radians(), 20f64.to_radians(), widen_by);

        let base = mcp_joint(f);
        for (s, joint) in ["mcp", "pip", "dip", "tip"].iter().enumerate() {
            let j = base + s;
            let (parent, bone) = if s == 0 {
                (0, Bone { length: mcp.norm(), direction: mcp.normalize(), scale_slot: 0 })
            } else {
                let length = PHALANX_LENGTHS[f][s - 1] * cfg.finger_length_scale;
                (j - 1, Bone { length, direction: d, scale_slot: 1 + f })
            };
            joints.push(Joint {
                name: format!("{name}_{joint}"),
                parent: Some(parent),
                bone: Some(bones.len()),
            });
            bones.push(bone);
            let flex = |label: &str, (lo, hi): (f64, f64)| Dof {
                name: format!("{name}_{label}"),
                joint: j,
                kind: DofKind::Rotation,
                axis: flex_axis,
                lower: lo,
                upper: hi,
            };
            match s {
                0 => {
                    dofs.push(Dof {
                        name: format!("{name}_mcp_abd"),
                        joint: j,
                        kind: DofKind::Rotation,
                        axis: abd_axis,
                        lower: abd.0,
                        upper: abd.1,
                    });
                    theta_init.push(0.0);
                    dofs.push(flex("mcp_flex", limits[0]));
                    theta_init.push(REST_FLEXION[0]);
                }
                1 => {
                    dofs.push(flex("pip_flex", limits[1]));
                    theta_init.push(REST_FLEXION[1]);
                }
                2 => {
                    dofs.push(flex("dip_flex", limits[2]));
                    theta_init.push(REST_FLEXION[2]);
                }
                _ => {}
            }
        }
    }
    (joints, dofs, theta_init, bones)
}

/// Rest-pose global transforms with unit bone scales.
fn rest_transforms(joints: &[Joint], dofs: &[Dof], theta: &[f64], bones: &[Bone]) -> Vec<Mat4> {
    let mut out: Vec<Mat4> = Vec::with_capacity(joints.len());
    for (j, joint) in joints.iter().enumerate() {
        let mut m = match (joint.parent, joint.bone) {
            (Some(p), Some(b)) => out[p] * math::translation(&(bones[b].direction * bones[b].length)),
            _ => Mat4::identity(),
        };
        for (d, dof) in dofs.iter().enumerate().filter(|(_, d)| d.joint == j) {
            m *= match dof.kind {
                DofKind::Rotation => math::rotation(&dof.axis, theta[d]),
                DofKind::Translation => math::translation(&(dof.axis * theta[d])),
            };
        }
        out.push(m);
    }
    out
}

fn build_mesh(cfg: &ProceduralConfig, rest: &[Mat4], bones: &[Bone]) -> Builder {
    let mut b = Builder {
        vertices: Vec::new(),
        info: Vec::new(),
        labels: Vec::new(),
        faces: Vec::new(),
    };
    let mut station: u64 = 0;
    let mut next_noise = |k: usize| {
        station += 1;
        station_noise(cfg.seed, station, k, cfg.jitter)
    };

    let kf = cfg.finger_segments;
    for f in 0..5 {
        let d = finger_direction(f);
        let (u, w) = cross_frame(&d);
        let lengths: Vec<f64> = (0..3).map(|s| bones[mcp_joint(f) + s].length).collect();
        let total: f64 = lengths.iter().sum();
        let radius = |along: f64| FINGER_RADII[f] * cfg.girth_scale * (1.0 - FINGER_TAPER * along);
        let mut start_len = 0.0;
        let mut last_ring = 0;
        for s in 0..3 {
            let m = &rest[mcp_joint(f) + s];
            let label = (2 + 3 * f + s) as u8;
            let mut rings = Vec::new();
            let mut infos = Vec::new();
            for t in [0.0, lengths[s]] {
                let along = (start_len + t) / total;
                let local = d * t;
                let r = radius(along);
                let ring = ellipse_ring(local, u, w, r, r * FINGER_FLATTEN, &next_noise(kf));
                rings.push(ring.iter().map(|p| math::transform_point(m, p)).collect::<Vec<_>>());
                infos.push(VertexInfo {
                    home: Home::Finger(f),
                    axis: math::transform_point(m, &local),
                    along,
                });
            }
            last_ring = b.band(&rings[0], &rings[1], [infos[0], infos[1]], label);
            start_len += lengths[s];
        }
        let m = &rest[mcp_joint(f) + 2];
        let tip_local = d * lengths[2];
        let apex = math::transform_point(m, &(tip_local + d * (0.6 * radius(1.0))));
        let info = VertexInfo {
            home: Home::Finger(f),
            axis: math::transform_point(m, &tip_local),
            along: 1.0,
        };
        b.cap(last_ring, kf, apex, info, (2 + 3 * f + 2) as u8);
    }

    let kp = cfg.palm_segments;
    let bands = cfg.palm_bands;
    let level_noise: Vec<Vec<f64>> = (0..=bands).map(|_| next_noise(kp)).collect();
    let level = |i: usize| {
        let t = i as f64 / bands as f64;
        let lerp = |(a, b): (f64, f64)| a + (b - a) * t;
        let s = cfg.palm_scale;
        let center = Vec3::new(PALM_CENTER_X * s, lerp((PALM_TOP_Y, PALM_BOTTOM_Y)) * s, 0.0);
        let a = lerp(PALM_HALF_WIDTH) * s * cfg.girth_scale;
        let bt = lerp(PALM_HALF_THICKNESS) * s * cfg.girth_scale;
        (center, palm_ring(center, a, bt, &level_noise[i]))
    };
    for i in 0..bands {
        let (c0, r0) = level(i);
        let (c1, r1) = level(i + 1);
        let inf = |axis| VertexInfo { home: Home::Palm, axis, along: 0.0 };
        b.band(&r0, &r1, [inf(c0), inf(c1)], 1);
    }

    let p0 = v3(THENAR_START) * cfg.palm_scale;
    let p1 = math::origin_of(&rest[mcp_joint(THUMB_INDEX)]);
    let d = (p1 - p0).normalize();
    let (u, w) = cross_frame(&d);
    let (ru, rw) = (
        THENAR_RADII.0 * cfg.palm_scale * cfg.girth_scale,
        THENAR_RADII.1 * cfg.palm_scale * cfg.girth_scale,
    );
    let kt = cfg.thenar_segments;
    let r0 = ellipse_ring(p0, u, w, ru, rw, &next_noise(kt));
    let r1 = ellipse_ring(p1, u, w, ru, rw, &next_noise(kt));
    let inf = |axis| VertexInfo { home: Home::Thenar, axis, along: 0.0 };
    b.band(&r0, &r1, [inf(p0), inf(p1)], 1);
    b
}

fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance-to-bone falloff weights, restricted to the bones a vertex's part
/// can plausibly follow.
fn skin_weights(mesh: &Builder, rest_pos: &[Vec3]) -> Vec<Vec<Influence>> {
    let seg = |j: usize, c: usize| (j, rest_pos[j], rest_pos[c]);
    mesh.vertices
        .iter()
        .zip(&mesh.info)
        .map(|(p, info)| {
            let candidates: Vec<(usize, Vec3, Vec3)> = match info.home {
                Home::Finger(finger) => {
                    let m = mcp_joint(finger);
                    vec![seg(0, m), seg(m, m + 1), seg(m + 1, m + 2), seg(m + 2, m + 3)]
                }
                Home::Thenar => {
                    let m = mcp_joint(THUMB_INDEX);
                    vec![seg(0, m), seg(m, m + 1)]
                }
                Home::Palm => {
                    let mut v = vec![seg(0, 1)];
                    for f in 0..5 {
                        let m = mcp_joint(f);
                        v.push(seg(0, m));
                        v.push(seg(m, m + 1));
                    }
                    v
                }
            };
            let mut dist: Vec<(usize, f64)> = Vec::new();
            for (j, a, c) in candidates {
                let dj = point_segment_distance(p, &a, &c);
                match dist.iter_mut().find(|(k, _)| *k == j) {
                    Some(entry) => entry.1 = entry.1.min(dj),
                    None => dist.push((j, dj)),
                }
            }
            let d_min = dist.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
            let mut w: Vec<Influence> = dist
                .iter()
                .map(|&(joint, dj)| Influence {
                    joint,
                    weight: (-((dj - d_min) / WEIGHT_SIGMA).powi(2)).exp(),
                })
                .collect();
            let total: f64 = w.iter().map(|i| i.weight).sum();
            w.retain(|i| i.weight / total >= WEIGHT_CUTOFF);
            w.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.joint.cmp(&b.joint)));
            w.truncate(MAX_INFLUENCES);
            let total: f64 = w.iter().map(|i| i.weight).sum();
            for i in &mut w {
                i.weight /= total;
            }
            w
        })
        .collect()
}

fn morph_targets(mesh: &Builder, rest_pos: &[Vec3]) -> Vec<MorphTarget> {
    let mcp = |f: usize| rest_pos[mcp_joint(f)];
    let middle_x = mcp(1).x;
    let shapes: [Box<dyn Fn(&Vec3, &VertexInfo) -> Vec3>; 7] = [
        Box::new(|v, _| Vec3::new(v.x, 1.08 * v.y, v.z)),
        Box::new(|v, i| i.axis + (v - i.axis) * 1.12),
        Box::new(|v, _| v * 1.1),
        Box::new(move |v, i| match i.home {
            Home::Palm | Home::Thenar => Vec3::new(v.x, 1.15 * v.y, v.z),
            Home::Finger(finger) => v + Vec3::new(0.0, 0.15 * mcp(finger).y, 0.0),
        }),
        Box::new(move |v, i| match i.home {
            Home::Finger(finger) => v + Vec3::new(0.2 * (mcp(finger).x - middle_x), 0.0, 0.0),
            _ => *v,
        }),
        Box::new(move |v, i| match i.home {
            Home::Finger(finger) => v + (i.axis - mcp(finger)) * 0.15,
            _ => *v,
        }),
        Box::new(|v, i| match i.home {
            Home::Finger(_) => i.axis + (v - i.axis) * (1.0 + 0.3 * i.along),
            _ => *v,
        }),
    ];
    MORPH_TARGET_NAMES
        .iter()
        .zip(shapes.iter())
        .map(|(name, shape)| MorphTarget {
            name: (*name).into(),
            vertices: mesh.vertices.iter().zip(&mesh.info).map(|(v, i)| shape(v, i)).collect(),
        })
        .collect()
}

/// Builds the default hand. Identical configs give bit-identical models.
pub fn generate_default_model(cfg: &ProceduralConfig) -> Result<HandModel> {
    cfg.check()?;
    let (joints, dofs, theta_init, bones) = skeleton(cfg);
    if let Some(b) = bones.iter().position(|b| !(b.length > 0.0 && b.length.is_finite())) {
        return Err(Error::Generation(format!("bone {b} is degenerate")));
    }
    let rest = rest_transforms(&joints, &dofs, &theta_init, &bones);
    let rest_pos: Vec<Vec3> = rest.iter().map(math::origin_of).collect();
    let mesh = build_mesh(cfg, &rest, &bones);
    let weights = skin_weights(&mesh, &rest_pos);
    let morph_targets = morph_targets(&mesh, &rest_pos);

    let mut part_names = vec!["background".to_string(), "palm".to_string()];
    for f in FINGER_NAMES {
        for s in SEGMENT_NAMES {
            part_names.push(format!("{f}_{s}"));
        }
    }
    HandModel::from_parts(HandModelParts {
        joints,
        dofs,
        theta_init,
        bones,
        scale_slots: SCALE_SLOT_NAMES.iter().map(|s| s.to_string()).collect(),
        neutral: mesh.vertices,
        morph_targets,
        weights,
        faces: mesh.faces,
        part_labels: mesh.labels,
        part_names,
    })
    .map_err(|e| Error::Generation(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{forward_kinematics, ParamVector};

    fn default_model() -> HandModel {
        generate_default_model(&ProceduralConfig::default()).unwrap()
    }

    #[test]
    fn default_counts() {
        let m = default_model();
        assert_eq!(m.num_joints(), 22);
        assert_eq!(m.num_dofs(), 26);
        assert_eq!(m.num_scales(), 6);
        assert_eq!(m.num_shapes(), 7);
        assert_eq!(m.num_vertices(), 1193);
        assert_eq!(m.faces().len(), 1184);
        assert_eq!(m.part_names().len(), 17);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = ProceduralConfig { seed: 42, ..Default::default() };
        assert_eq!(generate_default_model(&cfg).unwrap(), generate_default_model(&cfg).unwrap());
        let other = ProceduralConfig { seed: 43, ..Default::default() };
        assert_ne!(generate_default_model(&cfg).unwrap(), generate_default_model(&other).unwrap());
    }

    #[test]
    fn first_finger_slot_is_the_index_finger() {
        let m = default_model();
        let j = m.joint_index("index_pip").unwrap();
        let bone = &m.bones()[m.joints()[j].bone.unwrap()];
        assert_eq!(bone.scale_slot, 1);
    }

    #[test]
    fn rest_joints_match_hand_layout() {
        let m = default_model();
        let kin = forward_kinematics(&m, &ParamVector::neutral(&m)).unwrap();
        let p = &kin.joint_positions;
        assert_eq!(p[0], Vec3::zeros());
        assert!((p[1] - v3(PALM_CENTER)).norm() < 1e-12);
        for f in 0..4 {
            let tip = p[mcp_joint(f) + 3];
            assert!(tip.y < p[mcp_joint(f)].y - 60.0, "finger {f} points down the hand");
            assert!(tip.z < 0.0, "rest flexion curls toward the palm side");
        }
    }

    #[test]
    fn every_vertex_is_near_its_dominant_joint() {
        let m = default_model();
        let kin = forward_kinematics(&m, &ParamVector::neutral(&m)).unwrap();
        let longest_bone = |j: usize| {
            let own = m.joints()[j].bone.map(|b| m.bones()[b].length).unwrap_or(0.0);
            m.joints()
                .iter()
                .filter(|c| c.parent == Some(j))
                .map(|c| m.bones()[c.bone.unwrap()].length)
                .fold(own, f64::max)
        };
        for (k, v) in m.neutral().iter().enumerate() {
            let j = m.dominant_joint(k);
            assert!((v - kin.joint_positions[j]).norm() <= 2.0 * longest_bone(j), "vertex {k}");
        }
    }

    #[test]
    fn labels_cover_every_part() {
        let m = default_model();
        for id in 1..m.part_names().len() as u8 {
            assert!(m.part_labels().contains(&id), "part {id} unused");
        }
    }

    #[test]
    fn fingers_length_target_lengthens_fingers() {
        let m = default_model();
        let t = &m.morph_targets()[5].vertices;
        let tip_apex = (0..m.num_vertices())
            .filter(|&k| m.part_labels()[k] == 4)
            .max_by(|&a, &b| m.neutral()[b].y.total_cmp(&m.neutral()[a].y))
            .unwrap();
        assert!(t[tip_apex].y < m.neutral()[tip_apex].y - 5.0);
    }

    #[test]
    fn degenerate_proportions_are_rejected() {
        for cfg in [
            ProceduralConfig { finger_length_scale: 0.0, ..Default::default() },
            ProceduralConfig { palm_scale: -1.0, ..Default::default() },
            ProceduralConfig { finger_segments: 2, ..Default::default() },
        ] {
            assert!(matches!(generate_default_model(&cfg), Err(Error::Generation(_))));
        }
    }
}
