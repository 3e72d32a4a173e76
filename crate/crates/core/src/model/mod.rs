//! The hand model asset: skeleton, degree-of-freedom layout, bone scale
//! groups, neutral mesh with morph targets, skin weights and part labels.
//!
//! A [`HandModel`] is immutable once built. It is produced either by
//! [`load_model`] from the text asset format or by
//! [`generate_default_model`], and every constructor goes through the same
//! validation.

mod asset;
mod procedural;

use std::ops::Range;

use crate::error::{check_len, Error, Result};
use crate::math::Vec3;

pub use asset::{load_model, parse_model, save_model, write_model, ASSET_FORMAT, ASSET_VERSION};
pub use procedural::{generate_default_model, ProceduralConfig};

/// Maximum number of joint influences per vertex.
pub const MAX_INFLUENCES: usize = 4;

/// Tolerance on the sum of a vertex's skin weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

const UNIT_AXIS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofKind {
    Rotation,
    Translation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Bone carrying this joint's offset from its parent. `None` only for the root.
    pub bone: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dof {
    pub name: String,
    pub joint: usize,
    pub kind: DofKind,
    /// Unit axis in the owning joint's local frame.
    pub axis: Vec3,
    /// Bounds on the absolute value `θ_init + δθ` (radians or mm).
    pub lower: f64,
    pub upper: f64,
}

/// A bone is the scaled translation from a parent joint to its child.
#[derive(Debug, Clone, PartialEq)]
pub struct Bone {
    /// Rest length in mm (before scaling).
    pub length: f64,
    /// Unit direction in the parent joint's local frame.
    pub direction: Vec3,
    /// Index into the bone scale vector α.
    pub scale_slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphTarget {
    pub name: String,
    /// Absolute target shape, one position per vertex (mm).
    pub vertices: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Influence {
    pub joint: usize,
    pub weight: f64,
}

/// Everything needed to build a [`HandModel`]. Validated by
/// [`HandModel::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct HandModelParts {
    pub joints: Vec<Joint>,
    pub dofs: Vec<Dof>,
    pub theta_init: Vec<f64>,
    pub bones: Vec<Bone>,
    pub scale_slots: Vec<String>,
    pub neutral: Vec<Vec3>,
    pub morph_targets: Vec<MorphTarget>,
    pub weights: Vec<Vec<Influence>>,
    pub faces: Vec<[usize; 3]>,
    /// Per-vertex part id; 0 is reserved for background.
    pub part_labels: Vec<u8>,
    /// Name of each part id, indexed by id (entry 0 is the background).
    pub part_names: Vec<String>,
}

/// One multiplicative factor in a joint's kinematic chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainFactor {
    /// Scaled bone translation `T(α_s B d)`.
    Bone { bone: usize, slot: usize },
    /// Rotation about, or translation along, a DoF axis.
    Dof(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    parts: HandModelParts,
    dof_ranges: Vec<Range<usize>>,
    chains: Vec<Vec<ChainFactor>>,
    chain_dofs: Vec<Vec<usize>>,
    chain_slots: Vec<Vec<usize>>,
}

impl HandModel {
    /// Validates `parts` and precomputes the per-joint kinematic chains.
    ///
    /// Zero-weight influences are stripped before the convexity check.
    pub fn from_parts(mut parts: HandModelParts) -> Result<Self> {
        for list in &mut parts.weights {
            list.retain(|inf| inf.weight != 0.0);
        }
        validate(&parts)?;

        let n_joints = parts.joints.len();
        let mut dof_ranges = vec![0..0; n_joints];
        let mut start = 0;
        while start < parts.dofs.len() {
            let joint = parts.dofs[start].joint;
            let mut end = start;
            while end < parts.dofs.len() && parts.dofs[end].joint == joint {
                end += 1;
            }
            dof_ranges[joint] = start..end;
            start = end;
        }

        let mut chains: Vec<Vec<ChainFactor>> = Vec::with_capacity(n_joints);
        for (j, joint) in parts.joints.iter().enumerate() {
            let mut chain = match joint.parent {
                Some(p) => chains[p].clone(),
                None => Vec::new(),
            };
            if let Some(b) = joint.bone {
                chain.push(ChainFactor::Bone {
                    bone: b,
                    slot: parts.bones[b].scale_slot,
                });
            }
            chain.extend(dof_ranges[j].clone().map(ChainFactor::Dof));
            chains.push(chain);
        }
        let chain_dofs = chains
            .iter()
            .map(|c| {
                c.iter()
                    .filter_map(|f| match f {
                        ChainFactor::Dof(d) => Some(*d),
                        ChainFactor::Bone { .. } => None,
                    })
                    .collect()
            })
            .collect();
        let chain_slots = chains
            .iter()
            .map(|c| {
                let mut slots: Vec<usize> = c
                    .iter()
                    .filter_map(|f| match f {
                        ChainFactor::Bone { slot, .. } => Some(*slot),
                        ChainFactor::Dof(_) => None,
                    })
                    .collect();
                slots.sort_unstable();
                slots.dedup();
                slots
            })
            .collect();

        Ok(Self {
            parts,
            dof_ranges,
            chains,
            chain_dofs,
            chain_slots,
        })
    }

    pub fn parts(&self) -> &HandModelParts {
        &self.parts
    }

    pub fn into_parts(self) -> HandModelParts {
        self.parts
    }

    pub fn num_joints(&self) -> usize {
        self.parts.joints.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.parts.dofs.len()
    }

    pub fn num_scales(&self) -> usize {
        self.parts.scale_slots.len()
    }

    pub fn num_shapes(&self) -> usize {
        self.parts.morph_targets.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.parts.neutral.len()
    }

    /// Total parameter count: DoFs + scales + shapes.
    pub fn num_params(&self) -> usize {
        self.num_dofs() + self.num_scales() + self.num_shapes()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.parts.joints
    }

    pub fn dofs(&self) -> &[Dof] {
        &self.parts.dofs
    }

    pub fn theta_init(&self) -> &[f64] {
        &self.parts.theta_init
    }

    pub fn bones(&self) -> &[Bone] {
        &self.parts.bones
    }

    pub fn neutral(&self) -> &[Vec3] {
        &self.parts.neutral
    }

    pub fn morph_targets(&self) -> &[MorphTarget] {
        &self.parts.morph_targets
    }

    pub fn weights(&self) -> &[Vec<Influence>] {
        &self.parts.weights
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.parts.faces
    }

    pub fn part_labels(&self) -> &[u8] {
        &self.parts.part_labels
    }

    pub fn part_names(&self) -> &[String] {
        &self.parts.part_names
    }

    /// DoFs owned by `joint`, in composition order.
    pub fn joint_dofs(&self, joint: usize) -> Range<usize> {
        self.dof_ranges[joint].clone()
    }

    /// Ordered factors from the root down to (and including) `joint`.
    pub fn chain(&self, joint: usize) -> &[ChainFactor] {
        &self.chains[joint]
    }

    /// DoFs appearing in the chain of `joint`.
    pub fn chain_dofs(&self, joint: usize) -> &[usize] {
        &self.chain_dofs[joint]
    }

    /// Distinct scale slots appearing in the chain of `joint`.
    pub fn chain_slots(&self, joint: usize) -> &[usize] {
        &self.chain_slots[joint]
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.parts.joints.iter().position(|j| j.name == name)
    }

    /// Joint whose influence on vertex `v` is largest (ties go to the lower index).
    pub fn dominant_joint(&self, v: usize) -> usize {
        let mut best = self.parts.weights[v][0];
        for inf in &self.parts.weights[v][1..] {
            if inf.weight > best.weight || (inf.weight == best.weight && inf.joint < best.joint) {
                best = *inf;
            }
        }
        best.joint
    }

    /// Morphable shape model: `b_0 + Σ_t β_t (b_t − b_0)`.
    ///
    /// Evaluated as the equivalent affine combination
    /// `(1 − Σβ) b_0 + Σ β_t b_t`, which reproduces `b_0` at `β = 0` and
    /// `b_t` at a one-hot `β` bit for bit.
    pub fn morph(&self, beta: &[f64]) -> Result<Vec<Vec3>> {
        check_len("beta", self.num_shapes(), beta.len())?;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Argument("beta must be finite".into()));
        }
        let neutral_coef = 1.0 - beta.iter().sum::<f64>();
        let mut out: Vec<Vec3> = self.parts.neutral.iter().map(|v| v * neutral_coef).collect();
        for (b, target) in beta.iter().zip(&self.parts.morph_targets) {
            if *b == 0.0 {
                continue;
            }
            for (o, t) in out.iter_mut().zip(&target.vertices) {
                *o += t * *b;
            }
        }
        Ok(out)
    }

    /// `b_t − b_0` for vertex `v`, the shape-direction used by the β derivative.
    #[inline]
    pub fn shape_delta(&self, target: usize, v: usize) -> Vec3 {
        self.parts.morph_targets[target].vertices[v] - self.parts.neutral[v]
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn is_unit(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite()) && (v.norm() - 1.0).abs() <= UNIT_AXIS_TOLERANCE
}

/// Checks every structural invariant and reports the first one violated.
fn validate(p: &HandModelParts) -> Result<()> {
    let nj = p.joints.len();
    if nj == 0 {
        return Err(invalid("model has no joints"));
    }

    // Tree: exactly one root at index 0, parents strictly precede children.
    let roots = p.joints.iter().filter(|j| j.parent.is_none()).count();
    if roots != 1 || p.joints[0].parent.is_some() {
        return Err(invalid("joint graph not a tree"));
    }
    for (i, j) in p.joints.iter().enumerate() {
        if let Some(parent) = j.parent {
            if parent >= i {
                return Err(invalid("joint graph not a tree"));
            }
        }
    }

    // Bones: every non-root joint owns exactly one distinct bone.
    let mut bone_used = vec![false; p.bones.len()];
    for (i, j) in p.joints.iter().enumerate() {
        match (j.parent, j.bone) {
            (None, None) => {}
            (None, Some(_)) => return Err(invalid("root joint must not carry a bone")),
            (Some(_), None) => return Err(invalid(format!("joint {i} has no bone"))),
            (Some(_), Some(b)) => {
                if b >= p.bones.len() {
                    return Err(invalid(format!("joint {i} references missing bone {b}")));
                }
                if bone_used[b] {
                    return Err(invalid(format!("bone {b} shared by several joints")));
                }
                bone_used[b] = true;
            }
        }
    }
    if let Some(b) = bone_used.iter().position(|u| !u) {
        return Err(invalid(format!("bone {b} is not attached to any joint")));
    }
    for (b, bone) in p.bones.iter().enumerate() {
        if !(bone.length.is_finite() && bone.length > 0.0) {
            return Err(invalid(format!("bone {b} length must be positive")));
        }
        if !is_unit(&bone.direction) {
            return Err(invalid(format!("bone {b} direction is not a unit vector")));
        }
        if bone.scale_slot >= p.scale_slots.len() {
            return Err(invalid(format!("bone {b} maps to unknown scale slot {}", bone.scale_slot)));
        }
    }

    // DoF layout.
    let mut prev_joint = 0;
    for (d, dof) in p.dofs.iter().enumerate() {
        if dof.joint >= nj {
            return Err(invalid(format!("dof {d} owned by missing joint {}", dof.joint)));
        }
        if dof.joint < prev_joint {
            return Err(invalid(format!("dof {d} breaks joint ordering of the dof layout")));
        }
        prev_joint = dof.joint;
        if !is_unit(&dof.axis) {
            return Err(invalid(format!("dof {d} axis is not a unit vector")));
        }
        if !(dof.lower <= dof.upper) {
            return Err(invalid(format!("dof {d} has inverted bounds")));
        }
        if dof.joint != 0 && dof.kind != DofKind::Rotation {
            return Err(invalid(format!("dof {d}: only the root may translate")));
        }
    }
    let root_rot = p
        .dofs
        .iter()
        .filter(|d| d.joint == 0 && d.kind == DofKind::Rotation)
        .count();
    let root_trans = p
        .dofs
        .iter()
        .filter(|d| d.joint == 0 && d.kind == DofKind::Translation)
        .count();
    if root_rot != 3 || root_trans != 3 {
        return Err(invalid("root must own 3 translation and 3 rotation dofs"));
    }
    if p.theta_init.len() != p.dofs.len() {
        return Err(invalid("theta_init length differs from dof count"));
    }
    if p.theta_init.iter().any(|t| !t.is_finite()) {
        return Err(invalid("theta_init must be finite"));
    }

    // Mesh.
    let nv = p.neutral.len();
    if nv == 0 {
        return Err(invalid("model has no vertices"));
    }
    if p.neutral.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
        return Err(invalid("neutral shape has non-finite coordinates"));
    }
    for (t, target) in p.morph_targets.iter().enumerate() {
        if target.vertices.len() != nv {
            return Err(invalid(format!("morph target {t} has {} vertices, expected {nv}", target.vertices.len())));
        }
        if target.vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(invalid(format!("morph target {t} has non-finite coordinates")));
        }
    }
    if p.weights.len() != nv {
        return Err(invalid("weight list count differs from vertex count"));
    }
    for (k, list) in p.weights.iter().enumerate() {
        if list.is_empty() || list.len() > MAX_INFLUENCES {
            return Err(invalid(format!("vertex {k} has {} influences", list.len())));
        }
        for inf in list {
            if inf.joint >= nj {
                return Err(invalid(format!("vertex {k} influenced by missing joint {}", inf.joint)));
            }
            if !(inf.weight > 0.0 && inf.weight.is_finite()) {
                return Err(invalid(format!("non-convex skin weights at vertex {k}")));
            }
        }
        let sum: f64 = list.iter().map(|i| i.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(invalid(format!("non-convex skin weights at vertex {k}")));
        }
    }
    for (f, face) in p.faces.iter().enumerate() {
        if face.iter().any(|&i| i >= nv) {
            return Err(invalid(format!("face {f} index out of range")));
        }
    }
    if p.part_labels.len() != nv {
        return Err(invalid("part label count differs from vertex count"));
    }
    for (k, &l) in p.part_labels.iter().enumerate() {
        if l == 0 || l as usize >= p.part_names.len() {
            return Err(invalid(format!("vertex {k} has invalid part label {l}")));
        }
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn chains_follow_parents() {
        let m = three_link();
        assert_eq!(m.chain_dofs(3), &[0, 1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(m.chain_dofs(1), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(m.chain_slots(3), &[0, 1]);
        assert_eq!(m.chain_slots(1), &[0]);
        assert_eq!(m.joint_dofs(1), 6..8);
        assert!(m.joint_dofs(3).is_empty());
    }

    #[test]
    fn morph_identities() {
        let m = three_link();
        assert_eq!(m.morph(&[0.0, 0.0]).unwrap(), m.neutral());
        assert_eq!(m.morph(&[1.0, 0.0]).unwrap(), m.morph_targets()[0].vertices);
        assert_eq!(m.morph(&[0.0, 1.0]).unwrap(), m.morph_targets()[1].vertices);
    }

    #[test]
    fn morph_rejects_wrong_length() {
        let m = three_link();
        assert!(matches!(m.morph(&[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_weights_are_stripped() {
        let mut parts = three_link().into_parts();
        parts.weights[0].push(Influence { joint: 2, weight: 0.0 });
        let m = HandModel::from_parts(parts).unwrap();
        assert_eq!(m.weights()[0].len(), 1);
    }

    #[test]
    fn rejects_non_convex_weights() {
        let mut parts = three_link().into_parts();
        parts.weights[1][1].weight = 0.6;
        let err = HandModel::from_parts(parts).unwrap_err();
        assert_eq!(err.to_string(), "validation error: non-convex skin weights at vertex 1");
    }

    #[test]
    fn rejects_cyclic_parents() {
        let mut parts = three_link().into_parts();
        parts.joints[1].parent = Some(3);
        let err = HandModel::from_parts(parts).unwrap_err();
        assert_eq!(err.to_string(), "validation error: joint graph not a tree");
    }

    #[test]
    fn rejects_two_roots() {
        let mut parts = three_link().into_parts();
        parts.joints[2].parent = None;
        parts.joints[2].bone = None;
        assert!(HandModel::from_parts(parts).is_err());
    }

    #[test]
    fn rejects_bad_face_and_bone() {
        let mut parts = three_link().into_parts();
        parts.faces.push([0, 1, 9]);
        assert!(HandModel::from_parts(parts).is_err());

        let mut parts = three_link().into_parts();
        parts.bones[1].length = 0.0;
        assert!(HandModel::from_parts(parts).is_err());

        let mut parts = three_link().into_parts();
        parts.morph_targets[0].vertices.pop();
        assert!(HandModel::from_parts(parts).is_err());
    }
}
