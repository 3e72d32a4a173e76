//! Forward kinematics of the scaled skeleton and analytic joint Jacobians.
//!
//! Each joint's global transform is the ordered product of the factors in its
//! chain, root first: for every joint on the path, the scaled bone
//! translation `T(α_s B d)` followed by that joint's DoF rotations (or, for
//! the root, translations and rotations). Derivatives replace one factor of
//! the product by its derivative; for a scale α_s the replacements are summed
//! over every bone in the chain that carries α_s.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::math::{self, Mat4, Vec3};
use crate::model::{ChainFactor, DofKind, HandModel};

/// Default admissible range for every bone scale.
pub const DEFAULT_ALPHA_RANGE: (f64, f64) = (0.5, 2.0);

/// Layer inputs: pose change δθ, bone scales α and shape weights β.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamVector {
    pub delta_theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ParamVector {
    /// Rest pose, unit scales, neutral shape.
    pub fn neutral(model: &HandModel) -> Self {
        Self {
            delta_theta: vec![0.0; model.num_dofs()],
            alpha: vec![1.0; model.num_scales()],
            beta: vec![0.0; model.num_shapes()],
        }
    }

    pub fn len(&self) -> usize {
        self.delta_theta.len() + self.alpha.len() + self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenation `[δθ | α | β]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.delta_theta);
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn from_flat(model: &HandModel, flat: &[f64]) -> Result<Self> {
        check_len("parameter row", model.num_params(), flat.len())?;
        let (nd, ns) = (model.num_dofs(), model.num_scales());
        Ok(Self {
            delta_theta: flat[..nd].to_vec(),
            alpha: flat[nd..nd + ns].to_vec(),
            beta: flat[nd + ns..].to_vec(),
        })
    }

    /// Dimension, finiteness and positivity checks required by the layer.
    pub fn check(&self, model: &HandModel) -> Result<()> {
        check_len("delta_theta", model.num_dofs(), self.delta_theta.len())?;
        check_len("alpha", model.num_scales(), self.alpha.len())?;
        check_len("beta", model.num_shapes(), self.beta.len())?;
        if self.to_flat().iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("parameters must be finite".into()));
        }
        if self.alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::Argument("bone scales must be positive".into()));
        }
        Ok(())
    }

    /// Absolute pose `Θ = θ_init + δθ`.
    pub fn theta(&self, model: &HandModel) -> Vec<f64> {
        model
            .theta_init()
            .iter()
            .zip(&self.delta_theta)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Human-readable list of bound violations (empty when within bounds).
    pub fn bound_violations(&self, model: &HandModel, alpha_range: (f64, f64)) -> Vec<String> {
        let mut out = Vec::new();
        for (dof, th) in model.dofs().iter().zip(self.theta(model)) {
            if th < dof.lower || th > dof.upper {
                out.push(format!("{} = {th} outside [{}, {}]", dof.name, dof.lower, dof.upper));
            }
        }
        for (s, a) in self.alpha.iter().enumerate() {
            if *a < alpha_range.0 || *a > alpha_range.1 {
                out.push(format!("alpha[{s}] = {a} outside [{}, {}]", alpha_range.0, alpha_range.1));
            }
        }
        out
    }

    /// Clamps α into `alpha_range` and every absolute DoF value into its bounds.
    pub fn project_to_bounds(&mut self, model: &HandModel, alpha_range: (f64, f64)) {
        for ((d, dof), init) in self
            .delta_theta
            .iter_mut()
            .zip(model.dofs())
            .zip(model.theta_init())
        {
            let th = (init + *d).clamp(dof.lower, dof.upper);
            *d = th - init;
        }
        for a in &mut self.alpha {
            *a = a.clamp(alpha_range.0, alpha_range.1);
        }
    }
}

/// Forward kinematics output.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    pub delta_theta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Joint positions `P_i = M_i [0,0,0,1]ᵀ` (mm).
    pub joint_positions: Vec<Vec3>,
    /// Global transforms `M_i` at the current pose.
    pub global: Vec<Mat4>,
    /// Reference transforms `M*_i` at `θ_init` with the current α.
    pub reference: Vec<Mat4>,
}

struct FactorTable {
    bones: Vec<Mat4>,
    dofs: Vec<Mat4>,
    dofs_ref: Vec<Mat4>,
}

fn dof_matrix(model: &HandModel, d: usize, value: f64) -> Mat4 {
    let dof = &model.dofs()[d];
    match dof.kind {
        DofKind::Rotation => math::rotation(&dof.axis, value),
        DofKind::Translation => math::translation(&(dof.axis * value)),
    }
}

fn dof_derivative(model: &HandModel, d: usize, value: f64) -> Mat4 {
    let dof = &model.dofs()[d];
    match dof.kind {
        DofKind::Rotation => math::rotation_derivative(&dof.axis, value),
        DofKind::Translation => math::translation_derivative(&dof.axis),
    }
}

fn bone_offset(model: &HandModel, b: usize, alpha: &[f64]) -> Vec3 {
    let bone = &model.bones()[b];
    bone.direction * (alpha[bone.scale_slot] * bone.length)
}

impl FactorTable {
    fn new(model: &HandModel, delta_theta: &[f64], alpha: &[f64]) -> Self {
        let init = model.theta_init();
        Self {
            bones: (0..model.bones().len())
                .map(|b| math::translation(&bone_offset(model, b, alpha)))
                .collect(),
            dofs: (0..model.num_dofs())
                .map(|d| dof_matrix(model, d, init[d] + delta_theta[d]))
                .collect(),
            dofs_ref: (0..model.num_dofs())
                .map(|d| dof_matrix(model, d, init[d]))
                .collect(),
        }
    }

    fn factor(&self, f: ChainFactor, reference: bool) -> &Mat4 {
        match f {
            ChainFactor::Bone { bone, .. } => &self.bones[bone],
            ChainFactor::Dof(d) if reference => &self.dofs_ref[d],
            ChainFactor::Dof(d) => &self.dofs[d],
        }
    }
}

/// Evaluates every joint transform at the current pose and at the reference
/// pose (both with the current α).
pub fn forward_kinematics(model: &HandModel, params: &ParamVector) -> Result<KinematicState> {
    check_pose_inputs(model, params)?;
    let table = FactorTable::new(model, &params.delta_theta, &params.alpha);
    let n = model.num_joints();
    let mut global: Vec<Mat4> = Vec::with_capacity(n);
    let mut reference: Vec<Mat4> = Vec::with_capacity(n);
    for (j, joint) in model.joints().iter().enumerate() {
        let (mut m, mut r) = match (joint.parent, joint.bone) {
            (Some(p), Some(b)) => (global[p] * table.bones[b], reference[p] * table.bones[b]),
            _ => (Mat4::identity(), Mat4::identity()),
        };
        for d in model.joint_dofs(j) {
            m *= table.dofs[d];
            r *= table.dofs_ref[d];
        }
        global.push(m);
        reference.push(r);
    }
    Ok(KinematicState {
        delta_theta: params.delta_theta.clone(),
        alpha: params.alpha.clone(),
        joint_positions: global.iter().map(math::origin_of).collect(),
        global,
        reference,
    })
}

fn check_pose_inputs(model: &HandModel, params: &ParamVector) -> Result<()> {
    check_len("delta_theta", model.num_dofs(), params.delta_theta.len())?;
    check_len("alpha", model.num_scales(), params.alpha.len())?;
    if params.delta_theta.iter().chain(&params.alpha).any(|x| !x.is_finite()) {
        return Err(Error::Argument("parameters must be finite".into()));
    }
    if params.alpha.iter().any(|&a| a <= 0.0) {
        return Err(Error::Argument("bone scales must be positive".into()));
    }
    Ok(())
}

/// Per-joint derivatives of the global and reference transforms.
#[derive(Debug, Clone)]
pub struct ChainDerivatives {
    /// `∂M_j/∂θ_p` for each `p` in `model.chain_dofs(j)`, same order.
    pub d_theta: Vec<Vec<Mat4>>,
    /// `∂M_j/∂α_s` for each `s` in `model.chain_slots(j)`, same order.
    pub d_alpha: Vec<Vec<Mat4>>,
    /// `∂M*_j/∂α_s`, same layout as `d_alpha`. `M*` does not depend on δθ.
    pub d_alpha_ref: Vec<Vec<Mat4>>,
}

/// Differentiates every joint transform by single-factor replacement along
/// its chain.
pub fn chain_derivatives(model: &HandModel, params: &ParamVector) -> Result<ChainDerivatives> {
    check_pose_inputs(model, params)?;
    let table = FactorTable::new(model, &params.delta_theta, &params.alpha);
    let init = model.theta_init();
    let n = model.num_joints();
    let mut out = ChainDerivatives {
        d_theta: Vec::with_capacity(n),
        d_alpha: Vec::with_capacity(n),
        d_alpha_ref: Vec::with_capacity(n),
    };

    let mut prefix: Vec<Mat4> = Vec::new();
    let mut suffix: Vec<Mat4> = Vec::new();
    for j in 0..n {
        let chain = model.chain(j);
        let slots = model.chain_slots(j);
        let mut d_theta = Vec::with_capacity(model.chain_dofs(j).len());
        let mut d_alpha = vec![Mat4::zeros(); slots.len()];
        let mut d_alpha_ref = vec![Mat4::zeros(); slots.len()];

        for reference in [false, true] {
            products(chain, |f| table.factor(f, reference), &mut prefix, &mut suffix);
            for (k, f) in chain.iter().enumerate() {
                match *f {
                    ChainFactor::Dof(d) if !reference => {
                        let dm = dof_derivative(model, d, init[d] + params.delta_theta[d]);
                        d_theta.push(prefix[k] * dm * suffix[k + 1]);
                    }
                    ChainFactor::Dof(_) => {}
                    ChainFactor::Bone { bone, slot } => {
                        let b = &model.bones()[bone];
                        let dt = math::translation_derivative(&(b.direction * b.length));
                        let term = prefix[k] * dt * suffix[k + 1];
                        let idx = slots.binary_search(&slot).expect("slot listed in chain");
                        if reference {
                            d_alpha_ref[idx] += term;
                        } else {
                            d_alpha[idx] += term;
                        }
                    }
                }
            }
        }
        out.d_theta.push(d_theta);
        out.d_alpha.push(d_alpha);
        out.d_alpha_ref.push(d_alpha_ref);
    }
    Ok(out)
}

/// Fills `prefix[k] = F_0 … F_{k-1}` and `suffix[k] = F_k … F_{m-1}`.
fn products<'a>(
    chain: &[ChainFactor],
    factor: impl Fn(ChainFactor) -> &'a Mat4,
    prefix: &mut Vec<Mat4>,
    suffix: &mut Vec<Mat4>,
) {
    let m = chain.len();
    prefix.clear();
    prefix.push(Mat4::identity());
    for (k, f) in chain.iter().enumerate() {
        let next = prefix[k] * factor(*f);
        prefix.push(next);
    }
    suffix.clear();
    suffix.resize(m + 1, Mat4::identity());
    for k in (0..m).rev() {
        suffix[k] = factor(chain[k]) * suffix[k + 1];
    }
}

/// Dense joint-position Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct JointJacobians {
    /// `∂P/∂δθ`, `3J × n_dofs`; rows `3i..3i+3` belong to joint `i`.
    pub d_theta: DMatrix<f64>,
    /// `∂P/∂α`, `3J × n_scales`.
    pub d_alpha: DMatrix<f64>,
}

pub fn joint_jacobians(model: &HandModel, params: &ParamVector) -> Result<JointJacobians> {
    let derivs = chain_derivatives(model, params)?;
    Ok(joint_jacobians_from(model, &derivs))
}

pub(crate) fn joint_jacobians_from(model: &HandModel, derivs: &ChainDerivatives) -> JointJacobians {
    let n = model.num_joints();
    let mut d_theta = DMatrix::zeros(3 * n, model.num_dofs());
    let mut d_alpha = DMatrix::zeros(3 * n, model.num_scales());
    for j in 0..n {
        for (dm, &p) in derivs.d_theta[j].iter().zip(model.chain_dofs(j)) {
            for r in 0..3 {
                d_theta[(3 * j + r, p)] = dm[(r, 3)];
            }
        }
        for (dm, &s) in derivs.d_alpha[j].iter().zip(model.chain_slots(j)) {
            for r in 0..3 {
                d_alpha[(3 * j + r, s)] = dm[(r, 3)];
            }
        }
    }
    JointJacobians { d_theta, d_alpha }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::three_link;

    fn params(model: &HandModel) -> ParamVector {
        let mut p = ParamVector::neutral(model);
        p.delta_theta = vec![1.0, -2.0, 3.0, 0.3, 0.5, -0.4, 0.7, -0.2, 0.9];
        p.alpha = vec![1.3, 0.8];
        p
    }

    /// Independent oracle: multiply every chain factor from scratch.
    fn brute_force_position(model: &HandModel, p: &ParamVector, j: usize) -> Vec3 {
        let theta = p.theta(model);
        let mut m = Mat4::identity();
        let mut path = vec![j];
        while let Some(parent) = model.joints()[*path.last().unwrap()].parent {
            path.push(parent);
        }
        for &k in path.iter().rev() {
            if let Some(b) = model.joints()[k].bone {
                let bone = &model.bones()[b];
                let off = bone.direction * (p.alpha[bone.scale_slot] * bone.length);
                m *= math::translation(&off);
            }
            for d in model.joint_dofs(k) {
                let dof = &model.dofs()[d];
                m *= match dof.kind {
                    DofKind::Rotation => math::rotation(&dof.axis, theta[d]),
                    DofKind::Translation => math::translation(&(dof.axis * theta[d])),
                };
            }
        }
        math::origin_of(&m)
    }

    #[test]
    fn matches_brute_force_chain() {
        let m = three_link();
        let p = params(&m);
        let kin = forward_kinematics(&m, &p).unwrap();
        for j in 0..m.num_joints() {
            assert!((kin.joint_positions[j] - brute_force_position(&m, &p, j)).norm() < 1e-12);
        }
    }

    #[test]
    fn transforms_are_rigid() {
        let m = three_link();
        let kin = forward_kinematics(&m, &params(&m)).unwrap();
        for t in kin.global.iter().chain(&kin.reference) {
            let r = t.fixed_view::<3, 3>(0, 0);
            assert!((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max() < 1e-9);
            assert_eq!(t.row(3), nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn root_translation_shifts_everything() {
        let m = three_link();
        let base = ParamVector::neutral(&m);
        let mut moved = base.clone();
        moved.delta_theta[0] = 10.0;
        let a = forward_kinematics(&m, &base).unwrap();
        let b = forward_kinematics(&m, &moved).unwrap();
        for (pa, pb) in a.joint_positions.iter().zip(&b.joint_positions) {
            assert!((pb - pa - Vec3::new(10.0, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn jacobians_match_central_differences() {
        let m = three_link();
        let p = params(&m);
        let jac = joint_jacobians(&m, &p).unwrap();
        let h = 1e-6;
        let pos = |q: &ParamVector| forward_kinematics(&m, q).unwrap().joint_positions;
        for d in 0..m.num_dofs() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.delta_theta[d] += h;
            b.delta_theta[d] -= h;
            let (pa, pb) = (pos(&a), pos(&b));
            for j in 0..m.num_joints() {
                let fd = (pa[j] - pb[j]) / (2.0 * h);
                for r in 0..3 {
                    assert!((fd[r] - jac.d_theta[(3 * j + r, d)]).abs() < 1e-6, "dof {d} joint {j}");
                }
            }
        }
        for s in 0..m.num_scales() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.alpha[s] += h;
            b.alpha[s] -= h;
            let (pa, pb) = (pos(&a), pos(&b));
            for j in 0..m.num_joints() {
                let fd = (pa[j] - pb[j]) / (2.0 * h);
                for r in 0..3 {
                    assert!((fd[r] - jac.d_alpha[(3 * j + r, s)]).abs() < 1e-6, "slot {s} joint {j}");
                }
            }
        }
    }

    #[test]
    fn off_chain_dofs_have_zero_columns() {
        let m = three_link();
        let jac = joint_jacobians(&m, &params(&m)).unwrap();
        // Joint 1 does not depend on joint 2's flexion (dof 8).
        for r in 0..3 {
            assert_eq!(jac.d_theta[(3 + r, 8)], 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = three_link();
        let mut p = ParamVector::neutral(&m);
        p.alpha[0] = 0.0;
        assert!(forward_kinematics(&m, &p).is_err());
        let mut p = ParamVector::neutral(&m);
        p.delta_theta[2] = f64::NAN;
        assert!(matches!(forward_kinematics(&m, &p), Err(Error::Argument(_))));
        let mut p = ParamVector::neutral(&m);
        p.delta_theta.pop();
        assert!(matches!(forward_kinematics(&m, &p), Err(Error::Dimension { .. })));
    }

    #[test]
    fn projection_clamps_into_bounds() {
        let m = three_link();
        let mut p = ParamVector::neutral(&m);
        p.delta_theta[6] = 10.0;
        p.alpha[1] = 5.0;
        assert_eq!(p.bound_violations(&m, DEFAULT_ALPHA_RANGE).len(), 2);
        p.project_to_bounds(&m, DEFAULT_ALPHA_RANGE);
        assert!(p.bound_violations(&m, DEFAULT_ALPHA_RANGE).is_empty());
        assert_eq!(p.alpha[1], 2.0);
    }
}
