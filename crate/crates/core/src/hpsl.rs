//! The hand pose and shape layer.
//!
//! `hpsl_forward` maps `(δθ, α, β)` to joint positions `P` and skinned
//! vertices `V`. The losses are `L_J = ½‖P − P_GT‖²`, `L_V = ½‖V − V_GT‖²`
//! and `L = L_J + 𝟙 L_V` where the indicator is set when vertex ground truth
//! is supplied. Losses are sums over coordinates, not means.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::kinematics::{
    chain_derivatives, forward_kinematics, joint_jacobians_from, JointJacobians, KinematicState,
    ParamVector,
};
use crate::math::Vec3;
use crate::model::HandModel;
use crate::skinning::{skin_morphed, skinning_transforms, vertex_jacobians_from, SkinningTransforms, VertexJacobians};

/// Layer output.
#[derive(Debug, Clone, PartialEq)]
pub struct HandState {
    pub joints: Vec<Vec3>,
    pub vertices: Vec<Vec3>,
    pub kinematics: KinematicState,
    pub skinning: SkinningTransforms,
    token: u64,
}

impl HandState {
    /// Fingerprint of the parameters this state was produced from.
    pub fn token(&self) -> u64 {
        self.token
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    /// `L_J` (mm²).
    pub joint_loss: f64,
    /// `L_V` (mm²); zero when no vertex ground truth was given.
    pub vertex_loss: f64,
    /// `L_J + 𝟙 L_V`.
    pub total: f64,
    pub indicator: bool,
}

/// Gradient of the combined loss, split by parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub delta_theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Gradients {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.delta_theta.clone();
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.beta);
        v
    }
}

/// All sensitivity blocks of the layer at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerJacobians {
    pub joints: JointJacobians,
    pub vertices: VertexJacobians,
}

/// FNV-1a over the bit patterns of all parameters.
pub fn param_token(params: &ParamVector) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in params.to_flat() {
        for b in x.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

pub fn hpsl_forward(model: &HandModel, params: &ParamVector) -> Result<HandState> {
    params.check(model)?;
    let kin = forward_kinematics(model, params)?;
    let xforms = skinning_transforms(&kin);
    let psi = model.morph(&params.beta)?;
    let vertices = skin_morphed(model, &xforms, &psi);
    Ok(HandState {
        joints: kin.joint_positions.clone(),
        vertices,
        kinematics: kin,
        skinning: xforms,
        token: param_token(params),
    })
}

/// Forward pass plus every Jacobian block.
pub fn hpsl_jacobians(model: &HandModel, params: &ParamVector) -> Result<(HandState, LayerJacobians)> {
    let state = hpsl_forward(model, params)?;
    let jac = jacobians_for_state(model, params, &state)?;
    Ok((state, jac))
}

fn jacobians_for_state(model: &HandModel, params: &ParamVector, state: &HandState) -> Result<LayerJacobians> {
    let derivs = chain_derivatives(model, params)?;
    let psi = model.morph(&params.beta)?;
    Ok(LayerJacobians {
        joints: joint_jacobians_from(model, &derivs),
        vertices: vertex_jacobians_from(model, &state.kinematics, &state.skinning, &derivs, &psi),
    })
}

fn half_squared_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>()
}

pub fn loss(state: &HandState, joints_gt: &[Vec3], vertices_gt: Option<&[Vec3]>) -> Result<LossReport> {
    check_len("joint ground truth", state.joints.len(), joints_gt.len())?;
    let joint_loss = half_squared_distance(&state.joints, joints_gt);
    let (vertex_loss, indicator) = match vertices_gt {
        Some(v) => {
            check_len("vertex ground truth", state.vertices.len(), v.len())?;
            (half_squared_distance(&state.vertices, v), true)
        }
        None => (0.0, false),
    };
    Ok(LossReport {
        joint_loss,
        vertex_loss,
        total: if indicator { joint_loss + vertex_loss } else { joint_loss },
        indicator,
    })
}

fn residual(a: &[Vec3], b: &[Vec3]) -> DVector<f64> {
    DVector::from_iterator(3 * a.len(), a.iter().zip(b).flat_map(|(x, y)| {
        let d = x - y;
        [d.x, d.y, d.z]
    }))
}

fn accumulate(out: &mut [f64], jac: &DMatrix<f64>, r: &DVector<f64>) {
    for (o, g) in out.iter_mut().zip(jac.tr_mul(r).iter()) {
        *o += g;
    }
}

/// `dL/dx = (P − P_GT)ᵀ ∂P/∂x + 𝟙 (V − V_GT)ᵀ ∂V/∂x`.
///
/// β only reaches the loss through `V`, so its gradient is exactly zero when
/// no vertex ground truth is given.
pub fn hpsl_backward(
    model: &HandModel,
    params: &ParamVector,
    state: &HandState,
    joints_gt: &[Vec3],
    vertices_gt: Option<&[Vec3]>,
) -> Result<Gradients> {
    if state.token != param_token(params) {
        return Err(Error::StateMismatch);
    }
    check_len("joint ground truth", state.joints.len(), joints_gt.len())?;
    if let Some(v) = vertices_gt {
        check_len("vertex ground truth", state.vertices.len(), v.len())?;
    }
    let jac = jacobians_for_state(model, params, state)?;
    Ok(gradients_from(&jac, state, joints_gt, vertices_gt))
}

pub(crate) fn gradients_from(
    jac: &LayerJacobians,
    state: &HandState,
    joints_gt: &[Vec3],
    vertices_gt: Option<&[Vec3]>,
) -> Gradients {
    let rj = residual(&state.joints, joints_gt);
    let mut g = Gradients {
        delta_theta: vec![0.0; jac.joints.d_theta.ncols()],
        alpha: vec![0.0; jac.joints.d_alpha.ncols()],
        beta: vec![0.0; jac.vertices.d_beta.ncols()],
    };
    accumulate(&mut g.delta_theta, &jac.joints.d_theta, &rj);
    accumulate(&mut g.alpha, &jac.joints.d_alpha, &rj);
    if let Some(vgt) = vertices_gt {
        let rv = residual(&state.vertices, vgt);
        accumulate(&mut g.delta_theta, &jac.vertices.d_theta, &rv);
        accumulate(&mut g.alpha, &jac.vertices.d_alpha, &rv);
        accumulate(&mut g.beta, &jac.vertices.d_beta, &rv);
    }
    g
}

/// Mean Euclidean distance between corresponding points (mm).
pub fn mean_point_error(a: &[Vec3], b: &[Vec3]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).sum::<f64>() / a.len() as f64
}
