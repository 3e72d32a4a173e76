//! Linear blend skinning of the morphed mesh and its Jacobians.

use nalgebra::{DMatrix, Vector4};

use crate::error::{check_len, Result};
use crate::kinematics::{chain_derivatives, ChainDerivatives, KinematicState, ParamVector};
use crate::math::{self, Mat4, Vec3};
use crate::model::HandModel;

/// Per-joint skinning transforms `C_i = M_i (M*_i)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinningTransforms {
    pub transforms: Vec<Mat4>,
    pub reference_inverse: Vec<Mat4>,
    /// `true` where `M_i` equals `M*_i`, in which case `C_i` is exactly identity.
    pub at_rest: Vec<bool>,
}

pub fn skinning_transforms(kin: &KinematicState) -> SkinningTransforms {
    let reference_inverse: Vec<Mat4> = kin.reference.iter().map(math::rigid_inverse).collect();
    let at_rest: Vec<bool> = kin
        .global
        .iter()
        .zip(&kin.reference)
        .map(|(m, r)| m == r)
        .collect();
    let transforms = kin
        .global
        .iter()
        .zip(&reference_inverse)
        .zip(&at_rest)
        .map(|((m, inv), &rest)| if rest { Mat4::identity() } else { m * inv })
        .collect();
    SkinningTransforms {
        transforms,
        reference_inverse,
        at_rest,
    }
}

/// Skins the morphed rest shape `Ψ(β)` with the given transforms.
pub fn skin_vertices(model: &HandModel, xforms: &SkinningTransforms, beta: &[f64]) -> Result<Vec<Vec3>> {
    check_len("skinning transforms", model.num_joints(), xforms.transforms.len())?;
    let psi = model.morph(beta)?;
    Ok(skin_morphed(model, xforms, &psi))
}

/// `v = Σ ω_i C_i ψ`, accumulated as `ψ + Σ ω_i (C_i ψ − ψ)`, which is the
/// same sum for convex weights and leaves `ψ` untouched where every
/// influencing transform is at rest.
pub(crate) fn skin_morphed(model: &HandModel, xforms: &SkinningTransforms, psi: &[Vec3]) -> Vec<Vec3> {
    psi.iter()
        .zip(model.weights())
        .map(|(p, influences)| {
            let mut v = *p;
            for inf in influences {
                if xforms.at_rest[inf.joint] {
                    continue;
                }
                v += (math::transform_point(&xforms.transforms[inf.joint], p) - p) * inf.weight;
            }
            v
        })
        .collect()
}

/// Dense vertex Jacobians; rows `3κ..3κ+3` belong to vertex `κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexJacobians {
    pub d_theta: DMatrix<f64>,
    pub d_alpha: DMatrix<f64>,
    pub d_beta: DMatrix<f64>,
}

pub fn vertex_jacobians(
    model: &HandModel,
    kin: &KinematicState,
    xforms: &SkinningTransforms,
    beta: &[f64],
) -> Result<VertexJacobians> {
    let params = ParamVector {
        delta_theta: kin.delta_theta.clone(),
        alpha: kin.alpha.clone(),
        beta: beta.to_vec(),
    };
    let derivs = chain_derivatives(model, &params)?;
    let psi = model.morph(beta)?;
    Ok(vertex_jacobians_from(model, kin, xforms, &derivs, &psi))
}

/// Derivatives of the skinning transforms themselves.
struct TransformDerivatives {
    /// `∂C_j/∂θ_p = (∂M_j/∂θ_p) (M*_j)⁻¹`.
    d_theta: Vec<Vec<Mat4>>,
    /// `∂C_j/∂α_s = M_j ((M*_j)⁻¹)' + (∂M_j/∂α_s) (M*_j)⁻¹` with
    /// `((M*)⁻¹)' = −(M*)⁻¹ (M*)' (M*)⁻¹`.
    d_alpha: Vec<Vec<Mat4>>,
}

fn transform_derivatives(kin: &KinematicState, xforms: &SkinningTransforms, derivs: &ChainDerivatives) -> TransformDerivatives {
    let n = kin.global.len();
    let mut d_theta = Vec::with_capacity(n);
    let mut d_alpha = Vec::with_capacity(n);
    for j in 0..n {
        let inv = &xforms.reference_inverse[j];
        d_theta.push(derivs.d_theta[j].iter().map(|dm| dm * inv).collect());
        d_alpha.push(
            derivs.d_alpha[j]
                .iter()
                .zip(&derivs.d_alpha_ref[j])
                .map(|(dm, dm_ref)| {
                    let d_inv = -(inv * dm_ref * inv);
                    kin.global[j] * d_inv + dm * inv
                })
                .collect(),
        );
    }
    TransformDerivatives { d_theta, d_alpha }
}

pub(crate) fn vertex_jacobians_from(
    model: &HandModel,
    kin: &KinematicState,
    xforms: &SkinningTransforms,
    derivs: &ChainDerivatives,
    psi: &[Vec3],
) -> VertexJacobians {
    let nv = model.num_vertices();
    let td = transform_derivatives(kin, xforms, derivs);
    let mut d_theta = DMatrix::zeros(3 * nv, model.num_dofs());
    let mut d_alpha = DMatrix::zeros(3 * nv, model.num_scales());
    let mut d_beta = DMatrix::zeros(3 * nv, model.num_shapes());

    for (k, (p, influences)) in psi.iter().zip(model.weights()).enumerate() {
        let ph = Vector4::new(p.x, p.y, p.z, 1.0);
        for inf in influences {
            let j = inf.joint;
            for (dc, &dof) in td.d_theta[j].iter().zip(model.chain_dofs(j)) {
                let g = dc * ph * inf.weight;
                for r in 0..3 {
                    d_theta[(3 * k + r, dof)] += g[r];
                }
            }
            for (dc, &slot) in td.d_alpha[j].iter().zip(model.chain_slots(j)) {
                let g = dc * ph * inf.weight;
                for r in 0..3 {
                    d_alpha[(3 * k + r, slot)] += g[r];
                }
            }
            for t in 0..model.num_shapes() {
                let g = math::transform_vector(&xforms.transforms[j], &model.shape_delta(t, k)) * inf.weight;
                for r in 0..3 {
                    d_beta[(3 * k + r, t)] += g[r];
                }
            }
        }
    }
    VertexJacobians {
        d_theta,
        d_alpha,
        d_beta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;
    use crate::model::testing::{single_vertex, three_link};

    #[test]
    fn rest_pose_gives_identity_for_any_alpha() {
        let m = three_link();
        for alpha in [vec![1.0, 1.0], vec![2.0, 2.0], vec![0.7, 1.6]] {
            let p = ParamVector {
                alpha,
                ..ParamVector::neutral(&m)
            };
            let kin = forward_kinematics(&m, &p).unwrap();
            let x = skinning_transforms(&kin);
            for c in &x.transforms {
                assert_eq!(*c, Mat4::identity());
            }
            // The closed form agrees to rounding.
            for (g, inv) in kin.global.iter().zip(&x.reference_inverse) {
                assert!((g * inv - Mat4::identity()).abs().max() < 1e-9);
            }
        }
    }

    #[test]
    fn quarter_turn_moves_unit_x_to_unit_y() {
        let m = single_vertex();
        let mut p = ParamVector::neutral(&m);
        p.delta_theta[3] = std::f64::consts::FRAC_PI_2; // root rotation about z
        let kin = forward_kinematics(&m, &p).unwrap();
        let v = skin_vertices(&m, &skinning_transforms(&kin), &p.beta).unwrap();
        assert!((v[0] - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn root_rotation_is_every_transform() {
        let m = three_link();
        let mut p = ParamVector::neutral(&m);
        p.delta_theta[4] = 0.6;
        let kin = forward_kinematics(&m, &p).unwrap();
        let x = skinning_transforms(&kin);
        for c in &x.transforms[1..] {
            assert!((c - x.transforms[0]).abs().max() < 1e-12);
        }
    }

    #[test]
    fn beta_jacobian_is_constant_in_beta() {
        let m = three_link();
        let mut p = ParamVector::neutral(&m);
        p.delta_theta[7] = 0.4;
        let kin = forward_kinematics(&m, &p).unwrap();
        let x = skinning_transforms(&kin);
        let a = vertex_jacobians(&m, &kin, &x, &[0.0, 0.0]).unwrap();
        let b = vertex_jacobians(&m, &kin, &x, &[0.7, -1.3]).unwrap();
        assert!((&a.d_beta - &b.d_beta).abs().max() <= 1e-12);
    }

    #[test]
    fn inverse_derivative_matches_finite_difference() {
        let m = three_link();
        let p = ParamVector {
            delta_theta: vec![0.0, 0.0, 0.0, 0.2, 0.1, -0.3, 0.5, 0.2, 0.1],
            alpha: vec![1.2, 0.9],
            beta: vec![0.0, 0.0],
        };
        let derivs = chain_derivatives(&m, &p).unwrap();
        let h = 1e-6;
        for s in 0..2 {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.alpha[s] += h;
            b.alpha[s] -= h;
            let ia = math::rigid_inverse(&forward_kinematics(&m, &a).unwrap().reference[3]);
            let ib = math::rigid_inverse(&forward_kinematics(&m, &b).unwrap().reference[3]);
            let fd = (ia - ib) / (2.0 * h);
            let inv = math::rigid_inverse(&forward_kinematics(&m, &p).unwrap().reference[3]);
            let idx = m.chain_slots(3).binary_search(&s).unwrap();
            let an = -(inv * derivs.d_alpha_ref[3][idx] * inv);
            assert!((fd - an).abs().max() < 1e-7);
        }
    }
}
