//! Flat-array batch interface for embedding the layer in external trainers.
//!
//! All buffers are row-major `f64`. A parameter row is `[δθ | α | β]`
//! (26 + 6 + 7 = 39 values for the default hand), a joint row is `3J`
//! values (x, y, z per joint, mm) and a vertex row is `3ϑ` values. Gradient
//! rows mirror parameter rows. Rows are evaluated independently, so every
//! row is bit-identical to the corresponding native call.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::hpsl::{gradients_from, hpsl_forward, hpsl_jacobians};
use crate::kinematics::ParamVector;
use crate::math::Vec3;
use crate::model::HandModel;

/// Row widths of the flat buffers for one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatLayout {
    pub params: usize,
    pub joints: usize,
    pub vertices: usize,
}

impl FlatLayout {
    pub fn new(model: &HandModel) -> Self {
        Self {
            params: model.num_params(),
            joints: 3 * model.num_joints(),
            vertices: 3 * model.num_vertices(),
        }
    }

    /// Number of rows in `params`; rejects empty and ragged buffers.
    pub fn rows(&self, params: &[f64]) -> Result<usize> {
        if params.is_empty() || !params.len().is_multiple_of(self.params) {
            return Err(Error::Argument(format!(
                "parameter buffer of length {} is not a positive multiple of the row width {}",
                params.len(),
                self.params
            )));
        }
        Ok(params.len() / self.params)
    }
}

fn points(flat: &[f64]) -> Vec<Vec3> {
    flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn copy_row(out: &mut [f64], m: &DMatrix<f64>, r: usize) {
    for (o, v) in out.iter_mut().zip(m.row(r).iter()) {
        *o = *v;
    }
}

fn write_points(out: &mut [f64], pts: &[Vec3]) {
    for (o, p) in out.chunks_exact_mut(3).zip(pts) {
        o.copy_from_slice(p.as_slice());
    }
}

/// Evaluates every parameter row into `joints_out` (`N × 3J`) and
/// `vertices_out` (`N × 3ϑ`).
pub fn batch_forward(model: &HandModel, params: &[f64], joints_out: &mut [f64], vertices_out: &mut [f64]) -> Result<()> {
    let layout = FlatLayout::new(model);
    let n = layout.rows(params)?;
    check_len("joint output buffer", n * layout.joints, joints_out.len())?;
    check_len("vertex output buffer", n * layout.vertices, vertices_out.len())?;
    params
        .par_chunks_exact(layout.params)
        .zip(joints_out.par_chunks_exact_mut(layout.joints))
        .zip(vertices_out.par_chunks_exact_mut(layout.vertices))
        .try_for_each(|((row, jo), vo)| {
            let state = hpsl_forward(model, &ParamVector::from_flat(model, row)?)?;
            write_points(jo, &state.joints);
            write_points(vo, &state.vertices);
            Ok(())
        })
}

/// Loss gradients for every row into `grad_out` (`N × 39`). Without vertex
/// ground truth the indicator is off for every row and the β columns are zero.
pub fn batch_backward(
    model: &HandModel,
    params: &[f64],
    joints_gt: &[f64],
    vertices_gt: Option<&[f64]>,
    grad_out: &mut [f64],
) -> Result<()> {
    let layout = FlatLayout::new(model);
    let n = layout.rows(params)?;
    check_len("joint ground truth buffer", n * layout.joints, joints_gt.len())?;
    if let Some(v) = vertices_gt {
        check_len("vertex ground truth buffer", n * layout.vertices, v.len())?;
    }
    check_len("gradient output buffer", n * layout.params, grad_out.len())?;
    grad_out
        .par_chunks_exact_mut(layout.params)
        .enumerate()
        .try_for_each(|(i, out)| {
            let p = ParamVector::from_flat(model, &params[i * layout.params..(i + 1) * layout.params])?;
            let (state, jac) = hpsl_jacobians(model, &p)?;
            let jgt = points(&joints_gt[i * layout.joints..(i + 1) * layout.joints]);
            let vgt = vertices_gt.map(|v| points(&v[i * layout.vertices..(i + 1) * layout.vertices]));
            let g = gradients_from(&jac, &state, &jgt, vgt.as_deref());
            out.copy_from_slice(&g.to_flat());
            Ok(())
        })
}

/// Dense Jacobians per row: `joint_jac_out` is `N × 3J × 39` and
/// `vertex_jac_out` is `N × 3ϑ × 39`, both row-major with parameters as the
/// fastest index. `∂P/∂β` is zero.
pub fn batch_jacobians(
    model: &HandModel,
    params: &[f64],
    joint_jac_out: &mut [f64],
    mut vertex_jac_out: Option<&mut [f64]>,
) -> Result<()> {
    let layout = FlatLayout::new(model);
    let n = layout.rows(params)?;
    let w = layout.params;
    check_len("joint Jacobian buffer", n * layout.joints * w, joint_jac_out.len())?;
    if let Some(v) = vertex_jac_out.as_deref() {
        check_len("vertex Jacobian buffer", n * layout.vertices * w, v.len())?;
    }
    let (nd, ns) = (model.num_dofs(), model.num_scales());
    for (i, row) in params.chunks_exact(w).enumerate() {
        let (_, jac) = hpsl_jacobians(model, &ParamVector::from_flat(model, row)?)?;
        let jo = &mut joint_jac_out[i * layout.joints * w..(i + 1) * layout.joints * w];
        jo.par_chunks_exact_mut(w).enumerate().for_each(|(r, out)| {
            out.fill(0.0);
            copy_row(&mut out[..nd], &jac.joints.d_theta, r);
            copy_row(&mut out[nd..nd + ns], &jac.joints.d_alpha, r);
        });
        if let Some(v) = vertex_jac_out.as_deref_mut() {
            let vo = &mut v[i * layout.vertices * w..(i + 1) * layout.vertices * w];
            vo.par_chunks_exact_mut(w).enumerate().for_each(|(r, out)| {
                copy_row(&mut out[..nd], &jac.vertices.d_theta, r);
                copy_row(&mut out[nd..nd + ns], &jac.vertices.d_alpha, r);
                copy_row(&mut out[nd + ns..], &jac.vertices.d_beta, r);
            });
        }
    }
    Ok(())
}
