//! Finite-difference audit of every analytic derivative of the layer.

use rayon::prelude::*;

use crate::error::Result;
use crate::hpsl::{gradients_from, hpsl_forward, hpsl_jacobians, HandState};
use crate::kinematics::ParamVector;
use crate::math::Vec3;
use crate::model::HandModel;
use crate::synth::{sample, SampleConfig};

/// `|a − b| / max(1, |a|, |b|)`: relative for large values, absolute near zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub configs: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            configs: 200,
            step: 1e-5,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

/// Worst agreement found in one derivative block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: &'static str,
    pub entries: usize,
    pub max_error: f64,
    /// `(config, row, parameter)` of the worst entry.
    pub worst: (usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub configs: usize,
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_error <= self.tolerance)
    }

    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_error).fold(0.0, f64::max)
    }
}

pub const BLOCK_NAMES: [&str; 7] = [
    "dP/d(delta_theta)",
    "dP/d(alpha)",
    "dV/d(delta_theta)",
    "dV/d(alpha)",
    "dV/d(beta)",
    "dL/dx (joints + vertices)",
    "dL/dx (joints only)",
];

/// Configuration `index` of an audit: sampler poses and viewpoints with
/// widened bone scales, plus joint and vertex targets displaced from the
/// configuration's own output.
pub fn audit_instance(model: &HandModel, seed: u64, index: usize) -> Result<(ParamVector, Vec<Vec3>, Vec<Vec3>)> {
    let cfg = SampleConfig {
        seed,
        count: index + 1,
        alpha_ranges: vec![[0.7, 1.4]],
        rotation_z: [-std::f64::consts::PI, std::f64::consts::PI],
        rotation_x: [-std::f64::consts::PI, std::f64::consts::PI],
        ..SampleConfig::default()
    };
    let params = sample(model, &cfg, index)?.params;
    let target = sample(
        model,
        &SampleConfig {
            seed: seed ^ 0x9e37_79b9_7f4a_7c15,
            ..cfg
        },
        index,
    )?;
    let s = hpsl_forward(model, &params)?;
    let t = hpsl_forward(model, &target.params)?;
    // Blend toward an unrelated hand so residuals are tens of mm, not hundreds.
    let mix = |a: &[Vec3], b: &[Vec3]| -> Vec<Vec3> {
        a.iter()
            .zip(b)
            .map(|(x, y)| x + 0.1 * (y - target.palm_center - (x - s.joints[0])))
            .collect()
    };
    Ok((params, mix(&s.joints, &t.joints), mix(&s.vertices, &t.vertices)))
}

/// `L(a) − L(b)` evaluated term by term as `½ (r_a − r_b)·(r_a + r_b)`, which
/// avoids cancelling two large totals.
fn loss_difference(a: &[Vec3], b: &[Vec3], gt: &[Vec3]) -> f64 {
    a.iter()
        .zip(b)
        .zip(gt)
        .map(|((x, y), g)| 0.5 * (x - y).dot(&(x + y - 2.0 * g)))
        .sum()
}

fn perturbed(model: &HandModel, base: &[f64], k: usize, delta: f64) -> Result<HandState> {
    let mut flat = base.to_vec();
    flat[k] += delta;
    hpsl_forward(model, &ParamVector::from_flat(model, &flat)?)
}

fn audit_one(model: &HandModel, opts: &GradcheckOptions, index: usize) -> Result<Vec<BlockReport>> {
    let (params, jgt, vgt) = audit_instance(model, opts.seed, index)?;
    let (state, jac) = hpsl_jacobians(model, &params)?;
    let full = gradients_from(&jac, &state, &jgt, Some(&vgt)).to_flat();
    let joints_only = gradients_from(&jac, &state, &jgt, None).to_flat();
    let (nd, ns) = (model.num_dofs(), model.num_scales());
    let base = params.to_flat();
    let h = opts.step;

    let mut blocks: Vec<BlockReport> = BLOCK_NAMES
        .iter()
        .map(|&name| BlockReport {
            name,
            entries: 0,
            max_error: 0.0,
            worst: (index, 0, 0),
        })
        .collect();
    let mut record = |b: usize, row: usize, k: usize, err: f64| {
        let blk = &mut blocks[b];
        blk.entries += 1;
        if err > blk.max_error || err.is_nan() {
            blk.max_error = if err.is_nan() { f64::INFINITY } else { err };
            blk.worst = (index, row, k);
        }
    };

    for k in 0..base.len() {
        let plus = perturbed(model, &base, k, h)?;
        let minus = perturbed(model, &base, k, -h)?;
        let (col, joint_block, vertex_block) = if k < nd {
            (k, Some(0), 2)
        } else if k < nd + ns {
            (k - nd, Some(1), 3)
        } else {
            (k - nd - ns, None, 4)
        };
        for (i, (a, b)) in plus.joints.iter().zip(&minus.joints).enumerate() {
            let fd = (a - b) / (2.0 * h);
            for r in 0..3 {
                let row = 3 * i + r;
                match joint_block {
                    Some(0) => record(0, row, k, relative_error(jac.joints.d_theta[(row, col)], fd[r])),
                    Some(_) => record(1, row, k, relative_error(jac.joints.d_alpha[(row, col)], fd[r])),
                    // Joints do not depend on β.
                    None => {}
                }
            }
        }
        let vjac = match vertex_block {
            2 => &jac.vertices.d_theta,
            3 => &jac.vertices.d_alpha,
            _ => &jac.vertices.d_beta,
        };
        for (i, (a, b)) in plus.vertices.iter().zip(&minus.vertices).enumerate() {
            let fd = (a - b) / (2.0 * h);
            for r in 0..3 {
                let row = 3 * i + r;
                record(vertex_block, row, k, relative_error(vjac[(row, col)], fd[r]));
            }
        }
        let dj = loss_difference(&plus.joints, &minus.joints, &jgt);
        let dv = loss_difference(&plus.vertices, &minus.vertices, &vgt);
        record(5, 0, k, relative_error(full[k], (dj + dv) / (2.0 * h)));
        record(6, 0, k, relative_error(joints_only[k], dj / (2.0 * h)));
    }
    Ok(blocks)
}

/// Compares every analytic Jacobian entry and both fused loss gradients with
/// central differences over `opts.configs` random configurations.
pub fn gradcheck(model: &HandModel, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let per_config: Vec<Vec<BlockReport>> = (0..opts.configs)
        .into_par_iter()
        .map(|i| audit_one(model, opts, i))
        .collect::<Result<_>>()?;
    let mut blocks: Vec<BlockReport> = BLOCK_NAMES
        .iter()
        .map(|&name| BlockReport {
            name,
            entries: 0,
            max_error: 0.0,
            worst: (0, 0, 0),
        })
        .collect();
    for config in per_config {
        for (acc, b) in blocks.iter_mut().zip(config) {
            acc.entries += b.entries;
            if b.max_error > acc.max_error {
                acc.max_error = b.max_error;
                acc.worst = b.worst;
            }
        }
    }
    Ok(GradcheckReport {
        configs: opts.configs,
        tolerance: opts.tolerance,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-9, 0.0), 1e-9);
        assert_eq!(relative_error(200.0, 100.0), 0.5);
    }

    #[test]
    fn loss_difference_matches_direct() {
        let gt = [Vec3::new(1.0, 2.0, 3.0)];
        let (a, b) = ([Vec3::new(2.0, 2.0, 3.0)], [Vec3::new(1.0, 4.0, 3.0)]);
        // ½·1 − ½·4
        assert_eq!(loss_difference(&a, &b, &gt), -1.5);
    }
}
