//! Deterministic sampling of hand parameters and viewpoints.
//!
//! Sample `i` of a configuration is drawn from a ChaCha8 stream keyed by the
//! seed with stream id `i`, so any sample can be regenerated on its own and
//! the result does not depend on how samples are scheduled.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, ParamVector};
use crate::math::Vec3;
use crate::model::{DofKind, HandModel};

/// Ranges are closed `[lo, hi]` intervals.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub seed: u64,
    pub count: usize,
    /// Absolute pose ranges (rad) by DoF name. Unlisted non-root DoFs span
    /// their anatomical limits; draws are clamped to those limits.
    pub pose_ranges: BTreeMap<String, [f64; 2]>,
    /// One range for every bone scale slot, or one per slot.
    pub alpha_ranges: Vec<[f64; 2]>,
    /// One range for every shape parameter, or one per parameter.
    pub beta_ranges: Vec<[f64; 2]>,
    /// Root rotation ranges (rad) about z, y (the hand's long axis) and x.
    pub rotation_z: [f64; 2],
    pub rotation_y: [f64; 2],
    pub rotation_x: [f64; 2],
    /// Depth of the palm centre (mm).
    pub distance: [f64; 2],
    /// Lateral offset of the palm centre from the optical axis, x and y (mm).
    pub lateral: [f64; 2],
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 100,
            pose_ranges: BTreeMap::new(),
            alpha_ranges: vec![[0.85, 1.15]],
            beta_ranges: vec![[-1.0, 1.0]],
            rotation_z: [-FRAC_PI_2, FRAC_PI_2],
            rotation_y: [-PI, PI],
            rotation_x: [-FRAC_PI_2, FRAC_PI_2],
            distance: [350.0, 600.0],
            lateral: [-15.0, 15.0],
        }
    }
}

/// One drawn sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub params: ParamVector,
    /// Where the palm centre was placed (camera frame, mm).
    pub palm_center: Vec3,
}

fn ordered(name: &str, r: [f64; 2]) -> Result<()> {
    if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] {
        Ok(())
    } else {
        Err(Error::Argument(format!("range {name} = {r:?} is not an ordered finite interval")))
    }
}

fn per_slot(name: &str, ranges: &[[f64; 2]], n: usize) -> Result<Vec<[f64; 2]>> {
    match ranges.len() {
        1 => Ok(vec![ranges[0]; n]),
        len if len == n => Ok(ranges.to_vec()),
        len => Err(Error::Argument(format!("{name} has {len} ranges, expected 1 or {n}"))),
    }
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

impl SampleConfig {
    /// Checks the configuration against a model.
    pub fn validate(&self, model: &HandModel) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Argument("sample count must be positive".into()));
        }
        for (name, r) in &self.pose_ranges {
            ordered(name, *r)?;
            if !model.dofs().iter().any(|d| &d.name == name) {
                return Err(Error::Argument(format!("pose range for unknown dof {name:?}")));
            }
        }
        for r in per_slot("alpha_ranges", &self.alpha_ranges, model.num_scales())? {
            ordered("alpha", r)?;
            if r[0] <= 0.0 {
                return Err(Error::Argument("alpha ranges must be positive".into()));
            }
        }
        for r in per_slot("beta_ranges", &self.beta_ranges, model.num_shapes())? {
            ordered("beta", r)?;
        }
        for (name, r) in [
            ("rotation_z", self.rotation_z),
            ("rotation_y", self.rotation_y),
            ("rotation_x", self.rotation_x),
            ("distance", self.distance),
            ("lateral", self.lateral),
        ] {
            ordered(name, r)?;
        }
        if self.distance[0] <= 0.0 {
            return Err(Error::Argument("distance must be positive".into()));
        }
        let root = model.joint_dofs(0);
        let standard = root.len() == 6
            && model.dofs()[root.start..root.start + 3]
                .iter()
                .zip([Vec3::x(), Vec3::y(), Vec3::z()])
                .all(|(d, a)| d.kind == DofKind::Translation && d.axis == a)
            && model.dofs()[root.start + 3..root.end].iter().all(|d| d.kind == DofKind::Rotation);
        if !standard {
            return Err(Error::Argument("sampling needs root translations along x, y, z followed by three rotations".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Draws sample `index`. The result is a pure function of `(config, index)`.
pub fn sample(model: &HandModel, config: &SampleConfig, index: usize) -> Result<Sample> {
    if index >= config.count {
        return Err(Error::IndexOutOfRange {
            index,
            count: config.count,
        });
    }
    config.validate(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let init = model.theta_init();
    let mut params = ParamVector::neutral(model);
    for d in model.joint_dofs(0).end..model.num_dofs() {
        let dof = &model.dofs()[d];
        let range = config.pose_ranges.get(&dof.name).copied().unwrap_or([dof.lower, dof.upper]);
        let theta = draw(&mut rng, range).clamp(dof.lower, dof.upper);
        params.delta_theta[d] = theta - init[d];
    }
    for (a, r) in params
        .alpha
        .iter_mut()
        .zip(per_slot("alpha_ranges", &config.alpha_ranges, model.num_scales())?)
    {
        *a = draw(&mut rng, r);
    }
    for (b, r) in params
        .beta
        .iter_mut()
        .zip(per_slot("beta_ranges", &config.beta_ranges, model.num_shapes())?)
    {
        *b = draw(&mut rng, r);
    }
    let root = model.joint_dofs(0).start;
    for (k, r) in [config.rotation_z, config.rotation_y, config.rotation_x].into_iter().enumerate() {
        let d = root + 3 + k;
        params.delta_theta[d] = draw(&mut rng, r) - init[d];
    }
    let palm_center = Vec3::new(
        draw(&mut rng, config.lateral),
        draw(&mut rng, config.lateral),
        draw(&mut rng, config.distance),
    );

    // Place the palm centre: with zero root translation it sits at q, so
    // the translation is `palm_center − q`.
    for k in 0..3 {
        params.delta_theta[root + k] = -init[root + k];
    }
    let anchor = model.joint_index("palm_center").unwrap_or(0);
    let q = forward_kinematics(model, &params)?.joint_positions[anchor];
    let t = palm_center - q;
    for k in 0..3 {
        params.delta_theta[root + k] = t[k] - init[root + k];
    }
    Ok(Sample {
        index,
        params,
        palm_center,
    })
}
