//! Differentiable articulated hand model.
//!
//! The crate evaluates a hand pose and shape layer: forward kinematics over a
//! scalable skeleton, a morphable mesh, linear blend skinning and analytic
//! Jacobians of all three. On top of the layer sit a least-squares fitting
//! engine, a synthetic depth dataset generator and a depth preprocessing
//! pipeline.

pub mod batch;
pub mod error;
pub mod fitting;
pub mod gradcheck;
pub mod hpsl;
pub mod kinematics;
pub mod math;
pub mod model;
pub mod preprocess;
pub mod skinning;
pub mod synth;

pub use batch::{batch_backward, batch_forward, batch_jacobians, FlatLayout};
pub use error::{Error, Result};
pub use fitting::{fit, FitMethod, FitOptions, FitResult, FitTargets, FreeBlocks};
pub use hpsl::{hpsl_backward, hpsl_forward, hpsl_jacobians, loss, Gradients, HandState, LayerJacobians, LossReport};
pub use kinematics::{forward_kinematics, joint_jacobians, KinematicState, ParamVector};
pub use model::{generate_default_model, load_model, save_model, HandModel, ProceduralConfig};
pub use preprocess::{crop_normalize, denormalize_annotations, hand_centroid, normalize_annotations, CropMeta, NormalizedImage};
pub use skinning::{skin_vertices, skinning_transforms, vertex_jacobians, SkinningTransforms};
