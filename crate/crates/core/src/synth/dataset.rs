//! Dataset generation: sampling, rendering and writing every artifact.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hpsl::{hpsl_forward, HandState};
use crate::kinematics::ParamVector;
use crate::model::{write_model, HandModel};

use super::camera::CameraIntrinsics;
use super::io::{depth_to_pgm, labels_to_pgm, write_annotations, write_obj, write_pgm};
use super::raster::{render_depth, DepthFrame, GroundTruth};
use super::sample::{sample, SampleConfig};

pub const DATASET_FORMAT: &str = "handforge-dataset";
pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Files written for one sample, relative to the dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SampleFiles {
    pub index: usize,
    pub depth: String,
    pub mask: String,
    pub annotations: String,
    pub mesh: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub count: usize,
    /// SHA-256 of the sampling configuration.
    pub config_hash: String,
    /// SHA-256 of the model asset text.
    pub model_hash: String,
    pub config: SampleConfig,
    pub camera: CameraIntrinsics,
    /// Mask value `i` is part `part_names[i]`; 0 is background.
    pub part_names: Vec<String>,
    pub joint_names: Vec<String>,
    pub files: Vec<SampleFiles>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Poses the model and renders it.
pub fn render_params(model: &HandModel, params: &ParamVector, cam: &CameraIntrinsics) -> Result<(HandState, DepthFrame)> {
    let state = hpsl_forward(model, params)?;
    if let Some(v) = state.vertices.iter().find(|v| !(v.z > 0.0)) {
        return Err(Error::BehindCamera { z: v.z });
    }
    let mut frame = render_depth(&state.vertices, model.faces(), model.part_labels(), cam);
    frame.ground_truth = Some(GroundTruth {
        params: params.clone(),
        joints: state.joints.clone(),
        vertices: state.vertices.clone(),
    });
    Ok((state, frame))
}

pub fn write_depth(path: &Path, frame: &DepthFrame) -> Result<()> {
    write_pgm(path, &depth_to_pgm(frame.width(), frame.height(), &frame.depth))
}

pub fn write_mask(path: &Path, frame: &DepthFrame) -> Result<()> {
    let blank;
    let labels = match &frame.labels {
        Some(l) => l,
        None => {
            blank = vec![0u8; frame.depth.len()];
            &blank
        }
    };
    write_pgm(path, &labels_to_pgm(frame.width(), frame.height(), labels))
}

fn sample_files(index: usize) -> SampleFiles {
    SampleFiles {
        index,
        depth: format!("{index:06}_depth.pgm"),
        mask: format!("{index:06}_mask.pgm"),
        annotations: format!("{index:06}_annotations.csv"),
        mesh: format!("{index:06}_mesh.obj"),
    }
}

fn generate_one(model: &HandModel, config: &SampleConfig, cam: &CameraIntrinsics, dir: &Path, index: usize) -> Result<SampleFiles> {
    let s = sample(model, config, index)?;
    let (state, frame) = render_params(model, &s.params, cam)?;
    let files = sample_files(index);
    write_depth(&dir.join(&files.depth), &frame)?;
    write_mask(&dir.join(&files.mask), &frame)?;
    write_annotations(&dir.join(&files.annotations), model, &s.params, &state.joints)?;
    write_obj(&dir.join(&files.mesh), &state.vertices, model.faces())?;
    Ok(files)
}

/// Writes `config.count` samples into `out_dir` and the manifest last.
///
/// Samples are produced in parallel on the current rayon pool; every file's
/// content depends only on the model, configuration, camera and index.
pub fn generate_dataset(model: &HandModel, config: &SampleConfig, cam: &CameraIntrinsics, out_dir: &Path) -> Result<Manifest> {
    config.validate(model)?;
    cam.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = (0..config.count)
        .into_par_iter()
        .map(|i| {
            generate_one(model, config, cam, out_dir, i).map_err(|e| Error::Sample {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        seed: config.seed,
        count: config.count,
        config_hash: config.hash(),
        model_hash: {
            use sha2::{Digest, Sha256};
            hex::encode(Sha256::digest(write_model(model).as_bytes()))
        },
        config: config.clone(),
        camera: *cam,
        part_names: model.part_names().to_vec(),
        joint_names: model.joints().iter().map(|j| j.name.clone()).collect(),
        files,
    };
    let path: PathBuf = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
