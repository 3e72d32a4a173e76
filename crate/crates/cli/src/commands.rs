use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use handforge::gradcheck::{gradcheck, GradcheckOptions};
use handforge::math::Vec3;
use handforge::model::write_model;
use handforge::preprocess::{
    normalize_annotations, preprocess_frame, write_blob, write_crop_meta, write_normalized_joints, CropMetaRecord,
    Foreground, REAL_FRAME_BAND,
};
use handforge::synth::io::{depth_frame_from_pgm, read_annotations, read_obj, read_pgm, write_annotations, write_obj};
use handforge::synth::{generate_dataset, render_params, write_depth, write_mask, CameraIntrinsics, Manifest, SampleConfig};
use handforge::{
    fit, generate_default_model, hpsl_forward, FitMethod, FitOptions, FitTargets, FreeBlocks, HandModel, ParamVector,
    ProceduralConfig,
};

use crate::report::Table;
use crate::{
    Block, Cli, Command, DatasetCommand, DatasetGenArgs, FitArgs, ForwardArgs, GradcheckArgs, Method, ModelCommand,
    ModelGenArgs, PreprocessArgs, RenderArgs,
};

/// Runs the selected command; `Ok(false)` reports a failed check.
pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Model(ModelCommand::Gen(args)) => model_gen(args),
        Command::Model(ModelCommand::Validate(args)) => {
            let path = args
                .path
                .as_ref()
                .or(cli.model.as_ref())
                .context("no asset given; pass a path or --model")?;
            model_validate(cli, path)
        }
        Command::Forward(args) => forward(cli, args),
        Command::Gradcheck(args) => gradcheck_cmd(cli, args),
        Command::Fit(args) => fit_cmd(cli, args),
        Command::Dataset(DatasetCommand::Gen(args)) => dataset_gen(cli, args),
        Command::Render(args) => render(cli, args),
        Command::Preprocess(args) => preprocess(cli, args),
    }
}

fn load_model(cli: &Cli) -> Result<HandModel> {
    match &cli.model {
        Some(path) => handforge::load_model(path).with_context(|| format!("loading model {}", path.display())),
        None => Ok(generate_default_model(&ProceduralConfig::default())?),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn read_params(model: &HandModel, path: &Path) -> Result<ParamVector> {
    let params = if is_json(path) {
        serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?
    } else {
        read_annotations(path)?.params
    };
    params.check(model).with_context(|| format!("parameters in {}", path.display()))?;
    Ok(params)
}

fn read_joint_targets(path: &Path) -> Result<Vec<Vec3>> {
    if is_json(path) {
        let pts: Vec<[f64; 3]> =
            serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
        Ok(pts.into_iter().map(Vec3::from).collect())
    } else {
        Ok(read_annotations(path)?.joints)
    }
}

fn read_camera(path: Option<&PathBuf>) -> Result<CameraIntrinsics> {
    let cam = match path {
        Some(p) => toml::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => CameraIntrinsics::default(),
    };
    cam.validate()?;
    Ok(cam)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn model_gen(args: &ModelGenArgs) -> Result<bool> {
    let mut cfg: ProceduralConfig = match &args.config {
        Some(p) => toml::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => ProceduralConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let text = write_model(&generate_default_model(&cfg)?);
    match &args.output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(true)
}

fn model_validate(cli: &Cli, path: &Path) -> Result<bool> {
    let m = handforge::load_model(path).with_context(|| format!("validating {}", path.display()))?;
    let mut t = Table::key_value();
    t.kv("joints", m.num_joints())
        .kv("dofs", m.num_dofs())
        .kv("scale_slots", m.num_scales())
        .kv("shape_params", m.num_shapes())
        .kv("vertices", m.num_vertices())
        .kv("faces", m.faces().len())
        .kv("parts", m.part_names().len());
    t.print(cli.format)?;
    Ok(true)
}

fn joint_table(model: &HandModel, joints: &[Vec3]) -> Table {
    let mut t = Table::new(&["index", "name", "x", "y", "z"]);
    for (i, (p, j)) in joints.iter().zip(model.joints()).enumerate() {
        t.row([i.to_string(), j.name.clone(), p.x.to_string(), p.y.to_string(), p.z.to_string()]);
    }
    t
}

fn forward(cli: &Cli, args: &ForwardArgs) -> Result<bool> {
    let model = load_model(cli)?;
    let params = match &args.params {
        Some(p) => read_params(&model, p)?,
        None => ParamVector::neutral(&model),
    };
    let state = hpsl_forward(&model, &params)?;
    let table = joint_table(&model, &state.joints);
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let path = dir.join("joints.csv");
        let mut f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        table.write(&mut f, crate::report::Format::Csv)?;
        write_obj(&dir.join("mesh.obj"), &state.vertices, model.faces())?;
    }
    table.print(cli.format)?;
    Ok(true)
}

fn gradcheck_cmd(cli: &Cli, args: &GradcheckArgs) -> Result<bool> {
    let model = load_model(cli)?;
    let opts = GradcheckOptions {
        configs: args.trials,
        step: args.step,
        tolerance: args.tolerance,
        seed: args.seed,
    };
    let start = Instant::now();
    let report = gradcheck(&model, &opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut t = Table::new(&["block", "entries", "max_rel_error", "worst_config", "worst_row", "worst_param", "status"]);
    for b in &report.blocks {
        let ok = b.max_error <= report.tolerance;
        t.row([
            b.name.to_string(),
            b.entries.to_string(),
            format!("{:.3e}", b.max_error),
            b.worst.0.to_string(),
            b.worst.1.to_string(),
            b.worst.2.to_string(),
            if ok { "pass" } else { "FAIL" }.to_string(),
        ]);
    }
    t.print(cli.format)?;
    if cli.format == crate::report::Format::Text {
        println!(
            "max relative error {:.3e} over {} configurations (tolerance {:.0e}, {:.2} s): {}",
            report.max_error(),
            report.configs,
            report.tolerance,
            elapsed,
            if report.passed() { "pass" } else { "FAIL" }
        );
    }
    Ok(report.passed())
}

fn fit_cmd(cli: &Cli, args: &FitArgs) -> Result<bool> {
    let model = load_model(cli)?;
    let targets = FitTargets {
        joints: read_joint_targets(&args.targets)?,
        vertices: match &args.mesh {
            Some(p) => Some(read_obj(p)?.0),
            None => None,
        },
    };
    let init = match &args.init {
        Some(p) => read_params(&model, p)?,
        None => ParamVector::neutral(&model),
    };
    let opts = FitOptions {
        max_iterations: args.max_iterations,
        method: match args.method {
            Method::GaussNewton => FitMethod::GaussNewton,
            Method::GradientDescent => FitMethod::GradientDescent,
        },
        tolerance: args.tolerance,
        free: FreeBlocks {
            delta_theta: args.free.contains(&Block::DeltaTheta),
            alpha: args.free.contains(&Block::Alpha),
            beta: args.free.contains(&Block::Beta),
        },
        project_bounds: !args.unbounded,
        ..FitOptions::default()
    };
    let start = Instant::now();
    let r = fit(&model, &targets, &init, &opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut t = Table::key_value();
    t.kv("iterations", r.iterations)
        .kv("converged", r.converged)
        .kv("joint_loss_mm2", r.joint_loss)
        .kv("vertex_loss_mm2", r.vertex_loss)
        .kv("mean_joint_error_mm", r.mean_joint_error)
        .kv("mean_vertex_error_mm", r.mean_vertex_error.map_or("n/a".to_string(), |e| e.to_string()))
        .kv("gradient_steps", r.gradient_steps)
        .kv("beta_frozen", r.beta_frozen)
        .kv("seconds", format!("{elapsed:.3}"));
    if args.history {
        for (i, h) in r.history.iter().enumerate() {
            t.kv(&format!("objective[{i}]"), h);
        }
    }
    t.print(cli.format)?;
    if let Some(path) = &args.output {
        let json = serde_json::to_string_pretty(&r.params)? + "\n";
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(true)
}

/// Reads a sampling configuration whose optional `[camera]` table holds the
/// intrinsics.
fn read_dataset_config(path: &Path) -> Result<(SampleConfig, CameraIntrinsics)> {
    let mut table: toml::Table = toml::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let camera = match table.remove("camera") {
        Some(v) => v.try_into().with_context(|| format!("camera table in {}", path.display()))?,
        None => CameraIntrinsics::default(),
    };
    let config = toml::Value::Table(table)
        .try_into()
        .with_context(|| format!("sampling configuration in {}", path.display()))?;
    Ok((config, camera))
}

fn dataset_gen(cli: &Cli, args: &DatasetGenArgs) -> Result<bool> {
    let model = load_model(cli)?;
    let (mut config, camera) = match &args.config {
        Some(p) => read_dataset_config(p)?,
        None => (SampleConfig::default(), CameraIntrinsics::default()),
    };
    if let Some(c) = args.count {
        config.count = c;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let start = Instant::now();
    let manifest = generate_dataset(&model, &config, &camera, &args.out)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut t = Table::key_value();
    t.kv("frames", manifest.count)
        .kv("seed", manifest.seed)
        .kv("config_hash", &manifest.config_hash)
        .kv("model_hash", &manifest.model_hash)
        .kv("output", args.out.display())
        .kv("seconds", format!("{elapsed:.3}"))
        .kv("frames_per_second", format!("{:.1}", manifest.count as f64 / elapsed.max(1e-9)));
    t.print(cli.format)?;
    Ok(true)
}

fn render(cli: &Cli, args: &RenderArgs) -> Result<bool> {
    let model = load_model(cli)?;
    let params = read_params(&model, &args.params)?;
    let camera = read_camera(args.camera.as_ref())?;
    let (state, frame) = render_params(&model, &params, &camera)?;
    create_dir(&args.out)?;
    let file = |suffix: &str| args.out.join(format!("{}_{suffix}", args.name));
    write_depth(&file("depth.pgm"), &frame)?;
    write_mask(&file("mask.pgm"), &frame)?;
    write_obj(&file("mesh.obj"), &state.vertices, model.faces())?;
    write_annotations(&file("annotations.csv"), &model, &params, &state.joints)?;
    let mut t = Table::key_value();
    t.kv("foreground_pixels", frame.foreground_count())
        .kv("output", args.out.display());
    t.print(cli.format)?;
    Ok(true)
}

struct FrameJob {
    name: String,
    depth: PathBuf,
    camera: CameraIntrinsics,
    annotations: Option<PathBuf>,
}

fn preprocess_jobs(args: &PreprocessArgs) -> Result<Vec<FrameJob>> {
    let mut jobs = Vec::new();
    for input in &args.inputs {
        if input.is_dir() {
            let manifest = Manifest::load(input)?;
            for f in &manifest.files {
                jobs.push(FrameJob {
                    name: format!("{:06}", f.index),
                    depth: input.join(&f.depth),
                    camera: manifest.camera,
                    annotations: Some(input.join(&f.annotations)),
                });
            }
        } else {
            let name = input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .with_context(|| format!("no file name in {}", input.display()))?;
            jobs.push(FrameJob {
                name,
                depth: input.clone(),
                camera: read_camera(args.camera.as_ref())?,
                annotations: None,
            });
        }
    }
    let mut names: Vec<&str> = jobs.iter().map(|j| j.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        bail!("two inputs produce the output name {}", w[0]);
    }
    Ok(jobs)
}

fn preprocess(cli: &Cli, args: &PreprocessArgs) -> Result<bool> {
    let fg = if args.real {
        Foreground::NearestBand(REAL_FRAME_BAND)
    } else {
        Foreground::NonZero
    };
    let jobs = preprocess_jobs(args)?;
    create_dir(&args.out)?;
    let records = jobs
        .par_iter()
        .map(|job| -> Result<CropMetaRecord> {
            let frame = depth_frame_from_pgm(&read_pgm(&job.depth)?, job.camera)?;
            let (img, meta) = preprocess_frame(&frame, args.half_extent, args.size, fg)
                .with_context(|| format!("preprocessing {}", job.depth.display()))?;
            write_blob(&args.out.join(format!("{}.hfn", job.name)), &img)?;
            if let Some(a) = &job.annotations {
                let joints = normalize_annotations(&read_annotations(a)?.joints, &meta);
                write_normalized_joints(&args.out.join(format!("{}_joints.csv", job.name)), &joints)?;
            }
            Ok(CropMetaRecord::new(job.name.clone(), &meta))
        })
        .collect::<Result<Vec<_>>>()?;
    write_crop_meta(&args.out.join("crop_meta.csv"), &records)?;
    let mut t = Table::key_value();
    t.kv("frames", records.len()).kv("output", args.out.display());
    t.print(cli.format)?;
    Ok(true)
}
