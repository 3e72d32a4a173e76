use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use handforge::gradcheck::audit_instance;
use handforge::preprocess::{preprocess_frame, Foreground, DEFAULT_HALF_EXTENT, DEFAULT_OUTPUT_SIZE};
use handforge::synth::{render_params, sample, CameraIntrinsics, SampleConfig};
use handforge::*;

fn layer(c: &mut Criterion) {
    let model = generate_default_model(&ProceduralConfig::default()).unwrap();
    let (params, jgt, vgt) = audit_instance(&model, 1, 0).unwrap();
    let state = hpsl_forward(&model, &params).unwrap();

    c.bench_function("forward", |b| b.iter(|| hpsl_forward(&model, black_box(&params)).unwrap()));
    c.bench_function("backward", |b| {
        b.iter(|| hpsl_backward(&model, &params, black_box(&state), &jgt, Some(&vgt)).unwrap())
    });
    c.bench_function("jacobians", |b| b.iter(|| hpsl_jacobians(&model, black_box(&params)).unwrap()));

    let layout = FlatLayout::new(&model);
    let flat: Vec<f64> = (0..64).flat_map(|i| audit_instance(&model, 1, i).unwrap().0.to_flat()).collect();
    let (mut jo, mut vo) = (vec![0.0; 64 * layout.joints], vec![0.0; 64 * layout.vertices]);
    c.bench_function("batch_forward_64", |b| {
        b.iter(|| batch_forward(&model, black_box(&flat), &mut jo, &mut vo).unwrap())
    });
}

fn data(c: &mut Criterion) {
    let model = generate_default_model(&ProceduralConfig::default()).unwrap();
    let cam = CameraIntrinsics::default();
    let s = sample(&model, &SampleConfig::default(), 0).unwrap();
    c.bench_function("render", |b| b.iter(|| render_params(&model, black_box(&s.params), &cam).unwrap()));

    let (_, frame) = render_params(&model, &s.params, &cam).unwrap();
    c.bench_function("preprocess", |b| {
        b.iter(|| preprocess_frame(black_box(&frame), DEFAULT_HALF_EXTENT, DEFAULT_OUTPUT_SIZE, Foreground::NonZero).unwrap())
    });
}

fn fitting(c: &mut Criterion) {
    let model = generate_default_model(&ProceduralConfig::default()).unwrap();
    let s = sample(&model, &SampleConfig::default(), 3).unwrap();
    let truth = hpsl_forward(&model, &s.params).unwrap();
    let neutral = ParamVector::neutral(&model);
    let opts = FitOptions::default();
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for (name, vertices) in [("joints", None), ("joints_and_mesh", Some(truth.vertices.clone()))] {
        let targets = FitTargets {
            joints: truth.joints.clone(),
            vertices,
        };
        group.bench_function(name, |b| {
            b.iter_batched(|| neutral.clone(), |init| fit(&model, &targets, &init, &opts).unwrap(), BatchSize::SmallInput)
        });
    }
    group.finish();
}

criterion_group!(benches, layer, data, fitting);
criterion_main!(benches);
