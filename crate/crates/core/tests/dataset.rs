use std::path::Path;

use handforge::hpsl::mean_point_error;
use handforge::synth::io::{read_annotations, read_obj, read_pgm};
use handforge::synth::{generate_dataset, CameraIntrinsics, Manifest, SampleConfig};
use handforge::{generate_default_model, hpsl_forward, load_model, ProceduralConfig};

fn bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn generation_is_deterministic_and_round_trips() {
    let model = generate_default_model(&ProceduralConfig::default()).unwrap();
    let cam = CameraIntrinsics::default();
    let cfg = SampleConfig { seed: 21, count: 8, ..Default::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let manifest = generate_dataset(&model, &cfg, &cam, a.path()).unwrap();
    generate_dataset(&model, &cfg, &cam, b.path()).unwrap();
    assert_eq!(bytes(a.path()), bytes(b.path()));
    assert_eq!(Manifest::load(a.path()).unwrap(), manifest);

    for f in &manifest.files {
        let ann = read_annotations(&a.path().join(&f.annotations)).unwrap();
        let (mesh, faces) = read_obj(&a.path().join(&f.mesh)).unwrap();
        assert_eq!(faces, model.faces());
        let state = hpsl_forward(&model, &ann.params).unwrap();
        assert!(state.vertices.iter().zip(&mesh).all(|(x, y)| (x - y).amax() <= 1e-6));
        assert!(mean_point_error(&state.joints, &ann.joints) <= 1e-6);
        let depth = read_pgm(&a.path().join(&f.depth)).unwrap();
        let mask = read_pgm(&a.path().join(&f.mask)).unwrap();
        assert_eq!((depth.width, depth.height), (320, 240));
        for (d, m) in depth.data.iter().zip(&mask.data) {
            assert_eq!(*d > 0, *m > 0);
        }
    }
}

#[test]
fn bundled_asset_matches_generator() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/default_hand.json");
    let bundled = load_model(&path).unwrap();
    assert_eq!(bundled, generate_default_model(&ProceduralConfig::default()).unwrap());
}
