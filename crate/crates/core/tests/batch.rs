use handforge::gradcheck::audit_instance;
use handforge::math::Vec3;
use handforge::{
    batch_backward, batch_forward, batch_jacobians, generate_default_model, hpsl_backward, hpsl_forward,
    hpsl_jacobians, Error, FlatLayout, HandModel, ParamVector, ProceduralConfig,
};

const ROWS: usize = 64;

struct Batch {
    model: HandModel,
    layout: FlatLayout,
    params: Vec<ParamVector>,
    flat: Vec<f64>,
    joints_gt: Vec<f64>,
    vertices_gt: Vec<f64>,
}

fn flatten(points: &[Vec3]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn points(flat: &[f64]) -> Vec<Vec3> {
    flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn batch() -> Batch {
    let model = generate_default_model(&ProceduralConfig::default()).unwrap();
    let layout = FlatLayout::new(&model);
    let (mut params, mut flat, mut joints_gt, mut vertices_gt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..ROWS {
        let (p, jgt, vgt) = audit_instance(&model, 99, i).unwrap();
        flat.extend(p.to_flat());
        joints_gt.extend(flatten(&jgt));
        vertices_gt.extend(flatten(&vgt));
        params.push(p);
    }
    Batch { model, layout, params, flat, joints_gt, vertices_gt }
}

#[test]
fn default_hand_row_widths() {
    let b = batch();
    assert_eq!(b.layout, FlatLayout { params: 39, joints: 66, vertices: 3 * 1193 });
    assert_eq!(b.layout.rows(&b.flat).unwrap(), ROWS);
}

#[test]
fn forward_is_bit_identical_to_native() {
    let b = batch();
    let l = b.layout;
    let (mut jo, mut vo) = (vec![0.0; ROWS * l.joints], vec![0.0; ROWS * l.vertices]);
    batch_forward(&b.model, &b.flat, &mut jo, &mut vo).unwrap();
    for (i, p) in b.params.iter().enumerate() {
        let s = hpsl_forward(&b.model, p).unwrap();
        assert_eq!(jo[i * l.joints..(i + 1) * l.joints], flatten(&s.joints)[..], "row {i}");
        assert_eq!(vo[i * l.vertices..(i + 1) * l.vertices], flatten(&s.vertices)[..], "row {i}");
    }
}

#[test]
fn backward_is_bit_identical_to_native() {
    let b = batch();
    let l = b.layout;
    for with_vertices in [true, false] {
        let vgt = with_vertices.then_some(b.vertices_gt.as_slice());
        let mut g = vec![f64::NAN; ROWS * l.params];
        batch_backward(&b.model, &b.flat, &b.joints_gt, vgt, &mut g).unwrap();
        for (i, p) in b.params.iter().enumerate() {
            let s = hpsl_forward(&b.model, p).unwrap();
            let jgt = points(&b.joints_gt[i * l.joints..(i + 1) * l.joints]);
            let vgt = points(&b.vertices_gt[i * l.vertices..(i + 1) * l.vertices]);
            let native = hpsl_backward(&b.model, p, &s, &jgt, with_vertices.then_some(vgt.as_slice())).unwrap();
            let row = &g[i * l.params..(i + 1) * l.params];
            assert_eq!(row, native.to_flat().as_slice(), "row {i}");
            if !with_vertices {
                assert!(row[32..].iter().all(|&x| x == 0.0));
            }
        }
    }
}

#[test]
fn jacobians_are_bit_identical_to_native() {
    let b = batch();
    let l = b.layout;
    let n = 8;
    let flat = &b.flat[..n * l.params];
    let mut jj = vec![f64::NAN; n * l.joints * l.params];
    let mut vj = vec![f64::NAN; n * l.vertices * l.params];
    batch_jacobians(&b.model, flat, &mut jj, Some(&mut vj)).unwrap();
    for (i, p) in b.params[..n].iter().enumerate() {
        let (_, jac) = hpsl_jacobians(&b.model, p).unwrap();
        for r in 0..l.joints {
            let row = &jj[(i * l.joints + r) * l.params..(i * l.joints + r + 1) * l.params];
            assert!(row[..26].iter().eq(jac.joints.d_theta.row(r).iter()));
            assert!(row[26..32].iter().eq(jac.joints.d_alpha.row(r).iter()));
            assert!(row[32..].iter().all(|&x| x == 0.0));
        }
        for r in 0..l.vertices {
            let row = &vj[(i * l.vertices + r) * l.params..(i * l.vertices + r + 1) * l.params];
            assert!(row[..26].iter().eq(jac.vertices.d_theta.row(r).iter()));
            assert!(row[26..32].iter().eq(jac.vertices.d_alpha.row(r).iter()));
            assert!(row[32..].iter().eq(jac.vertices.d_beta.row(r).iter()));
        }
    }
}

#[test]
fn mismatched_buffers_are_rejected() {
    let b = batch();
    let l = b.layout;
    let flat = &b.flat[..2 * l.params];
    let (mut jo, mut vo) = (vec![0.0; 2 * l.joints], vec![0.0; 2 * l.vertices]);
    let bad = |r: handforge::Result<()>| matches!(r, Err(Error::Argument(_)) | Err(Error::Dimension { .. }));

    assert!(bad(batch_forward(&b.model, &flat[..l.params + 5], &mut jo, &mut vo)));
    assert!(bad(batch_forward(&b.model, &[], &mut jo, &mut vo)));
    assert!(bad(batch_forward(&b.model, flat, &mut jo[..l.joints], &mut vo)));
    assert!(bad(batch_forward(&b.model, flat, &mut jo, &mut vo[1..])));

    let mut g = vec![0.0; 2 * l.params];
    assert!(bad(batch_backward(&b.model, flat, &b.joints_gt[..l.joints], None, &mut g)));
    assert!(bad(batch_backward(&b.model, flat, &b.joints_gt[..2 * l.joints], Some(&b.vertices_gt[..7]), &mut g)));
    assert!(bad(batch_backward(&b.model, flat, &b.joints_gt[..2 * l.joints], None, &mut g[1..])));

    let mut jj = vec![0.0; 2 * l.joints * l.params - 1];
    assert!(bad(batch_jacobians(&b.model, flat, &mut jj, None)));
}
