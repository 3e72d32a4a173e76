//! Z-buffered triangle rasterizer producing depth and part-label images.

use crate::kinematics::ParamVector;
use crate::math::Vec3;

use super::camera::CameraIntrinsics;

/// Parameters and layer outputs a frame was rendered from (camera frame, mm).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: ParamVector,
    pub joints: Vec<Vec3>,
    pub vertices: Vec<Vec3>,
}

/// Row-major depth image in mm with 0 for background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub intrinsics: CameraIntrinsics,
    pub depth: Vec<f64>,
    /// Part id per pixel, 0 for background.
    pub labels: Option<Vec<u8>>,
    pub ground_truth: Option<GroundTruth>,
}

impl DepthFrame {
    pub fn empty(intrinsics: CameraIntrinsics) -> Self {
        Self {
            intrinsics,
            depth: vec![0.0; intrinsics.pixel_count()],
            labels: Some(vec![0; intrinsics.pixel_count()]),
            ground_truth: None,
        }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    /// Depth at column `i`, row `j`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.depth[j * self.width() + i]
    }

    pub fn foreground_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d != 0.0).count()
    }
}

/// Majority part label of a face; vertex 0 wins a three-way tie.
fn face_label(labels: &[u8], face: &[usize; 3]) -> u8 {
    let [a, b, c] = face.map(|k| labels[k]);
    if b == c {
        b
    } else {
        a
    }
}

/// Renders the mesh with a hard z-buffer.
///
/// Depth is interpolated perspective-correctly (`1/z` is affine in image
/// coordinates), so each covered pixel receives the exact depth at which its
/// centre ray meets the triangle plane. Coverage is edge-inclusive and both
/// windings are drawn. Triangles with a vertex nearer than the near plane are
/// skipped; pixels beyond the far plane are left as background.
pub fn render_depth(vertices: &[Vec3], faces: &[[usize; 3]], part_labels: &[u8], cam: &CameraIntrinsics) -> DepthFrame {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut labels = vec![0u8; w * h];

    for face in faces {
        let p = face.map(|k| vertices[k]);
        if p.iter().any(|v| !(v.z >= cam.near) || !v.iter().all(|c| c.is_finite())) {
            continue;
        }
        let uv = p.map(|v| (cam.focal * v.x / v.z + cam.cx, cam.focal * v.y / v.z + cam.cy));
        let inv_z = p.map(|v| 1.0 / v.z);
        let edge = |a: (f64, f64), b: (f64, f64), x: f64, y: f64| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
        let area = edge(uv[0], uv[1], uv[2].0, uv[2].1);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_u = uv.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_u = uv.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).floor().min(w as f64 - 1.0);
        let min_v = uv.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_v = uv.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).floor().min(h as f64 - 1.0);
        if min_u > max_u || min_v > max_v {
            continue;
        }
        let label = face_label(part_labels, face);
        for j in min_v as usize..=max_v as usize {
            let y = j as f64;
            for i in min_u as usize..=max_u as usize {
                let x = i as f64;
                let b0 = edge(uv[1], uv[2], x, y) / area;
                let b1 = edge(uv[2], uv[0], x, y) / area;
                let b2 = edge(uv[0], uv[1], x, y) / area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let z = 1.0 / (b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2]);
                if z > cam.far {
                    continue;
                }
                let k = j * w + i;
                if z < zbuf[k] {
                    zbuf[k] = z;
                    labels[k] = label;
                }
            }
        }
    }

    let depth = zbuf.into_iter().map(|z| if z.is_finite() { z } else { 0.0 }).collect();
    DepthFrame {
        intrinsics: *cam,
        depth,
        labels: Some(labels),
        ground_truth: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    /// Triangle in the plane `z = depth` covering the principal point.
    fn flat(depth: f64, offset: usize) -> (Vec<Vec3>, [usize; 3]) {
        let s = depth / cam().focal;
        let v = vec![
            Vec3::new(-20.0 * s, -20.0 * s, depth),
            Vec3::new(30.0 * s, -10.0 * s, depth),
            Vec3::new(0.0, 25.0 * s, depth),
        ];
        (v, [offset, offset + 1, offset + 2])
    }

    #[test]
    fn flat_triangle_depth_at_principal_point() {
        let (v, f) = flat(400.0, 0);
        let frame = render_depth(&v, &[f], &[3, 3, 3], &cam());
        assert!((frame.at(160, 120) - 400.0).abs() < 1e-9);
        assert_eq!(frame.labels.as_ref().unwrap()[120 * 320 + 160], 3);
        assert_eq!(frame.at(0, 0), 0.0);
    }

    #[test]
    fn nearest_surface_wins() {
        let (mut v, f0) = flat(400.0, 0);
        let (v1, f1) = flat(300.0, 3);
        v.extend(v1);
        for faces in [[f0, f1], [f1, f0]] {
            let frame = render_depth(&v, &faces, &[1, 1, 1, 2, 2, 2], &cam());
            assert!((frame.at(160, 120) - 300.0).abs() < 1e-9);
            assert_eq!(frame.labels.as_ref().unwrap()[120 * 320 + 160], 2);
        }
    }

    #[test]
    fn majority_label_with_vertex_zero_fallback() {
        assert_eq!(face_label(&[1, 2, 2], &[0, 1, 2]), 2);
        assert_eq!(face_label(&[2, 1, 2], &[0, 1, 2]), 2);
        assert_eq!(face_label(&[1, 2, 3], &[0, 1, 2]), 1);
    }

    #[test]
    fn triangles_crossing_the_near_plane_are_skipped() {
        let (mut v, f) = flat(400.0, 0);
        v[0].z = 10.0;
        let frame = render_depth(&v, &[f], &[1, 1, 1], &cam());
        assert_eq!(frame.foreground_count(), 0);
    }
}
