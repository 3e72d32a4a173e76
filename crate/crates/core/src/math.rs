//! Homogeneous 4x4 transform helpers.
//!
//! Rotations are axis-angle about a fixed unit axis (Rodrigues form), so the
//! derivative with respect to the angle is `K R` where `K` is the cross-product
//! matrix of the axis.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

pub type Mat4 = Matrix4<f64>;
pub type Vec3 = Vector3<f64>;

#[inline]
pub fn skew(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

pub fn translation(t: &Vec3) -> Mat4 {
    let mut m = Mat4::identity();
    m[(0, 3)] = t.x;
    m[(1, 3)] = t.y;
    m[(2, 3)] = t.z;
    m
}

/// Derivative of `translation(s * dir)` with respect to `s`.
pub fn translation_derivative(dir: &Vec3) -> Mat4 {
    let mut m = Mat4::zeros();
    m[(0, 3)] = dir.x;
    m[(1, 3)] = dir.y;
    m[(2, 3)] = dir.z;
    m
}

pub fn rotation(axis: &Vec3, angle: f64) -> Mat4 {
    let k = skew(axis);
    let (s, c) = angle.sin_cos();
    let r = Matrix3::identity() + k * s + k * k * (1.0 - c);
    embed(&r)
}

/// `d/dθ R(axis, θ) = K R(axis, θ)` for a unit axis.
pub fn rotation_derivative(axis: &Vec3, angle: f64) -> Mat4 {
    let k = skew(axis);
    let (s, c) = angle.sin_cos();
    let dr = k * c + k * k * s;
    let mut m = Mat4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&dr);
    m
}

fn embed(r: &Matrix3<f64>) -> Mat4 {
    let mut m = Mat4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m
}

/// Inverse of a rigid transform `[R t; 0 1]`.
pub fn rigid_inverse(m: &Mat4) -> Mat4 {
    let r = m.fixed_view::<3, 3>(0, 0);
    let t = m.fixed_view::<3, 1>(0, 3);
    let rt = r.transpose();
    let ti = -(rt * t);
    let mut out = Mat4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&ti);
    out
}

#[inline]
pub fn transform_point(m: &Mat4, p: &Vec3) -> Vec3 {
    let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
    Vec3::new(h.x, h.y, h.z)
}

/// Applies the 3x4 part of `m` to a direction (homogeneous w = 0).
#[inline]
pub fn transform_vector(m: &Mat4, v: &Vec3) -> Vec3 {
    m.fixed_view::<3, 3>(0, 0) * v
}

#[inline]
pub fn origin_of(m: &Mat4) -> Vec3 {
    Vec3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_derivative_matches_central_difference() {
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        let theta = 0.7;
        let h = 1e-6;
        let fd = (rotation(&axis, theta + h) - rotation(&axis, theta - h)) / (2.0 * h);
        let an = rotation_derivative(&axis, theta);
        assert!((fd - an).abs().max() < 1e-9);
    }

    #[test]
    fn rigid_inverse_is_inverse() {
        let m = translation(&Vec3::new(1.0, -2.0, 3.0)) * rotation(&Vec3::y(), 0.4);
        let p = m * rigid_inverse(&m);
        assert!((p - Mat4::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rotation(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        let p = transform_point(&r, &Vec3::x());
        assert!((p - Vec3::y()).norm() < 1e-15);
    }
}
