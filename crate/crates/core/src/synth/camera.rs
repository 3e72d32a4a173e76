//! Ideal pinhole camera.

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Pinhole intrinsics with square pixels. Pixel `(i, j)` is centred on
/// image coordinates `(u, v) = (i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels (`fx = fy`).
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// Clip distances along the optical axis (mm).
    pub near: f64,
    pub far: f64,
}

/// Focal length giving a diagonal field of view of `fov_deg` degrees.
pub fn diagonal_focal(width: u32, height: u32, fov_deg: f64) -> f64 {
    let half_diagonal = 0.5 * f64::from(width).hypot(f64::from(height));
    half_diagonal / (0.5 * fov_deg).to_radians().tan()
}

impl Default for CameraIntrinsics {
    /// 320×240 depth camera with a 74° diagonal field of view.
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            focal: diagonal_focal(320, 240, 74.0),
            cx: 160.0,
            cy: 120.0,
            near: 50.0,
            far: 2000.0,
        }
    }
}

/// Image position and depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0
            && self.height > 0
            && self.focal > 0.0
            && self.focal.is_finite()
            && (0.0..f64::from(self.width)).contains(&self.cx)
            && (0.0..f64::from(self.height)).contains(&self.cy)
            && 0.0 < self.near
            && self.near < self.far;
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid camera intrinsics {self:?}")))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// `u = f x / z + cx`, `v = f y / z + cy`. Points off the image are still
    /// projected.
    pub fn project(&self, p: &Vec3) -> Result<Projection> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok(Projection {
            u: self.focal * p.x / p.z + self.cx,
            v: self.focal * p.y / p.z + self.cy,
            depth: p.z,
        })
    }

    /// Camera-frame point at depth `z` seen through image position `(u, v)`.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.focal, (v - self.cy) * z / self.focal, z)
    }
}

/// Free-function form of [`CameraIntrinsics::project`].
pub fn project(point: &Vec3, cam: &CameraIntrinsics) -> Result<Projection> {
    cam.project(point)
}
