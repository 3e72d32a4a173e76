//! Depth standardisation: centroid-centred cube crop, resampling to a fixed
//! square size and normalisation of depths and annotations to `[−1, 1]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::synth::{CameraIntrinsics, DepthFrame};

pub const DEFAULT_HALF_EXTENT: f64 = 150.0;
pub const DEFAULT_OUTPUT_SIZE: usize = 96;
/// Depth band kept behind the nearest pixel of a real frame (mm).
pub const REAL_FRAME_BAND: f64 = 250.0;
pub const BLOB_MAGIC: &[u8; 4] = b"HFN1";

/// Which pixels count as hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Foreground {
    /// Every non-zero pixel; synthetic frames contain only the hand.
    NonZero,
    /// Pixels within `band` mm behind the nearest non-zero pixel.
    NearestBand(f64),
}

impl Foreground {
    fn mask(&self, frame: &DepthFrame) -> Vec<bool> {
        match *self {
            Foreground::NonZero => frame.depth.iter().map(|&d| d > 0.0).collect(),
            Foreground::NearestBand(band) => {
                let z_min = frame.depth.iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
                frame.depth.iter().map(|&d| d > 0.0 && d <= z_min + band).collect()
            }
        }
    }
}

/// Mean of the back-projected hand pixels (camera frame, mm).
pub fn hand_centroid(frame: &DepthFrame, fg: Foreground) -> Result<Vec3> {
    let mask = fg.mask(frame);
    let w = frame.width();
    let mut sum = Vec3::zeros();
    let mut n = 0usize;
    for (k, (&d, &m)) in frame.depth.iter().zip(&mask).enumerate() {
        if m {
            sum += frame.intrinsics.back_project((k % w) as f64, (k / w) as f64, d);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoHand);
    }
    Ok(sum / n as f64)
}

/// Square source-image rectangle sampled by the crop, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CropRect {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

/// Everything needed to map between source pixels, normalised images and
/// normalised annotations.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CropMeta {
    pub centroid: Vec3,
    pub half_extent: f64,
    pub intrinsics: CameraIntrinsics,
    pub rect: CropRect,
    pub output_size: usize,
    /// Source pixels by which the rectangle overhangs the image on the
    /// left, top, right and bottom.
    pub padding: [f64; 4],
}

impl CropMeta {
    /// The crop is the projection of the cube `c ± e`: a square of side
    /// `f · 2e / c_z` centred on the projected centroid.
    pub fn new(centroid: Vec3, half_extent: f64, intrinsics: CameraIntrinsics, output_size: usize) -> Result<Self> {
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(Error::Argument("half extent must be positive".into()));
        }
        if output_size < 2 {
            return Err(Error::Argument("output size must be at least 2".into()));
        }
        if !(centroid.z - half_extent > 0.0) {
            return Err(Error::BehindCamera { z: centroid.z - half_extent });
        }
        let p = intrinsics.project(&centroid)?;
        let side = intrinsics.focal * 2.0 * half_extent / centroid.z;
        let rect = CropRect {
            x0: p.u - 0.5 * side,
            y0: p.v - 0.5 * side,
            side,
        };
        let (w, h) = (f64::from(intrinsics.width), f64::from(intrinsics.height));
        let padding = [
            (-rect.x0).max(0.0),
            (-rect.y0).max(0.0),
            (rect.x0 + side - (w - 1.0)).max(0.0),
            (rect.y0 + side - (h - 1.0)).max(0.0),
        ];
        Ok(Self {
            centroid,
            half_extent,
            intrinsics,
            rect,
            output_size,
            padding,
        })
    }

    /// Source image position of output pixel `(a, b)`; output corners map to
    /// rectangle corners.
    pub fn source_position(&self, a: usize, b: usize) -> (f64, f64) {
        let step = self.rect.side / (self.output_size - 1) as f64;
        (self.rect.x0 + a as f64 * step, self.rect.y0 + b as f64 * step)
    }
}

/// Square normalised depth image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub size: usize,
    pub data: Vec<f32>,
}

/// Crops, normalises and resamples a frame.
///
/// Each source pixel is first mapped to `clamp((d − c_z)/e, −1, 1)`, with
/// non-hand pixels and everything outside the image set to `+1`. The result
/// is then sampled bilinearly at the crop positions.
pub fn crop_normalize(frame: &DepthFrame, meta: &CropMeta, fg: Foreground) -> NormalizedImage {
    let (w, h) = (frame.width(), frame.height());
    let mask = fg.mask(frame);
    let (cz, e) = (meta.centroid.z, meta.half_extent);
    let norm: Vec<f64> = frame
        .depth
        .iter()
        .zip(&mask)
        .map(|(&d, &m)| if m { ((d - cz) / e).clamp(-1.0, 1.0) } else { 1.0 })
        .collect();
    let at = |i: i64, j: i64| -> f64 {
        if i < 0 || j < 0 || i >= w as i64 || j >= h as i64 {
            1.0
        } else {
            norm[j as usize * w + i as usize]
        }
    };
    let n = meta.output_size;
    let mut data = Vec::with_capacity(n * n);
    for b in 0..n {
        for a in 0..n {
            let (u, v) = meta.source_position(a, b);
            let (i0, j0) = (u.floor(), v.floor());
            let (fu, fv) = (u - i0, v - j0);
            let (i0, j0) = (i0 as i64, j0 as i64);
            let top = at(i0, j0) * (1.0 - fu) + at(i0 + 1, j0) * fu;
            let bottom = at(i0, j0 + 1) * (1.0 - fu) + at(i0 + 1, j0 + 1) * fu;
            let value = (top * (1.0 - fv) + bottom * fv).clamp(-1.0, 1.0);
            data.push(value as f32);
        }
    }
    NormalizedImage { size: n, data }
}

/// Centroid from `fg`, cube crop and normalisation in one call.
pub fn preprocess_frame(frame: &DepthFrame, half_extent: f64, output_size: usize, fg: Foreground) -> Result<(NormalizedImage, CropMeta)> {
    let c = hand_centroid(frame, fg)?;
    let meta = CropMeta::new(c, half_extent, frame.intrinsics, output_size)?;
    Ok((crop_normalize(frame, &meta, fg), meta))
}

/// `(P − c)/e` per coordinate, clipped to `[−1, 1]`.
pub fn normalize_annotations(points: &[Vec3], meta: &CropMeta) -> Vec<Vec3> {
    points
        .iter()
        .map(|p| ((p - meta.centroid) / meta.half_extent).map(|x| x.clamp(-1.0, 1.0)))
        .collect()
}

/// Inverse of [`normalize_annotations`] for unclipped values.
pub fn denormalize_annotations(points: &[Vec3], meta: &CropMeta) -> Vec<Vec3> {
    points.iter().map(|p| meta.centroid + p * meta.half_extent).collect()
}

/// Blob layout: `HFN1`, u16 width, u16 height, then `f32` samples, all
/// little-endian.
pub fn encode_blob(img: &NormalizedImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * img.data.len());
    out.extend_from_slice(BLOB_MAGIC);
    out.extend_from_slice(&(img.size as u16).to_le_bytes());
    out.extend_from_slice(&(img.size as u16).to_le_bytes());
    for v in &img.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_blob(bytes: &[u8]) -> Result<NormalizedImage> {
    if bytes.len() < 8 || &bytes[..4] != BLOB_MAGIC {
        return Err(Error::Parse("not a normalized image blob".into()));
    }
    let w = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let h = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    if w != h || bytes.len() != 8 + 4 * w * h {
        return Err(Error::Parse("blob size does not match its header".into()));
    }
    let data = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(NormalizedImage { size: w, data })
}

pub fn write_blob(path: &Path, img: &NormalizedImage) -> Result<()> {
    std::fs::write(path, encode_blob(img)).map_err(|e| Error::io(path, e))
}

pub fn read_blob(path: &Path) -> Result<NormalizedImage> {
    decode_blob(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CropMetaRecord {
    pub name: String,
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub centroid_z: f64,
    pub half_extent: f64,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
    pub rect_x0: f64,
    pub rect_y0: f64,
    pub rect_side: f64,
    pub output_size: usize,
    pub pad_left: f64,
    pub pad_top: f64,
    pub pad_right: f64,
    pub pad_bottom: f64,
}

impl CropMetaRecord {
    pub fn new(name: impl Into<String>, m: &CropMeta) -> Self {
        Self {
            name: name.into(),
            centroid_x: m.centroid.x,
            centroid_y: m.centroid.y,
            centroid_z: m.centroid.z,
            half_extent: m.half_extent,
            focal: m.intrinsics.focal,
            cx: m.intrinsics.cx,
            cy: m.intrinsics.cy,
            width: m.intrinsics.width,
            height: m.intrinsics.height,
            near: m.intrinsics.near,
            far: m.intrinsics.far,
            rect_x0: m.rect.x0,
            rect_y0: m.rect.y0,
            rect_side: m.rect.side,
            output_size: m.output_size,
            pad_left: m.padding[0],
            pad_top: m.padding[1],
            pad_right: m.padding[2],
            pad_bottom: m.padding[3],
        }
    }

    pub fn meta(&self) -> CropMeta {
        CropMeta {
            centroid: Vec3::new(self.centroid_x, self.centroid_y, self.centroid_z),
            half_extent: self.half_extent,
            intrinsics: CameraIntrinsics {
                width: self.width,
                height: self.height,
                focal: self.focal,
                cx: self.cx,
                cy: self.cy,
                near: self.near,
                far: self.far,
            },
            rect: CropRect {
                x0: self.rect_x0,
                y0: self.rect_y0,
                side: self.rect_side,
            },
            output_size: self.output_size,
            padding: [self.pad_left, self.pad_top, self.pad_right, self.pad_bottom],
        }
    }
}

pub fn write_crop_meta(path: &Path, records: &[CropMetaRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_crop_meta(path: &Path) -> Result<Vec<CropMetaRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(format!("{}: {e}", path.display()))))
        .collect()
}

/// Writes normalised joints as `index,x,y,z` rows.
pub fn write_normalized_joints(path: &Path, joints: &[Vec3]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    w.write_record(["index", "x", "y", "z"]).map_err(|e| Error::Parse(e.to_string()))?;
    for (i, p) in joints.iter().enumerate() {
        w.serialize((i, p.x, p.y, p.z)).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_with(pixels: &[(usize, usize, f64)]) -> DepthFrame {
        let mut f = DepthFrame::empty(CameraIntrinsics::default());
        for &(i, j, d) in pixels {
            f.depth[j * 320 + i] = d;
        }
        f
    }

    #[test]
    fn single_pixel_centroid() {
        let c = hand_centroid(&frame_with(&[(160, 120, 500.0)]), Foreground::NonZero).unwrap();
        assert_eq!(c, Vec3::new(0.0, 0.0, 500.0));
    }

    #[test]
    fn symmetric_pixels_centroid() {
        let c = hand_centroid(&frame_with(&[(150, 120, 500.0), (170, 120, 500.0)]), Foreground::NonZero).unwrap();
        assert!((c - Vec3::new(0.0, 0.0, 500.0)).norm() < 1e-12);
    }

    #[test]
    fn empty_frame_has_no_hand() {
        let f = DepthFrame::empty(CameraIntrinsics::default());
        assert!(matches!(hand_centroid(&f, Foreground::NonZero), Err(Error::NoHand)));
    }

    #[test]
    fn nearest_band_drops_far_pixels() {
        let f = frame_with(&[(160, 120, 500.0), (10, 10, 1200.0)]);
        let c = hand_centroid(&f, Foreground::NearestBand(REAL_FRAME_BAND)).unwrap();
        assert_eq!(c, Vec3::new(0.0, 0.0, 500.0));
    }

    #[test]
    fn depth_normalisation_endpoints() {
        let c = Vec3::new(0.0, 0.0, 500.0);
        let f = frame_with(&[(160, 120, 500.0), (161, 120, 650.0), (159, 120, 350.0)]);
        let meta = CropMeta::new(c, 150.0, f.intrinsics, 96).unwrap();
        // With an odd-sized output the centre sample lands on the principal point.
        let meta = CropMeta {
            output_size: 97,
            rect: CropRect { x0: 160.0 - 48.0, y0: 120.0 - 48.0, side: 96.0 },
            ..meta
        };
        let img = crop_normalize(&f, &meta, Foreground::NonZero);
        let at = |a: usize| img.data[48 * 97 + a];
        assert_eq!(at(48), 0.0);
        assert_eq!(at(49), 1.0);
        assert_eq!(at(47), -1.0);
        assert_eq!(img.data[0], 1.0);
    }

    #[test]
    fn cube_behind_camera_is_rejected() {
        let cam = CameraIntrinsics::default();
        assert!(matches!(CropMeta::new(Vec3::new(0.0, 0.0, 100.0), 150.0, cam, 96), Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn annotation_endpoints() {
        let meta = CropMeta::new(Vec3::new(5.0, -3.0, 500.0), 150.0, CameraIntrinsics::default(), 96).unwrap();
        let n = normalize_annotations(&[meta.centroid, meta.centroid + Vec3::new(150.0, 0.0, 0.0)], &meta);
        assert_eq!(n[0], Vec3::zeros());
        assert_eq!(n[1], Vec3::new(1.0, 0.0, 0.0));
        let far = normalize_annotations(&[meta.centroid + Vec3::new(0.0, 0.0, 900.0)], &meta);
        assert_eq!(far[0].z, 1.0);
    }

    #[test]
    fn blob_round_trip() {
        let img = NormalizedImage { size: 2, data: vec![0.5, -1.0, 1.0, 0.0] };
        let bytes = encode_blob(&img);
        assert_eq!(&bytes[..8], b"HFN1\x02\x00\x02\x00");
        assert_eq!(decode_blob(&bytes).unwrap(), img);
        assert!(decode_blob(&bytes[..10]).is_err());
    }

    #[test]
    fn crop_meta_record_round_trip() {
        let meta = CropMeta::new(Vec3::new(-20.0, 11.0, 420.0), 150.0, CameraIntrinsics::default(), 96).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.csv");
        write_crop_meta(&path, &[CropMetaRecord::new("a", &meta)]).unwrap();
        let back = read_crop_meta(&path).unwrap();
        assert_eq!(back[0].meta(), meta);
    }
}
