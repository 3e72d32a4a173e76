//! File formats: binary PGM images, OBJ meshes and annotation CSVs.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::ParamVector;
use crate::math::Vec3;
use crate::model::HandModel;

use super::camera::CameraIntrinsics;
use super::raster::DepthFrame;

/// Grayscale image with up to 16 bits per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

/// Binary P5 encoding; samples are big-endian when `maxval > 255`.
pub fn encode_pgm(img: &PgmImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        out.reserve(2 * img.data.len());
        for v in &img.data {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(img.data.iter().map(|&v| v as u8));
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let bad = |m: &str| Error::Parse(format!("PGM: {m}"));
    let mut pos = 0;
    let mut token = || -> Result<&[u8]> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(&bytes[start..pos])
    };
    if token()? != b"P5" {
        return Err(bad("not a binary graymap"));
    }
    let mut number = |what: &str| -> Result<usize> {
        std::str::from_utf8(token()?)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(&format!("bad {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval out of range"));
    }
    if pos >= bytes.len() {
        return Err(bad("missing pixel data"));
    }
    let body = &bytes[pos + 1..];
    let n = width * height;
    let data = if maxval > 255 {
        if body.len() != 2 * n {
            return Err(bad("pixel data length mismatch"));
        }
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        if body.len() != n {
            return Err(bad("pixel data length mismatch"));
        }
        body.iter().map(|&b| u16::from(b)).collect()
    };
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

pub fn write_pgm(path: &Path, img: &PgmImage) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    decode_pgm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Depth in whole millimetres, 0 for background.
pub fn depth_to_pgm(width: usize, height: usize, depth: &[f64]) -> PgmImage {
    PgmImage {
        width,
        height,
        maxval: u16::MAX,
        data: depth.iter().map(|&d| d.round().clamp(0.0, 65535.0) as u16).collect(),
    }
}

/// Depth frame from a millimetre depth image; the image size must match the
/// intrinsics.
pub fn depth_frame_from_pgm(img: &PgmImage, intrinsics: CameraIntrinsics) -> Result<DepthFrame> {
    if img.width != intrinsics.width as usize || img.height != intrinsics.height as usize {
        return Err(Error::Argument(format!(
            "depth image is {}x{} but the camera is {}x{}",
            img.width, img.height, intrinsics.width, intrinsics.height
        )));
    }
    Ok(DepthFrame {
        intrinsics,
        depth: img.data.iter().map(|&d| f64::from(d)).collect(),
        labels: None,
        ground_truth: None,
    })
}

pub fn labels_to_pgm(width: usize, height: usize, labels: &[u8]) -> PgmImage {
    PgmImage {
        width,
        height,
        maxval: 255,
        data: labels.iter().map(|&l| u16::from(l)).collect(),
    }
}

/// Wavefront OBJ with 1-based face indices; coordinates in shortest
/// round-trip decimal form.
pub fn write_obj(path: &Path, vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        writeln!(w, "# handforge mesh, mm")?;
        for v in vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for f in faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn read_obj(path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let bad = || Error::Parse(format!("{}:{}: malformed OBJ line", path.display(), n + 1));
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad());
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|s| s.split('/').next().unwrap_or("").parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                if idx.len() != 3 || idx.contains(&0) {
                    return Err(bad());
                }
                faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct AnnotationRow {
    field: String,
    index: usize,
    x: f64,
    y: Option<f64>,
    z: Option<f64>,
}

/// Per-sample ground truth as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotations {
    pub params: ParamVector,
    /// Absolute pose `θ_init + δθ` (rad, mm for the root translation).
    pub theta: Vec<f64>,
    /// Joint positions in the camera frame (mm).
    pub joints: Vec<Vec3>,
}

/// Writes `field,index,x,y,z` rows: `joint` rows carry a position, the
/// scalar rows `delta_theta`, `theta`, `alpha` and `beta` use `x` only.
pub fn write_annotations(path: &Path, model: &HandModel, params: &ParamVector, joints: &[Vec3]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<AnnotationRow> = joints
        .iter()
        .enumerate()
        .map(|(i, p)| AnnotationRow {
            field: "joint".into(),
            index: i,
            x: p.x,
            y: Some(p.y),
            z: Some(p.z),
        })
        .collect();
    let scalar = |field: &str, values: &[f64]| {
        values
            .iter()
            .enumerate()
            .map(|(i, &x)| AnnotationRow {
                field: field.into(),
                index: i,
                x,
                y: None,
                z: None,
            })
            .collect::<Vec<_>>()
    };
    rows.extend(scalar("delta_theta", &params.delta_theta));
    rows.extend(scalar("theta", &params.theta(model)));
    rows.extend(scalar("alpha", &params.alpha));
    rows.extend(scalar("beta", &params.beta));
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_annotations(path: &Path) -> Result<Annotations> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Annotations {
        params: ParamVector {
            delta_theta: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
        },
        theta: Vec::new(),
        joints: Vec::new(),
    };
    for row in r.deserialize() {
        let row: AnnotationRow = row.map_err(|e| csv_error(path, e))?;
        let bad = || Error::Parse(format!("{}: unexpected row {} {}", path.display(), row.field, row.index));
        let target = match row.field.as_str() {
            "joint" => {
                if row.index != out.joints.len() {
                    return Err(bad());
                }
                let (Some(y), Some(z)) = (row.y, row.z) else {
                    return Err(bad());
                };
                out.joints.push(Vec3::new(row.x, y, z));
                continue;
            }
            "delta_theta" => &mut out.params.delta_theta,
            "theta" => &mut out.theta,
            "alpha" => &mut out.params.alpha,
            "beta" => &mut out.params.beta,
            _ => return Err(bad()),
        };
        if row.index != target.len() {
            return Err(bad());
        }
        target.push(row.x);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}
