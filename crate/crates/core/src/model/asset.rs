//! Text asset format.
//!
//! The asset is a UTF-8 JSON document with one named section per model field
//! and one array row per line, so it diffs and greps like a table. Lengths
//! are millimetres, angles radians. Floats are written in shortest
//! round-trip form, so `load(save(m)) == m` bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bone, Dof, DofKind, HandModel, HandModelParts, Influence, Joint, MorphTarget};
use crate::error::{Error, Result};
use crate::math::Vec3;

pub const ASSET_FORMAT: &str = "handforge-asset";
pub const ASSET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct JointRecord {
    name: String,
    parent: Option<usize>,
    bone: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct DofRecord {
    name: String,
    joint: usize,
    kind: DofKind,
    axis: [f64; 3],
    lower: f64,
    upper: f64,
}

#[derive(Deserialize)]
struct MorphRecord {
    name: String,
    vertices: Vec<[f64; 3]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetFile {
    format: String,
    version: u32,
    joints: Vec<JointRecord>,
    dof_layout: Vec<DofRecord>,
    theta_init: Vec<f64>,
    bone_lengths: Vec<f64>,
    bone_directions: Vec<[f64; 3]>,
    scale_slots: Vec<String>,
    scale_groups: Vec<usize>,
    vertices: Vec<[f64; 3]>,
    morph_targets: Vec<MorphRecord>,
    weights: Vec<Vec<(usize, f64)>>,
    faces: Vec<[usize; 3]>,
    part_names: Vec<String>,
    part_labels: Vec<u8>,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn a3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Reads and validates an asset file.
pub fn load_model(path: impl AsRef<Path>) -> Result<HandModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

/// Parses and validates an asset document held in memory.
pub fn parse_model(text: &str) -> Result<HandModel> {
    let file: AssetFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != ASSET_FORMAT {
        return Err(Error::Parse(format!("unknown asset format tag {:?}", file.format)));
    }
    if file.version != ASSET_VERSION {
        return Err(Error::Parse(format!("unsupported asset version {}", file.version)));
    }
    let nb = file.bone_lengths.len();
    if file.bone_directions.len() != nb || file.scale_groups.len() != nb {
        return Err(Error::Validation(
            "bone_lengths, bone_directions and scale_groups differ in length".into(),
        ));
    }
    let bones = (0..nb)
        .map(|b| Bone {
            length: file.bone_lengths[b],
            direction: v3(file.bone_directions[b]),
            scale_slot: file.scale_groups[b],
        })
        .collect();
    let parts = HandModelParts {
        joints: file
            .joints
            .into_iter()
            .map(|j| Joint {
                name: j.name,
                parent: j.parent,
                bone: j.bone,
            })
            .collect(),
        dofs: file
            .dof_layout
            .into_iter()
            .map(|d| Dof {
                name: d.name,
                joint: d.joint,
                kind: d.kind,
                axis: v3(d.axis),
                lower: d.lower,
                upper: d.upper,
            })
            .collect(),
        theta_init: file.theta_init,
        bones,
        scale_slots: file.scale_slots,
        neutral: file.vertices.into_iter().map(v3).collect(),
        morph_targets: file
            .morph_targets
            .into_iter()
            .map(|m| MorphTarget {
                name: m.name,
                vertices: m.vertices.into_iter().map(v3).collect(),
            })
            .collect(),
        weights: file
            .weights
            .into_iter()
            .map(|l| {
                l.into_iter()
                    .map(|(joint, weight)| Influence { joint, weight })
                    .collect()
            })
            .collect(),
        faces: file.faces,
        part_labels: file.part_labels,
        part_names: file.part_names,
    };
    HandModel::from_parts(parts)
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("asset rows serialize")
}

struct Doc {
    out: String,
    first: bool,
}

impl Doc {
    fn new() -> Self {
        Self {
            out: String::from("{\n"),
            first: true,
        }
    }

    fn key(&mut self, key: &str) {
        if !self.first {
            self.out.push_str(",\n");
        }
        self.first = false;
        let _ = write!(self.out, "  {}: ", json(key));
    }

    fn scalar<T: Serialize + ?Sized>(&mut self, key: &str, v: &T) {
        self.key(key);
        self.out.push_str(&json(v));
    }

    fn rows<T: Serialize>(&mut self, key: &str, rows: impl IntoIterator<Item = T>) {
        self.key(key);
        push_rows(&mut self.out, rows, "    ");
    }

    fn finish(mut self) -> String {
        self.out.push_str("\n}\n");
        self.out
    }
}

fn push_rows<T: Serialize>(out: &mut String, rows: impl IntoIterator<Item = T>, indent: &str) {
    out.push('[');
    let mut any = false;
    for (i, r) in rows.into_iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(indent);
        out.push_str(&json(&r));
        any = true;
    }
    if any {
        out.push('\n');
        out.push_str(&indent[2..]);
    }
    out.push(']');
}

/// Serializes a model to the asset text format.
pub fn write_model(model: &HandModel) -> String {
    let p = model.parts();
    let mut doc = Doc::new();
    doc.scalar("format", ASSET_FORMAT);
    doc.scalar("version", &ASSET_VERSION);
    doc.rows(
        "joints",
        p.joints.iter().map(|j| JointRecord {
            name: j.name.clone(),
            parent: j.parent,
            bone: j.bone,
        }),
    );
    doc.rows(
        "dof_layout",
        p.dofs.iter().map(|d| DofRecord {
            name: d.name.clone(),
            joint: d.joint,
            kind: d.kind,
            axis: a3(&d.axis),
            lower: d.lower,
            upper: d.upper,
        }),
    );
    doc.scalar("theta_init", &p.theta_init);
    doc.scalar("bone_lengths", &p.bones.iter().map(|b| b.length).collect::<Vec<_>>());
    doc.rows("bone_directions", p.bones.iter().map(|b| a3(&b.direction)));
    doc.scalar("scale_slots", &p.scale_slots);
    doc.scalar("scale_groups", &p.bones.iter().map(|b| b.scale_slot).collect::<Vec<_>>());
    doc.rows("vertices", p.neutral.iter().map(a3));

    doc.key("morph_targets");
    doc.out.push('[');
    for (i, t) in p.morph_targets.iter().enumerate() {
        doc.out.push_str(if i == 0 { "\n" } else { ",\n" });
        let _ = write!(doc.out, "    {{\"name\": {}, \"vertices\": ", json(&t.name));
        push_rows(&mut doc.out, t.vertices.iter().map(a3), "      ");
        doc.out.push('}');
    }
    doc.out.push_str(if p.morph_targets.is_empty() { "]" } else { "\n  ]" });

    doc.rows(
        "weights",
        p.weights
            .iter()
            .map(|l| l.iter().map(|i| (i.joint, i.weight)).collect::<Vec<_>>()),
    );
    doc.rows("faces", p.faces.iter());
    doc.scalar("part_names", &p.part_names);
    doc.scalar("part_labels", &p.part_labels);
    doc.finish()
}

pub fn save_model(model: &HandModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}
