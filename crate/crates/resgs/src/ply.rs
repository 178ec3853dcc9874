//! Gaussian checkpoints as binary little-endian PLY.
//!
//! One vertex per Gaussian with the properties, in order:
//!
//! ```text
//! x y z nx ny nz f_dc_0 f_dc_1 f_dc_2 f_rest_0 .. f_rest_{3(K-1)-1}
//! opacity scale_0 scale_1 scale_2 rot_0 rot_1 rot_2 rot_3 id [level]
//! ```
//!
//! All written as `double`. Opacity is the logit, scales are logarithms,
//! `rot_0` is the real part. `f_rest` is channel-major: all red higher-order
//! coefficients first. Normals are written as zero. `level` is present only
//! in mid-run checkpoints. The header carries `comment resgs-format <n>`,
//! `comment next_id <n>` and optionally `comment config_hash <hex>`.
//!
//! The reader also accepts `float` properties and files without `id` (ids
//! are then assigned in file order).

use std::fs;
use std::path::Path;

use resgs_core::model::{Gaussian, GaussianCloud};
use resgs_core::sh;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Largest id representable exactly in a `double`.
const MAX_ID: u64 = 1 << 53;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub config_hash: Option<String>,
}

fn property_names(sh_degree: usize, with_level: bool) -> Vec<String> {
    let rest = sh::coeff_count(sh_degree) - 1;
    let mut names: Vec<String> = [
        "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend((0..3 * rest).map(|i| format!("f_rest_{i}")));
    names.extend(
        [
            "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "id",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    if with_level {
        names.push("level".into());
    }
    names
}

/// Serialize `cloud`. A `final_export` omits the level property.
pub fn encode_checkpoint(
    cloud: &GaussianCloud,
    final_export: bool,
    meta: &CheckpointMeta,
) -> Result<Vec<u8>> {
    let degree = cloud.sh_degree();
    let rest = sh::coeff_count(degree) - 1;
    let names = property_names(degree, !final_export);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("comment resgs-format {FORMAT_VERSION}\n"));
    header.push_str(&format!("comment next_id {}\n", cloud.next_id()));
    if let Some(hash) = &meta.config_hash {
        header.push_str(&format!("comment config_hash {hash}\n"));
    }
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    for name in &names {
        header.push_str(&format!("property double {name}\n"));
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    out.reserve(cloud.len() * names.len() * 8);
    let mut row = Vec::with_capacity(names.len());
    for i in 0..cloud.len() {
        let id = cloud.ids()[i];
        if id >= MAX_ID {
            return Err(Error::Usage(format!(
                "gaussian id {id} is too large to store"
            )));
        }
        let coeffs = cloud.sh_of(i);
        row.clear();
        row.extend_from_slice(&cloud.positions()[i]);
        row.extend_from_slice(&[0.0; 3]);
        row.extend_from_slice(&coeffs[..3]);
        for c in 0..3 {
            for k in 1..=rest {
                row.push(coeffs[k * 3 + c]);
            }
        }
        row.push(cloud.opacity_logits()[i]);
        row.extend_from_slice(&cloud.log_scales()[i]);
        row.extend_from_slice(&cloud.rotations()[i]);
        row.push(id as f64);
        if !final_export {
            row.push(cloud.levels()[i] as f64);
        }
        for v in &row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(
    cloud: &GaussianCloud,
    path: &Path,
    final_export: bool,
    meta: &CheckpointMeta,
) -> Result<()> {
    let bytes = encode_checkpoint(cloud, final_export, meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

/// A parsed checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub cloud: GaussianCloud,
    pub meta: CheckpointMeta,
    /// Whether the file carried levels.
    pub has_level: bool,
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |msg: String| Error::format(path, msg);
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing end_header".into()))?;
    let header =
        std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
    let body = &bytes[end + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(bad("not a PLY file".into()));
    }
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut meta = CheckpointMeta::default();
    let mut next_id = None;
    let mut version = None;
    let mut in_vertex = false;
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", "binary_little_endian", "1.0"] => {}
            ["format", other, ..] => return Err(bad(format!("unsupported PLY format {other}"))),
            ["comment", "resgs-format", v] => {
                version = Some(
                    v.parse::<u32>()
                        .map_err(|_| bad("bad format version".into()))?,
                )
            }
            ["comment", "next_id", v] => {
                next_id = Some(v.parse::<u64>().map_err(|_| bad("bad next_id".into()))?)
            }
            ["comment", "config_hash", v] => meta.config_hash = Some(v.to_string()),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                in_vertex = true;
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| bad("bad vertex count".into()))?,
                );
            }
            ["element", name, _] => return Err(bad(format!("unexpected element {name}"))),
            ["property", "list", ..] => {
                return Err(bad("list properties are not supported".into()))
            }
            ["property", ty, name] if in_vertex => {
                let ty =
                    Scalar::parse(ty).ok_or_else(|| bad(format!("unknown property type {ty}")))?;
                props.push((name.to_string(), ty));
            }
            _ => return Err(bad(format!("unexpected header line: {line}"))),
        }
    }
    if let Some(v) = version {
        if v != FORMAT_VERSION {
            return Err(bad(format!(
                "checkpoint format version {v}, this build reads version {FORMAT_VERSION}"
            )));
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element".into()))?;

    let find = |name: &str| props.iter().position(|(n, _)| n == name);
    let require = |name: &str| find(name).ok_or_else(|| bad(format!("missing property {name}")));
    let rest_len = props
        .iter()
        .filter(|(n, _)| n.starts_with("f_rest_"))
        .count();
    let coeffs = rest_len / 3 + 1;
    let degree = (0..=sh::MAX_DEGREE)
        .find(|&d| sh::coeff_count(d) == coeffs && rest_len % 3 == 0)
        .ok_or_else(|| bad(format!("{rest_len} f_rest properties match no SH degree")))?;

    let pos = [require("x")?, require("y")?, require("z")?];
    let dc = [require("f_dc_0")?, require("f_dc_1")?, require("f_dc_2")?];
    let rest: Vec<usize> = (0..rest_len)
        .map(|i| require(&format!("f_rest_{i}")))
        .collect::<Result<_>>()?;
    let opacity = require("opacity")?;
    let scale = [
        require("scale_0")?,
        require("scale_1")?,
        require("scale_2")?,
    ];
    let rot = [
        require("rot_0")?,
        require("rot_1")?,
        require("rot_2")?,
        require("rot_3")?,
    ];
    let id_col = find("id");
    let level_col = find("level");

    let mut offsets = Vec::with_capacity(props.len());
    let mut stride = 0;
    for (_, ty) in &props {
        offsets.push(stride);
        stride += ty.size();
    }
    let expected = count
        .checked_mul(stride)
        .ok_or_else(|| bad("vertex data size overflows".into()))?;
    if body.len() < expected {
        return Err(bad(format!(
            "truncated: expected {expected} bytes of vertex data, found {}",
            body.len()
        )));
    }

    let mut gaussians = Vec::with_capacity(count);
    let mut ids = Vec::with_capacity(count);
    let rest_per_channel = coeffs - 1;
    for v in 0..count {
        let row = &body[v * stride..(v + 1) * stride];
        let get = |col: usize| props[col].1.read(&row[offsets[col]..]);
        let mut sh_coeffs = vec![0.0; coeffs * 3];
        for c in 0..3 {
            sh_coeffs[c] = get(dc[c]);
            for k in 1..coeffs {
                sh_coeffs[k * 3 + c] = get(rest[c * rest_per_channel + k - 1]);
            }
        }
        let id = match id_col {
            Some(col) => {
                let raw = get(col);
                if !(raw >= 0.0 && raw < MAX_ID as f64 && raw.fract() == 0.0) {
                    return Err(bad(format!("vertex {v} has invalid id {raw}")));
                }
                raw as u64
            }
            None => v as u64,
        };
        let level = match level_col {
            Some(col) => {
                let raw = get(col);
                if !(raw >= 0.0 && raw <= u32::MAX as f64 && raw.fract() == 0.0) {
                    return Err(bad(format!("vertex {v} has invalid level {raw}")));
                }
                raw as u32
            }
            None => 0,
        };
        ids.push(id);
        gaussians.push(Gaussian {
            position: pos.map(get),
            log_scale: scale.map(get),
            rotation: rot.map(get),
            opacity_logit: get(opacity),
            sh: sh_coeffs,
            level,
        });
    }
    let next_id = next_id.unwrap_or_else(|| ids.iter().max().map_or(0, |m| m + 1));
    let cloud = GaussianCloud::from_parts(degree, gaussians, ids, next_id)
        .map_err(|e| bad(e.to_string()))?;
    Ok(Checkpoint {
        cloud,
        meta,
        has_level: level_col.is_some(),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
