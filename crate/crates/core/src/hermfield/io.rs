//! Field dumps: raw little-endian `f64` data in row-major grid order plus a
//! JSON sidecar header.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GeometryKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub geometry: GeometryKind,
    /// Grid extents followed by per-point component extents.
    pub shape: Vec<usize>,
    /// Names of the per-point components in storage order.
    pub component_layout: Vec<String>,
    pub endianness: String,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("f64"), stem.with_extension("json"))
}

/// Writes `<stem>.f64` and `<stem>.json`.
pub fn write_field(
    stem: &Path,
    geometry: GeometryKind,
    grid_shape: &[usize],
    component_layout: Vec<String>,
    data: &[f64],
) -> Result<()> {
    let npts: usize = grid_shape.iter().product();
    let per_point = component_layout.len().max(1);
    if data.len() != npts * per_point {
        return Err(Error::domain(format!(
            "field dump expects {} values, got {}",
            npts * per_point,
            data.len()
        )));
    }
    let mut shape = grid_shape.to_vec();
    if per_point > 1 {
        shape.push(per_point);
    }
    let header = FieldHeader {
        geometry,
        shape,
        component_layout,
        endianness: "little".into(),
    };
    let (bin, json) = paths(stem);
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(bin, bytes)?;
    fs::write(json, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

/// Reads a dump written by [`write_field`].
pub fn read_field(stem: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let (bin, json) = paths(stem);
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(json)?)?;
    if header.endianness != "little" {
        return Err(Error::config(format!("unsupported endianness {}", header.endianness)));
    }
    let bytes = fs::read(bin)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::config("field dump length is not a multiple of 8 bytes"));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let expected: usize = header.shape.iter().product();
    if data.len() != expected {
        return Err(Error::config(format!(
            "field dump holds {} values but header shape implies {expected}",
            data.len()
        )));
    }
    Ok((header, data))
}
