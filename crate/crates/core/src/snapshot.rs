//! Field snapshot files: a raw little-endian `f64` array in node order
//! (`x_1` fastest, i.e. row-major over `[x_{n+1}, ..., x_1]`) plus a JSON
//! sidecar `{n, h, parity_tag, description}`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField, Parity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: usize,
    pub h: f64,
    pub parity_tag: Parity,
    pub description: String,
}

/// Paths of the data and sidecar files for a snapshot stem.
pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("f64"), stem.with_extension("json"))
}

pub fn encode(field: &GridField) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(field.values().len() * 8);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn decode(grid: Grid, bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() != grid.len() * 8 {
        return Err(Error::Grid(format!(
            "snapshot holds {} bytes, grid needs {}",
            bytes.len(),
            grid.len() * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn write(field: &GridField, stem: &Path, description: &str) -> Result<()> {
    let (data, meta) = paths(stem);
    if let Some(dir) = data.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut out = BufWriter::new(fs::File::create(&data)?);
    out.write_all(&encode(field))?;
    out.flush()?;
    let sidecar = Sidecar {
        n: field.grid().n(),
        h: field.grid().h(),
        parity_tag: field.parity(),
        description: description.to_string(),
    };
    fs::write(meta, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read(stem: &Path) -> Result<(GridField, Sidecar)> {
    let (data, meta) = paths(stem);
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(meta)?)?;
    let grid = Grid::new(sidecar.n, sidecar.h)?;
    let values = decode(grid, &fs::read(data)?)?;
    let field = GridField::new(grid, values)?.with_parity(sidecar.parity_tag);
    Ok((field, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_are_little_endian_in_node_order() {
        let g = Grid::new(1, 0.5).unwrap();
        let f = GridField::from_fn(g, |p| p[0] + 10.0 * p[1]);
        let bytes = encode(&f);
        // node 1 is (x_1, x_2) = (-0.5, -1)
        let second = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        assert_eq!(second, -0.5 - 10.0);
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 0.25).unwrap();
        let f = GridField::from_fn(g, |p| p[2].abs() - p[0]).with_parity(Parity::None);
        let stem = dir.path().join("field");
        write(&f, &stem, "test field").unwrap();
        let (back, side) = read(&stem).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(side.description, "test field");
        assert_eq!(side.n, 2);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(stem.with_extension("json")).unwrap()).unwrap();
        assert_eq!(json["parity_tag"], "none");
    }
}
