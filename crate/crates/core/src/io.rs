//! Field CSV files, JSON documents and content hashes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Field, Mesh};
use crate::rom::{ModelTag, ReducedBasis};

const FIELD_HEADER: &str = "ix,iy,x,y,value";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// CSV text of a field, one row per cell in storage order. Values use the
/// shortest representation that parses back to the same bits.
pub fn field_to_csv(field: &Field) -> String {
    let mesh = field.mesh();
    let mut out = String::with_capacity(mesh.ncells() * 48);
    out.push_str(FIELD_HEADER);
    out.push('\n');
    for (c, v) in field.values().iter().enumerate() {
        let (x, y) = mesh.cell_center(c);
        writeln!(out, "{},{},{},{},{:e}", c % mesh.nx(), c / mesh.nx(), x, y, v).unwrap();
    }
    out
}

pub fn field_from_csv(text: &str, mesh: &Arc<Mesh>, origin: &Path) -> Result<Field> {
    let bad = |msg: String| Error::Format {
        path: origin.to_path_buf(),
        message: msg,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(FIELD_HEADER) {
        return Err(bad(format!("expected header '{FIELD_HEADER}'")));
    }
    let mut values = vec![f64::NAN; mesh.ncells()];
    let mut seen = 0;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(format!("line {}: expected 5 columns", lineno + 2)));
        }
        let ix: usize = cols[0].trim().parse().map_err(|_| bad(format!("line {}: bad ix", lineno + 2)))?;
        let iy: usize = cols[1].trim().parse().map_err(|_| bad(format!("line {}: bad iy", lineno + 2)))?;
        let v: f64 = cols[4].trim().parse().map_err(|_| bad(format!("line {}: bad value", lineno + 2)))?;
        if ix >= mesh.nx() || iy >= mesh.ny() {
            return Err(bad(format!(
                "line {}: cell ({ix},{iy}) outside the {}x{} mesh",
                lineno + 2,
                mesh.nx(),
                mesh.ny()
            )));
        }
        values[mesh.index(ix, iy)] = v;
        seen += 1;
    }
    if seen != mesh.ncells() || values.iter().any(|v| v.is_nan()) {
        return Err(bad(format!("expected {} cells, found {seen}", mesh.ncells())));
    }
    Field::new(mesh.clone(), values).map_err(|e| bad(e.to_string()))
}

pub fn write_field_csv(path: &Path, field: &Field) -> Result<String> {
    let text = field_to_csv(field);
    write_text(path, &text)?;
    Ok(sha256_hex(text.as_bytes()))
}

pub fn read_field_csv(path: &Path, mesh: &Arc<Mesh>) -> Result<Field> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    field_from_csv(&text, mesh, path)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisManifest {
    pub model_tag: ModelTag,
    pub n_max: usize,
    pub singular_values: Vec<f64>,
    pub files: Vec<String>,
}

/// Writes `mode_XXX.csv` files and `basis.json` into `dir`.
pub fn write_basis(dir: &Path, basis: &ReducedBasis) -> Result<BasisManifest> {
    let mut files = Vec::with_capacity(basis.len());
    for (j, mode) in basis.modes().iter().enumerate() {
        let name = format!("mode_{:03}.csv", j + 1);
        write_field_csv(&dir.join(&name), mode)?;
        files.push(name);
    }
    let manifest = BasisManifest {
        model_tag: basis.model(),
        n_max: basis.len(),
        singular_values: basis.singular_values().to_vec(),
        files,
    };
    write_json(&dir.join("basis.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, GeometryConfig};

    #[test]
    fn field_csv_round_trips_bitwise() {
        let mesh = Arc::new(build_mesh(&GeometryConfig::default().with_resolution(7, 5)).unwrap());
        let v: Vec<f64> = (0..35).map(|i| (i as f64 * 0.731).sin() / 3.0 + 1e-300 * i as f64).collect();
        let f = Field::new(mesh.clone(), v).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/f.csv");
        let h = write_field_csv(&p, &f).unwrap();
        assert_eq!(h.len(), 64);
        let g = read_field_csv(&p, &mesh).unwrap();
        assert_eq!(f.values(), g.values());
        assert_eq!(h, sha256_hex(fs::read(&p).unwrap().as_slice()));
    }

    #[test]
    fn malformed_csv_is_a_format_error() {
        let mesh = Arc::new(build_mesh(&GeometryConfig::default().with_resolution(2, 2)).unwrap());
        let p = Path::new("x.csv");
        for text in [
            "a,b\n",
            "ix,iy,x,y,value\n0,0,1,1,2\n",
            "ix,iy,x,y,value\n0,0,1,1,2\n1,0,1,1,2\n0,1,1,1,2\n5,1,1,1,2\n",
            "ix,iy,x,y,value\n0,0,1,1,zz\n",
        ] {
            assert!(matches!(field_from_csv(text, &mesh, p), Err(Error::Format { .. })));
        }
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
