//! Field persistence: raw little-endian f64 node values in row-major order
//! with extension `.f64`, plus a UTF-8 `key=value` sidecar (same path with
//! `.hdr` appended) carrying dim, points per axis, half width and the
//! quantity name.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::scalar::Real;

fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Write a field as `<path>` (raw f64) plus `<path>.hdr`.
pub fn write_field<T: Real>(path: &Path, field: &ScalarField<T>, quantity: &str) -> Result<()> {
    let g = field.grid();
    let mut bytes = Vec::with_capacity(8 * g.node_count());
    for &v in field.values() {
        bytes.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    fs::write(path, bytes)?;
    let header = format!(
        "dim={}\nn={}\nhalf_width={:.17e}\nquantity={}\n",
        g.dim(),
        g.points_per_axis(),
        g.half_width().to_f64_lossy(),
        quantity
    );
    fs::write(sidecar_path(path), header)?;
    Ok(())
}

/// Read a field written by [`write_field`]; returns the field and its
/// quantity name.
pub fn read_field<T: Real>(path: &Path) -> Result<(ScalarField<T>, String)> {
    let header = fs::read_to_string(sidecar_path(path))?;
    let mut dim = None;
    let mut n = None;
    let mut half_width = None;
    let mut quantity = String::new();
    for line in header.lines() {
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::FieldFile(format!("malformed header line: {line}")));
        };
        match k {
            "dim" => dim = Some(v.parse::<usize>().map_err(|e| bad(k, &e))?),
            "n" => n = Some(v.parse::<usize>().map_err(|e| bad(k, &e))?),
            "half_width" => half_width = Some(v.parse::<f64>().map_err(|e| bad(k, &e))?),
            "quantity" => quantity = v.to_string(),
            other => return Err(Error::FieldFile(format!("unknown header key: {other}"))),
        }
    }
    let (Some(dim), Some(n), Some(half_width)) = (dim, n, half_width) else {
        return Err(Error::FieldFile("header missing dim/n/half_width".into()));
    };
    let grid = GridSpec::new(dim, T::of(half_width), n)?;
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * grid.node_count() {
        return Err(Error::FieldFile(format!(
            "expected {} bytes, found {}",
            8 * grid.node_count(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok((ScalarField::from_values(grid, values)?, quantity))
}

fn bad(key: &str, err: &dyn std::fmt::Display) -> Error {
    Error::FieldFile(format!("bad value for {key}: {err}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = std::env::temp_dir().join("mfglab_io_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.f64");
        let g = GridSpec::new(2, 5.0, 17).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] * 1.7 + x[1]).sin() * 1e-7 + x[0]);
        write_field(&path, &f, "density").unwrap();
        let (f2, q) = read_field::<f64>(&path).unwrap();
        assert_eq!(q, "density");
        assert_eq!(f.values(), f2.values());
        assert_eq!(f.grid(), f2.grid());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn size_mismatch_rejected() {
        let dir = std::env::temp_dir().join("mfglab_io_test2");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.f64");
        let g = GridSpec::new(1, 1.0, 16).unwrap();
        write_field(&path, &ScalarField::constant(g, 1.0), "x").unwrap();
        fs::write(&path, [0u8; 24]).unwrap();
        assert!(read_field::<f64>(&path).is_err());
        fs::remove_dir_all(&dir).ok();
    }
}
