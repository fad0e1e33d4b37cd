//! Flat binary checkpoint format.
//!
//! Layout (little-endian throughout):
//!   magic "SPCK", format version u32, count u32, then per parameter:
//!   name length u16, name bytes, rank u8, dims u32 each, f32 payload.
//!
//! Policy checkpoints carry an additional length-prefixed key=value text
//! block in front of the same layout; see [`write_with_metadata`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::TensorError;

pub const MAGIC: &[u8; 4] = b"SPCK";
pub const VERSION: u32 = 1;

/// One named array in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl CheckpointEntry {
    pub fn from_tensor<F: Scalar>(name: &str, t: &crate::tensor::Tensor<F>) -> Self {
        CheckpointEntry {
            name: name.to_string(),
            dims: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
        }
    }
}

fn write_blob<W: Write>(w: &mut W, entries: &[CheckpointEntry]) -> Result<(), TensorError> {
    for e in entries {
        if e.data.iter().any(|v| v.is_nan()) {
            return Err(TensorError::Checkpoint(format!("parameter `{}` contains NaN", e.name)));
        }
        if e.name.len() > u16::MAX as usize {
            return Err(TensorError::Checkpoint(format!("name too long: `{}`", e.name)));
        }
        if e.dims.len() > u8::MAX as usize {
            return Err(TensorError::Checkpoint(format!("rank too high for `{}`", e.name)));
        }
        let n: usize = e.dims.iter().product();
        if n != e.data.len() {
            return Err(TensorError::Checkpoint(format!(
                "entry `{}`: dims {:?} do not cover {} values",
                e.name,
                e.dims,
                e.data.len()
            )));
        }
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        w.write_all(&(e.name.len() as u16).to_le_bytes())?;
        w.write_all(e.name.as_bytes())?;
        w.write_all(&[e.dims.len() as u8])?;
        for d in &e.dims {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in &e.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_blob<R: Read>(r: &mut R) -> Result<Vec<CheckpointEntry>, TensorError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint(format!("bad magic {:?}", magic)));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| TensorError::Checkpoint("non-utf8 parameter name".into()))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            dims.push(read_u32(r)? as usize);
        }
        let n: usize = dims.iter().product();
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        entries.push(CheckpointEntry { name, dims, data });
    }
    Ok(entries)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TensorError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, TensorError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub fn write_entries(path: &Path, entries: &[CheckpointEntry]) -> Result<(), TensorError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_blob(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

pub fn read_entries(path: &Path) -> Result<Vec<CheckpointEntry>, TensorError> {
    let mut r = BufReader::new(File::open(path)?);
    read_blob(&mut r)
}

/// Checkpoint with a length-prefixed text header in front of the blob.
pub fn write_with_metadata(
    path: &Path,
    metadata: &str,
    entries: &[CheckpointEntry],
) -> Result<(), TensorError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(metadata.len() as u32).to_le_bytes())?;
    w.write_all(metadata.as_bytes())?;
    write_blob(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

pub fn read_with_metadata(path: &Path) -> Result<(String, Vec<CheckpointEntry>), TensorError> {
    let mut r = BufReader::new(File::open(path)?);
    let len = read_u32(&mut r)? as usize;
    let mut meta = vec![0u8; len];
    r.read_exact(&mut meta)?;
    let metadata = String::from_utf8(meta)
        .map_err(|_| TensorError::Checkpoint("non-utf8 metadata".into()))?;
    let entries = read_blob(&mut r)?;
    Ok((metadata, entries))
}

/// Serialize a parameter set in canonical order.
pub fn entries_from_params<F: Scalar>(params: &ParamSet<F>) -> Vec<CheckpointEntry> {
    params.iter().map(|(n, t)| CheckpointEntry::from_tensor(n, t)).collect()
}

/// Load entries into an existing parameter set by name. Every parameter must
/// be present with matching shape; unknown entry names are an error.
pub fn load_into_params<F: Scalar>(
    params: &ParamSet<F>,
    entries: &[CheckpointEntry],
) -> Result<(), TensorError> {
    for (name, tensor) in params.iter() {
        let e = entries
            .iter()
            .find(|e| &e.name == name)
            .ok_or_else(|| TensorError::Checkpoint(format!("missing parameter `{name}`")))?;
        if e.dims != tensor.shape() {
            return Err(TensorError::Checkpoint(format!(
                "parameter `{name}`: checkpoint shape {:?} vs model shape {:?}",
                e.dims,
                tensor.shape()
            )));
        }
        let data: Vec<F> = e.data.iter().map(|v| F::from_f64(*v as f64)).collect();
        tensor.set_data(&data);
    }
    let known: std::collections::HashSet<&str> = params.names().collect();
    if let Some(extra) = entries.iter().find(|e| !known.contains(e.name.as_str())) {
        return Err(TensorError::Checkpoint(format!("unknown entry `{}`", extra.name)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.spck");
        let entries = vec![
            CheckpointEntry { name: "a.w".into(), dims: vec![2, 3], data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5] },
            CheckpointEntry { name: "a.b".into(), dims: vec![3], data: vec![-0.5, 0.0, 0.25] },
        ];
        write_entries(&path, &entries).unwrap();
        let back = read_entries(&path).unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn metadata_header_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.spck");
        let entries =
            vec![CheckpointEntry { name: "x".into(), dims: vec![1], data: vec![7.0] }];
        write_with_metadata(&path, "k = v\nmode = slots\n", &entries).unwrap();
        let (meta, back) = read_with_metadata(&path).unwrap();
        assert_eq!(meta, "k = v\nmode = slots\n");
        assert_eq!(back, entries);
    }

    #[test]
    fn nan_parameter_is_rejected_on_save() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.spck");
        let entries =
            vec![CheckpointEntry { name: "x".into(), dims: vec![1], data: vec![f32::NAN] }];
        let err = write_entries(&path, &entries).unwrap_err();
        assert!(err.to_string().contains("NaN"));
    }

    #[test]
    fn exact_byte_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.spck");
        let entries =
            vec![CheckpointEntry { name: "ab".into(), dims: vec![2], data: vec![1.0, -2.0] }];
        write_entries(&path, &entries).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut expect = Vec::new();
        expect.extend_from_slice(b"SPCK");
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&1u32.to_le_bytes());
        expect.extend_from_slice(&2u16.to_le_bytes());
        expect.extend_from_slice(b"ab");
        expect.push(1u8);
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expect);
    }
}
