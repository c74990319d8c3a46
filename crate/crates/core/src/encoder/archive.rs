//! Weight archive: a JSON manifest plus a blob of little-endian `f32` values.
//!
//! The manifest lists every tensor with its name, shape and byte offset into
//! the blob. Tensors are laid out back to back in manifest order, so the blob
//! size must equal four bytes times the total element count.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::weights::{
    EncoderConfig, EncoderWeights, HeadWeights, LayerWeights, Linear, NormWeights,
};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::scalar::Scalar;

pub const FORMAT: &str = "tokenprune-weights";
pub const VERSION: u32 = 1;
pub const DTYPE: &str = "f32-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    /// Blob file name, relative to the manifest's directory.
    pub blob: String,
    pub config: EncoderConfig,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    pub fn blob_len(&self) -> u64 {
        self.tensors.iter().map(|t| t.numel() as u64 * 4).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION || self.dtype != DTYPE {
            return Err(Error::Archive(format!(
                "unsupported archive {}/{}/{}",
                self.format, self.version, self.dtype
            )));
        }
        let mut expected = 0u64;
        for t in &self.tensors {
            if t.offset != expected {
                return Err(Error::Archive(format!(
                    "tensor `{}` at offset {} but previous tensors end at {expected}",
                    t.name, t.offset
                )));
            }
            expected += t.numel() as u64 * 4;
        }
        Ok(())
    }
}

enum Tensor<'a, T> {
    Matrix(&'a DenseMatrix<T>),
    Vector(&'a [T]),
}

impl<T: Scalar> Tensor<'_, T> {
    fn shape(&self) -> Vec<usize> {
        match self {
            Tensor::Matrix(m) => vec![m.rows(), m.cols()],
            Tensor::Vector(v) => vec![v.len()],
        }
    }

    fn values(&self) -> &[T] {
        match self {
            Tensor::Matrix(m) => m.as_slice(),
            Tensor::Vector(v) => v,
        }
    }
}

fn push_linear<'a, T>(out: &mut Vec<(String, Tensor<'a, T>)>, prefix: &str, lin: &'a Linear<T>) {
    out.push((format!("{prefix}.weight"), Tensor::Matrix(&lin.weight)));
    out.push((format!("{prefix}.bias"), Tensor::Vector(&lin.bias)));
}

fn push_norm<'a, T>(out: &mut Vec<(String, Tensor<'a, T>)>, prefix: &str, n: &'a NormWeights<T>) {
    out.push((format!("{prefix}.gain"), Tensor::Vector(&n.gain)));
    out.push((format!("{prefix}.bias"), Tensor::Vector(&n.bias)));
}

/// Tensors in canonical archive order.
fn named_tensors<T>(w: &EncoderWeights<T>) -> Vec<(String, Tensor<'_, T>)> {
    let mut out = vec![
        (
            "embeddings.token".to_string(),
            Tensor::Matrix(&w.token_embedding),
        ),
        (
            "embeddings.position".to_string(),
            Tensor::Matrix(&w.position_embedding),
        ),
    ];
    for (l, layer) in w.layers.iter().enumerate() {
        for (h, head) in layer.heads.iter().enumerate() {
            let p = format!("layers.{l}.attention.heads.{h}");
            push_linear(&mut out, &format!("{p}.query"), &head.query);
            push_linear(&mut out, &format!("{p}.key"), &head.key);
            push_linear(&mut out, &format!("{p}.value"), &head.value);
        }
        push_linear(
            &mut out,
            &format!("layers.{l}.attention.output"),
            &layer.output,
        );
        push_norm(
            &mut out,
            &format!("layers.{l}.attention.norm"),
            &layer.attention_norm,
        );
        push_linear(
            &mut out,
            &format!("layers.{l}.ffnn.linear1"),
            &layer.ffnn_in,
        );
        push_linear(
            &mut out,
            &format!("layers.{l}.ffnn.linear2"),
            &layer.ffnn_out,
        );
        push_norm(&mut out, &format!("layers.{l}.ffnn.norm"), &layer.ffnn_norm);
    }
    push_linear(&mut out, "classifier", &w.classifier);
    out
}

/// Blob path next to `manifest_path`: same stem, `.bin` extension.
pub fn default_blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Writes `manifest_path` and its companion blob.
pub fn save_weights<T: Scalar>(
    weights: &EncoderWeights<T>,
    manifest_path: &Path,
) -> Result<Manifest> {
    weights.check()?;
    let blob_path = default_blob_path(manifest_path);
    let blob_name = blob_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Archive(format!("bad manifest path {}", manifest_path.display())))?
        .to_string();

    let mut tensors = Vec::new();
    let mut blob = Vec::new();
    for (name, tensor) in named_tensors(weights) {
        tensors.push(TensorEntry {
            name,
            shape: tensor.shape(),
            offset: blob.len() as u64,
        });
        for &v in tensor.values() {
            blob.extend_from_slice(&v.to_f32_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dtype: DTYPE.into(),
        blob: blob_name,
        config: weights.config,
        tensors,
    };
    fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}

pub fn load_weights<T: Scalar>(manifest_path: &Path) -> Result<EncoderWeights<T>> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    manifest.validate()?;
    let blob_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.blob);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    decode(&manifest, &blob)
}

/// Builds weights from a parsed manifest and its blob bytes.
pub fn decode<T: Scalar>(manifest: &Manifest, blob: &[u8]) -> Result<EncoderWeights<T>> {
    manifest.validate()?;
    if blob.len() as u64 != manifest.blob_len() {
        return Err(Error::Archive(format!(
            "blob holds {} bytes, manifest describes {}",
            blob.len(),
            manifest.blob_len()
        )));
    }
    let mut tensors: HashMap<&str, (&TensorEntry, Vec<T>)> = HashMap::new();
    for t in &manifest.tensors {
        let start = t.offset as usize;
        let bytes = &blob[start..start + t.numel() * 4];
        let values = bytes
            .chunks_exact(4)
            .map(|c| T::of_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        if tensors.insert(t.name.as_str(), (t, values)).is_some() {
            return Err(Error::Archive(format!("duplicate tensor `{}`", t.name)));
        }
    }

    let mut template = EncoderWeights::<T>::zeros(manifest.config)?;
    let mut take = |name: &str, want: Vec<usize>| -> Result<Vec<T>> {
        let (entry, values) = tensors
            .remove(name)
            .ok_or_else(|| Error::Archive(format!("missing tensor `{name}`")))?;
        if entry.shape != want {
            return Err(Error::Archive(format!(
                "tensor `{name}` has shape {:?}, expected {want:?}",
                entry.shape
            )));
        }
        Ok(values)
    };
    let expected: Vec<(String, Vec<usize>)> = named_tensors(&template)
        .into_iter()
        .map(|(n, t)| (n, t.shape()))
        .collect();
    let mut filled = Vec::with_capacity(expected.len());
    for (name, shape) in expected {
        filled.push(take(&name, shape)?);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Archive(format!("unexpected tensor `{extra}`")));
    }

    let mut it = filled.into_iter();
    let mut next_matrix = |m: &mut DenseMatrix<T>| -> Result<()> {
        let v = it.next().expect("one value set per tensor");
        *m = DenseMatrix::from_vec(m.rows(), m.cols(), v)?;
        Ok(())
    };
    fill_in_order(&mut template, &mut next_matrix)?;
    template.check()?;
    Ok(template)
}

/// Visits every tensor of `w` mutably in canonical order, replacing its values.
fn fill_in_order<T: Scalar>(
    w: &mut EncoderWeights<T>,
    next: &mut dyn FnMut(&mut DenseMatrix<T>) -> Result<()>,
) -> Result<()> {
    fn vector<T: Scalar>(
        v: &mut Vec<T>,
        next: &mut dyn FnMut(&mut DenseMatrix<T>) -> Result<()>,
    ) -> Result<()> {
        let mut m = DenseMatrix::from_vec(1, v.len(), std::mem::take(v))?;
        next(&mut m)?;
        *v = m.into_vec();
        Ok(())
    }
    fn linear<T: Scalar>(
        l: &mut Linear<T>,
        next: &mut dyn FnMut(&mut DenseMatrix<T>) -> Result<()>,
    ) -> Result<()> {
        next(&mut l.weight)?;
        vector(&mut l.bias, next)
    }
    fn norm<T: Scalar>(
        n: &mut NormWeights<T>,
        next: &mut dyn FnMut(&mut DenseMatrix<T>) -> Result<()>,
    ) -> Result<()> {
        vector(&mut n.gain, next)?;
        vector(&mut n.bias, next)
    }

    next(&mut w.token_embedding)?;
    next(&mut w.position_embedding)?;
    for layer in &mut w.layers {
        for HeadWeights { query, key, value } in &mut layer.heads {
            linear(query, next)?;
            linear(key, next)?;
            linear(value, next)?;
        }
        let LayerWeights {
            output,
            attention_norm,
            ffnn_in,
            ffnn_out,
            ffnn_norm,
            ..
        } = layer;
        linear(output, next)?;
        norm(attention_norm, next)?;
        linear(ffnn_in, next)?;
        linear(ffnn_out, next)?;
        norm(ffnn_norm, next)?;
    }
    linear(&mut w.classifier, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flops::ModelDims;

    fn small_config() -> EncoderConfig {
        let dims = ModelDims::new(8, 2, 32, 2, 6).unwrap();
        EncoderConfig::new(dims, 11, 3).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let w = EncoderWeights::<f32>::seeded(small_config(), 9).unwrap();
        let manifest = save_weights(&w, &path).unwrap();
        assert_eq!(manifest.blob, "w.bin");
        assert_eq!(
            fs::metadata(dir.path().join("w.bin")).unwrap().len(),
            manifest.blob_len()
        );
        let back: EncoderWeights<f32> = load_weights(&path).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn rejects_truncated_blob() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let w = EncoderWeights::<f32>::seeded(small_config(), 9).unwrap();
        save_weights(&w, &path).unwrap();
        let blob = dir.path().join("w.bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_weights::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("blob holds"), "{err}");
    }

    #[test]
    fn rejects_bad_manifest() {
        let w = EncoderWeights::<f32>::seeded(small_config(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let manifest = save_weights(&w, &path).unwrap();
        let blob = fs::read(dir.path().join("w.bin")).unwrap();

        let mut m = manifest.clone();
        m.tensors[1].offset += 4;
        assert!(decode::<f32>(&m, &blob).is_err());

        let mut m = manifest.clone();
        m.tensors[0].shape = vec![8, 11];
        let err = decode::<f32>(&m, &blob).expect_err("transposed shape must be rejected");
        assert!(err.to_string().contains("shape"), "{err}");

        let mut m = manifest.clone();
        m.tensors[0].name = "embeddings.other".into();
        assert!(decode::<f32>(&m, &blob).is_err());

        let mut m = manifest;
        m.dtype = "f16".into();
        assert!(decode::<f32>(&m, &blob).is_err());
    }

    #[test]
    fn f64_weights_are_stored_as_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let w = EncoderWeights::<f64>::seeded(small_config(), 2).unwrap();
        save_weights(&w, &path).unwrap();
        let back: EncoderWeights<f64> = load_weights(&path).unwrap();
        let diff = back
            .token_embedding
            .max_abs_diff(&w.token_embedding)
            .unwrap();
        assert!(diff < 1e-7);
    }
}
