//! Caption embeddings and the projection that turns them into the
//! conditioning row seen by cross-attention.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CondError;
use crate::params::{Layout, ModelParams};
use crate::tensor::{Mat, Scalar};
use crate::tape::gelu;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HashedBow,
    FileLookup,
    Null,
}

/// How captions become raw vectors of width `dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub dim: usize,
    /// Embedding file for `file_lookup`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl ProviderSpec {
    pub fn hashed_bow(dim: usize) -> Self {
        ProviderSpec { kind: ProviderKind::HashedBow, dim, path: None }
    }
}

/// A ready-to-use caption embedder. Immutable once built.
#[derive(Debug, Clone)]
pub struct Provider {
    spec: ProviderSpec,
    table: BTreeMap<String, Vec<f32>>,
}

impl Provider {
    pub fn new(spec: &ProviderSpec) -> Result<Self, CondError> {
        if spec.dim == 0 {
            return Err(CondError::InvalidSpec("dim must be positive".into()));
        }
        let table = match spec.kind {
            ProviderKind::FileLookup => {
                let path = spec
                    .path
                    .as_deref()
                    .ok_or_else(|| CondError::InvalidSpec("file_lookup needs a path".into()))?;
                load_table(path, spec.dim)?
            }
            _ => BTreeMap::new(),
        };
        Ok(Provider { spec: spec.clone(), table })
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    pub fn embed(&self, caption: &str) -> Result<Vec<f32>, CondError> {
        match self.spec.kind {
            ProviderKind::HashedBow => Ok(hashed_bow(caption, self.spec.dim)),
            ProviderKind::Null => Ok(vec![0.0; self.spec.dim]),
            ProviderKind::FileLookup => {
                self.table.get(caption).cloned().ok_or_else(|| CondError::UnknownCaption(caption.to_string()))
            }
        }
    }
}

/// One-shot convenience over [`Provider`].
pub fn embed_caption(spec: &ProviderSpec, caption: &str) -> Result<Vec<f32>, CondError> {
    Provider::new(spec)?.embed(caption)
}

fn load_table(path: &Path, dim: usize) -> Result<BTreeMap<String, Vec<f32>>, CondError> {
    let text = std::fs::read_to_string(path).map_err(|source| CondError::Io { path: path.to_path_buf(), source })?;
    let table: BTreeMap<String, Vec<f32>> =
        serde_json::from_str(&text).map_err(|source| CondError::Json { path: path.to_path_buf(), source })?;
    for v in table.values() {
        if v.len() != dim {
            return Err(CondError::DimMismatch { expected: dim, got: v.len() });
        }
    }
    Ok(table)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lower-cased bag of words hashed into `dim` buckets, L2-normalized.
pub fn hashed_bow(caption: &str, dim: usize) -> Vec<f32> {
    let mut v = vec![0.0f64; dim];
    let lower = caption.to_lowercase();
    for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        v[(fnv1a64(word.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|&x| if norm > 0.0 { (x / norm) as f32 } else { 0.0 }).collect()
}

/// What the decoder cross-attends to.
#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    /// A raw caption embedding, projected by the conditioning MLP.
    Raw(Vec<f32>),
    /// The learned unconditional token.
    Null,
}

/// Conditioning rows of width `d_model`; always at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct CondEmbedding<T> {
    pub rows: Mat<T>,
}

/// Runs the conditioning MLP (`d_cond_in → d → d`, GELU between) on a raw vector,
/// or returns the null token.
pub fn project_condition<T: Scalar>(
    params: &ModelParams<T>,
    layout: &Layout,
    cond: &Cond,
) -> Result<CondEmbedding<T>, CondError> {
    let p = &params.tensors;
    let rows = match cond {
        Cond::Null => p[layout.null_token].clone(),
        Cond::Raw(raw) => {
            let w1 = &p[layout.cond_w1];
            if raw.len() != w1.rows {
                return Err(CondError::DimMismatch { expected: w1.rows, got: raw.len() });
            }
            let x: Vec<T> = raw.iter().map(|&v| T::from_f64(v as f64)).collect();
            let h: Vec<T> = vec_mat(&x, w1, &p[layout.cond_b1].data).into_iter().map(gelu).collect();
            let out = vec_mat(&h, &p[layout.cond_w2], &p[layout.cond_b2].data);
            Mat::from_vec(1, out.len(), out)
        }
    };
    Ok(CondEmbedding { rows })
}

/// `x W + b` for a single row, accumulated in a fixed order.
pub(crate) fn vec_mat<T: Scalar>(x: &[T], w: &Mat<T>, b: &[T]) -> Vec<T> {
    let mut out = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == T::ZERO {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(w.row(i)) {
            *o += xi * wv;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_bow_properties() {
        let a = hashed_bow("A long skirt", 64);
        assert_eq!(a, hashed_bow("a LONG, skirt!", 64));
        assert_ne!(a, hashed_bow("short dress", 64));
        assert!((a.iter().map(|v| v * v).sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(hashed_bow("", 64).iter().all(|&v| v == 0.0));
        assert!(hashed_bow(" ,.; ", 64).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn null_provider_is_zero() {
        let spec = ProviderSpec { kind: ProviderKind::Null, dim: 5, path: None };
        assert_eq!(embed_caption(&spec, "anything").unwrap(), vec![0.0; 5]);
        assert!(Provider::new(&ProviderSpec { dim: 0, ..spec }).is_err());
    }

    #[test]
    fn file_lookup_hits_and_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        std::fs::write(&path, r#"{"a tee": [1.0, 0.5, -2.0]}"#).unwrap();
        let spec = ProviderSpec { kind: ProviderKind::FileLookup, dim: 3, path: Some(path.clone()) };
        let p = Provider::new(&spec).unwrap();
        assert_eq!(p.embed("a tee").unwrap(), vec![1.0, 0.5, -2.0]);
        assert!(matches!(p.embed("a skirt"), Err(CondError::UnknownCaption(_))));
        let wrong = ProviderSpec { dim: 4, ..spec };
        assert!(matches!(Provider::new(&wrong), Err(CondError::DimMismatch { .. })));
    }
}
