//! Checkpoint format: `<stem>.json` manifest plus `<stem>.bin` holding every
//! tensor as little-endian `f32`, concatenated in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SugarError};
use crate::model::{InvariantGNN, ModelConfig, ParamStore};
use crate::tensor::Mat;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub byte_order: String,
    pub blob: String,
    pub total_bytes: usize,
    pub fingerprint: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

fn manifest_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `path` (the `.bin` blob) and its `.json` manifest.
pub fn save_checkpoint(model: &InvariantGNN, seed: u64, path: &Path) -> Result<()> {
    let params = model.params();
    let mut blob = Vec::with_capacity(params.num_scalars() * 4);
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.names().iter().zip(params.tensors()) {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: vec![t.rows, t.cols],
            offset: blob.len(),
        });
        for &v in &t.data {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dtype: "float32".into(),
        byte_order: "little".into(),
        blob: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        total_bytes: blob.len(),
        fingerprint: params.fingerprint(),
        seed,
        config: model.config().clone(),
        tensors,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| SugarError::io(dir, e))?;
    }
    fs::write(path, &blob).map_err(|e| SugarError::io(path, e))?;
    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&mpath, text).map_err(|e| SugarError::io(&mpath, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| SugarError::io(&mpath, e))?;
    serde_json::from_str(&text).map_err(|e| SugarError::CorruptManifest(e.to_string()))
}

fn read_params(path: &Path, manifest: &Manifest) -> Result<ParamStore> {
    if manifest.format_version != FORMAT_VERSION || manifest.dtype != "float32" || manifest.byte_order != "little" {
        return Err(SugarError::CorruptManifest(format!(
            "unsupported format v{} {} {}",
            manifest.format_version, manifest.dtype, manifest.byte_order
        )));
    }
    let blob = fs::read(path).map_err(|e| SugarError::io(path, e))?;
    if blob.len() != manifest.total_bytes {
        return Err(SugarError::CorruptManifest(format!(
            "blob has {} bytes, manifest says {}",
            blob.len(),
            manifest.total_bytes
        )));
    }
    let mut entries = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        let [rows, cols] = t.shape[..] else {
            return Err(SugarError::CorruptManifest(format!("tensor `{}` is not 2-D", t.name)));
        };
        let end = t.offset + rows * cols * 4;
        if end > blob.len() {
            return Err(SugarError::CorruptManifest(format!(
                "tensor `{}` overruns the blob",
                t.name
            )));
        }
        let data = blob[t.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        entries.push((t.name.clone(), Mat::from_vec(rows, cols, data)));
    }
    let params = ParamStore::new(entries);
    if params.fingerprint() != manifest.fingerprint {
        return Err(SugarError::CorruptManifest("fingerprint does not match tensors".into()));
    }
    Ok(params)
}

/// Loads a checkpoint using the configuration recorded in its manifest.
pub fn load_checkpoint(path: &Path) -> Result<InvariantGNN> {
    let manifest = read_manifest(path)?;
    let params = read_params(path, &manifest)?;
    InvariantGNN::from_params(manifest.config, params)
}

/// Loads a checkpoint into an expected architecture; any disagreement in
/// tensor names or shapes is a shape-mismatch error.
pub fn load_checkpoint_into(path: &Path, config: &ModelConfig) -> Result<InvariantGNN> {
    let manifest = read_manifest(path)?;
    let params = read_params(path, &manifest)?;
    InvariantGNN::from_params(config.clone(), params)
}

/// Checkpoint paths `model_{i}.bin` in `dir`, sorted by index.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| SugarError::io(dir, e))? {
        let path = entry.map_err(|e| SugarError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(idx) = name.strip_prefix("model_").and_then(|s| s.strip_suffix(".bin")) {
            if let Ok(i) = idx.parse::<usize>() {
                found.push((i, path));
            }
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_shared;

    fn cfg() -> ModelConfig {
        ModelConfig {
            hidden_dim: 6,
            num_layers: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = InvariantGNN::new(cfg(), 9).unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        save_checkpoint(&m, 9, &a).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        save_checkpoint(&loaded, 9, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let ma = fs::read_to_string(a.with_extension("json")).unwrap();
        let mb = fs::read_to_string(b.with_extension("json")).unwrap();
        assert_eq!(ma.replace("a.bin", "b.bin"), mb);
        let mut rounded = m.params().clone();
        rounded.round_to_f32();
        assert_eq!(loaded.params(), &rounded);
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&InvariantGNN::new(cfg(), 1).unwrap(), 1, &path).unwrap();
        let other = ModelConfig { hidden_dim: 7, ..cfg() };
        assert!(matches!(
            load_checkpoint_into(&path, &other),
            Err(SugarError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn shared_init_fingerprints_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let models = init_shared(3, &cfg(), 5).unwrap();
        let mut prints = Vec::new();
        for (i, m) in models.iter().enumerate() {
            let p = dir.path().join(format!("model_{i}.bin"));
            save_checkpoint(m, 5, &p).unwrap();
            prints.push(load_checkpoint(&p).unwrap().params().fingerprint());
        }
        assert!(prints.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(list_checkpoints(dir.path()).unwrap().len(), 3);
    }

    #[test]
    fn corrupt_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&InvariantGNN::new(cfg(), 1).unwrap(), 1, &path).unwrap();
        fs::write(path.with_extension("json"), "{not json").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(SugarError::CorruptManifest(_))));

        save_checkpoint(&InvariantGNN::new(cfg(), 1).unwrap(), 1, &path).unwrap();
        let mut blob = fs::read(&path).unwrap();
        blob.truncate(blob.len() - 4);
        fs::write(&path, blob).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(SugarError::CorruptManifest(_))));
    }
}
