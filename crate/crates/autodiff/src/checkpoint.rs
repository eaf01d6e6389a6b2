//! Flat binary checkpoint: `<path>` holds little-endian `f64` values back to
//! back, `<path>.manifest` lists `name<TAB>shape<TAB>offset<TAB>count` with
//! the byte offset of each array.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{AutodiffError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &str = "# rabsa-checkpoint v1";

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".manifest");
    PathBuf::from(p)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let mut manifest = String::from(MAGIC);
    manifest.push('\n');
    let mut bytes = Vec::with_capacity(store.total_len() * 8);
    for (_, name, value) in store.iter() {
        if name.contains(['\t', '\n']) {
            return Err(AutodiffError::Checkpoint(format!(
                "bad parameter name {name:?}"
            )));
        }
        let shape: Vec<String> = value.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!(
            "{name}\t{}\t{}\t{}\n",
            shape.join(","),
            bytes.len(),
            value.numel()
        ));
        for v in value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&bytes)?;
    fs::write(manifest_path(path), manifest)?;
    Ok(())
}

/// Read every array listed in the manifest, in manifest order.
pub fn load(path: &Path) -> Result<ParamStore> {
    let manifest = fs::read_to_string(manifest_path(path))?;
    let bytes = fs::read(path)?;
    let bad =
        |line: usize, msg: &str| AutodiffError::Checkpoint(format!("manifest line {line}: {msg}"));
    let mut store = ParamStore::new();
    for (lineno, line) in manifest.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [name, shape, offset, count] = cols.as_slice() else {
            return Err(bad(lineno + 1, "expected 4 columns"));
        };
        let shape: Vec<usize> = if shape.is_empty() {
            Vec::new()
        } else {
            shape
                .split(',')
                .map(|s| s.parse().map_err(|_| bad(lineno + 1, "bad shape")))
                .collect::<Result<_>>()?
        };
        let offset: usize = offset.parse().map_err(|_| bad(lineno + 1, "bad offset"))?;
        let count: usize = count.parse().map_err(|_| bad(lineno + 1, "bad count"))?;
        let end = offset + count * 8;
        if end > bytes.len() {
            return Err(bad(lineno + 1, "array runs past end of data file"));
        }
        let data = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.add(*name, Tensor::new(shape, data)?)?;
    }
    Ok(store)
}

/// Overwrite the values of `store` from a checkpoint; names and shapes must
/// match.
pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<()> {
    let loaded = load(path)?;
    if loaded.len() != store.len() {
        return Err(AutodiffError::Checkpoint(format!(
            "checkpoint has {} arrays, model expects {}",
            loaded.len(),
            store.len()
        )));
    }
    for (_, name, value) in loaded.iter() {
        let id = store.id(name)?;
        store.set(id, value.clone())?;
    }
    Ok(())
}
