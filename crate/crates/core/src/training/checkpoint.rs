//! Checkpoint archive: a single safetensors file.
//!
//! | key                                  | dtype | contents                              |
//! |--------------------------------------|-------|---------------------------------------|
//! | `generator/<var>`                    | f32   | generator parameters                  |
//! | `discriminator/<var>`                | f32   | critic parameters                     |
//! | `optim/generator/m/<var>`            | f32   | Adam first moment                     |
//! | `optim/generator/v/<var>`            | f32   | Adam second moment                    |
//! | `optim/generator/t`                  | i64   | generator updates applied             |
//! | `optim/discriminator/{m,v}/<var>`    | f32   | as above, for the critic              |
//! | `optim/discriminator/t`              | i64   | critic updates applied                |
//! | `state/d_steps`                      | i64   | critic steps taken (= batches seen)   |
//! | `state/g_steps`                      | i64   | generator steps taken                 |
//! | `state/epoch`                        | i64   | epoch of the next batch               |
//! | `state/seed`                         | i64   | run seed                              |
//! | `meta/config`                        | u8    | TOML of the training config           |
//! | `meta/vocabulary`                    | u8    | attribute names, newline separated    |
//!
//! `<var>` is the variable path inside each network, e.g. `enc0.conv.weight`.
//! Every random draw of step `t` comes from a generator keyed by
//! `(seed, t)`, so `state/seed` and `state/d_steps` are the full RNG state.

use std::collections::HashMap;
use std::path::Path;

use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// Writes `entries` to `path` through a temporary file and a rename.
pub fn write_archive(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    Tensor::write_safetensors(entries, &tmp).map_err(|e| Error::Checkpoint(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<Archive> {
    let entries = Tensor::read_safetensors(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok(Archive { entries: entries.into_iter().collect() })
}

#[derive(Debug)]
pub struct Archive {
    entries: HashMap<String, Tensor>,
}

impl Archive {
    pub fn tensor(&self, key: &str) -> Result<&Tensor> {
        self.entries.get(key).ok_or_else(|| Error::Checkpoint(format!("missing key {key:?}")))
    }

    pub fn int(&self, key: &str) -> Result<i64> {
        let t = self.tensor(key)?;
        if t.kind() != Kind::Int64 || t.numel() != 1 {
            return Err(Error::Checkpoint(format!("{key:?} is not an i64 scalar")));
        }
        Ok(t.int64_value(&[]))
    }

    pub fn text(&self, key: &str) -> Result<String> {
        let bytes: Vec<u8> = self.tensor(key)?.try_into().map_err(|e| Error::Checkpoint(format!("{key:?}: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Checkpoint(format!("{key:?}: {e}")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }
}

pub(crate) fn int_entry(key: &str, v: i64) -> (String, Tensor) {
    (key.to_string(), Tensor::from_slice(&[v]).view([]))
}

pub(crate) fn text_entry(key: &str, text: &str) -> (String, Tensor) {
    (key.to_string(), Tensor::from_slice(text.as_bytes()))
}

/// Copies `values` into the live variables `vars`, matched by name.
pub(crate) fn restore(vars: &[(String, Tensor)], archive: &Archive, prefix: &str) -> Result<()> {
    for (name, var) in vars {
        let key = format!("{prefix}{name}");
        let src = archive.tensor(&key)?;
        if src.size() != var.size() {
            return Err(Error::Checkpoint(format!("{key:?} has shape {:?}, expected {:?}", src.size(), var.size())));
        }
        tch::no_grad(|| var.shallow_clone().copy_(&src.to_kind(var.kind())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.safetensors");
        let entries = vec![
            int_entry("state/d_steps", 42),
            text_entry("meta/config", "seed = 1\n"),
            ("generator/w".to_string(), Tensor::from_slice(&[1.0f32, 2.0]).view([1, 2])),
        ];
        write_archive(&path, &entries).unwrap();
        let a = read_archive(&path).unwrap();
        assert_eq!(a.int("state/d_steps").unwrap(), 42);
        assert_eq!(a.text("meta/config").unwrap(), "seed = 1\n");
        assert_eq!(a.tensor("generator/w").unwrap().size(), vec![1, 2]);
        assert!(matches!(a.tensor("nope"), Err(Error::Checkpoint(_))));
        assert!(matches!(read_archive(&dir.path().join("missing")), Err(Error::Checkpoint(_))));
    }
}
