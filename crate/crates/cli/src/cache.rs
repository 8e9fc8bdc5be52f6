//! Content-addressed store for expensive intermediates.

use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// SHA-256 over labelled fields and file contents.
pub struct KeyBuilder {
    hasher: Sha256,
}

impl KeyBuilder {
    pub fn new(kind: &str) -> Self {
        let mut key = KeyBuilder { hasher: Sha256::new() };
        key.field("kind", kind);
        key
    }

    pub fn field(&mut self, name: &str, value: &str) -> &mut Self {
        for part in [name, value] {
            self.hasher.update((part.len() as u64).to_le_bytes());
            self.hasher.update(part.as_bytes());
        }
        self
    }

    pub fn file(&mut self, name: &str, path: &Path) -> Result<&mut Self> {
        let mut file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let len = file.metadata()?.len();
        self.hasher.update((name.len() as u64).to_le_bytes());
        self.hasher.update(name.as_bytes());
        self.hasher.update(len.to_le_bytes());
        let mut buf = vec![0u8; 1 << 16];
        loop {
            let read = file.read(&mut buf)?;
            if read == 0 {
                break;
            }
            self.hasher.update(&buf[..read]);
        }
        Ok(self)
    }

    pub fn finish(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(KeyBuilder::new("file").file("content", path)?.finish())
}

/// Cache entries live as `<dir>/<key>/<name>`.
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into() }
    }

    fn entry(&self, key: &str, name: &str) -> PathBuf {
        self.dir.join(key).join(name)
    }

    /// Path of the cached file, if every listed name is present.
    pub fn lookup(&self, key: &str, names: &[&str]) -> Option<Vec<PathBuf>> {
        let paths: Vec<PathBuf> = names.iter().map(|n| self.entry(key, n)).collect();
        paths.iter().all(|p| p.is_file()).then_some(paths)
    }

    /// Copies `files` (name, source) into the entry for `key`.
    pub fn store(&self, key: &str, files: &[(&str, &Path)]) -> Result<()> {
        let entry = self.dir.join(key);
        fs::create_dir_all(&entry).with_context(|| format!("cannot create {}", entry.display()))?;
        for (name, src) in files {
            let dest = entry.join(name);
            let partial = entry.join(format!(".{name}.partial"));
            fs::copy(src, &partial)
                .and_then(|_| fs::rename(&partial, &dest))
                .with_context(|| format!("cannot cache {}", src.display()))?;
        }
        Ok(())
    }
}

/// Copies `src` to `dest` unless they are already the same file.
pub fn materialize(src: &Path, dest: &Path) -> io::Result<()> {
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::copy(src, dest).map(|_| ())
}
