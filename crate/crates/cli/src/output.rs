use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Tracks files written by a command and removes them unless committed.
pub struct OutputDir {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        let mut g = Self {
            files: Vec::new(),
            dirs: Vec::new(),
            committed: false,
        };
        g.subdir(dir)?;
        Ok(g)
    }

    pub fn for_file(path: &Path) -> Result<Self> {
        match path.parent().filter(|p| !p.as_os_str().is_empty()) {
            Some(p) => Self::create(p),
            None => Ok(Self {
                files: Vec::new(),
                dirs: Vec::new(),
                committed: false,
            }),
        }
    }

    pub fn subdir(&mut self, dir: &Path) -> Result<PathBuf> {
        if !dir.exists() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(dir.to_path_buf())
    }

    /// Register `path` as an output and hand it back.
    pub fn file(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in self.files.iter().rev() {
            let _ = std::fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = std::fs::remove_dir(d);
        }
    }
}
