//! Output files: a metadata comment line, then the body, written atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// A file to be written under the output directory.
pub struct OutputFile {
    pub name: String,
    pub body: Vec<u8>,
}

impl OutputFile {
    /// Renders the body with `write`, which receives a fresh buffer.
    pub fn render(
        name: impl Into<String>,
        write: impl FnOnce(&mut Vec<u8>) -> ordsae::Result<()>,
    ) -> Result<Self> {
        let name = name.into();
        let mut body = Vec::new();
        write(&mut body).with_context(|| format!("rendering {name}"))?;
        Ok(Self { name, body })
    }
}

/// Comment line identifying the run.
pub fn metadata_line(seed: u64, config_hash: &str) -> String {
    format!(
        "# ordsae {} seed={seed} config={config_hash}\n",
        env!("CARGO_PKG_VERSION")
    )
}

/// Writes every file through a temporary sibling and a rename, so a file
/// is either complete or absent. Nothing is written unless every body has
/// been rendered already.
pub fn write_all(dir: &Path, header: &str, files: &[OutputFile]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::with_capacity(files.len());
    for f in files {
        let path = dir.join(&f.name);
        let tmp = dir.join(format!(".{}.tmp", f.name));
        let result = (|| -> std::io::Result<()> {
            let mut out = std::fs::File::create(&tmp)?;
            out.write_all(header.as_bytes())?;
            out.write_all(&f.body)?;
            out.sync_all()?;
            std::fs::rename(&tmp, &path)
        })();
        if let Err(e) = result {
            let _ = std::fs::remove_file(&tmp);
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
        written.push(path);
    }
    Ok(written)
}
