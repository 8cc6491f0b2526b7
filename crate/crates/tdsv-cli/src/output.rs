//! Atomic output files and run manifests.

use std::io;
use std::path::{Path, PathBuf};

/// Writes `bytes` to `path` via a temp file in the same directory plus a
/// rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Manifest path for an output file: `<output>.manifest.tsv`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.tsv");
    output.with_file_name(name)
}

/// Echoes every effective parameter of a run next to its output.
pub fn write_manifest(output: &Path, entries: &[(String, String)]) -> io::Result<()> {
    let mut buf = Vec::new();
    for (key, value) in entries {
        buf.extend_from_slice(key.as_bytes());
        buf.push(b'\t');
        buf.extend_from_slice(value.as_bytes());
        buf.push(b'\n');
    }
    write_atomic(&manifest_path(output), &buf)
}
