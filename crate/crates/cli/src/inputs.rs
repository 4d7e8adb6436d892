use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use tplscan_core::extraction::{elf::elf_feature_set, load_manifest, ExtractOptions};
use tplscan_core::{BinaryFeatureSet, Provenance};

const ELF_MAGIC: &[u8; 4] = b"\x7fELF";

pub fn is_elf(path: &Path) -> Result<bool> {
    let mut head = [0u8; 4];
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(std::io::Read::read(&mut f, &mut head)? == 4 && &head == ELF_MAGIC)
}

/// Splits `libfoo-1.2.3.so` style names into library and version. The
/// version starts after the last `-` that is followed by a digit.
pub fn provenance_from_name(name: &str) -> Option<Provenance> {
    let cut = name
        .char_indices()
        .filter(|&(i, c)| c == '-' && name[i + 1..].starts_with(|d: char| d.is_ascii_digit()))
        .map(|(i, _)| i)
        .next_back()?;
    let library = &name[..cut];
    let rest = &name[cut + 1..];
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(rest.len());
    let version = rest[..end].trim_end_matches('.');
    (!library.is_empty() && !version.is_empty()).then(|| Provenance {
        library: library.to_string(),
        version: version.to_string(),
    })
}

/// Reads an ELF file or a JSON manifest.
pub fn read_feature_set(path: &Path, opts: &ExtractOptions) -> Result<BinaryFeatureSet> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if is_elf(path)? {
        let bytes = fs::read(path)?;
        let mut set = elf_feature_set(name.clone(), &bytes, opts)?;
        set.provenance = provenance_from_name(&name);
        Ok(set)
    } else {
        Ok(load_manifest(path, opts)?)
    }
}

/// Regular files directly under `dir`, sorted by name.
pub fn list_inputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug)]
pub enum Timed<T> {
    Done(T),
    TimedOut,
}

/// Runs `job` on its own thread and stops waiting after `limit`. A job that
/// overruns is abandoned, not interrupted.
pub fn with_timeout<T, F>(limit: Duration, job: F) -> Result<Timed<T>>
where
    T: Send + 'static,
    F: FnOnce() -> T + Send + 'static,
{
    let (tx, rx) = mpsc::channel();
    thread::Builder::new().name("tplscan-job".into()).spawn(move || {
        let _ = tx.send(job());
    })?;
    match rx.recv_timeout(limit) {
        Ok(v) => Ok(Timed::Done(v)),
        Err(mpsc::RecvTimeoutError::Timeout) => Ok(Timed::TimedOut),
        Err(mpsc::RecvTimeoutError::Disconnected) => bail!("worker thread panicked"),
    }
}
