//! Atomic artifact writing.
//!
//! Every artifact is first written to a temporary file in the destination
//! directory and then renamed into place, so a failed run never leaves a
//! partial artifact behind. JSONL artifacts carry the provenance header as
//! their first line (`{"provenance": {...}}`); single-document JSON
//! artifacts embed it under a top-level `"provenance"` key.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::provenance::Provenance;

/// Writes `bytes` to `path` via a temp file + rename in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("moving temp file into {}", path.display()))?;
    Ok(())
}

/// Appends one compact JSON value plus newline to `buf`.
pub fn push_json_line<T: Serialize + ?Sized>(buf: &mut Vec<u8>, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer(&mut *buf, value).context("serializing output record")?;
    buf.push(b'\n');
    Ok(())
}

/// Appends the `{"provenance": {...}}` header line to `buf`.
pub fn push_provenance_line(buf: &mut Vec<u8>, provenance: &Provenance) -> anyhow::Result<()> {
    push_json_line(buf, &serde_json::json!({ "provenance": provenance }))
}

/// Writes a JSONL artifact: provenance header first, one record per line.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    provenance: &Provenance,
    records: &[T],
) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    push_provenance_line(&mut buf, provenance)?;
    for record in records {
        push_json_line(&mut buf, record)?;
    }
    atomic_write(path, &buf)
}

/// Writes a single pretty-printed JSON document with the provenance header
/// embedded under a top-level `"provenance"` key. The root value must be an
/// object.
pub fn write_json_with_provenance(
    path: &Path,
    provenance: &Provenance,
    value: serde_json::Value,
) -> anyhow::Result<()> {
    let mut object = match value {
        serde_json::Value::Object(map) => map,
        other => anyhow::bail!("internal: JSON artifact root must be an object, got {other}"),
    };
    object.insert(
        "provenance".to_owned(),
        serde_json::to_value(provenance).context("serializing provenance")?,
    );
    let mut buf = serde_json::to_vec_pretty(&serde_json::Value::Object(object))
        .context("serializing output document")?;
    buf.push(b'\n');
    atomic_write(path, &buf)
}
