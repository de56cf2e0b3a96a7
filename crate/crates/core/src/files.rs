//! Reading documents and store layouts from disk.
//!
//! A store path is either a single document file or a directory. A directory
//! holding `store.list` loads the files named there (`tag=path` or `path`
//! per line, `#` comments, paths relative to the directory); otherwise every
//! `.provn`, `.xml` and `.json` file in it is loaded, tagged by file stem.

use std::path::{Path, PathBuf};

use crate::codecs::{parse, Format};
use crate::error::Result;
use crate::model::Document;

pub const STORE_MANIFEST: &str = "store.list";

/// Parses a document file, choosing the codec from the extension and
/// falling back to sniffing the content.
pub fn read_document(path: impl AsRef<Path>) -> Result<Document> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let format = Format::from_path(path).unwrap_or_else(|| Format::sniff(&text));
    parse(format, &text)
}

/// Tag derived from a file name: the stem before the first dot.
pub fn tag_for(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("source");
    name.split('.').next().unwrap_or(name).to_string()
}

/// `tag=path` or a bare path.
pub fn parse_source_spec(spec: &str) -> (Option<String>, PathBuf) {
    match spec.split_once('=') {
        Some((tag, path)) if !tag.is_empty() && !tag.contains('/') => (Some(tag.to_string()), PathBuf::from(path)),
        _ => (None, PathBuf::from(spec)),
    }
}

/// Expands a store path into (tag, file) pairs in a stable order.
pub fn store_sources(spec: &str) -> Result<Vec<(String, PathBuf)>> {
    let (tag, path) = parse_source_spec(spec);
    if !path.is_dir() {
        let tag = tag.unwrap_or_else(|| tag_for(&path));
        return Ok(vec![(tag, path)]);
    }
    let manifest = path.join(STORE_MANIFEST);
    let mut out = Vec::new();
    if manifest.is_file() {
        for line in std::fs::read_to_string(&manifest)?.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (tag, file) = parse_source_spec(line);
            let file = path.join(file);
            out.push((tag.unwrap_or_else(|| tag_for(&file)), file));
        }
        return Ok(out);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && Format::from_path(p).is_some())
        .collect();
    files.sort();
    for file in files {
        out.push((tag_for(&file), file));
    }
    Ok(out)
}
