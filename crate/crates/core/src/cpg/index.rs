//! Repository-wide map from function names to definition sites.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{parse_translation_unit, CpgError, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionLocation {
    /// Path relative to the repository root, `/`-separated.
    pub file: String,
    pub id: NodeId,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct FunctionIndex {
    root: PathBuf,
    entries: IndexMap<String, Vec<FunctionLocation>>,
    files: Vec<String>,
    skipped: Vec<SkippedFile>,
}

impl FunctionIndex {
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// All definition sites of `name`, in file order.
    pub fn lookup(&self, name: &str) -> &[FunctionLocation] {
        self.entries.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_defined_in(&self, name: &str, file: &str) -> bool {
        self.lookup(name).iter().any(|l| l.file == file)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Files that parsed successfully.
    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn skipped(&self) -> &[SkippedFile] {
        &self.skipped
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn absolute(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Parses every `.c`/`.h` file under `root` and indexes its function definitions.
pub fn build_function_index(root: &Path) -> Result<FunctionIndex, CpgError> {
    let meta = std::fs::metadata(root).map_err(|source| CpgError::Io {
        path: root.display().to_string(),
        source,
    })?;
    if !meta.is_dir() {
        return Err(CpgError::Io {
            path: root.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "not a directory"),
        });
    }
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CpgError::Io {
            path: root.display().to_string(),
            source: e
                .into_io_error()
                .unwrap_or_else(|| std::io::Error::other("walk failed")),
        })?;
        let p = entry.path();
        if entry.file_type().is_file()
            && matches!(p.extension().and_then(|e| e.to_str()), Some("c") | Some("h"))
        {
            paths.push(p.to_path_buf());
        }
    }

    let parsed: Vec<(String, Result<Vec<(String, NodeId, u32)>, String>)> = paths
        .par_iter()
        .map(|p| {
            let rel = relative(root, p);
            let result = std::fs::read(p)
                .map_err(|e| e.to_string())
                .and_then(|bytes| String::from_utf8(bytes).map_err(|e| e.to_string()))
                .and_then(|text| parse_translation_unit(&text, &rel).map_err(|e| e.to_string()))
                .map(|cpg| {
                    cpg.nodes()
                        .iter()
                        .filter(|n| n.kind == super::NodeKind::FunctionDef)
                        .map(|n| (n.name.clone().unwrap_or_default(), n.id, n.line))
                        .collect()
                });
            (rel, result)
        })
        .collect();

    let mut index = FunctionIndex {
        root: root.to_path_buf(),
        ..Default::default()
    };
    for (file, result) in parsed {
        match result {
            Ok(defs) => {
                for (name, id, line) in defs {
                    index.entries.entry(name).or_default().push(FunctionLocation {
                        file: file.clone(),
                        id,
                        line,
                    });
                }
                index.files.push(file);
            }
            Err(reason) => {
                tracing::warn!(file = %file, %reason, "skipping unparseable file");
                index.skipped.push(SkippedFile { file, reason });
            }
        }
    }
    Ok(index)
}
