use std::io;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

/// Sorted list of regular files under a root, as `/`-separated relative paths.
/// Symlinks are not followed and `.git` directories are skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoSnapshot {
    root: PathBuf,
    files: Vec<String>,
}

impl RepoSnapshot {
    pub fn scan(root: &Path) -> io::Result<Self> {
        let mut files = Vec::new();
        let walker = WalkDir::new(root)
            .follow_links(false)
            .sort_by_file_name()
            .into_iter()
            .filter_entry(|e| e.depth() == 0 || e.file_name() != ".git");
        for entry in walker {
            let entry = entry.map_err(|e| io::Error::other(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(root).map_err(io::Error::other)?;
            let parts: Option<Vec<&str>> = rel.components().map(|c| c.as_os_str().to_str()).collect();
            if let Some(parts) = parts {
                files.push(parts.join("/"));
            }
        }
        files.sort();
        Ok(Self {
            root: root.to_path_buf(),
            files,
        })
    }

    pub fn empty(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn contains(&self, rel: &str) -> bool {
        self.files.binary_search_by(|f| f.as_str().cmp(rel)).is_ok()
    }

    pub fn absolute(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn matching<'a>(&'a self, set: &'a globset::GlobSet) -> impl Iterator<Item = &'a String> + 'a {
        self.files.iter().filter(move |f| set.is_match(f.as_str()))
    }
}

/// Reads a file as text. `Ok(None)` means the file is binary (NUL byte or not UTF-8).
pub fn read_text(path: &Path) -> io::Result<Option<String>> {
    let bytes = std::fs::read(path)?;
    if bytes.contains(&0) {
        return Ok(None);
    }
    Ok(String::from_utf8(bytes).ok())
}
