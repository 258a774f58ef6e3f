//! Relative path handling shared by boundary checks and evidence grouping.

/// Strict form used for artifact writes: relative, `/`-separated, no `.`/`..`
/// or empty components. Returns `None` when the path is not admissible.
pub fn strict_relative(path: &str) -> Option<String> {
    if path.is_empty() || path.starts_with('/') || path.contains('\\') || path.contains('\0') {
        return None;
    }
    let mut parts = Vec::new();
    for part in path.split('/') {
        match part {
            "" | "." | ".." => return None,
            p if p.contains(':') => return None,
            p => parts.push(p),
        }
    }
    Some(parts.join("/"))
}

/// Lenient normalization for evidence paths: `\` becomes `/`, and leading
/// `./`, duplicate separators and `.` components are dropped.
pub fn normalize_evidence(path: &str) -> String {
    let unified = path.replace('\\', "/");
    unified
        .split('/')
        .filter(|p| !p.is_empty() && *p != ".")
        .collect::<Vec<_>>()
        .join("/")
}
