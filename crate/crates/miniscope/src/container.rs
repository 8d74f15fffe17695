//! Codec for the MAPK v1 mini-app package container and a loader for plain
//! directory trees.
//!
//! Layout (all integers big-endian u32):
//! `0xBE | reserved=0 | index_len | body_len | 0xED | file_count |
//! file_count x { name_len | name | offset | size } | body`.
//!
//! `index_len` covers the bytes from the `file_count` field through the last
//! entry record. Offsets are absolute from byte 0 of the container.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const MAGIC: u8 = 0xBE;
pub const SEPARATOR: u8 = 0xED;
/// Fixed bytes before the index region: magic, reserved, index_len,
/// body_len, separator.
pub const HEADER_LEN: usize = 14;

#[derive(Debug, Error, PartialEq)]
pub enum ContainerError {
    #[error("bad magic or separator byte")]
    BadMagic,
    #[error("declared index length exceeds available bytes")]
    TruncatedIndex,
    #[error("entry {name:?} escapes the container bounds")]
    EntryOutOfBounds { name: String },
    #[error("duplicate entry name {0:?}")]
    DuplicateName(String),
    #[error("invalid entry path {0:?}")]
    InvalidPath(String),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("not a directory: {0}")]
    NotADirectory(PathBuf),
    #[error("unreadable file {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid entry path {0:?}")]
    InvalidPath(String),
}

/// One decoded file inside a package.
#[derive(Debug, Clone, PartialEq)]
pub struct PackageEntry {
    pub name: String,
    pub offset: u32,
    pub size: u32,
    pub content: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PackageSource {
    ContainerFile,
    DirectoryTree,
}

/// Decoded file tree of one mini-app package.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniAppPackage {
    /// App ID discovered in package metadata (`app.json`), if any.
    pub app_hint: Option<String>,
    pub entries: Vec<PackageEntry>,
    pub source: PackageSource,
}

impl MiniAppPackage {
    pub fn entry(&self, name: &str) -> Option<&PackageEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Scans `app.json` for an `appid` field and records it as the hint.
    fn discover_app_hint(&mut self) {
        if let Some(entry) = self.entry("app.json") {
            if let Ok(v) = serde_json::from_slice::<serde_json::Value>(&entry.content) {
                if let Some(id) = v.get("appid").and_then(|x| x.as_str()) {
                    self.app_hint = Some(id.to_string());
                }
            }
        }
    }
}

/// Entry names use '/' separators, are relative, and contain no ".." segment.
pub fn valid_entry_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('/')
        && !name.ends_with('/')
        && !name.contains('\\')
        && !name.contains("//")
        && name.split('/').all(|seg| !seg.is_empty() && seg != "..")
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Decodes a MAPK v1 container. Never reads outside the input byte range;
/// malformed input yields a typed error, never a panic.
pub fn unpack(bytes: &[u8]) -> Result<MiniAppPackage, ContainerError> {
    if bytes.len() < HEADER_LEN + 4 || bytes[0] != MAGIC || bytes[13] != SEPARATOR {
        return Err(ContainerError::BadMagic);
    }
    let index_len = read_u32(bytes, 5).ok_or(ContainerError::TruncatedIndex)? as usize;
    let body_len = read_u32(bytes, 9).ok_or(ContainerError::TruncatedIndex)? as usize;
    let index_end = HEADER_LEN
        .checked_add(index_len)
        .ok_or(ContainerError::TruncatedIndex)?;
    if index_len < 4 || index_end > bytes.len() {
        return Err(ContainerError::TruncatedIndex);
    }
    let file_count = read_u32(bytes, HEADER_LEN).ok_or(ContainerError::TruncatedIndex)? as usize;
    // Each record is at least 12 bytes, so an absurd count is truncation.
    if file_count > (index_len - 4) / 12 {
        return Err(ContainerError::TruncatedIndex);
    }

    let mut cursor = HEADER_LEN + 4;
    let mut entries = Vec::with_capacity(file_count);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..file_count {
        let name_len = read_u32(bytes, cursor).ok_or(ContainerError::TruncatedIndex)? as usize;
        cursor += 4;
        let name_end = cursor
            .checked_add(name_len)
            .ok_or(ContainerError::TruncatedIndex)?;
        if name_end + 8 > index_end {
            return Err(ContainerError::TruncatedIndex);
        }
        let name = std::str::from_utf8(&bytes[cursor..name_end])
            .map_err(|_| ContainerError::InvalidPath(format!("{:?}", &bytes[cursor..name_end])))?
            .to_string();
        if !valid_entry_name(&name) {
            return Err(ContainerError::InvalidPath(name));
        }
        cursor = name_end;
        let offset = read_u32(bytes, cursor).ok_or(ContainerError::TruncatedIndex)?;
        let size = read_u32(bytes, cursor + 4).ok_or(ContainerError::TruncatedIndex)?;
        cursor += 8;

        let start = offset as usize;
        let end = start
            .checked_add(size as usize)
            .ok_or(ContainerError::EntryOutOfBounds { name: name.clone() })?;
        if start < index_end || end > bytes.len() || end > index_end + body_len {
            return Err(ContainerError::EntryOutOfBounds { name });
        }
        if !seen.insert(name.clone()) {
            return Err(ContainerError::DuplicateName(name));
        }
        entries.push(PackageEntry {
            name,
            offset,
            size,
            content: bytes[start..end].to_vec(),
        });
    }

    let mut pkg = MiniAppPackage {
        app_hint: None,
        entries,
        source: PackageSource::ContainerFile,
    };
    pkg.discover_app_hint();
    Ok(pkg)
}

/// Encodes a file tree as a MAPK v1 container. Entries are laid out in the
/// map's (lexicographic) order; `unpack(pack(tree))` reproduces the tree.
pub fn pack(tree: &BTreeMap<String, Vec<u8>>) -> Result<Vec<u8>, ContainerError> {
    for name in tree.keys() {
        if !valid_entry_name(name) {
            return Err(ContainerError::InvalidPath(name.clone()));
        }
    }
    let index_len: usize = 4 + tree.keys().map(|n| 4 + n.len() + 8).sum::<usize>();
    let body_start = HEADER_LEN + index_len;
    let body_len: usize = tree.values().map(|c| c.len()).sum();

    let mut out = Vec::with_capacity(body_start + body_len);
    out.push(MAGIC);
    out.extend_from_slice(&0u32.to_be_bytes());
    out.extend_from_slice(&(index_len as u32).to_be_bytes());
    out.extend_from_slice(&(body_len as u32).to_be_bytes());
    out.push(SEPARATOR);
    out.extend_from_slice(&(tree.len() as u32).to_be_bytes());

    let mut offset = body_start;
    for (name, content) in tree {
        out.extend_from_slice(&(name.len() as u32).to_be_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(offset as u32).to_be_bytes());
        out.extend_from_slice(&(content.len() as u32).to_be_bytes());
        offset += content.len();
    }
    for content in tree.values() {
        out.extend_from_slice(content);
    }
    Ok(out)
}

/// How `load_directory` treats files it cannot read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnreadablePolicy {
    Fail,
    SkipWithWarning,
}

/// Loads a plain directory tree as a package. Entries are all regular files
/// under `root`, named relative to it, in lexicographic order. Symlinks that
/// resolve outside `root` are excluded.
pub fn load_directory(
    root: &Path,
    on_unreadable: UnreadablePolicy,
) -> Result<MiniAppPackage, LoadError> {
    if !root.is_dir() {
        return Err(LoadError::NotADirectory(root.to_path_buf()));
    }
    let canon_root = root
        .canonicalize()
        .map_err(|e| LoadError::UnreadableFile {
            path: root.to_path_buf(),
            source: e,
        })?;

    let mut named: Vec<(String, PathBuf)> = Vec::new();
    for item in walkdir::WalkDir::new(root).follow_links(false) {
        let item = match item {
            Ok(i) => i,
            Err(e) => match on_unreadable {
                UnreadablePolicy::SkipWithWarning => {
                    eprintln!("warning: skipping unreadable path: {e}");
                    continue;
                }
                UnreadablePolicy::Fail => {
                    return Err(LoadError::UnreadableFile {
                        path: e.path().map(Path::to_path_buf).unwrap_or_default(),
                        source: e.into(),
                    })
                }
            },
        };
        let ft = item.file_type();
        if ft.is_dir() {
            continue;
        }
        if ft.is_symlink() {
            // Keep only links that stay inside the root.
            match item.path().canonicalize() {
                Ok(target) if target.starts_with(&canon_root) && target.is_file() => {}
                _ => continue,
            }
        }
        let rel = item
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under root");
        let name = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if !valid_entry_name(&name) {
            return Err(LoadError::InvalidPath(name));
        }
        named.push((name, item.path().to_path_buf()));
    }
    named.sort_by(|a, b| a.0.cmp(&b.0));

    let mut entries = Vec::with_capacity(named.len());
    for (name, path) in named {
        let content = match std::fs::read(&path) {
            Ok(c) => c,
            Err(e) => match on_unreadable {
                UnreadablePolicy::SkipWithWarning => {
                    eprintln!("warning: skipping unreadable file {}: {e}", path.display());
                    continue;
                }
                UnreadablePolicy::Fail => {
                    return Err(LoadError::UnreadableFile { path, source: e })
                }
            },
        };
        entries.push(PackageEntry {
            name,
            offset: 0,
            size: content.len() as u32,
            content,
        });
    }

    let mut pkg = MiniAppPackage {
        app_hint: None,
        entries,
        source: PackageSource::DirectoryTree,
    };
    pkg.discover_app_hint();
    Ok(pkg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(pairs: &[(&str, &str)]) -> BTreeMap<String, Vec<u8>> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.as_bytes().to_vec()))
            .collect()
    }

    #[test]
    fn empty_tree_packs_to_header_plus_zero_entry_index() {
        let bytes = pack(&BTreeMap::new()).unwrap();
        // magic(1) + reserved(4) + index_len(4) + body_len(4) + sep(1) + file_count(4)
        assert_eq!(bytes.len(), 18);
        let pkg = unpack(&bytes).unwrap();
        assert!(pkg.entries.is_empty());
    }

    #[test]
    fn single_file_round_trip() {
        let bytes = pack(&tree(&[("app.js", "x")])).unwrap();
        let pkg = unpack(&bytes).unwrap();
        assert_eq!(pkg.entries.len(), 1);
        assert_eq!(pkg.entries[0].name, "app.js");
        assert_eq!(pkg.entries[0].content, b"x");
        assert_eq!(pkg.entries[0].size, 1);
    }

    #[test]
    fn zero_length_entries_share_an_offset() {
        let bytes = pack(&tree(&[("a", ""), ("b", "")])).unwrap();
        let pkg = unpack(&bytes).unwrap();
        assert_eq!(pkg.entries.len(), 2);
        assert_eq!(pkg.entries[0].offset, pkg.entries[1].offset);
        assert_eq!(pkg.entries[0].size, 0);
    }

    #[test]
    fn oversized_declared_size_is_out_of_bounds() {
        let mut bytes = pack(&tree(&[("f", "abcd")])).unwrap();
        // The entry's size field is the last 4 bytes of the index region.
        let index_len = u32::from_be_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let size_at = HEADER_LEN + index_len - 4;
        bytes[size_at..size_at + 4].copy_from_slice(&10u32.to_be_bytes());
        assert!(matches!(
            unpack(&bytes),
            Err(ContainerError::EntryOutOfBounds { .. })
        ));
    }

    #[test]
    fn bad_magic_and_separator_rejected() {
        let bytes = pack(&BTreeMap::new()).unwrap();
        let mut b1 = bytes.clone();
        b1[0] = 0x00;
        assert_eq!(unpack(&b1), Err(ContainerError::BadMagic));
        let mut b2 = bytes;
        b2[13] = 0x00;
        assert_eq!(unpack(&b2), Err(ContainerError::BadMagic));
    }

    #[test]
    fn truncated_index_rejected() {
        let bytes = pack(&tree(&[("app.js", "x")])).unwrap();
        for cut in 0..bytes.len() - 1 {
            assert!(unpack(&bytes[..cut]).is_err(), "cut at {cut} accepted");
        }
    }

    #[test]
    fn duplicate_name_rejected() {
        // Two identical records, hand-built.
        let name = b"a";
        let rec_len = 4 + name.len() + 8;
        let index_len = 4 + 2 * rec_len;
        let body_start = HEADER_LEN + index_len;
        let mut out = vec![MAGIC];
        out.extend_from_slice(&0u32.to_be_bytes());
        out.extend_from_slice(&(index_len as u32).to_be_bytes());
        out.extend_from_slice(&0u32.to_be_bytes());
        out.push(SEPARATOR);
        out.extend_from_slice(&2u32.to_be_bytes());
        for _ in 0..2 {
            out.extend_from_slice(&(name.len() as u32).to_be_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&(body_start as u32).to_be_bytes());
            out.extend_from_slice(&0u32.to_be_bytes());
        }
        assert_eq!(unpack(&out), Err(ContainerError::DuplicateName("a".into())));
    }

    #[test]
    fn path_traversal_names_rejected() {
        for bad in ["../x", "/abs", "a//b", "a/../b", ""] {
            let mut t = BTreeMap::new();
            t.insert(bad.to_string(), vec![]);
            assert!(matches!(pack(&t), Err(ContainerError::InvalidPath(_))), "{bad}");
        }
    }

    #[test]
    fn index_len_recomputes_after_pack() {
        let t = tree(&[("app.js", "abc"), ("pages/x.js", "y")]);
        let bytes = pack(&t).unwrap();
        let stored = u32::from_be_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let expected: usize = 4 + t.keys().map(|n| 4 + n.len() + 8).sum::<usize>();
        assert_eq!(stored, expected);
    }

    #[test]
    fn app_hint_discovered_from_metadata() {
        let t = tree(&[("app.json", r#"{"appid":"wx0123456789abcdef"}"#)]);
        let pkg = unpack(&pack(&t).unwrap()).unwrap();
        assert_eq!(pkg.app_hint.as_deref(), Some("wx0123456789abcdef"));
    }

    #[test]
    fn load_directory_orders_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("app.js"), "a").unwrap();
        std::fs::create_dir(dir.path().join("pages")).unwrap();
        std::fs::write(dir.path().join("pages/x.js"), "b").unwrap();
        let pkg = load_directory(dir.path(), UnreadablePolicy::Fail).unwrap();
        let names: Vec<_> = pkg.entries.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["app.js", "pages/x.js"]);
        assert_eq!(pkg.source, PackageSource::DirectoryTree);
    }

    #[test]
    fn load_directory_empty() {
        let dir = tempfile::tempdir().unwrap();
        let pkg = load_directory(dir.path(), UnreadablePolicy::Fail).unwrap();
        assert!(pkg.entries.is_empty());
    }

    #[test]
    fn load_directory_rejects_non_directory() {
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(
            load_directory(f.path(), UnreadablePolicy::Fail),
            Err(LoadError::NotADirectory(_))
        ));
    }

    #[cfg(unix)]
    #[test]
    fn escaping_symlink_excluded() {
        let outside = tempfile::tempdir().unwrap();
        std::fs::write(outside.path().join("secret.txt"), "s").unwrap();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("app.js"), "a").unwrap();
        std::os::unix::fs::symlink(
            outside.path().join("secret.txt"),
            dir.path().join("link.txt"),
        )
        .unwrap();
        let pkg = load_directory(dir.path(), UnreadablePolicy::Fail).unwrap();
        let names: Vec<_> = pkg.entries.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["app.js"]);
    }
}
