use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path must be absolute: {0:?}")]
    NotAbsolute(String),
    #[error("path escapes the export root: {0:?}")]
    Escapes(String),
    #[error("path contains a control character")]
    Control,
}

/// A normalized absolute path inside the export root: no `.`, `..` or empty
/// components. `/` is the root itself.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VirtualPath(String);

impl VirtualPath {
    pub fn root() -> Self {
        Self("/".into())
    }

    pub fn parse(raw: &str) -> Result<Self, PathError> {
        if raw.chars().any(char::is_control) {
            return Err(PathError::Control);
        }
        if !raw.starts_with('/') {
            return Err(PathError::NotAbsolute(raw.into()));
        }
        let mut parts: Vec<&str> = Vec::new();
        for c in raw.split('/') {
            match c {
                "" | "." => {}
                ".." => {
                    if parts.pop().is_none() {
                        return Err(PathError::Escapes(raw.into()));
                    }
                }
                c => parts.push(c),
            }
        }
        Ok(Self(format!("/{}", parts.join("/"))))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn components(&self) -> impl Iterator<Item = &str> {
        self.0.split('/').filter(|c| !c.is_empty())
    }

    /// True if `self` is `dir` or lies beneath it.
    pub fn is_within(&self, dir: &VirtualPath) -> bool {
        let mut mine = self.components();
        dir.components().all(|d| mine.next() == Some(d))
    }

    pub fn parent(&self) -> Option<VirtualPath> {
        let idx = self.0.rfind('/')?;
        if self.0 == "/" {
            return None;
        }
        Some(Self(if idx == 0 { "/".into() } else { self.0[..idx].into() }))
    }

    pub fn file_name(&self) -> Option<&str> {
        self.components().last()
    }

    /// The host path under `export_root`.
    pub fn under(&self, export_root: &Path) -> PathBuf {
        let mut p = export_root.to_path_buf();
        p.extend(self.components());
        p
    }
}

impl fmt::Display for VirtualPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes() {
        assert_eq!(VirtualPath::parse("/a//b/./c/").unwrap().as_str(), "/a/b/c");
        assert_eq!(VirtualPath::parse("/a/../b").unwrap().as_str(), "/b");
        assert_eq!(VirtualPath::parse("/").unwrap(), VirtualPath::root());
        assert_eq!(VirtualPath::parse("/a/..").unwrap(), VirtualPath::root());
    }

    #[test]
    fn rejects_escape() {
        assert!(matches!(VirtualPath::parse("/.."), Err(PathError::Escapes(_))));
        assert!(matches!(VirtualPath::parse("/a/../../etc"), Err(PathError::Escapes(_))));
        assert!(matches!(VirtualPath::parse("a/b"), Err(PathError::NotAbsolute(_))));
        assert!(matches!(VirtualPath::parse("/a\nb"), Err(PathError::Control)));
    }

    #[test]
    fn within() {
        let home = VirtualPath::parse("/home/data").unwrap();
        assert!(VirtualPath::parse("/home/data").unwrap().is_within(&home));
        assert!(VirtualPath::parse("/home/data/x").unwrap().is_within(&home));
        assert!(!VirtualPath::parse("/home/database").unwrap().is_within(&home));
        assert!(!VirtualPath::parse("/home").unwrap().is_within(&home));
        assert!(home.is_within(&VirtualPath::root()));
    }

    #[test]
    fn parent_and_name() {
        let p = VirtualPath::parse("/a/b").unwrap();
        assert_eq!(p.parent().unwrap().as_str(), "/a");
        assert_eq!(p.parent().unwrap().parent().unwrap(), VirtualPath::root());
        assert_eq!(VirtualPath::root().parent(), None);
        assert_eq!(p.file_name(), Some("b"));
        assert_eq!(p.under(Path::new("/srv")), Path::new("/srv/a/b"));
    }

    proptest! {
        #[test]
        fn parsed_paths_stay_under_root(parts in prop::collection::vec(prop_oneof![
            Just("..".to_string()), Just(".".to_string()), Just(String::new()), "[a-z]{1,3}"
        ], 0..8)) {
            let raw = format!("/{}", parts.join("/"));
            if let Ok(p) = VirtualPath::parse(&raw) {
                prop_assert!(p.components().all(|c| c != ".." && c != "." && !c.is_empty()));
                prop_assert!(p.under(Path::new("/srv")).starts_with("/srv"));
                prop_assert_eq!(VirtualPath::parse(p.as_str()).unwrap(), p);
            }
        }
    }
}
