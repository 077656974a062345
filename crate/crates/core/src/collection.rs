//! Style collection manifests.
//!
//! ```text
//! # comment
//! style_name = platon
//! image=exemplars/a.png;landmarks=exemplars/a.txt
//! image=exemplars/b.png;landmarks=exemplars/b.txt
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExemplarEntry {
    pub image: PathBuf,
    pub landmarks: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectionManifest {
    pub style_name: String,
    pub exemplars: Vec<ExemplarEntry>,
}

impl CollectionManifest {
    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut style_name = None;
        let mut exemplars = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::format(origin, format!("line {}: {msg}", lineno + 1));
            if line.contains(';') || line.starts_with("image") {
                let mut image = None;
                let mut landmarks = None;
                for field in line.split(';').map(str::trim).filter(|f| !f.is_empty()) {
                    let (key, value) = field
                        .split_once('=')
                        .ok_or_else(|| bad("expected key=value"))?;
                    let value = base.join(value.trim());
                    match key.trim() {
                        "image" => image = Some(value),
                        "landmarks" => landmarks = Some(value),
                        other => return Err(bad(&format!("unknown exemplar key {other:?}"))),
                    }
                }
                exemplars.push(ExemplarEntry {
                    image: image.ok_or_else(|| bad("exemplar entry without image="))?,
                    landmarks: landmarks.ok_or_else(|| bad("exemplar entry without landmarks="))?,
                });
            } else {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| bad("expected key = value"))?;
                match key.trim() {
                    "style_name" => style_name = Some(value.trim().to_string()),
                    other => return Err(bad(&format!("unknown key {other:?}"))),
                }
            }
        }
        if exemplars.is_empty() {
            return Err(Error::NoExemplars);
        }
        Ok(CollectionManifest {
            style_name: style_name.unwrap_or_default(),
            exemplars,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let manifest = Self::parse(&text, base, path)?;
        for entry in &manifest.exemplars {
            for p in [&entry.image, &entry.landmarks] {
                if !p.is_file() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file not found"),
                    ));
                }
            }
        }
        Ok(manifest)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("style_name = {}\n", self.style_name);
        for e in &self.exemplars {
            out.push_str(&format!(
                "image={};landmarks={}\n",
                e.image.display(),
                e.landmarks.display()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_relative_to_base() {
        let text = "# c\nstyle_name = martin\n\nimage=a.png;landmarks=a.txt\nimage = b.png ; landmarks = b.txt\n";
        let m = CollectionManifest::parse(text, Path::new("/data"), Path::new("m")).unwrap();
        assert_eq!(m.style_name, "martin");
        assert_eq!(m.len(), 2);
        assert_eq!(m.exemplars[1].image, PathBuf::from("/data/b.png"));
        assert_eq!(m.exemplars[1].landmarks, PathBuf::from("/data/b.txt"));
    }

    #[test]
    fn empty_manifest_has_no_exemplars() {
        let err = CollectionManifest::parse("style_name = x\n", Path::new("."), Path::new("m"))
            .unwrap_err();
        assert_eq!(err.to_string(), "no exemplars");
    }

    #[test]
    fn malformed_lines_are_rejected() {
        for text in ["image=a.png", "landmarks=a.txt;", "style = x", "image=a;landmarks=b;foo=c"] {
            assert!(
                CollectionManifest::parse(text, Path::new("."), Path::new("m")).is_err(),
                "{text}"
            );
        }
    }

    #[test]
    fn absolute_paths_survive_text_roundtrip() {
        let m = CollectionManifest {
            style_name: "s".into(),
            exemplars: vec![ExemplarEntry {
                image: "/x/a.png".into(),
                landmarks: "/x/a.txt".into(),
            }],
        };
        let back = CollectionManifest::parse(&m.to_text(), Path::new("/y"), Path::new("m")).unwrap();
        assert_eq!(back, m);
    }
}
