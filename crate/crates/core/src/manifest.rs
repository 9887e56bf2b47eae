//! Line-oriented dataset manifests.
//!
//! One record per line, five tab-separated fields:
//! `<tile_id>\t<image_path>\t<mask_path|->\t<severity|->\t<artifact_kind|->`.
//! Relative paths resolve against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{ArtifactKind, Severity};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub tile_id: String,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub severity: Option<Severity>,
    pub artifact_kind: Option<ArtifactKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

const NONE: &str = "-";

fn opt_field<T: std::str::FromStr<Err = String>>(s: &str) -> std::result::Result<Option<T>, String> {
    if s == NONE {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self { root: root.into(), entries };
        m.check_unique_ids()?;
        Ok(m)
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.tile_id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate tile id `{}`", e.tile_id)));
            }
        }
        Ok(())
    }

    /// Parses manifest text without touching the filesystem.
    pub fn parse_str(text: &str, root: impl Into<PathBuf>, source_name: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { source_name: source_name.to_string(), line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 tab-separated fields, found {}", fields.len())));
            }
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(err("tile id and image path must be non-empty".into()));
            }
            if !seen.insert(fields[0].to_string()) {
                return Err(err(format!("duplicate tile id `{}`", fields[0])));
            }
            entries.push(ManifestEntry {
                tile_id: fields[0].to_string(),
                image_path: PathBuf::from(fields[1]),
                mask_path: (fields[2] != NONE).then(|| PathBuf::from(fields[2])),
                severity: opt_field(fields[3]).map_err(err)?,
                artifact_kind: opt_field(fields[4]).map_err(err)?,
            });
        }
        Ok(Self { root: root.into(), entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let mask = e.mask_path.as_ref().map_or(NONE.to_string(), |p| p.display().to_string());
            let sev = e.severity.map_or(NONE, Severity::name);
            let kind = e.artifact_kind.map_or(NONE, ArtifactKind::name);
            out.push_str(&format!("{}\t{}\t{mask}\t{sev}\t{kind}\n", e.tile_id, e.image_path.display()));
        }
        out
    }

    /// Loads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse_str(&text, root, &path.display().to_string())?;
        m.check_files()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            for p in std::iter::once(&e.image_path).chain(e.mask_path.as_ref()) {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(Error::MissingFile(full));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Copy with every path resolved against the root, so it can be saved
    /// anywhere.
    pub fn with_resolved_paths(&self) -> Self {
        let root = std::fs::canonicalize(&self.root).unwrap_or_else(|_| self.root.clone());
        let entries = self
            .entries
            .iter()
            .map(|e| ManifestEntry {
                image_path: root.join(&e.image_path),
                mask_path: e.mask_path.as_ref().map(|m| root.join(m)),
                ..e.clone()
            })
            .collect();
        Self { root, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.tile_id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.tile_id == id)
    }

    /// Entries whose ids appear in `ids`, in the order given.
    pub fn subset(&self, ids: &[String]) -> Result<Self> {
        let index: BTreeMap<&str, &ManifestEntry> = self.entries.iter().map(|e| (e.tile_id.as_str(), e)).collect();
        let entries = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|e| (*e).clone())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown tile id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.root.clone(), entries)
    }

    /// Count per artifact kind; entries without a kind are counted under `-`.
    pub fn counts_by_kind(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry(e.artifact_kind.map_or(NONE, ArtifactKind::name).to_string()).or_insert(0) += 1;
        }
        m
    }

    pub fn counts_by_severity(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry(e.severity.map_or(NONE, Severity::name).to_string()).or_insert(0) += 1;
        }
        m
    }
}
