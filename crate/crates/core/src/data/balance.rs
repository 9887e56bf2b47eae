use std::collections::BTreeMap;

use rand::Rng;

use super::seeded;
use crate::error::Result;
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::types::Severity;

/// Duplicates randomly chosen entries of minority severity classes until
/// every class present matches the largest. Copies get ids `<id>~dupN`.
/// Entries without a severity label pass through unchanged.
pub fn oversample_to_balance(manifest: &DatasetManifest, seed: u64) -> Result<DatasetManifest> {
    let mut by_class: BTreeMap<Severity, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &manifest.entries {
        if let Some(s) = e.severity {
            by_class.entry(s).or_default().push(e);
        }
    }
    let target = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = seeded(seed);
    let mut entries = manifest.entries.clone();
    for members in by_class.values() {
        for n in 0..target - members.len() {
            let src = members[rng.random_range(0..members.len())];
            let mut copy = src.clone();
            copy.tile_id = format!("{}~dup{n}", src.tile_id);
            entries.push(copy);
        }
    }
    DatasetManifest::new(manifest.root.clone(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn entry(id: &str, s: Severity) -> ManifestEntry {
        ManifestEntry {
            tile_id: id.into(),
            image_path: PathBuf::from(format!("{id}.png")),
            mask_path: None,
            severity: Some(s),
            artifact_kind: None,
        }
    }

    #[test]
    fn minority_classes_reach_majority_count() {
        let mut entries: Vec<_> = (0..5).map(|i| entry(&format!("h{i}"), Severity::High)).collect();
        entries.extend((0..2).map(|i| entry(&format!("l{i}"), Severity::Low)));
        entries.push(entry("m0", Severity::Mid));
        let m = DatasetManifest::new(".", entries).unwrap();
        let b = oversample_to_balance(&m, 4).unwrap();
        let counts = b.counts_by_severity();
        assert_eq!(counts.values().copied().collect::<Vec<_>>(), vec![5, 5, 5]);
        assert_eq!(b, oversample_to_balance(&m, 4).unwrap());
    }
}
