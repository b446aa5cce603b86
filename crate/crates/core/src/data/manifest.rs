//! Dataset directory: `manifest.json` plus one container per view per clip.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{load_features, save_features, Dataset, Sample};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FEATURE_DIR: &str = "features";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestViews {
    pub cam1: String,
    pub cam2: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: usize,
    pub driver: u32,
    /// Paths relative to the dataset directory.
    pub views: ManifestViews,
}

/// Writes every sample's views and the manifest. Splits are not stored.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let features = dir.join(FEATURE_DIR);
    fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
    let mut entries = Vec::with_capacity(dataset.samples.len());
    for s in &dataset.samples {
        let rel = |cam: usize| format!("{FEATURE_DIR}/{}_cam{cam}.mifi", s.id);
        let views = ManifestViews {
            cam1: rel(1),
            cam2: rel(2),
        };
        save_features(s.view(1)?, dir.join(&views.cam1))?;
        save_features(s.view(2)?, dir.join(&views.cam2))?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            label: s.label,
            driver: s.driver,
            views,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&entries).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: impl AsRef<Path>, n_classes: usize) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let samples = entries
        .into_iter()
        .map(|e| {
            Ok(Sample {
                views: vec![
                    load_features(dir.join(&e.views.cam1))?,
                    load_features(dir.join(&e.views.cam2))?,
                ],
                id: e.id,
                label: e.label,
                driver: e.driver,
                split: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(n_classes, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};

    #[test]
    fn dataset_directory_round_trip() {
        let cfg = SynthConfig {
            n_drivers: 3,
            dims: [4, 2, 2, 2],
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path(), 16).unwrap(), ds);

        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        let first = &json[0];
        assert_eq!(first["id"], "d000-c00-k00");
        assert_eq!(first["views"]["cam2"], "features/d000-c00-k00_cam2.mifi");
    }

    #[test]
    fn unknown_manifest_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"[{"id":"a","label":0,"driver":0,"views":{"cam1":"x","cam2":"y"},"extra":1}]"#,
        )
        .unwrap();
        assert!(matches!(
            load_dataset(dir.path(), 16),
            Err(Error::Json { .. })
        ));
    }
}
