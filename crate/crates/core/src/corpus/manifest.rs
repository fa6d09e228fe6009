//! JSONL manifests: a vocabulary header line followed by one record per sample.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_feature_matrix, write_feature_matrix, Dataset, LabelVocabulary, Sample};
use crate::error::{Error, Result};
use crate::types::{Modality, ModalityMap, Origin, Split, Task};

pub type ManifestHeader = LabelVocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub audio: String,
    pub video: String,
    pub text: String,
    pub emotion: String,
    pub intent: String,
    pub split: Split,
    #[serde(default = "default_origin")]
    pub origin: Origin,
}

fn default_origin() -> Origin {
    Origin::Original
}

impl ManifestRecord {
    fn path(&self, m: Modality) -> &str {
        match m {
            Modality::Audio => &self.audio,
            Modality::Video => &self.video,
            Modality::Text => &self.text,
        }
    }
}

/// Loads a manifest; feature paths are resolved relative to `feature_root`.
pub fn load_manifest(manifest_path: &Path, feature_root: &Path) -> Result<Dataset> {
    let file = fs::File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let vocab: LabelVocabulary = loop {
        match lines.next() {
            None => {
                return Err(Error::BadManifest {
                    line: 1,
                    reason: "missing vocabulary header".into(),
                })
            }
            Some((n, line)) => {
                let line = line.map_err(|e| Error::io(manifest_path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| Error::BadManifest {
                    line: n + 1,
                    reason: format!("header: {e}"),
                })?;
            }
        }
    };
    vocab.validate()?;

    let mut samples = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| Error::io(manifest_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::BadManifest {
            line: n + 1,
            reason: e.to_string(),
        })?;
        let resolve = |task: Task, name: &str| {
            vocab.index_of(task, name).ok_or_else(|| Error::BadLabel {
                id: rec.id.clone(),
                task: task.name().to_string(),
                label: name.to_string(),
            })
        };
        let emotion = resolve(Task::Emotion, &rec.emotion)?;
        let intent = resolve(Task::Intent, &rec.intent)?;
        let features = ModalityMap::try_from_fn(|m| {
            let path = feature_root.join(rec.path(m));
            if !path.is_file() {
                return Err(Error::MissingFile {
                    id: rec.id.clone(),
                    path,
                });
            }
            read_feature_matrix(&path)
        })?;
        samples.push(Sample {
            id: rec.id,
            features,
            emotion,
            intent,
            split: rec.split,
            origin: rec.origin,
        });
    }
    Dataset::new(vocab, samples)
}

/// Writes `dir/manifest.jsonl` and one FEA1 file per sample and modality
/// under `dir/features/`. Returns the manifest path.
pub fn save_manifest(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let manifest_path = dir.join("manifest.jsonl");
    let file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut out = BufWriter::new(file);
    let vocab = dataset.vocab();
    let mut write_line = |s: String| -> Result<()> {
        writeln!(out, "{s}").map_err(|e| Error::io(&manifest_path, e))
    };
    write_line(json(vocab))?;
    for (idx, s) in dataset.samples().iter().enumerate() {
        let rel = s.features.map(|m, _| format!("features/{idx:06}.{m}.fea"));
        for m in Modality::ALL {
            write_feature_matrix(&dir.join(&rel[m]), &s.features[m])?;
        }
        let [audio, video, text] = rel.0;
        let rec = ManifestRecord {
            id: s.id.clone(),
            audio,
            video,
            text,
            emotion: vocab.name_of(Task::Emotion, s.emotion).to_string(),
            intent: vocab.name_of(Task::Intent, s.intent).to_string(),
            split: s.split,
            origin: s.origin,
        };
        write_line(json(&rec))?;
    }
    out.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("manifest types always serialize")
}
