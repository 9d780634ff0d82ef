//! Dataset manifests: sequence files, topology, normalization metadata and
//! split definitions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sequence::ActionSequence;
use super::topology::SkeletonTopology;
use crate::util::atomic_write;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceEntry {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub label: Option<usize>,
    pub subject: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sequences: Vec<SequenceEntry>,
    /// Topology file, relative to the manifest's directory.
    pub topology: String,
    /// Frame count sequences are (or will be) normalized to.
    pub target_frames: usize,
    /// Hip joint index used for centering.
    pub hip_index: usize,
    /// Named splits as index lists into `sequences`. Splits are pairwise
    /// disjoint.
    pub splits: BTreeMap<String, Vec<usize>>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        for (name, indices) in &self.splits {
            for &i in indices {
                if i >= self.sequences.len() {
                    return Err(Error::Data(format!(
                        "split {name:?} references sequence {i}, manifest has {}",
                        self.sequences.len()
                    )));
                }
            }
        }
        let names: Vec<&String> = self.splits.keys().collect();
        for a in 0..names.len() {
            for b in a + 1..names.len() {
                let sa = &self.splits[names[a]];
                let sb = &self.splits[names[b]];
                if sa.iter().any(|i| sb.contains(i)) {
                    return Err(Error::Data(format!(
                        "splits {:?} and {:?} overlap",
                        names[a], names[b]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let text = serde_json::to_string_pretty(self)?;
        atomic_write(path, text.as_bytes())
    }
}

/// A manifest together with its loaded topology and sequences.
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub topology: SkeletonTopology,
    pub sequences: Vec<ActionSequence>,
    pub root: PathBuf,
}

impl Dataset {
    /// Load a dataset directory (a manifest plus everything it references).
    /// Every referenced file must exist and parse.
    pub fn load(manifest_path: &Path) -> Result<Dataset> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let root = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        let topology = SkeletonTopology::load(&root.join(&manifest.topology))?;
        let mut sequences = Vec::with_capacity(manifest.sequences.len());
        for entry in &manifest.sequences {
            let mut seq = ActionSequence::read_csv(&root.join(&entry.path))?;
            if seq.label.is_none() {
                seq.label = entry.label;
            }
            seq.subject = entry.subject;
            sequences.push(seq);
        }
        Ok(Dataset { manifest, topology, sequences, root })
    }

    pub fn split(&self, name: &str) -> Result<Vec<&ActionSequence>> {
        let indices = self
            .manifest
            .splits
            .get(name)
            .ok_or_else(|| Error::Config(format!("dataset has no split {name:?}")))?;
        Ok(indices.iter().map(|&i| &self.sequences[i]).collect())
    }

    pub fn split_indices(&self, name: &str) -> Result<&[usize]> {
        self.manifest
            .splits
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Config(format!("dataset has no split {name:?}")))
    }
}

/// Cross-subject split: one held-out subject for testing, the rest for
/// training.
pub fn split_by_subject(entries: &[SequenceEntry], test_subject: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if e.subject == Some(test_subject) {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Random class partition: `test_classes` classes go to the test side,
/// everything else trains. Used by the unseen-class protocol.
pub fn split_by_class(
    labels: &[Option<usize>],
    test_classes: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::SeedableRng;
    let mut classes: Vec<usize> = labels.iter().flatten().copied().collect();
    classes.sort_unstable();
    classes.dedup();
    if test_classes == 0 || test_classes >= classes.len() {
        return Err(Error::Config(format!(
            "cannot hold out {test_classes} of {} classes",
            classes.len()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, classes.len(), test_classes);
    let held: Vec<usize> = picks.iter().map(|i| classes[i]).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match label {
            Some(l) if held.contains(l) => test.push(i),
            Some(_) => train.push(i),
            None => {}
        }
    }
    Ok((train, test))
}
