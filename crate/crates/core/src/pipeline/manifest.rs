use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::depgraph::Label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub family: String,
}

/// Labeled dataset listing, stored as JSON Lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Validates uniqueness of paths and nonempty families.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.family.is_empty() {
                return Err(PipelineError::Manifest {
                    line: i + 1,
                    reason: "empty family".into(),
                });
            }
            if !seen.insert(&e.path) {
                return Err(PipelineError::Manifest {
                    line: i + 1,
                    reason: format!("duplicate path {}", e.path.display()),
                });
            }
        }
        Ok(Manifest { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Parses JSON Lines; relative paths resolve against `base`. Blank lines
    /// are skipped.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut e: ManifestEntry =
                serde_json::from_str(line).map_err(|err| PipelineError::Manifest {
                    line: i + 1,
                    reason: err.to_string(),
                })?;
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            entries.push(e);
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entry serializes") + "\n")
            .collect()
    }
}

/// Stratified seeded split. Within each label, entries are shuffled and the
/// first `ceil(fraction * count)` go to train. Both halves keep manifest order.
pub fn split(manifest: &Manifest, fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PipelineError::InvalidConfig(format!(
            "split fraction {fraction} is outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; manifest.len()];
    for label in [Label::Benign, Label::Malicious] {
        let mut idx: Vec<usize> = (0..manifest.len())
            .filter(|&i| manifest.entries[i].label == label)
            .collect();
        if idx.len() < 2 {
            return Err(PipelineError::TooFewSamples(format!(
                "{} entries with label {}, need at least 2",
                idx.len(),
                label.as_u8()
            )));
        }
        idx.shuffle(&mut rng);
        let take = (fraction * idx.len() as f64).ceil() as usize;
        for &i in &idx[..take.min(idx.len())] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = manifest
        .entries
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    Ok((
        Manifest {
            entries: train.into_iter().map(|(e, _)| e).collect(),
        },
        Manifest {
            entries: test.into_iter().map(|(e, _)| e).collect(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(benign: usize, malicious: usize) -> Manifest {
        let mk = |i: usize, label| ManifestEntry {
            path: PathBuf::from(format!("g{i}.json")),
            label,
            family: if label == Label::Benign { "benign" } else { "trojan" }.into(),
        };
        let entries = (0..benign)
            .map(|i| mk(i, Label::Benign))
            .chain((benign..benign + malicious).map(|i| mk(i, Label::Malicious)))
            .collect();
        Manifest::new(entries).unwrap()
    }

    #[test]
    fn ten_and_ten() {
        let (tr, te) = split(&toy(10, 10), 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (16, 4));
        assert_eq!((tr.count(Label::Benign), tr.count(Label::Malicious)), (8, 8));
        assert_eq!((te.count(Label::Benign), te.count(Label::Malicious)), (2, 2));
    }

    #[test]
    fn ceiling_and_determinism() {
        let m = toy(3, 3);
        let (tr, _) = split(&m, 0.5, 9).unwrap();
        assert_eq!(tr.count(Label::Benign), 2);
        assert_eq!(tr.count(Label::Malicious), 2);
        assert_eq!(split(&m, 0.5, 9).unwrap(), split(&m, 0.5, 9).unwrap());
    }

    #[test]
    fn too_few_and_bad_fraction() {
        assert!(matches!(split(&toy(1, 5), 0.8, 0), Err(PipelineError::TooFewSamples(_))));
        assert!(matches!(split(&toy(4, 4), 1.0, 0), Err(PipelineError::InvalidConfig(_))));
    }

    #[test]
    fn jsonl_round_trip_and_validation() {
        let m = toy(1, 1);
        let text = m.to_jsonl();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"path":"g0.json","label":0,"family":"benign"}"#
        );
        assert_eq!(Manifest::parse(&text, Path::new("")).unwrap(), m);
        let rel = Manifest::parse(&text, Path::new("/data")).unwrap();
        assert_eq!(rel.entries[0].path, PathBuf::from("/data/g0.json"));

        let dup = format!("{}{}", text.lines().next().unwrap(), "\n").repeat(2);
        assert!(matches!(
            Manifest::parse(&dup, Path::new("")),
            Err(PipelineError::Manifest { line: 2, .. })
        ));
        assert!(Manifest::parse(r#"{"path":"x","label":2,"family":"a"}"#, Path::new("")).is_err());
        assert!(Manifest::parse(r#"{"path":"x","label":1,"family":""}"#, Path::new("")).is_err());
    }
}
