//! Line-oriented dataset manifests.
//!
//! ```text
//! # mixture<TAB>reference...<TAB>[noise=path]<TAB>[label=name]
//! split<TAB>0.8<TAB>0.1<TAB>0.1
//! street/mix.wav<TAB>street/s1.wav<TAB>street/s2.wav<TAB>noise=street/n.wav<TAB>label=street
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mixture::Mixture;
use super::wav::read_wav;

pub const DEFAULT_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub mixture: PathBuf,
    pub references: Vec<PathBuf>,
    pub noise: Option<PathBuf>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, path)
    }

    pub fn parse(text: &str, base: &Path, source: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Manifest {
            path: source.to_path_buf(),
            line,
            message,
        };
        let resolve = |p: &str| base.join(p);
        let mut entries = Vec::new();
        let mut split = None;
        let mut seen = HashSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields[0] == "split" {
                if split.is_some() {
                    return Err(err(line_no, "duplicate split line".into()));
                }
                let values = fields[1..]
                    .iter()
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| err(line_no, format!("bad split fraction: {e}")))?;
                let values: [f64; 3] = values
                    .try_into()
                    .map_err(|_| err(line_no, "split needs train, val and test fractions".into()))?;
                if values.iter().any(|v| !(0.0..=1.0).contains(v))
                    || (values.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(err(line_no, format!("split fractions {values:?} must sum to 1")));
                }
                split = Some(values);
                continue;
            }

            let mut references = Vec::new();
            let mut noise = None;
            let mut label = None;
            for f in &fields[1..] {
                if let Some(p) = f.strip_prefix("noise=") {
                    noise = Some(resolve(p));
                } else if let Some(l) = f.strip_prefix("label=") {
                    label = Some(l.to_string());
                } else if !f.is_empty() {
                    references.push(resolve(f));
                }
            }
            if references.is_empty() {
                return Err(err(line_no, "entry has no reference sources".into()));
            }
            let entry = ManifestEntry {
                mixture: resolve(fields[0]),
                references,
                noise,
                label,
            };
            for p in std::iter::once(&entry.mixture)
                .chain(&entry.references)
                .chain(&entry.noise)
            {
                if !seen.insert(p.clone()) {
                    return Err(err(line_no, format!("path {} appears twice", p.display())));
                }
            }
            entries.push(entry);
        }
        Ok(DatasetManifest {
            entries,
            split: split.unwrap_or(DEFAULT_SPLIT),
        })
    }
}

impl ManifestEntry {
    pub fn name(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            self.mixture
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }

    /// Reads every file of the entry. Without a noise file the noise is the
    /// residual of the mixture after subtracting the references.
    pub fn load(&self) -> Result<Mixture> {
        let (mixture, sample_rate) = read_wav(&self.mixture)?;
        let check = |path: &Path, (x, sr): (Vec<f64>, u32)| -> Result<Vec<f64>> {
            if sr != sample_rate {
                return Err(Error::Wav {
                    path: path.to_path_buf(),
                    message: format!("sample rate {sr} Hz differs from the mixture's {sample_rate} Hz"),
                });
            }
            if x.len() != mixture.len() {
                return Err(Error::Wav {
                    path: path.to_path_buf(),
                    message: format!("{} samples, mixture has {}", x.len(), mixture.len()),
                });
            }
            Ok(x)
        };
        let references = self
            .references
            .iter()
            .map(|p| check(p, read_wav(p)?))
            .collect::<Result<Vec<_>>>()?;
        let noise = match &self.noise {
            Some(p) => check(p, read_wav(p)?)?,
            None => (0..mixture.len())
                .map(|t| mixture[t] - references.iter().map(|r| r[t]).sum::<f64>())
                .collect(),
        };
        Ok(Mixture {
            name: self.name(),
            mixture,
            references,
            noise,
            sample_rate,
            gain: 1.0,
        })
    }
}

/// Contiguous train, validation and test index ranges for `n` items. Train
/// and test each get at least one item when `n >= 2`.
pub fn split_indices(n: usize, split: [f64; 3]) -> [Vec<usize>; 3] {
    let mut n_train = (n as f64 * split[0]).round() as usize;
    let mut n_val = (n as f64 * split[1]).round() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    } else {
        n_train = n_train.min(n);
    }
    n_val = n_val.min(n - n_train);
    if n >= 2 && n_train + n_val == n && n_val > 0 {
        n_val -= 1;
    }
    [
        (0..n_train).collect(),
        (n_train..n_train + n_val).collect(),
        (n_train + n_val..n).collect(),
    ]
}
