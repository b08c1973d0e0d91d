use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roomsim::{RoomScene, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Tr,
    Dt,
    Et,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Tr => "tr",
            Split::Dt => "dt",
            Split::Et => "et",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tr" => Ok(Split::Tr),
            "dt" => Ok(Split::Dt),
            "et" => Ok(Split::Et),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

/// One line of the JSON-lines dataset manifest. File paths are relative to
/// the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub split: Split,
    pub task: Task,
    /// Corpus wav of each source, target speaker first.
    pub sources: Vec<String>,
    pub scene: RoomScene,
    pub doa_class: usize,
    pub t60: f64,
    pub samples: usize,
    pub frames: usize,
    pub mixture: String,
    /// Direct-path multichannel image of each source.
    pub clean: Vec<String>,
    /// Unnormalized input features `[C × T × 160]`.
    pub features: String,
    /// Unnormalized log-mel target of each source `[C × T × 80]`.
    pub targets: Vec<String>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| {
            Error::InvalidConfig(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Append entries whose `utt_id` is not yet in the manifest. Returns how many
/// lines were written.
pub fn append_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<usize> {
    let path = path.as_ref();
    let existing: HashSet<String> = if path.exists() {
        read_manifest(path)?.into_iter().map(|e| e.utt_id).collect()
    } else {
        HashSet::new()
    };
    let mut buf = String::new();
    let mut written = 0;
    for e in entries.iter().filter(|e| !existing.contains(&e.utt_id)) {
        buf.push_str(&serde_json::to_string(e)?);
        buf.push('\n');
        written += 1;
    }
    if written > 0 {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(written)
}
