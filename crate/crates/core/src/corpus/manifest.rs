//! Dataset manifests: a UTF-8 CSV with header `path,subject,group,task`.
//!
//! Paths are resolved against the directory holding the manifest unless
//! absolute. `group` is `PD` or `HC`; `task` is `1`, `2` or `3`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 4] = ["path", "subject", "group", "task"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(String);

impl SubjectId {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.trim().is_empty() {
            return Err(Error::invalid("subject id must be non-empty"));
        }
        Ok(SubjectId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Clinical group. `Pd` is the positive class everywhere downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "PD")]
    Pd,
    #[serde(rename = "HC")]
    Hc,
}

impl Group {
    /// 1 for PD, 0 for HC.
    pub fn label(self) -> u8 {
        match self {
            Group::Pd => 1,
            Group::Hc => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Pd => "PD",
            Group::Hc => "HC",
        }
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "PD" => Ok(Group::Pd),
            "HC" => Ok(Group::Hc),
            other => Err(format!("invalid group {other:?} (expected PD or HC)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    ImageDescription,
    Ddk,
    TextReading,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::ImageDescription, Task::Ddk, Task::TextReading];

    pub fn code(self) -> u8 {
        match self {
            Task::ImageDescription => 1,
            Task::Ddk => 2,
            Task::TextReading => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Task> {
        match code {
            1 => Some(Task::ImageDescription),
            2 => Some(Task::Ddk),
            3 => Some(Task::TextReading),
            _ => None,
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.trim()
            .parse::<u8>()
            .ok()
            .and_then(Task::from_code)
            .ok_or_else(|| format!("invalid task {s:?} (expected 1, 2 or 3)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub path: PathBuf,
    pub subject: SubjectId,
    pub group: Group,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    /// Distinct subjects in first-appearance order.
    pub fn subjects(&self) -> Vec<SubjectId> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.subject.clone()))
            .map(|e| e.subject.clone())
            .collect()
    }

    /// Checks structural invariants: non-empty, no duplicate (subject, path)
    /// pairs, and one group per subject.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Manifest { path: self.root.clone(), message };
        if self.entries.is_empty() {
            return Err(fail("empty manifest".into()));
        }
        let mut pairs = HashSet::new();
        let mut groups: HashMap<&SubjectId, Group> = HashMap::new();
        for e in &self.entries {
            if !pairs.insert((&e.subject, &e.path)) {
                return Err(fail(format!("duplicate entry ({}, {})", e.subject, e.path.display())));
            }
            if let Some(g) = groups.insert(&e.subject, e.group) {
                if g != e.group {
                    return Err(fail(format!("subject {} listed under both PD and HC", e.subject)));
                }
            }
        }
        Ok(())
    }

    /// True when both groups are represented.
    pub fn has_both_groups(&self) -> bool {
        let pd = self.entries.iter().any(|e| e.group == Group::Pd);
        let hc = self.entries.iter().any(|e| e.group == Group::Hc);
        pd && hc
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER)?;
        for e in &self.entries {
            let task = e.task.code().to_string();
            w.write_record([
                e.path.to_string_lossy().as_ref(),
                e.subject.as_str(),
                e.group.as_str(),
                task.as_str(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Parses manifest text without touching the filesystem.
pub fn parse_manifest(text: &str, root: &Path, origin: &Path) -> Result<CorpusManifest> {
    let fail = |message: String| Error::Manifest { path: origin.to_path_buf(), message };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(fail(format!("header must be {:?}", MANIFEST_HEADER.join(","))));
    }
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: String| fail(format!("line {line}: {msg}"));
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", record.len())));
        }
        if record[0].is_empty() {
            return Err(bad("empty path".into()));
        }
        let subject = SubjectId::new(&record[1]).map_err(|_| bad("empty subject".into()))?;
        let group = record[2].parse::<Group>().map_err(bad)?;
        let task = record[3].parse::<Task>().map_err(bad)?;
        entries.push(ManifestEntry { path: PathBuf::from(&record[0]), subject, group, task });
    }
    let manifest = CorpusManifest { root: root.to_path_buf(), entries };
    manifest.validate().map_err(|e| match e {
        Error::Manifest { message, .. } => fail(message),
        other => other,
    })?;
    Ok(manifest)
}

/// Loads a manifest and checks that every referenced audio file exists.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(&text, &root, path)?;
    for e in &manifest.entries {
        let resolved = manifest.resolve(e);
        if !resolved.is_file() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                message: format!("unresolvable audio path {}", resolved.display()),
            });
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_fixture(dir: &Path, rows: &str) -> PathBuf {
        let p = dir.join("manifest.csv");
        fs::write(&p, format!("path,subject,group,task\n{rows}")).unwrap();
        p
    }

    #[test]
    fn empty_manifest_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_manifest(&write_fixture(dir.path(), "")).unwrap_err();
        assert!(err.to_string().contains("empty manifest"), "{err}");
    }

    #[test]
    fn three_row_fixture() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a.wav", "b.wav", "c.wav"] {
            fs::write(dir.path().join(f), b"x").unwrap();
        }
        let m = load_manifest(&write_fixture(dir.path(), "a.wav,s1,PD,1\nb.wav,s2,HC,2\nc.wav,s3,HC,3\n")).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.subjects().len(), 3);
        assert_eq!(m.entries[1].task, Task::Ddk);
        assert_eq!(m.entries[0].group, Group::Pd);
    }

    #[test]
    fn invalid_group_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_manifest(&write_fixture(dir.path(), "a.wav,s1,PD,1\nb.wav,s2,XX,1\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("XX"), "{msg}");
    }

    #[test]
    fn duplicate_pair_rejected() {
        let err = parse_manifest(
            "path,subject,group,task\na.wav,s1,PD,1\na.wav,s1,PD,1\n",
            Path::new("."),
            Path::new("m.csv"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn missing_audio_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_manifest(&write_fixture(dir.path(), "nope.wav,s1,PD,1\n")).unwrap_err();
        assert!(err.to_string().contains("unresolvable"));
    }

    #[test]
    fn missing_file_rejected() {
        let err = load_manifest(Path::new("/definitely/not/here.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn bad_task_and_field_count() {
        let parse = |rows: &str| {
            parse_manifest(&format!("path,subject,group,task\n{rows}"), Path::new("."), Path::new("m.csv"))
        };
        assert!(parse("a.wav,s1,PD,4\n").is_err());
        assert!(parse("a.wav,s1,PD\n").is_err());
        assert!(parse("a.wav,,PD,1\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec((0u8..5, 0u8..40, any::<bool>(), 1u8..=3), 1..30)) {
            let mut seen = HashSet::new();
            let entries: Vec<ManifestEntry> = rows
                .into_iter()
                .filter(|(s, f, _, _)| seen.insert((*s, *f)))
                .map(|(s, f, _, t)| ManifestEntry {
                    path: PathBuf::from(format!("audio/s{s}_{f}.wav")),
                    subject: SubjectId::new(format!("s{s}")).unwrap(),
                    // group is a function of the subject so the manifest stays valid
                    group: if s % 2 == 0 { Group::Pd } else { Group::Hc },
                    task: Task::from_code(t).unwrap(),
                })
                .collect();
            let m = CorpusManifest { root: PathBuf::from("/data"), entries };
            let text = m.to_csv_string().unwrap();
            let back = parse_manifest(&text, Path::new("/data"), Path::new("m.csv")).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.to_csv_string().unwrap(), text);
        }
    }
}
