//! Labeled recording inventories.
//!
//! PhysioNet 2016 ships one `REFERENCE.csv` per subset directory with
//! `record,label` lines where -1 is normal, 1 abnormal and 0 "unsure".
//! PASCAL ships class-named recordings; every non-normal class collapses to
//! abnormal.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use super::{DatasetKind, Label, SignalIoError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub dataset: DatasetKind,
    pub source_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// (normal, abnormal) totals.
    pub fn counts(&self) -> (usize, usize) {
        let abnormal = self
            .entries
            .iter()
            .filter(|e| e.label == Label::Abnormal)
            .count();
        (self.entries.len() - abnormal, abnormal)
    }

    pub fn merge(mut self, other: DatasetManifest) -> DatasetManifest {
        self.entries.extend(other.entries);
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        self.entries.dedup_by(|a, b| a.path == b.path);
        self
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), SignalIoError> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["path", "label", "dataset", "source_id"])
            .map_err(|e| csv_err(path, e))?;
        for e in &self.entries {
            w.write_record([
                e.path.to_string_lossy().as_ref(),
                &e.label.as_u8().to_string(),
                e.dataset.tag(),
                &e.source_id,
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| SignalIoError::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<DatasetManifest, SignalIoError> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "label", "dataset", "source_id"] {
            return Err(bad_manifest(path, "unexpected header"));
        }
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let label = rec[1]
                .parse::<u8>()
                .ok()
                .and_then(Label::from_u8)
                .ok_or_else(|| bad_manifest(path, format!("bad label `{}`", &rec[1])))?;
            let dataset = rec[2].parse().map_err(|e: String| bad_manifest(path, e))?;
            entries.push(ManifestEntry {
                path: PathBuf::from(&rec[0]),
                label,
                dataset,
                source_id: rec[3].to_string(),
            });
        }
        Ok(DatasetManifest { entries })
    }
}

fn csv_err(path: &Path, e: csv::Error) -> SignalIoError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => SignalIoError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        bad_manifest(path, e.to_string())
    }
}

fn bad_manifest(path: &Path, reason: impl Into<String>) -> SignalIoError {
    SignalIoError::BadManifest {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn is_wav(p: &Path) -> bool {
    p.extension()
        .map(|e| e.eq_ignore_ascii_case("wav"))
        .unwrap_or(false)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Every `.wav` under `root`, grouped by containing directory.
fn wavs_by_dir(root: &Path) -> Result<BTreeMap<PathBuf, Vec<PathBuf>>, SignalIoError> {
    let mut groups: BTreeMap<PathBuf, Vec<PathBuf>> = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let p = e.path().unwrap_or(root).to_path_buf();
            SignalIoError::io(p, e.into())
        })?;
        if entry.file_type().is_file() && is_wav(entry.path()) {
            let dir = entry.path().parent().unwrap_or(root).to_path_buf();
            groups.entry(dir).or_default().push(entry.path().to_path_buf());
        }
    }
    Ok(groups)
}

/// Builds a manifest for one dataset kind from one or more roots.
///
/// For PhysioNet every directory holding recordings must carry a
/// `REFERENCE.csv`; "unsure" (0) recordings are left out. For the PASCAL
/// kinds the class comes from the parent directory name or, failing that,
/// from the `class__id` file-name prefix.
pub fn build_manifest<P: AsRef<Path>>(
    roots: &[P],
    dataset: DatasetKind,
) -> Result<DatasetManifest, SignalIoError> {
    let mut entries = Vec::new();
    for root in roots {
        let groups = wavs_by_dir(root.as_ref())?;
        for (dir, files) in groups {
            match dataset {
                DatasetKind::PhysioNet => physionet_dir(&dir, files, &mut entries)?,
                kind => pascal_dir(&dir, files, kind, &mut entries)?,
            }
        }
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    entries.dedup_by(|a, b| a.path == b.path);
    Ok(DatasetManifest { entries })
}

/// Scans a PASCAL root that holds one subdirectory per set (`set_a`,
/// `set_b`, `A`, `dataset_b`, ...) and merges both sets.
pub fn build_pascal_manifest(root: impl AsRef<Path>) -> Result<DatasetManifest, SignalIoError> {
    let root = root.as_ref();
    let mut manifest = DatasetManifest::default();
    let mut found_set = false;
    let read = fs::read_dir(root).map_err(|e| SignalIoError::io(root, e))?;
    let mut dirs: Vec<PathBuf> = read
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let Some(kind) = pascal_set_of(&dir) else {
            continue;
        };
        found_set = true;
        manifest = manifest.merge(build_manifest(&[&dir], kind)?);
    }
    if !found_set && !wavs_by_dir(root)?.is_empty() {
        return Err(SignalIoError::UnknownLayout {
            dir: root.to_path_buf(),
        });
    }
    Ok(manifest)
}

fn pascal_set_of(dir: &Path) -> Option<DatasetKind> {
    let name: String = dir
        .file_name()?
        .to_string_lossy()
        .to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    match name.as_str() {
        "a" | "seta" | "dataseta" | "pascala" => Some(DatasetKind::PascalA),
        "b" | "setb" | "datasetb" | "pascalb" => Some(DatasetKind::PascalB),
        _ => None,
    }
}

fn find_reference(dir: &Path) -> Option<PathBuf> {
    fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().eq_ignore_ascii_case("reference.csv"))
                .unwrap_or(false)
        })
}

/// `None` marks the excluded "unsure" class.
fn parse_reference(path: &Path) -> Result<HashMap<String, Option<Label>>, SignalIoError> {
    let text = fs::read_to_string(path).map_err(|e| SignalIoError::io(path, e))?;
    let mut labels = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| SignalIoError::BadLabelFile {
            path: path.to_path_buf(),
            line: i + 1,
            reason: reason.to_string(),
        };
        let (name, value) = line
            .split_once(',')
            .ok_or_else(|| bad("expected `record,label`"))?;
        let label = match value.trim() {
            "-1" => Some(Label::Normal),
            "1" => Some(Label::Abnormal),
            "0" => None,
            _ => return Err(bad("label must be -1, 0 or 1")),
        };
        labels.insert(name.trim().to_string(), label);
    }
    Ok(labels)
}

fn physionet_dir(
    dir: &Path,
    files: Vec<PathBuf>,
    out: &mut Vec<ManifestEntry>,
) -> Result<(), SignalIoError> {
    let reference = find_reference(dir).ok_or_else(|| SignalIoError::MissingLabelFile {
        dir: dir.to_path_buf(),
    })?;
    let labels = parse_reference(&reference)?;
    for path in files {
        let id = stem(&path);
        match labels.get(&id) {
            None => return Err(SignalIoError::UnlabeledRecording { path }),
            Some(None) => {}
            Some(Some(label)) => out.push(ManifestEntry {
                path,
                label: *label,
                dataset: DatasetKind::PhysioNet,
                source_id: id,
            }),
        }
    }
    Ok(())
}

fn pascal_class(name: &str) -> Option<Label> {
    let name: String = name
        .to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .collect();
    match name.as_str() {
        "normal" => Some(Label::Normal),
        "murmur" | "extrahls" | "extrahs" | "extrasound" | "extrasounds" | "extra"
        | "extrasystole" | "extrastole" | "artifact" | "artefact" => Some(Label::Abnormal),
        _ => None,
    }
}

fn pascal_dir(
    dir: &Path,
    files: Vec<PathBuf>,
    kind: DatasetKind,
    out: &mut Vec<ManifestEntry>,
) -> Result<(), SignalIoError> {
    let dir_class = dir
        .file_name()
        .and_then(|n| pascal_class(&n.to_string_lossy()));
    let prefix = match kind {
        DatasetKind::PascalA => "pa",
        _ => "pb",
    };
    for path in files {
        let s = stem(&path);
        let label = dir_class.or_else(|| s.split_once("__").and_then(|(c, _)| pascal_class(c)));
        let Some(label) = label else {
            return Err(SignalIoError::UnlabeledRecording { path });
        };
        let source_id = match dir_class {
            Some(_) => {
                let class = dir.file_name().unwrap().to_string_lossy().to_ascii_lowercase();
                format!("{prefix}_{class}__{s}")
            }
            None => format!("{prefix}_{s}"),
        };
        out.push(ManifestEntry {
            path,
            label,
            dataset: kind,
            source_id,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::write_wav;

    fn touch_wav(p: &Path) {
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        write_wav(p, &[0.0; 4], 2000).unwrap();
    }

    #[test]
    fn physionet_layout_with_unsure_excluded() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("training-a");
        for id in ["a0001", "a0002", "a0003"] {
            touch_wav(&a.join(format!("{id}.wav")));
        }
        fs::write(a.join("REFERENCE.csv"), "a0001,-1\na0002,1\na0003,0\n").unwrap();
        let b = tmp.path().join("training-b");
        touch_wav(&b.join("b0001.wav"));
        fs::write(b.join("REFERENCE.csv"), "b0001,1\n").unwrap();

        let m = build_manifest(&[tmp.path()], DatasetKind::PhysioNet).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.counts(), (1, 2));
        assert_eq!(m.entries[0].source_id, "a0001");
        assert_eq!(m.entries[0].label, Label::Normal);
    }

    #[test]
    fn missing_reference_file() {
        let tmp = tempfile::tempdir().unwrap();
        touch_wav(&tmp.path().join("x/a0001.wav"));
        assert!(matches!(
            build_manifest(&[tmp.path()], DatasetKind::PhysioNet),
            Err(SignalIoError::MissingLabelFile { .. })
        ));
    }

    #[test]
    fn recording_absent_from_reference() {
        let tmp = tempfile::tempdir().unwrap();
        touch_wav(&tmp.path().join("a0001.wav"));
        touch_wav(&tmp.path().join("a0009.wav"));
        fs::write(tmp.path().join("REFERENCE.csv"), "a0001,1\n").unwrap();
        assert!(matches!(
            build_manifest(&[tmp.path()], DatasetKind::PhysioNet),
            Err(SignalIoError::UnlabeledRecording { .. })
        ));
    }

    #[test]
    fn empty_directory_gives_empty_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let m = build_manifest(&[tmp.path()], DatasetKind::PhysioNet).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.counts(), (0, 0));
        assert!(build_pascal_manifest(tmp.path()).unwrap().is_empty());
    }

    #[test]
    fn pascal_classes_collapse_to_binary() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("set_a");
        for f in [
            "normal__201101070538.wav",
            "murmur__201101051104.wav",
            "extrahls__201101070953.wav",
            "artifact__201012172012.wav",
        ] {
            touch_wav(&a.join(f));
        }
        let b = tmp.path().join("set_b");
        touch_wav(&b.join("normal/103_1305031931979_B.wav"));
        touch_wav(&b.join("extrastole/127_1306764300147_C2.wav"));
        touch_wav(&b.join("murmur/112_1306243000964_A.wav"));

        let m = build_pascal_manifest(tmp.path()).unwrap();
        assert_eq!(m.len(), 7);
        assert_eq!(m.counts(), (2, 5));
        let a_count = m
            .entries
            .iter()
            .filter(|e| e.dataset == DatasetKind::PascalA)
            .count();
        assert_eq!(a_count, 4);
        assert!(m
            .entries
            .iter()
            .any(|e| e.source_id == "pb_normal__103_1305031931979_B"));
    }

    #[test]
    fn pascal_unlabelled_file_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        touch_wav(&tmp.path().join("set_a/Aunlabelledtest__201101.wav"));
        assert!(matches!(
            build_pascal_manifest(tmp.path()),
            Err(SignalIoError::UnlabeledRecording { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            entries: vec![
                ManifestEntry {
                    path: "/d/a0001.wav".into(),
                    label: Label::Normal,
                    dataset: DatasetKind::PhysioNet,
                    source_id: "a0001".into(),
                },
                ManifestEntry {
                    path: "/d/set_b/x, y.wav".into(),
                    label: Label::Abnormal,
                    dataset: DatasetKind::PascalB,
                    source_id: "pb_x".into(),
                },
            ],
        };
        let p = tmp.path().join("manifest.csv");
        m.write_csv(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("path,label,dataset,source_id\n/d/a0001.wav,0,physionet,a0001\n"));
        assert_eq!(DatasetManifest::read_csv(&p).unwrap(), m);
    }
}
