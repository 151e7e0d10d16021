use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::{apply_filter, BandpassFilter, DspError};
use crate::signal_io::{load_wav, resample, AudioRecording, DatasetManifest, Label};
use crate::{CANONICAL_RATE, SEGMENT_LEN};

const SEGMENT_MAGIC: &[u8; 4] = b"PCGS";
const SEGMENT_VERSION: u32 = 1;
/// Label byte for segments cut from unlabeled recordings.
pub(crate) const UNLABELED: u8 = 0xFF;

/// An 8-second window of a filtered recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub parent_id: String,
    pub index: usize,
    pub label: Option<Label>,
}

impl Segment {
    /// `<parent_id>_<index>`, the provenance key used by both caches.
    pub fn id(&self) -> String {
        format!("{}_{}", self.parent_id, self.index)
    }
}

/// Non-overlapping 16000-sample windows from sample 0; the short tail is dropped.
pub fn segment(rec: &AudioRecording) -> Result<Vec<Segment>, DspError> {
    if rec.sample_rate != CANONICAL_RATE {
        return Err(DspError::RateMismatch {
            expected: CANONICAL_RATE,
            actual: rec.sample_rate,
        });
    }
    Ok(rec
        .samples
        .chunks_exact(SEGMENT_LEN)
        .enumerate()
        .map(|(index, w)| Segment {
            samples: w.to_vec(),
            parent_id: rec.source_id.clone(),
            index,
            label: rec.label,
        })
        .collect())
}

/// resample -> filter -> segment for one recording.
pub fn preprocess_recording(
    rec: &AudioRecording,
    filter: &BandpassFilter,
) -> Result<Vec<Segment>, DspError> {
    let canonical = resample(rec, CANONICAL_RATE);
    let filtered = apply_filter(filter, &canonical)?;
    segment(&filtered)
}

#[derive(Debug)]
pub struct PreprocessFailure {
    pub path: PathBuf,
    pub error: DspError,
}

#[derive(Debug, Default)]
pub struct PreprocessOutput {
    pub segments: Vec<Segment>,
    pub failures: Vec<PreprocessFailure>,
    /// Recordings that loaded fine but were shorter than one segment.
    pub discarded: usize,
}

impl PreprocessOutput {
    /// (normal, abnormal) segment counts.
    pub fn counts(&self) -> (usize, usize) {
        let abnormal = self
            .segments
            .iter()
            .filter(|s| s.label == Some(Label::Abnormal))
            .count();
        (self.segments.len() - abnormal, abnormal)
    }
}

/// Runs load -> resample -> filter -> segment over every manifest entry.
///
/// A file that fails is logged and reported in `failures`; the rest of the
/// dataset still goes through.
pub fn preprocess_dataset(manifest: &DatasetManifest) -> PreprocessOutput {
    let filter = super::canonical_filter();
    let per_file = crate::par::map_ordered(&manifest.entries, |_, entry| {
        let rec = load_wav(&entry.path)?;
        let rec = AudioRecording {
            source_id: entry.source_id.clone(),
            ..rec
        }
        .with_label(entry.label)
        .with_dataset(entry.dataset);
        preprocess_recording(&rec, &filter)
    });
    let mut out = PreprocessOutput::default();
    for (entry, result) in manifest.entries.iter().zip(per_file) {
        match result {
            Ok(segs) if segs.is_empty() => out.discarded += 1,
            Ok(segs) => out.segments.extend(segs),
            Err(error) => {
                warn!("skipping {}: {error}", entry.path.display());
                out.failures.push(PreprocessFailure {
                    path: entry.path.clone(),
                    error,
                });
            }
        }
    }
    out
}

pub fn segment_file_name(seg: &Segment) -> String {
    format!("{}.seg", seg.id())
}

/// Writes `<dir>/<source_id>_<index>.seg` and returns its path.
pub fn write_segment(dir: impl AsRef<Path>, seg: &Segment) -> Result<PathBuf, DspError> {
    let path = dir.as_ref().join(segment_file_name(seg));
    let mut buf = Vec::with_capacity(13 + 4 * seg.samples.len());
    buf.extend_from_slice(SEGMENT_MAGIC);
    buf.extend_from_slice(&SEGMENT_VERSION.to_le_bytes());
    buf.push(seg.label.map(Label::as_u8).unwrap_or(UNLABELED));
    for &s in &seg.samples {
        buf.extend_from_slice(&(s as f32).to_le_bytes());
    }
    fs::write(&path, buf).map_err(|source| DspError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Reads a segment file; provenance comes from the file name.
pub fn read_segment(path: impl AsRef<Path>) -> Result<Segment, DspError> {
    let path = path.as_ref();
    let corrupt = |reason: &str| DspError::CacheCorrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let bytes = fs::read(path).map_err(|source| DspError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 9 || &bytes[..4] != SEGMENT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SEGMENT_VERSION {
        return Err(corrupt("unsupported version"));
    }
    let label = match bytes[8] {
        UNLABELED => None,
        b => Some(Label::from_u8(b).ok_or_else(|| corrupt("bad label byte"))?),
    };
    let body = &bytes[9..];
    if body.len() != 4 * SEGMENT_LEN {
        return Err(corrupt("wrong payload length"));
    }
    let samples = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (parent_id, index) = stem
        .rsplit_once('_')
        .and_then(|(p, i)| i.parse().ok().map(|i| (p.to_string(), i)))
        .ok_or_else(|| corrupt("file name is not <source_id>_<index>.seg"))?;
    Ok(Segment {
        samples,
        parent_id,
        index,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{write_wav, DatasetKind, ManifestEntry};
    use proptest::prelude::*;

    fn rec(len: usize) -> AudioRecording {
        AudioRecording::new(vec![0.1; len], 2000, "r").with_label(Label::Abnormal)
    }

    #[test]
    fn exact_one_segment() {
        assert_eq!(segment(&rec(16000)).unwrap().len(), 1);
    }

    #[test]
    fn short_recording_is_discarded() {
        assert!(segment(&rec(15999)).unwrap().is_empty());
    }

    #[test]
    fn windows_are_consecutive() {
        let samples: Vec<f64> = (0..40000).map(|i| i as f64).collect();
        let r = AudioRecording::new(samples, 2000, "w").with_label(Label::Normal);
        let segs = segment(&r).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].samples[0], 0.0);
        assert_eq!(segs[1].samples[0], 16000.0);
        assert_eq!(segs[1].samples[15999], 31999.0);
        assert_eq!(segs[1].index, 1);
        assert!(segs.iter().all(|s| s.label == Some(Label::Normal)));
    }

    #[test]
    fn segment_requires_canonical_rate() {
        let r = AudioRecording::new(vec![0.0; 32000], 4000, "x");
        assert!(segment(&r).is_err());
    }

    proptest! {
        #[test]
        fn segment_count_law(len in 0usize..100_000) {
            let segs = segment(&rec(len)).unwrap();
            prop_assert_eq!(segs.len(), len / 16000);
            prop_assert!(segs.iter().all(|s| s.samples.len() == 16000));
        }
    }

    #[test]
    fn empty_manifest_yields_nothing() {
        let out = preprocess_dataset(&DatasetManifest::default());
        assert!(out.segments.is_empty() && out.failures.is_empty());
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let tmp = tempfile::tempdir().unwrap();
        let good = tmp.path().join("good.wav");
        write_wav(&good, &vec![0.01; 40000], 2000).unwrap();
        let bad = tmp.path().join("bad.wav");
        fs::write(&bad, b"nope").unwrap();
        let manifest = DatasetManifest {
            entries: vec![
                ManifestEntry {
                    path: bad.clone(),
                    label: Label::Normal,
                    dataset: DatasetKind::PhysioNet,
                    source_id: "bad".into(),
                },
                ManifestEntry {
                    path: good,
                    label: Label::Abnormal,
                    dataset: DatasetKind::PhysioNet,
                    source_id: "good".into(),
                },
            ],
        };
        let out = preprocess_dataset(&manifest);
        assert_eq!(out.segments.len(), 2);
        assert_eq!(out.counts(), (0, 2));
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].path, bad);
        assert_eq!(out.segments[0].parent_id, "good");
    }

    #[test]
    fn segment_cache_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let seg = Segment {
            samples: (0..16000).map(|i| (i as f64 * 0.001).sin() * 0.5).collect(),
            parent_id: "a0001".into(),
            index: 3,
            label: Some(Label::Abnormal),
        };
        let p = write_segment(tmp.path(), &seg).unwrap();
        assert_eq!(p.file_name().unwrap(), "a0001_3.seg");
        let back = read_segment(&p).unwrap();
        assert_eq!(back.parent_id, "a0001");
        assert_eq!(back.index, 3);
        assert_eq!(back.label, Some(Label::Abnormal));
        for (a, b) in back.samples.iter().zip(&seg.samples) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 1 + 64000);
        fs::write(&p, &bytes[..100]).unwrap();
        assert!(matches!(read_segment(&p), Err(DspError::CacheCorrupt { .. })));
    }
}
