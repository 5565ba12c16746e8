//! Feature/label ingestion, normalization and 15-frame windowing.

mod features;
mod labels;
mod normalize;
mod window;

pub use features::{
    load_feature_track, FeatureTrack, Modality, PerModality, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use labels::{load_labels, parse_labels, LabelTrack};
pub use normalize::{fit_stats, normalize, ColumnStats, NormalizationStats, STD_FLOOR};
pub use window::{
    merge_window_predictions, window_starts, window_track, WINDOW_HOP, WINDOW_LEN, WINDOW_OVERLAP,
};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 7] = [
    "video_id",
    "split",
    "audio_path",
    "expnet_path",
    "facepose_path",
    "label_path",
    "n_frames",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(Error::Format(format!("unknown split {other:?} (expected train or val)"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

/// One row of the manifest, with paths resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub split: Split,
    pub paths: PerModality<PathBuf>,
    pub label_path: Option<PathBuf>,
    pub n_frames: usize,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("manifest header: {e}")))?
        .clone();
    if headers.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "manifest header must be {}",
            MANIFEST_HEADER.join(",")
        )));
    }
    let resolve = |s: &str| -> Option<PathBuf> {
        if s.is_empty() {
            None
        } else {
            Some(base.join(s))
        }
    };
    let mut entries: Vec<ManifestEntry> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Format(format!("manifest line {line}: {e}")))?;
        let video_id = rec[0].to_string();
        if video_id.is_empty() {
            return Err(Error::Format(format!("manifest line {line}: empty video_id")));
        }
        if entries.iter().any(|e| e.video_id == video_id) {
            return Err(Error::Format(format!(
                "manifest line {line}: duplicate video_id {video_id:?}"
            )));
        }
        let n_frames: usize = rec[6]
            .parse()
            .map_err(|_| Error::Parse(format!("manifest line {line}: n_frames {:?}", &rec[6])))?;
        if n_frames == 0 {
            return Err(Error::domain(format!("manifest line {line}: n_frames must be ≥ 1")));
        }
        entries.push(ManifestEntry {
            video_id,
            split: rec[1].parse()?,
            paths: PerModality {
                audio: resolve(&rec[2]),
                expnet: resolve(&rec[3]),
                facepose: resolve(&rec[4]),
            },
            label_path: resolve(&rec[5]),
            n_frames,
        });
    }
    Ok(entries)
}

/// Loaded tracks of one video.
#[derive(Debug, Clone)]
pub struct VideoRecord {
    pub video_id: String,
    pub split: Split,
    pub n_frames: usize,
    pub features: PerModality<FeatureTrack>,
    pub labels: Option<LabelTrack>,
}

impl VideoRecord {
    /// Checks that every present track has `n_frames` rows.
    pub fn validate(&self) -> Result<()> {
        for (m, t) in self.features.iter() {
            if t.rows() != self.n_frames {
                return Err(Error::domain(format!(
                    "{}: {m} track has {} rows, manifest says {} frames",
                    self.video_id,
                    t.rows(),
                    self.n_frames
                )));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.n_frames {
                return Err(Error::domain(format!(
                    "{}: label track has {} rows, manifest says {} frames",
                    self.video_id,
                    l.len(),
                    self.n_frames
                )));
            }
        }
        Ok(())
    }

    pub fn track(&self, m: Modality) -> Result<&FeatureTrack> {
        self.features.get(m).ok_or_else(|| {
            Error::Coverage(format!("{}: no {m} features", self.video_id))
        })
    }
}

/// Loads the given modalities (and labels when `with_labels`) for every entry.
pub fn load_records(
    entries: &[ManifestEntry],
    modalities: &[Modality],
    with_labels: bool,
) -> Result<Vec<VideoRecord>> {
    entries
        .iter()
        .map(|e| {
            let mut features = PerModality::default();
            for &m in modalities {
                let p = e.paths.get(m).ok_or_else(|| {
                    Error::Coverage(format!("{}: manifest has no {m} path", e.video_id))
                })?;
                features.set(m, load_feature_track(p, m)?);
            }
            let labels = if with_labels {
                let p = e.label_path.as_ref().ok_or_else(|| {
                    Error::Coverage(format!("{}: manifest has no label path", e.video_id))
                })?;
                Some(load_labels(p)?)
            } else {
                None
            };
            let rec = VideoRecord {
                video_id: e.video_id.clone(),
                split: e.split,
                n_frames: e.n_frames,
                features,
                labels,
            };
            rec.validate()?;
            Ok(rec)
        })
        .collect()
}

/// A 15-frame slice of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    /// Index of the video in the record list it was cut from.
    pub video: usize,
    pub start: usize,
    /// `[15 × dim]` row-major per modality.
    pub features: PerModality<Vec<f64>>,
    /// `[15 × 2]` valence/arousal.
    pub targets: Vec<f64>,
    /// False for padded frames and frames without a valid label.
    pub mask: Vec<bool>,
}

/// Cuts one video into windows. Short tracks are padded by repeating their
/// last frame; padded frames are masked.
pub fn build_windows(
    video: usize,
    record: &VideoRecord,
    modalities: &[Modality],
) -> Result<Vec<SequenceWindow>> {
    let starts = window_track(record.n_frames)?;
    let mut out = Vec::with_capacity(starts.len());
    for start in starts {
        let frames: Vec<usize> = (start..start + WINDOW_LEN)
            .map(|f| f.min(record.n_frames - 1))
            .collect();
        let mut features = PerModality::default();
        for &m in modalities {
            let t = record.track(m)?;
            let mut buf = Vec::with_capacity(WINDOW_LEN * t.cols());
            for &f in &frames {
                buf.extend_from_slice(t.row(f));
            }
            features.set(m, buf);
        }
        let mut targets = vec![0.0; 2 * WINDOW_LEN];
        let mut mask = vec![false; WINDOW_LEN];
        for (i, f) in (start..start + WINDOW_LEN).enumerate() {
            if f >= record.n_frames {
                continue;
            }
            if let Some(l) = &record.labels {
                if l.valid[f] {
                    targets[2 * i] = l.valence[f];
                    targets[2 * i + 1] = l.arousal[f];
                    mask[i] = true;
                }
            }
        }
        out.push(SequenceWindow {
            video,
            start,
            features,
            targets,
            mask,
        });
    }
    Ok(out)
}
