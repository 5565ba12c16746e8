use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Per-frame valence/arousal annotations.
///
/// A frame is valid only when both values lie in `[-1, 1]`; the `-5` sentinel
/// used for unannotated frames and any other out-of-range value are masked.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    pub valence: Vec<f64>,
    pub arousal: Vec<f64>,
    pub valid: Vec<bool>,
}

fn in_range(v: f64) -> bool {
    (-1.0..=1.0).contains(&v)
}

impl LabelTrack {
    /// Builds a track from raw pairs, deriving the validity mask.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let valence: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let arousal: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let valid = pairs.iter().map(|&(v, a)| in_range(v) && in_range(a)).collect();
        Self {
            valence,
            arousal,
            valid,
        }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("frame,valence,arousal\n");
        for i in 0..self.len() {
            out.push_str(&format!("{i},{},{}\n", self.valence[i], self.arousal[i]));
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads a `frame,valence,arousal` CSV with contiguous frame indices from 0.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelTrack> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn parse_labels(text: &str) -> Result<LabelTrack> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("label header: {e}")))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() != 3
        || !matches!(names[0], "frame" | "frame_index")
        || names[1] != "valence"
        || names[2] != "arousal"
    {
        return Err(Error::Format(format!(
            "label header must be frame,valence,arousal; got {}",
            names.join(",")
        )));
    }

    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Format(format!("line {line}: {e}")))?;
        if record.len() != 3 {
            return Err(Error::Format(format!("line {line}: expected 3 fields")));
        }
        let frame: usize = record[0]
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: frame index {:?}", &record[0])))?;
        if frame != i {
            return Err(Error::Format(format!(
                "line {line}: frame index {frame}, expected {i} (indices must be contiguous from 0)"
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("line {line}: {what} {s:?}")))
        };
        pairs.push((num(&record[1], "valence")?, num(&record[2], "arousal")?));
    }
    Ok(LabelTrack::from_pairs(&pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_masks_frame() {
        let t = parse_labels("frame,valence,arousal\n0,0.5,-0.25\n1,-5,-5\n").unwrap();
        assert_eq!(t.valid, vec![true, false]);
        assert_eq!(t.valence[0], 0.5);
        assert_eq!(t.arousal[0], -0.25);
    }

    #[test]
    fn boundary_and_out_of_range() {
        let t = parse_labels("frame_index,valence,arousal\n0,1.0,-1.0\n1,1.2,0\n").unwrap();
        assert_eq!(t.valid, vec![true, false]);
        assert_eq!(t.valence[0], 1.0);
    }

    #[test]
    fn gaps_and_disorder_rejected() {
        assert!(matches!(
            parse_labels("frame,valence,arousal\n0,0,0\n2,0,0\n"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_labels("frame,valence,arousal\n1,0,0\n0,0,0\n"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn non_numeric_is_parse_error() {
        assert!(matches!(
            parse_labels("frame,valence,arousal\n0,abc,0\n"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        let t = LabelTrack::from_pairs(&[(0.1, 0.2), (-5.0, -5.0), (0.3, -0.7)]);
        t.save(&p).unwrap();
        assert_eq!(load_labels(&p).unwrap(), t);
    }
}
