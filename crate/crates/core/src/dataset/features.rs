use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"AFFW";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    /// MFCC-40 + log-mel-128.
    Audio,
    /// Expression-network embedding.
    Expnet,
    /// Head pose, gaze and action-unit descriptors.
    Facepose,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Expnet, Modality::Facepose];

    /// Column count of tracks stored on disk for this modality.
    pub fn width(self) -> usize {
        match self {
            Modality::Audio => 168,
            Modality::Expnet => 2048,
            Modality::Facepose => 714,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Expnet => "expnet",
            Modality::Facepose => "facepose",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(Modality::Audio),
            "expnet" => Ok(Modality::Expnet),
            "facepose" => Ok(Modality::Facepose),
            other => Err(Error::Config(format!("unknown modality {other:?}"))),
        }
    }
}

/// One value per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct PerModality<T> {
    pub audio: Option<T>,
    pub expnet: Option<T>,
    pub facepose: Option<T>,
}

impl<T> Default for PerModality<T> {
    fn default() -> Self {
        Self {
            audio: None,
            expnet: None,
            facepose: None,
        }
    }
}

impl<T> PerModality<T> {
    pub fn get(&self, m: Modality) -> Option<&T> {
        match m {
            Modality::Audio => self.audio.as_ref(),
            Modality::Expnet => self.expnet.as_ref(),
            Modality::Facepose => self.facepose.as_ref(),
        }
    }

    pub fn get_mut(&mut self, m: Modality) -> Option<&mut T> {
        match m {
            Modality::Audio => self.audio.as_mut(),
            Modality::Expnet => self.expnet.as_mut(),
            Modality::Facepose => self.facepose.as_mut(),
        }
    }

    pub fn set(&mut self, m: Modality, value: T) {
        let slot = match m {
            Modality::Audio => &mut self.audio,
            Modality::Expnet => &mut self.expnet,
            Modality::Facepose => &mut self.facepose,
        };
        *slot = Some(value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (Modality, &T)> {
        Modality::ALL
            .into_iter()
            .filter_map(move |m| self.get(m).map(|v| (m, v)))
    }
}

/// Per-frame feature matrix of one video, row-major `[n_frames × dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    modality: Modality,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureTrack {
    pub fn new(modality: Modality, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain(format!(
                "{modality} track: {} values for {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "{modality} track: non-finite value at row {} col {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(Self {
            modality,
            rows,
            cols,
            data,
        })
    }

    pub fn from_rows(modality: Modality, cols: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != cols {
                return Err(Error::domain(format!(
                    "{modality} track row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend(r);
        }
        Self::new(modality, n, cols, data)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Serializes in the `AFFW` v1 layout; values are stored as f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Decodes an `AFFW` image without checking the column count.
    pub fn from_bytes(bytes: &[u8], modality: Modality) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                what: "feature header",
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        if &bytes[0..4] != FEATURE_MAGIC {
            return Err(Error::Magic {
                expected: "AFFW".into(),
                found: String::from_utf8_lossy(&bytes[0..4]).into_owned(),
            });
        }
        let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
        let version = word(4);
        if version != FEATURE_VERSION {
            return Err(Error::Version {
                expected: FEATURE_VERSION,
                found: version,
            });
        }
        let (rows, cols) = (word(8) as usize, word(12) as usize);
        let expected = 4 * rows as u64 * cols as u64;
        let found = (bytes.len() - HEADER_LEN) as u64;
        if found != expected {
            return Err(Error::Truncated {
                what: "feature payload",
                expected,
                found,
            });
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Self::new(modality, rows, cols, data)
    }
}

/// Reads an `AFFW` file and checks its width against the modality.
pub fn load_feature_track(path: impl AsRef<Path>, modality: Modality) -> Result<FeatureTrack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let track = FeatureTrack::from_bytes(&bytes, modality)?;
    if track.cols != modality.width() {
        return Err(Error::WidthMismatch {
            modality: modality.to_string(),
            expected: modality.width(),
            found: track.cols,
        });
    }
    Ok(track)
}
