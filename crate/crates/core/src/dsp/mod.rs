//! Frame-aligned audio features.
//!
//! A clip is split into one half-overlapping segment per video frame. Each
//! segment is analysed with a Hann-windowed STFT, projected on a mel
//! filterbank, log-compressed and time-averaged into a 128-band log-mel
//! vector; the first 40 orthonormal DCT-II coefficients of that vector are the
//! MFCCs. The per-frame feature is `mfcc ++ mel` (168 values).

mod dct;
mod fft;
mod mel;
mod segment;

pub use dct::Dct2;
pub use fft::{fft, fft_in_place, power_spectrum};
pub use mel::{hz_to_mel, mel_frequencies, mel_to_hz, MelFilterbank};
pub use segment::{plan_segments, SegmentPlan};

use std::f64::consts::PI;
use std::ops::Range;

use rayon::prelude::*;

use crate::audio_io::AudioClip;
use crate::dataset::{FeatureTrack, Modality};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DspParams {
    pub n_fft: usize,
    pub stft_hop: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency of the clip.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for DspParams {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            stft_hop: 512,
            n_mels: 128,
            n_mfcc: 40,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
        }
    }
}

impl DspParams {
    pub fn feature_dim(&self) -> usize {
        self.n_mfcc + self.n_mels
    }

    fn validate(&self) -> Result<()> {
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(Error::domain(format!("n_fft {} must be a power of two ≥ 2", self.n_fft)));
        }
        if self.stft_hop == 0 {
            return Err(Error::domain("stft_hop must be ≥ 1"));
        }
        if self.n_mfcc > self.n_mels {
            return Err(Error::domain(format!(
                "n_mfcc {} exceeds n_mels {}",
                self.n_mfcc, self.n_mels
            )));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return Err(Error::domain("log_floor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioFrameFeatures {
    pub mfcc: Vec<f64>,
    pub mel: Vec<f64>,
}

impl AudioFrameFeatures {
    /// `mfcc ++ mel`.
    pub fn combined(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.mfcc.len() + self.mel.len());
        out.extend_from_slice(&self.mfcc);
        out.extend_from_slice(&self.mel);
        out
    }
}

/// Precomputed window, filterbank and DCT for one sample rate.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    params: DspParams,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    dct: Dct2,
}

impl FeatureExtractor {
    pub fn new(sample_rate: u32, params: &DspParams) -> Result<Self> {
        params.validate()?;
        let fmax = params.fmax.unwrap_or(sample_rate as f64 / 2.0);
        let filterbank =
            MelFilterbank::new(sample_rate, params.n_fft, params.n_mels, params.fmin, fmax)?;
        Ok(Self {
            params: params.clone(),
            window: hann_periodic(params.n_fft),
            filterbank,
            dct: Dct2::new(params.n_mels),
        })
    }

    pub fn params(&self) -> &DspParams {
        &self.params
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Features of one segment of samples.
    ///
    /// Segments no longer than `n_fft` are centered in a zero-padded frame and
    /// give a single STFT frame; longer segments are framed at `stft_hop` from
    /// the segment start, keeping only complete frames.
    pub fn frame_features(&self, segment: &[f64]) -> Result<AudioFrameFeatures> {
        if segment.is_empty() {
            return Err(Error::domain("empty audio segment"));
        }
        let n_fft = self.params.n_fft;
        let n_mels = self.params.n_mels;
        let mut mel_sum = vec![0.0; n_mels];
        let mut frame = vec![0.0; n_fft];
        let mut n_frames = 0usize;

        let mut accumulate = |frame: &[f64]| -> Result<()> {
            let power = power_spectrum(frame)?;
            for (acc, e) in mel_sum.iter_mut().zip(self.filterbank.apply(&power)) {
                *acc += 10.0 * e.max(self.params.log_floor).log10();
            }
            n_frames += 1;
            Ok(())
        };

        if segment.len() <= n_fft {
            let offset = (n_fft - segment.len()) / 2;
            for (i, f) in frame.iter_mut().enumerate() {
                let s = i
                    .checked_sub(offset)
                    .and_then(|j| segment.get(j))
                    .copied()
                    .unwrap_or(0.0);
                *f = s * self.window[i];
            }
            accumulate(&frame)?;
        } else {
            let mut start = 0;
            while start + n_fft <= segment.len() {
                for ((f, &s), &w) in frame.iter_mut().zip(&segment[start..]).zip(&self.window) {
                    *f = s * w;
                }
                accumulate(&frame)?;
                start += self.params.stft_hop;
            }
        }

        let mel: Vec<f64> = mel_sum.iter().map(|s| s / n_frames as f64).collect();
        let mfcc = self.dct.forward(&mel, self.params.n_mfcc);
        Ok(AudioFrameFeatures { mfcc, mel })
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Features of the sample range `segment` of `clip`.
pub fn frame_features(
    clip: &AudioClip,
    segment: Range<usize>,
    params: &DspParams,
) -> Result<AudioFrameFeatures> {
    let samples = clip
        .samples()
        .get(segment.clone())
        .ok_or_else(|| Error::domain(format!("segment {segment:?} outside clip")))?;
    FeatureExtractor::new(clip.sample_rate(), params)?.frame_features(samples)
}

/// One feature row per video frame, `n_frames × (n_mfcc + n_mels)`.
pub fn extract_audio_track(
    clip: &AudioClip,
    n_frames: usize,
    params: &DspParams,
) -> Result<FeatureTrack> {
    let plan = plan_segments(clip.duration_samples(), n_frames)?;
    let extractor = FeatureExtractor::new(clip.sample_rate(), params)?;
    let rows: Vec<Vec<f64>> = (0..plan.n_segments())
        .into_par_iter()
        .map(|i| {
            extractor
                .frame_features(&clip.samples()[plan.range(i)])
                .map(|f| f.combined())
        })
        .collect::<Result<_>>()?;
    let cols = params.feature_dim();
    FeatureTrack::from_rows(Modality::Audio, cols, rows)
}
