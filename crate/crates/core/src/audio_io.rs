//! WAV decoding into normalized mono buffers.
//!
//! Accepts RIFF/WAVE with PCM (16/24/32-bit) or IEEE float (32-bit) samples,
//! one or two channels. Integer samples are scaled by `2^(bits-1)`; stereo is
//! downmixed by averaging the channels. No resampling is performed.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Decoded mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip from raw samples, clamping each into `[-1, 1]`.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::domain("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::domain("audio samples must be finite"));
        }
        let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_samples(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleFormat {
    Int(u16),
    Float32,
}

#[derive(Debug, Clone, Copy)]
struct FmtChunk {
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    format: SampleFormat,
}

/// Reads and decodes a WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Decodes an in-memory WAV image.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 {
        return Err(Error::Format("file shorter than RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE signature".into()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(&bytes[pos + 4..pos + 8]) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                let end = body_start
                    .checked_add(size)
                    .filter(|&e| e <= bytes.len())
                    .ok_or_else(|| Error::Format("fmt chunk runs past end of file".into()))?;
                fmt = Some(parse_fmt(&bytes[body_start..end])?);
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| Error::Format("data chunk before fmt chunk".into()))?;
                let available = bytes.len() - body_start;
                if size > available {
                    return Err(Error::Truncated {
                        what: "data chunk",
                        expected: size as u64,
                        found: available as u64,
                    });
                }
                return decode_samples(&bytes[body_start..body_start + size], fmt);
            }
            // LIST, INFO, fact, cue, ... are skipped.
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    match fmt {
        None => Err(Error::Format("no fmt chunk".into())),
        Some(_) => Err(Error::Format("no data chunk".into())),
    }
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::Format(format!(
            "fmt chunk is {} bytes, need at least 16",
            body.len()
        )));
    }
    let mut code = le_u16(&body[0..2]);
    let channels = le_u16(&body[2..4]);
    let sample_rate = le_u32(&body[4..8]);
    let block_align = le_u16(&body[12..14]);
    let bits = le_u16(&body[14..16]);

    if code == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID whose
        // first two bytes carry the actual format code.
        if body.len() < 26 {
            return Err(Error::Format("truncated WAVE_FORMAT_EXTENSIBLE header".into()));
        }
        code = le_u16(&body[24..26]);
    }

    let format = match (code, bits) {
        (FORMAT_PCM, 16 | 24 | 32) => SampleFormat::Int(bits),
        (FORMAT_IEEE_FLOAT, 32) => SampleFormat::Float32,
        (FORMAT_PCM | FORMAT_IEEE_FLOAT, b) => {
            return Err(Error::UnsupportedEncoding(format!(
                "format code {code} with {b} bits per sample"
            )))
        }
        (c, _) => {
            return Err(Error::UnsupportedEncoding(format!(
                "format code {c:#06x} (only PCM and IEEE float are supported)"
            )))
        }
    };
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedEncoding(format!(
            "{channels} channels (only mono and stereo are supported)"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::Format("sample rate is zero".into()));
    }
    let expected_align = channels * (bits / 8);
    if block_align != expected_align {
        return Err(Error::Format(format!(
            "block align {block_align} does not match {channels} x {bits}-bit"
        )));
    }
    Ok(FmtChunk {
        channels,
        sample_rate,
        block_align,
        format,
    })
}

fn decode_samples(data: &[u8], fmt: FmtChunk) -> Result<AudioClip> {
    let align = fmt.block_align as usize;
    if !data.len().is_multiple_of(align) {
        let expected = (data.len() / align + 1) * align;
        return Err(Error::Truncated {
            what: "data chunk (partial sample frame)",
            expected: expected as u64,
            found: data.len() as u64,
        });
    }
    let width = align / fmt.channels as usize;
    let decode_one = |b: &[u8]| -> f64 {
        match fmt.format {
            SampleFormat::Int(16) => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
            SampleFormat::Int(24) => {
                // Sign-extend by placing the 3 bytes in the top of an i32.
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                v as f64 / 8_388_608.0
            }
            SampleFormat::Int(_) => {
                i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0
            }
            SampleFormat::Float32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        }
    };

    let mut samples = Vec::with_capacity(data.len() / align);
    for frame in data.chunks_exact(align) {
        let s = if fmt.channels == 1 {
            decode_one(frame)
        } else {
            (decode_one(&frame[..width]) + decode_one(&frame[width..])) / 2.0
        };
        if !s.is_finite() {
            return Err(Error::Format("non-finite float sample".into()));
        }
        samples.push(s);
    }
    AudioClip::new(samples, fmt.sample_rate)
}

/// Encodes interleaved 16-bit PCM samples as a WAV image.
///
/// `samples` holds `channels` interleaved values per frame in `[-1, 1]`; they
/// are quantized by rounding `s * 32768` and saturating.
pub fn encode_wav_pcm16(samples: &[f64], channels: u16, sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * channels as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(channels * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Writes interleaved samples as a 16-bit PCM WAV file.
pub fn write_wav_pcm16(
    path: impl AsRef<Path>,
    samples: &[f64],
    channels: u16,
    sample_rate: u32,
) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_wav_pcm16(samples, channels, sample_rate))
        .map_err(|e| Error::io(path, e))
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wav_with(code: u16, channels: u16, bits: u16, payload: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + payload.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&code.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&16000u32.to_le_bytes());
        let align = channels * bits / 8;
        out.extend_from_slice(&(16000 * align as u32).to_le_bytes());
        out.extend_from_slice(&align.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn full_scale_pcm16() {
        let clip = decode_wav(&wav_with(1, 1, 16, &32767i16.to_le_bytes())).unwrap();
        assert_eq!(clip.samples(), &[32767.0 / 32768.0]);
    }

    #[test]
    fn silence_keeps_rate_and_length() {
        let clip = decode_wav(&encode_wav_pcm16(&[0.0; 100], 1, 16000)).unwrap();
        assert_eq!(clip.sample_rate(), 16000);
        assert_eq!(clip.duration_samples(), 100);
        assert!(clip.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn symmetric_stereo_downmixes_to_zero() {
        let mut payload = Vec::new();
        payload.extend_from_slice(&16384i16.to_le_bytes());
        payload.extend_from_slice(&(-16384i16).to_le_bytes());
        let clip = decode_wav(&wav_with(1, 2, 16, &payload)).unwrap();
        assert_eq!(clip.samples(), &[0.0]);
    }

    #[test]
    fn pcm24_and_pcm32_and_float() {
        // -2^22 in 24-bit is -0.5
        let v: i32 = -(1 << 22);
        let b = v.to_le_bytes();
        let clip = decode_wav(&wav_with(1, 1, 24, &b[..3])).unwrap();
        assert_eq!(clip.samples(), &[-0.5]);

        let clip = decode_wav(&wav_with(1, 1, 32, &(1i32 << 30).to_le_bytes())).unwrap();
        assert_eq!(clip.samples(), &[0.5]);

        let clip = decode_wav(&wav_with(3, 1, 32, &0.25f32.to_le_bytes())).unwrap();
        assert_eq!(clip.samples(), &[0.25]);
    }

    #[test]
    fn skips_list_chunk() {
        let mut bytes = encode_wav_pcm16(&[0.5], 1, 8000);
        // splice a LIST chunk between fmt and data
        let list = b"LIST\x05\x00\x00\x00INFOx\x00";
        let data_at = bytes.windows(4).position(|w| w == b"data").unwrap();
        bytes.splice(data_at..data_at, list.iter().copied());
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples(), &[0.5]);
    }

    #[test]
    fn compressed_codec_is_unsupported() {
        let err = decode_wav(&wav_with(0x55, 1, 16, &[0, 0])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedEncoding(_)), "{err}");
    }

    #[test]
    fn pcm8_is_unsupported() {
        let err = decode_wav(&wav_with(1, 1, 8, &[0])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedEncoding(_)), "{err}");
    }

    #[test]
    fn truncated_data_reports_counts() {
        let mut bytes = encode_wav_pcm16(&[0.0; 10], 1, 8000);
        bytes.truncate(bytes.len() - 6);
        match decode_wav(&bytes).unwrap_err() {
            Error::Truncated {
                expected, found, ..
            } => {
                assert_eq!(expected, 20);
                assert_eq!(found, 14);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(
            decode_wav(b"RIFX\0\0\0\0WAVE").unwrap_err(),
            Error::Format(_)
        ));
        assert!(matches!(decode_wav(b"RIFF").unwrap_err(), Error::Format(_)));
    }

    proptest! {
        #[test]
        fn pcm16_round_trip(samples in proptest::collection::vec(-1.0f64..1.0, 1..200)) {
            let clip = decode_wav(&encode_wav_pcm16(&samples, 1, 22050)).unwrap();
            prop_assert_eq!(clip.duration_samples(), samples.len());
            for (a, b) in clip.samples().iter().zip(&samples) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0);
            }
        }

        #[test]
        fn identical_channels_downmix_exactly(samples in proptest::collection::vec(-1.0f64..1.0, 1..100)) {
            let stereo: Vec<f64> = samples.iter().flat_map(|&s| [s, s]).collect();
            let mono = decode_wav(&encode_wav_pcm16(&samples, 1, 8000)).unwrap();
            let down = decode_wav(&encode_wav_pcm16(&stereo, 2, 8000)).unwrap();
            prop_assert_eq!(mono.samples(), down.samples());
        }
    }
}
