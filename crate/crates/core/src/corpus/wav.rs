//! RIFF/WAVE reading and writing.
//!
//! Decoding accepts integer PCM at 16 or 24 bits and IEEE float at 32 bits,
//! with one or two channels. Stereo is downmixed to mono by averaging the
//! channels sample by sample. Encoding always writes 16-bit mono PCM.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WavError {
    #[error("not a RIFF/WAVE file")]
    NotRiffWave,
    #[error("fmt chunk missing or truncated")]
    BadFmt,
    #[error("unsupported codec: format tag {format:#06x} with {bits} bits per sample")]
    UnsupportedCodec { format: u16, bits: u16 },
    #[error("unsupported channel count {0} (mono or stereo only)")]
    UnsupportedChannels(u16),
    #[error("invalid sample rate 0")]
    ZeroSampleRate,
    #[error("no data chunk")]
    NoData,
    #[error("truncated data chunk: header declares {declared} bytes, {available} present")]
    TruncatedData { declared: usize, available: usize },
    #[error("data chunk holds no samples")]
    EmptyData,
}

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, Copy)]
enum Encoding {
    Int16,
    Int24,
    Float32,
}

struct Fmt {
    encoding: Encoding,
    channels: u16,
    sample_rate: u32,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> std::result::Result<Fmt, WavError> {
    if body.len() < 16 {
        return Err(WavError::BadFmt);
    }
    let mut format = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if format == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the subformat GUID whose
        // first two bytes carry the plain format tag.
        if body.len() < 26 {
            return Err(WavError::BadFmt);
        }
        format = u16_at(body, 24);
    }
    let encoding = match (format, bits) {
        (FORMAT_PCM, 16) => Encoding::Int16,
        (FORMAT_PCM, 24) => Encoding::Int24,
        (FORMAT_IEEE_FLOAT, 32) => Encoding::Float32,
        (format, bits) => return Err(WavError::UnsupportedCodec { format, bits }),
    };
    if channels == 0 || channels > 2 {
        return Err(WavError::UnsupportedChannels(channels));
    }
    if sample_rate == 0 {
        return Err(WavError::ZeroSampleRate);
    }
    Ok(Fmt { encoding, channels, sample_rate })
}

/// Decodes an in-memory WAV image.
pub fn decode_wav_bytes(bytes: &[u8]) -> std::result::Result<Waveform, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotRiffWave);
    }
    let mut fmt = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        match id {
            b"fmt " => {
                if size > available {
                    return Err(WavError::BadFmt);
                }
                fmt = Some(parse_fmt(&bytes[body_start..body_start + size])?);
            }
            b"data" => {
                let fmt = fmt.ok_or(WavError::BadFmt)?;
                if size > available {
                    return Err(WavError::TruncatedData { declared: size, available });
                }
                return decode_samples(&fmt, &bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_start + size + (size & 1);
    }
    Err(WavError::NoData)
}

fn decode_samples(fmt: &Fmt, data: &[u8]) -> std::result::Result<Waveform, WavError> {
    let width = match fmt.encoding {
        Encoding::Int16 => 2,
        Encoding::Int24 => 3,
        Encoding::Float32 => 4,
    };
    let channels = fmt.channels as usize;
    let frame = width * channels;
    if data.len() % frame != 0 {
        return Err(WavError::TruncatedData {
            declared: data.len().div_ceil(frame) * frame,
            available: data.len(),
        });
    }
    let frames = data.len() / frame;
    if frames == 0 {
        return Err(WavError::EmptyData);
    }
    let read = |at: usize| -> f64 {
        let v = match fmt.encoding {
            Encoding::Int16 => i16::from_le_bytes([data[at], data[at + 1]]) as f64 / 32768.0,
            Encoding::Int24 => {
                // sign-extend through the top byte of an i32
                let raw = i32::from_le_bytes([0, data[at], data[at + 1], data[at + 2]]) >> 8;
                raw as f64 / 8_388_608.0
            }
            Encoding::Float32 => f32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]]) as f64,
        };
        if v.is_finite() {
            v.clamp(-1.0, 1.0)
        } else {
            0.0
        }
    };
    let samples = (0..frames)
        .map(|f| {
            let base = f * frame;
            let sum: f64 = (0..channels).map(|c| read(base + c * width)).sum();
            sum / channels as f64
        })
        .collect();
    Ok(Waveform { samples, sample_rate: fmt.sample_rate })
}

/// Reads and decodes a WAV file to a mono waveform in [-1, 1].
pub fn decode_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_wav_bytes(&bytes)?)
}

/// Quantizes one sample to 16-bit PCM.
pub fn quantize_i16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes mono samples as a 16-bit PCM WAV image.
pub fn encode_wav_i16(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        out.extend_from_slice(&quantize_i16(s).to_le_bytes());
    }
    out
}

pub fn write_wav_i16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    fs::write(path, encode_wav_i16(samples, sample_rate)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod fixtures {
    /// Builds a WAV image with an arbitrary format tag from raw frame bytes.
    pub fn wav_image(format: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let block = channels * bits / 8;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data.len()) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * block as u32).to_le_bytes());
        out.extend_from_slice(&block.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::wav_image;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_16_bit_mono() {
        let data: Vec<u8> = [0i16, 16384, -16384].iter().flat_map(|v| v.to_le_bytes()).collect();
        let w = decode_wav_bytes(&wav_image(FORMAT_PCM, 1, 48000, 16, &data)).unwrap();
        assert_eq!(w.sample_rate, 48000);
        let expected = [0.0, 0.5, -0.5];
        for (a, b) in w.samples.iter().zip(expected) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn stereo_float_is_channel_averaged() {
        let frames = [(0.2f32, 0.4f32), (0.2, 0.0)];
        let data: Vec<u8> = frames
            .iter()
            .flat_map(|(l, r)| l.to_le_bytes().into_iter().chain(r.to_le_bytes()))
            .collect();
        let w = decode_wav_bytes(&wav_image(FORMAT_IEEE_FLOAT, 2, 44100, 32, &data)).unwrap();
        assert!((w.samples[0] - 0.3).abs() < 1e-7);
        assert!((w.samples[1] - 0.1).abs() < 1e-7);
    }

    #[test]
    fn decodes_24_bit_with_sign() {
        let vals: [i32; 3] = [4_194_304, -4_194_304, -8_388_608];
        let data: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()[..3].to_vec()).collect();
        let w = decode_wav_bytes(&wav_image(FORMAT_PCM, 1, 48000, 24, &data)).unwrap();
        assert_eq!(w.samples, vec![0.5, -0.5, -1.0]);
    }

    #[test]
    fn text_file_is_rejected() {
        let err = decode_wav_bytes(b"hello, this is not audio at all").unwrap_err();
        assert_eq!(err, WavError::NotRiffWave);
        assert_eq!(err.to_string(), "not a RIFF/WAVE file");
    }

    #[test]
    fn compressed_codec_is_rejected() {
        // format tag 2 = MS ADPCM
        let err = decode_wav_bytes(&wav_image(2, 1, 8000, 4, &[0, 0])).unwrap_err();
        assert!(matches!(err, WavError::UnsupportedCodec { format: 2, .. }));
    }

    #[test]
    fn truncated_data_is_rejected() {
        let data: Vec<u8> = [1i16, 2, 3, 4].iter().flat_map(|v| v.to_le_bytes()).collect();
        let mut img = wav_image(FORMAT_PCM, 1, 48000, 16, &data);
        img.truncate(img.len() - 3);
        assert!(matches!(decode_wav_bytes(&img).unwrap_err(), WavError::TruncatedData { .. }));
    }

    #[test]
    fn skips_unknown_chunks() {
        let data: Vec<u8> = [8192i16].iter().flat_map(|v| v.to_le_bytes()).collect();
        let img = wav_image(FORMAT_PCM, 1, 16000, 16, &data);
        // splice a LIST chunk with odd size (padded) between fmt and data
        let mut spliced = img[..36].to_vec();
        spliced.extend_from_slice(b"LIST");
        spliced.extend_from_slice(&3u32.to_le_bytes());
        spliced.extend_from_slice(&[1, 2, 3, 0]);
        spliced.extend_from_slice(&img[36..]);
        let w = decode_wav_bytes(&spliced).unwrap();
        assert_eq!(w.samples, vec![0.25]);
    }

    proptest! {
        #[test]
        fn encode_decode_within_quantization_step(samples in prop::collection::vec(-1.0f64..=1.0, 1..200)) {
            let w = decode_wav_bytes(&encode_wav_i16(&samples, 48000)).unwrap();
            prop_assert_eq!(w.samples.len(), samples.len());
            for (a, b) in samples.iter().zip(&w.samples) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0);
            }
        }
    }
}
