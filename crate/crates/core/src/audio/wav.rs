//! RIFF/WAVE reading and writing.
//!
//! Reads PCM 16/24/32-bit and IEEE float32 (plain or `WAVE_FORMAT_EXTENSIBLE`),
//! averaging channels down to mono. Writes mono PCM16, PCM24 or float32.

use std::fs;
use std::path::Path;

use super::{AudioBuffer, PIPELINE_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::scalar::Real;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    Float32,
}

impl BitDepth {
    fn bits(self) -> u16 {
        match self {
            BitDepth::Pcm16 => 16,
            BitDepth::Pcm24 => 24,
            BitDepth::Float32 => 32,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WavWriteReport {
    /// Samples outside [-1, 1] that were clamped.
    pub clipped: usize,
}

#[derive(Clone, Copy, Debug)]
struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_format(body: &[u8], offset: usize) -> Result<Format> {
    if body.len() < 16 {
        return Err(Error::parse(
            offset as u64,
            format!("fmt chunk has {} bytes, need at least 16", body.len()),
        ));
    }
    let mut tag = u16_at(body, 0);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(Error::parse(
                offset as u64,
                "extensible fmt chunk too short for sub-format GUID",
            ));
        }
        tag = u16_at(body, 24);
    }
    let fmt = Format {
        tag,
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        block_align: u16_at(body, 12),
        bits,
    };
    if fmt.channels == 0 {
        return Err(Error::parse(offset as u64 + 2, "zero channels"));
    }
    let supported = matches!(
        (fmt.tag, fmt.bits),
        (FORMAT_PCM, 16) | (FORMAT_PCM, 24) | (FORMAT_PCM, 32) | (FORMAT_IEEE_FLOAT, 32)
    );
    if !supported {
        return Err(Error::parse(
            offset as u64,
            format!(
                "unsupported encoding: format tag {} with {} bits",
                fmt.tag, fmt.bits
            ),
        ));
    }
    let expected_align = fmt.channels as usize * (fmt.bits as usize / 8);
    if fmt.block_align as usize != expected_align {
        return Err(Error::parse(
            offset as u64 + 12,
            format!(
                "block align {} inconsistent with {expected_align}",
                fmt.block_align
            ),
        ));
    }
    Ok(fmt)
}

fn decode_sample<T: Real>(fmt: &Format, b: &[u8]) -> T {
    match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 16) => T::lit(i16::from_le_bytes([b[0], b[1]]) as f64 / 32_768.0),
        (FORMAT_PCM, 24) => {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            T::lit(v as f64 / 8_388_608.0)
        }
        (FORMAT_PCM, 32) => {
            T::lit(i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0)
        }
        _ => T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64),
    }
}

/// Parses a WAV image. The sample rate must be 48 kHz.
pub fn decode_wav<T: Real>(bytes: &[u8]) -> Result<AudioBuffer<T>> {
    if bytes.len() < 12 {
        return Err(Error::parse(
            bytes.len() as u64,
            "file shorter than RIFF header",
        ));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::parse(0, "missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::parse(8, "missing WAVE tag"));
    }

    let mut format: Option<Format> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let remaining = bytes.len() - body_start;
        match id {
            b"fmt " => {
                if size > remaining {
                    return Err(Error::parse(pos as u64, "fmt chunk runs past end of file"));
                }
                format = Some(parse_format(
                    &bytes[body_start..body_start + size],
                    body_start,
                )?);
            }
            b"data" => {
                let fmt = format
                    .ok_or_else(|| Error::parse(pos as u64, "data chunk before fmt chunk"))?;
                if size > remaining {
                    return Err(Error::parse(
                        pos as u64 + 4,
                        format!("data chunk declares {size} bytes but only {remaining} remain"),
                    ));
                }
                if fmt.sample_rate != PIPELINE_SAMPLE_RATE {
                    return Err(Error::SampleRate {
                        found: fmt.sample_rate,
                        required: PIPELINE_SAMPLE_RATE,
                    });
                }
                let align = fmt.block_align as usize;
                if !size.is_multiple_of(align) {
                    return Err(Error::parse(
                        pos as u64 + 4,
                        format!("data size {size} is not a multiple of block align {align}"),
                    ));
                }
                let width = fmt.bits as usize / 8;
                let scale = T::one() / T::from_usize_lossy(fmt.channels as usize);
                let samples = bytes[body_start..body_start + size]
                    .chunks_exact(align)
                    .map(|frame| {
                        let sum: T = frame
                            .chunks_exact(width)
                            .map(|s| decode_sample::<T>(&fmt, s))
                            .sum();
                        if fmt.channels == 1 {
                            sum
                        } else {
                            sum * scale
                        }
                    })
                    .collect();
                return AudioBuffer::new(samples, fmt.sample_rate);
            }
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }
    Err(Error::parse(
        pos.min(bytes.len()) as u64,
        if format.is_some() {
            "no data chunk"
        } else {
            "no fmt chunk"
        },
    ))
}

pub fn read_wav<T: Real>(path: impl AsRef<Path>) -> Result<AudioBuffer<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Serializes a mono buffer, clamping samples to [-1, 1].
pub fn encode_wav<T: Real>(buffer: &AudioBuffer<T>, depth: BitDepth) -> (Vec<u8>, WavWriteReport) {
    let bits = depth.bits();
    let bytes_per_sample = bits as usize / 8;
    let data_len = buffer.len() * bytes_per_sample;
    let (tag, fmt_len) = match depth {
        BitDepth::Float32 => (FORMAT_IEEE_FLOAT, 18u32),
        _ => (FORMAT_PCM, 16u32),
    };

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(4 + 8 + fmt_len + 8 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&fmt_len.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buffer.sample_rate().to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate() * bytes_per_sample as u32).to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    if fmt_len == 18 {
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());

    let mut report = WavWriteReport::default();
    for &x in buffer.samples() {
        let x = x.as_f64();
        if x.abs() > 1.0 {
            report.clipped += 1;
        }
        let x = x.clamp(-1.0, 1.0);
        match depth {
            BitDepth::Pcm16 => {
                let q = (x * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            BitDepth::Pcm24 => {
                let q = (x * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32;
                out.extend_from_slice(&q.to_le_bytes()[..3]);
            }
            BitDepth::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
        }
    }
    (out, report)
}

pub fn write_wav<T: Real>(
    buffer: &AudioBuffer<T>,
    path: impl AsRef<Path>,
    depth: BitDepth,
) -> Result<WavWriteReport> {
    let path = path.as_ref();
    let (bytes, report) = encode_wav(buffer, depth);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(report)
}
