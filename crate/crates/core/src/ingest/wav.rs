//! Minimal RIFF/WAVE codec: integer PCM (8/16/24/32-bit) and 32/64-bit
//! float on read, 16-bit PCM on write.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Decoded interleaved audio, scaled to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub rate: u32,
    pub channels: u16,
    /// One vector per channel.
    pub channel_data: Vec<Vec<f32>>,
}

impl WavData {
    pub fn frames(&self) -> usize {
        self.channel_data.first().map_or(0, Vec::len)
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WavData> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map_err(|message| Error::Audio {
        path: path.to_path_buf(),
        message,
    })
}

pub fn decode_wav(bytes: &[u8]) -> std::result::Result<WavData, String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = (body_start + size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err("fmt chunk too short".into());
                }
                let mut tag = u16_at(body, 0);
                let channels = u16_at(body, 2);
                let rate = u32_at(body, 4);
                let bits = u16_at(body, 14);
                if tag == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err("extensible fmt chunk too short".into());
                    }
                    tag = u16_at(body, 24);
                }
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }
    let (tag, channels, rate, bits) = fmt.ok_or("missing fmt chunk")?;
    let data = data.ok_or("missing data chunk")?;
    if channels == 0 {
        return Err("zero channels".into());
    }
    if rate == 0 {
        return Err("zero sample rate".into());
    }
    let width = match (tag, bits) {
        (FORMAT_PCM, 8 | 16 | 24 | 32) | (FORMAT_FLOAT, 32 | 64) => bits as usize / 8,
        _ => return Err(format!("unsupported encoding: format {tag}, {bits} bits")),
    };
    let frame_bytes = width * channels as usize;
    let frames = data.len() / frame_bytes;
    let mut channel_data = vec![Vec::with_capacity(frames); channels as usize];
    for f in 0..frames {
        for (c, out) in channel_data.iter_mut().enumerate() {
            let s = &data[f * frame_bytes + c * width..][..width];
            let v = match (tag, bits) {
                (FORMAT_PCM, 8) => (s[0] as f32 - 128.0) / 128.0,
                (FORMAT_PCM, 16) => i16::from_le_bytes([s[0], s[1]]) as f32 / 32768.0,
                (FORMAT_PCM, 24) => {
                    let v = i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8;
                    v as f32 / 8_388_608.0
                }
                (FORMAT_PCM, 32) => {
                    i32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f32 / 2_147_483_648.0
                }
                (FORMAT_FLOAT, 32) => f32::from_le_bytes([s[0], s[1], s[2], s[3]]),
                _ => f64::from_le_bytes(s.try_into().expect("8-byte sample")) as f32,
            };
            out.push(v);
        }
    }
    Ok(WavData {
        rate,
        channels,
        channel_data,
    })
}

/// Encodes channels as 16-bit PCM. Samples are clamped to [-1, 1].
pub fn encode_wav_pcm16(channels: &[Vec<f32>], rate: u32) -> Vec<u8> {
    let n_ch = channels.len().max(1);
    let frames = channels.first().map_or(0, Vec::len);
    let data_len = frames * n_ch * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&(n_ch as u16).to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * n_ch as u32 * 2).to_le_bytes());
    out.extend_from_slice(&((n_ch * 2) as u16).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for f in 0..frames {
        for ch in channels {
            let v = (ch[f].clamp(-1.0, 1.0) * 32767.0).round() as i16;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, channels: &[Vec<f32>], rate: u32) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav_pcm16(channels, rate)).map_err(|e| Error::io(path, e))
}

/// 24-bit PCM encoder, used mainly to exercise the 24-bit decode path.
pub fn encode_wav_pcm24(channels: &[Vec<f32>], rate: u32) -> Vec<u8> {
    let n_ch = channels.len().max(1);
    let frames = channels.first().map_or(0, Vec::len);
    let data_len = frames * n_ch * 3;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&(n_ch as u16).to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * n_ch as u32 * 3).to_le_bytes());
    out.extend_from_slice(&((n_ch * 3) as u16).to_le_bytes());
    out.extend_from_slice(&24u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for f in 0..frames {
        for ch in channels {
            let v = (ch[f].clamp(-1.0, 1.0) * 8_388_607.0).round() as i32;
            out.extend_from_slice(&v.to_le_bytes()[..3]);
        }
    }
    out
}
