use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use super::wav;
use crate::error::{Error, Result};

pub const TARGET_RATE: u32 = 44_100;

/// Mono, peak-normalized audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub rate: u32,
    pub source: PathBuf,
}

impl AudioClip {
    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }
}

/// Decodes, downmixes (channel mean), resamples and peak-normalizes a file.
pub fn load_audio(path: impl AsRef<Path>, target_rate: u32) -> Result<AudioClip> {
    let path = path.as_ref();
    let data = wav::read_wav(path)?;
    if data.frames() == 0 {
        return Err(Error::Audio {
            path: path.to_path_buf(),
            message: "zero-length audio".into(),
        });
    }
    let mut clip = condition(&data.channel_data, data.rate, target_rate);
    clip.source = path.to_path_buf();
    Ok(clip)
}

/// Conditioning on already-decoded channels.
pub fn condition(channels: &[Vec<f32>], rate: u32, target_rate: u32) -> AudioClip {
    let frames = channels.first().map_or(0, Vec::len);
    let n = channels.len().max(1) as f64;
    let mono: Vec<f32> = (0..frames)
        .map(|i| (channels.iter().map(|c| c[i] as f64).sum::<f64>() / n) as f32)
        .collect();
    let mut samples = if rate == target_rate {
        mono
    } else {
        resample(&mono, rate, target_rate)
    };
    peak_normalize(&mut samples);
    AudioClip {
        samples,
        rate: target_rate,
        source: PathBuf::new(),
    }
}

fn peak_normalize(samples: &mut [f32]) {
    let peak = samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
    if peak > 0.0 && peak != 1.0 {
        for s in samples.iter_mut() {
            *s /= peak;
        }
    }
}

const SINC_ZERO_CROSSINGS: f64 = 16.0;

/// Band-limited resampling with a Hann-windowed sinc kernel.
///
/// Output length is `round(len * to / from)`.
pub fn resample(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let out_len = (input.len() as f64 * ratio).round() as usize;
    // cutoff relative to the input Nyquist
    let fc = ratio.min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / fc;
    let step = from as f64 / to as f64;
    (0..out_len)
        .map(|j| {
            let t = j as f64 * step;
            let lo = (t - half_width).ceil().max(0.0) as usize;
            let hi = ((t + half_width).floor() as usize).min(input.len() - 1);
            let mut acc = 0.0;
            for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - k as f64;
                let w = 0.5 + 0.5 * (PI * d / half_width).cos();
                acc += x as f64 * fc * sinc(fc * d) * w;
            }
            acc as f32
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::wav::encode_wav_pcm16;

    #[test]
    fn antiphase_stereo_downmixes_to_silence() {
        let x: Vec<f32> = (0..1000).map(|i| (i as f32 * 0.05).sin() * 0.7).collect();
        let neg: Vec<f32> = x.iter().map(|v| -v).collect();
        let clip = condition(&[x, neg], TARGET_RATE, TARGET_RATE);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn upsampling_doubles_length() {
        for n in [1000usize, 1001, 4097] {
            let x: Vec<f32> = (0..n).map(|i| (i as f32 * 0.01).sin()).collect();
            let clip = condition(&[x], 22_050, TARGET_RATE);
            assert!((clip.samples.len() as i64 - 2 * n as i64).abs() <= 1);
            assert_eq!(clip.rate, TARGET_RATE);
        }
    }

    #[test]
    fn half_peak_scaled_to_unity() {
        let x = vec![0.0, 0.25, -0.5, 0.1];
        let clip = condition(&[x], TARGET_RATE, TARGET_RATE);
        assert_eq!(clip.peak(), 1.0);
        assert_eq!(clip.samples, vec![0.0, 0.5, -1.0, 0.2]);
    }

    #[test]
    fn conditioning_is_idempotent() {
        let x: Vec<f32> = (0..3000).map(|i| (i as f32 * 0.013).sin() * 0.3).collect();
        let once = condition(&[x], 48_000, TARGET_RATE);
        let twice = condition(&[once.samples.clone()], TARGET_RATE, TARGET_RATE);
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            assert!((a - b).abs() as f64 <= 1e-12);
        }
    }

    #[test]
    fn resampled_tone_keeps_its_frequency() {
        // 1 kHz tone at 22.05 kHz → 44.1 kHz: compare against the analytic tone.
        let f = 1000.0;
        let x: Vec<f32> = (0..22_050)
            .map(|i| (2.0 * PI * f * i as f64 / 22_050.0).sin() as f32)
            .collect();
        let y = resample(&x, 22_050, 44_100);
        let mut err = 0.0f64;
        for (i, &v) in y.iter().enumerate().skip(2000).take(40_000) {
            let want = (2.0 * PI * f * i as f64 / 44_100.0).sin();
            err = err.max((v as f64 - want).abs());
        }
        assert!(err < 1e-2, "max error {err}");
    }

    #[test]
    fn load_reports_zero_length_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.wav");
        std::fs::write(&empty, encode_wav_pcm16(&[vec![]], 44_100)).unwrap();
        assert!(matches!(load_audio(&empty, TARGET_RATE), Err(Error::Audio { .. })));
        let bad = dir.path().join("bad.wav");
        std::fs::write(&bad, b"nope").unwrap();
        assert!(matches!(load_audio(&bad, TARGET_RATE), Err(Error::Audio { .. })));
    }

    #[test]
    fn load_wav_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x: Vec<f32> = (0..500).map(|i| if i % 2 == 0 { 0.5 } else { -0.25 }).collect();
        std::fs::write(&p, encode_wav_pcm16(&[x.clone(), x], 44_100)).unwrap();
        let clip = load_audio(&p, TARGET_RATE).unwrap();
        assert_eq!(clip.samples.len(), 500);
        assert_eq!(clip.peak(), 1.0);
        assert_eq!(clip.source, p);
    }
}
