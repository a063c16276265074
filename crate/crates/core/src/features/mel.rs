use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AudioClip;

/// DSP parameters of the front end. The defaults give 46.4 ms windows,
/// 23.2 ms hops and 96 mel bands over 0–22.05 kHz at 44.1 kHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub patch_frames: usize,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 44_100,
            window: 2048,
            hop: 1024,
            n_mels: 96,
            fmin: 0.0,
            fmax: 22_050.0,
            patch_frames: 100,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    /// Frames produced for `n` samples (no center padding).
    pub fn frame_count(&self, n: usize) -> usize {
        if n < self.window {
            0
        } else {
            1 + (n - self.window) / self.hop
        }
    }

    /// Stable textual description folded into model config digests.
    pub fn digest_string(&self) -> String {
        format!(
            "sr={};win={};hop={};mels={};fmin={};fmax={};patch={};floor={:e};mel=htk-peak;log10",
            self.sample_rate,
            self.window,
            self.hop,
            self.n_mels,
            self.fmin,
            self.fmax,
            self.patch_frames,
            self.log_floor
        )
    }
}

/// Row-major `frames × bins` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f32>,
    pub frames: usize,
    pub bins: usize,
    pub hop: usize,
    pub window: usize,
    /// Set once min-max normalization has been applied.
    pub normalized: bool,
}

impl MelSpectrogram {
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// HTK-scale triangular filters with unit peak, `n_mels × (window/2 + 1)`.
pub fn mel_filterbank(config: &FeatureConfig) -> Vec<Vec<f64>> {
    let n_bins = config.window / 2 + 1;
    let lo = hz_to_mel(config.fmin);
    let hi = hz_to_mel(config.fmax);
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();
    let bin_hz = config.sample_rate as f64 / config.window as f64;
    (0..config.n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

struct Frontend {
    fft: Arc<dyn Fft<f64>>,
    hann: Vec<f64>,
    filters: Vec<Vec<(usize, f64)>>,
}

impl Frontend {
    fn new(config: &FeatureConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(config.window);
        // periodic Hann
        let hann = (0..config.window)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / config.window as f64).cos())
            .collect();
        let filters = mel_filterbank(config)
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .enumerate()
                    .filter(|(_, w)| *w > 0.0)
                    .collect()
            })
            .collect();
        Frontend { fft, hann, filters }
    }
}

/// Magnitude STFT → mel filterbank → `log10(x + floor)`.
pub fn mel_spectrogram(clip: &AudioClip, config: &FeatureConfig) -> Result<MelSpectrogram> {
    if clip.rate != config.sample_rate {
        return Err(Error::InvalidInput(format!(
            "clip rate {} Hz, front end expects {} Hz",
            clip.rate, config.sample_rate
        )));
    }
    let frames = config.frame_count(clip.samples.len());
    if frames == 0 {
        return Err(Error::InvalidInput(format!(
            "clip of {} samples is shorter than one {}-sample window",
            clip.samples.len(),
            config.window
        )));
    }
    let fe = Frontend::new(config);
    let n_bins = config.window / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); config.window];
    let mut scratch = vec![Complex::new(0.0, 0.0); fe.fft.get_inplace_scratch_len()];
    let mut mag = vec![0.0f64; n_bins];
    let mut values = Vec::with_capacity(frames * config.n_mels);
    for t in 0..frames {
        let start = t * config.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(clip.samples[start + i] as f64 * fe.hann[i], 0.0);
        }
        fe.fft.process_with_scratch(&mut buf, &mut scratch);
        for (m, b) in mag.iter_mut().zip(&buf) {
            *m = b.norm();
        }
        for filter in &fe.filters {
            let e: f64 = filter.iter().map(|&(k, w)| w * mag[k]).sum();
            values.push((e + config.log_floor).log10() as f32);
        }
    }
    Ok(MelSpectrogram {
        values,
        frames,
        bins: config.n_mels,
        hop: config.hop,
        window: config.window,
        normalized: false,
    })
}

/// `(x − min)/(max − min)` over the whole matrix; constant input maps to zeros.
pub fn minmax_normalize(spec: &MelSpectrogram) -> MelSpectrogram {
    let (lo, hi) = spec.min_max();
    let range = hi as f64 - lo as f64;
    let values = if range > 0.0 {
        spec.values
            .iter()
            .map(|&v| (((v as f64 - lo as f64) / range) as f32).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; spec.values.len()]
    };
    MelSpectrogram {
        values,
        normalized: true,
        ..spec.clone()
    }
}
