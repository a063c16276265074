use std::f64::consts::PI;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Signature;

/// Relative frequency jitter applied per item and tone.
pub const FREQ_JITTER: f64 = 0.03;
/// Relative amplitude jitter applied per item.
pub const AMP_JITTER: f64 = 0.2;

/// White noise restricted to `[lo, hi]` Hz by zeroing FFT bins, scaled to `rms`.
fn band_noise<R: Rng + ?Sized>(n: usize, rate: u32, [lo, hi]: [f64; 2], rms: f64, rng: &mut R) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let bin_hz = rate as f64 / n as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * bin_hz;
        if f < lo || f > hi {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let cur = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if cur == 0.0 {
        return vec![0.0; n];
    }
    out.into_iter().map(|v| v * rms / cur).collect()
}

/// Renders one item: jittered tones plus band noise.
pub fn render_item<R: Rng + ?Sized>(sig: &Signature, duration_s: f64, rate: u32, rng: &mut R) -> Vec<f32> {
    let n = ((duration_s * rate as f64).round() as usize).max(1);
    let amp = sig.amplitude * (1.0 + rng.gen_range(-AMP_JITTER..=AMP_JITTER));
    let per_tone = amp / sig.tones_hz.len().max(1) as f64;
    let tones: Vec<(f64, f64)> = sig
        .tones_hz
        .iter()
        .map(|&f| {
            let f = f * (1.0 + rng.gen_range(-FREQ_JITTER..=FREQ_JITTER));
            (2.0 * PI * f / rate as f64, rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let mut out = vec![0.0f64; n];
    for (w, phase) in tones {
        for (t, v) in out.iter_mut().enumerate() {
            *v += per_tone * (w * t as f64 + phase).sin();
        }
    }
    if let Some(band) = sig.noise_band_hz {
        if sig.noise_amplitude > 0.0 {
            for (v, e) in out.iter_mut().zip(band_noise(n, rate, band, sig.noise_amplitude, rng)) {
                *v += e;
            }
        }
    }
    out.into_iter().map(|v| v as f32).collect()
}
