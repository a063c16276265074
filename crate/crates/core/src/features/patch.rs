use rand::Rng;

use super::{minmax_normalize, MelSpectrogram};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatchOrigin {
    pub file: String,
    pub start_frame: usize,
}

/// A fixed-length `frames × bins` excerpt with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MelPatch {
    pub values: Vec<f32>,
    pub frames: usize,
    pub bins: usize,
    pub origin: PatchOrigin,
}

fn normalized(spec: &MelSpectrogram) -> std::borrow::Cow<'_, MelSpectrogram> {
    if spec.normalized {
        std::borrow::Cow::Borrowed(spec)
    } else {
        std::borrow::Cow::Owned(minmax_normalize(spec))
    }
}

/// Cuts `length` frames starting at `start`, tiling along time when the
/// spectrogram is shorter than `length`.
fn cut(spec: &MelSpectrogram, start: usize, length: usize, file: &str) -> MelPatch {
    let mut values = Vec::with_capacity(length * spec.bins);
    for t in 0..length {
        values.extend_from_slice(spec.frame((start + t) % spec.frames));
    }
    MelPatch {
        values,
        frames: length,
        bins: spec.bins,
        origin: PatchOrigin {
            file: file.to_string(),
            start_frame: start,
        },
    }
}

/// Uniformly placed excerpt. Normalization is per spectrogram: an
/// unnormalized input is min-max normalized as a whole before cutting.
pub fn random_patch<R: Rng + ?Sized>(
    spec: &MelSpectrogram,
    length: usize,
    file: &str,
    rng: &mut R,
) -> MelPatch {
    let spec = normalized(spec);
    let start = if spec.frames > length {
        rng.gen_range(0..=spec.frames - length)
    } else {
        0
    };
    cut(&spec, start, length, file)
}

/// Windows at a hop of `length·(1 − overlap)` frames; the partial tail is
/// dropped, and a short spectrogram yields a single tiled patch.
pub fn sliding_patches(
    spec: &MelSpectrogram,
    length: usize,
    overlap: f64,
    file: &str,
) -> Vec<MelPatch> {
    let spec = normalized(spec);
    if spec.frames < length {
        return vec![cut(&spec, 0, length, file)];
    }
    let hop = ((length as f64 * (1.0 - overlap)).round() as usize).max(1);
    (0..)
        .map(|i| i * hop)
        .take_while(|s| s + length <= spec.frames)
        .map(|s| cut(&spec, s, length, file))
        .collect()
}
