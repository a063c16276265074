//! Deterministic synthetic corpora: summed sine tones plus band-limited
//! noise, rendered to 16-bit WAV files with a manifest.

mod render;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{wav, write_manifest, ManifestEntry, TARGET_RATE};
use crate::seed;

pub use render::{render_item, FREQ_JITTER, AMP_JITTER};

/// Spectral recipe of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signature {
    pub tones_hz: Vec<f64>,
    /// Peak amplitude of the tone sum, before jitter.
    pub amplitude: f64,
    #[serde(default)]
    pub noise_band_hz: Option<[f64; 2]>,
    /// RMS level of the band noise.
    #[serde(default = "default_noise_amplitude")]
    pub noise_amplitude: f64,
}

fn default_noise_amplitude() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthClass {
    pub name: String,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthDataset {
    pub id: String,
    pub classes: Vec<SynthClass>,
    pub items_per_class: usize,
    pub duration_s: f64,
    #[serde(default)]
    pub label_noise_rate: f64,
    /// Added to every sample after the gain.
    #[serde(default)]
    pub dc_offset: f64,
    #[serde(default = "one")]
    pub gain: f64,
    /// When set, items are assigned folds `1..=folds` round-robin within each class.
    #[serde(default)]
    pub folds: Option<u32>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub datasets: Vec<SynthDataset>,
    #[serde(default)]
    pub seed: u64,
}

/// Log-spaced tone grid shared by the presets.
const GRID: usize = 24;

fn grid_hz(i: usize) -> f64 {
    let (lo, hi) = (150.0f64, 9_000.0f64);
    lo * (hi / lo).powf((i % GRID) as f64 / (GRID - 1) as f64)
}

impl SynthDataset {
    /// A dataset whose classes are two-tone chords on a shared grid, with a
    /// dataset-specific noise band. `variant` shifts the chords so different
    /// variants use different signatures.
    pub fn preset(id: &str, classes: usize, items_per_class: usize, variant: usize) -> Self {
        let band_lo = 500.0 * (1.0 + variant as f64);
        let classes = (0..classes)
            .map(|c| {
                let a = c * 5 + variant * 2;
                SynthClass {
                    name: format!("class{c}"),
                    signature: Signature {
                        tones_hz: vec![grid_hz(a), grid_hz(a + 11)],
                        amplitude: 0.6,
                        noise_band_hz: Some([band_lo, band_lo * 1.5]),
                        noise_amplitude: 0.02,
                    },
                }
            })
            .collect();
        SynthDataset {
            id: id.to_string(),
            classes,
            items_per_class,
            duration_s: 1.0,
            label_noise_rate: 0.0,
            dc_offset: 0.0,
            gain: 1.0,
            folds: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("datasets.{}.{f}", self.id);
        if self.id.is_empty() {
            return Err(Error::config("datasets.id", "must not be empty"));
        }
        if self.classes.is_empty() {
            return Err(Error::config(field("classes"), "must not be empty"));
        }
        if self.items_per_class == 0 {
            return Err(Error::config(field("items_per_class"), "must be positive"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::config(field("duration_s"), "must be positive"));
        }
        if !(0.0..0.5).contains(&self.label_noise_rate) {
            return Err(Error::config(field("label_noise_rate"), "must lie in [0, 0.5)"));
        }
        if self.label_noise_rate > 0.0 && self.classes.len() < 2 {
            return Err(Error::config(field("label_noise_rate"), "needs at least two classes"));
        }
        if !self.gain.is_finite() || !self.dc_offset.is_finite() {
            return Err(Error::config(field("gain"), "gain and dc_offset must be finite"));
        }
        if self.folds == Some(0) {
            return Err(Error::config(field("folds"), "must be positive"));
        }
        let nyquist = TARGET_RATE as f64 / 2.0;
        let mut names = BTreeSet::new();
        let mut signatures: Vec<&Signature> = Vec::new();
        for c in &self.classes {
            if c.name.is_empty() || !names.insert(c.name.as_str()) {
                return Err(Error::config(field("classes"), format!("duplicate or empty class name `{}`", c.name)));
            }
            let s = &c.signature;
            let tones_ok = s.tones_hz.iter().all(|&f| f > 0.0 && f * (1.0 + FREQ_JITTER) < nyquist);
            let band_ok = s.noise_band_hz.map_or(true, |[lo, hi]| 0.0 <= lo && lo < hi && hi <= nyquist);
            if !tones_ok || !band_ok || !(s.amplitude >= 0.0) || !(s.noise_amplitude >= 0.0) {
                return Err(Error::config(field("classes"), format!("invalid signature for `{}`", c.name)));
            }
            if signatures.contains(&s) {
                return Err(Error::config(field("classes"), format!("signature of `{}` repeats another class", c.name)));
            }
            signatures.push(s);
        }
        Ok(())
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::config("datasets", "must not be empty"));
        }
        let mut ids = BTreeSet::new();
        for d in &self.datasets {
            if !ids.insert(d.id.as_str()) {
                return Err(Error::config("datasets", format!("dataset `{}` listed twice", d.id)));
            }
            d.validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("synth spec: {e}")))
    }

    /// Reads a TOML spec, or JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("synth spec: {e}")))
        } else {
            Self::from_toml_str(&text)
        }
    }
}

/// One rendered record before writing.
struct Item {
    entry: ManifestEntry,
    samples: Vec<f32>,
}

fn item_rng(spec_seed: u64, dataset: &str, class: &str, index: usize) -> seed::Rng {
    seed::rng_for(
        spec_seed,
        &[seed::hash_str("synth"), seed::hash_str(dataset), seed::hash_str(class), index as u64],
    )
}

fn render_dataset(d: &SynthDataset, spec_seed: u64) -> Vec<Item> {
    let jobs: Vec<(usize, usize)> = (0..d.classes.len())
        .flat_map(|c| (0..d.items_per_class).map(move |i| (c, i)))
        .collect();
    jobs.par_iter()
        .map(|&(c, i)| {
            let class = &d.classes[c];
            let mut rng = item_rng(spec_seed, &d.id, &class.name, i);
            let mut samples = render_item(&class.signature, d.duration_s, TARGET_RATE, &mut rng);
            for s in &mut samples {
                *s = (*s as f64 * d.gain + d.dc_offset).clamp(-1.0, 1.0) as f32;
            }
            let mut label = class.name.as_str();
            if d.label_noise_rate > 0.0 && rng.gen::<f64>() < d.label_noise_rate {
                let mut other = rng.gen_range(0..d.classes.len() - 1);
                if other >= c {
                    other += 1;
                }
                label = &d.classes[other].name;
            }
            let file = format!("{}/{}/{}_{:04}.wav", d.id, class.name, class.name, i);
            let mut entry = ManifestEntry::new(&d.id, &file, label);
            entry.duration_s = Some(samples.len() as f64 / TARGET_RATE as f64);
            entry.fold = d.folds.map(|k| (i as u32 % k) + 1);
            Item { entry, samples }
        })
        .collect()
}

/// Renders every item of `spec` under `out_dir` and writes
/// `out_dir/manifest.jsonl`. Returns the manifest path.
pub fn synth_corpus(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::new();
    for d in &spec.datasets {
        let items = render_dataset(d, spec.seed);
        items.par_iter().try_for_each(|item| {
            let path = out_dir.join(&item.entry.file_path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            wav::write_wav_pcm16(&path, std::slice::from_ref(&item.samples), TARGET_RATE)
        })?;
        entries.extend(items.into_iter().map(|i| i.entry));
    }
    let manifest = out_dir.join("manifest.jsonl");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

/// Generating class of every item, in manifest order (before label noise).
pub fn true_labels(spec: &SynthSpec) -> Vec<(String, String)> {
    spec.datasets
        .iter()
        .flat_map(|d| {
            d.classes
                .iter()
                .flat_map(move |c| (0..d.items_per_class).map(move |_| (d.id.clone(), c.name.clone())))
        })
        .collect()
}
