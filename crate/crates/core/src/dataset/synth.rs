//! Synthetic labelled images.
//!
//! The image is divided into a grid with one cell per label. A present label
//! paints its cell with its own colour and texture (stripes, checks or a
//! disc). Multi-label images paint several cells. Gaussian pixel noise is
//! added on top and values are clamped to `[0, 1]`.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ImageRecord, Manifest};
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthMode {
    /// One diagnosis per image, classes balanced.
    MultiClass,
    /// One to three tags per image.
    MultiLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub mode: SynthMode,
    /// Number of classes or tags.
    pub labels: usize,
    /// Images per class; multi-label mode generates `labels × per_label` images.
    pub per_label: usize,
    /// `[C, H, W]`.
    pub shape: [usize; 3],
    pub seed: u64,
    pub noise: f64,
    /// Shifts which colour/texture style each label uses, so two tasks can
    /// share styles while placing them differently.
    pub style_offset: usize,
    pub atlas: String,
}

impl SynthSpec {
    pub fn new(mode: SynthMode, labels: usize, per_label: usize, seed: u64) -> Self {
        Self {
            mode,
            labels,
            per_label,
            shape: [3, 32, 32],
            seed,
            noise: 0.05,
            style_offset: 0,
            atlas: "synthetic".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub records: Vec<ImageRecord>,
    /// Class names or tag vocabulary.
    pub vocabulary: Vec<String>,
}

impl SynthData {
    pub fn into_manifest(self, mode: SynthMode) -> Manifest {
        match mode {
            SynthMode::MultiClass => Manifest::new(self.records, self.vocabulary, Vec::new()),
            SynthMode::MultiLabel => Manifest::new(self.records, Vec::new(), self.vocabulary),
        }
    }
}

const PALETTE: [[f64; 3]; 12] = [
    [1.0, 0.15, 0.15],
    [0.15, 1.0, 0.15],
    [0.15, 0.15, 1.0],
    [1.0, 1.0, 0.15],
    [1.0, 0.15, 1.0],
    [0.15, 1.0, 1.0],
    [1.0, 0.55, 0.1],
    [0.55, 0.1, 1.0],
    [0.1, 0.55, 0.45],
    [0.9, 0.9, 0.9],
    [0.6, 0.35, 0.2],
    [0.45, 0.8, 0.25],
];

const BACKGROUND: f64 = 0.1;
const AMPLITUDE: f64 = 0.8;

fn colour(style: usize, channel: usize, channels: usize) -> f64 {
    if channels == 1 {
        return 0.4 + 0.6 * ((style % 5) as f64 / 4.0);
    }
    let base = PALETTE[style % PALETTE.len()];
    // Past the palette, rotate channels so colours stay distinct.
    base[(channel + style / PALETTE.len()) % 3]
}

/// Texture mask in cell-local coordinates.
fn texture(style: usize, y: usize, x: usize, ch: usize, cw: usize) -> bool {
    let period = 2 + (style / 4) % 3;
    match style % 4 {
        0 => (y / period).is_multiple_of(2),
        1 => (x / period).is_multiple_of(2),
        2 => ((y / period) + (x / period)).is_multiple_of(2),
        _ => {
            let cy = ch as f64 / 2.0 - 0.5;
            let cx = cw as f64 / 2.0 - 0.5;
            let r = ch.min(cw) as f64 / 2.0 - 0.5;
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            dy * dy + dx * dx <= r * r
        }
    }
}

fn grid(q: usize) -> (usize, usize) {
    let cols = (q as f64).sqrt().ceil() as usize;
    (q.div_ceil(cols), cols)
}

fn render(spec: &SynthSpec, active: &[usize], rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> Tensor {
    let [c, h, w] = spec.shape;
    let (rows, cols) = grid(spec.labels);
    let (chh, cww) = (h / rows, w / cols);
    let mut data = vec![BACKGROUND; c * h * w];
    for &label in active {
        let style = label + spec.style_offset;
        let (gy, gx) = (label / cols, label % cols);
        for ch in 0..c {
            let value = AMPLITUDE * colour(style, ch, c);
            for y in 0..chh {
                for x in 0..cww {
                    if texture(style, y, x, chh, cww) {
                        data[(ch * h + gy * chh + y) * w + gx * cww + x] += value;
                    }
                }
            }
        }
    }
    if spec.noise > 0.0 {
        for v in &mut data {
            *v = (*v + noise.sample(rng)).clamp(0.0, 1.0);
        }
    }
    Tensor::new(vec![c, h, w], data).expect("dimensions are consistent")
}

/// Generate labelled images. Multi-class output cycles through the classes
/// so any prefix is as balanced as possible.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData> {
    let [c, h, w] = spec.shape;
    if spec.labels == 0 || spec.per_label == 0 || c == 0 || h == 0 || w == 0 {
        return Err(invalid(
            "synthetic label count, image count and shape must be positive",
        ));
    }
    let (rows, cols) = grid(spec.labels);
    if h < rows || w < cols {
        return Err(invalid(format!(
            "a {h}×{w} image cannot hold a {rows}×{cols} label grid"
        )));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(invalid(format!(
            "noise must be a nonnegative number, got {}",
            spec.noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid deviation");
    let prefix = match spec.mode {
        SynthMode::MultiClass => "class",
        SynthMode::MultiLabel => "tag",
    };
    let vocabulary: Vec<String> = (0..spec.labels).map(|i| format!("{prefix}-{i}")).collect();
    let total = spec.labels * spec.per_label;
    let mut records = Vec::with_capacity(total);
    for n in 0..total {
        let (active, diagnosis, tags) = match spec.mode {
            SynthMode::MultiClass => {
                let class = n % spec.labels;
                (vec![class], Some(vocabulary[class].clone()), None)
            }
            SynthMode::MultiLabel => {
                let max = spec.labels.min(3);
                let count = rng.random_range(1..=max);
                let mut picked = index::sample(&mut rng, spec.labels, count).into_vec();
                picked.sort_unstable();
                let tags: BTreeSet<String> =
                    picked.iter().map(|&i| vocabulary[i].clone()).collect();
                (picked, None, Some(tags))
            }
        };
        records.push(ImageRecord {
            id: format!("s{n:05}"),
            atlas: spec.atlas.clone(),
            image: render(spec, &active, &mut rng, &noise),
            diagnosis,
            tags,
        });
    }
    Ok(SynthData {
        records,
        vocabulary,
    })
}
