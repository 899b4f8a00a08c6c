//! The pluggable generator interface and its synthetic implementation.
//!
//! The synthetic process is a noisy contraction toward a known target: the
//! residual at scale k pulls the accumulated feature toward the target's
//! footprint at that scale, plus gaussian noise that shrinks with k. Early
//! scales therefore fix structure and late scales detail, and candidate
//! quality has a ground truth, so search behavior is measurable without any
//! learned model.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::CandidatePath;
use crate::schedule::ScaleSchedule;
use crate::tensor::{
    downsample_box_image, read_pgm, replicate_pixels, sum_upsampled, FeatureMap, Image,
};

/// A scale-causal generative process. Sampling at scale k may read only
/// scales < k of the context.
pub trait Generator {
    fn sample_residual(
        &self,
        path: &CandidatePath,
        scale: usize,
        prompt: &ToyPrompt,
        rng: &mut ChaCha8Rng,
    ) -> Result<FeatureMap>;

    /// Deterministic map from an accumulated feature map to a pixel image.
    fn decode(&self, f: &FeatureMap) -> Image;

    fn schedule(&self) -> &ScaleSchedule;
}

/// The conditioning input: a target image with a label for logs.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPrompt {
    pub target: Image,
    pub label: String,
}

/// Procedural target families, keyed by seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Blobs,
    Stripes,
    Checkerboard,
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(TargetKind::Blobs),
            "stripes" => Ok(TargetKind::Stripes),
            "checkerboard" => Ok(TargetKind::Checkerboard),
            other => Err(Error::parse(format!(
                "unknown target kind {other:?} (expected blobs|stripes|checkerboard)"
            ))),
        }
    }
}

impl std::fmt::Display for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TargetKind::Blobs => "blobs",
            TargetKind::Stripes => "stripes",
            TargetKind::Checkerboard => "checkerboard",
        };
        f.write_str(s)
    }
}

/// Rescale into [lo, hi]; constant inputs map to the midpoint.
fn normalize_into(img: &mut Image, lo: f64, hi: f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in img.iter() {
        min = min.min(v);
        max = max.max(v);
    }
    if max > min {
        img.mapv_inplace(|v| lo + (hi - lo) * (v - min) / (max - min));
    } else {
        img.fill(0.5 * (lo + hi));
    }
}

impl ToyPrompt {
    pub fn from_image(target: Image, label: impl Into<String>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::arg("target image is empty"));
        }
        if target.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::arg("target values must lie in [0, 1]"));
        }
        Ok(Self { target, label: label.into() })
    }

    /// Deterministic procedural target, `pixels` on a side. Values stay in
    /// [0.1, 0.9] so the decoder never clips an exact reconstruction.
    pub fn procedural(kind: TargetKind, seed: u64, pixels: usize) -> Result<Self> {
        if pixels == 0 {
            return Err(Error::arg("target needs at least one pixel"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = pixels as f64;
        let mut img = match kind {
            TargetKind::Blobs => {
                let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
                    .map(|_| {
                        (
                            rng.random_range(0.15..0.85),
                            rng.random_range(0.15..0.85),
                            rng.random_range(0.08..0.25),
                            rng.random_range(0.5..1.0),
                        )
                    })
                    .collect();
                Array2::from_shape_fn((pixels, pixels), |(i, j)| {
                    let y = (i as f64 + 0.5) / p;
                    let x = (j as f64 + 0.5) / p;
                    bumps
                        .iter()
                        .map(|&(cy, cx, r, a)| {
                            let d2 = (y - cy).powi(2) + (x - cx).powi(2);
                            a * (-d2 / (2.0 * r * r)).exp()
                        })
                        .sum()
                })
            }
            TargetKind::Stripes => {
                let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let freq: f64 = rng.random_range(1.5..4.5);
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Array2::from_shape_fn((pixels, pixels), |(i, j)| {
                    let y = (i as f64 + 0.5) / p;
                    let x = (j as f64 + 0.5) / p;
                    let u = x * angle.cos() + y * angle.sin();
                    (std::f64::consts::TAU * freq * u + phase).sin()
                })
            }
            TargetKind::Checkerboard => {
                let cell = [2usize, 4, 8][rng.random_range(0..3usize)].min(pixels);
                Array2::from_shape_fn((pixels, pixels), |(i, j)| {
                    if (i / cell + j / cell) % 2 == 0 {
                        0.0
                    } else {
                        1.0
                    }
                })
            }
        };
        normalize_into(&mut img, 0.1, 0.9);
        Self::from_image(img, format!("{kind}-{seed}"))
    }

    /// Load a target from a PGM file.
    pub fn from_pgm(path: &std::path::Path) -> Result<Self> {
        let target = read_pgm(path)?;
        Self::from_image(target, path.display().to_string())
    }
}

/// A serializable recipe for a prompt, so a run can be reproduced from its
/// record alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PromptSpec {
    Procedural { kind: TargetKind, seed: u64, pixels: usize },
    Pgm { path: String },
}

impl PromptSpec {
    pub fn materialize(&self) -> Result<ToyPrompt> {
        match self {
            PromptSpec::Procedural { kind, seed, pixels } => {
                ToyPrompt::procedural(*kind, *seed, *pixels)
            }
            PromptSpec::Pgm { path } => ToyPrompt::from_pgm(std::path::Path::new(path)),
        }
    }
}

/// Knobs of the synthetic process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGeneratorParams {
    /// Residual noise std per scale; the default decreases with k so coarse
    /// scales carry most of the variance.
    pub noise_scale: Vec<f64>,
    /// Pull strength toward the target residual, in (0, 1].
    pub drift: f64,
    /// Scalar mapping feature values to pixel values at decode time.
    pub pixel_decoder_gain: f64,
    /// Each token decodes to a `pixel_scale x pixel_scale` pixel block.
    pub pixel_scale: usize,
}

/// Default per-scale noise profile for a 6-scale run; other scale counts
/// sample it at the nearest normalized position.
pub const DEFAULT_NOISE: [f64; 6] = [0.5, 0.4, 0.3, 0.2, 0.1, 0.05];

/// Default pull strength. Low enough that early mistakes persist to the end
/// (later scales correct only a fraction per step), which is what makes
/// early-scale selection worth anything.
pub const DEFAULT_DRIFT: f64 = 0.3;

impl ToyGeneratorParams {
    pub fn default_for(num_scales: usize) -> Self {
        let noise_scale = (1..=num_scales)
            .map(|k| DEFAULT_NOISE[crate::schedule::stretch_index(k, num_scales.max(2), DEFAULT_NOISE.len())])
            .collect();
        Self {
            noise_scale,
            drift: DEFAULT_DRIFT,
            pixel_decoder_gain: 1.0,
            pixel_scale: 1,
        }
    }

    pub fn validate(&self, num_scales: usize) -> Result<()> {
        if self.noise_scale.len() != num_scales {
            return Err(Error::config(format!(
                "noise_scale has {} entries for {num_scales} scales",
                self.noise_scale.len()
            )));
        }
        if self.noise_scale.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::config("noise_scale entries must be finite and >= 0"));
        }
        if !(self.drift > 0.0 && self.drift <= 1.0) {
            return Err(Error::config(format!(
                "drift must lie in (0, 1], got {}",
                self.drift
            )));
        }
        if !self.pixel_decoder_gain.is_finite() || self.pixel_decoder_gain <= 0.0 {
            return Err(Error::config("pixel_decoder_gain must be positive"));
        }
        if self.pixel_scale == 0 {
            return Err(Error::config("pixel_scale must be at least 1"));
        }
        Ok(())
    }
}

/// The synthetic generator.
pub struct ToyGenerator {
    schedule: ScaleSchedule,
    params: ToyGeneratorParams,
}

impl ToyGenerator {
    pub fn new(schedule: ScaleSchedule, params: ToyGeneratorParams) -> Result<Self> {
        params.validate(schedule.num_scales())?;
        Ok(Self { schedule, params })
    }

    pub fn params(&self) -> &ToyGeneratorParams {
        &self.params
    }

    /// Target pixels box-reduced to the token grid and mapped into feature
    /// space (divided by gain, so decode inverts it).
    fn target_tokens(&self, prompt: &ToyPrompt) -> Result<Image> {
        let (h, w) = self.schedule.final_resolution();
        let ps = self.params.pixel_scale;
        if prompt.target.dim() != (h * ps, w * ps) {
            return Err(Error::shape(format!(
                "target must be {}x{} pixels, got {:?}",
                h * ps,
                w * ps,
                prompt.target.dim()
            )));
        }
        let tokens = downsample_box_image(&prompt.target, h, w);
        Ok(tokens.mapv(|v| v / self.params.pixel_decoder_gain))
    }
}

impl Generator for ToyGenerator {
    /// drift * (target residual at scale k) + noise. The target residual is
    /// the gap between the target's footprint and the current accumulation's
    /// footprint on the scale-k grid, computed from scales < k only. Noise is
    /// drawn in channel-major row-major order, one normal per entry.
    fn sample_residual(
        &self,
        path: &CandidatePath,
        scale: usize,
        prompt: &ToyPrompt,
        rng: &mut ChaCha8Rng,
    ) -> Result<FeatureMap> {
        let k_total = self.schedule.num_scales();
        if scale < 1 || scale > k_total {
            return Err(Error::arg(format!("scale {scale} outside 1..={k_total}")));
        }
        if path.scales_done() < scale - 1 {
            return Err(Error::arg(format!(
                "sampling scale {scale} needs {} residuals, path has {}",
                scale - 1,
                path.scales_done()
            )));
        }
        let d = self.schedule.feature_dim();
        let (h, w) = self.schedule.final_resolution();
        let (h_k, w_k) = self.schedule.scale(scale);
        let target = downsample_box_image(&self.target_tokens(prompt)?, h_k, w_k);
        // Only scales < k, even if the path already holds later residuals.
        let partial = sum_upsampled(&path.residuals[..scale - 1], d, h, w);
        let sigma = self.params.noise_scale[scale - 1];
        let alpha = self.params.drift;
        let mut out = Array3::zeros((d, h_k, w_k));
        for c in 0..d {
            let current = downsample_box_image(&partial.index_axis(Axis(0), c).to_owned(), h_k, w_k);
            for i in 0..h_k {
                for j in 0..w_k {
                    let noise: f64 = rng.sample(StandardNormal);
                    out[(c, i, j)] = alpha * (target[(i, j)] - current[(i, j)]) + sigma * noise;
                }
            }
        }
        Ok(out)
    }

    /// Channel mean, times gain, clamped to [0, 1], each token replicated to
    /// a pixel block.
    fn decode(&self, f: &FeatureMap) -> Image {
        let gain = self.params.pixel_decoder_gain;
        let mean = f.mean_axis(Axis(0)).expect("nonempty channel axis");
        let img = mean.mapv(|v| (v * gain).clamp(0.0, 1.0));
        replicate_pixels(&img, self.params.pixel_scale)
    }

    fn schedule(&self) -> &ScaleSchedule {
        &self.schedule
    }
}

/// Eq.-style accumulation: residuals validated against the schedule, then
/// summed after nearest-neighbor upsampling, ascending scale order.
pub fn accumulate(residuals: &[FeatureMap], schedule: &ScaleSchedule) -> Result<FeatureMap> {
    if residuals.len() > schedule.num_scales() {
        return Err(Error::arg(format!(
            "{} residuals for {} scales",
            residuals.len(),
            schedule.num_scales()
        )));
    }
    let d = schedule.feature_dim();
    for (idx, r) in residuals.iter().enumerate() {
        let (h_k, w_k) = schedule.scale(idx + 1);
        if r.dim() != (d, h_k, w_k) {
            return Err(Error::shape(format!(
                "residual {} must be ({d}, {h_k}, {w_k}), got {:?}",
                idx + 1,
                r.dim()
            )));
        }
    }
    let (h, w) = schedule.final_resolution();
    Ok(sum_upsampled(residuals, d, h, w))
}
