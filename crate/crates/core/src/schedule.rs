//! Scale and batch schedules.
//!
//! Scales are 1-based throughout: scale 1 is the 1x1 root, scale K the final
//! resolution. Residual r_k lives at (h_k, w_k); accumulated features always
//! live at the final resolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-scale token resolutions plus the channel count d.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    resolutions: Vec<(usize, usize)>,
    feature_dim: usize,
}

impl ScaleSchedule {
    pub fn new(resolutions: Vec<(usize, usize)>, feature_dim: usize) -> Result<Self> {
        if resolutions.len() < 2 {
            return Err(Error::arg("schedule needs at least 2 scales"));
        }
        if feature_dim == 0 {
            return Err(Error::arg("feature_dim must be positive"));
        }
        if resolutions[0] != (1, 1) {
            return Err(Error::arg("scale 1 must be 1x1"));
        }
        for win in resolutions.windows(2) {
            let ((h0, w0), (h1, w1)) = (win[0], win[1]);
            if h1 < h0 || w1 < w0 {
                return Err(Error::arg(format!(
                    "resolutions must be nondecreasing, got {h0}x{w0} then {h1}x{w1}"
                )));
            }
        }
        Ok(Self { resolutions, feature_dim })
    }

    pub fn from_sides(sides: &[usize], feature_dim: usize) -> Result<Self> {
        Self::new(sides.iter().map(|&s| (s, s)).collect(), feature_dim)
    }

    /// 6-scale power-of-two ladder ending at 32x32; the synthetic default.
    pub fn toy(feature_dim: usize) -> Self {
        Self::from_sides(&[1, 2, 4, 8, 16, 32], feature_dim).expect("static ladder")
    }

    /// 13-rung ladder ending at 64x64, used for cost studies and deep runs.
    pub fn ladder13(feature_dim: usize) -> Self {
        Self::from_sides(&[1, 2, 4, 6, 8, 12, 16, 20, 24, 32, 40, 48, 64], feature_dim)
            .expect("static ladder")
    }

    pub fn num_scales(&self) -> usize {
        self.resolutions.len()
    }

    /// Resolution of scale `k` (1-based).
    pub fn scale(&self, k: usize) -> (usize, usize) {
        self.resolutions[k - 1]
    }

    pub fn token_count(&self, k: usize) -> usize {
        let (h, w) = self.scale(k);
        h * w
    }

    pub fn cumulative_tokens(&self, k: usize) -> usize {
        (1..=k).map(|i| self.token_count(i)).sum()
    }

    pub fn final_resolution(&self) -> (usize, usize) {
        *self.resolutions.last().unwrap()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn resolutions(&self) -> &[(usize, usize)] {
        &self.resolutions
    }
}

/// Descending candidate counts per scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSchedule {
    sizes: Vec<usize>,
    multiplier: usize,
}

/// Base batch template for 13 scales; other scale counts sample it at the
/// nearest normalized position.
pub const BASE_TEMPLATE: [usize; 13] = [8, 8, 6, 6, 6, 4, 2, 2, 2, 1, 1, 1, 1];

/// Index into a `len`-entry template for 1-based scale `k` of `total`:
/// nearest normalized position, ties toward the earlier entry. Integer
/// arithmetic, so ties are exact.
pub(crate) fn stretch_index(k: usize, total: usize, len: usize) -> usize {
    let num = (k - 1) * (len - 1);
    let den = total - 1;
    let q = num / den;
    let r = num % den;
    if 2 * r > den {
        q + 1
    } else {
        q
    }
}

/// The descending batch template scaled by `n`, stretched to `k` scales.
pub fn make_default_schedule(k: usize, n: usize) -> Result<BatchSchedule> {
    if k < 2 {
        return Err(Error::arg("schedule needs at least 2 scales"));
    }
    if n < 1 {
        return Err(Error::arg("multiplier must be at least 1"));
    }
    let sizes = (1..=k)
        .map(|i| BASE_TEMPLATE[stretch_index(i, k, BASE_TEMPLATE.len())] * n)
        .collect();
    Ok(BatchSchedule { sizes, multiplier: n })
}

impl BatchSchedule {
    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::arg("batch schedule must be nonempty"));
        }
        if sizes.iter().any(|&b| b == 0) {
            return Err(Error::arg("batch sizes must be positive"));
        }
        if sizes.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::arg("batch sizes must be nonincreasing"));
        }
        Ok(Self { sizes, multiplier: 1 })
    }

    /// Constant batch of `n` across `k` scales.
    pub fn flat(n: usize, k: usize) -> Result<Self> {
        if n < 1 || k < 1 {
            return Err(Error::arg("flat schedule needs n >= 1 and k >= 1"));
        }
        Ok(Self { sizes: vec![n; k], multiplier: n })
    }

    /// Batch size at scale `k` (1-based).
    pub fn size(&self, k: usize) -> usize {
        self.sizes[k - 1]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn multiplier(&self) -> usize {
        self.multiplier
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn final_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }
}
