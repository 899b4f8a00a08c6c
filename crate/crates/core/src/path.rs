//! One search particle.

use crate::schedule::ScaleSchedule;
use crate::tensor::{sum_upsampled, upsample_nn, FeatureMap, Image};
use crate::error::{Error, Result};

/// A candidate generation path: its per-scale residuals, the running
/// accumulated feature map (always at final resolution), whatever
/// intermediates were decoded and scored, and enough ancestry to replay it.
///
/// `accumulated` is maintained incrementally in ascending scale order, the
/// same order `sum_upsampled` uses, so the two agree bit for bit.
#[derive(Debug, Clone)]
pub struct CandidatePath {
    pub residuals: Vec<FeatureMap>,
    pub accumulated: FeatureMap,
    /// Decoded intermediates as (scale, image), in decode order.
    pub decoded: Vec<(usize, Image)>,
    /// Scores as (scale, reward), in scoring order.
    pub rewards: Vec<(usize, f64)>,
    /// Ancestor slot per selection event applied so far.
    pub lineage: Vec<usize>,
    /// Slot occupied at each completed scale; the key to this path's RNG
    /// streams and therefore to exact replay.
    pub slot_history: Vec<usize>,
}

impl CandidatePath {
    pub fn new(schedule: &ScaleSchedule) -> Self {
        let (h, w) = schedule.final_resolution();
        Self {
            residuals: Vec::with_capacity(schedule.num_scales()),
            accumulated: FeatureMap::zeros((schedule.feature_dim(), h, w)),
            decoded: Vec::new(),
            rewards: Vec::new(),
            lineage: Vec::new(),
            slot_history: Vec::new(),
        }
    }

    /// Number of scales generated so far.
    pub fn scales_done(&self) -> usize {
        self.residuals.len()
    }

    /// Append the next scale's residual and fold it into `accumulated`.
    pub fn push_residual(&mut self, residual: FeatureMap, schedule: &ScaleSchedule) -> Result<()> {
        let k = self.scales_done() + 1;
        if k > schedule.num_scales() {
            return Err(Error::arg(format!(
                "path already has all {} scales",
                schedule.num_scales()
            )));
        }
        let (h_k, w_k) = schedule.scale(k);
        let d = schedule.feature_dim();
        let (h, w) = schedule.final_resolution();
        if residual.dim() != (d, h_k, w_k) {
            return Err(Error::shape(format!(
                "residual for scale {k} must be ({d}, {h_k}, {w_k}), got {:?}",
                residual.dim()
            )));
        }
        self.accumulated += &upsample_nn(&residual, h, w);
        self.residuals.push(residual);
        Ok(())
    }

    /// Reward values in scoring order.
    pub fn reward_history(&self) -> Vec<f64> {
        self.rewards.iter().map(|&(_, r)| r).collect()
    }

    /// Max elementwise deviation between `accumulated` and a from-scratch
    /// ascending re-accumulation of the stored residuals.
    pub fn accumulation_error(&self, schedule: &ScaleSchedule) -> f64 {
        let (h, w) = schedule.final_resolution();
        let fresh = sum_upsampled(&self.residuals, schedule.feature_dim(), h, w);
        self.accumulated
            .iter()
            .zip(fresh.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn incremental_matches_fresh_accumulation_exactly() {
        let schedule = ScaleSchedule::toy(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut path = CandidatePath::new(&schedule);
        for k in 1..=schedule.num_scales() {
            let (h_k, w_k) = schedule.scale(k);
            let r = Array3::from_shape_fn((3, h_k, w_k), |_| rng.random::<f64>() - 0.5);
            path.push_residual(r, &schedule).unwrap();
            assert_eq!(path.accumulation_error(&schedule), 0.0, "scale {k}");
        }
    }

    #[test]
    fn rejects_wrong_shape_and_overflow() {
        let schedule = ScaleSchedule::toy(2);
        let mut path = CandidatePath::new(&schedule);
        assert!(path
            .push_residual(Array3::zeros((2, 2, 2)), &schedule)
            .is_err());
        for k in 1..=6 {
            let (h_k, w_k) = schedule.scale(k);
            path.push_residual(Array3::zeros((2, h_k, w_k)), &schedule)
                .unwrap();
        }
        assert!(path
            .push_residual(Array3::zeros((2, 32, 32)), &schedule)
            .is_err());
    }
}
