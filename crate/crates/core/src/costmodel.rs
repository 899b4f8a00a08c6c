//! Transformer inference cost accounting across a scale schedule.
//!
//! The model is a decoder that emits all tokens of one scale in a single
//! forward pass while attending over every token produced so far. Per layer
//! and per batch element, a scale with `t` new tokens and `T` cumulative
//! tokens costs
//!
//!   flops = C_ATTN * t * T * H + C_MLP * t * H^2
//!   bytes = KV_BYTES * T * H + ACT_BYTES * t * H
//!
//! Counts are exact integers (u128 internally) and are asserted to stay
//! below 2^53 so they survive a round trip through f64.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{BatchSchedule, ScaleSchedule};

/// Attention flops per token pair per hidden unit (QK^T, softmax-V, and the
/// two projections folded together).
pub const C_ATTN: u128 = 4;
/// MLP flops per token per hidden unit squared (up and down projections of
/// a 4H feed-forward, multiply-accumulate counted as 2).
pub const C_MLP: u128 = 16;
/// Bytes of KV cache per cached token per hidden unit (two halves at fp16).
pub const KV_BYTES: u128 = 4;
/// Bytes of live activations per new token per hidden unit (fp16).
pub const ACT_BYTES: u128 = 2;

const F64_EXACT_LIMIT: u128 = 1 << 53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub hidden: u64,
    pub layers: u64,
    pub heads: u64,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self { hidden: 1024, layers: 32, heads: 16 }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 || self.heads == 0 {
            return Err(Error::config("model dims must be positive"));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::config(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

/// Cost of one scale of one schedule at a given batch width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleCost {
    pub scale: usize,
    pub tokens: u64,
    pub cum_tokens: u64,
    pub batch: u64,
    pub flops: u64,
    pub mem_bytes: u64,
}

fn checked_u64(value: u128, what: &str) -> Result<u64> {
    if value >= F64_EXACT_LIMIT {
        return Err(Error::arg(format!(
            "{what} {value} exceeds the exact-f64 range"
        )));
    }
    Ok(value as u64)
}

/// Cost of generating scale `k` (1-based) of `schedule` at batch width
/// `batch`, attending over all tokens of scales 1..=k.
pub fn scale_cost(
    schedule: &ScaleSchedule,
    dims: &ModelDims,
    k: usize,
    batch: usize,
) -> Result<ScaleCost> {
    dims.validate()?;
    if k < 1 || k > schedule.num_scales() {
        return Err(Error::arg(format!(
            "scale {k} outside 1..={}",
            schedule.num_scales()
        )));
    }
    if batch < 1 {
        return Err(Error::arg("batch width must be positive"));
    }
    let t = schedule.token_count(k) as u128;
    let tt = schedule.cumulative_tokens(k) as u128;
    let h = dims.hidden as u128;
    let bl = batch as u128 * dims.layers as u128;
    let flops = bl * (C_ATTN * t * tt * h + C_MLP * t * h * h);
    let mem = bl * (KV_BYTES * tt * h + ACT_BYTES * t * h);
    Ok(ScaleCost {
        scale: k,
        tokens: t as u64,
        cum_tokens: tt as u64,
        batch: batch as u64,
        flops: checked_u64(flops, "flops")?,
        mem_bytes: checked_u64(mem, "mem")?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<ScaleCost>,
    pub total_flops: u64,
    pub peak_mem_bytes: u64,
}

/// Per-scale and total cost of running `batch` candidates down `schedule`.
pub fn cost_report(
    schedule: &ScaleSchedule,
    batch: &BatchSchedule,
    dims: &ModelDims,
) -> Result<CostReport> {
    if batch.len() != schedule.num_scales() {
        return Err(Error::arg(format!(
            "batch schedule has {} entries for {} scales",
            batch.len(),
            schedule.num_scales()
        )));
    }
    let rows: Vec<ScaleCost> = (1..=schedule.num_scales())
        .map(|k| scale_cost(schedule, dims, k, batch.size(k)))
        .collect::<Result<_>>()?;
    let total: u128 = rows.iter().map(|r| r.flops as u128).sum();
    let peak = rows.iter().map(|r| r.mem_bytes).max().unwrap();
    Ok(CostReport {
        rows,
        total_flops: checked_u64(total, "total flops")?,
        peak_mem_bytes: peak,
    })
}

/// One scale of a fixed-width versus descending-width comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scale: usize,
    pub tokens: u64,
    pub cum_tokens: u64,
    pub fixed_batch: u64,
    pub fixed_flops: u64,
    pub adaptive_batch: u64,
    pub adaptive_flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleComparison {
    pub rows: Vec<ComparisonRow>,
    pub fixed_total_flops: u64,
    pub adaptive_total_flops: u64,
    /// adaptive / fixed.
    pub flops_ratio: f64,
    /// Fraction of the fixed-width total spent on the last scale alone.
    pub fixed_last_scale_share: f64,
}

/// Compare a flat batch against a descending one on the same scale ladder.
pub fn compare_schedules(
    schedule: &ScaleSchedule,
    fixed: &BatchSchedule,
    adaptive: &BatchSchedule,
    dims: &ModelDims,
) -> Result<ScheduleComparison> {
    let fixed_report = cost_report(schedule, fixed, dims)?;
    let adaptive_report = cost_report(schedule, adaptive, dims)?;
    let rows = fixed_report
        .rows
        .iter()
        .zip(adaptive_report.rows.iter())
        .map(|(f, a)| ComparisonRow {
            scale: f.scale,
            tokens: f.tokens,
            cum_tokens: f.cum_tokens,
            fixed_batch: f.batch,
            fixed_flops: f.flops,
            adaptive_batch: a.batch,
            adaptive_flops: a.flops,
        })
        .collect();
    let last = fixed_report.rows.last().unwrap().flops;
    Ok(ScheduleComparison {
        rows,
        fixed_total_flops: fixed_report.total_flops,
        adaptive_total_flops: adaptive_report.total_flops,
        flops_ratio: adaptive_report.total_flops as f64 / fixed_report.total_flops as f64,
        fixed_last_scale_share: last as f64 / fixed_report.total_flops as f64,
    })
}

pub fn report_csv(report: &CostReport) -> String {
    let mut out = String::from("scale,tokens,cum_tokens,batch,flops,mem\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scale, r.tokens, r.cum_tokens, r.batch, r.flops, r.mem_bytes
        ));
    }
    out
}

pub fn comparison_csv(cmp: &ScheduleComparison) -> String {
    let mut out = String::from(
        "scale,tokens,cum_tokens,fixed_batch,fixed_flops,adaptive_batch,adaptive_flops,ratio\n",
    );
    for r in &cmp.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.scale,
            r.tokens,
            r.cum_tokens,
            r.fixed_batch,
            r.fixed_flops,
            r.adaptive_batch,
            r.adaptive_flops,
            r.adaptive_flops as f64 / r.fixed_flops as f64
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder() -> ScaleSchedule {
        ScaleSchedule::ladder13(4)
    }

    #[test]
    fn first_scale_hand_computed() {
        // t = T = 1: per layer at batch 32,
        // 32 * (4*1*1*1024 + 16*1*1024^2) = 537_001_984, times 32 layers.
        let cost = scale_cost(&ladder(), &ModelDims::default(), 1, 32).unwrap();
        assert_eq!(cost.flops, 537_001_984 * 32);
        assert_eq!(cost.mem_bytes, 32 * 32 * (4 * 1024 + 2 * 1024));
    }

    #[test]
    fn ladder_token_sums() {
        let s = ladder();
        let total: usize = (1..=13).map(|k| s.token_count(k)).sum();
        assert_eq!(total, 10_521);
        let weighted: usize = (1..=13).map(|k| s.token_count(k) * s.cumulative_tokens(k)).sum();
        assert_eq!(weighted, 68_484_681);
    }

    #[test]
    fn flops_linear_in_batch() {
        let s = ladder();
        let dims = ModelDims::default();
        for k in [1usize, 5, 13] {
            let one = scale_cost(&s, &dims, k, 1).unwrap();
            let eight = scale_cost(&s, &dims, k, 8).unwrap();
            assert_eq!(eight.flops, 8 * one.flops);
            assert_eq!(eight.mem_bytes, 8 * one.mem_bytes);
        }
    }

    #[test]
    fn cost_strictly_increases_with_scale() {
        let s = ladder();
        let dims = ModelDims::default();
        let mut prev = 0;
        for k in 1..=13 {
            let c = scale_cost(&s, &dims, k, 1).unwrap();
            assert!(c.flops > prev, "scale {k}");
            prev = c.flops;
        }
    }

    #[test]
    fn frozen_totals_for_thirteen_rung_ladder() {
        let s = ladder();
        let dims = ModelDims::default();
        let fixed = cost_report(&s, &BatchSchedule::flat(1, 13).unwrap(), &dims).unwrap();
        assert_eq!(fixed.total_flops, 14_624_842_973_184);
        let template = BatchSchedule::from_sizes(vec![8, 8, 6, 6, 6, 4, 2, 2, 2, 1, 1, 1, 1]).unwrap();
        let adaptive = cost_report(&s, &template, &dims).unwrap();
        assert_eq!(adaptive.total_flops, 16_048_824_778_752);
        let last = scale_cost(&s, &dims, 13, 1).unwrap();
        assert_eq!(last.flops, 7_847_442_120_704);
        assert_eq!(last.mem_bytes, 32 * (4 * 10_521 * 1024 + 2 * 4096 * 1024));
    }

    #[test]
    fn totals_are_row_sums() {
        let s = ScaleSchedule::toy(4);
        let batch = BatchSchedule::from_sizes(vec![8, 6, 4, 2, 1, 1]).unwrap();
        let report = cost_report(&s, &batch, &ModelDims::default()).unwrap();
        let sum: u64 = report.rows.iter().map(|r| r.flops).sum();
        assert_eq!(report.total_flops, sum);
        let peak = report.rows.iter().map(|r| r.mem_bytes).max().unwrap();
        assert_eq!(report.peak_mem_bytes, peak);
    }

    #[test]
    fn comparison_ratio_is_one_when_batches_match() {
        let s = ladder();
        let batch = BatchSchedule::flat(2, 13).unwrap();
        let cmp = compare_schedules(&s, &batch, &batch, &ModelDims::default()).unwrap();
        assert_eq!(cmp.flops_ratio, 1.0);
        assert_eq!(cmp.rows.len(), 13);
    }

    #[test]
    fn csv_shapes() {
        let s = ScaleSchedule::toy(4);
        let batch = BatchSchedule::flat(1, 6).unwrap();
        let report = cost_report(&s, &batch, &ModelDims::default()).unwrap();
        let csv = report_csv(&report);
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("scale,tokens,cum_tokens,batch,flops,mem\n"));
        let cmp = compare_schedules(&s, &batch, &batch, &ModelDims::default()).unwrap();
        assert_eq!(comparison_csv(&cmp).lines().count(), 7);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = ladder();
        let dims = ModelDims::default();
        assert!(scale_cost(&s, &dims, 0, 1).is_err());
        assert!(scale_cost(&s, &dims, 14, 1).is_err());
        assert!(scale_cost(&s, &dims, 1, 0).is_err());
        let bad = ModelDims { hidden: 1000, layers: 32, heads: 16 };
        assert!(scale_cost(&s, &bad, 1, 1).is_err());
        let short = BatchSchedule::flat(1, 6).unwrap();
        assert!(cost_report(&s, &short, &dims).is_err());
    }
}
