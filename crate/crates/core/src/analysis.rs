//! Evaluation over many replicated runs: agreement between intermediate and
//! final rankings, parameter sweeps, and per-strategy summaries.
//!
//! Replicates are paired: replicate r of any two configurations shares the
//! same derived seed, so their baseline randomness cancels in comparisons.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::{PotentialKind, PotentialSpec, Strategy};
use crate::error::{Error, Result};
use crate::orchestrator::{argmax_lowest, execute, run_full_width, RunSpec};
use crate::record::RunRecord;
use crate::reward::log_potential;
use crate::rng::replicate_seed;
use crate::schedule::make_default_schedule;
use crate::stats::{bootstrap_ci_mean, mean};

/// Seed for the bootstrap inside summaries, fixed so reports are stable.
const CI_SEED: u64 = 0x5EED;
const CI_ITERATIONS: usize = 2000;
const CI_LEVEL: f64 = 0.95;

/// How often the potential's favorite at scale k is the final winner.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyCurve {
    /// agreement[k-1] for scale k, each in [0, 1].
    pub agreement: Vec<f64>,
    pub replicates: usize,
}

impl ConsistencyCurve {
    /// CSV with a binomial standard error column.
    pub fn csv(&self) -> String {
        let mut out = String::from("scale,consistency,err\n");
        let n = self.replicates as f64;
        for (idx, &p) in self.agreement.iter().enumerate() {
            let err = (p * (1.0 - p) / n).sqrt();
            out.push_str(&format!("{},{},{}\n", idx + 1, p, err));
        }
        out
    }
}

/// For each scale k, the fraction of replicates in which the candidate the
/// potential ranks first at k is also the final-reward argmax. The final
/// scale compares the ranking with itself, so a noiseless reward gives
/// exactly 1.0 there.
pub fn consistency(spec: &RunSpec, n: usize, replicates: usize) -> Result<ConsistencyCurve> {
    if n < 2 {
        return Err(Error::arg("consistency needs at least 2 candidates"));
    }
    if replicates < 1 {
        return Err(Error::arg("consistency needs at least 1 replicate"));
    }
    let k_total = spec.schedule.num_scales();
    let potential = spec.search.potential;
    let hit_rows: Vec<Vec<bool>> = (0..replicates)
        .into_par_iter()
        .map(|rep| -> Result<Vec<bool>> {
            let seed = replicate_seed(spec.search.master_seed, rep);
            let run = run_full_width(&spec.with_seed(seed), n)?;
            let final_pick = argmax_lowest(&run.final_rewards);
            let mut hits = Vec::with_capacity(k_total);
            for k in 1..=k_total {
                let mut pick = 0usize;
                let mut best = f64::NEG_INFINITY;
                for (i, row) in run.reward_matrix.iter().enumerate() {
                    let lp = log_potential(&row[..k], &potential)?;
                    if lp > best {
                        best = lp;
                        pick = i;
                    }
                }
                hits.push(pick == final_pick);
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>>>()?;
    let agreement = (0..k_total)
        .map(|idx| {
            hit_rows.iter().filter(|row| row[idx]).count() as f64 / replicates as f64
        })
        .collect();
    Ok(ConsistencyCurve { agreement, replicates })
}

/// Outcomes of running one spec across paired replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcomes {
    /// Noiseless reward of the reported image, one per replicate.
    pub outcomes: Vec<f64>,
    /// Reward-model calls per replicate (a property of the schedule).
    pub reward_evals: u64,
    /// Generator flops per replicate under the cost model.
    pub total_flops: u64,
}

/// Run `replicates` independent replicates of `spec`, seeding replicate r
/// with `replicate_seed(master, r)`. Outcomes line up index by index with
/// any other spec run through this function at the same master seed.
pub fn replicate_outcomes(spec: &RunSpec, replicates: usize) -> Result<ReplicateOutcomes> {
    if replicates < 1 {
        return Err(Error::arg("need at least 1 replicate"));
    }
    let master = spec.search.master_seed;
    let records: Vec<RunRecord> = (0..replicates)
        .into_par_iter()
        .map(|rep| Ok(execute(&spec.with_seed(replicate_seed(master, rep)))?.record))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateOutcomes {
        outcomes: records.iter().map(|r| r.outcome_reward).collect(),
        reward_evals: records[0].reward_evals,
        total_flops: records[0].total_flops,
    })
}

/// One tunable to vary while everything else stays pinned.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    Lambda(Vec<f64>),
    Potential(Vec<PotentialKind>),
    /// Batch width: template multiplier for the search strategy, path count
    /// for the flat baselines.
    Width(Vec<usize>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Lambda(_) => "lambda",
            SweepAxis::Potential(_) => "potential",
            SweepAxis::Width(_) => "width",
        }
    }

    fn len(&self) -> usize {
        match self {
            SweepAxis::Lambda(v) => v.len(),
            SweepAxis::Potential(v) => v.len(),
            SweepAxis::Width(v) => v.len(),
        }
    }

    fn label(&self, idx: usize) -> String {
        match self {
            SweepAxis::Lambda(v) => format!("{}", v[idx]),
            SweepAxis::Potential(v) => v[idx].to_string(),
            SweepAxis::Width(v) => format!("{}", v[idx]),
        }
    }

    fn apply(&self, spec: &RunSpec, idx: usize) -> Result<RunSpec> {
        let mut out = spec.clone();
        match self {
            SweepAxis::Lambda(v) => {
                out.search.potential = PotentialSpec::new(spec.search.potential.kind, v[idx])?;
            }
            SweepAxis::Potential(v) => {
                out.search.potential = PotentialSpec::new(v[idx], spec.search.potential.lambda)?;
            }
            SweepAxis::Width(v) => {
                let n = v[idx];
                match spec.strategy {
                    Strategy::TtsVar => {
                        out.batch = make_default_schedule(spec.schedule.num_scales(), n)?;
                    }
                    Strategy::Bon { .. } => out.strategy = Strategy::Bon { n },
                    Strategy::Is { .. } => out.strategy = Strategy::Is { n },
                    Strategy::Raw => {
                        return Err(Error::arg("raw runs one path; width cannot vary"));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub mean_outcome: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub reward_evals: u64,
    pub total_flops: u64,
    /// Per-replicate outcomes, kept so callers can run paired tests.
    pub outcomes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: String,
    pub replicates: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn csv(&self) -> String {
        let mut out = format!("{},mean_reward,ci_lo,ci_hi,reward_evals,flops\n", self.axis);
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.label, row.mean_outcome, row.ci_lo, row.ci_hi, row.reward_evals, row.total_flops
            ));
        }
        out
    }
}

/// Evaluate the spec at every axis value with paired replicates.
pub fn sweep(spec: &RunSpec, axis: &SweepAxis, replicates: usize) -> Result<SweepTable> {
    if axis.len() == 0 {
        return Err(Error::arg("sweep needs at least one axis value"));
    }
    let mut rows = Vec::with_capacity(axis.len());
    for idx in 0..axis.len() {
        let point = axis.apply(spec, idx)?;
        let reps = replicate_outcomes(&point, replicates)?;
        let (ci_lo, ci_hi) = bootstrap_ci_mean(&reps.outcomes, CI_LEVEL, CI_ITERATIONS, CI_SEED)?;
        rows.push(SweepRow {
            label: axis.label(idx),
            mean_outcome: mean(&reps.outcomes)?,
            ci_lo,
            ci_hi,
            reward_evals: reps.reward_evals,
            total_flops: reps.total_flops,
            outcomes: reps.outcomes,
        });
    }
    Ok(SweepTable { axis: axis.name().into(), replicates, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub runs: usize,
    pub mean_outcome: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_reward_evals: f64,
    pub mean_total_flops: f64,
}

/// Group records by strategy and summarize outcomes, in label order.
pub fn summarize_records(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::arg("no records to summarize"));
    }
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for record in records {
        groups.entry(record.strategy.label()).or_default().push(record);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (strategy, group) in groups {
        let outcomes: Vec<f64> = group.iter().map(|r| r.outcome_reward).collect();
        let (ci_lo, ci_hi) = bootstrap_ci_mean(&outcomes, CI_LEVEL, CI_ITERATIONS, CI_SEED)?;
        rows.push(SummaryRow {
            strategy,
            runs: group.len(),
            mean_outcome: mean(&outcomes)?,
            ci_lo,
            ci_hi,
            mean_reward_evals: mean(&group.iter().map(|r| r.reward_evals as f64).collect::<Vec<_>>())?,
            mean_total_flops: mean(&group.iter().map(|r| r.total_flops as f64).collect::<Vec<_>>())?,
        });
    }
    Ok(rows)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("strategy,runs,mean_reward,ci_lo,ci_hi,mean_reward_evals,mean_flops\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.strategy,
            row.runs,
            row.mean_outcome,
            row.ci_lo,
            row.ci_hi,
            row.mean_reward_evals,
            row.mean_total_flops
        ));
    }
    out
}
