//! Strategy execution: expand a batch of candidate paths scale by scale,
//! apply selection events between scales, and report one final image.
//!
//! Determinism contract: every random draw comes from a stream keyed by
//! (master seed, id, scale), where id is the slot a path occupies or a
//! reserved event id. Slot expansion parallelizes over a batch, but since
//! streams are slot-keyed and results are collected in slot order, the
//! worker count never shows up in the output.

use rayon::prelude::*;

use crate::config::{PotentialKind, SearchConfig, Strategy};
use crate::costmodel::{cost_report, ModelDims};
use crate::error::{Error, Result};
use crate::features::{diversity_select, extract, kmeanspp_cluster};
use crate::generator::{Generator, PromptSpec, ToyGenerator, ToyGeneratorParams};
use crate::path::CandidatePath;
use crate::record::{image_to_rows, EventKind, RunRecord, SelectionEvent, RECORD_VERSION};
use crate::reward::{
    importance_sampling_baseline, multinomial_select, potential_result, Reward, ToyReward,
};
use crate::rng::{
    derive_rng, ID_CLUSTER_EVENT, ID_FINAL_DRAW, ID_RESAMPLE_EVENT, ID_REWARD_NOISE_BASE,
};
use crate::schedule::{make_default_schedule, BatchSchedule, ScaleSchedule};
use crate::tensor::Image;

/// Everything a run needs. The same spec with a different strategy is the
/// paired comparison the evaluation leans on.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub schedule: ScaleSchedule,
    /// Batch width per scale; only `TtsVar` uses it, the baselines run flat.
    pub batch: BatchSchedule,
    pub search: SearchConfig,
    pub generator: ToyGeneratorParams,
    /// Scoring noise std per scale; None scores exactly.
    pub reward_noise: Option<Vec<f64>>,
    pub prompt: PromptSpec,
    pub strategy: Strategy,
    pub dims: ModelDims,
}

impl RunSpec {
    /// The pinned benchmark setup: 6-scale ladder to 32x32, descending
    /// batch at multiplier `n`, diversity events at scales 2 and 3,
    /// resampling at 4 and 5.
    pub fn toy_default(n: usize, master_seed: u64) -> Result<Self> {
        use crate::config::{PotentialSpec, SearchConfig};
        use crate::features::ExtractorVariant;
        use crate::generator::TargetKind;
        use std::collections::BTreeSet;
        let schedule = ScaleSchedule::toy(4);
        let batch = make_default_schedule(6, n)?;
        Ok(Self {
            schedule,
            batch,
            search: SearchConfig {
                cluster_scales: BTreeSet::from([2, 3]),
                resample_scales: BTreeSet::from([4, 5]),
                potential: PotentialSpec::new(PotentialKind::Value, 150.0)?,
                extractor: ExtractorVariant::default(),
                master_seed,
                replicates: 1,
            },
            generator: ToyGeneratorParams::default_for(6),
            reward_noise: None,
            prompt: PromptSpec::Procedural { kind: TargetKind::Blobs, seed: 7, pixels: 32 },
            strategy: Strategy::TtsVar,
            dims: ModelDims::default(),
        })
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        Self { strategy, ..self.clone() }
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        let mut spec = self.clone();
        spec.search.master_seed = master_seed;
        spec
    }

    /// Rebuild the spec a record was produced from.
    pub fn from_record(record: &RunRecord) -> Self {
        Self {
            schedule: record.schedule.clone(),
            batch: record.batch.clone(),
            search: record.search.clone(),
            generator: record.generator.clone(),
            reward_noise: record.reward_noise.clone(),
            prompt: record.prompt.clone(),
            strategy: record.strategy,
            dims: record.dims,
        }
    }

    /// The batch widths the strategy actually runs.
    pub fn effective_batch(&self) -> Result<BatchSchedule> {
        let k = self.schedule.num_scales();
        match self.strategy {
            Strategy::Raw => BatchSchedule::flat(1, k),
            Strategy::Bon { n } | Strategy::Is { n } => BatchSchedule::flat(n, k),
            Strategy::TtsVar => Ok(self.batch.clone()),
        }
    }

    /// The search config the strategy actually runs; baselines keep the
    /// potential (IS needs lambda) but drop all selection events.
    pub fn effective_search(&self) -> SearchConfig {
        match self.strategy {
            Strategy::TtsVar => self.search.clone(),
            _ => SearchConfig {
                cluster_scales: Default::default(),
                resample_scales: Default::default(),
                ..self.search.clone()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.schedule.num_scales();
        self.dims.validate()?;
        self.generator.validate(k)?;
        if let Strategy::Bon { n } | Strategy::Is { n } = self.strategy {
            if n < 1 {
                return Err(Error::config("strategy width must be at least 1"));
            }
        }
        let reward = match &self.reward_noise {
            Some(noise) => ToyReward::noisy(noise.clone()),
            None => ToyReward::exact(),
        };
        reward.validate(k)?;
        let batch = self.effective_batch()?;
        self.effective_search().validate(&self.schedule, &batch)
    }
}

/// A finished run: its record plus in-memory finals for further analysis.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub record: RunRecord,
    /// Final image per surviving slot.
    pub final_images: Vec<Image>,
    /// Full candidate paths per surviving slot.
    pub paths: Vec<CandidatePath>,
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Apply a selection: outgoing slot j continues incoming slot selected[j].
fn take_selected(live: Vec<CandidatePath>, selected: &[usize]) -> Vec<CandidatePath> {
    selected
        .iter()
        .map(|&i| {
            let mut path = live[i].clone();
            path.lineage.push(i);
            path
        })
        .collect()
}

/// Run a spec to completion.
pub fn execute(spec: &RunSpec) -> Result<StrategyRun> {
    spec.validate()?;
    let batch = spec.effective_batch()?;
    let search = spec.effective_search();
    let schedule = &spec.schedule;
    let k_total = schedule.num_scales();
    let generator = ToyGenerator::new(schedule.clone(), spec.generator.clone())?;
    let prompt = spec.prompt.materialize()?;
    let reward = match &spec.reward_noise {
        Some(noise) => ToyReward::noisy(noise.clone()),
        None => ToyReward::exact(),
    };
    let master = search.master_seed;

    // Scoring policy: finals always; resample scales always; for history
    // potentials (max, sum) every scale from the first resample scale on,
    // so the history those functionals see does not depend on which later
    // scale asks.
    let min_resample = search.resample_scales.iter().next().copied();
    let score_every_from = match (search.potential.kind, min_resample) {
        (PotentialKind::Max | PotentialKind::Sum, Some(m)) => Some(m),
        _ => None,
    };
    let score_at = |k: usize| {
        k == k_total
            || search.resample_scales.contains(&k)
            || score_every_from.is_some_and(|m| k >= m)
    };
    let decode_at = |k: usize| score_at(k) || search.cluster_scales.contains(&k);

    let mut live: Vec<CandidatePath> =
        (0..batch.size(1)).map(|_| CandidatePath::new(schedule)).collect();
    let mut events: Vec<SelectionEvent> = Vec::new();
    let mut reward_evals: u64 = 0;

    for k in 1..=k_total {
        let width = batch.size(k);
        if live.len() != width {
            return Err(Error::arg(format!(
                "internal: {} live paths entering scale {k}, batch wants {width}",
                live.len()
            )));
        }
        let needs_score = score_at(k);
        let needs_decode = decode_at(k);
        live = live
            .into_par_iter()
            .enumerate()
            .map(|(slot, mut path)| -> Result<CandidatePath> {
                let mut rng = derive_rng(master, slot as u64, k as u64);
                let residual = generator.sample_residual(&path, k, &prompt, &mut rng)?;
                path.push_residual(residual, schedule)?;
                path.slot_history.push(slot);
                if needs_decode {
                    let image = generator.decode(&path.accumulated);
                    if needs_score {
                        let mut score_rng =
                            derive_rng(master, ID_REWARD_NOISE_BASE + slot as u64, k as u64);
                        let r = reward.score_at_scale(&image, &prompt, k, &mut score_rng);
                        path.rewards.push((k, r));
                    }
                    path.decoded.push((k, image));
                }
                Ok(path)
            })
            .collect::<Result<Vec<_>>>()?;
        if needs_score {
            reward_evals += width as u64;
        }
        if k == k_total {
            break;
        }
        let next_width = batch.size(k + 1);
        if search.cluster_scales.contains(&k) {
            let images: Vec<Image> = live
                .iter()
                .map(|p| p.decoded.last().expect("decoded at cluster scale").1.clone())
                .collect();
            let embeddings = extract(&images, &search.extractor, k)?;
            let mut rng = derive_rng(master, ID_CLUSTER_EVENT, k as u64);
            let (assignments, centroids) = kmeanspp_cluster(&embeddings, next_width, &mut rng)?;
            let selected = diversity_select(&embeddings, &assignments, &centroids, next_width)?;
            events.push(SelectionEvent {
                scale: k,
                kind: EventKind::Cluster,
                batch_before: width,
                batch_after: next_width,
                raw_scores: None,
                potentials: None,
                weights: None,
                assignments: Some(assignments),
                selected: selected.clone(),
            });
            live = take_selected(live, &selected);
        } else if search.resample_scales.contains(&k) {
            let histories: Vec<Vec<f64>> = live.iter().map(|p| p.reward_history()).collect();
            let pot = potential_result(&histories, &search.potential)?;
            let mut rng = derive_rng(master, ID_RESAMPLE_EVENT, k as u64);
            let selected = multinomial_select(&pot.weights, next_width, &mut rng)?;
            events.push(SelectionEvent {
                scale: k,
                kind: EventKind::Resample,
                batch_before: width,
                batch_after: next_width,
                raw_scores: Some(pot.raw_scores),
                potentials: Some(pot.potentials),
                weights: Some(pot.weights),
                assignments: None,
                selected: selected.clone(),
            });
            live = take_selected(live, &selected);
        } else if next_width < width {
            let selected: Vec<usize> = (0..next_width).collect();
            events.push(SelectionEvent {
                scale: k,
                kind: EventKind::Truncate,
                batch_before: width,
                batch_after: next_width,
                raw_scores: None,
                potentials: None,
                weights: None,
                assignments: None,
                selected: selected.clone(),
            });
            live = take_selected(live, &selected);
        } else if next_width > width {
            return Err(Error::config(format!(
                "batch grows {width} -> {next_width} after scale {k}"
            )));
        }
    }

    let final_rewards: Vec<f64> = live
        .iter()
        .map(|p| p.rewards.last().expect("finals are always scored").1)
        .collect();
    let selected_slot = match spec.strategy {
        Strategy::Raw => 0,
        Strategy::Is { .. } => {
            let mut rng = derive_rng(master, ID_FINAL_DRAW, k_total as u64);
            importance_sampling_baseline(&final_rewards, search.potential.lambda, &mut rng)?
        }
        Strategy::Bon { .. } | Strategy::TtsVar => argmax_lowest(&final_rewards),
    };
    let final_images: Vec<Image> = live
        .iter()
        .map(|p| p.decoded.last().expect("finals are always decoded").1.clone())
        .collect();
    // Reported quality is always the noiseless score, whatever the search saw.
    let outcome_reward = reward.score(&final_images[selected_slot], &prompt);
    let total_flops = cost_report(schedule, &batch, &spec.dims)?.total_flops;
    let (final_image, image_shape) = image_to_rows(&final_images[selected_slot]);
    let record = RunRecord {
        version: RECORD_VERSION,
        strategy: spec.strategy,
        master_seed: master,
        schedule: schedule.clone(),
        batch,
        search,
        generator: spec.generator.clone(),
        reward_noise: spec.reward_noise.clone(),
        prompt: spec.prompt.clone(),
        dims: spec.dims,
        events,
        slot_histories: live.iter().map(|p| p.slot_history.clone()).collect(),
        lineages: live.iter().map(|p| p.lineage.clone()).collect(),
        final_rewards,
        selected_slot,
        outcome_reward,
        reward_evals,
        total_flops,
        final_image,
        image_shape,
    };
    Ok(StrategyRun { record, final_images, paths: live })
}

pub fn run_ttsvar(spec: &RunSpec) -> Result<StrategyRun> {
    execute(&spec.with_strategy(Strategy::TtsVar))
}

pub fn run_bon(spec: &RunSpec, n: usize) -> Result<StrategyRun> {
    execute(&spec.with_strategy(Strategy::Bon { n }))
}

pub fn run_is(spec: &RunSpec, n: usize) -> Result<StrategyRun> {
    execute(&spec.with_strategy(Strategy::Is { n }))
}

pub fn run_raw(spec: &RunSpec) -> Result<StrategyRun> {
    execute(&spec.with_strategy(Strategy::Raw))
}

/// Regrow one final candidate of a recorded run from its slot history and
/// decode it. For the recorded `selected_slot` the result must equal the
/// stored image bit for bit.
pub fn replay_lineage(record: &RunRecord, final_slot: usize) -> Result<Image> {
    let schedule = &record.schedule;
    let generator = ToyGenerator::new(schedule.clone(), record.generator.clone())?;
    let prompt = record.prompt.materialize()?;
    let history = record.slot_histories.get(final_slot).ok_or_else(|| {
        Error::arg(format!(
            "final slot {final_slot} outside 0..{}",
            record.slot_histories.len()
        ))
    })?;
    if history.len() != schedule.num_scales() {
        return Err(Error::parse(format!(
            "slot history has {} entries for {} scales",
            history.len(),
            schedule.num_scales()
        )));
    }
    let mut path = CandidatePath::new(schedule);
    for (idx, &slot) in history.iter().enumerate() {
        let k = idx + 1;
        let mut rng = derive_rng(record.master_seed, slot as u64, k as u64);
        let residual = generator.sample_residual(&path, k, &prompt, &mut rng)?;
        path.push_residual(residual, schedule)?;
    }
    Ok(generator.decode(&path.accumulated))
}

/// A flat-batch run scored at every scale, for agreement analysis between
/// intermediate and final rankings.
#[derive(Debug, Clone)]
pub struct FullWidthRun {
    /// reward_matrix[i][k-1] is candidate i's score at scale k.
    pub reward_matrix: Vec<Vec<f64>>,
    pub final_rewards: Vec<f64>,
}

pub fn run_full_width(spec: &RunSpec, n: usize) -> Result<FullWidthRun> {
    if n < 1 {
        return Err(Error::arg("full-width run needs n >= 1"));
    }
    spec.validate()?;
    let schedule = &spec.schedule;
    let k_total = schedule.num_scales();
    let generator = ToyGenerator::new(schedule.clone(), spec.generator.clone())?;
    let prompt = spec.prompt.materialize()?;
    let reward = match &spec.reward_noise {
        Some(noise) => ToyReward::noisy(noise.clone()),
        None => ToyReward::exact(),
    };
    let master = spec.search.master_seed;
    let reward_matrix: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|slot| -> Result<Vec<f64>> {
            let mut path = CandidatePath::new(schedule);
            let mut row = Vec::with_capacity(k_total);
            for k in 1..=k_total {
                let mut rng = derive_rng(master, slot as u64, k as u64);
                let residual = generator.sample_residual(&path, k, &prompt, &mut rng)?;
                path.push_residual(residual, schedule)?;
                let image = generator.decode(&path.accumulated);
                let mut score_rng =
                    derive_rng(master, ID_REWARD_NOISE_BASE + slot as u64, k as u64);
                row.push(reward.score_at_scale(&image, &prompt, k, &mut score_rng));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let final_rewards = reward_matrix.iter().map(|row| row[k_total - 1]).collect();
    Ok(FullWidthRun { reward_matrix, final_rewards })
}
