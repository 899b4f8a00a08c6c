//! Flat dotted-key configuration. Values layer in a fixed order: built-in
//! defaults, then a config file, then the VARSEARCH_SEED environment
//! variable, then positional key=value overrides, then named flags. Later
//! layers win. Every key is checked against the schema; unknown keys are
//! fatal so typos cannot silently fall back to defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use varsearch_core::analysis::SweepAxis;
use varsearch_core::config::{PotentialKind, PotentialSpec, SearchConfig, Strategy};
use varsearch_core::costmodel::ModelDims;
use varsearch_core::features::{ExtractorTag, ExtractorVariant};
use varsearch_core::generator::{PromptSpec, TargetKind, ToyGeneratorParams};
use varsearch_core::orchestrator::RunSpec;
use varsearch_core::schedule::{make_default_schedule, BatchSchedule, ScaleSchedule};

/// Every key a config file or override may set.
pub const KNOWN_KEYS: &[&str] = &[
    "strategy",
    "n",
    "seed",
    "replicates",
    "schedule.sides",
    "schedule.feature_dim",
    "batch.sizes",
    "generator.noise",
    "generator.drift",
    "generator.gain",
    "generator.pixel_scale",
    "reward.noise",
    "prompt.kind",
    "prompt.seed",
    "prompt.pixels",
    "prompt.path",
    "search.cluster_scales",
    "search.resample_scales",
    "search.potential",
    "search.lambda",
    "search.extractor",
    "search.patch_grid",
    "search.embed_dim",
    "model.hidden",
    "model.layers",
    "model.heads",
    "cost.adaptive_flat",
    "sweep.axis",
    "sweep.values",
];

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    values: BTreeMap<&'static str, String>,
}

impl Manifest {
    /// Set one key, rejecting anything outside the schema by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let canon = KNOWN_KEYS
            .iter()
            .find(|&&k| k == key)
            .ok_or_else(|| anyhow!("unknown config key {key:?}"))?;
        self.values.insert(canon, value.trim().to_string());
        Ok(())
    }

    /// Layer in a config file: one `key = value` per line, `#` comments.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!("{}:{}: expected key = value, got {raw:?}", path.display(), idx + 1)
            })?;
            self.set(key.trim(), value)
                .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        }
        Ok(())
    }

    /// Layer in one positional `key=value` override.
    pub fn set_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("override {pair:?} is not key=value"))?;
        self.set(key.trim(), value)
    }

    fn get(&self, key: &'static str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T>(&self, key: &'static str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("config key {key}: {e} (got {raw:?})")),
        }
    }

    fn parsed_or<T>(&self, key: &'static str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Comma-separated list; "none" and the empty string mean an empty list.
    fn list<T>(&self, key: &'static str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = match self.get(key) {
            None => return Ok(None),
            Some(raw) => raw,
        };
        if raw.is_empty() || raw == "none" {
            return Ok(Some(Vec::new()));
        }
        raw.split(',')
            .map(|item| {
                item.trim()
                    .parse::<T>()
                    .map_err(|e| anyhow!("config key {key}: {e} (got {raw:?})"))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Replicate count, with a per-command default.
    pub fn replicates(&self, default: usize) -> Result<usize> {
        let n = self.parsed_or("replicates", default)?;
        if n < 1 {
            bail!("replicates must be at least 1");
        }
        Ok(n)
    }

    /// Strategy width / batch multiplier, with a per-command default.
    pub fn width(&self, default: usize) -> Result<usize> {
        let n = self.parsed_or("n", default)?;
        if n < 1 {
            bail!("n must be at least 1");
        }
        Ok(n)
    }

    fn schedule(&self, deep_default: bool) -> Result<ScaleSchedule> {
        let d = self.parsed_or("schedule.feature_dim", 4usize)?;
        Ok(match self.list::<usize>("schedule.sides")? {
            Some(sides) => ScaleSchedule::from_sides(&sides, d)?,
            None if deep_default => ScaleSchedule::ladder13(d),
            None => ScaleSchedule::toy(d),
        })
    }

    /// Selection scales. The pinned defaults belong to the standard 6-rung
    /// ladder; a custom ladder starts with no events until the user says
    /// where they go.
    fn scale_set(
        &self,
        key: &'static str,
        default: &[usize],
        custom_ladder: bool,
    ) -> Result<BTreeSet<usize>> {
        match self.list::<usize>(key)? {
            Some(v) => Ok(v.into_iter().collect()),
            None if custom_ladder => Ok(BTreeSet::new()),
            None => Ok(default.iter().copied().collect()),
        }
    }

    fn reward_noise(&self) -> Result<Option<Vec<f64>>> {
        match self.get("reward.noise") {
            None => Ok(None),
            Some("none") | Some("") => Ok(None),
            Some(_) => self.list::<f64>("reward.noise"),
        }
    }

    fn patch_grid(&self) -> Result<(usize, usize)> {
        let raw = match self.get("search.patch_grid") {
            None => return Ok((8, 8)),
            Some(raw) => raw,
        };
        let side = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| anyhow!("config key search.patch_grid: {e} (got {raw:?})"))
        };
        match raw.split_once('x') {
            Some((a, b)) => Ok((side(a)?, side(b)?)),
            None => {
                let s = side(raw)?;
                Ok((s, s))
            }
        }
    }

    fn prompt(&self, schedule: &ScaleSchedule, pixel_scale: usize) -> Result<PromptSpec> {
        let kind_raw = self.get("prompt.kind").unwrap_or("blobs");
        if kind_raw == "pgm" {
            for key in ["prompt.seed", "prompt.pixels"] {
                if self.values.contains_key(key) {
                    bail!("config key {key} applies only to procedural prompts");
                }
            }
            let path = self
                .get("prompt.path")
                .ok_or_else(|| anyhow!("prompt.kind = pgm needs prompt.path"))?;
            return Ok(PromptSpec::Pgm { path: path.to_string() });
        }
        if self.get("prompt.path").is_some() {
            bail!("config key prompt.path needs prompt.kind = pgm");
        }
        let kind: TargetKind =
            kind_raw.parse().map_err(|e| anyhow!("config key prompt.kind: {e}"))?;
        let side = schedule.final_resolution().0 * pixel_scale;
        Ok(PromptSpec::Procedural {
            kind,
            seed: self.parsed_or("prompt.seed", 7u64)?,
            pixels: self.parsed_or("prompt.pixels", side)?,
        })
    }

    pub fn model_dims(&self) -> Result<ModelDims> {
        Ok(ModelDims {
            hidden: self.parsed_or("model.hidden", 1024u64)?,
            layers: self.parsed_or("model.layers", 32u64)?,
            heads: self.parsed_or("model.heads", 16u64)?,
        })
    }

    /// Build the run spec this manifest describes. `default_replicates`
    /// applies when the `replicates` key is absent.
    pub fn spec(&self, default_replicates: usize) -> Result<RunSpec> {
        let schedule = self.schedule(false)?;
        let k = schedule.num_scales();
        let custom_ladder = self.get("schedule.sides").is_some();
        let n = self.width(4)?;
        let strategy = Strategy::from_parts(self.get("strategy").unwrap_or("ttsvar"), Some(n))?;
        let batch = match self.list::<usize>("batch.sizes")? {
            Some(sizes) => BatchSchedule::from_sizes(sizes)?,
            None => make_default_schedule(k, n)?,
        };
        let defaults = ToyGeneratorParams::default_for(k);
        let generator = ToyGeneratorParams {
            noise_scale: self.list::<f64>("generator.noise")?.unwrap_or(defaults.noise_scale),
            drift: self.parsed_or("generator.drift", defaults.drift)?,
            pixel_decoder_gain: self.parsed_or("generator.gain", defaults.pixel_decoder_gain)?,
            pixel_scale: self.parsed_or("generator.pixel_scale", defaults.pixel_scale)?,
        };
        let prompt = self.prompt(&schedule, generator.pixel_scale)?;
        let search = SearchConfig {
            cluster_scales: self.scale_set("search.cluster_scales", &[2, 3], custom_ladder)?,
            resample_scales: self.scale_set("search.resample_scales", &[4, 5], custom_ladder)?,
            potential: PotentialSpec::new(
                self.parsed_or("search.potential", PotentialKind::Value)?,
                self.parsed_or("search.lambda", 150.0f64)?,
            )?,
            extractor: ExtractorVariant {
                tag: self.parsed_or("search.extractor", ExtractorTag::PatchPca)?,
                patch_grid: self.patch_grid()?,
                embed_dim: self.parsed_or("search.embed_dim", 4usize)?,
            },
            master_seed: self.parsed_or("seed", 42u64)?,
            replicates: self.replicates(default_replicates)?,
        };
        Ok(RunSpec {
            schedule,
            batch,
            search,
            generator,
            reward_noise: self.reward_noise()?,
            prompt,
            strategy,
            dims: self.model_dims()?,
        })
    }

    pub fn sweep_axis(&self) -> Result<SweepAxis> {
        let axis = self
            .get("sweep.axis")
            .ok_or_else(|| anyhow!("sweep needs sweep.axis (lambda|potential|width)"))?;
        let axis = match axis {
            "lambda" => SweepAxis::Lambda(self.sweep_values()?),
            "potential" => SweepAxis::Potential(self.sweep_values()?),
            "width" => SweepAxis::Width(self.sweep_values()?),
            other => bail!("config key sweep.axis: unknown axis {other:?} (expected lambda|potential|width)"),
        };
        Ok(axis)
    }

    fn sweep_values<T>(&self) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let values = self
            .list::<T>("sweep.values")?
            .ok_or_else(|| anyhow!("sweep needs sweep.values (comma separated)"))?;
        if values.is_empty() {
            bail!("sweep.values is empty");
        }
        Ok(values)
    }

    /// Schedules for the cost comparison: a flat batch at width n against
    /// the descending template at multiplier n (or an explicit batch.sizes,
    /// or the flat batch itself when cost.adaptive_flat is set). Without
    /// schedule.sides this uses the 13-rung ladder the cost study is about.
    pub fn cost_setup(&self) -> Result<(ScaleSchedule, BatchSchedule, BatchSchedule, ModelDims)> {
        let schedule = self.schedule(true)?;
        let k = schedule.num_scales();
        let n = self.width(1)?;
        let fixed = BatchSchedule::flat(n, k)?;
        let adaptive = if self.parsed_or("cost.adaptive_flat", false)? {
            fixed.clone()
        } else if let Some(sizes) = self.list::<usize>("batch.sizes")? {
            BatchSchedule::from_sizes(sizes)?
        } else {
            make_default_schedule(k, n)?
        };
        Ok((schedule, fixed, adaptive, self.model_dims()?))
    }
}
