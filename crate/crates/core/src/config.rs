//! Search configuration: which scales select, how candidates are weighted.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ExtractorVariant;
use crate::schedule::{BatchSchedule, ScaleSchedule};

/// Which functional of a candidate's reward history feeds its potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// Reward at the current scale.
    Value,
    /// Difference between the two most recent scored scales; falls back to
    /// `Value` when only one score exists.
    Diff,
    /// Highest reward seen along the path.
    Max,
    /// Sum of all rewards along the path.
    Sum,
}

impl fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PotentialKind::Value => "value",
            PotentialKind::Diff => "diff",
            PotentialKind::Max => "max",
            PotentialKind::Sum => "sum",
        };
        f.write_str(s)
    }
}

impl FromStr for PotentialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "value" => Ok(PotentialKind::Value),
            "diff" => Ok(PotentialKind::Diff),
            "max" => Ok(PotentialKind::Max),
            "sum" => Ok(PotentialKind::Sum),
            other => Err(Error::parse(format!(
                "unknown potential kind {other:?} (expected value|diff|max|sum)"
            ))),
        }
    }
}

/// Potential functional plus resampling temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub lambda: f64,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, lambda: f64) -> Result<Self> {
        let spec = Self { kind, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::config(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Where selection happens and how.
///
/// `cluster_scales` pick survivors by embedding diversity, `resample_scales`
/// by potential-weighted multinomial draws. Both sets live in `1..K-1`:
/// selecting after the final scale would discard finished images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub cluster_scales: BTreeSet<usize>,
    pub resample_scales: BTreeSet<usize>,
    pub potential: PotentialSpec,
    pub extractor: ExtractorVariant,
    pub master_seed: u64,
    pub replicates: usize,
}

impl SearchConfig {
    /// Validate against the schedules this config will run under.
    ///
    /// A selection event may never grow the batch; resampling may keep it
    /// (duplicates then diverge through fresh streams), clustering may only
    /// shrink or keep it. Nonincreasing schedules satisfy both, but
    /// hand-built schedules are checked here anyway.
    pub fn validate(&self, schedule: &ScaleSchedule, batch: &BatchSchedule) -> Result<()> {
        let k = schedule.num_scales();
        if batch.len() != k {
            return Err(Error::config(format!(
                "batch schedule has {} entries for {} scales",
                batch.len(),
                k
            )));
        }
        self.potential.validate()?;
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if let Some(s) = self.cluster_scales.intersection(&self.resample_scales).next() {
            return Err(Error::config(format!(
                "scale {s} is in both cluster_scales and resample_scales"
            )));
        }
        for &s in self.cluster_scales.iter().chain(self.resample_scales.iter()) {
            if s < 1 || s >= k {
                return Err(Error::config(format!(
                    "selection scale {s} outside 1..{}",
                    k - 1
                )));
            }
            if batch.size(s + 1) > batch.size(s) {
                return Err(Error::config(format!(
                    "selection at scale {s} cannot grow the batch ({} -> {})",
                    batch.size(s),
                    batch.size(s + 1)
                )));
            }
        }
        Ok(())
    }
}

/// How final images come to exist and which one is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// One path straight down the schedule.
    Raw,
    /// n independent paths, report the best-scoring final.
    Bon { n: usize },
    /// n independent paths, report one final drawn from the softmax of
    /// scaled final rewards.
    Is { n: usize },
    /// Descending batch with clustering and resampling events along the way.
    TtsVar,
}

impl Strategy {
    /// Build from a bare tag plus the separate width flag CLIs use.
    pub fn from_parts(tag: &str, n: Option<usize>) -> Result<Self> {
        let need_n = || {
            n.filter(|&v| v >= 1)
                .ok_or_else(|| Error::config(format!("strategy {tag:?} needs n >= 1")))
        };
        match tag {
            "raw" => Ok(Strategy::Raw),
            "bon" => Ok(Strategy::Bon { n: need_n()? }),
            "is" => Ok(Strategy::Is { n: need_n()? }),
            "ttsvar" => Ok(Strategy::TtsVar),
            other => Err(Error::parse(format!(
                "unknown strategy {other:?} (expected raw|bon|is|ttsvar)"
            ))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Strategy::Raw => "raw".into(),
            Strategy::Bon { n } => format!("bon:{n}"),
            Strategy::Is { n } => format!("is:{n}"),
            Strategy::TtsVar => "ttsvar".into(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::make_default_schedule;

    fn base_config() -> SearchConfig {
        SearchConfig {
            cluster_scales: BTreeSet::from([2, 3]),
            resample_scales: BTreeSet::from([4, 5]),
            potential: PotentialSpec::new(PotentialKind::Value, 150.0).unwrap(),
            extractor: ExtractorVariant::default(),
            master_seed: 42,
            replicates: 1,
        }
    }

    #[test]
    fn default_config_is_valid() {
        let schedule = ScaleSchedule::toy(4);
        let batch = make_default_schedule(6, 4).unwrap();
        base_config().validate(&schedule, &batch).unwrap();
    }

    #[test]
    fn rejects_overlapping_sets() {
        let schedule = ScaleSchedule::toy(4);
        let batch = make_default_schedule(6, 4).unwrap();
        let mut cfg = base_config();
        cfg.resample_scales.insert(3);
        assert!(cfg.validate(&schedule, &batch).is_err());
    }

    #[test]
    fn rejects_out_of_range_scales() {
        let schedule = ScaleSchedule::toy(4);
        let batch = make_default_schedule(6, 4).unwrap();
        for bad in [0usize, 6, 7] {
            let mut cfg = base_config();
            cfg.cluster_scales = BTreeSet::from([bad]);
            assert!(cfg.validate(&schedule, &batch).is_err(), "scale {bad}");
        }
    }

    #[test]
    fn rejects_bad_lambda() {
        assert!(PotentialSpec::new(PotentialKind::Value, f64::NAN).is_err());
        assert!(PotentialSpec::new(PotentialKind::Value, -1.0).is_err());
        assert!(PotentialSpec::new(PotentialKind::Value, 0.0).is_ok());
    }

    #[test]
    fn rejects_batch_length_mismatch() {
        let schedule = ScaleSchedule::toy(4);
        let batch = make_default_schedule(13, 1).unwrap();
        assert!(base_config().validate(&schedule, &batch).is_err());
    }

    #[test]
    fn potential_kind_round_trips() {
        for kind in [
            PotentialKind::Value,
            PotentialKind::Diff,
            PotentialKind::Max,
            PotentialKind::Sum,
        ] {
            assert_eq!(kind.to_string().parse::<PotentialKind>().unwrap(), kind);
        }
        assert!("best".parse::<PotentialKind>().is_err());
    }

    #[test]
    fn strategy_from_parts() {
        assert_eq!(Strategy::from_parts("raw", None).unwrap(), Strategy::Raw);
        assert_eq!(Strategy::from_parts("bon", Some(4)).unwrap(), Strategy::Bon { n: 4 });
        assert_eq!(Strategy::from_parts("is", Some(2)).unwrap(), Strategy::Is { n: 2 });
        assert_eq!(Strategy::from_parts("ttsvar", Some(9)).unwrap(), Strategy::TtsVar);
        assert!(Strategy::from_parts("bon", None).is_err());
        assert!(Strategy::from_parts("is", Some(0)).is_err());
        assert!(Strategy::from_parts("beam", Some(2)).is_err());
        assert_eq!(Strategy::Bon { n: 8 }.label(), "bon:8");
    }
}
