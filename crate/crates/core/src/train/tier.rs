//! Staged transfer learning: each stage trains from the previous stage's weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::schedule::TrainConfig;
use super::trainer::{EpochLog, Trainer};
use crate::arch::{build_model, load_pretrained, Checkpoint, LoadMode, LoadReport, ModelSpec};
use crate::data::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageRole {
    /// Image-level classification surrogate (constant per-image label maps).
    Tier1Classification,
    Tier2Segmentation,
    TargetFineTune,
}

impl StageRole {
    pub fn tag(&self) -> &'static str {
        match self {
            StageRole::Tier1Classification => "tier1-classification",
            StageRole::Tier2Segmentation => "tier2-segmentation",
            StageRole::TargetFineTune => "target-fine-tune",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub role: StageRole,
    /// Key into the dataset map passed to [`run_tier_plan`].
    pub dataset: String,
    /// Start from the previous stage's output checkpoint (or the plan's initial checkpoint
    /// for the first stage).
    pub from_previous: bool,
    pub load_mode: LoadMode,
    /// Overrides the model's class count for this stage, e.g. a classification head.
    #[serde(default)]
    pub num_classes: Option<usize>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierPlan {
    pub stages: Vec<Stage>,
    /// Optional checkpoint the first stage starts from.
    pub initial: Option<Checkpoint>,
}

#[derive(Debug, Clone, Default)]
pub struct StageData {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

#[derive(Debug, Clone)]
pub struct StageResult {
    pub name: String,
    pub load: Option<LoadReport>,
    pub logs: Vec<EpochLog>,
    pub checkpoint: Checkpoint,
    pub best: Checkpoint,
}

#[derive(Debug, Clone)]
pub struct TierOutcome {
    pub final_checkpoint: Checkpoint,
    pub stages: Vec<StageResult>,
}

impl TierPlan {
    /// A single stage trained from scratch.
    pub fn single(dataset: impl Into<String>, config: TrainConfig) -> Self {
        TierPlan {
            stages: vec![Stage {
                name: "fine-tune".into(),
                role: StageRole::TargetFineTune,
                dataset: dataset.into(),
                from_previous: false,
                load_mode: LoadMode::Compatible,
                num_classes: None,
                config,
            }],
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("tier plan has no stages".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.config.validate().map_err(|e| stage_error(i, s, e))?;
            if i == 0 && s.from_previous && self.initial.is_none() {
                return Err(stage_error(
                    i,
                    s,
                    Error::Checkpoint("first stage loads a checkpoint but the plan has none".into()),
                ));
            }
        }
        Ok(())
    }
}

fn stage_error(index: usize, stage: &Stage, source: Error) -> Error {
    Error::Stage {
        stage: index,
        name: stage.name.clone(),
        source: Box::new(source),
    }
}

/// Runs every stage in order. Stage `k + 1` begins from stage `k`'s last checkpoint.
pub fn run_tier_plan(
    plan: &TierPlan,
    model_spec: ModelSpec,
    datasets: &BTreeMap<String, StageData>,
) -> Result<TierOutcome> {
    plan.validate()?;
    let mut previous: Option<Checkpoint> = plan.initial.clone();
    let mut results = Vec::with_capacity(plan.stages.len());
    for (i, stage) in plan.stages.iter().enumerate() {
        let wrap = |e| stage_error(i, stage, e);
        let data = datasets.get(&stage.dataset).ok_or_else(|| {
            wrap(Error::Data(format!("dataset '{}' not provided", stage.dataset)))
        })?;
        let spec = ModelSpec {
            num_classes: stage.num_classes.unwrap_or(model_spec.num_classes),
            ..model_spec
        };
        let mut model = build_model(spec, stage.config.seed).map_err(wrap)?;
        let load = if stage.from_previous {
            let ck = previous
                .as_ref()
                .ok_or_else(|| wrap(Error::Checkpoint("no source checkpoint".into())))?;
            Some(load_pretrained(&mut model, ck, stage.load_mode).map_err(wrap)?)
        } else {
            None
        };
        let outcome = Trainer::new(model, stage.config)
            .and_then(|t| t.fit(&data.train, &data.val, stage.role.tag()))
            .map_err(wrap)?;
        previous = Some(outcome.last.clone());
        results.push(StageResult {
            name: stage.name.clone(),
            load,
            logs: outcome.logs,
            checkpoint: outcome.last,
            best: outcome.best,
        });
    }
    Ok(TierOutcome {
        final_checkpoint: previous.expect("at least one stage"),
        stages: results,
    })
}
