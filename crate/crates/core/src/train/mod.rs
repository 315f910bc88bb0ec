pub mod schedule;
pub mod tier;
pub mod trainer;

pub use schedule::{lr_at, TrainConfig};
pub use tier::{run_tier_plan, Stage, StageData, StageResult, StageRole, TierOutcome, TierPlan};
pub use trainer::{validate, write_epoch_csv, EpochLog, EpochStats, FitOutcome, MomentumSgd, Trainer};
