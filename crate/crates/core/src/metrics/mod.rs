//! Binary confusion counts and overlap metrics for the three evaluation regions.

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{LabelImage, SURROUNDING_SKIN, ULCER};

pub use report::{
    dice_histogram, read_per_image_csv, summary_rows, write_per_image_csv, write_summary_csv, Histogram, SummaryRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Ulcer,
    SurroundingSkin,
    /// Union of ulcer and surrounding skin.
    Complete,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Ulcer, Region::SurroundingSkin, Region::Complete];

    pub fn name(&self) -> &'static str {
        match self {
            Region::Ulcer => "ulcer",
            Region::SurroundingSkin => "surrounding_skin",
            Region::Complete => "complete",
        }
    }

    pub fn contains(&self, class: u8) -> bool {
        match self {
            Region::Ulcer => class == ULCER,
            Region::SurroundingSkin => class == SURROUNDING_SKIN,
            Region::Complete => class == ULCER || class == SURROUNDING_SKIN,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Region::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown region '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    pub width: usize,
    pub height: usize,
    pub region: Region,
    pub mask: Vec<bool>,
}

impl RegionMask {
    pub fn from_label(label: &LabelImage, region: Region) -> Self {
        RegionMask {
            width: label.width(),
            height: label.height(),
            region,
            mask: label.pixels().iter().map(|&c| region.contains(c)).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Masks in [`Region::ALL`] order.
pub fn region_masks(label: &LabelImage) -> [RegionMask; 3] {
    Region::ALL.map(|r| RegionMask::from_label(label, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn universe(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(pred: &RegionMask, gt: &RegionMask) -> Result<ConfusionCounts> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::shape(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    if pred.region != gt.region {
        return Err(Error::shape(format!(
            "prediction region {} does not match ground truth region {}",
            pred.region, gt.region
        )));
    }
    let universe = gt.mask.len() as u64;
    let (mut tp, mut np, mut ng) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.mask.iter().zip(&gt.mask) {
        tp += u64::from(p && g);
        np += u64::from(p);
        ng += u64::from(g);
    }
    let c = ConfusionCounts {
        tp,
        fp: np - tp,
        fn_: ng - tp,
        tn: universe - (np + ng - tp),
    };
    debug_assert_eq!(c.universe(), universe);
    Ok(c)
}

/// Which metrics fell back to a convention because their denominator was zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DegenerateFlags {
    pub sensitivity: bool,
    pub specificity: bool,
    pub dice: bool,
    pub mcc: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.sensitivity || self.specificity || self.dice || self.mcc
    }

    /// `|`-separated names of the flagged metrics; empty when none.
    pub fn encode(&self) -> String {
        let names = [
            (self.sensitivity, "sensitivity"),
            (self.specificity, "specificity"),
            (self.dice, "dice"),
            (self.mcc, "mcc"),
        ];
        names
            .iter()
            .filter(|(f, _)| *f)
            .map(|(_, n)| *n)
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn decode(s: &str) -> Result<Self> {
        let mut f = DegenerateFlags::default();
        for part in s.split('|').filter(|p| !p.is_empty()) {
            match part {
                "sensitivity" => f.sensitivity = true,
                "specificity" => f.specificity = true,
                "dice" => f.dice = true,
                "mcc" => f.mcc = true,
                other => return Err(Error::Data(format!("unknown flag '{other}'"))),
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub dice: f64,
    pub mcc: f64,
    pub flags: DegenerateFlags,
}

/// Sensitivity, specificity, Dice and MCC.
///
/// Zero denominators are flagged. Sensitivity, specificity and Dice default to 1 (nothing
/// to find, nothing to reject, both masks empty). MCC defaults to 1 when prediction and
/// ground truth agree and 0 otherwise.
pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let mut flags = DegenerateFlags::default();
    let ratio = |num: f64, den: f64, flag: &mut bool| {
        if den == 0.0 {
            *flag = true;
            1.0
        } else {
            num / den
        }
    };
    let sensitivity = ratio(tp, tp + fn_, &mut flags.sensitivity);
    let specificity = ratio(tn, tn + fp, &mut flags.specificity);
    let dice = ratio(2.0 * tp, 2.0 * tp + fp + fn_, &mut flags.dice);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if den == 0.0 {
        flags.mcc = true;
        if c.fp == 0 && c.fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        ((tp * tn - fp * fn_) / den.sqrt()).clamp(-1.0, 1.0)
    };
    Metrics {
        sensitivity,
        specificity,
        dice,
        mcc,
        flags,
    }
}

/// Metrics of one region of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub id: String,
    pub region: Region,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

pub fn evaluate_pair(id: &str, pred: &LabelImage, gt: &LabelImage) -> Result<Vec<MetricRecord>> {
    let (pm, gm) = (region_masks(pred), region_masks(gt));
    pm.iter()
        .zip(&gm)
        .map(|(p, g)| {
            let counts = confusion(p, g)?;
            Ok(MetricRecord {
                id: id.to_string(),
                region: g.region,
                counts,
                metrics: metrics(&counts),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        MeanStd { mean, std, n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: Region,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub dice: MeanStd,
    pub mcc: MeanStd,
}

fn summarize(records: &[&MetricRecord], region: Region) -> RegionSummary {
    let pick = |f: fn(&Metrics) -> f64| -> MeanStd {
        let v: Vec<f64> = records
            .iter()
            .filter(|r| r.region == region)
            .map(|r| f(&r.metrics))
            .collect();
        MeanStd::of(&v)
    };
    RegionSummary {
        region,
        sensitivity: pick(|m| m.sensitivity),
        specificity: pick(|m| m.specificity),
        dice: pick(|m| m.dice),
        mcc: pick(|m| m.mcc),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    /// Sorted by image id, then region.
    pub records: Vec<MetricRecord>,
    pub summary: Vec<RegionSummary>,
}

impl SplitReport {
    pub fn from_records(mut records: Vec<MetricRecord>) -> Self {
        records.sort_by(|a, b| (&a.id, a.region).cmp(&(&b.id, b.region)));
        let refs: Vec<&MetricRecord> = records.iter().collect();
        let summary = Region::ALL.iter().map(|&r| summarize(&refs, r)).collect();
        SplitReport { records, summary }
    }

    pub fn region(&self, region: Region) -> &RegionSummary {
        self.summary.iter().find(|s| s.region == region).expect("all regions summarized")
    }

    /// Per-image Dice values of one region, in id order.
    pub fn dice_vector(&self, region: Region) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.region == region)
            .map(|r| r.metrics.dice)
            .collect()
    }
}

/// Pairs predictions with ground truth by id and scores every region.
pub fn evaluate_split(predictions: &[(String, LabelImage)], ground_truth: &[(String, LabelImage)]) -> Result<SplitReport> {
    let mut gt: BTreeMap<&str, &LabelImage> = BTreeMap::new();
    for (id, l) in ground_truth {
        if gt.insert(id, l).is_some() {
            return Err(Error::Data(format!("duplicate ground-truth id '{id}'")));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut records = Vec::with_capacity(predictions.len() * 3);
    for (id, pred) in predictions {
        let g = gt
            .get(id.as_str())
            .ok_or_else(|| Error::Data(format!("prediction '{id}' has no ground truth")))?;
        if !seen.insert(id.as_str()) {
            return Err(Error::Data(format!("duplicate prediction id '{id}'")));
        }
        records.extend(evaluate_pair(id, pred, g)?);
    }
    if let Some(missing) = gt.keys().find(|k| !seen.contains(*k)) {
        return Err(Error::Data(format!("ground truth '{missing}' has no prediction")));
    }
    Ok(SplitReport::from_records(records))
}

/// Cross-fold aggregation: pooled over every test image, and over per-fold means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAggregate {
    pub per_image: SplitReport,
    pub per_fold: Vec<RegionSummary>,
}

pub fn aggregate_folds(folds: &[SplitReport]) -> FoldAggregate {
    let pooled = SplitReport::from_records(folds.iter().flat_map(|f| f.records.iter().cloned()).collect());
    let per_fold = Region::ALL
        .iter()
        .map(|&region| {
            let means = |f: fn(&RegionSummary) -> MeanStd| -> MeanStd {
                let v: Vec<f64> = folds.iter().map(|r| f(r.region(region)).mean).collect();
                MeanStd::of(&v)
            };
            RegionSummary {
                region,
                sensitivity: means(|s| s.sensitivity),
                specificity: means(|s| s.specificity),
                dice: means(|s| s.dice),
                mcc: means(|s| s.mcc),
            }
        })
        .collect();
    FoldAggregate {
        per_image: pooled,
        per_fold,
    }
}
