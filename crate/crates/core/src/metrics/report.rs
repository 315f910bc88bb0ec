use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ConfusionCounts, DegenerateFlags, MetricRecord, Metrics, Region, RegionSummary};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct PerImageRow {
    id: String,
    region: String,
    #[serde(rename = "TP")]
    tp: u64,
    #[serde(rename = "FP")]
    fp: u64,
    #[serde(rename = "FN")]
    fn_: u64,
    #[serde(rename = "TN")]
    tn: u64,
    dice: f64,
    sens: f64,
    spec: f64,
    mcc: f64,
    flags: String,
}

pub fn write_per_image_csv<W: Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(PerImageRow {
            id: r.id.clone(),
            region: r.region.name().into(),
            tp: r.counts.tp,
            fp: r.counts.fp,
            fn_: r.counts.fn_,
            tn: r.counts.tn,
            dice: r.metrics.dice,
            sens: r.metrics.sensitivity,
            spec: r.metrics.specificity,
            mcc: r.metrics.mcc,
            flags: r.metrics.flags.encode(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_per_image_csv<R: Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let expected = ["id", "region", "TP", "FP", "FN", "TN", "dice", "sens", "spec", "mcc", "flags"];
    let headers = rd.headers()?;
    if headers.iter().ne(expected) {
        return Err(Error::Data(format!(
            "per-image CSV header {:?} does not match {:?}",
            headers.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    rd.deserialize::<PerImageRow>()
        .map(|row| {
            let row = row?;
            Ok(MetricRecord {
                id: row.id,
                region: row.region.parse()?,
                counts: ConfusionCounts {
                    tp: row.tp,
                    fp: row.fp,
                    fn_: row.fn_,
                    tn: row.tn,
                },
                metrics: Metrics {
                    sensitivity: row.sens,
                    specificity: row.spec,
                    dice: row.dice,
                    mcc: row.mcc,
                    flags: DegenerateFlags::decode(&row.flags)?,
                },
            })
        })
        .collect()
}

/// One row of the comparison table; metric cells read `mean (±std)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub region: String,
    pub dice: String,
    pub specificity: String,
    pub sensitivity: String,
    pub mcc: String,
}

pub fn summary_rows(method: &str, summary: &[RegionSummary]) -> Vec<SummaryRow> {
    let cell = |m: super::MeanStd| format!("{:.4} (±{:.4})", m.mean, m.std);
    summary
        .iter()
        .map(|s| SummaryRow {
            method: method.to_string(),
            region: s.region.name().into(),
            dice: cell(s.dice),
            specificity: cell(s.specificity),
            sensitivity: cell(s.sensitivity),
            mcc: cell(s.mcc),
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Equal-width histogram over `[0, 1]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub region: Region,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn dice_histogram(region: Region, values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { region, edges, counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::LabelImage;
    use crate::metrics::{evaluate_split, MeanStd};

    #[test]
    fn per_image_csv_round_trip() {
        let mut gt = LabelImage::new(4, 4);
        gt.set(1, 1, 2);
        gt.set(2, 1, 1);
        let mut pred = gt.clone();
        pred.set(3, 3, 2);
        let r = evaluate_split(&[("a".into(), pred)], &[("a".into(), gt)]).unwrap();
        let mut buf = Vec::new();
        write_per_image_csv(&r.records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,region,TP,FP,FN,TN,dice,sens,spec,mcc,flags\n"));
        assert_eq!(read_per_image_csv(&buf[..]).unwrap(), r.records);
    }

    #[test]
    fn summary_columns() {
        let s = RegionSummary {
            region: Region::Ulcer,
            sensitivity: MeanStd::of(&[1.0]),
            specificity: MeanStd::of(&[1.0]),
            dice: MeanStd::of(&[0.4, 0.8]),
            mcc: MeanStd::of(&[1.0]),
        };
        let mut buf = Vec::new();
        write_summary_csv(&summary_rows("fcn-8s", &[s]), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("method,region,dice,specificity,sensitivity,mcc"));
        assert!(lines.next().unwrap().contains("0.6000 (±0.2828)"));
    }

    #[test]
    fn histogram_conserves_count() {
        let h = dice_histogram(Region::Complete, &[0.0, 0.05, 0.5, 0.99, 1.0], 10);
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
        assert_eq!(h.counts[9], 2);
        assert_eq!(h.edges.len(), 11);
    }
}
