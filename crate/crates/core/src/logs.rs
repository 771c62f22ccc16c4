//! On-disk run artifacts: prediction log, partition trace, epoch records.
//!
//! The prediction log is the replay surface: probabilities are printed with
//! 9 significant digits, and the harness feeds its memory store the same
//! quantized values it writes, so an offline replay reconstructs partitions
//! bit-for-bit. Rows are sorted by (epoch, sample_id, view) with weak
//! ordered before strong.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::ViewTag;
use crate::selection::{PartitionReport, SampleDecision};

/// File names inside a run directory.
pub mod files {
    pub const CONFIG: &str = "config.json";
    pub const DATASET: &str = "dataset.csv";
    pub const EPOCHS: &str = "epochs.jsonl";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const PARTITIONS: &str = "partitions.csv";
    pub const TIMINGS: &str = "timings.csv";
    pub const REPORT: &str = "report.json";
    pub const CHECKPOINTS: &str = "checkpoints";
}

/// Rounds to 9 significant decimal digits by round-tripping through the
/// exact string the prediction log stores.
pub fn quantize9(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Formats a probability exactly as the log stores it.
pub fn format_prob(x: f64) -> String {
    format!("{x:.8e}")
}

/// One epoch's summary line in `epochs.jsonl`.
///
/// Wall time is tracked in memory and written to the `timings.csv` sidecar,
/// never into the JSONL, which keeps epoch logs byte-identical across runs
/// of the same config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub n_clean: usize,
    pub n_boundary: usize,
    pub n_noisy: usize,
    pub n_warmup: usize,
    pub noisy_precision: f64,
    pub noisy_recall: f64,
    pub noisy_f1: f64,
    pub acc_branch1: f64,
    pub acc_branch2: f64,
    pub acc_ensemble: f64,
    pub loss_clean: f64,
    pub loss_boundary: f64,
    pub loss_noisy: f64,
    pub loss_total: f64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

pub fn write_epoch_record<W: Write>(mut out: W, record: &EpochRecord) -> Result<()> {
    let line = serde_json::to_string(record).expect("record serializes");
    writeln!(out, "{line}")?;
    Ok(())
}

pub fn read_epoch_records<R: BufRead>(input: R) -> Result<Vec<EpochRecord>> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpochRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("epoch record line {}: {e}", idx + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// Writes the prediction-log header for `k` classes.
pub fn write_prediction_header<W: Write>(mut out: W, k: usize) -> Result<()> {
    write!(out, "epoch,sample_id,view")?;
    for j in 0..k {
        write!(out, ",p_{j}")?;
    }
    writeln!(out)?;
    Ok(())
}

/// Writes one prediction row; `probs` must already be quantized.
pub fn write_prediction_row<W: Write>(
    mut out: W,
    epoch: u64,
    sample_id: u64,
    view: ViewTag,
    probs: &[f64],
) -> Result<()> {
    write!(out, "{epoch},{sample_id},{}", view.name())?;
    for &p in probs {
        write!(out, ",{}", format_prob(p))?;
    }
    writeln!(out)?;
    Ok(())
}

/// A parsed, validated prediction log: contiguous epochs from 1, every
/// (sample, view) exactly once per epoch, rows sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    pub num_classes: usize,
    /// Sample ids in ascending order (identical across epochs).
    pub sample_ids: Vec<u64>,
    /// `epochs[e]` holds epoch `e+1`: per sample, (weak, strong) values
    /// exactly as parsed from the file.
    pub epochs: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
}

impl PredictionLog {
    pub fn num_epochs(&self) -> u64 {
        self.epochs.len() as u64
    }
}

/// Parses and validates a prediction log. Sorting is the producer's job;
/// out-of-order rows, gaps, duplicates, or missing views are format errors.
pub fn read_prediction_log<R: BufRead>(input: R) -> Result<PredictionLog> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty prediction log".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[0] != "epoch" || cols[1] != "sample_id" || cols[2] != "view" {
        return Err(Error::Format(format!(
            "unexpected prediction log header: {header:?}"
        )));
    }
    let k = cols.len() - 3;
    for (j, col) in cols[3..].iter().enumerate() {
        if *col != format!("p_{j}") {
            return Err(Error::Format(format!(
                "unexpected probability column {col:?}, expected p_{j}"
            )));
        }
    }

    struct Row {
        epoch: u64,
        sample: u64,
        view: ViewTag,
        probs: Vec<f64>,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 3 {
            return Err(Error::Format(format!(
                "line {lineno}: {} fields, expected {}",
                fields.len(),
                k + 3
            )));
        }
        let epoch: u64 = fields[0]
            .parse()
            .map_err(|e| Error::Format(format!("line {lineno}: bad epoch: {e}")))?;
        let sample: u64 = fields[1]
            .parse()
            .map_err(|e| Error::Format(format!("line {lineno}: bad sample id: {e}")))?;
        let view = ViewTag::parse(fields[2])
            .map_err(|_| Error::Format(format!("line {lineno}: bad view {:?}", fields[2])))?;
        let mut probs = Vec::with_capacity(k);
        for f in &fields[3..] {
            let p: f64 = f
                .parse()
                .map_err(|e| Error::Format(format!("line {lineno}: bad probability: {e}")))?;
            probs.push(p);
        }
        let row = Row {
            epoch,
            sample,
            view,
            probs,
        };
        if let Some(prev) = rows.last() {
            let before = (prev.epoch, prev.sample, prev.view.index());
            let here = (row.epoch, row.sample, row.view.index());
            if before >= here {
                return Err(Error::Format(format!(
                    "line {lineno}: rows not sorted by (epoch, sample_id, view): \
                     ({},{},{}) follows ({},{},{})",
                    here.0,
                    here.1,
                    row.view.name(),
                    before.0,
                    before.1,
                    prev.view.name()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("prediction log holds no rows".into()));
    }

    // Group by epoch and enforce contiguity plus per-epoch completeness.
    let mut sample_ids: Vec<u64> = rows
        .iter()
        .take_while(|r| r.epoch == rows[0].epoch)
        .map(|r| r.sample)
        .collect();
    sample_ids.dedup();
    let last_epoch = rows.last().expect("non-empty").epoch;
    if rows[0].epoch != 1 {
        return Err(Error::Format(format!(
            "prediction log starts at epoch {}, expected 1",
            rows[0].epoch
        )));
    }
    let mut epochs = Vec::with_capacity(last_epoch as usize);
    let mut cursor = rows.iter().peekable();
    for epoch in 1..=last_epoch {
        let mut block: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(sample_ids.len());
        for &expected_id in &sample_ids {
            let mut pair: (Option<Vec<f64>>, Option<Vec<f64>>) = (None, None);
            for expected_view in ViewTag::ALL {
                match cursor.peek() {
                    Some(row)
                        if row.epoch == epoch
                            && row.sample == expected_id
                            && row.view == expected_view =>
                    {
                        let row = cursor.next().expect("peeked");
                        match expected_view {
                            ViewTag::Weak => pair.0 = Some(row.probs.clone()),
                            ViewTag::Strong => pair.1 = Some(row.probs.clone()),
                        }
                    }
                    Some(row) if row.epoch > epoch && expected_id == sample_ids[0] => {
                        return Err(Error::Format(format!(
                            "prediction log gap: epoch {epoch} missing (next rows are epoch {})",
                            row.epoch
                        )));
                    }
                    other => {
                        let found = other
                            .map(|r| format!("(epoch {}, sample {}, {})", r.epoch, r.sample, r.view.name()))
                            .unwrap_or_else(|| "end of file".into());
                        return Err(Error::Format(format!(
                            "prediction log: expected (epoch {epoch}, sample {expected_id}, {}) but found {found}",
                            expected_view.name()
                        )));
                    }
                }
            }
            block.push((pair.0.expect("weak parsed"), pair.1.expect("strong parsed")));
        }
        epochs.push(block);
    }
    if cursor.peek().is_some() {
        let row = cursor.peek().expect("peeked");
        return Err(Error::Format(format!(
            "prediction log: unexpected extra row (epoch {}, sample {}, {})",
            row.epoch,
            row.sample,
            row.view.name()
        )));
    }
    Ok(PredictionLog {
        num_classes: k,
        sample_ids,
        epochs,
    })
}

/// Writes the partition-trace header.
pub fn write_partition_header<W: Write>(mut out: W) -> Result<()> {
    writeln!(out, "epoch,sample_id,gamma,psi,label,is_corrupted")?;
    Ok(())
}

/// Writes one selection epoch of the partition trace. The `is_corrupted`
/// column is left empty when no corruption mask is known.
pub fn write_partition_rows<W: Write>(
    mut out: W,
    epoch: u64,
    report: &PartitionReport,
    mask: Option<&[bool]>,
) -> Result<()> {
    for (id, decision) in report.decisions.iter().enumerate() {
        let SampleDecision { gamma, label, .. } = decision;
        let corrupted = mask
            .map(|m| if m[id] { "1" } else { "0" }.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{epoch},{id},{},{},{},{}",
            u8::from(*gamma),
            decision.psi(),
            label.name(),
            corrupted
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_is_idempotent_and_9_digits() {
        let x = std::f64::consts::FRAC_1_PI;
        let q = quantize9(x);
        assert_eq!(quantize9(q), q);
        assert_eq!(format_prob(q), format_prob(x));
        assert!((q - x).abs() < 1e-9);
        assert_eq!(format_prob(0.25), "2.50000000e-1");
    }

    fn log_text(epochs: u64, samples: u64) -> String {
        let mut s = String::from("epoch,sample_id,view,p_0,p_1\n");
        for e in 1..=epochs {
            for id in 0..samples {
                for view in ["weak", "strong"] {
                    s.push_str(&format!("{e},{id},{view},6.00000000e-1,4.00000000e-1\n"));
                }
            }
        }
        s
    }

    #[test]
    fn parses_well_formed_logs() {
        let log = read_prediction_log(log_text(3, 2).as_bytes()).unwrap();
        assert_eq!(log.num_classes, 2);
        assert_eq!(log.sample_ids, vec![0, 1]);
        assert_eq!(log.num_epochs(), 3);
        assert_eq!(log.epochs[2][1].0, vec![0.6, 0.4]);
    }

    #[test]
    fn rejects_gaps_naming_the_epoch() {
        let text = log_text(4, 1).replace("3,0,weak", "XX").replace("3,0,strong", "YY");
        let text: String = text
            .lines()
            .filter(|l| !l.starts_with("XX") && !l.starts_with("YY"))
            .map(|l| format!("{l}\n"))
            .collect();
        match read_prediction_log(text.as_bytes()) {
            Err(Error::Format(msg)) => assert!(msg.contains("epoch 3 missing"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unsorted_and_missing_views() {
        let mut lines: Vec<String> = log_text(1, 2).lines().map(String::from).collect();
        lines.swap(1, 3);
        match read_prediction_log(lines.join("\n").as_bytes()) {
            Err(Error::Format(msg)) => assert!(msg.contains("not sorted"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }

        let text: String = log_text(1, 2)
            .lines()
            .filter(|l| !l.starts_with("1,1,strong"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(read_prediction_log(text.as_bytes()).is_err());
    }

    #[test]
    fn epoch_records_roundtrip_without_wall_time() {
        let record = EpochRecord {
            epoch: 7,
            n_clean: 10,
            n_boundary: 2,
            n_noisy: 3,
            n_warmup: 0,
            noisy_precision: 0.5,
            noisy_recall: 0.25,
            noisy_f1: 1.0 / 3.0,
            acc_branch1: 0.9,
            acc_branch2: 0.92,
            acc_ensemble: 0.93,
            loss_clean: 0.1,
            loss_boundary: 0.2,
            loss_noisy: 0.3,
            loss_total: 0.33,
            wall_time_s: 123.0,
        };
        let mut buf = Vec::new();
        write_epoch_record(&mut buf, &record).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.contains("wall_time"), "{text}");
        let parsed = read_epoch_records(&buf[..]).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].epoch, 7);
        assert_eq!(parsed[0].wall_time_s, 0.0);
    }
}
