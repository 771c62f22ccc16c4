//! Post-run reporting: per-epoch plot data and multi-seed aggregation.
//!
//! `report` accepts either a single run directory (one `epochs.jsonl`) or a
//! parent directory of seed runs; series are aggregated to mean and sample
//! standard deviation per epoch (a single run reports zero std).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::logs::{files, read_epoch_records, EpochRecord};

/// Paths of the emitted report files.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub dir: PathBuf,
    pub summary: PathBuf,
    pub accuracy: PathBuf,
    pub partition_quality: PathBuf,
    pub subset_sizes: PathBuf,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// The epoch-record series of every run under `dir` (or of `dir` itself).
fn collect_runs(dir: &Path) -> Result<Vec<Vec<EpochRecord>>> {
    let single = dir.join(files::EPOCHS);
    if single.is_file() {
        let records = read_epoch_records(BufReader::new(File::open(&single)?))?;
        if records.is_empty() {
            return Err(Error::Format(format!("{} holds no records", single.display())));
        }
        return Ok(vec![records]);
    }
    let mut run_dirs: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(dir)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", dir.display())))?
    {
        let path = entry?.path();
        if path.is_dir()
            && (path.join(files::EPOCHS).exists() || path.join(files::CONFIG).exists())
        {
            run_dirs.push(path);
        }
    }
    run_dirs.sort();
    if run_dirs.is_empty() {
        return Err(Error::Format(format!(
            "{} holds neither {} nor run subdirectories",
            dir.display(),
            files::EPOCHS
        )));
    }
    let mut runs = Vec::with_capacity(run_dirs.len());
    for run in &run_dirs {
        let path = run.join(files::EPOCHS);
        if !path.is_file() {
            return Err(Error::Format(format!("missing epoch record file {}", path.display())));
        }
        let records = read_epoch_records(BufReader::new(File::open(&path)?))?;
        if records.is_empty() {
            return Err(Error::Format(format!("{} holds no records", path.display())));
        }
        runs.push(records);
    }
    let epochs = runs[0].len();
    if runs.iter().any(|r| r.len() != epochs) {
        return Err(Error::Format(
            "runs disagree on epoch count; cannot aggregate".into(),
        ));
    }
    Ok(runs)
}

struct Series<'a> {
    name: &'a str,
    extract: fn(&EpochRecord) -> f64,
}

fn write_series_csv(
    path: &Path,
    runs: &[Vec<EpochRecord>],
    series: &[Series<'_>],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "epoch")?;
    for s in series {
        write!(out, ",{}_mean,{}_std", s.name, s.name)?;
    }
    writeln!(out)?;
    let epochs = runs[0].len();
    for e in 0..epochs {
        write!(out, "{}", runs[0][e].epoch)?;
        for s in series {
            let values: Vec<f64> = runs.iter().map(|r| (s.extract)(&r[e])).collect();
            let (mean, std) = mean_std(&values);
            write!(out, ",{mean},{std}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Emits summary and plot-data CSVs for a run directory or a family of
/// seed runs. Files land in `<out>/` (defaults to `<dir>/report/`).
pub fn report(dir: &Path, out: Option<&Path>) -> Result<ReportPaths> {
    let runs = collect_runs(dir)?;
    let report_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("report"));
    std::fs::create_dir_all(&report_dir)?;

    let accuracy = report_dir.join("accuracy_vs_epoch.csv");
    write_series_csv(
        &accuracy,
        &runs,
        &[
            Series { name: "acc_branch1", extract: |r| r.acc_branch1 },
            Series { name: "acc_branch2", extract: |r| r.acc_branch2 },
            Series { name: "acc_ensemble", extract: |r| r.acc_ensemble },
        ],
    )?;

    let partition_quality = report_dir.join("partition_f1_vs_epoch.csv");
    write_series_csv(
        &partition_quality,
        &runs,
        &[
            Series { name: "noisy_precision", extract: |r| r.noisy_precision },
            Series { name: "noisy_recall", extract: |r| r.noisy_recall },
            Series { name: "noisy_f1", extract: |r| r.noisy_f1 },
        ],
    )?;

    let subset_sizes = report_dir.join("subset_sizes_vs_epoch.csv");
    write_series_csv(
        &subset_sizes,
        &runs,
        &[
            Series { name: "n_clean", extract: |r| r.n_clean as f64 },
            Series { name: "n_boundary", extract: |r| r.n_boundary as f64 },
            Series { name: "n_noisy", extract: |r| r.n_noisy as f64 },
            Series { name: "n_warmup", extract: |r| r.n_warmup as f64 },
        ],
    )?;

    // Final-epoch summary across runs.
    let summary = report_dir.join("summary.csv");
    {
        let mut out = BufWriter::new(File::create(&summary)?);
        writeln!(out, "metric,mean,std,runs")?;
        let finals: Vec<&EpochRecord> = runs.iter().map(|r| r.last().expect("non-empty")).collect();
        let metrics: &[(&str, fn(&EpochRecord) -> f64)] = &[
            ("acc_branch1", |r| r.acc_branch1),
            ("acc_branch2", |r| r.acc_branch2),
            ("acc_ensemble", |r| r.acc_ensemble),
            ("noisy_precision", |r| r.noisy_precision),
            ("noisy_recall", |r| r.noisy_recall),
            ("noisy_f1", |r| r.noisy_f1),
            ("n_clean", |r| r.n_clean as f64),
            ("n_boundary", |r| r.n_boundary as f64),
            ("n_noisy", |r| r.n_noisy as f64),
            ("loss_total", |r| r.loss_total),
        ];
        for (name, extract) in metrics {
            let values: Vec<f64> = finals.iter().map(|r| extract(r)).collect();
            let (mean, std) = mean_std(&values);
            writeln!(out, "{name},{mean},{std},{}", runs.len())?;
        }
        out.flush()?;
    }

    Ok(ReportPaths {
        dir: report_dir,
        summary,
        accuracy,
        partition_quality,
        subset_sizes,
    })
}
