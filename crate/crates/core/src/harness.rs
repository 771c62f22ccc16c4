//! End-to-end experiment loop, offline replay, and evaluation.
//!
//! Each epoch runs four phases in order:
//!
//! 1. **Selection** — partition the dataset from the memory store as of the
//!    previous epoch (epochs 1..=4 are warm-up: everything is `warmup`).
//! 2. **Training** — clean samples get cross-entropy, boundary samples GCE,
//!    noisy samples the symmetric-KL consistency loss between the branches;
//!    ablation-disabled subsets are excluded entirely. During warm-up (and
//!    in the no-split baseline) every sample trains with cross-entropy.
//! 3. **Inference** — a dedicated pass per view with a fresh augmentation
//!    draw produces the predictions that feed the memory.
//! 4. **Memory update** — warm-up initialization or the sliding cascade.
//!
//! Predictions are quantized to the log's 9 significant digits *before*
//! they reach the memory store, which makes [`replay`] reproduce the online
//! partition trace byte-for-byte.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::corpus::{augment, AugmentSpec, NoisyDataset};
use crate::error::{Error, Result};
use crate::logs::{self, files, EpochRecord, PredictionLog};
use crate::losses::{
    ce_grad_logits, cross_entropy_batch, gce_batch, gce_grad_logits, sym_kl, symkl_grad_logits,
    total_loss, LossParams,
};
use crate::memory::{TemporalMemoryStore, ViewTag};
use crate::model::{
    backward_step, init_dual, predict_dataset, Architecture, AugmentDraw, DualBranch, Gradients,
    Sgd,
};
use crate::prob::ProbDist;
use crate::seeding::{self, purpose};
use crate::selection::{partition_dataset, with_quality, PartitionLabel, PartitionReport};

/// Outcome of a completed run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub records: Vec<EpochRecord>,
}

impl RunArtifacts {
    pub fn final_record(&self) -> &EpochRecord {
        self.records.last().expect("runs have at least one epoch")
    }
}

/// Train/test pair after noise injection.
pub struct PreparedData {
    pub train: NoisyDataset,
    pub test: NoisyDataset,
}

/// Materializes the configured dataset and applies the noise protocol to
/// the training split.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    let (clean_train, test) = match &config.dataset {
        DatasetConfig::Blobs {
            classes,
            features,
            train_per_class,
            test_per_class,
            center_separation,
            cluster_std,
        } => {
            let total = train_per_class + test_per_class;
            let all = crate::corpus::make_blobs(
                *classes,
                total,
                *features,
                *center_separation,
                *cluster_std,
                config.seeds.data,
            )?;
            crate::corpus::split_per_class(&all, total, *train_per_class)?
        }
        DatasetConfig::Idx {
            train_features,
            train_labels,
            test_features,
            test_labels,
        } => {
            let train = crate::corpus::load_idx_dataset(train_features, train_labels)?;
            let test = crate::corpus::load_idx_dataset(test_features, test_labels)?;
            if train.dim() != test.dim() {
                return Err(Error::Format(format!(
                    "train features have dim {}, test {}",
                    train.dim(),
                    test.dim()
                )));
            }
            (train, test)
        }
    };
    let noise = config.noise.to_spec();
    noise.validate(clean_train.num_classes())?;
    let train = noise.apply(&clean_train, config.seeds.data)?;
    Ok(PreparedData { train, test })
}

/// Per-branch accuracy plus the ensemble (argmax of the mean probability)
/// on unaugmented inputs.
pub fn evaluate(branches: &DualBranch, test: &NoisyDataset) -> Result<(f64, f64, f64)> {
    if test.is_empty() {
        return Err(Error::Domain("evaluate over an empty test set".into()));
    }
    let (mut c1, mut c2, mut ce) = (0usize, 0usize, 0usize);
    for i in 0..test.len() {
        let x = test.feature(i);
        let label = test.noisy_labels()[i];
        let (_, p1) = branches.branch1.forward(x)?;
        let (_, p2) = branches.branch2.forward(x)?;
        if p1.argmax() == label {
            c1 += 1;
        }
        if p2.argmax() == label {
            c2 += 1;
        }
        let mean: Vec<f64> = p1
            .values()
            .iter()
            .zip(p2.values())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let ensemble = ProbDist::from_raw_unchecked(mean);
        if ensemble.argmax() == label {
            ce += 1;
        }
    }
    let n = test.len() as f64;
    Ok((c1 as f64 / n, c2 as f64 / n, ce as f64 / n))
}

/// How a sample participates in one training epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Route {
    CrossEntropy,
    Gce,
    Consistency,
    Skip,
}

fn route_for(label: PartitionLabel, config: &ExperimentConfig) -> Route {
    if config.ablation.is_no_split_baseline() {
        return Route::CrossEntropy;
    }
    match label {
        PartitionLabel::Warmup => Route::CrossEntropy,
        PartitionLabel::Clean => {
            if config.ablation.use_clean {
                Route::CrossEntropy
            } else {
                Route::Skip
            }
        }
        PartitionLabel::Boundary => {
            if config.ablation.use_boundary {
                Route::Gce
            } else {
                Route::Skip
            }
        }
        PartitionLabel::Noisy => {
            if config.ablation.use_noisy {
                Route::Consistency
            } else {
                Route::Skip
            }
        }
    }
}

/// Loss sums accumulated over one epoch, per subset.
#[derive(Debug, Default)]
struct LossAccumulator {
    ce_sum: f64,
    ce_count: usize,
    gce_sum: f64,
    gce_count: usize,
    kl_sum: f64,
    kl_count: usize,
}

impl LossAccumulator {
    fn means(&self) -> (f64, f64, f64) {
        let mean = |sum: f64, count: usize| if count == 0 { 0.0 } else { sum / count as f64 };
        (
            mean(self.ce_sum, self.ce_count),
            mean(self.gce_sum, self.gce_count),
            mean(self.kl_sum, self.kl_count),
        )
    }
}

struct EpochTrainer<'a> {
    config: &'a ExperimentConfig,
    train: &'a NoisyDataset,
    spec: AugmentSpec,
    stds: &'a [f64],
    params: LossParams,
}

impl EpochTrainer<'_> {
    fn augmented(&self, i: usize, view: ViewTag, epoch: u64) -> Vec<f64> {
        let mut rng = seeding::stream(
            self.config.seeds.augmentation,
            &[purpose::TRAIN_AUG, epoch, view.index() as u64, i as u64],
        );
        augment(self.train.feature(i), view, &self.spec, self.stds, &mut rng)
    }

    /// Trains one epoch; returns the epoch's per-subset loss means.
    ///
    /// Each subset's loss is the mean over the *whole* subset, so a batch
    /// member's gradient carries weight `1/|subset|`. Every batch step is
    /// additionally scaled by `N/B` so the per-epoch accumulated gradient
    /// is the full composite objective regardless of how samples land in
    /// batches; a per-batch mean would instead hand tiny subsets (a few
    /// boundary stragglers) full-strength gradients.
    fn run(
        &self,
        epoch: u64,
        routes: &[Route],
        branches: &mut DualBranch,
        opt1: &mut Sgd,
        opt2: &mut Sgd,
    ) -> Result<LossAccumulator> {
        let n = self.train.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = seeding::stream(
            self.config.seeds.augmentation,
            &[purpose::SHUFFLE, epoch],
        );
        order.shuffle(&mut shuffle_rng);

        let mut n_ce = 0usize;
        let mut n_gce = 0usize;
        let mut n_kl = 0usize;
        for &route in routes {
            match route {
                Route::CrossEntropy => n_ce += 1,
                Route::Gce => n_gce += 1,
                Route::Consistency => n_kl += 1,
                Route::Skip => {}
            }
        }
        let step_scale = n as f64 / self.config.batch_size as f64;

        let mut acc = LossAccumulator::default();
        for batch in order.chunks(self.config.batch_size) {
            let mut ce_members = Vec::new();
            let mut gce_members = Vec::new();
            let mut kl_members = Vec::new();
            for &i in batch {
                match routes[i] {
                    Route::CrossEntropy => ce_members.push(i),
                    Route::Gce => gce_members.push(i),
                    Route::Consistency => kl_members.push(i),
                    Route::Skip => {}
                }
            }
            let mut g1 = Gradients::zeros_like(&branches.branch1);
            let mut g2 = Gradients::zeros_like(&branches.branch2);

            if !ce_members.is_empty() {
                let scale = step_scale / n_ce as f64;
                for &i in &ce_members {
                    let label = self.train.noisy_labels()[i];
                    for (view, params, grads) in [
                        (ViewTag::Weak, &branches.branch1, &mut g1),
                        (ViewTag::Strong, &branches.branch2, &mut g2),
                    ] {
                        let x = self.augmented(i, view, epoch);
                        let cache = params.forward_cached(&x)?;
                        let probs = crate::prob::softmax(&cache.logits)?;
                        acc.ce_sum +=
                            cross_entropy_batch(&[probs], &[label], self.params.clamp)?;
                        acc.ce_count += 1;
                        let dlogits = ce_grad_logits(&cache.logits, label, self.params.clamp)?;
                        grads.add_scaled(&params.backward(&cache, &dlogits)?, scale);
                    }
                }
            }

            if !gce_members.is_empty() {
                let scale = self.params.lambda_b * step_scale / n_gce as f64;
                for &i in &gce_members {
                    let label = self.train.noisy_labels()[i];
                    for (view, params, grads) in [
                        (ViewTag::Weak, &branches.branch1, &mut g1),
                        (ViewTag::Strong, &branches.branch2, &mut g2),
                    ] {
                        let x = self.augmented(i, view, epoch);
                        let cache = params.forward_cached(&x)?;
                        let probs = crate::prob::softmax(&cache.logits)?;
                        acc.gce_sum +=
                            gce_batch(&[probs], &[label], self.params.q, self.params.clamp)?;
                        acc.gce_count += 1;
                        let dlogits =
                            gce_grad_logits(&cache.logits, label, self.params.q, self.params.clamp)?;
                        grads.add_scaled(&params.backward(&cache, &dlogits)?, scale);
                    }
                }
            }

            if !kl_members.is_empty() {
                let scale = self.params.lambda_n * step_scale / n_kl as f64;
                for &i in &kl_members {
                    let x1 = self.augmented(i, ViewTag::Weak, epoch);
                    let x2 = self.augmented(i, ViewTag::Strong, epoch);
                    let cache1 = branches.branch1.forward_cached(&x1)?;
                    let cache2 = branches.branch2.forward_cached(&x2)?;
                    let p1 = crate::prob::softmax(&cache1.logits)?;
                    let p2 = crate::prob::softmax(&cache2.logits)?;
                    acc.kl_sum += sym_kl(&p1, &p2, self.params.clamp)?;
                    acc.kl_count += 1;
                    let (d1, d2) =
                        symkl_grad_logits(&cache1.logits, &cache2.logits, self.params.clamp)?;
                    g1.add_scaled(&branches.branch1.backward(&cache1, &d1)?, scale);
                    g2.add_scaled(&branches.branch2.backward(&cache2, &d2)?, scale);
                }
            }

            backward_step(&mut branches.branch1, opt1, &g1)?;
            backward_step(&mut branches.branch2, opt2, &g2)?;
        }
        Ok(acc)
    }
}

fn quantize_and_normalize(pred: &ProbDist) -> (Vec<f64>, Vec<f64>) {
    let quantized: Vec<f64> = pred.values().iter().map(|&v| logs::quantize9(v)).collect();
    let normalized = ProbDist::normalized(quantized.clone())
        .expect("quantized softmax output renormalizes")
        .values()
        .to_vec();
    (quantized, normalized)
}

/// Runs the full experiment and writes every artifact into the run
/// directory: effective config, dataset CSV, epoch JSONL, prediction log,
/// partition trace, timings sidecar, checkpoints, and the final report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    run_experiment_with(config, &mut |_| {})
}

/// [`run_experiment`] with a per-epoch observer (progress printing).
pub fn run_experiment_with(
    config: &ExperimentConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<RunArtifacts> {
    config.validate()?;
    let data = prepare_data(config)?;
    let train = &data.train;
    let test = &data.test;
    let k = train.num_classes();
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    std::fs::create_dir_all(dir.join(files::CHECKPOINTS))?;

    std::fs::write(dir.join(files::CONFIG), config.to_json_pretty())?;
    {
        let mut out = BufWriter::new(File::create(dir.join(files::DATASET))?);
        train.export_csv(&mut out)?;
        out.flush()?;
    }

    let arch = Architecture::new(train.dim(), config.model.hidden.clone(), k)?;
    let mut branches = init_dual(&arch, config.seeds.branch1, config.seeds.branch2)?;
    let schedule = config.optimizer.schedule.to_schedule();
    let mut opt1 = Sgd::new(
        config.optimizer.learning_rate,
        config.optimizer.momentum,
        schedule,
        &branches.branch1,
    )?;
    let mut opt2 = Sgd::new(
        config.optimizer.learning_rate,
        config.optimizer.momentum,
        schedule,
        &branches.branch2,
    )?;
    let mut store = TemporalMemoryStore::new(k);

    let stds = train.feature_stds();
    let spec = config.augment.to_spec();
    let loss_params = config.loss.to_params();
    let trainer = EpochTrainer {
        config,
        train,
        spec,
        stds: &stds,
        params: loss_params,
    };

    let mut epochs_out = BufWriter::new(File::create(dir.join(files::EPOCHS))?);
    let mut preds_out = BufWriter::new(File::create(dir.join(files::PREDICTIONS))?);
    logs::write_prediction_header(&mut preds_out, k)?;
    let mut parts_out = BufWriter::new(File::create(dir.join(files::PARTITIONS))?);
    logs::write_partition_header(&mut parts_out)?;
    let mut timings_out = BufWriter::new(File::create(dir.join(files::TIMINGS))?);
    writeln!(timings_out, "epoch,wall_time_s")?;

    let mut records = Vec::with_capacity(config.epochs as usize);
    for t in 1..=config.epochs {
        let started = Instant::now();
        opt1.enter_epoch(t, config.epochs);
        opt2.enter_epoch(t, config.epochs);

        // Selection against the store as of epoch t-1.
        let mut report = partition_dataset(&store, train.noisy_labels())?;
        if let Some(mask) = train.mask() {
            report = with_quality(report, mask)?;
        }
        if t > crate::memory::NUM_UNITS as u64 {
            logs::write_partition_rows(&mut parts_out, t, &report, train.mask())?;
        }
        let routes: Vec<Route> = report
            .decisions
            .iter()
            .map(|d| route_for(d.label, config))
            .collect();

        let acc = trainer.run(t, &routes, &mut branches, &mut opt1, &mut opt2)?;
        let (l_clean, l_boundary, l_noisy) = acc.means();
        let breakdown = total_loss(
            l_clean,
            l_boundary,
            l_noisy,
            (acc.ce_count, acc.gce_count, acc.kl_count),
            &loss_params,
        );
        if !breakdown.l_total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite training loss at epoch {t}: clean={l_clean} boundary={l_boundary} noisy={l_noisy}"
            )));
        }

        // Inference pass feeding the memory, on a fresh augmentation draw.
        let infer_seed = seeding::mix(config.seeds.augmentation, &[purpose::INFER_AUG, t]);
        let draw = AugmentDraw {
            spec: &spec,
            feature_stds: &stds,
            seed: infer_seed,
        };
        let weak_preds = predict_dataset(&branches.branch1, train, ViewTag::Weak, &draw)?;
        let strong_preds = predict_dataset(&branches.branch2, train, ViewTag::Strong, &draw)?;
        for i in 0..train.len() {
            let (wq, wn) = quantize_and_normalize(&weak_preds[i]);
            let (sq, sn) = quantize_and_normalize(&strong_preds[i]);
            logs::write_prediction_row(&mut preds_out, t, i as u64, ViewTag::Weak, &wq)?;
            logs::write_prediction_row(&mut preds_out, t, i as u64, ViewTag::Strong, &sq)?;
            store.record_sample(i as u64, t, &wn, &sn)?;
        }
        store.advance_epoch(t)?;

        let (acc1, acc2, acc_ens) = evaluate(&branches, test)?;
        let quality = report.quality.unwrap_or(crate::selection::PartitionQuality {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });
        let record = EpochRecord {
            epoch: t,
            n_clean: report.n_clean,
            n_boundary: report.n_boundary,
            n_noisy: report.n_noisy,
            n_warmup: report.n_warmup,
            noisy_precision: quality.precision,
            noisy_recall: quality.recall,
            noisy_f1: quality.f1,
            acc_branch1: acc1,
            acc_branch2: acc2,
            acc_ensemble: acc_ens,
            loss_clean: breakdown.l_clean,
            loss_boundary: breakdown.l_boundary,
            loss_noisy: breakdown.l_noisy,
            loss_total: breakdown.l_total,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        logs::write_epoch_record(&mut epochs_out, &record)?;
        writeln!(timings_out, "{t},{:.6}", record.wall_time_s)?;
        on_epoch(&record);
        records.push(record);
    }
    epochs_out.flush()?;
    preds_out.flush()?;
    parts_out.flush()?;
    timings_out.flush()?;

    let checkpoints = dir.join(files::CHECKPOINTS);
    let mut buf = Vec::new();
    store.checkpoint(&mut buf)?;
    std::fs::write(checkpoints.join("tms.bin"), &buf)?;
    buf.clear();
    branches.branch1.checkpoint(&mut buf)?;
    std::fs::write(checkpoints.join("branch1.bin"), &buf)?;
    buf.clear();
    branches.branch2.checkpoint(&mut buf)?;
    std::fs::write(checkpoints.join("branch2.bin"), &buf)?;

    let last = records.last().expect("at least one epoch");
    let summary = serde_json::json!({
        "epochs": config.epochs,
        "train_samples": train.len(),
        "test_samples": test.len(),
        "classes": k,
        "realized_corruption_rate": train.corruption_rate(),
        "final": {
            "acc_branch1": last.acc_branch1,
            "acc_branch2": last.acc_branch2,
            "acc_ensemble": last.acc_ensemble,
            "n_clean": last.n_clean,
            "n_boundary": last.n_boundary,
            "n_noisy": last.n_noisy,
            "n_warmup": last.n_warmup,
            "noisy_precision": last.noisy_precision,
            "noisy_recall": last.noisy_recall,
            "noisy_f1": last.noisy_f1,
        },
        "total_wall_time_s": records.iter().map(|r| r.wall_time_s).sum::<f64>(),
    });
    std::fs::write(
        dir.join(files::REPORT),
        serde_json::to_string_pretty(&summary).expect("report serializes"),
    )?;

    Ok(RunArtifacts { dir, records })
}

/// Reconstructs the memory store from a prediction log and emits the
/// partition reports of every selection epoch, exactly as the online run
/// produced them from the same predictions.
pub fn replay(
    log: &PredictionLog,
    noisy_labels: &[usize],
    mask: Option<&[bool]>,
) -> Result<Vec<(u64, PartitionReport)>> {
    if log.sample_ids.len() != noisy_labels.len() {
        return Err(Error::Format(format!(
            "prediction log tracks {} samples but {} labels were supplied",
            log.sample_ids.len(),
            noisy_labels.len()
        )));
    }
    if log
        .sample_ids
        .iter()
        .enumerate()
        .any(|(i, &id)| id != i as u64)
    {
        return Err(Error::Format(
            "prediction log sample ids are not 0..N-1".into(),
        ));
    }
    let mut store = TemporalMemoryStore::new(log.num_classes);
    let mut out = Vec::new();
    for (idx, block) in log.epochs.iter().enumerate() {
        let t = idx as u64 + 1;
        if t > crate::memory::NUM_UNITS as u64 {
            let mut report = partition_dataset(&store, noisy_labels)?;
            if let Some(mask) = mask {
                report = with_quality(report, mask)?;
            }
            out.push((t, report));
        }
        for (i, (weak, strong)) in block.iter().enumerate() {
            let wn = ProbDist::normalized(weak.clone())
                .map_err(|e| Error::Format(format!("epoch {t} sample {i} weak: {e}")))?;
            let sn = ProbDist::normalized(strong.clone())
                .map_err(|e| Error::Format(format!("epoch {t} sample {i} strong: {e}")))?;
            store.record_sample(i as u64, t, wn.values(), sn.values())?;
        }
        store.advance_epoch(t)?;
    }
    Ok(out)
}

/// Replays a run directory: parses its prediction log and dataset, then
/// writes the reconstructed partition trace to `out` and returns its path.
pub fn replay_run_dir(run_dir: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let preds_path = run_dir.join(files::PREDICTIONS);
    let file = File::open(&preds_path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", preds_path.display())))?;
    let log = logs::read_prediction_log(std::io::BufReader::new(file))?;

    let dataset_path = run_dir.join(files::DATASET);
    let file = File::open(&dataset_path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", dataset_path.display())))?;
    let dataset = NoisyDataset::import_csv(std::io::BufReader::new(file))?;

    let reports = replay(&log, dataset.noisy_labels(), dataset.mask())?;
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("partitions_replay.csv"));
    let mut writer = BufWriter::new(File::create(&out_path)?);
    logs::write_partition_header(&mut writer)?;
    for (epoch, report) in &reports {
        logs::write_partition_rows(&mut writer, *epoch, report, dataset.mask())?;
    }
    writer.flush()?;
    Ok(out_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::*;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetConfig::Blobs {
                classes: 3,
                features: 4,
                train_per_class: 20,
                test_per_class: 10,
                center_separation: 6.0,
                cluster_std: 1.0,
            },
            noise: NoiseConfig::Symmetric { rate: 0.3 },
            augment: AugmentConfig::default(),
            model: ModelConfig { hidden: vec![16] },
            optimizer: OptimizerConfig {
                learning_rate: 0.05,
                momentum: 0.9,
                schedule: ScheduleConfig::Constant,
            },
            epochs: 7,
            batch_size: 16,
            loss: LossConfig::default(),
            seeds: SeedConfig {
                data: 1,
                branch1: 2,
                branch2: 3,
                augmentation: 4,
            },
            ablation: AblationConfig::default(),
            allow_warmup_only: false,
            output_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn run_writes_all_artifacts_and_replays() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let config = tiny_config(&dir);
        let artifacts = run_experiment(&config).unwrap();
        assert_eq!(artifacts.records.len(), 7);
        for name in [
            files::CONFIG,
            files::DATASET,
            files::EPOCHS,
            files::PREDICTIONS,
            files::PARTITIONS,
            files::TIMINGS,
            files::REPORT,
        ] {
            assert!(dir.join(name).exists(), "{name} missing");
        }
        assert!(dir.join(files::CHECKPOINTS).join("tms.bin").exists());

        // Warm-up epochs carry warmup counts; selection epochs partition.
        assert_eq!(artifacts.records[0].n_warmup, 60);
        let selection = &artifacts.records[5];
        assert_eq!(
            selection.n_clean + selection.n_boundary + selection.n_noisy,
            60
        );

        // Replay reproduces the partition trace byte-for-byte.
        let replayed = replay_run_dir(&dir, None).unwrap();
        let online = std::fs::read(dir.join(files::PARTITIONS)).unwrap();
        let offline = std::fs::read(replayed).unwrap();
        assert_eq!(online, offline);
    }

    #[test]
    fn same_config_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let dir_a = tmp.path().join("a");
        let dir_b = tmp.path().join("b");
        run_experiment(&tiny_config(&dir_a)).unwrap();
        run_experiment(&tiny_config(&dir_b)).unwrap();
        for name in [files::EPOCHS, files::PREDICTIONS, files::PARTITIONS, files::DATASET] {
            let a = std::fs::read(dir_a.join(name)).unwrap();
            let b = std::fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn warmup_only_run_completes() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("short");
        let mut config = tiny_config(&dir);
        config.epochs = 4;
        config.allow_warmup_only = true;
        let artifacts = run_experiment(&config).unwrap();
        assert!(artifacts.records.iter().all(|r| r.n_warmup == 60));
        // No selection epochs: trace is header-only.
        let trace = std::fs::read_to_string(dir.join(files::PARTITIONS)).unwrap();
        assert_eq!(trace.lines().count(), 1);
    }

    #[test]
    fn evaluate_guards_and_ensembles() {
        let arch = Architecture::new(2, vec![4], 2).unwrap();
        let branches = init_dual(&arch, 1, 2).unwrap();
        let empty = NoisyDataset::new(vec![], 2, 2, vec![], None).unwrap();
        assert!(matches!(
            evaluate(&branches, &empty),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn replay_rejects_label_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        run_experiment(&tiny_config(&dir)).unwrap();
        let file = File::open(dir.join(files::PREDICTIONS)).unwrap();
        let log = logs::read_prediction_log(std::io::BufReader::new(file)).unwrap();
        assert!(replay(&log, &[0, 1], None).is_err());
    }
}
