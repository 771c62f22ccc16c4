//! Temporal-trajectory sample selection.
//!
//! Reads memory snapshots and distills them into two signatures: the
//! convergence flag (per-stage losses strictly decreasing in both views) and
//! the consistency score (fraction of stages where the two views' argmax
//! agree), then partitions the dataset into clean / boundary / noisy subsets.

use crate::error::{Error, Result};
use crate::memory::{Snapshot, TemporalMemoryStore, ViewTag, NUM_UNITS};
use crate::prob::PROB_FLOOR;

/// Per-stage cross-entropy of the memory units against the noisy label,
/// `[view][unit]` indexed, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLossMatrix {
    pub losses: [[f64; NUM_UNITS]; 2],
}

impl StageLossMatrix {
    pub fn view(&self, view: ViewTag) -> &[f64; NUM_UNITS] {
        &self.losses[view.index()]
    }
}

/// The subset a sample is routed to at a selection epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionLabel {
    Clean,
    Boundary,
    Noisy,
    /// Pre-selection epochs only (memory not fully populated yet).
    Warmup,
}

impl PartitionLabel {
    pub fn name(self) -> &'static str {
        match self {
            PartitionLabel::Clean => "clean",
            PartitionLabel::Boundary => "boundary",
            PartitionLabel::Noisy => "noisy",
            PartitionLabel::Warmup => "warmup",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(PartitionLabel::Clean),
            "boundary" => Ok(PartitionLabel::Boundary),
            "noisy" => Ok(PartitionLabel::Noisy),
            "warmup" => Ok(PartitionLabel::Warmup),
            other => Err(Error::Format(format!("unknown partition label {other:?}"))),
        }
    }
}

/// Selection verdict for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDecision {
    /// Convergence flag: losses strictly decrease across stages in both views.
    pub gamma: bool,
    /// Stages (0..=4) at which the weak and strong argmax agree.
    pub agree_stages: u8,
    pub label: PartitionLabel,
}

impl SampleDecision {
    /// Consistency score in {0, 0.25, 0.5, 0.75, 1}. Quarters are exact in
    /// floating point, so equality tests against 1.0 are safe.
    pub fn psi(&self) -> f64 {
        f64::from(self.agree_stages) / NUM_UNITS as f64
    }
}

/// Counts and quality of one selection round over the whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    pub epoch: u64,
    /// One decision per sample, indexed by sample id.
    pub decisions: Vec<SampleDecision>,
    pub n_clean: usize,
    pub n_boundary: usize,
    pub n_noisy: usize,
    pub n_warmup: usize,
    /// Noisy-set precision/recall/F1 against the corruption mask, when known.
    pub quality: Option<PartitionQuality>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionQuality {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PartitionReport {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

/// Cross-entropy of each memory unit against the noisy label:
/// `-ln(max(unit[label], 1e-12))` per view and stage.
pub fn stage_losses(snapshot: &Snapshot, noisy_label: usize) -> Result<StageLossMatrix> {
    let k = snapshot.view(ViewTag::Weak)[0].len();
    if noisy_label >= k {
        return Err(Error::Domain(format!(
            "label {noisy_label} out of range 0..{k}"
        )));
    }
    let mut losses = [[0.0; NUM_UNITS]; 2];
    for view in ViewTag::ALL {
        for (j, unit) in snapshot.view(view).iter().enumerate() {
            losses[view.index()][j] = -unit.values()[noisy_label].max(PROB_FLOOR).ln();
        }
    }
    Ok(StageLossMatrix { losses })
}

/// 1 iff the stage losses strictly decrease across all four stages in both
/// views (six strict comparisons).
pub fn convergence_flag(matrix: &StageLossMatrix) -> bool {
    matrix
        .losses
        .iter()
        .all(|row| row.windows(2).all(|w| w[0] > w[1]))
}

/// Number of stages (0..=4) where the weak and strong units share an argmax.
/// Argmax ties break toward the lowest class index in both views.
pub fn consistency_agreement(snapshot: &Snapshot) -> u8 {
    let weak = snapshot.view(ViewTag::Weak);
    let strong = snapshot.view(ViewTag::Strong);
    (0..NUM_UNITS)
        .filter(|&j| weak[j].argmax() == strong[j].argmax())
        .count() as u8
}

/// Consistency score over the four stages, in {0, 0.25, 0.5, 0.75, 1}.
pub fn consistency_score(snapshot: &Snapshot) -> f64 {
    f64::from(consistency_agreement(snapshot)) / NUM_UNITS as f64
}

/// Partition rule: clean iff converged with full agreement (`psi == 1`
/// exactly), boundary iff converged without it, noisy iff not converged.
pub fn assign_partition(gamma: bool, psi: f64) -> PartitionLabel {
    if gamma {
        if psi == 1.0 {
            PartitionLabel::Clean
        } else {
            PartitionLabel::Boundary
        }
    } else {
        PartitionLabel::Noisy
    }
}

/// Runs the full selection pipeline over every sample in the store.
///
/// Sample ids are the indices of `noisy_labels`. Before the store has sealed
/// epoch 4 the memory is not fully populated and every sample is labeled
/// [`PartitionLabel::Warmup`] (no error).
pub fn partition_dataset(
    store: &TemporalMemoryStore,
    noisy_labels: &[usize],
) -> Result<PartitionReport> {
    if store.epoch() >= NUM_UNITS as u64 && store.len() != noisy_labels.len() {
        return Err(Error::Domain(format!(
            "store tracks {} samples but {} labels were supplied",
            store.len(),
            noisy_labels.len()
        )));
    }
    if store.epoch() < NUM_UNITS as u64 {
        let n = noisy_labels.len();
        return Ok(PartitionReport {
            epoch: store.epoch(),
            decisions: vec![
                SampleDecision {
                    gamma: false,
                    agree_stages: 0,
                    label: PartitionLabel::Warmup,
                };
                n
            ],
            n_clean: 0,
            n_boundary: 0,
            n_noisy: 0,
            n_warmup: n,
            quality: None,
        });
    }
    let mut decisions = Vec::with_capacity(noisy_labels.len());
    let (mut n_clean, mut n_boundary, mut n_noisy) = (0, 0, 0);
    for (id, &label) in noisy_labels.iter().enumerate() {
        let snapshot = store.snapshot(id as u64)?;
        let gamma = convergence_flag(&stage_losses(&snapshot, label)?);
        let agree = consistency_agreement(&snapshot);
        let decision = SampleDecision {
            gamma,
            agree_stages: agree,
            label: assign_partition(gamma, f64::from(agree) / NUM_UNITS as f64),
        };
        match decision.label {
            PartitionLabel::Clean => n_clean += 1,
            PartitionLabel::Boundary => n_boundary += 1,
            PartitionLabel::Noisy => n_noisy += 1,
            PartitionLabel::Warmup => unreachable!("selection epoch produced a warm-up label"),
        }
        decisions.push(decision);
    }
    Ok(PartitionReport {
        epoch: store.epoch(),
        decisions,
        n_clean,
        n_boundary,
        n_noisy,
        n_warmup: 0,
        quality: None,
    })
}

/// Precision/recall/F1 of the noisy subset against the ground-truth
/// corruption mask. `0/0` counts as 0 throughout.
pub fn partition_quality(report: &PartitionReport, mask: &[bool]) -> Result<PartitionQuality> {
    if mask.len() != report.decisions.len() {
        return Err(Error::Domain(format!(
            "mask has {} entries for {} samples",
            mask.len(),
            report.decisions.len()
        )));
    }
    let mut selected = 0usize;
    let mut hits = 0usize;
    for (decision, &corrupted) in report.decisions.iter().zip(mask.iter()) {
        if decision.label == PartitionLabel::Noisy {
            selected += 1;
            if corrupted {
                hits += 1;
            }
        }
    }
    let corrupted_total = mask.iter().filter(|&&m| m).count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(hits, selected);
    let recall = ratio(hits, corrupted_total);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PartitionQuality {
        precision,
        recall,
        f1,
    })
}

/// Attaches quality-vs-mask numbers to a report.
pub fn with_quality(mut report: PartitionReport, mask: &[bool]) -> Result<PartitionReport> {
    report.quality = Some(partition_quality(&report, mask)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::TemporalMemoryStore;
    use crate::prob::ProbDist;
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform_snapshot(k: usize) -> Snapshot {
        Snapshot {
            units: [
                std::array::from_fn(|_| ProbDist::uniform(k)),
                std::array::from_fn(|_| ProbDist::uniform(k)),
            ],
        }
    }

    #[test]
    fn stage_losses_match_hand_values() {
        let snap = uniform_snapshot(4);
        let m = stage_losses(&snap, 2).unwrap();
        for view in ViewTag::ALL {
            for &loss in m.view(view) {
                assert!((loss - 4.0f64.ln()).abs() < 1e-12);
                assert!((loss - 1.386294).abs() < 1e-6);
            }
        }
        // Point mass on the label gives exactly zero (clamp inactive).
        let hot = ProbDist::one_hot(4, 1).unwrap();
        let snap = Snapshot {
            units: [
                std::array::from_fn(|_| hot.clone()),
                std::array::from_fn(|_| hot.clone()),
            ],
        };
        let m = stage_losses(&snap, 1).unwrap();
        assert_eq!(m.losses[0][0], 0.0);
        // Direct evaluation of -ln 0.7.
        let p = ProbDist::new(vec![0.7, 0.3]).unwrap();
        let snap = Snapshot {
            units: [
                std::array::from_fn(|_| p.clone()),
                std::array::from_fn(|_| p.clone()),
            ],
        };
        let m = stage_losses(&snap, 0).unwrap();
        assert!((m.losses[0][0] - 0.356675).abs() < 1e-6);
        assert!(stage_losses(&snap, 2).is_err());
    }

    #[test]
    fn convergence_needs_strict_decrease_in_both_views() {
        let dec = [2.0, 1.5, 1.0, 0.5];
        assert!(convergence_flag(&StageLossMatrix {
            losses: [dec, dec]
        }));
        // A tie in one view fails strictness.
        assert!(!convergence_flag(&StageLossMatrix {
            losses: [[2.0, 1.0, 1.0, 0.5], dec]
        }));
        // Both views are required.
        assert!(!convergence_flag(&StageLossMatrix {
            losses: [dec, [1.0, 1.2, 0.8, 0.5]]
        }));
    }

    #[test]
    fn consistency_counts_agreeing_stages() {
        let peaked = |c: usize| {
            let mut v = vec![0.1 / 3.0; 4];
            v[c] = 0.9;
            ProbDist::normalized(v).unwrap()
        };
        let snap = Snapshot {
            units: [
                std::array::from_fn(|_| peaked(2)),
                std::array::from_fn(|_| peaked(2)),
            ],
        };
        assert_eq!(consistency_agreement(&snap), 4);
        assert_eq!(consistency_score(&snap), 1.0);

        // Agreement on stages 1 and 3 only.
        let weak = [peaked(0), peaked(1), peaked(2), peaked(3)];
        let strong = [peaked(0), peaked(2), peaked(2), peaked(1)];
        let snap = Snapshot {
            units: [weak, strong],
        };
        assert_eq!(consistency_agreement(&snap), 2);
        assert_eq!(consistency_score(&snap), 0.5);

        // Exactly uniform units argmax to class 0 in both views.
        let snap = uniform_snapshot(4);
        assert_eq!(consistency_agreement(&snap), 4);
    }

    #[test]
    fn partition_rule_matches_eq16() {
        assert_eq!(assign_partition(true, 1.0), PartitionLabel::Clean);
        assert_eq!(assign_partition(true, 0.75), PartitionLabel::Boundary);
        assert_eq!(assign_partition(false, 1.0), PartitionLabel::Noisy);
        assert_eq!(assign_partition(false, 0.0), PartitionLabel::Noisy);
    }

    #[test]
    fn warmup_store_yields_warmup_labels() {
        let mut store = TemporalMemoryStore::new(3);
        for t in 1..=3u64 {
            for id in 0..5u64 {
                for view in ViewTag::ALL {
                    store.init_unit(id, view, t, &[0.2, 0.3, 0.5]).unwrap();
                }
            }
            store.advance_epoch(t).unwrap();
        }
        let report = partition_dataset(&store, &[0, 1, 2, 0, 1]).unwrap();
        assert_eq!(report.n_warmup, 5);
        assert!(report
            .decisions
            .iter()
            .all(|d| d.label == PartitionLabel::Warmup));
    }

    #[test]
    fn empty_dataset_gives_empty_report() {
        let mut store = TemporalMemoryStore::new(3);
        for t in 1..=4u64 {
            store.advance_epoch(t).unwrap();
        }
        let report = partition_dataset(&store, &[]).unwrap();
        assert!(report.is_empty());
        assert_eq!(
            report.n_clean + report.n_boundary + report.n_noisy + report.n_warmup,
            0
        );
    }

    #[test]
    fn quality_counts_directly() {
        // 10 samples labeled noisy, 5 of them truly corrupted, 20 corrupted
        // in total: precision 0.5, recall 0.25, F1 1/3.
        let mut decisions = Vec::new();
        let mut mask = Vec::new();
        for i in 0..40 {
            let label = if i < 10 {
                PartitionLabel::Noisy
            } else {
                PartitionLabel::Clean
            };
            decisions.push(SampleDecision {
                gamma: label != PartitionLabel::Noisy,
                agree_stages: 4,
                label,
            });
            // Corrupted: 5 inside the noisy set, 15 outside.
            mask.push(i < 5 || (10..25).contains(&i));
        }
        let report = PartitionReport {
            epoch: 10,
            decisions,
            n_clean: 30,
            n_boundary: 0,
            n_noisy: 10,
            n_warmup: 0,
            quality: None,
        };
        let q = partition_quality(&report, &mask).unwrap();
        assert!((q.precision - 0.5).abs() < 1e-15);
        assert!((q.recall - 0.25).abs() < 1e-15);
        assert!((q.f1 - 1.0 / 3.0).abs() < 1e-15);

        // Perfect selection.
        let perfect: Vec<bool> = report
            .decisions
            .iter()
            .map(|d| d.label == PartitionLabel::Noisy)
            .collect();
        let q = partition_quality(&report, &perfect).unwrap();
        assert_eq!((q.precision, q.recall, q.f1), (1.0, 1.0, 1.0));

        // No sample labeled noisy: the 0/0 convention.
        let none = PartitionReport {
            decisions: report
                .decisions
                .iter()
                .map(|d| SampleDecision {
                    label: PartitionLabel::Clean,
                    ..*d
                })
                .collect(),
            n_clean: 40,
            n_noisy: 0,
            ..report.clone()
        };
        let q = partition_quality(&none, &mask).unwrap();
        assert_eq!((q.precision, q.recall, q.f1), (0.0, 0.0, 0.0));

        assert!(partition_quality(&report, &mask[..10]).is_err());
    }

    #[test]
    fn rescaling_logits_preserves_psi() {
        // Metamorphic: argmax-preserving logit rescaling leaves psi unchanged.
        let mut rng = crate::seeding::stream(17, &[]);
        for _ in 0..200 {
            let logits = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                (0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()
            };
            let base: Vec<Vec<f64>> = (0..8).map(|_| logits(&mut rng)).collect();
            let scale = 0.1 + rng.random::<f64>() * 5.0;
            let snap_of = |scale: f64| {
                let mut units = base
                    .iter()
                    .map(|l| {
                        let scaled: Vec<f64> = l.iter().map(|&v| v * scale).collect();
                        crate::prob::softmax(&scaled).unwrap()
                    })
                    .collect::<Vec<_>>();
                let strong: Vec<ProbDist> = units.split_off(4);
                Snapshot {
                    units: [
                        units.try_into().unwrap(),
                        strong.try_into().unwrap(),
                    ],
                }
            };
            assert_eq!(
                consistency_agreement(&snap_of(1.0)),
                consistency_agreement(&snap_of(scale))
            );
        }
    }

    proptest! {
        // Permuting the stage order destroys convergence unless the permuted
        // losses remain strictly decreasing.
        #[test]
        fn permutation_semantics(perm in proptest::sample::select(permutations()),
                                 base in proptest::collection::vec(0.01f64..5.0, 4)) {
            let mut sorted = base.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let row: [f64; 4] = sorted.clone().try_into().unwrap();
            let permuted: [f64; 4] = perm.map(|i| row[i]);
            let gamma = convergence_flag(&StageLossMatrix { losses: [permuted, permuted] });
            let still_decreasing = permuted.windows(2).all(|w| w[0] > w[1]);
            prop_assert_eq!(gamma, still_decreasing);
        }

        // Psi only takes quantized values.
        #[test]
        fn psi_is_quantized(seed in 0u64..1000) {
            let mut rng = crate::seeding::stream(seed, &[b'q' as u64]);
            let unit = |rng: &mut rand_chacha::ChaCha8Rng| {
                let raw: Vec<f64> = (0..6).map(|_| rng.random::<f64>() + 1e-6).collect();
                ProbDist::normalized(raw).unwrap()
            };
            let snap = Snapshot {
                units: [
                    std::array::from_fn(|_| unit(&mut rng)),
                    std::array::from_fn(|_| unit(&mut rng)),
                ],
            };
            let psi = consistency_score(&snap);
            prop_assert!([0.0, 0.25, 0.5, 0.75, 1.0].contains(&psi));
        }
    }

    fn permutations() -> Vec<[usize; 4]> {
        let mut all = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, c, d];
                        let mut seen = [false; 4];
                        p.iter().for_each(|&i| seen[i] = true);
                        if seen.iter().all(|&s| s) {
                            all.push(p);
                        }
                    }
                }
            }
        }
        all
    }
}
