//! Temporal memory: four evolving probability distributions per sample per
//! view, refreshed by a sliding convex update with controlled decay.
//!
//! Each tracked sample owns, for the weak and the strong view, a bank of four
//! units ordered long-term → mid-term → short-term → immediate. Warm-up
//! epochs 1..=4 populate unit `j = t` directly from that epoch's prediction.
//! From epoch 5 on, every epoch shifts information down the bank:
//!
//! ```text
//! unit_j(t) = alpha_j(t) * unit_j(t-1) + beta_j(t) * next(t-1)
//! ```
//!
//! where `next` is unit `j+1` for `j < 4` and the fresh prediction for
//! `j = 4`, and `alpha_j + beta_j = 1`. Rows are processed in ascending `j`
//! in place; row `j` reads only unit `j+1`, which has not been overwritten
//! yet, so the result equals the two-buffer formulation exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::prob::ProbDist;

/// Number of memory units per sample per view.
pub const NUM_UNITS: usize = 4;

/// Checkpoint magic bytes.
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TMS1";

/// Checkpoint format version written by this build.
pub const CHECKPOINT_VERSION: u32 = 1;

/// The two augmentation views feeding the dual branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViewTag {
    Weak,
    Strong,
}

impl ViewTag {
    pub const ALL: [ViewTag; 2] = [ViewTag::Weak, ViewTag::Strong];

    pub fn index(self) -> usize {
        match self {
            ViewTag::Weak => 0,
            ViewTag::Strong => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewTag::Weak => "weak",
            ViewTag::Strong => "strong",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(ViewTag::Weak),
            "strong" => Ok(ViewTag::Strong),
            other => Err(Error::Format(format!("unknown view tag {other:?}"))),
        }
    }
}

/// Sliding-update coefficients for unit `j` at epoch `t`.
///
/// `alpha = (t+1-j)/(t+1)` scales the unit's own previous value and
/// `beta = j/(t+1)` the incoming value. `alpha` is computed as `1 - beta`,
/// which keeps `alpha + beta == 1` exact in floating point (the direct
/// quotient can be one ulp off). Rows are convex for every `j` once
/// `t >= 4`; higher `j` weights recent information more heavily, and as
/// `t → ∞`, `alpha → 1`, `beta → 0`.
pub fn weight_schedule(t: u64, j: usize) -> Result<(f64, f64)> {
    if !(1..=NUM_UNITS).contains(&j) {
        return Err(Error::Domain(format!(
            "unit index {j} outside 1..={NUM_UNITS}"
        )));
    }
    if t < 1 {
        return Err(Error::Domain(format!("epoch {t} must be >= 1")));
    }
    let beta = j as f64 / (t + 1) as f64;
    Ok((1.0 - beta, beta))
}

/// One view's bank of four memory units.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryCell {
    units: [ProbDist; NUM_UNITS],
    initialized_through: u8,
    touched: u64,
}

impl MemoryCell {
    fn empty(num_classes: usize) -> Self {
        Self {
            units: std::array::from_fn(|_| ProbDist::uniform(num_classes)),
            initialized_through: 0,
            touched: 0,
        }
    }

    /// Units populated so far (0..=4). Follows the store epoch during
    /// warm-up and stays 4 afterwards.
    pub fn initialized_through(&self) -> u8 {
        self.initialized_through
    }

    /// Unit `j` in 1..=4. Long-term is `j = 1`, immediate is `j = 4`.
    pub fn unit(&self, j: usize) -> Result<&ProbDist> {
        if !(1..=NUM_UNITS).contains(&j) {
            return Err(Error::Domain(format!(
                "unit index {j} outside 1..={NUM_UNITS}"
            )));
        }
        if j > self.initialized_through as usize {
            return Err(Error::State(format!(
                "unit {j} not populated yet (initialized through {})",
                self.initialized_through
            )));
        }
        Ok(&self.units[j - 1])
    }
}

/// Copies of the eight memory units of one sample, `[view][unit]` indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub units: [[ProbDist; NUM_UNITS]; 2],
}

impl Snapshot {
    pub fn view(&self, view: ViewTag) -> &[ProbDist; NUM_UNITS] {
        &self.units[view.index()]
    }
}

/// The per-sample temporal memory bank plus the global epoch counter.
///
/// The epoch advances by exactly one per update round: callers write every
/// sample's predictions for epoch `t = epoch + 1` via [`init_unit`] /
/// [`slide_update`] (or [`record_sample`]) and then seal the round with
/// [`advance_epoch`]. Reads ([`snapshot`]) always observe the last sealed
/// epoch.
///
/// [`init_unit`]: TemporalMemoryStore::init_unit
/// [`slide_update`]: TemporalMemoryStore::slide_update
/// [`record_sample`]: TemporalMemoryStore::record_sample
/// [`advance_epoch`]: TemporalMemoryStore::advance_epoch
/// [`snapshot`]: TemporalMemoryStore::snapshot
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalMemoryStore {
    cells: BTreeMap<u64, [MemoryCell; 2]>,
    epoch: u64,
    num_classes: usize,
}

impl TemporalMemoryStore {
    pub fn new(num_classes: usize) -> Self {
        assert!(num_classes >= 2, "need at least 2 classes");
        Self {
            cells: BTreeMap::new(),
            epoch: 0,
            num_classes,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, sample: u64) -> bool {
        self.cells.contains_key(&sample)
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.cells.keys().copied()
    }

    pub fn cell(&self, sample: u64, view: ViewTag) -> Result<&MemoryCell> {
        self.cells
            .get(&sample)
            .map(|pair| &pair[view.index()])
            .ok_or_else(|| Error::NotFound(format!("sample {sample} not in memory store")))
    }

    fn validated(&self, pred: &[f64]) -> Result<ProbDist> {
        if pred.len() != self.num_classes {
            return Err(Error::Domain(format!(
                "prediction has {} classes, store expects {}",
                pred.len(),
                self.num_classes
            )));
        }
        ProbDist::new(pred.to_vec())
    }

    /// Warm-up write: at epoch `t` in 1..=4, populate unit `j = t` for the
    /// given sample and view. Units below `t` keep their earlier-epoch
    /// values. New samples may only appear at epoch 1.
    pub fn init_unit(&mut self, sample: u64, view: ViewTag, t: u64, pred: &[f64]) -> Result<()> {
        if !(1..=NUM_UNITS as u64).contains(&t) {
            return Err(Error::Domain(format!(
                "init_unit epoch {t} outside warm-up 1..={NUM_UNITS} (sliding phase)"
            )));
        }
        if t != self.epoch + 1 {
            return Err(Error::State(format!(
                "init_unit for epoch {t} but store is at epoch {}",
                self.epoch
            )));
        }
        let pred = self.validated(pred)?;
        let k = self.num_classes;
        let pair = match self.cells.get_mut(&sample) {
            Some(pair) => pair,
            None if t == 1 => self
                .cells
                .entry(sample)
                .or_insert_with(|| [MemoryCell::empty(k), MemoryCell::empty(k)]),
            None => {
                return Err(Error::State(format!(
                    "sample {sample} first seen at epoch {t}; samples must enter at epoch 1"
                )))
            }
        };
        let cell = &mut pair[view.index()];
        if cell.touched == t {
            return Err(Error::State(format!(
                "sample {sample} {} view already written at epoch {t}",
                view.name()
            )));
        }
        if cell.initialized_through as u64 != t - 1 {
            return Err(Error::State(format!(
                "unit {t} cannot be populated: initialized through {}",
                cell.initialized_through
            )));
        }
        cell.units[(t - 1) as usize] = pred;
        cell.initialized_through = t as u8;
        cell.touched = t;
        Ok(())
    }

    /// Sliding write: at epoch `t >= 5`, cascade the fresh prediction through
    /// the four units. Right-hand sides are previous-epoch values; the
    /// in-place ascending order preserves that because row `j` reads only
    /// unit `j+1`.
    pub fn slide_update(&mut self, sample: u64, view: ViewTag, t: u64, pred: &[f64]) -> Result<()> {
        if t < NUM_UNITS as u64 + 1 {
            return Err(Error::Domain(format!(
                "slide_update epoch {t} is in the warm-up range (needs t >= {})",
                NUM_UNITS + 1
            )));
        }
        if t != self.epoch + 1 {
            return Err(Error::State(format!(
                "slide_update for epoch {t} but store is at epoch {}",
                self.epoch
            )));
        }
        let pred = self.validated(pred)?;
        let view_idx = view.index();
        let cell = &mut self
            .cells
            .get_mut(&sample)
            .ok_or_else(|| Error::NotFound(format!("sample {sample} not in memory store")))?
            [view_idx];
        if (cell.initialized_through as usize) < NUM_UNITS {
            return Err(Error::State(format!(
                "cell for sample {sample} only initialized through unit {}",
                cell.initialized_through
            )));
        }
        if cell.touched == t {
            return Err(Error::State(format!(
                "sample {sample} {} view already written at epoch {t}",
                view.name()
            )));
        }
        for j in 1..=NUM_UNITS {
            let (alpha, beta) = weight_schedule(t, j)?;
            let incoming: Vec<f64> = if j < NUM_UNITS {
                cell.units[j].values().to_vec()
            } else {
                pred.values().to_vec()
            };
            let current = &mut cell.units[j - 1];
            let mixed: Vec<f64> = current
                .values()
                .iter()
                .zip(incoming.iter())
                .map(|(&own, &inc)| alpha * own + beta * inc)
                .collect();
            let mut next = ProbDist::from_raw_unchecked(mixed);
            next.renormalize_if_drifted();
            *current = next;
        }
        cell.touched = t;
        Ok(())
    }

    /// Routes to [`init_unit`](Self::init_unit) during warm-up and
    /// [`slide_update`](Self::slide_update) afterwards, for both views.
    pub fn record_sample(
        &mut self,
        sample: u64,
        t: u64,
        weak_pred: &[f64],
        strong_pred: &[f64],
    ) -> Result<()> {
        for (view, pred) in [(ViewTag::Weak, weak_pred), (ViewTag::Strong, strong_pred)] {
            if t <= NUM_UNITS as u64 {
                self.init_unit(sample, view, t, pred)?;
            } else {
                self.slide_update(sample, view, t, pred)?;
            }
        }
        Ok(())
    }

    /// Seals an update round: requires every cell (both views) to have been
    /// written at epoch `t`, then advances the store epoch to `t`.
    pub fn advance_epoch(&mut self, t: u64) -> Result<()> {
        if t != self.epoch + 1 {
            return Err(Error::State(format!(
                "advance to epoch {t} but store is at epoch {}",
                self.epoch
            )));
        }
        for (id, pair) in &self.cells {
            for view in ViewTag::ALL {
                if pair[view.index()].touched != t {
                    return Err(Error::State(format!(
                        "sample {id} {} view missing an epoch-{t} write",
                        view.name()
                    )));
                }
            }
        }
        self.epoch = t;
        Ok(())
    }

    /// Copies of all eight units of `sample` as of the sealed epoch.
    pub fn snapshot(&self, sample: u64) -> Result<Snapshot> {
        let pair = self
            .cells
            .get(&sample)
            .ok_or_else(|| Error::NotFound(format!("sample {sample} not in memory store")))?;
        for view in ViewTag::ALL {
            let cell = &pair[view.index()];
            if (cell.initialized_through as usize) < NUM_UNITS {
                return Err(Error::State(format!(
                    "sample {sample} {} view initialized through {} of {NUM_UNITS} units",
                    view.name(),
                    cell.initialized_through
                )));
            }
        }
        Ok(Snapshot {
            units: [pair[0].units.clone(), pair[1].units.clone()],
        })
    }

    /// Serializes the store. Layout (little-endian): magic `TMS1`, u32
    /// version, u32 K, u64 epoch, u64 sample count, then per sample a u64
    /// sample id followed by 8 x K f64 unit values (weak view then strong,
    /// units 1..=4 each).
    pub fn checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.num_classes as u32).to_le_bytes())?;
        out.write_all(&self.epoch.to_le_bytes())?;
        out.write_all(&(self.cells.len() as u64).to_le_bytes())?;
        for (id, pair) in &self.cells {
            out.write_all(&id.to_le_bytes())?;
            for cell in pair {
                for unit in &cell.units {
                    for &v in unit.values() {
                        out.write_all(&v.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Reconstructs a store from a [`checkpoint`](Self::checkpoint) stream.
    pub fn restore<R: Read>(mut input: R) -> Result<Self> {
        let mut offset = 0usize;
        let mut magic = [0u8; 4];
        read_exact_at(&mut input, &mut magic, &mut offset)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:02x?} at offset 0, expected {:02x?} (\"TMS1\")",
                magic, CHECKPOINT_MAGIC
            )));
        }
        let version = read_u32(&mut input, &mut offset)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version: expected {CHECKPOINT_VERSION}, found {version}"
            )));
        }
        let num_classes = read_u32(&mut input, &mut offset)? as usize;
        if num_classes < 2 {
            return Err(Error::Format(format!(
                "checkpoint declares {num_classes} classes (need >= 2)"
            )));
        }
        let epoch = read_u64(&mut input, &mut offset)?;
        let count = read_u64(&mut input, &mut offset)?;
        let initialized_through = epoch.min(NUM_UNITS as u64) as u8;
        let mut cells = BTreeMap::new();
        for _ in 0..count {
            let id = read_u64(&mut input, &mut offset)?;
            let mut pair: Vec<MemoryCell> = Vec::with_capacity(2);
            for _ in 0..2 {
                let mut units: Vec<ProbDist> = Vec::with_capacity(NUM_UNITS);
                for _ in 0..NUM_UNITS {
                    let mut values = Vec::with_capacity(num_classes);
                    for _ in 0..num_classes {
                        values.push(read_f64(&mut input, &mut offset)?);
                    }
                    units.push(ProbDist::from_raw_unchecked(values));
                }
                pair.push(MemoryCell {
                    units: units.try_into().expect("exactly NUM_UNITS units"),
                    initialized_through,
                    touched: epoch,
                });
            }
            let pair: [MemoryCell; 2] = pair.try_into().expect("exactly two views");
            if cells.insert(id, pair).is_some() {
                return Err(Error::Format(format!(
                    "duplicate sample id {id} before offset {offset}"
                )));
            }
        }
        let mut trailer = [0u8; 1];
        if input.read(&mut trailer)? != 0 {
            return Err(Error::Format(format!(
                "trailing bytes after {offset} expected bytes"
            )));
        }
        Ok(Self {
            cells,
            epoch,
            num_classes,
        })
    }
}

fn read_exact_at<R: Read>(input: &mut R, buf: &mut [u8], offset: &mut usize) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        Error::Format(format!(
            "truncated stream at offset {offset} ({} bytes wanted): {e}",
            buf.len()
        ))
    })?;
    *offset += buf.len();
    Ok(())
}

fn read_u32<R: Read>(input: &mut R, offset: &mut usize) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact_at(input, &mut buf, offset)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(input: &mut R, offset: &mut usize) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact_at(input, &mut buf, offset)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R, offset: &mut usize) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact_at(input, &mut buf, offset)?;
    Ok(f64::from_le_bytes(buf))
}
