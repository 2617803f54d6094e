use crate::error::{Error, Result};
use crate::qoi::{ErrorBound, GUARD};

use super::{decoder_for, OutlierMask, SegmentDecoder, SegmentStore, VariableRecord};

/// Segments to fetch for one target bound.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub ids: Vec<usize>,
    /// The target is tighter than anything the store can deliver; the plan
    /// goes to full fidelity instead.
    pub exhausted: bool,
}

/// Pure planning over a bound sequence.
///
/// `achieved` is the current bound and `cursor` the first segment not yet
/// consumed. Prefix codecs return `cursor..=j` for the smallest `j` whose
/// bound meets `target`; independent codecs return just `[j]`.
pub fn plan_ids(
    nominal: &[f64],
    independent: bool,
    achieved: f64,
    cursor: usize,
    target: f64,
) -> Plan {
    if achieved <= target || cursor >= nominal.len() {
        return Plan {
            ids: Vec::new(),
            exhausted: achieved > target,
        };
    }
    let hit = (cursor..nominal.len()).find(|&j| nominal[j] <= target);
    let (j, exhausted) = match hit {
        Some(j) => (j, false),
        None => (nominal.len() - 1, true),
    };
    let ids = if independent {
        vec![j]
    } else {
        (cursor..=j).collect()
    };
    Plan { ids, exhausted }
}

/// Progressive reconstruction of one variable.
pub struct RetrievalState {
    name: String,
    values: Vec<f64>,
    nominal: Vec<f64>,
    independent: bool,
    initial: f64,
    achieved: f64,
    cursor: usize,
    consumed: Vec<usize>,
    bytes_read: u64,
    /// Dense-to-full index map, `None` when nothing is masked.
    unmasked: Option<Vec<usize>>,
    mask: Option<OutlierMask>,
    decoder: Option<Box<dyn SegmentDecoder>>,
}

impl std::fmt::Debug for RetrievalState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RetrievalState")
            .field("name", &self.name)
            .field("achieved", &self.achieved)
            .field("cursor", &self.cursor)
            .field("consumed", &self.consumed)
            .field("bytes_read", &self.bytes_read)
            .finish_non_exhaustive()
    }
}

impl RetrievalState {
    /// Starts a reconstruction at the stored midpoint. Reading the mask
    /// counts toward the retrieved bytes.
    pub fn open(store: &SegmentStore, name: &str) -> Result<Self> {
        let rec = store.variable(name)?;
        let mask = store.read_mask(name)?;
        let bytes_read = rec.mask.as_ref().map_or(0, |m| m.bytes);

        let dense_len = rec.unmasked_len();
        let mid = rec.min + 0.5 * (rec.max - rec.min);
        let init = if dense_len == 0 || rec.value_range == 0.0 {
            0.0
        } else {
            (rec.max - mid).max(mid - rec.min) * GUARD
        };
        let constant = rec.mask.as_ref().map_or(0.0, |m| m.constant);
        let values = match &mask {
            None => vec![mid; rec.n_e],
            Some(m) => (0..rec.n_e)
                .map(|i| if m.get(i) { constant } else { mid })
                .collect(),
        };
        let unmasked = mask.as_ref().map(OutlierMask::unmasked_indices);
        let decoder = if dense_len > 0 && rec.value_range > 0.0 {
            Some(decoder_for(rec.codec, &rec.metadata_bytes()?, dense_len)?)
        } else {
            None
        };
        Ok(RetrievalState {
            name: name.to_string(),
            values,
            nominal: rec.segments.iter().map(|s| s.nominal_bound).collect(),
            independent: rec.codec.is_independent(),
            initial: init,
            achieved: init,
            cursor: 0,
            consumed: Vec::new(),
            bytes_read,
            unmasked,
            mask,
            decoder,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn achieved(&self) -> f64 {
        self.achieved
    }

    pub fn achieved_bound(&self) -> ErrorBound {
        ErrorBound::finite(self.achieved)
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn consumed(&self) -> &[usize] {
        &self.consumed
    }

    pub fn bytes_read(&self) -> u64 {
        self.bytes_read
    }

    pub fn mask(&self) -> Option<&OutlierMask> {
        self.mask.as_ref()
    }

    /// Tightest bound the store can deliver.
    pub fn floor(&self) -> f64 {
        self.nominal.last().map_or(0.0, |&b| b.min(self.achieved))
    }

    /// Bound that a fresh reconstruction to `target` is guaranteed to reach,
    /// whatever this state has fetched already.
    pub fn bound_for(&self, target: f64) -> f64 {
        if self.initial <= target {
            return self.initial;
        }
        match self.nominal.iter().copied().find(|&b| b <= target) {
            Some(b) => b,
            None => self
                .nominal
                .last()
                .map_or(self.initial, |&b| b.min(self.initial)),
        }
    }

    /// Nothing left that could tighten the reconstruction.
    pub fn at_full_fidelity(&self) -> bool {
        self.achieved == 0.0 || self.cursor >= self.nominal.len()
    }

    pub fn plan(&self, target: f64) -> Plan {
        plan_ids(
            &self.nominal,
            self.independent,
            self.achieved,
            self.cursor,
            target,
        )
    }

    /// Consumes the segments needed to reach `target` (0 asks for full
    /// fidelity) and returns the plan that was executed.
    pub fn reconstruct(&mut self, store: &SegmentStore, target: f64) -> Result<Plan> {
        if !(target >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "target bound for `{}` must be >= 0, got {target}",
                self.name
            )));
        }
        let plan = self.plan(target);
        if plan.ids.is_empty() {
            return Ok(plan);
        }
        let rec: &VariableRecord = store.variable(&self.name)?;
        for &id in &plan.ids {
            let payload = store.read_segment(&self.name, id)?;
            match self.decoder.as_mut() {
                Some(d) => d.apply(id, &payload)?,
                None if payload.is_empty() => {}
                None => {
                    return Err(Error::CorruptPayload(format!(
                        "`{}` segment {id} should be empty",
                        self.name
                    )))
                }
            }
            self.bytes_read += rec.segments[id].bytes;
            self.consumed.push(id);
        }
        let last = *plan.ids.last().expect("non-empty plan");
        self.cursor = last + 1;
        self.achieved = self.nominal[last];
        if let Some(d) = &self.decoder {
            let dense = d.values();
            match &self.unmasked {
                None => self.values = dense,
                Some(idx) => {
                    for (&i, v) in idx.iter().zip(dense) {
                        self.values[i] = v;
                    }
                }
            }
        }
        Ok(plan)
    }
}
