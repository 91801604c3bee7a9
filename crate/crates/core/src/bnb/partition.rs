use std::sync::Arc;

use crate::hierarchy::{min_activity_likelihoods, HcsspModel};

use super::BnbError;

/// Axis-aligned box in budget-allocation space: one interval per
/// constrained `(activity, cost index)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    keys: Arc<Vec<(usize, usize)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Partition {
    pub fn new(keys: Vec<(usize, usize)>, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(keys.len(), lo.len());
        assert_eq!(keys.len(), hi.len());
        Self {
            keys: Arc::new(keys),
            lo,
            hi,
        }
    }

    pub fn keys(&self) -> &[(usize, usize)] {
        &self.keys
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dims(&self) -> usize {
        self.keys.len()
    }

    pub fn interval(&self, activity: usize, index: usize) -> Option<(f64, f64)> {
        self.keys
            .iter()
            .position(|&k| k == (activity, index))
            .map(|i| (self.lo[i], self.hi[i]))
    }

    /// Largest half-length of the sides.
    pub fn radius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (h - l))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }
}

/// `[0, bound / L(E)]` for every constrained pair, where `L(E)` is the
/// smallest positive likelihood of the activity. Keys are ordered by
/// activity id, then cost index. Constraints with an infinite bound do not
/// restrict anything and get no dimension.
pub fn initial_partition(model: &HcsspModel) -> Result<Partition, BnbError> {
    let mins = min_activity_likelihoods(model)?;
    let mut entries = Vec::new();
    for c in model.constraints() {
        if !c.bound.is_finite() {
            continue;
        }
        for &(e, i) in &c.members {
            let l =
                mins[e].ok_or_else(|| BnbError::NeverActivated(model.activity(e).id.clone()))?;
            entries.push(((e, i), c.bound / l));
        }
    }
    entries.sort_by(|a, b| {
        let (ea, ia) = a.0;
        let (eb, ib) = b.0;
        model
            .activity(ea)
            .id
            .cmp(&model.activity(eb).id)
            .then(ia.cmp(&ib))
    });
    let keys = entries.iter().map(|(k, _)| *k).collect();
    let hi = entries.iter().map(|&(_, h)| h).collect();
    Ok(Partition::new(keys, vec![0.0; entries.len()], hi))
}

/// Bisects the first longest side at its midpoint.
pub fn split_longest_edge(q: &Partition) -> Result<(Partition, Partition), BnbError> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..q.dims() {
        let len = q.hi[i] - q.lo[i];
        if len > 0.0 && best.is_none_or(|(_, b)| len > b) {
            best = Some((i, len));
        }
    }
    let (i, _) = best.ok_or(BnbError::DegeneratePartition)?;
    let mid = 0.5 * (q.lo[i] + q.hi[i]);
    let mut left = q.clone();
    let mut right = q.clone();
    left.hi[i] = mid;
    right.lo[i] = mid;
    Ok((left, right))
}
