//! Per-label counts and macro F1.

use serde::{Deserialize, Serialize};

use crate::corpus::RelationId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// Accumulates per-label true positives, false positives, and false negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub counts: Vec<Counts>,
    /// Whether the label occurred in any gold set seen so far.
    pub in_gold: Vec<bool>,
    pub instances: usize,
}

impl LabelCounts {
    pub fn new(labels: usize) -> Self {
        Self { counts: vec![Counts::default(); labels], in_gold: vec![false; labels], instances: 0 }
    }

    pub fn add(&mut self, predicted: &[RelationId], gold: &[RelationId]) {
        self.add_within(predicted, gold, |_| true);
    }

    /// Counts only labels for which `scored` holds.
    pub fn add_within(&mut self, predicted: &[RelationId], gold: &[RelationId], scored: impl Fn(RelationId) -> bool) {
        self.instances += 1;
        for &g in gold {
            self.in_gold[g.0] = true;
        }
        for (i, c) in self.counts.iter_mut().enumerate() {
            let id = RelationId(i);
            if !scored(id) {
                continue;
            }
            match (predicted.contains(&id), gold.contains(&id)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }

    pub fn merge(&mut self, other: &LabelCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
        for (a, b) in self.in_gold.iter_mut().zip(&other.in_gold) {
            *a |= b;
        }
        self.instances += other.instances;
    }

    /// F1 of each label occurring in the gold data, `None` for the rest.
    pub fn per_label(&self) -> Vec<Option<f64>> {
        self.counts.iter().zip(&self.in_gold).map(|(c, &g)| g.then(|| c.f1())).collect()
    }

    /// Unweighted mean of per-label F1 over labels occurring in the gold data.
    pub fn macro_f1(&self) -> f64 {
        let scores: Vec<f64> = self.per_label().into_iter().flatten().collect();
        if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        }
    }
}
