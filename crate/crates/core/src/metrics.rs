//! Micro-averaged precision/recall/F1 over (predicate, argument, role)
//! tuples, split into intra- and cross-utterance arguments.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{ArgumentSpan, Frame};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn merge(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleCounts {
    pub all: Counts,
    pub intra: Counts,
    pub cross: Counts,
}

impl TupleCounts {
    pub fn merge(&mut self, other: &TupleCounts) {
        self.all.merge(other.all);
        self.intra.merge(other.intra);
        self.cross.merge(other.cross);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Score {
    pub fn from_counts(c: Counts) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Score {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub all: Score,
    pub intra: Score,
    pub cross: Score,
}

impl Metrics {
    pub fn from_counts(c: &TupleCounts) -> Self {
        Metrics {
            all: Score::from_counts(c.all),
            intra: Score::from_counts(c.intra),
            cross: Score::from_counts(c.cross),
        }
    }
}

type Tuple = (usize, usize, usize, String);

fn tuples(args: &[ArgumentSpan]) -> BTreeSet<Tuple> {
    args.iter()
        .map(|a| (a.utt_index, a.span.start, a.span.end, a.role.clone()))
        .collect()
}

/// Counts for one instance. The predicate is fixed per instance, so a tuple
/// is identified by (argument utterance, offsets, role).
pub fn score_instance(gold: &Frame, predicted: &[ArgumentSpan]) -> TupleCounts {
    let gold_set = tuples(&gold.arguments);
    let pred_set = tuples(predicted);
    let mut out = TupleCounts::default();
    let mut bump = |t: &Tuple, f: fn(&mut Counts)| {
        f(&mut out.all);
        if t.0 == gold.predicate_utt {
            f(&mut out.intra);
        } else {
            f(&mut out.cross);
        }
    };
    for t in &pred_set {
        if gold_set.contains(t) {
            bump(t, |c| c.tp += 1);
        } else {
            bump(t, |c| c.fp += 1);
        }
    }
    for t in gold_set.difference(&pred_set) {
        bump(t, |c| c.fn_ += 1);
    }
    out
}

/// Pools counts over paired gold frames and predictions.
pub fn score(gold: &[&Frame], predicted: &[Vec<ArgumentSpan>]) -> TupleCounts {
    assert_eq!(gold.len(), predicted.len(), "one prediction per gold frame");
    let mut total = TupleCounts::default();
    for (g, p) in gold.iter().zip(predicted) {
        total.merge(&score_instance(g, p));
    }
    total
}
