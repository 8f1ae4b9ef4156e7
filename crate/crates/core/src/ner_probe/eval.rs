//! Entity-level precision/recall/F1 with alternative gold boundaries.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::corpus::{EntitySpan, GoldEntity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SentencePrediction {
    pub sentence_id: String,
    pub spans: Vec<EntitySpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Score predictions against gold entities. Every sentence holding a gold
/// entity must have a prediction entry (possibly empty).
///
/// Predictions are matched one-to-one in `(start, end)` order. A prediction
/// is credited to the first unmatched gold entity of the same label whose
/// primary span equals it, otherwise to the first one listing it as an
/// alternative.
pub fn evaluate(predictions: &[SentencePrediction], gold: &[GoldEntity]) -> Result<EvalReport> {
    let mut by_sentence: BTreeMap<&str, Vec<&GoldEntity>> = BTreeMap::new();
    for g in gold {
        by_sentence.entry(g.sentence_id.as_str()).or_default().push(g);
    }
    for entities in by_sentence.values_mut() {
        entities.sort_by(|a, b| (a.span, &a.label).cmp(&(b.span, &b.label)));
    }

    let mut seen = HashSet::new();
    for p in predictions {
        if !seen.insert(p.sentence_id.as_str()) {
            return Err(Error::validation(format!("duplicate predictions for sentence {:?}", p.sentence_id)));
        }
    }
    if let Some(missing) = by_sentence.keys().find(|id| !seen.contains(*id)) {
        return Err(Error::validation(format!("unknown sentence id {missing:?}: no prediction entry")));
    }

    let (mut tp, mut fp) = (0, 0);
    let mut matched_total = 0;
    for p in predictions {
        let candidates = by_sentence.get(p.sentence_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let mut used = vec![false; candidates.len()];
        let mut spans: Vec<&EntitySpan> = p.spans.iter().collect();
        spans.sort_by(|a, b| (a.start, a.end, &a.label).cmp(&(b.start, b.end, &b.label)));
        for span in spans {
            let key = (span.start, span.end);
            let open = |(k, g): &(usize, &&GoldEntity)| !used[*k] && g.label == span.label;
            let hit = candidates
                .iter()
                .enumerate()
                .filter(open)
                .find(|(_, g)| g.span == key)
                .or_else(|| candidates.iter().enumerate().filter(open).find(|(_, g)| g.accepts(key)))
                .map(|(k, _)| k);
            match hit {
                Some(k) => {
                    used[k] = true;
                    tp += 1;
                    matched_total += 1;
                }
                None => fp += 1,
            }
        }
    }
    Ok(EvalReport::from_counts(tp, fp, gold.len() - matched_total))
}
