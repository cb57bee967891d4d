use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{load_manifest_graphs, Manifest, Model, PipelineError, Result};
use crate::depgraph::Label;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Rank-based (Mann–Whitney) AUROC; tied scores share their average rank,
/// which counts each tied positive/negative pair as one half.
pub fn auroc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let pos = labels.iter().filter(|&&l| l == Label::Malicious).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(PipelineError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the positive rank sum keeps half ranks integral.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average (i + j + 2) / 2.
        let tied_pos = order[i..=j]
            .iter()
            .filter(|&&k| labels[k] == Label::Malicious)
            .count() as u64;
        twice_rank_sum += tied_pos * (i + j + 2) as u64;
        i = j + 1;
    }
    let (p, n) = (pos as u64, neg as u64);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Threshold metrics with malicious as the positive class; a score equal to
/// the threshold predicts malicious.
pub fn metrics(scores: &[f64], labels: &[Label], threshold: f64) -> BinaryMetrics {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        let actual = l == Label::Malicious;
        correct += usize::from(predicted == actual);
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    BinaryMetrics {
        acc: ratio(correct, scores.len()),
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub samples: usize,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    /// Absent when the evaluated set holds a single class.
    pub auroc: Option<f64>,
    pub f1: f64,
    pub per_family: BTreeMap<String, FamilyStats>,
    pub threshold: f64,
}

/// Builds a report from aligned scores, labels and family names.
pub fn evaluate(scores: &[f64], labels: &[Label], families: &[String]) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(PipelineError::TooFewSamples("nothing to evaluate".into()));
    }
    assert_eq!(scores.len(), families.len(), "scores and families must align");
    let m = metrics(scores, labels, DEFAULT_THRESHOLD);
    let auroc = match auroc(scores, labels) {
        Ok(a) => Some(a),
        Err(PipelineError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ((&s, &l), f) in scores.iter().zip(labels).zip(families) {
        let c = counts.entry(f).or_default();
        c.0 += 1;
        c.1 += usize::from((s >= DEFAULT_THRESHOLD) == (l == Label::Malicious));
    }
    let per_family = counts
        .into_iter()
        .map(|(f, (n, ok))| {
            (
                f.to_string(),
                FamilyStats {
                    samples: n,
                    acc: ok as f64 / n as f64,
                },
            )
        })
        .collect();
    Ok(EvalReport {
        acc: m.acc,
        auroc,
        f1: m.f1,
        per_family,
        threshold: DEFAULT_THRESHOLD,
    })
}

/// Scores every manifest entry and reports overall and per-family metrics.
pub fn eval_per_family(model: &Model, test: &Manifest) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(PipelineError::TooFewSamples("empty evaluation manifest".into()));
    }
    let graphs = load_manifest_graphs(test)?;
    let scores = model.score_graphs(&graphs)?;
    let labels: Vec<Label> = test.entries.iter().map(|e| e.label).collect();
    let families: Vec<String> = test.entries.iter().map(|e| e.family.clone()).collect();
    evaluate(&scores, &labels, &families)
}
