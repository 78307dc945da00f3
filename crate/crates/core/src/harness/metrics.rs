use serde::{Deserialize, Serialize};

use super::dataset::{DatasetRow, Gold};
use crate::perception::iou;
use crate::state::Answer;

/// Lowercase, trim, collapse whitespace, drop trailing punctuation and a
/// leading article.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let mut words: Vec<&str> = lower.split_whitespace().collect();
    if let Some(last) = words.last_mut() {
        *last = last.trim_end_matches(|c: char| matches!(c, '.' | ',' | '!' | '?' | ';' | ':'));
        if last.is_empty() {
            words.pop();
        }
    }
    if words.len() > 1 && matches!(words[0], "a" | "an" | "the") {
        words.remove(0);
    }
    words.join(" ")
}

/// Metric `m` for one answer and whether it counts as related:
/// normalized exact match for text, IoU above zero for boxes.
pub fn score(answer: &Answer, gold: &Gold) -> (f64, bool) {
    match (answer, gold) {
        (Answer::Text { text }, Gold::Text(g)) => {
            let hit = normalize_answer(text) == normalize_answer(g);
            (if hit { 1.0 } else { 0.0 }, hit)
        }
        (Answer::Box { bbox }, Gold::Box(g)) => {
            let m = iou(bbox, g);
            (m, m > 0.0)
        }
        _ => (0.0, false),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub id: String,
    pub pred: Option<String>,
    pub gold: String,
    /// Exact match (0 or 1) for VQA rows, IoU for grounding rows.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou_at_50: Option<f64>,
    pub rows: Vec<RowResult>,
}

impl MetricReport {
    /// Aggregates `answers[i]` against `rows[i]`.
    pub fn build(rows: &[DatasetRow], answers: &[Answer]) -> Self {
        let mut results = Vec::with_capacity(rows.len());
        let (mut vqa_hits, mut vqa_n) = (0.0, 0usize);
        let (mut iou_sum, mut iou_50, mut box_n) = (0.0, 0usize, 0usize);
        for (row, answer) in rows.iter().zip(answers) {
            let (m, _) = score(answer, &row.gold);
            match row.gold {
                Gold::Text(_) => {
                    vqa_hits += m;
                    vqa_n += 1;
                }
                Gold::Box(_) => {
                    iou_sum += m;
                    box_n += 1;
                    if m >= 0.5 {
                        iou_50 += 1;
                    }
                }
            }
            results.push(RowResult { id: row.id.clone(), pred: answer.display(), gold: row.gold.display(), score: m });
        }
        let frac = |num: f64, n: usize| (n > 0).then(|| num / n as f64);
        Self {
            accuracy: frac(vqa_hits, vqa_n),
            mean_iou: frac(iou_sum, box_n),
            iou_at_50: frac(iou_50 as f64, box_n),
            rows: results,
        }
    }
}
