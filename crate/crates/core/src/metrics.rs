//! Evaluation metrics and the predictions file they are computed from.
//!
//! A predictions file is JSON lines, one record per seed in split order:
//! `{"seed_id": "test:17", "score": 0.83}`. Foreign-key tasks give
//! `"scores"`: the positive candidate first, then the seed's negatives in the
//! order they were exported. Classification may give `"class"` instead of a
//! score.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{LabelValue, Seed};
use crate::task::{Metric, Split};

fn finite(xs: &[f64], what: &str) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Data(format!("{what}[{i}] is not finite"))),
        None => Ok(()),
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting half.
/// Tied scores share their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    finite(scores, "score")?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mean_rank = (i + j + 2) as f64 / 2.0;
        rank_sum += mean_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean reciprocal rank. Each query lists `(score, is_positive)` candidates
/// with exactly one positive, ranked by descending score; negatives tied
/// with the positive rank ahead of it.
pub fn mrr(queries: &[Vec<(f64, bool)>]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Data("MRR over zero queries".into()));
    }
    let mut total = 0.0;
    for (q, cands) in queries.iter().enumerate() {
        let mut positives = cands.iter().filter(|c| c.1);
        let (Some(&(p, _)), None) = (positives.next(), positives.next()) else {
            return Err(Error::Data(format!("query {q} must have exactly one positive")));
        };
        if cands.iter().any(|c| !c.0.is_finite()) {
            return Err(Error::Data(format!("query {q} has a non-finite score")));
        }
        let ahead = cands.iter().filter(|c| !c.1 && c.0 >= p).count();
        total += 1.0 / (1 + ahead) as f64;
    }
    Ok(total / queries.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Data(format!("RMSE over {} predictions and {} targets", pred.len(), truth.len())));
    }
    finite(pred, "prediction")?;
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Data(format!("accuracy over {} predictions and {} targets", pred.len(), truth.len())));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub seed_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<LabelValue>,
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut out = Vec::new();
    for p in predictions {
        serde_json::to_writer(&mut out, p).expect("predictions serialize");
        out.write_all(b"\n").expect("in-memory write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
    pub split: Split,
}

fn label(seed: &Seed) -> Result<&LabelValue> {
    seed.label_ref
        .as_ref()
        .and_then(|l| l.value.as_ref())
        .ok_or_else(|| Error::Data(format!("seed `{}` has no label", seed.id)))
}

fn missing(p: &Prediction, field: &str) -> Error {
    Error::Data(format!("prediction for `{}` has no `{field}`", p.seed_id))
}

/// Scores predictions against labeled seeds. Predictions must list exactly
/// the seeds' ids, in the same order.
pub fn evaluate(
    metric: Metric,
    split: Split,
    seeds: &[Seed],
    negatives: Option<&[Vec<u32>]>,
    predictions: &[Prediction],
) -> Result<EvaluationReport> {
    if seeds.len() != predictions.len() {
        return Err(Error::Data(format!("{} predictions for {} seeds", predictions.len(), seeds.len())));
    }
    if let Some((s, p)) = seeds.iter().zip(predictions).find(|(s, p)| s.id != p.seed_id) {
        return Err(Error::Data(format!("prediction `{}` where seed `{}` was expected", p.seed_id, s.id)));
    }
    let value = match metric {
        Metric::Auc => {
            let mut scores = Vec::with_capacity(seeds.len());
            let mut labels = Vec::with_capacity(seeds.len());
            for (s, p) in seeds.iter().zip(predictions) {
                scores.push(p.score.ok_or_else(|| missing(p, "score"))?);
                labels.push(match label(s)?.as_f64() {
                    Some(v) if v == 0.0 || v == 1.0 => v == 1.0,
                    _ => return Err(Error::Data(format!("seed `{}`: AUC needs a 0/1 label", s.id))),
                });
            }
            auc(&scores, &labels)?
        }
        Metric::Rmse => {
            let mut pred = Vec::with_capacity(seeds.len());
            let mut truth = Vec::with_capacity(seeds.len());
            for (s, p) in seeds.iter().zip(predictions) {
                pred.push(p.score.ok_or_else(|| missing(p, "score"))?);
                truth.push(
                    label(s)?
                        .as_f64()
                        .ok_or_else(|| Error::Data(format!("seed `{}`: RMSE needs a numeric label", s.id)))?,
                );
            }
            rmse(&pred, &truth)?
        }
        Metric::Accuracy => {
            let mut pred = Vec::with_capacity(seeds.len());
            let mut truth = Vec::with_capacity(seeds.len());
            for (s, p) in seeds.iter().zip(predictions) {
                let class = match (&p.class, p.score) {
                    (Some(c), _) => c.clone(),
                    (None, Some(score)) => LabelValue::Int((score >= 0.5) as i64),
                    (None, None) => return Err(missing(p, "class")),
                };
                pred.push(class);
                truth.push(label(s)?.clone());
            }
            accuracy(&pred, &truth)?
        }
        Metric::Mrr => {
            let negatives = negatives.ok_or_else(|| Error::Data("MRR needs the seeds' negatives".into()))?;
            let queries = predictions
                .iter()
                .zip(negatives)
                .map(|(p, neg)| {
                    let scores = p.scores.as_ref().ok_or_else(|| missing(p, "scores"))?;
                    if scores.len() != neg.len() + 1 {
                        return Err(Error::Data(format!(
                            "`{}`: {} scores for 1 positive and {} negatives",
                            p.seed_id,
                            scores.len(),
                            neg.len()
                        )));
                    }
                    Ok(scores.iter().enumerate().map(|(i, &s)| (s, i == 0)).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            mrr(&queries)?
        }
    };
    Ok(EvaluationReport {
        metric,
        value,
        n: seeds.len(),
        split,
    })
}

/// A scorer that ignores its input: score 0.5, class 0, all candidates tied.
pub fn constant_predictions(seeds: &[Seed], negatives: Option<&[Vec<u32>]>) -> Vec<Prediction> {
    seeds
        .iter()
        .enumerate()
        .map(|(k, s)| Prediction {
            seed_id: s.id.clone(),
            score: Some(0.5),
            scores: negatives.map(|n| vec![0.0; n[k].len() + 1]),
            class: Some(LabelValue::Int(0)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_hand_example() {
        let v = auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((v - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_extremes_and_ties() {
        assert_eq!(auc(&[0.0, 1.0], &[false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }

    #[test]
    fn mrr_hand_examples() {
        let q1 = vec![(0.9, true), (0.1, false)];
        let q2 = vec![(0.1, true), (0.5, false), (0.6, false), (0.7, false)];
        assert!((mrr(&[q1, q2]).unwrap() - 0.625).abs() < 1e-12);
        let tied: Vec<(f64, bool)> = (0..101).map(|i| (1.0, i == 0)).collect();
        assert!((mrr(&[tied]).unwrap() - 1.0 / 101.0).abs() < 1e-12);
        assert!(mrr(&[vec![(1.0, false)]]).is_err());
    }

    #[test]
    fn rmse_and_accuracy() {
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        let truth = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((rmse(&[3.0; 5], &truth).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert_eq!(accuracy(&[1, 1], &[0, 0]).unwrap(), 0.0);
    }
}
