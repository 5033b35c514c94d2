//! Retrieval evaluation (mAP, R@k) and correlation statistics.

use std::collections::HashSet;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{FeatureTable, PairSet};
use crate::error::{Error, Result};
use crate::model::DualEncoder;

/// One query's ranked candidate items (descending similarity) together
/// with its relevant set.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub items: Vec<String>,
    pub relevant: HashSet<String>,
}

impl RankedList {
    /// Validates uniqueness of items and that every relevant id appears
    /// among them.
    pub fn new(query_id: String, items: Vec<String>, relevant: HashSet<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(item.as_str()) {
                return Err(Error::record(format!(
                    "query {query_id:?}: duplicate item {item:?}"
                )));
            }
        }
        for r in &relevant {
            if !seen.contains(r.as_str()) {
                return Err(Error::record(format!(
                    "query {query_id:?}: relevant id {r:?} not among ranked items"
                )));
            }
        }
        Ok(Self {
            query_id,
            items,
            relevant,
        })
    }
}

/// Ranks candidate `(id, score)` pairs by descending score; ties broken by
/// ascending id for determinism across runs and platforms.
pub fn rank_by_score(mut scored: Vec<(String, f64)>) -> Vec<String> {
    scored.sort_by(|(ida, sa), (idb, sb)| sb.total_cmp(sa).then_with(|| ida.cmp(idb)));
    scored.into_iter().map(|(id, _)| id).collect()
}

/// Average precision: the mean, over relevant items, of the precision at
/// each relevant item's rank.
pub fn average_precision(list: &RankedList) -> Result<f64> {
    if list.relevant.is_empty() {
        return Err(Error::degenerate(format!(
            "query {:?}: empty relevant set",
            list.query_id
        )));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (idx, item) in list.items.iter().enumerate() {
        if list.relevant.contains(item) {
            hits += 1;
            total += hits as f64 / (idx + 1) as f64;
        }
    }
    Ok(total / list.relevant.len() as f64)
}

/// Unweighted mean of per-query average precision.
pub fn mean_ap(lists: &[RankedList]) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::degenerate("mean AP of zero queries".to_string()));
    }
    let mut total = 0.0;
    for list in lists {
        total += average_precision(list)?;
    }
    Ok(total / lists.len() as f64)
}

/// Fraction of the query's relevant items found in the top `k` results.
/// A `k` larger than the candidate pool counts over the whole pool.
pub fn recall_at_k(list: &RankedList, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("recall cutoff k must be >= 1".to_string()));
    }
    if list.relevant.is_empty() {
        return Err(Error::degenerate(format!(
            "query {:?}: empty relevant set",
            list.query_id
        )));
    }
    let cutoff = k.min(list.items.len());
    let found = list.items[..cutoff]
        .iter()
        .filter(|item| list.relevant.contains(item.as_str()))
        .count();
    Ok(found as f64 / list.relevant.len() as f64)
}

/// A correlation coefficient with its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

fn check_correlation_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
            context: "correlation inputs".to_string(),
        });
    }
    if x.len() < 3 {
        return Err(Error::config(format!(
            "correlation needs n >= 3 samples, got {}",
            x.len()
        )));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().all(|e| *e == v[0]) {
            return Err(Error::degenerate(format!(
                "correlation undefined for constant input {name}"
            )));
        }
    }
    Ok(())
}

fn raw_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Two-sided p-value for a correlation coefficient via the t
/// approximation: `t = r sqrt((n-2) / (1-r^2))` with `n - 2` degrees of
/// freedom.
fn t_approx_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if (1.0 - r * r) <= 0.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Standard sample Pearson correlation with a t-approximation p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_correlation_inputs(x, y)?;
    let r = raw_pearson(x, y);
    Ok(CorrelationResult {
        coefficient: r,
        p_value: t_approx_p(r, x.len()),
        n: x.len(),
    })
}

/// Average ranks (ties get the mean of their positions, 1-based).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank-order correlation: Pearson on average-ranked data, with
/// the same t-approximation p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_correlation_inputs(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = raw_pearson(&rx, &ry);
    Ok(CorrelationResult {
        coefficient: rho,
        p_value: t_approx_p(rho, x.len()),
        n: x.len(),
    })
}

/// mAP and mean R@k of one evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RetrievalScores {
    pub map: f64,
    pub recall: f64,
}

/// Ranks every audio row for each paired caption by encoder cosine and
/// reports mAP and mean R@k, with the caption's positive audio as the
/// relevant set.
pub fn evaluate_retrieval(
    enc: &DualEncoder,
    audio: &FeatureTable,
    captions: &FeatureTable,
    pairs: &PairSet,
    k: usize,
) -> Result<RetrievalScores> {
    let lists = rank_all_queries(enc, audio, captions, pairs)?;
    let map = mean_ap(&lists)?;
    let mut recall = 0.0;
    for list in &lists {
        recall += recall_at_k(list, k)?;
    }
    Ok(RetrievalScores {
        map,
        recall: recall / lists.len() as f64,
    })
}

/// Per-caption rankings of the full audio pool, for every paired caption.
pub fn rank_all_queries(
    enc: &DualEncoder,
    audio: &FeatureTable,
    captions: &FeatureTable,
    pairs: &PairSet,
) -> Result<Vec<RankedList>> {
    if pairs.is_empty() {
        return Err(Error::degenerate("no query captions to evaluate".to_string()));
    }
    // Project the audio pool once.
    let mut audio_embeddings = Vec::with_capacity(audio.len());
    for (id, features) in audio.iter() {
        audio_embeddings.push((id.to_string(), enc.audio_head.embed(features)?));
    }
    let mut lists = Vec::with_capacity(pairs.len());
    for (caption_id, positive) in pairs.iter() {
        let caption_features = captions.require(caption_id, "caption features for retrieval")?;
        let c = enc.text_head.embed(caption_features)?;
        let mut scored = Vec::with_capacity(audio_embeddings.len());
        let mut has_positive = false;
        for (audio_id, a) in &audio_embeddings {
            has_positive |= audio_id == positive;
            let sim = crate::model::cosine(a.as_slice().unwrap(), c.as_slice().unwrap())?;
            scored.push((audio_id.clone(), sim));
        }
        if !has_positive {
            return Err(Error::MissingId {
                id: positive.to_string(),
                context: format!("positive audio of caption {caption_id:?} not in the pool"),
            });
        }
        let items = rank_by_score(scored);
        lists.push(RankedList::new(
            caption_id.to_string(),
            items,
            HashSet::from([positive.to_string()]),
        )?);
    }
    Ok(lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ranked(items: &[&str], relevant: &[&str]) -> RankedList {
        RankedList::new(
            "q".to_string(),
            items.iter().map(|s| s.to_string()).collect(),
            relevant.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ap_single_relevant_at_rank_one() {
        let list = ranked(&["a", "b", "c"], &["a"]);
        assert_eq!(average_precision(&list).unwrap(), 1.0);
    }

    #[test]
    fn ap_single_relevant_at_rank_three() {
        let list = ranked(&["a", "b", "c"], &["c"]);
        assert_abs_diff_eq!(average_precision(&list).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn ap_perfect_prefix() {
        let list = ranked(&["a", "b", "c", "d", "e"], &["a", "b"]);
        assert_eq!(average_precision(&list).unwrap(), 1.0);
    }

    #[test]
    fn ap_rejects_empty_relevant() {
        let list = ranked(&["a", "b"], &[]);
        assert!(average_precision(&list).is_err());
    }

    #[test]
    fn mean_ap_is_unweighted() {
        let lists = vec![ranked(&["a"], &["a"]), ranked(&["a", "b", "c"], &["c"])];
        assert_abs_diff_eq!(mean_ap(&lists).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn mean_ap_all_relevant_last() {
        // 5 queries, each with its single relevant item at rank 5 of 5
        let lists: Vec<RankedList> = (0..5)
            .map(|_| ranked(&["a", "b", "c", "d", "e"], &["e"]))
            .collect();
        assert_abs_diff_eq!(mean_ap(&lists).unwrap(), 1.0 / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn recall_at_k_cases() {
        let items: Vec<String> = (0..12).map(|i| format!("a{i:02}")).collect();
        let items_ref: Vec<&str> = items.iter().map(String::as_str).collect();
        // single relevant inside top-10
        let l = ranked(&items_ref, &["a03"]);
        assert_eq!(recall_at_k(&l, 10).unwrap(), 1.0);
        // single relevant at rank 11
        let l = ranked(&items_ref, &["a10"]);
        assert_eq!(recall_at_k(&l, 10).unwrap(), 0.0);
        // two relevant, one inside, one outside
        let l = ranked(&items_ref, &["a03", "a11"]);
        assert_eq!(recall_at_k(&l, 10).unwrap(), 0.5);
        // k beyond the pool counts the whole pool
        let l = ranked(&items_ref, &["a11"]);
        assert_eq!(recall_at_k(&l, 100).unwrap(), 1.0);
    }

    #[test]
    fn spearman_monotone_orders() {
        let r = spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert_abs_diff_eq!(r.coefficient, 1.0, epsilon = 1e-15);
        let r = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(r.coefficient, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn spearman_rejects_constant_input() {
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn spearman_is_invariant_under_monotone_maps() {
        let x: [f64; 6] = [0.3, -1.2, 2.4, 0.9, 1.1, -0.5];
        let y: [f64; 6] = [1.0, 0.2, 0.8, 2.0, -0.3, 0.6];
        let fx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let gy: Vec<f64> = y.iter().map(|v| v.powi(3) + 5.0 * v).collect();
        let a = spearman(&x, &y).unwrap();
        let b = spearman(&fx, &gy).unwrap();
        assert_abs_diff_eq!(a.coefficient, b.coefficient, epsilon = 1e-12);
    }

    #[test]
    fn pearson_affine_relations() {
        let x = [1.0, 2.0, 5.0, 3.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let r = pearson(&x, &y).unwrap();
        assert_abs_diff_eq!(r.coefficient, 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let r = pearson(&x, &neg).unwrap();
        assert_abs_diff_eq!(r.coefficient, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_affine_invariance() {
        let x = [0.1, 0.9, -0.4, 1.3, 0.0];
        let y = [2.0, -1.0, 0.5, 0.7, 1.1];
        let ax: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let cy: Vec<f64> = y.iter().map(|v| 0.5 * v - 4.0).collect();
        let a = pearson(&x, &y).unwrap();
        let b = pearson(&ax, &cy).unwrap();
        assert_abs_diff_eq!(a.coefficient, b.coefficient, epsilon = 1e-12);
    }

    #[test]
    fn average_ranks_handles_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn rank_by_score_breaks_ties_by_id() {
        let scored = vec![
            ("b".to_string(), 0.5),
            ("a".to_string(), 0.5),
            ("c".to_string(), 0.9),
        ];
        assert_eq!(rank_by_score(scored), vec!["c", "a", "b"]);
    }

    #[test]
    fn evaluate_retrieval_one_hot_identity_is_perfect() {
        use ndarray::{Array1, Array2};
        let d = 4;
        let enc = DualEncoder {
            audio_head: crate::model::ProjectionHead {
                weights: Array2::eye(d),
                bias: Array1::zeros(d),
            },
            text_head: crate::model::ProjectionHead {
                weights: Array2::eye(d),
                bias: Array1::zeros(d),
            },
        };
        let mut audio = FeatureTable::new(d);
        let mut captions = FeatureTable::new(d);
        let mut pairs = PairSet::new();
        for i in 0..d {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            audio.insert(format!("a{i}"), v.clone()).unwrap();
            captions.insert(format!("c{i}"), v).unwrap();
            pairs.insert(format!("c{i}"), format!("a{i}")).unwrap();
        }
        let scores = evaluate_retrieval(&enc, &audio, &captions, &pairs, 10).unwrap();
        assert_eq!(scores.map, 1.0);
        assert_eq!(scores.recall, 1.0);
    }

    #[test]
    fn evaluate_retrieval_constant_encoder_follows_tie_policy() {
        use ndarray::{Array1, Array2};
        // All embeddings collapse to the same constant vector: every cosine
        // is 1, so the ranking is the documented ascending-id order.
        let enc = DualEncoder {
            audio_head: crate::model::ProjectionHead {
                weights: Array2::zeros((2, 3)),
                bias: Array1::from_vec(vec![1.0, 1.0]),
            },
            text_head: crate::model::ProjectionHead {
                weights: Array2::zeros((2, 3)),
                bias: Array1::from_vec(vec![1.0, 1.0]),
            },
        };
        let mut audio = FeatureTable::new(3);
        let mut captions = FeatureTable::new(3);
        let mut pairs = PairSet::new();
        for i in 0..4 {
            audio.insert(format!("a{i}"), vec![i as f64, 1.0, 0.0]).unwrap();
        }
        captions.insert("c0".to_string(), vec![0.5, 0.5, 0.5]).unwrap();
        pairs.insert("c0".to_string(), "a2".to_string()).unwrap();
        let lists = rank_all_queries(&enc, &audio, &captions, &pairs).unwrap();
        assert_eq!(lists[0].items, vec!["a0", "a1", "a2", "a3"]);
        // positive a2 lands at rank 3 under the tie rule
        assert_abs_diff_eq!(average_precision(&lists[0]).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }
}
