//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

/// Whitespace split, lowercase, trim ASCII punctuation at both ends.
pub fn ref_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && chars[start].is_ascii_punctuation() {
            start += 1;
        }
        while end > start && chars[end - 1].is_ascii_punctuation() {
            end -= 1;
        }
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
    }
    out
}

/// Okapi BM25 scored item by item from raw token lists.
pub fn brute_bm25_scores(items: &[String], query: &str, k1: f64, b: f64) -> Vec<f64> {
    let docs: Vec<Vec<String>> = items.iter().map(|t| ref_tokenize(t)).collect();
    let n = docs.len() as f64;
    let total_len: u64 = docs.iter().map(|d| d.len() as u64).sum();
    let avg = total_len as f64 / n;
    let q = ref_tokenize(query);
    docs.iter()
        .map(|doc| {
            let mut s = 0.0;
            for term in &q {
                let tf = doc.iter().filter(|t| *t == term).count();
                if tf == 0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let tf = tf as f64;
                let norm = 1.0 - b + b * doc.len() as f64 / avg;
                s += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
            s
        })
        .collect()
}

/// Full stable sort by score descending; ties keep ordinal order.
pub fn brute_top_k(scores: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    all.truncate(k);
    all
}

/// nDCG@k from first principles.
pub fn brute_ndcg(ranking: &[&str], judged: &BTreeMap<String, u32>, k: usize) -> f64 {
    let mut dcg = 0.0;
    for (pos, id) in ranking.iter().enumerate().take(k) {
        let g = judged.get(*id).copied().unwrap_or(0);
        dcg += (2f64.powf(g as f64) - 1.0) / (pos as f64 + 2.0).log2();
    }
    let mut grades: Vec<u32> = judged.values().copied().collect();
    grades.sort_by(|a, b| b.cmp(a));
    let mut idcg = 0.0;
    for (pos, &g) in grades.iter().enumerate().take(k) {
        idcg += (2f64.powf(g as f64) - 1.0) / (pos as f64 + 2.0).log2();
    }
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

/// Neumaier-compensated dot product.
pub fn precise_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let t = sum + p;
        if sum.abs() >= p.abs() {
            c += (sum - t) + p;
        } else {
            c += (p - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `-log(exp(s_pos/τ) / Σ exp(s_c/τ))` evaluated directly with a
/// log-sum-exp over compensated sums.
pub fn direct_loss(sims: &[f64], tau: f64) -> f64 {
    let z: Vec<f64> = sims.iter().map(|s| s / tau).collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let ones = vec![1.0; terms.len()];
    let sum = precise_dot(&terms, &ones);
    m + sum.ln() - z[0]
}

/// One training item as `(query, positive, negative)` texts.
pub type Triple = (String, String, Option<String>);

/// Dense reference of the batch loss over precomputed projections `u[t]`
/// (one per distinct text). Candidates: own positive, own negative, then
/// the other items' positives, skipping texts already present.
pub fn dense_batch_loss(
    u: &HashMap<String, Vec<f64>>,
    batch: &[Triple],
    tau: f64,
    use_negative: bool,
) -> f64 {
    let unit = |t: &str| -> Vec<f64> {
        let v = &u[t];
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            v.clone()
        } else {
            v.iter().map(|x| x / n).collect()
        }
    };
    let mut total = 0.0;
    for (i, (q, p, neg)) in batch.iter().enumerate() {
        let mut cands: Vec<&str> = vec![p.as_str()];
        if use_negative {
            if let Some(n) = neg {
                if !cands.contains(&n.as_str()) {
                    cands.push(n);
                }
            }
        }
        for (j, (_, other, _)) in batch.iter().enumerate() {
            if j != i && !cands.contains(&other.as_str()) {
                cands.push(other);
            }
        }
        let eq = unit(q);
        let sims: Vec<f64> = cands.iter().map(|c| precise_dot(&eq, &unit(c))).collect();
        total += direct_loss(&sims, tau);
    }
    total / batch.len() as f64
}
