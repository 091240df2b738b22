//! Clustering and topic-model evaluation: K-means initialization,
//! pairwise F1 against ground truth, and held-out perplexity by
//! document completion.

use crate::data::{Corpus, LabelVector, PointSet};
use crate::error::{Error, Result};
use crate::hdp::{topic_predictive_log, CrfState, GlobalWeights, HdpHyper, TopicCounts};
use crate::rng::{log_sum_exp, RngStream};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Stream index reserved for K-means so it never collides with the
/// sampler lanes (0..P-1) or the engine's bookkeeping streams.
const KMEANS_STREAM: u64 = 1 << 32;

/// Lloyd's algorithm. Centroids start at k distinct points chosen
/// uniformly by seed; each iteration recomputes means and
/// reassigns, re-seeding any emptied cluster from the point farthest
/// from its centroid. iters=0 returns the nearest-initial-centroid
/// assignment.
pub fn kmeans(data: &PointSet, k: usize, iters: usize, seed: u64) -> Result<LabelVector> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    let mut stream = RngStream::new(seed, KMEANS_STREAM);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + stream.uniform_index(n - i);
        idx.swap(i, j);
    }
    let mut centroids: Vec<Vec<f64>> = idx[..k].iter().map(|&i| data.point(i).to_vec()).collect();

    let mut labels = vec![0usize; n];
    let assign = |centroids: &[Vec<f64>], labels: &mut [usize]| {
        for i in 0..n {
            let p = data.point(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            labels[i] = best;
        }
    };
    assign(&centroids, &mut labels);

    let dims = data.dims();
    for _ in 0..iters {
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0u64; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, &x) in sums[labels[i]].iter_mut().zip(data.point(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            }
        }
        // emptied clusters grab the point farthest from its centroid
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = 0usize;
            let mut far_d = -1.0;
            for i in 0..n {
                if taken.contains(&i) {
                    continue;
                }
                let d = sq_dist(data.point(i), &centroids[labels[i]]);
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            centroids[c] = data.point(far).to_vec();
            taken.push(far);
        }
        assign(&centroids, &mut labels);
    }
    Ok(labels.into_iter().map(|l| l as i64).collect())
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Harmonic mean of pairwise precision and recall over unordered
/// co-clustered pairs. With zero pairs on both sides the score is 1;
/// zero pairs on exactly one side scores 0.
pub fn f1_score(pred: &[i64], truth: &[i64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::domain(format!(
            "label vectors have lengths {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    use std::collections::HashMap;
    let mut pred_sizes: HashMap<i64, u64> = HashMap::new();
    let mut truth_sizes: HashMap<i64, u64> = HashMap::new();
    let mut joint: HashMap<(i64, i64), u64> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *pred_sizes.entry(p).or_insert(0) += 1;
        *truth_sizes.entry(t).or_insert(0) += 1;
        *joint.entry((p, t)).or_insert(0) += 1;
    }
    let pred_pairs: u64 = pred_sizes.values().map(|&c| pairs(c)).sum();
    let truth_pairs: u64 = truth_sizes.values().map(|&c| pairs(c)).sum();
    let both: u64 = joint.values().map(|&c| pairs(c)).sum();
    if pred_pairs == 0 && truth_pairs == 0 {
        return Ok(1.0);
    }
    if pred_pairs == 0 || truth_pairs == 0 {
        return Ok(0.0);
    }
    let precision = both as f64 / pred_pairs as f64;
    let recall = both as f64 / truth_pairs as f64;
    if both == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Split a document's token sequence into fold-in (even positions)
/// and evaluation (odd positions) halves.
pub fn alternating_split(tokens: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let fold = tokens.iter().copied().step_by(2).collect();
    let eval = tokens.iter().copied().skip(1).step_by(2).collect();
    (fold, eval)
}

const FOLD_IN_PASSES: usize = 50;

/// Held-out perplexity by document completion: each test document's
/// fold-in half estimates its topic mixture under frozen topic-word
/// counts (50 Gibbs passes), and the evaluation half is scored under
/// the mixed predictive. Topic k carries prior mass proportional to
/// its table count, with residual mass alpha on a fresh uniform topic.
pub fn perplexity(
    state: &CrfState,
    weights: &GlobalWeights,
    hyper: &HdpHyper,
    test: &Corpus,
    stream: &mut RngStream,
) -> Result<f64> {
    if test.vocab_size() != hyper.vocab {
        return Err(Error::domain(format!(
            "test vocabulary {} does not match model vocabulary {}",
            test.vocab_size(),
            hyper.vocab
        )));
    }
    let topics: Vec<(u64, u64, TopicCounts)> = state.topics();
    let k = topics.len();
    let t_total: u64 = topics.iter().map(|t| t.1).sum();
    let denom = t_total as f64 + hyper.alpha;
    // prior over topics: table-count shares, plus the fresh topic
    let mut log_prior: Vec<f64> = topics
        .iter()
        .map(|t| (t.1 as f64 / denom).ln())
        .collect();
    log_prior.push((hyper.alpha / denom).ln());
    let log_v = (hyper.vocab as f64).ln();
    let pred = |topic: usize, w: u32| -> f64 {
        if topic < k {
            topic_predictive_log(&topics[topic].2, w, hyper)
        } else {
            -log_v
        }
    };
    let gamma = weights.gamma;

    let mut total_lp = 0.0;
    let mut n_eval = 0usize;
    for m in 0..test.num_docs() {
        let tokens = test.doc_tokens(m);
        let (fold, eval) = alternating_split(&tokens);
        if eval.is_empty() {
            continue;
        }
        let mut counts = vec![0u64; k + 1];
        let mut assign: Vec<usize> = Vec::with_capacity(fold.len());
        let mut lw = vec![0.0; k + 1];
        let draw = |counts: &[u64], w: u32, lw: &mut [f64], stream: &mut RngStream| {
            for t in 0..=k {
                let prior = counts[t] as f64 + gamma * log_prior[t].exp();
                lw[t] = prior.ln() + pred(t, w);
            }
            stream
                .categorical_log(lw)
                .expect("topic weights contain a finite entry")
        };
        for &w in &fold {
            let z = draw(&counts, w, &mut lw, stream);
            counts[z] += 1;
            assign.push(z);
        }
        for _ in 0..FOLD_IN_PASSES {
            for (i, &w) in fold.iter().enumerate() {
                counts[assign[i]] -= 1;
                let z = draw(&counts, w, &mut lw, stream);
                counts[z] += 1;
                assign[i] = z;
            }
        }
        let theta_denom = (fold.len() as f64 + gamma).ln();
        let log_theta: Vec<f64> = (0..=k)
            .map(|t| (counts[t] as f64 + gamma * log_prior[t].exp()).ln() - theta_denom)
            .collect();
        for &w in &eval {
            let parts: Vec<f64> = (0..=k).map(|t| log_theta[t] + pred(t, w)).collect();
            total_lp += log_sum_exp(&parts);
        }
        n_eval += eval.len();
    }
    if n_eval == 0 {
        return Err(Error::domain("no evaluation tokens in test corpus"));
    }
    Ok((-total_lp / n_eval as f64).exp())
}

/// Perplexity of the add-one-smoothed training unigram distribution
/// on the same evaluation halves document completion scores.
pub fn unigram_perplexity(train: &Corpus, test: &Corpus) -> Result<f64> {
    if train.vocab_size() != test.vocab_size() {
        return Err(Error::domain(format!(
            "train vocabulary {} does not match test vocabulary {}",
            train.vocab_size(),
            test.vocab_size()
        )));
    }
    let v = train.vocab_size();
    let mut counts = vec![0u64; v];
    let mut total = 0u64;
    for m in 0..train.num_docs() {
        for &(w, c) in train.doc(m) {
            counts[w as usize] += c as u64;
            total += c as u64;
        }
    }
    let denom = (total as f64 + v as f64).ln();
    let mut total_lp = 0.0;
    let mut n_eval = 0usize;
    for m in 0..test.num_docs() {
        let tokens = test.doc_tokens(m);
        let (_, eval) = alternating_split(&tokens);
        for &w in &eval {
            total_lp += (counts[w as usize] as f64 + 1.0).ln() - denom;
        }
        n_eval += eval.len();
    }
    if n_eval == 0 {
        return Err(Error::domain("no evaluation tokens in test corpus"));
    }
    Ok((-total_lp / n_eval as f64).exp())
}
