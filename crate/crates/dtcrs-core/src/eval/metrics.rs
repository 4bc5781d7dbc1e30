//! QA similarity metrics: token-level F1, weighted-LCS ROUGE-L, sentence
//! BLEU, METEOR, and multiple-choice scoring.
//!
//! All metrics take the best score over the provided references. Identical
//! normalized inputs score 1 and token-disjoint inputs score 0 on every
//! metric.

use crate::error::{Error, Result};
use rust_stemmers::{Algorithm, Stemmer};
use std::collections::HashMap;

/// Reading-comprehension normalization: lowercase, strip punctuation,
/// drop articles, split on whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

/// Word tokenization for the n-gram metrics: lowercase, split on
/// non-alphanumeric runs.
fn word_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for token in tokens {
        *map.entry(token.as_str()).or_insert(0) += 1;
    }
    map
}

/// Token-level F1 against the best reference. Multiset overlap after
/// normalization; both sides empty scores 1, one side empty scores 0.
pub fn token_f1(prediction: &str, references: &[String]) -> f64 {
    let pred = normalize_tokens(prediction);
    references
        .iter()
        .map(|reference| {
            let gold = normalize_tokens(reference);
            if pred.is_empty() && gold.is_empty() {
                return 1.0;
            }
            if pred.is_empty() || gold.is_empty() {
                return 0.0;
            }
            let pred_counts = counts(&pred);
            let gold_counts = counts(&gold);
            let common: usize = pred_counts
                .iter()
                .map(|(token, count)| count.min(gold_counts.get(token).unwrap_or(&0)))
                .sum();
            if common == 0 {
                return 0.0;
            }
            let precision = common as f64 / pred.len() as f64;
            let recall = common as f64 / gold.len() as f64;
            2.0 * precision * recall / (precision + recall)
        })
        .fold(0.0, f64::max)
}

/// ROUGE-L parameters (weighted LCS variant).
#[derive(Debug, Clone)]
pub struct RougeParams {
    /// Truncate both sides to this many words when `limit_length`.
    pub limit_length: bool,
    pub length_limit: usize,
    /// F-measure balance: F = P·R / ((1-alpha)·P + alpha·R).
    pub alpha: f64,
    /// Exponent on consecutive-match run lengths.
    pub weight_factor: f64,
    pub stemming: bool,
}

impl Default for RougeParams {
    fn default() -> Self {
        RougeParams {
            limit_length: true,
            length_limit: 100,
            alpha: 0.5,
            weight_factor: 1.2,
            stemming: true,
        }
    }
}

fn rouge_tokens(text: &str, params: &RougeParams) -> Vec<String> {
    let stemmer = Stemmer::create(Algorithm::English);
    let mut tokens: Vec<String> = word_tokens(text)
        .into_iter()
        .map(|t| {
            if params.stemming && t.len() > 3 {
                stemmer.stem(&t).to_string()
            } else {
                t
            }
        })
        .collect();
    if params.limit_length && tokens.len() > params.length_limit {
        tokens.truncate(params.length_limit);
    }
    tokens
}

/// Weighted longest common subsequence: consecutive matches of run length k
/// contribute f(k) = k^weight_factor.
fn wlcs(prediction: &[String], reference: &[String], weight: f64) -> f64 {
    let n = prediction.len();
    let m = reference.len();
    let f = |k: f64| k.powf(weight);
    let mut score = vec![vec![0.0f64; m + 1]; n + 1];
    let mut run = vec![vec![0.0f64; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            if prediction[i - 1] == reference[j - 1] {
                let k = run[i - 1][j - 1];
                score[i][j] = score[i - 1][j - 1] + f(k + 1.0) - f(k);
                run[i][j] = k + 1.0;
            } else if score[i - 1][j] >= score[i][j - 1] {
                score[i][j] = score[i - 1][j];
            } else {
                score[i][j] = score[i][j - 1];
            }
        }
    }
    score[n][m]
}

/// Weighted-LCS ROUGE-L against the best reference.
pub fn rouge_l(prediction: &str, references: &[String], params: &RougeParams) -> f64 {
    let pred = rouge_tokens(prediction, params);
    references
        .iter()
        .map(|reference| {
            let gold = rouge_tokens(reference, params);
            if pred.is_empty() && gold.is_empty() {
                return 1.0;
            }
            if pred.is_empty() || gold.is_empty() {
                return 0.0;
            }
            let w = wlcs(&pred, &gold, params.weight_factor);
            if w == 0.0 {
                return 0.0;
            }
            let f = |k: f64| k.powf(params.weight_factor);
            let f_inv = |x: f64| x.powf(1.0 / params.weight_factor);
            let recall = f_inv(w / f(gold.len() as f64));
            let precision = f_inv(w / f(pred.len() as f64));
            let denom = (1.0 - params.alpha) * precision + params.alpha * recall;
            if denom == 0.0 {
                0.0
            } else {
                precision * recall / denom
            }
        })
        .fold(0.0, f64::max)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut map = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            let key: Vec<&str> = window.iter().map(String::as_str).collect();
            *map.entry(key).or_insert(0) += 1;
        }
    }
    map
}

/// Sentence BLEU with uniform weights up to `max_n` and the standard
/// brevity penalty. No smoothing: a zero n-gram precision zeroes the
/// score. Best reference taken.
pub fn bleu(prediction: &str, references: &[String], max_n: usize) -> f64 {
    let pred = word_tokens(prediction);
    references
        .iter()
        .map(|reference| {
            let gold = word_tokens(reference);
            if pred.is_empty() || gold.is_empty() {
                return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
            }
            let mut log_sum = 0.0f64;
            for n in 1..=max_n {
                let pred_grams = ngram_counts(&pred, n);
                let total: usize = pred_grams.values().sum();
                if total == 0 {
                    return 0.0;
                }
                let gold_grams = ngram_counts(&gold, n);
                let clipped: usize = pred_grams
                    .iter()
                    .map(|(gram, count)| count.min(gold_grams.get(gram).unwrap_or(&0)))
                    .sum();
                if clipped == 0 {
                    return 0.0;
                }
                log_sum += (clipped as f64 / total as f64).ln();
            }
            let precision_mean = (log_sum / max_n as f64).exp();
            let c = pred.len() as f64;
            let r = gold.len() as f64;
            let brevity_penalty = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
            brevity_penalty * precision_mean
        })
        .fold(0.0, f64::max)
}

const METEOR_ALPHA: f64 = 0.9;
const METEOR_BETA: f64 = 3.0;
const METEOR_GAMMA: f64 = 0.5;

/// METEOR with exact then stemmed unigram matching and the fragmentation
/// penalty. Identical token sequences score exactly 1. Best reference
/// taken.
pub fn meteor(prediction: &str, references: &[String]) -> f64 {
    let pred = word_tokens(prediction);
    references
        .iter()
        .map(|reference| {
            let gold = word_tokens(reference);
            if pred.is_empty() && gold.is_empty() {
                return 1.0;
            }
            if pred == gold {
                return 1.0;
            }
            if pred.is_empty() || gold.is_empty() {
                return 0.0;
            }
            let alignment = align(&pred, &gold);
            let matches = alignment.len() as f64;
            if matches == 0.0 {
                return 0.0;
            }
            let precision = matches / pred.len() as f64;
            let recall = matches / gold.len() as f64;
            let fmean = precision * recall
                / (METEOR_ALPHA * precision + (1.0 - METEOR_ALPHA) * recall);
            let chunks = count_chunks(&alignment) as f64;
            let penalty = METEOR_GAMMA * (chunks / matches).powf(METEOR_BETA);
            (1.0 - penalty) * fmean
        })
        .fold(0.0, f64::max)
}

/// Greedy in-order alignment: exact matches first, stem matches on the
/// remainder. Returns (prediction index, reference index) pairs sorted by
/// prediction index.
fn align(prediction: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut pred_used = vec![false; prediction.len()];
    let mut gold_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for (i, token) in prediction.iter().enumerate() {
        for (j, gold_token) in reference.iter().enumerate() {
            if !gold_used[j] && token == gold_token {
                pred_used[i] = true;
                gold_used[j] = true;
                pairs.push((i, j));
                break;
            }
        }
    }
    let stemmer = Stemmer::create(Algorithm::English);
    let pred_stems: Vec<String> = prediction.iter().map(|t| stemmer.stem(t).to_string()).collect();
    let gold_stems: Vec<String> = reference.iter().map(|t| stemmer.stem(t).to_string()).collect();
    for i in 0..prediction.len() {
        if pred_used[i] {
            continue;
        }
        for j in 0..reference.len() {
            if !gold_used[j] && pred_stems[i] == gold_stems[j] {
                pred_used[i] = true;
                gold_used[j] = true;
                pairs.push((i, j));
                break;
            }
        }
    }
    pairs.sort();
    pairs
}

/// Number of maximal runs of adjacent-in-both alignments.
fn count_chunks(alignment: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut previous: Option<(usize, usize)> = None;
    for &(i, j) in alignment {
        match previous {
            Some((pi, pj)) if i == pi + 1 && j == pj + 1 => {}
            _ => chunks += 1,
        }
        previous = Some((i, j));
    }
    chunks
}

/// Accuracy and SAT-style score for multiple choice:
/// sat = (correct - wrong/(options_count-1)) / total, unclamped, so uniform
/// guessing nets zero in expectation.
pub fn choice_scores(
    predictions: &[usize],
    golds: &[usize],
    options_count: usize,
) -> Result<(f64, f64)> {
    if predictions.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} golds",
            predictions.len(),
            golds.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("choice scoring needs at least one item"));
    }
    if options_count < 2 {
        return Err(Error::invalid("choice scoring needs at least two options"));
    }
    let total = predictions.len() as f64;
    let correct = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p == g)
        .count() as f64;
    let wrong = total - correct;
    let accuracy = correct / total;
    let sat = (correct - wrong / (options_count as f64 - 1.0)) / total;
    Ok((accuracy, sat))
}
