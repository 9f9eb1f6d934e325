//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Topic-word and document-topic estimates are averaged over the post-burn-in
//! sweeps. New text is scored with the topic-word matrix held fixed, and the
//! dominant topic becomes a categorical mediator level; text without any
//! in-vocabulary token maps to the reserved level `k`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{categorical_index, seeded};
use crate::text::tokenize;

const STOP_WORDS: &[&str] = &[
    "a", "about", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "because",
    "been", "but", "by", "can", "could", "did", "do", "does", "don't", "for", "from", "had",
    "has", "have", "he", "her", "his", "i", "if", "in", "into", "is", "it", "it's", "its", "just",
    "me", "my", "no", "not", "of", "on", "or", "our", "so", "some", "than", "that", "the",
    "their", "them", "then", "there", "these", "they", "this", "those", "to", "was", "we", "well",
    "were", "what", "when", "which", "who", "will", "with", "would", "yes", "you", "your",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for TopicConfig {
    fn default() -> Self {
        Self {
            k: 20,
            alpha: 0.1,
            beta: 0.01,
            sweeps: 1000,
            burn_in: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub config: TopicConfig,
    pub vocabulary: Vec<String>,
    /// `k x V` topic-word distributions.
    pub topic_word: Vec<Vec<f64>>,
    /// `D x k` training document proportions.
    pub doc_topic: Vec<Vec<f64>>,
    /// Final-sweep topic assignment of every training token.
    pub assignments: Vec<Vec<u32>>,
}

fn content_tokens(text: &str) -> impl Iterator<Item = String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphabetic) && !STOP_WORDS.contains(&t.as_str()))
}

pub fn fit_topic_model<S: AsRef<str>>(corpus: &[S], config: TopicConfig) -> Result<TopicModel> {
    if config.k < 2 {
        return Err(Error::Config(format!("topic count must be at least 2, got {}", config.k)));
    }
    if config.burn_in >= config.sweeps {
        return Err(Error::Config("burn-in must be shorter than the number of sweeps".into()));
    }
    if !(config.alpha > 0.0 && config.beta > 0.0) {
        return Err(Error::Config("Dirichlet hyperparameters must be positive".into()));
    }

    let tokenized: Vec<Vec<String>> = corpus.iter().map(|d| content_tokens(d.as_ref()).collect()).collect();
    let vocabulary: Vec<String> = tokenized
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if vocabulary.is_empty() {
        return Err(Error::Data("topic corpus vocabulary is empty after preprocessing".into()));
    }
    let index: BTreeMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let docs: Vec<Vec<usize>> = tokenized
        .iter()
        .map(|d| d.iter().map(|w| index[w.as_str()]).collect())
        .collect();

    let k = config.k;
    let v = vocabulary.len();
    let (alpha, beta) = (config.alpha, config.beta);
    let v_beta = v as f64 * beta;

    let mut rng = seeded(config.seed);
    let mut doc_counts = vec![vec![0u32; k]; docs.len()];
    let mut word_counts = vec![vec![0u32; v]; k];
    let mut topic_totals = vec![0u32; k];
    let mut z: Vec<Vec<u32>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let mut zd = Vec::with_capacity(doc.len());
        for &w in doc {
            let t = rng.gen_range(0..k);
            doc_counts[d][t] += 1;
            word_counts[t][w] += 1;
            topic_totals[t] += 1;
            zd.push(t as u32);
        }
        z.push(zd);
    }

    let mut phi_sum = vec![vec![0.0f64; v]; k];
    let mut theta_sum = vec![vec![0.0f64; k]; docs.len()];
    let mut weights = vec![0.0f64; k];
    let kept = (config.sweeps - config.burn_in) as f64;

    for sweep in 0..config.sweeps {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i] as usize;
                doc_counts[d][old] -= 1;
                word_counts[old][w] -= 1;
                topic_totals[old] -= 1;
                for t in 0..k {
                    weights[t] = (doc_counts[d][t] as f64 + alpha) * (word_counts[t][w] as f64 + beta)
                        / (topic_totals[t] as f64 + v_beta);
                }
                let new = categorical_index(&weights, rng.gen::<f64>());
                doc_counts[d][new] += 1;
                word_counts[new][w] += 1;
                topic_totals[new] += 1;
                z[d][i] = new as u32;
            }
        }
        if sweep >= config.burn_in {
            for t in 0..k {
                let denom = topic_totals[t] as f64 + v_beta;
                for w in 0..v {
                    phi_sum[t][w] += (word_counts[t][w] as f64 + beta) / denom;
                }
            }
            for (d, doc) in docs.iter().enumerate() {
                let denom = doc.len() as f64 + k as f64 * alpha;
                for t in 0..k {
                    theta_sum[d][t] += (doc_counts[d][t] as f64 + alpha) / denom;
                }
            }
        }
    }

    let topic_word = phi_sum.into_iter().map(|row| normalize(row.into_iter().map(|x| x / kept).collect())).collect();
    let doc_topic = theta_sum.into_iter().map(|row| normalize(row.into_iter().map(|x| x / kept).collect())).collect();
    Ok(TopicModel {
        config,
        vocabulary,
        topic_word,
        doc_topic,
        assignments: z,
    })
}

fn normalize(mut row: Vec<f64>) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    row
}

impl TopicModel {
    /// A model from explicit topic-word rows, for scoring only.
    pub fn from_topic_word(vocabulary: Vec<String>, topic_word: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        let k = topic_word.len();
        if k < 2 {
            return Err(Error::Config("topic count must be at least 2".into()));
        }
        if topic_word.iter().any(|r| r.len() != vocabulary.len()) {
            return Err(Error::Config("topic-word rows must match the vocabulary".into()));
        }
        Ok(Self {
            config: TopicConfig {
                k,
                alpha,
                ..TopicConfig::default()
            },
            vocabulary,
            topic_word,
            doc_topic: Vec::new(),
            assignments: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.topic_word.len()
    }

    /// Level assigned to text with no in-vocabulary token.
    pub fn no_content_level(&self) -> usize {
        self.k()
    }

    fn word_counts(&self, text: &str) -> BTreeMap<usize, f64> {
        let mut counts = BTreeMap::new();
        for tok in content_tokens(text) {
            if let Ok(i) = self.vocabulary.binary_search(&tok) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        counts
    }

    /// Topic proportions for unseen text with the topic-word matrix fixed,
    /// by fixed-point iteration from uniform. `None` when no token is known.
    pub fn infer_proportions(&self, text: &str) -> Option<Vec<f64>> {
        let counts = self.word_counts(text);
        if counts.is_empty() {
            return None;
        }
        let k = self.k();
        let alpha = self.config.alpha;
        let n: f64 = counts.values().sum();
        let mut theta = vec![1.0 / k as f64; k];
        let mut next = vec![0.0; k];
        for _ in 0..200 {
            next.iter_mut().for_each(|x| *x = alpha);
            for (&w, &c) in &counts {
                let denom: f64 = (0..k).map(|t| self.topic_word[t][w] * theta[t]).sum();
                if denom <= 0.0 {
                    continue;
                }
                for t in 0..k {
                    next[t] += c * self.topic_word[t][w] * theta[t] / denom;
                }
            }
            let total = n + k as f64 * alpha;
            let mut change = 0.0f64;
            for t in 0..k {
                let updated = next[t] / total;
                change = change.max((updated - theta[t]).abs());
                theta[t] = updated;
            }
            if change < 1e-12 {
                break;
            }
        }
        Some(normalize(theta))
    }
}

/// Dominant topic of `text`; ties go to the lowest index; `k` when the text
/// has no in-vocabulary token.
pub fn measure_topic(model: &TopicModel, text: &str) -> usize {
    match model.infer_proportions(text) {
        None => model.no_content_level(),
        Some(theta) => {
            let mut best = 0;
            for (t, &p) in theta.iter().enumerate() {
                if p > theta[best] {
                    best = t;
                }
            }
            best
        }
    }
}
