//! TF-IDF paragraph pre-screening with cosine similarity.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::text::TokenizedText;

/// Sparse vector as `(term id, weight)` pairs sorted by term id.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfIndex {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    /// L2-normalized, or empty for paragraphs without tokens.
    pub paragraph_vectors: Vec<SparseVec>,
}

fn term_counts<'a>(terms: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, f64> {
    let mut counts = BTreeMap::new();
    for t in terms {
        *counts.entry(t).or_insert(0.0) += 1.0;
    }
    counts
}

fn normalize(mut v: SparseVec) -> SparseVec {
    let norm = libm::sqrt(v.iter().map(|(_, w)| w * w).sum::<f64>());
    if norm > 0.0 {
        for (_, w) in &mut v {
            *w /= norm;
        }
    } else {
        v.clear();
    }
    v
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

impl TfidfIndex {
    /// Raw term counts, smoothed idf `ln((1+N)/(1+df)) + 1`, L2 normalization.
    pub fn build<'a, I>(paragraphs: I) -> Self
    where
        I: IntoIterator<Item = &'a TokenizedText>,
    {
        let counts: Vec<BTreeMap<&str, f64>> =
            paragraphs.into_iter().map(|p| term_counts(p.norms())).collect();
        let mut vocabulary = BTreeMap::new();
        let mut df: Vec<f64> = Vec::new();
        for c in &counts {
            for term in c.keys() {
                let next = vocabulary.len();
                let id = *vocabulary.entry(String::from(*term)).or_insert(next);
                if id == df.len() {
                    df.push(0.0);
                }
                df[id] += 1.0;
            }
        }
        let n = counts.len() as f64;
        let idf: Vec<f64> = df.iter().map(|&d| libm::log((1.0 + n) / (1.0 + d)) + 1.0).collect();
        let paragraph_vectors = counts
            .iter()
            .map(|c| {
                let mut v: SparseVec = c
                    .iter()
                    .map(|(t, tf)| {
                        let id = vocabulary[*t];
                        (id, tf * idf[id])
                    })
                    .collect();
                v.sort_by_key(|&(id, _)| id);
                normalize(v)
            })
            .collect();
        TfidfIndex { vocabulary, idf, paragraph_vectors }
    }

    pub fn len(&self) -> usize {
        self.paragraph_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraph_vectors.is_empty()
    }

    /// Normalized tf-idf vector of a query; out-of-vocabulary terms are dropped.
    pub fn query_vector(&self, question: &TokenizedText) -> SparseVec {
        let mut v: SparseVec = term_counts(question.norms())
            .into_iter()
            .filter_map(|(t, tf)| self.vocabulary.get(t).map(|&id| (id, tf * self.idf[id])))
            .collect();
        v.sort_by_key(|&(id, _)| id);
        normalize(v)
    }

    /// Cosine similarity of the question to every paragraph.
    pub fn similarities(&self, question: &TokenizedText) -> Vec<f64> {
        let q = self.query_vector(question);
        self.paragraph_vectors.iter().map(|p| sparse_dot(&q, p)).collect()
    }

    /// Up to `k` paragraph ids by descending similarity, ties by ascending id.
    pub fn rank(&self, question: &TokenizedText, k: usize) -> Vec<usize> {
        let sims = self.similarities(question);
        let mut ids: Vec<usize> = (0..sims.len()).collect();
        ids.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
        ids.truncate(k);
        ids
    }
}

pub fn build_index(paragraphs: &[TokenizedText]) -> TfidfIndex {
    TfidfIndex::build(paragraphs)
}

pub fn rank_paragraphs(index: &TfidfIndex, question: &TokenizedText, k: usize) -> Vec<usize> {
    index.rank(question, k)
}

/// Dense view of a stored paragraph vector, mainly for inspection.
pub fn dense(index: &TfidfIndex, paragraph: usize) -> Vec<f64> {
    let mut out = vec![0.0; index.vocabulary.len()];
    for &(id, w) in &index.paragraph_vectors[paragraph] {
        out[id] = w;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use alloc::string::ToString;
    use proptest::prelude::*;

    #[test]
    fn single_paragraph_weights() {
        let idx = build_index(&[tokenize("a a b")]);
        // N = 1, df = 1 for both terms: idf = ln(2/2) + 1 = 1.
        assert_eq!(idx.idf, vec![1.0, 1.0]);
        let v = dense(&idx, 0);
        let s5 = libm::sqrt(5.0);
        assert!((v[idx.vocabulary["a"]] - 2.0 / s5).abs() < 1e-12);
        assert!((v[idx.vocabulary["b"]] - 1.0 / s5).abs() < 1e-12);
    }

    #[test]
    fn identical_and_empty_paragraphs() {
        let idx = build_index(&[tokenize("x y z"), tokenize("x y z"), tokenize("")]);
        assert_eq!(idx.paragraph_vectors[0], idx.paragraph_vectors[1]);
        assert!(idx.paragraph_vectors[2].is_empty());
        assert!(idx.idf.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn overlap_ranks_first() {
        let paras = [tokenize("red green"), tokenize("blue sky"), tokenize("deep ocean water"), tokenize("")];
        let idx = build_index(&paras);
        // Only paragraph 2 shares terms with the question.
        let sims = idx.similarities(&tokenize("ocean water deep"));
        assert!((sims[2] - 1.0).abs() < 1e-12);
        assert_eq!((sims[0], sims[1], sims[3]), (0.0, 0.0, 0.0));
        assert_eq!(rank_paragraphs(&idx, &tokenize("ocean water deep"), 2), vec![2, 0]);
    }

    #[test]
    fn no_overlap_keeps_id_order_and_k_clamps() {
        let paras = [tokenize("a"), tokenize("b"), tokenize("c")];
        let idx = build_index(&paras);
        assert_eq!(idx.rank(&tokenize("zzz"), 10), vec![0, 1, 2]);
        assert_eq!(idx.rank(&tokenize("zzz"), 1), vec![0]);
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g"]), 0..12)
            .prop_map(|v| v.into_iter().map(|s| s.to_string()).collect())
    }

    proptest! {
        #[test]
        fn ranking_properties(paras in prop::collection::vec(words(), 1..8), q in words(), k in 1usize..10) {
            let texts: Vec<TokenizedText> = paras.iter().map(|p| tokenize(&p.join(" "))).collect();
            let idx = build_index(&texts);
            for v in &idx.paragraph_vectors {
                let n: f64 = v.iter().map(|(_, w)| w * w).sum();
                prop_assert!(v.is_empty() || (n - 1.0).abs() < 1e-12);
            }
            let question = tokenize(&q.join(" "));
            let ranked = idx.rank(&question, k);
            prop_assert_eq!(ranked.len(), k.min(texts.len()));
            let mut seen = ranked.clone();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), ranked.len());
            prop_assert!(ranked.iter().all(|&i| i < texts.len()));

            // Duplicating every question token leaves similarities unchanged.
            let doubled: Vec<String> = q.iter().flat_map(|w| [w.clone(), w.clone()]).collect();
            let s1 = idx.similarities(&question);
            let s2 = idx.similarities(&tokenize(&doubled.join(" ")));
            for (a, b) in s1.iter().zip(&s2) {
                prop_assert!((a - b).abs() < 1e-12);
            }

            // A paragraph used as the question is (weakly) the most similar one.
            let self_sims = idx.similarities(&texts[0]);
            if !texts[0].is_empty() {
                let best = self_sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(self_sims[0] >= best - 1e-12);
            }
        }
    }
}
