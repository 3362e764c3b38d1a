//! SQuAD-style answer scoring and small summary statistics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

/// Lowercase, strip ASCII punctuation, drop the articles `a`/`an`/`the`,
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let words: Vec<&str> = no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect();
    words.join(" ")
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut bag: BTreeMap<&str, usize> = BTreeMap::new();
    for w in &g {
        *bag.entry(w).or_default() += 1;
    }
    let mut common = 0usize;
    for w in &p {
        if let Some(c) = bag.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Exact match (0 or 1) and best token-bag F1 against any gold answer.
pub fn em_f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> (f64, f64) {
    let pred = normalize_answer(prediction);
    let mut em: f64 = 0.0;
    let mut f1: f64 = 0.0;
    for g in golds {
        let gold = normalize_answer(g.as_ref());
        if pred == gold {
            em = 1.0;
        }
        f1 = f1.max(token_f1(&pred, &gold));
    }
    (em, f1)
}

/// Nearest-rank percentile (`q` in `(0, 100]`) of an unsorted sample.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = libm::ceil(q / 100.0 * sorted.len() as f64) as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    Some(libm::sqrt(var))
}

/// Mean F1 (as a percentage) over the `pct` most confident samples.
///
/// `scored` holds `(confidence, f1)` pairs; order is by descending
/// confidence with ties kept in input order. At least one sample is used for
/// any positive `pct`.
pub fn confidence_profile(scored: &[(f64, f64)], buckets: &[f64]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0).then(a.cmp(&b)));
    buckets
        .iter()
        .map(|&pct| {
            let take = (libm::ceil(pct / 100.0 * scored.len() as f64) as usize).clamp(1.min(scored.len()), scored.len());
            let f1: Vec<f64> = order[..take].iter().map(|&i| scored[i].1).collect();
            (pct, mean(&f1).unwrap_or(0.0) * 100.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Cat!"), "cat");
        assert_eq!(normalize_answer("a an the"), "");
        assert_eq!(normalize_answer("42"), "42");
        assert_eq!(normalize_answer("  Theory   of\tan  apple. "), "theory of apple");
    }

    #[test]
    fn worked_scores() {
        assert_eq!(em_f1("the cat", &["cat"]), (1.0, 1.0));
        let (em, f1) = em_f1("black cat", &["cat"]);
        assert_eq!(em, 0.0);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(em_f1("Paris, France", &["Paris, France"]), (1.0, 1.0));
        assert_eq!(em_f1("", &["the"]), (1.0, 1.0));
        assert_eq!(em_f1("", &["cat"]), (0.0, 0.0));
        assert_eq!(em_f1("dog", &["cat", "dog"]), (1.0, 1.0));
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 90.0), Some(90.0));
        assert_eq!(percentile(&v, 99.0), Some(99.0));
        assert_eq!(percentile(&[5.0], 99.0), Some(5.0));
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), Some(2.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn profile_shape() {
        let scored = [(0.9, 1.0), (0.1, 0.0), (0.5, 1.0), (0.3, 0.0)];
        let p = confidence_profile(&scored, &[25.0, 50.0, 100.0]);
        assert_eq!(p, vec![(25.0, 100.0), (50.0, 100.0), (100.0, 50.0)]);
        let all_right = [(0.2, 1.0), (0.4, 1.0)];
        assert!(confidence_profile(&all_right, &[10.0, 50.0, 100.0]).iter().all(|&(_, f)| f == 100.0));
    }

    proptest! {
        #[test]
        fn metric_invariants(pred in "[a-cA-C .!]{0,12}", golds in prop::collection::vec("[a-cA-C .!]{0,12}", 1..4)) {
            let (em, f1) = em_f1(&pred, &golds);
            prop_assert!(em == 0.0 || em == 1.0);
            prop_assert!((0.0..=1.0).contains(&f1));
            if em == 1.0 {
                prop_assert_eq!(f1, 1.0);
            }
            let mut rev = golds.clone();
            rev.reverse();
            rev.extend(golds.iter().cloned());
            prop_assert_eq!(em_f1(&pred, &rev), (em, f1));
        }

        #[test]
        fn percentiles_are_ordered(v in prop::collection::vec(0.0f64..1e3, 1..50)) {
            prop_assert!(percentile(&v, 90.0).unwrap() <= percentile(&v, 99.0).unwrap());
        }
    }
}
