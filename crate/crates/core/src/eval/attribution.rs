use std::collections::HashSet;

/// Marks the tokens of `target` that lie inside at least one `n`-gram also
/// present in one of `sources`. N-grams never span two sources.
pub fn shared_ngram_mask<S: AsRef<str>>(target: &[S], sources: &[&[S]], n: usize) -> Vec<bool> {
    let mut mask = vec![false; target.len()];
    if n == 0 || target.len() < n {
        return mask;
    }
    let grams: HashSet<Vec<&str>> = sources
        .iter()
        .flat_map(|src| src.windows(n).map(|w| w.iter().map(AsRef::as_ref).collect()))
        .collect();
    if grams.is_empty() {
        return mask;
    }
    let mut probe: Vec<&str> = Vec::with_capacity(n);
    for start in 0..=target.len() - n {
        probe.clear();
        probe.extend(target[start..start + n].iter().map(AsRef::as_ref));
        if grams.contains(&probe) {
            mask[start..start + n].iter_mut().for_each(|m| *m = true);
        }
    }
    mask
}

/// The n actually used when attributing against a sequence of `len` tokens.
pub fn effective_n(n: usize, len: usize) -> usize {
    n.max(1).min(len)
}

/// Answer tokens sharing an n-gram with any context. Answers shorter than
/// `n` are matched as a whole.
pub fn supported_mask_in<S: AsRef<str>>(answer: &[S], contexts: &[&[S]], n: usize) -> Vec<bool> {
    shared_ngram_mask(answer, contexts, effective_n(n, answer.len()))
}

pub fn supported_mask<S: AsRef<str>>(answer: &[S], context: &[S], n: usize) -> Vec<bool> {
    supported_mask_in(answer, &[context], n)
}

pub fn fraction(mask: &[bool]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::token_texts;
    use proptest::prelude::*;

    #[test]
    fn trigram_example() {
        let a = token_texts("a b c x y z");
        let c = token_texts("q a b c r");
        assert_eq!(supported_mask(&a, &c, 3), vec![true, true, true, false, false, false]);
    }

    #[test]
    fn short_answers_match_whole() {
        let a = token_texts("b c");
        assert_eq!(supported_mask(&a, &token_texts("a b c"), 3), vec![true, true]);
        assert_eq!(supported_mask(&a, &token_texts("c b"), 3), vec![false, false]);
        assert!(supported_mask(&Vec::<String>::new(), &token_texts("a"), 3).is_empty());
    }

    #[test]
    fn ngrams_do_not_cross_contexts() {
        let a = token_texts("a b c");
        let c1 = token_texts("a b");
        let c2 = token_texts("c");
        assert_eq!(supported_mask_in(&a, &[&c1[..], &c2[..]], 3), vec![false; 3]);
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec("[abc]", 0..12)
    }

    proptest! {
        #[test]
        fn adding_context_never_unmarks(a in words(), c in words(), extra in words(), n in 1usize..4) {
            let before = supported_mask(&a, &c, n);
            let mut more = c.clone();
            more.extend(extra);
            let after = supported_mask(&a, &more, n);
            for (x, y) in before.iter().zip(&after) {
                prop_assert!(!x || *y);
            }
        }

        #[test]
        fn matches_brute_force(a in words(), c in words(), n in 1usize..4) {
            let n_eff = effective_n(n, a.len());
            let expect: Vec<bool> = (0..a.len()).map(|i| {
                (0..a.len()).filter(|&s| s + n_eff <= a.len() && s <= i && i < s + n_eff).any(|s| {
                    (0..c.len()).any(|t| t + n_eff <= c.len() && a[s..s + n_eff] == c[t..t + n_eff])
                })
            }).collect();
            prop_assert_eq!(supported_mask(&a, &c, n), expect);
        }
    }
}
