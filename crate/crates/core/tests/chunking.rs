use esap_core::corpus::{chunk_document, token_texts, window_spans, ChunkConfig, Document};
use proptest::prelude::*;

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-zA-Z0-9]{1,6}", 0..400).prop_map(|w| w.join(" "))
}

fn config() -> impl Strategy<Value = ChunkConfig> {
    (1usize..60).prop_flat_map(|size| (Just(size), 0..size)).prop_map(|(size, overlap)| ChunkConfig { size, overlap })
}

/// Counts windows by walking starts one stride at a time.
fn count_windows(n: usize, cfg: ChunkConfig) -> usize {
    if n == 0 {
        return 0;
    }
    let mut start = 0;
    let mut count = 0;
    loop {
        count += 1;
        if start + cfg.size >= n {
            return count;
        }
        start += cfg.size - cfg.overlap;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn dedup_concatenation_restores_tokens(text in words(), cfg in config()) {
        let doc = Document::new("d", 1, text.clone());
        let chunks = chunk_document(&doc, cfg).unwrap();
        let tokens = token_texts(&text);
        prop_assert_eq!(chunks.len(), count_windows(tokens.len(), cfg));
        let mut rebuilt: Vec<String> = Vec::new();
        for c in &chunks {
            prop_assert!(c.size_tokens() <= cfg.size);
            let toks = token_texts(&c.text);
            prop_assert_eq!(toks.len(), c.size_tokens());
            let skip = rebuilt.len() - c.token_start;
            rebuilt.extend(toks.into_iter().skip(skip));
        }
        prop_assert_eq!(rebuilt, tokens);
    }

    #[test]
    fn spans_are_contiguous(n in 0usize..3000, cfg in config()) {
        let spans = window_spans(n, cfg);
        for w in spans.windows(2) {
            prop_assert_eq!(w[1].0 - w[0].0, cfg.stride());
            prop_assert_eq!(w[0].1 - w[1].0, cfg.overlap.min(w[0].1 - w[0].0));
        }
        if let Some(last) = spans.last() {
            prop_assert_eq!(last.1, n);
        }
    }
}

#[test]
fn chunk_ids_are_ordered() {
    let text = (0..2500).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    let chunks = chunk_document(&Document::new("doc", 3, text), ChunkConfig::default()).unwrap();
    let ids: Vec<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();
    assert_eq!(ids, ["doc@v3#000000", "doc@v3#000001", "doc@v3#000002"]);
    assert_eq!(chunks[1].token_start, 850);
    assert_eq!(chunks[2].token_end, 2500);
}

#[test]
fn invalid_configs_rejected() {
    assert!(ChunkConfig::new(500, 1000).is_err());
    assert!(ChunkConfig::new(500, 500).is_err());
    assert!(ChunkConfig::new(0, 0).is_err());
    assert!(ChunkConfig::new(500, 499).is_ok());
}
