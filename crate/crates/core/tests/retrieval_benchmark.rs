use std::collections::BTreeMap;

use esap_core::corpus::{token_texts, ChunkConfig, Document};
use esap_core::eval::published::{retrieval_chunk1000, retrieval_chunk500};
use esap_core::eval::synthetic::planted;
use esap_core::eval::{
    parse_dataset_jsonl, run_retrieval_benchmark, BenchmarkConfig, EvalError, RetrievalMode,
};
use esap_core::exec::Execution;
use esap_core::index::{HybridIndex, IndexConfig};
use esap_core::ports::HashEmbedder;

fn planted_run(exec: Execution) -> (esap_core::eval::BenchmarkRun, Vec<f64>) {
    let corpus = planted(100, 400, 42);
    let e = HashEmbedder::default();
    let config = IndexConfig {
        chunk: ChunkConfig::new(500, 50).unwrap(),
        ..IndexConfig::default()
    };
    let index = HybridIndex::build(&corpus.docs, config, &e).unwrap();
    assert_eq!(index.len(), 100, "one chunk per planted document");
    let docs: BTreeMap<String, Document> = corpus.docs.iter().map(|d| (d.doc_id.clone(), d.clone())).collect();
    let cfg = BenchmarkConfig {
        mode: RetrievalMode::Lexical,
        ..BenchmarkConfig::default()
    };
    let run = run_retrieval_benchmark(std::slice::from_ref(&corpus.dataset), &docs, &index, &e, &cfg, exec).unwrap();
    // Evidence share of each single-chunk document, counted from the text.
    let ratios = corpus
        .docs
        .iter()
        .zip(&corpus.truth)
        .map(|(d, t)| {
            let total = token_texts(&d.text).len();
            assert_eq!(total, t.doc_tokens);
            11.0 / total as f64
        })
        .collect();
    (run, ratios)
}

#[test]
fn planted_evidence_is_found_first() {
    let (run, ratios) = planted_run(Execution::Parallel);
    let row = run.report.row("planted").unwrap();
    assert_eq!(row.questions, 100);
    assert_eq!(row.recall[0], 100.0);
    let expected = 100.0 * ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((row.precision[0] - expected).abs() < 1e-9, "{} vs {expected}", row.precision[0]);
    for (_, q) in &run.per_question {
        assert!(q.recall_monotone(), "{}", q.qid);
    }
    run.report.check_monotone().unwrap();
}

#[test]
fn worker_count_does_not_change_report() {
    let (a, _) = planted_run(Execution::Parallel);
    let (b, _) = planted_run(Execution::Sequential);
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.render_text(), b.report.render_text());
}

#[test]
fn published_rows_replay() {
    let t500 = retrieval_chunk500();
    let text = t500.render_text();
    let privacy = text.lines().find(|l| l.starts_with("PrivacyQA")).unwrap();
    let recall_cells: Vec<&str> = privacy.split('|').nth(1).unwrap().split_whitespace().collect();
    assert_eq!(recall_cells, ["18.15", "25.87", "49.28", "64.07", "85.63", "96.47"]);
    let t1000 = retrieval_chunk1000();
    let cuad = t1000.row("CUAD").unwrap();
    assert_eq!(format!("{:.2}", cuad.recall[5]), "62.30");
    let text = t1000.render_text();
    let cuad_line = text.lines().find(|l| l.starts_with("CUAD")).unwrap();
    assert_eq!(cuad_line.split('|').nth(1).unwrap().split_whitespace().last(), Some("62.30"));
    t500.check_monotone().unwrap();
    t1000.check_monotone().unwrap();
    assert_eq!(t500.config.ks, [1, 2, 4, 8, 16, 50]);
}

#[test]
fn dataset_errors_cite_lines() {
    let input = "{\"qid\":\"a\",\"question\":\"q\",\"evidence\":[]}\nnot json\n";
    match parse_dataset_jsonl("x", input) {
        Err(EvalError::DatasetFormat { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_evidence_excludes_question() {
    let docs = [Document::new("d", 1, "alpha beta gamma delta")];
    let e = HashEmbedder::default();
    let index = HybridIndex::build(&docs, IndexConfig::default(), &e).unwrap();
    let ds = parse_dataset_jsonl(
        "t",
        concat!(
            "{\"qid\":\"1\",\"question\":\"beta\",\"evidence\":[{\"doc_id\":\"d\",\"quote\":\"Beta  GAMMA\"}]}\n",
            "{\"qid\":\"2\",\"question\":\"beta\",\"evidence\":[{\"doc_id\":\"d\",\"quote\":\"omega\"}]}\n"
        ),
    )
    .unwrap();
    let docs: BTreeMap<_, _> = docs.iter().map(|d| (d.doc_id.clone(), d.clone())).collect();
    let run = run_retrieval_benchmark(&[ds], &docs, &index, &e, &BenchmarkConfig::default(), Execution::Sequential)
        .unwrap();
    let row = run.report.row("t").unwrap();
    assert_eq!((row.questions, row.excluded), (1, 1));
    assert_eq!(row.recall[0], 100.0);
    assert_eq!(row.precision[0], 50.0);
}
