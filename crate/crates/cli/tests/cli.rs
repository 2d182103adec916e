mod common;

use common::{esap, esap_env, fixtures, ok, write, TOY_CORPUS};

fn toy_kb() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("corpus.jsonl"), TOY_CORPUS);
    ok(dir.path(), &["ingest", "--corpus", "corpus.jsonl", "--kb", "kb"]);
    ok(dir.path(), &["index", "--kb", "kb"]);
    dir
}

#[test]
fn ingest_counts_new_and_updated() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = concat!(
        "{\"id\":\"a\",\"text\":\"one\"}\n",
        "{\"id\":\"b\",\"text\":\"two\",\"extra\":1}\n",
        "{\"id\":\"c\",\"text\":\"three\"}\n"
    );
    write(&dir.path().join("c.jsonl"), corpus);
    let first = ok(dir.path(), &["ingest", "--corpus", "c.jsonl", "--kb", "kb"]);
    assert_eq!(first.stdout, "ingested=3 updated=0\n");
    let second = ok(dir.path(), &["ingest", "--corpus", "c.jsonl", "--kb", "kb"]);
    assert_eq!(second.stdout, "ingested=0 updated=3\n");
    assert!(dir.path().join("kb/docs/a/1.json").is_file());
    assert!(dir.path().join("kb/docs/a/2.json").is_file());
    let audit = std::fs::read_to_string(dir.path().join("kb/audit.log")).unwrap();
    assert_eq!(audit.lines().count(), 6);
}

#[test]
fn malformed_corpus_line_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("bad.jsonl"), "{\"id\":\"a\",\"text\":\"ok\"}\n{not json\n");
    let run = esap(dir.path(), &["ingest", "--corpus", "bad.jsonl", "--kb", "kb"]);
    assert_eq!(run.code, 2);
    let err = run.error();
    assert!(err["message"].as_str().unwrap().contains("line 2"), "{err}");
    assert!(!dir.path().join("kb/docs/a").exists());
}

#[test]
fn index_echoes_chunk_config() {
    let dir = toy_kb();
    let run = ok(dir.path(), &["index", "--kb", "kb"]);
    let v = run.json();
    assert_eq!(v["result"]["chunk_size"], 1000);
    assert_eq!(v["result"]["overlap"], 150);
    assert_eq!(v["result"]["chunks"], 3);
    assert_eq!(v["result"]["dim"], 256);
    let small = ok(dir.path(), &["index", "--kb", "kb", "--chunk-size", "500"]).json();
    assert_eq!(small["result"]["chunk_size"], 500);
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("kb/index/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["chunk"]["size"], 500);
    assert_eq!(meta["format_version"], 1);
}

#[test]
fn overlap_not_below_size_is_a_config_error() {
    let dir = toy_kb();
    let run = esap(dir.path(), &["index", "--kb", "kb", "--overlap", "1000", "--chunk-size", "500"]);
    assert_eq!(run.code, 1);
    assert_eq!(run.error()["exit_code"], 1);
}

#[test]
fn query_finds_the_apple() {
    let dir = toy_kb();
    let v = ok(dir.path(), &["query", "--kb", "kb", "--q", "apple", "--k", "1"]).json();
    let hits = v["result"]["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0]["text"], "red apple");
    assert_eq!(hits[0]["rank"], 1);
}

#[test]
fn acl_and_guards_apply_to_queries() {
    let dir = toy_kb();
    let public = ok(dir.path(), &["query", "--kb", "kb", "--q", "quarterly notes access"]).json();
    assert!(public["result"]["hits"].as_array().unwrap().iter().all(|h| h["doc_id"] != "memo"));
    let finance = ok(dir.path(), &["query", "--kb", "kb", "--q", "quarterly notes access", "--principal", "finance"]).json();
    let memo = finance["result"]["hits"].as_array().unwrap().iter().find(|h| h["doc_id"] == "memo").unwrap().clone();
    assert!(memo["text"].as_str().unwrap().contains("[REDACTED:email]"));
    let raw = ok(
        dir.path(),
        &["query", "--kb", "kb", "--q", "quarterly", "--principal", "finance", "--no-guards"],
    )
    .json();
    assert!(raw["result"]["hits"][0]["text"].as_str().unwrap().contains("ops@example.com"));
}

#[test]
fn ask_returns_cited_answer_and_trace() {
    let dir = toy_kb();
    let v = ok(dir.path(), &["ask", "--kb", "kb", "--q", "Which fruit is green?"]).json();
    let answer = &v["result"]["answer"];
    assert_eq!(answer["answer"], "green pear [1]");
    assert_eq!(answer["citations"][0]["doc_id"], "fruit-2");
    assert_eq!(answer["verdict"]["verdict"], "sufficient");
    let stages: Vec<&str> = v["result"]["trace"]["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["refine", "retrieve", "assemble", "generate", "validate"]);
}

#[test]
fn every_json_output_has_headers() {
    let dir = toy_kb();
    for args in [
        vec!["version"],
        vec!["index", "--kb", "kb"],
        vec!["query", "--kb", "kb", "--q", "pear"],
        vec!["ask", "--kb", "kb", "--q", "pear?"],
    ] {
        let v = ok(dir.path(), &args).json();
        assert_eq!(v["tool_version"], env!("CARGO_PKG_VERSION"), "{args:?}");
        assert!(v["config_echo"]["chunk"]["size"].is_u64(), "{args:?}");
    }
}

#[test]
fn missing_index_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = esap(dir.path(), &["query", "--kb", "nowhere", "--q", "x"]);
    assert_eq!(run.code, 2);
    run.error();
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = toy_kb();
    write(&dir.path().join("esap.toml"), "kb = \"kb\"\n[retrieval]\nk = 2\n[eval]\nks = [1, 3]\n");
    let v = ok(dir.path(), &["--config", "esap.toml", "query", "--q", "apple"]).json();
    assert_eq!(v["config_echo"]["retrieval"]["k"], 2);
    let v = ok(dir.path(), &["--config", "esap.toml", "query", "--q", "apple", "--k", "1"]).json();
    assert_eq!(v["config_echo"]["retrieval"]["k"], 1);
    assert_eq!(v["config_echo"]["eval"]["ks"], serde_json::json!([1, 3]));
}

#[test]
fn unknown_config_key_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("bad.toml"), "[thor]\nmax_retry = 2\n");
    let run = esap(dir.path(), &["--config", "bad.toml", "version"]);
    assert_eq!(run.code, 1);
    assert!(run.error()["message"].as_str().unwrap().contains("thor.max_retry"), "{}", run.stderr);
}

/// Every leaf key of the configuration, paired with the flag that sets it.
const KEY_FLAGS: &[(&str, &str)] = &[
    ("kb", "--kb"),
    ("seed", "--seed"),
    ("chunk.size", "--chunk-size"),
    ("chunk.overlap", "--overlap"),
    ("retrieval.k", "--k"),
    ("retrieval.rrf_c", "--rrf-c"),
    ("retrieval.overfetch", "--overfetch"),
    ("retrieval.k1", "--k1"),
    ("retrieval.b", "--b"),
    ("ann.m", "--ann-m"),
    ("ann.ef_c", "--ef-c"),
    ("ann.ef_s", "--ef-s"),
    ("ann.exact_threshold", "--exact-threshold"),
    ("ports.mode", "--ports"),
    ("ports.script", "--script"),
    ("ports.embedder", "--embedder"),
    ("ports.embed_dim", "--embed-dim"),
    ("ports.api_key_env", "--api-key-env"),
    ("ports.base_url_env", "--base-url-env"),
    ("ports.model_env", "--model-env"),
    ("thor.max_retries", "--max-retries"),
    ("thor.threshold", "--threshold"),
    ("thor.allow_empty", "--allow-empty"),
    ("thor.database", "--db"),
    ("eval.ks", "--ks"),
    ("eval.ngram_n", "--ngram-n"),
    ("answer.support_threshold", "--support-threshold"),
    ("answer.max_regenerations", "--max-regenerations"),
    ("persona.objective", "--objective"),
    ("persona.style", "--style"),
    ("persona.tone", "--tone"),
    ("persona.audience", "--audience"),
    ("persona.response", "--response"),
    ("persona.strict", "--strict"),
    ("guards", "--guard"),
];

fn leaf_keys(prefix: &str, v: &serde_json::Value, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(map) if prefix != "guards" => {
            for (k, child) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaf_keys(&path, child, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

#[test]
fn config_keys_and_flags_correspond() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("db.sqlite"), "");
    let echo = ok(
        dir.path(),
        &["version", "--ports", "scripted:s.json", "--db", "db.sqlite"],
    )
    .json()["config_echo"]
        .clone();
    let mut keys = Vec::new();
    leaf_keys("", &echo, &mut keys);
    keys.sort();
    let mut mapped: Vec<String> = KEY_FLAGS.iter().map(|(k, _)| k.to_string()).collect();
    mapped.sort();
    assert_eq!(keys, mapped);

    let help = ok(dir.path(), &["--help"]).stdout;
    for (_, flag) in KEY_FLAGS {
        assert!(help.contains(&format!("{flag} ")) || help.contains(&format!("{flag}\n")), "{flag} missing from --help");
    }
    for flag in ["--config", "--pretty", "--max-retries", "--threshold"] {
        assert!(help.contains(flag), "{flag}");
    }
    let sql_help = ok(dir.path(), &["sql", "--help"]).stdout;
    assert!(sql_help.contains("--verbose"));
    let commands = ["ingest", "index", "query", "ask", "sql", "eval-retrieval", "eval-trace", "version"];
    for c in commands {
        assert!(help.contains(c), "{c}");
    }
}

#[test]
fn eval_retrieval_uses_requested_ks() {
    let dir = toy_kb();
    write(
        &dir.path().join("qa.jsonl"),
        "{\"qid\":\"1\",\"question\":\"apple\",\"evidence\":[{\"doc_id\":\"fruit-1\",\"quote\":\"red apple\"}]}\n",
    );
    let v = ok(
        dir.path(),
        &["eval-retrieval", "--kb", "kb", "--dataset", "toy=qa.jsonl", "--ks", "1,2,4,8,16,50"],
    )
    .json();
    let report = &v["result"]["report"];
    assert_eq!(report["config"]["ks"], serde_json::json!([1, 2, 4, 8, 16, 50]));
    assert_eq!(report["rows"][0]["dataset"], "toy");
    assert_eq!(report["rows"][0]["recall"].as_array().unwrap().len(), 6);
    assert_eq!(report["rows"][0]["recall"][0], 100.0);

    let text = ok(
        dir.path(),
        &["eval-retrieval", "--kb", "kb", "--dataset", "qa.jsonl", "--ks", "1,3", "--pretty"],
    )
    .stdout;
    let header = text.lines().nth(1).unwrap();
    assert_eq!(header.matches("k=").count(), 4, "{header}");
    assert!(text.contains("qa "));

    let bad = esap(dir.path(), &["eval-retrieval", "--kb", "kb", "--dataset", "qa.jsonl", "--ks", "4,2"]);
    assert_eq!(bad.code, 1);
}

#[test]
fn dataset_errors_exit_2() {
    let dir = toy_kb();
    write(&dir.path().join("qa.jsonl"), "{\"qid\":\"1\"}\n");
    let run = esap(dir.path(), &["eval-retrieval", "--kb", "kb", "--dataset", "qa.jsonl"]);
    assert_eq!(run.code, 2);
    assert!(run.error()["message"].as_str().unwrap().contains("line 1"));
    write(&dir.path().join("runs.jsonl"), "{\"qid\":\"1\",\"system\":\"s\",\"question\":\"q\",\"answer\":\"a\",\"contexts\":[\"a\"],\"human_accuracy\":9}\n");
    let run = esap(dir.path(), &["eval-trace", "--runs", "runs.jsonl"]);
    assert_eq!(run.code, 2);
}

#[test]
fn sql_fixture_question() {
    let dir = tempfile::tempdir().unwrap();
    let script = fixtures().join("scripts/prompt4_highest_price.json");
    let ports = format!("scripted:{}", script.display());
    let v = ok(
        dir.path(),
        &[
            "sql",
            "--db",
            "music.db",
            "--create-fixture",
            "--ports",
            &ports,
            "--q",
            "Which track has the highest unit price?",
            "--verbose",
        ],
    )
    .json();
    assert_eq!(v["result"]["table"]["rows"][0][0], "Blue Train");
    assert_eq!(v["result"]["log"]["attempts"].as_array().unwrap().len(), 1);
    assert!(v["result"]["narrative"].as_str().unwrap().contains("Blue Train"));
}

#[test]
fn sql_retry_cap_comes_from_flag() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = vec!["\"structured\"".to_string()];
    entries.extend((0..8).map(|_| "\"SELECT nothing FROM chinook_track\"".to_string()));
    write(&dir.path().join("fail.json"), &format!("[{}]", entries.join(",")));
    let run = esap(
        dir.path(),
        &["sql", "--db", "m.db", "--create-fixture", "--ports", "scripted:fail.json", "--max-retries", "1", "--q", "x"],
    );
    assert_eq!(run.code, 2);
    assert_eq!(run.json()["result"]["log"]["attempts"].as_array().unwrap().len(), 2);
    assert!(run.error()["message"].as_str().unwrap().contains("2 attempts"));
}

#[test]
fn missing_http_settings_is_a_config_error() {
    let dir = toy_kb();
    let run = esap(dir.path(), &["ask", "--kb", "kb", "--q", "pear?", "--ports", "http"]);
    assert_eq!(run.code, 1, "{}", run.stderr);
}

#[test]
fn unreachable_model_is_a_port_error() {
    let dir = toy_kb();
    let run = esap_env(
        dir.path(),
        &["ask", "--kb", "kb", "--q", "pear?", "--ports", "http"],
        &[("ESAP_BASE_URL", "http://127.0.0.1:9"), ("ESAP_MODEL", "m")],
    );
    assert_eq!(run.code, 3, "{}", run.stderr);
    assert_eq!(run.error()["error"], "port");
}

#[test]
fn batch_ask_then_trace() {
    let dir = toy_kb();
    write(
        &dir.path().join("questions.jsonl"),
        concat!(
            "{\"qid\":\"q1\",\"question\":\"Which fruit is red?\",\"evidence\":[],\"gold_answer\":\"red apple\"}\n",
            "{\"qid\":\"q2\",\"question\":\"What colour is the pear?\",\"evidence\":[]}\n"
        ),
    );
    let summary = ok(
        dir.path(),
        &["ask", "--kb", "kb", "--questions", "questions.jsonl", "--system", "stub", "--runs-out", "runs.jsonl"],
    )
    .json();
    assert_eq!(summary["result"]["answered"], 2);
    let v = ok(dir.path(), &["eval-trace", "--runs", "runs.jsonl"]).json();
    let row = &v["result"]["rows"][0];
    assert_eq!(row["system"], "stub");
    assert_eq!(row["pc_hallucinated"], 0.0);
    assert_eq!(row["gold_count"], 1);
}
