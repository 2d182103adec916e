//! Planted-evidence corpora: every question's evidence sentence sits in
//! exactly one single-chunk document and carries codes found nowhere else.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::retrieval::{Dataset, Evidence, QaRecord};
use crate::corpus::Document;

const FILLER: &[&str] = &[
    "the", "contract", "party", "shall", "notice", "term", "agreement", "data", "policy", "service", "user",
    "provider", "written", "consent", "period", "payment", "within", "days", "of", "any", "breach", "law",
    "governing", "records", "access", "review", "annual", "report", "must", "may", "not", "be", "disclosed",
];

const EVIDENCE_WORDS: usize = 11;

#[derive(Debug, Clone)]
pub struct PlantedQuestion {
    pub qid: String,
    pub doc_id: String,
    pub evidence_tokens: usize,
    pub doc_tokens: usize,
}

impl PlantedQuestion {
    pub fn precision_at_1(&self) -> f64 {
        self.evidence_tokens as f64 / self.doc_tokens as f64
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub docs: Vec<Document>,
    pub dataset: Dataset,
    pub truth: Vec<PlantedQuestion>,
}

fn code(i: usize, j: usize) -> String {
    format!("zq{i:04}x{j}")
}

fn filler_sentence(rng: &mut ChaCha8Rng, words: usize) -> Vec<&'static str> {
    (0..words).map(|_| *FILLER.choose(rng).expect("non-empty")).collect()
}

/// `questions` documents of at most `max_tokens` tokens each.
pub fn planted(questions: usize, max_tokens: usize, seed: u64) -> PlantedCorpus {
    assert!(max_tokens >= EVIDENCE_WORDS + 10, "documents too small for planted evidence");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(questions);
    let mut records = Vec::with_capacity(questions);
    let mut truth = Vec::with_capacity(questions);
    for i in 0..questions {
        let budget = rng.gen_range(EVIDENCE_WORDS + 10..=max_tokens);
        let filler_words = budget - EVIDENCE_WORDS;
        let before = rng.gen_range(0..=filler_words);
        let codes = [code(i, 0), code(i, 1), code(i, 2)];
        let evidence = format!(
            "The audit code for clause {} is {} {} {} confirmed",
            code(i, 9),
            codes[0],
            codes[1],
            codes[2]
        );
        let mut text = filler_sentence(&mut rng, before).join(" ");
        if !text.is_empty() {
            text.push_str(". ");
        }
        text.push_str(&evidence);
        text.push('.');
        let after = filler_sentence(&mut rng, filler_words - before).join(" ");
        if !after.is_empty() {
            text.push(' ');
            text.push_str(&after);
            text.push('.');
        }
        let doc_id = format!("planted-{i:04}");
        let qid = format!("q{i:04}");
        docs.push(Document::new(doc_id.clone(), 1, text));
        records.push(QaRecord {
            qid: qid.clone(),
            question: format!("Which clause has audit code {} {} {}?", codes[0], codes[1], codes[2]),
            evidence: vec![Evidence {
                doc_id: doc_id.clone(),
                quote: evidence,
            }],
            gold_answer: Some(format!("clause {}", code(i, 9))),
        });
        truth.push(PlantedQuestion {
            qid,
            doc_id,
            evidence_tokens: EVIDENCE_WORDS,
            doc_tokens: budget,
        });
    }
    PlantedCorpus {
        docs,
        dataset: Dataset {
            name: "planted".into(),
            records,
        },
        truth,
    }
}
