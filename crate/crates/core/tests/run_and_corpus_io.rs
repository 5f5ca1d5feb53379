use std::collections::BTreeMap;

use humir_core::corpus::{
    parse_corpus, parse_qrels, parse_topics, write_documents, write_topics, Document, TextFormat,
    Topic,
};
use humir_core::run::{format_run, parse_run_str, Validation};
use humir_core::{Error, RankedList, ScoredDoc};
use proptest::prelude::*;

fn id() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_.:-]{1,8}"
}

fn run_strategy() -> impl Strategy<Value = Vec<RankedList>> {
    prop::collection::btree_map(
        id(),
        prop::collection::btree_map(id(), -1e6f64..1e6, 0..15),
        1..6,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|(t, docs)| {
                // Round to the six decimals the file keeps so the round trip
                // is exact.
                let entries = docs
                    .into_iter()
                    .map(|(d, s)| {
                        ScoredDoc::new(d, format!("{s:.6}").parse::<f64>().unwrap() + 0.0)
                    })
                    .collect();
                RankedList::from_unsorted(t, entries).unwrap()
            })
            .collect()
    })
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.!?'\"é\t\\\\]{1,40}".prop_filter("non-blank", |s| !s.trim().is_empty())
}

proptest! {
    #[test]
    fn run_round_trip(lists in run_strategy()) {
        let text = format_run(&lists, "tag").unwrap();
        prop_assert_eq!(text.lines().count(), lists.iter().map(RankedList::len).sum::<usize>());
        let back = parse_run_str(&text, "mem", Validation::Strict).unwrap();
        let non_empty: Vec<&RankedList> = lists.iter().filter(|l| !l.is_empty()).collect();
        prop_assert_eq!(back.len(), non_empty.len());
        for (a, b) in back.iter().zip(non_empty) {
            prop_assert_eq!(a, b);
        }
        prop_assert_eq!(format_run(&back, "tag").unwrap(), text);
    }

    #[test]
    fn lenient_parse_restores_canonical_order(lists in run_strategy(), seed in any::<u64>()) {
        let text = format_run(&lists, "t").unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let mut r = humir_testkit::rng(seed);
        rand::seq::SliceRandom::shuffle(lines.as_mut_slice(), &mut r);
        let back = parse_run_str(&lines.join("\n"), "mem", Validation::Lenient).unwrap();
        for l in &back {
            l.validate_canonical().unwrap();
            let orig = lists.iter().find(|x| x.topic_id == l.topic_id).unwrap();
            prop_assert_eq!(l, orig);
        }
    }

    #[test]
    fn jsonl_corpus_round_trip(docs in prop::collection::btree_map(id(), text(), 1..10)) {
        let docs: Vec<Document> = docs
            .into_iter()
            .map(|(doc_id, text)| Document { doc_id, text, meta: BTreeMap::new() })
            .collect();
        let out = write_documents(&docs, TextFormat::Jsonl).unwrap();
        prop_assert_eq!(parse_corpus(out.as_bytes(), TextFormat::Jsonl, "mem").unwrap(), docs);
    }

    #[test]
    fn tsv_topics_round_trip(topics in prop::collection::btree_map(id(), "[a-z ?!]{1,30}", 1..10)) {
        let topics: Vec<Topic> = topics
            .into_iter()
            .filter(|(_, t)| !t.trim().is_empty())
            .map(|(topic_id, text)| Topic { topic_id, text })
            .collect();
        let out = write_topics(&topics, TextFormat::Tsv).unwrap();
        prop_assert_eq!(parse_topics(out.as_bytes(), TextFormat::Tsv, "mem").unwrap(), topics);
    }
}

#[test]
fn strict_parse_names_the_bad_line() {
    let text = "q1 Q0 a 1 0.9 t\nq1 Q0 b 2 0.95 t\n";
    let err = parse_run_str(text, "r.txt", Validation::Strict).unwrap_err();
    assert!(
        matches!(err, Error::InvalidRanking(_) | Error::Parse { .. }),
        "{err}"
    );
    assert!(parse_run_str(text, "r.txt", Validation::Lenient).is_ok());
}

#[test]
fn qrels_binarise_graded_labels() {
    let q = parse_qrels(b"1 0 a 2\n1 0 b 0\n1 0 c -1\n2 0 a 1\n", "q").unwrap();
    assert_eq!(q.num_relevant("1"), 1);
    assert!(q.is_relevant("1", "a"));
    assert!(!q.is_relevant("1", "c"));
    assert_eq!(q.len(), 4);
}

#[test]
fn crlf_and_blank_lines_are_tolerated() {
    let docs = parse_corpus(b"a\tone\r\n\r\nb\ttwo\tthree\r\n", TextFormat::Tsv, "c").unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[1].text, "two\tthree");
}

#[test]
fn invalid_utf8_reports_the_line() {
    let err = parse_corpus(b"a\tok\nb\t\xff\n", TextFormat::Tsv, "c").unwrap_err();
    assert!(matches!(err, Error::Encoding { line: 2, .. }), "{err}");
}
