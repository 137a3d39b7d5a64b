use proptest::prelude::*;

use searchain::coq::{normalize_query, parse_coq, render_coq, ChainOfQuery, CoqNode};
use searchain::metrics::{cover_em, rouge_l};
use searchain::retrieval::Document;
use searchain::tor::{record_correct, CorrectPath, KnowledgeSource};
use searchain::tracing::attach_references;

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z0-9][a-z0-9,'()-]{0,8}", 1..6).prop_map(|w| w.join(" "))
}

fn chain() -> impl Strategy<Value = ChainOfQuery> {
    (prop::collection::vec((phrase(), phrase()), 1..6), any::<bool>(), prop::option::of(phrase())).prop_map(
        |(pairs, last_unsolved, final_answer)| {
            let n = pairs.len();
            let nodes = pairs
                .into_iter()
                .enumerate()
                .map(|(i, (q, a))| {
                    if i + 1 == n && last_unsolved {
                        CoqNode::unsolved(i + 1, q)
                    } else {
                        CoqNode::solved(i + 1, q, a)
                    }
                })
                .collect();
            ChainOfQuery { nodes, final_answer }
        },
    )
}

proptest! {
    #[test]
    fn render_parse_identity(c in chain()) {
        let report = parse_coq(&render_coq(&c));
        prop_assert!(!report.has_fatal());
        prop_assert_eq!(report.chain, Some(c));
    }

    #[test]
    fn normalize_is_idempotent(s in "[ A-Za-z?.!\t]{0,40}") {
        let once = normalize_query(&s);
        prop_assert_eq!(normalize_query(&once), once.clone());
        prop_assert!(!once.ends_with(['?', '.', '!', ' ']));
    }

    #[test]
    fn rouge_is_symmetric_and_bounded(a in "[abc ]{0,30}", b in "[abc ]{0,30}") {
        let ab = rouge_l(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, rouge_l(&b, &a));
        if !a.trim().is_empty() {
            prop_assert_eq!(rouge_l(&a, &a), 1.0);
        }
    }

    #[test]
    fn cover_em_reflexive(s in "[A-Za-z][A-Za-z ]{0,20}") {
        prop_assert_eq!(cover_em(&s, &s), 1);
        prop_assert_eq!(cover_em(&format!("x {s} y"), &s.to_uppercase()), 1);
    }

    #[test]
    fn correct_path_keeps_one_entry_per_query(queries in prop::collection::vec("[ab]{1,2}[?]?", 1..20)) {
        let doc = Document::new("d", "", "t");
        let mut path = CorrectPath::default();
        for (i, q) in queries.iter().enumerate() {
            path = record_correct(path, q, &i.to_string(), doc.clone(), KnowledgeSource::FromLlm);
        }
        let mut first_seen: Vec<String> = Vec::new();
        for q in &queries {
            let n = normalize_query(q);
            if !first_seen.contains(&n) {
                first_seen.push(n);
            }
        }
        let got: Vec<String> = path.entries.iter().map(|e| normalize_query(&e.query)).collect();
        prop_assert_eq!(got, first_seen.clone());
        for e in &path.entries {
            let last = queries.iter().rposition(|q| normalize_query(q) == normalize_query(&e.query)).unwrap();
            prop_assert_eq!(&e.answer, &last.to_string());
        }
    }

    #[test]
    fn reference_marks_strip_back_to_source(
        words in prop::collection::vec("[a-z]{1,6}", 3..15),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..4),
    ) {
        let text = words.join(" ") + ".";
        let doc = Document::new("d", "", "t");
        let mut path = CorrectPath::default();
        for (k, p) in picks.iter().enumerate() {
            path = record_correct(path, &format!("q{k}"), p.get(&words), doc.clone(), KnowledgeSource::FromLlm);
        }
        let content = attach_references(&text, &path);
        prop_assert_eq!(&content.source_text, &text);
        let mut stripped = content.text.clone();
        for r in &content.references {
            stripped = stripped.replacen(&format!("[{}]", r.mark), "", 1);
        }
        prop_assert_eq!(stripped, text);
        let chars: Vec<char> = content.text.chars().collect();
        for r in &content.references {
            let entry = path.entries.iter().find(|e| e.query == r.query).unwrap();
            if let Some((s, e)) = r.char_span {
                let anchored: String = chars[s..e].iter().collect();
                prop_assert_eq!(anchored.to_lowercase(), entry.answer.to_lowercase());
            }
        }
        let marks: Vec<usize> = content.references.iter().map(|r| r.mark).collect();
        prop_assert_eq!(marks, (1..=content.references.len()).collect::<Vec<_>>());
    }
}
