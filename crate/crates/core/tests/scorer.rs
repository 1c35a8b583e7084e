//! Scorer laws over generated texts.

use std::collections::HashSet;

use akg_core::evaluation::{run_eval, score_pair, QaItem, Scorer};
use akg_core::llm::HashedTrigramEmbedder;
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-zA-Z]{1,8}", 1..12).prop_map(|w| w.join(" "))
}

fn scorers() -> [Scorer<'static>; 2] {
    [Scorer::ExactToken, Scorer::EmbeddingCosine(&HashedTrigramEmbedder)]
}

/// Fraction of `a`'s lower-cased words that also occur in `b`.
fn covered(a: &str, b: &str) -> f64 {
    let b: HashSet<String> = b.split_whitespace().map(str::to_lowercase).collect();
    let a: Vec<String> = a.split_whitespace().map(str::to_lowercase).collect();
    a.iter().filter(|w| b.contains(*w)).count() as f64 / a.len() as f64
}

#[test]
fn hand_example() {
    let s = score_pair("the model uses attention", "the model uses self attention", &Scorer::ExactToken).unwrap();
    assert_eq!(s.precision, 1.0);
    assert!((s.recall - 0.8).abs() < 1e-12);
    assert!((s.f1 - 0.888889).abs() < 1e-6);
}

#[test]
fn echo_system_is_perfect() {
    let items: Vec<QaItem> = ["Arabic PropBank.", "SVM kernels over parse trees", "DOTA-v1.0 and HRSC2016"]
        .iter()
        .enumerate()
        .map(|(i, r)| QaItem {
            item_id: i.to_string(),
            question: format!("q{i}?"),
            reference_answer: r.to_string(),
            paper_ids: Vec::new(),
        })
        .collect();
    for scorer in scorers() {
        let report = run_eval(|item| Ok(item.reference_answer.clone()), &items, &scorer).unwrap();
        assert_eq!(report.mean.unwrap().f1, 1.0);
        assert_eq!(report.scored, 3);
    }
}

proptest! {
    #[test]
    fn self_score_is_one(x in text()) {
        for scorer in scorers() {
            let s = score_pair(&x, &x, &scorer).unwrap();
            prop_assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn swapping_exchanges_precision_and_recall(a in text(), b in text()) {
        for scorer in scorers() {
            let ab = score_pair(&a, &b, &scorer).unwrap();
            let ba = score_pair(&b, &a, &scorer).unwrap();
            prop_assert!((ab.precision - ba.recall).abs() < 1e-12);
            prop_assert!((ab.recall - ba.precision).abs() < 1e-12);
            prop_assert!((ab.f1 - ba.f1).abs() < 1e-12);
        }
    }

    #[test]
    fn scores_are_bounded(a in text(), b in text()) {
        for scorer in scorers() {
            let s = score_pair(&a, &b, &scorer).unwrap();
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn exact_scorer_counts_covered_tokens(a in text(), b in text()) {
        let s = score_pair(&a, &b, &Scorer::ExactToken).unwrap();
        prop_assert!((s.precision - covered(&a, &b)).abs() < 1e-12);
        prop_assert!((s.recall - covered(&b, &a)).abs() < 1e-12);
    }
}
