//! The ontology checked against an independently transcribed relation table.

use std::collections::BTreeSet;

use akg_core::schema::{all_signatures, validate_triple, EntityKind, RelationKind};

/// (relation display name, source label, target label), one row per
/// signature, written out by hand independently of the schema module.
const TABLE: [(&str, &str, &str); 29] = [
    ("writes", "Author", "Title"),
    ("works for", "Author", "Institution"),
    ("publishes", "Title", "Conference"),
    ("is written in", "Title", "Date"),
    ("belongs to", "Title", "Field"),
    ("keywords", "Title", "Keywords"),
    ("solves", "Title", "Problem"),
    ("solves", "Method", "Problem"),
    ("solves", "Model", "Problem"),
    ("adopts", "Title", "Method"),
    ("proposes", "Title", "Model"),
    ("proposes", "Method", "Model"),
    ("works on", "Title", "Task"),
    ("works on", "Method", "Task"),
    ("works on", "Model", "Task"),
    ("innovates", "Title", "Innovation"),
    ("innovates", "Method", "Innovation"),
    ("experiments on", "Title", "Dataset"),
    ("experiments on", "Task", "Dataset"),
    ("experiments on", "Model", "Dataset"),
    ("uses", "Title", "Metric"),
    ("uses", "Task", "Metric"),
    ("uses", "Model", "Metric"),
    ("faces", "Task", "Problem"),
    ("achieves", "Title", "Result"),
    ("achieves", "Method", "Result"),
    ("achieves", "Model", "Result"),
    ("Direct use", "Title", "Title"),
    ("Task correlation", "Title", "Title"),
];

fn oracle() -> BTreeSet<(RelationKind, EntityKind, EntityKind)> {
    TABLE
        .iter()
        .map(|(r, s, t)| (r.parse().unwrap(), s.parse().unwrap(), t.parse().unwrap()))
        .collect()
}

#[test]
fn fifteen_kinds_and_seventeen_relations() {
    assert_eq!(EntityKind::ALL.len(), 15);
    assert_eq!(EntityKind::ALL.iter().collect::<BTreeSet<_>>().len(), 15);
    assert_eq!(RelationKind::ALL.len(), 17);
    let names: BTreeSet<RelationKind> = TABLE.iter().map(|r| r.0.parse().unwrap()).collect();
    assert_eq!(names.len(), 17);
    for r in RelationKind::ALL {
        assert!(TABLE.iter().any(|row| row.0 == r.display_name()), "{r}");
    }
}

#[test]
fn signatures_match_the_table() {
    let ours: BTreeSet<(RelationKind, EntityKind, EntityKind)> = all_signatures()
        .into_iter()
        .map(|s| (s.relation, s.source, s.target))
        .collect();
    assert_eq!(all_signatures().len(), 29);
    assert_eq!(ours, oracle());
}

#[test]
fn validate_triple_on_every_combination() {
    let table = oracle();
    let mut legal = 0;
    for s in EntityKind::ALL {
        for r in RelationKind::ALL {
            for o in EntityKind::ALL {
                let expected = table.contains(&(r, s, o));
                assert_eq!(validate_triple(s, r, o).is_ok(), expected, "{s} {r} {o}");
                legal += usize::from(expected);
            }
        }
    }
    assert_eq!(legal, 29);
}
