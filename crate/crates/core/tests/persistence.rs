mod common;

use akg_core::graph::{GraphStore, SnapshotError};
use proptest::prelude::*;

#[test]
fn twenty_random_graphs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let g = common::random_graph(seed, 2 + seed as usize % 5, 40, 120);
        let path = dir.path().join(format!("g{seed}.snap"));
        g.save(&path).unwrap();
        let back = GraphStore::load(&path).unwrap();
        assert_eq!(back, g, "seed {seed}");
        assert_eq!(back.stats(), g.stats(), "seed {seed}");
        for e in g.entities() {
            assert_eq!(back.find(e.kind, &e.surface), Some(e.entity_id));
        }
        assert_eq!(back.to_snapshot_string(), g.to_snapshot_string());
        back.check_integrity().unwrap();
    }
}

#[test]
fn every_truncation_is_rejected() {
    let g = common::random_graph(7, 3, 15, 30);
    let text = g.to_snapshot_string();
    for cut in (0..text.len()).filter(|&i| text.is_char_boundary(i)) {
        match GraphStore::from_snapshot_str(&text[..cut]) {
            Err(SnapshotError::Corrupt(_)) => {}
            other => panic!("prefix of {cut} bytes: {other:?}"),
        }
    }
}

#[test]
fn flipped_body_byte_is_rejected() {
    let g = common::random_graph(8, 3, 15, 30);
    let text = g.to_snapshot_string();
    let at = text.find("\n---\n").unwrap() + 7;
    let mut bytes = text.into_bytes();
    bytes[at] = if bytes[at] == b'0' { b'1' } else { b'0' };
    let tampered = String::from_utf8(bytes).unwrap();
    assert!(matches!(GraphStore::from_snapshot_str(&tampered), Err(SnapshotError::Corrupt(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_is_a_fixed_point(seed in any::<u64>(), papers in 1usize..6, elements in 0usize..30) {
        let g = common::random_graph(seed, papers, elements, elements * 2);
        let text = g.to_snapshot_string();
        let back = GraphStore::from_snapshot_str(&text).unwrap();
        prop_assert_eq!(back.to_snapshot_string(), text);
        prop_assert_eq!(back.stats(), g.stats());
    }
}
