mod common;

use common::{check_ranking, Oracle};
use passage_rank::{load_index, save_index, Bm25Index, Bm25Params, IndexBuilder};
use proptest::prelude::*;

fn build(docs: &[Vec<String>]) -> Bm25Index {
    let mut b = IndexBuilder::new(Bm25Params::default()).unwrap();
    for (i, d) in docs.iter().enumerate() {
        b.add(format!("d{i}"), d).unwrap();
    }
    b.finish().unwrap()
}

fn corpus() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<Vec<String>>)> {
    (1usize..=30).prop_flat_map(|vocab| {
        let word = (0..vocab).prop_map(|w| format!("w{w}"));
        let docs = prop::collection::vec(prop::collection::vec(word.clone(), 0..12), 1..=50);
        let queries = prop::collection::vec(prop::collection::vec(word, 1..6), 1..8);
        (docs, queries)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn topk_matches_brute_force((docs, queries) in corpus(), k in 1usize..60) {
        prop_assume!(docs.iter().any(|d| !d.is_empty()));
        let oracle = Oracle::new(docs.clone());
        let index = build(&docs);
        for q in &queries {
            let want = oracle.ranking(q);
            let all: Vec<f64> = (0..docs.len()).map(|d| oracle.score(q, d)).collect();
            let got: Vec<(usize, f64)> = index.top_ordinals(q, k).iter().map(|h| (h.ordinal as usize, h.score)).collect();
            let want = &want[..want.len().min(k)];
            if let Err(e) = check_ranking(&got, want, &all, 1e-9) {
                return Err(TestCaseError::fail(format!("query {q:?}: {e}")));
            }
            for d in 0..docs.len() {
                prop_assert!((index.score(q, d as u32) - oracle.score(q, d)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn stored_idf_follows_floor_rule((docs, _) in corpus()) {
        prop_assume!(docs.iter().any(|d| !d.is_empty()));
        let oracle = Oracle::new(docs.clone());
        let index = build(&docs);
        for t in index.terms().map(str::to_owned).collect::<Vec<_>>() {
            let want = oracle.idf(&t);
            prop_assert!((index.idf(&t).unwrap() - want).abs() <= 1e-12, "{t}");
            prop_assert!(index.idf(&t).unwrap() > 0.0);
        }
    }

    #[test]
    fn persisted_index_answers_identically((docs, queries) in corpus()) {
        let index = build(&docs);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.bin");
        save_index(&index, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        for q in &queries {
            prop_assert_eq!(index.top_ordinals(q, 20), loaded.top_ordinals(q, 20));
        }
    }
}

#[test]
fn rebuilding_gives_identical_file() {
    let docs: Vec<Vec<String>> = (0..300)
        .map(|i| {
            (0..(i % 17 + 1))
                .map(|j| format!("t{}", (i * 31 + j * 7) % 97))
                .collect()
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    save_index(&build(&docs), &a).unwrap();
    save_index(&build(&docs), &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn corpus_of_one_repeated_term_still_retrieves() {
    // Every raw IDF is negative here; the floor falls back to smoothed IDF.
    let docs = vec![vec!["a".to_owned()]; 4];
    let index = build(&docs);
    let hits = index.top_ordinals(&["a"], 10);
    assert_eq!(hits.iter().map(|h| h.ordinal).collect::<Vec<_>>(), [0, 1, 2, 3]);
    assert!(hits.iter().all(|h| h.score > 0.0));
}
