//! Property tests for the feedback math on randomly generated stores.

use std::collections::{BTreeSet, HashMap};

use mbc_core::board::{BoardState, GridCoord, PositionWeights, GRID_ORDER};
use mbc_core::embedding::{cosine, EmbeddingStore};
use mbc_core::feedback::{
    board_mean, board_mean_with_negatives, new_query, BoardVector, ConceptSpace,
};
use mbc_core::imagery::{Field, LabelScore, LabeledImage};
use mbc_core::Config;
use proptest::prelude::*;

const DIM: usize = 6;

fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{}", letters(i))).collect()
}

// Query tokens must be alphabetic, so name words aa, ab, ...
fn letters(i: usize) -> String {
    let a = (b'a' + (i / 26) as u8) as char;
    let b = (b'a' + (i % 26) as u8) as char;
    format!("{a}{b}")
}

fn store_strategy(n: usize) -> impl Strategy<Value = EmbeddingStore> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, DIM), n)
        .prop_filter("rows need length", |rows| {
            rows.iter()
                .all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        })
        .prop_map(move |rows| EmbeddingStore::from_rows(words(n).into_iter().zip(rows)).unwrap())
}

fn image(id: &str, labels: Vec<(String, f64)>) -> LabeledImage {
    LabeledImage {
        id: id.into(),
        uri: String::new(),
        field: Field::Architecture,
        labels: labels
            .into_iter()
            .map(|(l, s)| LabelScore::new(l, s))
            .collect(),
        source_rank: 1,
    }
}

/// Board of `count` images whose labels are drawn from words 2.. of the store.
fn board_strategy(vocab: usize) -> impl Strategy<Value = Vec<Vec<(usize, f64)>>> {
    prop::collection::vec(prop::collection::vec((2..vocab, 0.05f64..1.0), 1..5), 1..=9)
}

fn build(
    store: &EmbeddingStore,
    layout: &[Vec<(usize, f64)>],
) -> (BoardState, HashMap<String, LabeledImage>) {
    let vocab = store.vocab();
    let mut board = BoardState::new(&vocab[0], &vocab[1]);
    let mut catalog = HashMap::new();
    for (i, labels) in layout.iter().enumerate() {
        let id = format!("img-{i}");
        let labels = labels.iter().map(|&(w, s)| (vocab[w].clone(), s)).collect();
        board.put(GRID_ORDER[i], id.clone()).unwrap();
        catalog.insert(id.clone(), image(&id, labels));
    }
    (board, catalog)
}

fn words_of(u: &BoardVector, space: &ConceptSpace, store: &EmbeddingStore) -> Vec<String> {
    let update = new_query(space, u, store, &Config::default()).unwrap();
    update.top_n.into_iter().map(|r| r.word).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moving_toward_w1_steers_toward_w1(
        w1 in prop::collection::vec(-1.0f64..1.0, DIM),
        w2 in prop::collection::vec(-1.0f64..1.0, DIM),
        b_cell in 0usize..9,
    ) {
        let b_at = GRID_ORDER[b_cell];
        prop_assume!(b_at != GridCoord::at(2, 2) && b_at != GridCoord::at(2, 3));
        let store = EmbeddingStore::from_rows([("wa", w1), ("wb", w2)]);
        prop_assume!(store.is_ok());
        let store = store.unwrap();
        let v1 = store.vector_of("wa").unwrap();
        let v2 = store.vector_of("wb").unwrap();
        prop_assume!(cosine(&v1.values, &v2.values).unwrap().abs() < 0.999);
        let space = ConceptSpace::new(&store, "wa", "wb").unwrap();
        let pw = PositionWeights::default();
        let mut catalog = HashMap::new();
        catalog.insert("a".to_string(), image("a", vec![("wa".into(), 1.0)]));
        catalog.insert("b".to_string(), image("b", vec![("wb".into(), 1.0)]));
        let mut board = BoardState::new("wa", "wb");
        board.put(GridCoord::at(2, 2), "a").unwrap();
        board.put(b_at, "b").unwrap();
        let before = board_mean(&board, &catalog, &pw, &space, &store).unwrap();
        board.move_image("a", GridCoord::at(2, 3)).unwrap();
        let after = board_mean(&board, &catalog, &pw, &space, &store).unwrap();
        let c = |u: &BoardVector, v: &[f64]| cosine(&u.values, v).unwrap();
        prop_assert!(c(&after, &v1.values) > c(&before, &v1.values));
        prop_assert!(c(&after, &v2.values) < c(&before, &v2.values));
    }

    #[test]
    fn striking_a_positive_label_pushes_u_away(
        store in store_strategy(12),
        layout in board_strategy(12),
        g in 2usize..12,
    ) {
        let (board, catalog) = build(&store, &layout);
        let space = ConceptSpace::new(&store, &store.vocab()[0], &store.vocab()[1]).unwrap();
        let pw = PositionWeights::default();
        let u = board_mean(&board, &catalog, &pw, &space, &store).unwrap();
        let word = store.vocab()[g].clone();
        let vg = store.vector_of(&word).unwrap();
        let before = cosine(&u.values, &vg.values);
        prop_assume!(before.is_ok());
        let before = before.unwrap();
        // Collinear U cannot rotate away from g.
        prop_assume!(before > 0.0 && before < 0.999_999);
        let negatives: BTreeSet<String> = [word].into_iter().collect();
        let u_new = board_mean_with_negatives(&board, &catalog, &pw, &space, &store, &negatives).unwrap();
        let after = cosine(&u_new.values, &vg.values).unwrap();
        prop_assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn uniform_weight_scaling_keeps_the_ranking(
        store in store_strategy(40),
        layout in board_strategy(40),
        factor in 0.1f64..10.0,
    ) {
        let (board, catalog) = build(&store, &layout);
        let space = ConceptSpace::new(&store, &store.vocab()[0], &store.vocab()[1]).unwrap();
        let pw = PositionWeights::default();
        let u = board_mean(&board, &catalog, &pw, &space, &store).unwrap();
        prop_assume!(u.values.iter().any(|x| x.abs() > 1e-9));
        let scaled = board_mean(&board, &catalog, &pw.scaled(factor).unwrap(), &space, &store).unwrap();
        prop_assert_eq!(words_of(&u, &space, &store), words_of(&scaled, &space, &store));
    }

    #[test]
    fn no_negatives_matches_plain_mean_bitwise(
        store in store_strategy(12),
        layout in board_strategy(12),
    ) {
        let (board, catalog) = build(&store, &layout);
        let space = ConceptSpace::new(&store, &store.vocab()[0], &store.vocab()[1]).unwrap();
        let pw = PositionWeights::default();
        let a = board_mean(&board, &catalog, &pw, &space, &store).unwrap();
        let b = board_mean_with_negatives(&board, &catalog, &pw, &space, &store, &BTreeSet::new()).unwrap();
        let bits = |v: &BoardVector| v.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }
}
