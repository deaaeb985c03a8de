mod common;

use std::collections::BTreeSet;

use mbc_core::analysis;
use mbc_core::feedback::AlgorithmKind;
use mbc_core::session::{
    run_script, ActionOutcome, CreateParams, DirStorage, ErrorClass, NullStorage, ScriptError,
    SessionScript,
};
use mbc_core::{Action, GridCoord, ImageRef, Session};

use common::*;

fn create(kind: AlgorithmKind, seed: u64) -> Session {
    let params = CreateParams {
        kind,
        w1: "ergonomic".into(),
        w2: "modern".into(),
        seed: Some(seed),
        config: None,
    };
    Session::create(
        &demo_services(),
        format!("t-{kind}-{seed}"),
        params,
        Box::new(NullStorage),
    )
    .unwrap()
}

#[test]
fn create_fills_board_and_logs_record_zero() {
    let s = create(AlgorithmKind::Proposed, 7);
    assert_eq!(s.state().board.len(), 9);
    assert_eq!(s.records().len(), 1);
    let r0 = &s.records()[0];
    assert_eq!(r0.iteration_id, 0);
    assert_eq!(r0.query, vec!["ergonomic", "modern"]);
    assert_eq!(r0.images.len(), 9);
    assert_eq!(r0.filled.len(), 9);
    assert!(r0.cos_w1_u.is_some());
    assert!(r0
        .images
        .iter()
        .all(|e| e.labels.len() <= 5 && e.labels.len() == e.scores.len()));
}

#[test]
fn seed_controls_initial_placement() {
    let a = create(AlgorithmKind::Proposed, 1);
    let b = create(AlgorithmKind::Proposed, 1);
    let c = create(AlgorithmKind::Proposed, 2);
    assert_eq!(a.state().board, b.state().board);
    assert_ne!(a.state().board, c.state().board);
    // Same image set either way.
    let ids = |s: &Session| {
        s.state()
            .board
            .ids()
            .map(String::from)
            .collect::<BTreeSet<_>>()
    };
    assert_eq!(ids(&a), ids(&c));
}

#[test]
fn unknown_axis_word_is_a_validation_error() {
    let params = CreateParams {
        kind: AlgorithmKind::Proposed,
        w1: "ergonomic".into(),
        w2: "zzzz".into(),
        seed: None,
        config: None,
    };
    let err = Session::create(&demo_services(), "x", params, Box::new(NullStorage)).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Validation);
}

#[test]
fn capability_matrix_is_enforced() {
    for kind in AlgorithmKind::ALL {
        let caps = kind.capabilities();
        let attempts = [
            (
                Action::Move {
                    target: ImageRef::cell(1, 1),
                    to: GridCoord::at(3, 3),
                },
                caps.move_image,
            ),
            (
                Action::Delete {
                    target: ImageRef::cell(2, 2),
                },
                caps.delete,
            ),
            (Action::Next, caps.next),
            (Action::Export, caps.export),
        ];
        for (action, allowed) in attempts {
            let mut s = create(kind, 3);
            let name = action.name();
            let res = s.apply(&demo_services(), action);
            if allowed {
                assert!(res.is_ok(), "{kind} {name}: {res:?}");
            } else {
                assert_eq!(
                    res.unwrap_err().class(),
                    ErrorClass::Unsupported,
                    "{kind} {name}"
                );
                assert!(s.journal().is_empty());
            }
        }
        // Strike needs a real label.
        let mut s = create(kind, 3);
        let id = s
            .state()
            .board
            .get(GridCoord::at(1, 1))
            .unwrap()
            .to_string();
        let label = s.state().image(&id).unwrap().labels[0].label.clone();
        let res = s.apply(
            &demo_services(),
            Action::Strike {
                target: ImageRef::id(id),
                label,
            },
        );
        if caps.strike {
            assert!(res.is_ok(), "{kind}: {res:?}");
        } else {
            assert_eq!(res.unwrap_err().class(), ErrorClass::Unsupported);
        }
    }
}

#[test]
fn strike_rejects_labels_not_on_the_image() {
    let mut s = create(AlgorithmKind::Reference2, 3);
    let id = s
        .state()
        .board
        .get(GridCoord::at(2, 2))
        .unwrap()
        .to_string();
    let err = s
        .apply(
            &demo_services(),
            Action::Strike {
                target: ImageRef::id(id),
                label: "queen".into(),
            },
        )
        .unwrap_err();
    assert_eq!(err.class(), ErrorClass::Validation);
}

#[test]
fn acting_on_missing_images_is_not_found() {
    let mut s = create(AlgorithmKind::Proposed, 3);
    let err = s
        .apply(
            &demo_services(),
            Action::Delete {
                target: ImageRef::id("nope"),
            },
        )
        .unwrap_err();
    assert_eq!(err.class(), ErrorClass::NotFound);
    s.apply(
        &demo_services(),
        Action::Delete {
            target: ImageRef::cell(1, 1),
        },
    )
    .unwrap();
    let err = s
        .apply(
            &demo_services(),
            Action::Delete {
                target: ImageRef::cell(1, 1),
            },
        )
        .unwrap_err();
    assert_eq!(err.class(), ErrorClass::NotFound);
}

#[test]
fn next_refills_deleted_cells_with_unseen_images() {
    let svc = demo_services();
    let mut s = create(AlgorithmKind::Proposed, 5);
    let before: BTreeSet<String> = s.state().board.ids().map(String::from).collect();
    for (x, y) in [(1, 1), (2, 1), (3, 1)] {
        s.apply(
            &svc,
            Action::Delete {
                target: ImageRef::cell(x, y),
            },
        )
        .unwrap();
    }
    let ActionOutcome::Iterated(rec) = s.apply(&svc, Action::Next).unwrap() else {
        panic!("expected a record");
    };
    assert_eq!(rec.iteration_id, 1);
    assert_eq!(rec.filled.len(), 3);
    assert!(rec.filled.iter().all(|id| !before.contains(id)));
    assert_eq!(s.state().board.len(), 9);
    assert_eq!(rec.top_n_words.len(), 20);
    assert_eq!(rec.query.len(), 2);
    assert!(!rec.query.contains(&"ergonomic".to_string()));
    assert_eq!(s.state().space.current_query, rec.query);
}

#[test]
fn export_lists_cells_top_row_first() {
    let svc = demo_services();
    let mut s = create(AlgorithmKind::Baseline, 9);
    let ActionOutcome::Exported(doc) = s.apply(&svc, Action::Export).unwrap() else {
        panic!("expected export");
    };
    let order: Vec<(u8, u8)> = doc.cells.iter().map(|c| (c.x, c.y)).collect();
    assert_eq!(
        order,
        vec![
            (1, 3),
            (2, 3),
            (3, 3),
            (1, 2),
            (2, 2),
            (3, 2),
            (1, 1),
            (2, 1),
            (3, 1)
        ]
    );
    for c in &doc.cells {
        let id = c.image_id.as_deref().unwrap();
        assert_eq!(c.uri.as_deref(), Some(format!("/images/{id}").as_str()));
        assert!(!c.labels.is_empty());
    }
}

#[test]
fn dir_storage_persists_meta_log_journal_and_exports() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = demo_services();
    let storage = DirStorage::create(tmp.path(), "persist").unwrap();
    let params = CreateParams {
        kind: AlgorithmKind::Reference2,
        w1: "ergonomic".into(),
        w2: "modern".into(),
        seed: Some(4),
        config: None,
    };
    let mut s = Session::create(&svc, "persist", params, Box::new(storage)).unwrap();
    s.apply(
        &svc,
        Action::Delete {
            target: ImageRef::cell(1, 1),
        },
    )
    .unwrap();
    s.apply(&svc, Action::Next).unwrap();
    s.apply(&svc, Action::Export).unwrap();

    let dir = tmp.path().join("persist");
    let log = std::fs::read_to_string(dir.join("log.jsonl")).unwrap();
    assert_eq!(log, s.log_jsonl());
    let parsed = analysis::parse_log(log.as_bytes()).unwrap();
    assert_eq!(parsed, s.records());
    let journal = std::fs::read_to_string(dir.join("journal.jsonl")).unwrap();
    assert_eq!(journal.lines().count(), 3);
    assert!(dir.join("meta.json").is_file());
    assert!(dir.join("exports/board-001-1.json").is_file());
}

#[test]
fn logged_board_vector_matches_live_one() {
    let svc = demo_services();
    let mut s = create(AlgorithmKind::Reference2, 11);
    let id = s
        .state()
        .board
        .get(GridCoord::at(3, 3))
        .unwrap()
        .to_string();
    let label = s.state().image(&id).unwrap().labels[1].label.clone();
    s.apply(
        &svc,
        Action::Strike {
            target: ImageRef::id(id),
            label,
        },
    )
    .unwrap();
    s.apply(
        &svc,
        Action::Move {
            target: ImageRef::cell(1, 1),
            to: GridCoord::at(3, 3),
        },
    )
    .unwrap();
    s.apply(&svc, Action::Next).unwrap();
    let pw = &s.config().position_weights;
    for (rec, live) in s.records().iter().zip(s.board_vectors()) {
        let again = rec.board_vector(&svc.store, pw).unwrap().values;
        let live = live.as_ref().unwrap();
        for (a, b) in again.iter().zip(live) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn journal_replays_to_the_same_log() {
    let svc = demo_services();
    let mut s = create(AlgorithmKind::Proposed, 21);
    s.apply(
        &svc,
        Action::Move {
            target: ImageRef::cell(1, 1),
            to: GridCoord::at(3, 3),
        },
    )
    .unwrap();
    s.apply(
        &svc,
        Action::Delete {
            target: ImageRef::cell(2, 1),
        },
    )
    .unwrap();
    s.apply(&svc, Action::Next).unwrap();
    s.apply(
        &svc,
        Action::Delete {
            target: ImageRef::cell(1, 2),
        },
    )
    .unwrap();
    s.apply(&svc, Action::Next).unwrap();

    let script = s.to_script();
    let text = serde_json::to_string(&script).unwrap();
    let script = SessionScript::from_json(&text).unwrap();
    let replay = run_script(&svc, &script, Box::new(NullStorage)).unwrap();
    let strip = |s: &Session| {
        s.records()
            .iter()
            .map(|r| r.without_timestamp())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&s), strip(&replay));
    assert_eq!(s.state().board, replay.state().board);
    assert_eq!(s.journal(), replay.journal());
}

#[test]
fn script_failure_names_the_step() {
    let svc = demo_services();
    let script = SessionScript::from_json(
        r#"{"kind": "baseline", "w1": "ergonomic", "w2": "modern", "seed": 1,
            "steps": [{"type": "export"}, {"type": "next"}]}"#,
    )
    .unwrap();
    let err = run_script(&svc, &script, Box::new(NullStorage)).unwrap_err();
    let msg = err.to_string();
    assert!(
        matches!(err, ScriptError::Invalid { index: 1, .. }),
        "{msg}"
    );
    assert!(msg.contains("step 1"), "{msg}");
    assert_eq!(script.session_id(), "script-baseline-ergonomic-modern-1");

    // Legal steps that fail at run time also name their index.
    let script = SessionScript::from_json(
        r#"{"kind": "proposed", "w1": "ergonomic", "w2": "modern", "seed": 1,
            "steps": [{"type": "next"}, {"type": "delete", "image": "missing"}]}"#,
    )
    .unwrap();
    match run_script(&svc, &script, Box::new(NullStorage)).unwrap_err() {
        ScriptError::Step { index, source, .. } => {
            assert_eq!(index, 1);
            assert_eq!(source.class(), ErrorClass::NotFound);
        }
        other => panic!("{other}"),
    }
}

fn script(kind: &str, steps: &str) -> SessionScript {
    SessionScript::from_json(&format!(
        r#"{{"kind": "{kind}", "w1": "ergonomic", "w2": "comfortable", "seed": 7, "steps": {steps}}}"#
    ))
    .unwrap()
}

#[test]
fn reference1_delete_delete_next_refills_two() {
    let s = run_script(
        &demo_services(),
        &script(
            "reference1",
            r#"[{"type": "delete", "cell": {"x": 1, "y": 1}}, {"type": "delete", "cell": {"x": 3, "y": 3}}, {"type": "next"}]"#,
        ),
        Box::new(NullStorage),
    )
    .unwrap();
    assert_eq!(s.records().len(), 2);
    let rec = &s.records()[1];
    assert_eq!(rec.filled.len(), 2);
    let cells: BTreeSet<(u8, u8)> = rec
        .images
        .iter()
        .filter(|e| rec.filled.contains(&e.id))
        .map(|e| (e.x, e.y))
        .collect();
    assert_eq!(cells, [(1, 1), (3, 3)].into_iter().collect());
}

#[test]
fn empty_script_leaves_only_record_zero() {
    let s = run_script(
        &demo_services(),
        &script("proposed", "[]"),
        Box::new(NullStorage),
    )
    .unwrap();
    assert_eq!(s.records().len(), 1);
    assert_eq!(s.iteration_count(), 0);
}

#[test]
fn identical_axis_words_are_rejected() {
    let params = CreateParams {
        kind: AlgorithmKind::Proposed,
        w1: "ergonomic".into(),
        w2: "ergonomic".into(),
        seed: None,
        config: None,
    };
    let err = Session::create(&demo_services(), "x", params, Box::new(NullStorage)).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Validation);
}

#[test]
fn empty_board_exports_nine_null_cells() {
    let svc = demo_services();
    let mut s = create(AlgorithmKind::Proposed, 1);
    for at in mbc_core::board::GRID_ORDER {
        s.apply(
            &svc,
            Action::Delete {
                target: ImageRef::cell(at.x(), at.y()),
            },
        )
        .unwrap();
    }
    let doc = s.export_board();
    assert_eq!(doc.cells.len(), 9);
    assert!(doc
        .cells
        .iter()
        .all(|c| c.image_id.is_none() && c.uri.is_none() && c.labels.is_empty()));
}

#[test]
fn records_match_the_board_at_iteration_close() {
    let svc = demo_services();
    let mut s = create(AlgorithmKind::Reference2, 8);
    for round in 0..3u8 {
        s.apply(
            &svc,
            Action::Move {
                target: ImageRef::cell(1, 1),
                to: GridCoord::at(3, 3),
            },
        )
        .unwrap();
        s.apply(
            &svc,
            Action::Delete {
                target: ImageRef::cell(2, 1 + round % 2),
            },
        )
        .unwrap();
        let ActionOutcome::Iterated(rec) = s.apply(&svc, Action::Next).unwrap() else {
            panic!("expected a record");
        };
        let logged: BTreeSet<(String, u8, u8)> = rec
            .images
            .iter()
            .map(|e| (e.id.clone(), e.x, e.y))
            .collect();
        let live: BTreeSet<(String, u8, u8)> = s
            .state()
            .board
            .occupied()
            .map(|(at, id)| (id.to_string(), at.x(), at.y()))
            .collect();
        assert_eq!(logged, live);
    }
    assert!(s
        .records()
        .windows(2)
        .all(|w| w[0].timestamp <= w[1].timestamp));
    let last = s.records().last().unwrap();
    assert_eq!(s.export_board().query, last.query);
}

#[test]
fn analysis_series_has_one_value_per_pair() {
    let svc = demo_services();
    let mut s = create(AlgorithmKind::Proposed, 2);
    for _ in 0..3 {
        s.apply(
            &svc,
            Action::Delete {
                target: ImageRef::cell(1, 1),
            },
        )
        .unwrap();
        s.apply(&svc, Action::Next).unwrap();
    }
    let records = analysis::parse_log(s.log_jsonl().as_bytes()).unwrap();
    let series = analysis::all_series(&records, &svc.store, &s.config().position_weights).unwrap();
    assert_eq!(series.len(), 1);
    assert_eq!(series[0].iteration_count, 4);
    assert_eq!(series[0].iterations, vec![1, 2, 3]);
    assert!(series[0]
        .values
        .iter()
        .all(|v| (-1.0..=1.0 + 1e-12).contains(v)));

    let mut csv = Vec::new();
    analysis::write_csv(&series, &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("session_id,iteration_i,cos_sim\n"));
    assert_eq!(csv.lines().count(), 4);

    let summary = analysis::summarize(&series);
    assert_eq!(summary.by_kind.len(), 1);
    assert_eq!(summary.by_kind[0].stats.sessions, 1);
}
