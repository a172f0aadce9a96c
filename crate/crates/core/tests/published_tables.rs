mod common;

use common::*;
use contamkit::analytics::{
    direction_group, impact_table, select_records, testset_gap, Direction, TableQuery,
};
use contamkit::injector::{ContaminationCondition, ContaminationMode, Temporal};

const MODES: [ContaminationMode; 3] = [
    ContaminationMode::SourceOnly,
    ContaminationMode::TargetOnly,
    ContaminationMode::FullPrompted,
];

#[test]
fn fixture_shape() {
    let rows = score_table();
    assert_eq!(rows.len(), 612);
    let wmt23 = rows.iter().filter(|r| r.testset == "wmt23").count();
    assert_eq!(wmt23, 3 * 13 * 2 * 4);
    for r in &rows {
        assert!((0.0..=100.0).contains(&r.bleu), "{r:?}");
    }
}

#[test]
fn single_cell_delta() {
    let t = table_impact(
        &score_table(),
        "8B",
        "wmt23",
        Temporal::Late,
        1,
        ContaminationMode::FullPrompted,
    );
    let c = t.cell(&"en-de".parse().unwrap()).unwrap();
    assert_eq!((c.baseline_bleu, c.contaminated_bleu), (30.95, 34.34));
    assert!((c.delta - 3.39).abs() < 1e-9);
    assert!((c.pct.unwrap() - 10.953).abs() < 1e-3);
    assert!(t.is_complete());
}

#[test]
fn zero_resource_delta() {
    let rows = score_table();
    let q = |copies, mode| TableQuery {
        testset: Some("zero_resource"),
        copies: Some(copies),
        mode: Some(mode),
        ..TableQuery::default()
    };
    let base = select_records(&rows, &q(0, "baseline")).unwrap();
    let cont = select_records(&rows, &q(100, "contaminated")).unwrap();
    let t = impact_table(
        &base,
        &cont,
        ContaminationCondition::new(ContaminationMode::FullPrompted, Temporal::Late, 100),
    )
    .unwrap();
    let ace = t.cell(&"ace-en".parse().unwrap()).unwrap();
    assert!((ace.delta - 0.627).abs() < 1e-9);
    assert_eq!(t.cells.len(), 3);
}

#[test]
fn contaminated_vs_clean_gap() {
    let rows = score_table();
    let a = table_impact(
        &rows,
        "8B",
        "wmt23",
        Temporal::Late,
        100,
        ContaminationMode::FullPrompted,
    );
    let b = table_impact(
        &rows,
        "8B",
        "wmt24",
        Temporal::Late,
        100,
        ContaminationMode::FullPrompted,
    );
    let gaps = testset_gap(&a.cells, &b.cells).unwrap();
    let de = gaps
        .iter()
        .find(|g| g.lang_pair.to_string() == "en-de")
        .unwrap();
    assert!((de.delta_contaminated_set - 16.60).abs() < 1e-9);
    assert!((de.delta_clean_set - 2.13).abs() < 1e-9);
    assert!((de.gap - 14.47).abs() < 1e-9);
    // pairs present in both tables only
    let pairs: Vec<String> = gaps.iter().map(|g| g.lang_pair.to_string()).collect();
    assert_eq!(pairs, ["cs-uk", "en-de", "en-ja", "en-ru", "en-uk"]);
}

fn mean_delta(cells: &[contamkit::analytics::ImpactCell]) -> f64 {
    cells.iter().map(|c| c.delta).sum::<f64>() / cells.len() as f64
}

#[test]
fn full_beats_bare_fields_at_every_copy_count() {
    let rows = score_table();
    for model in ["1B", "8B"] {
        for copies in [1, 10, 100] {
            let m: Vec<f64> = MODES
                .iter()
                .map(|&mode| {
                    mean_delta(
                        &table_impact(&rows, model, "wmt23", Temporal::Late, copies, mode).cells,
                    )
                })
                .collect();
            assert!(m[2] > m[0] && m[2] > m[1], "{model} x{copies}: {m:?}");
        }
    }
}

#[test]
fn direction_means_on_every_table_row() {
    // all thirteen rows, including pairs outside the contaminated set
    let rows = score_table();
    let t = table_impact(
        &rows,
        "8B",
        "wmt23",
        Temporal::Late,
        1,
        ContaminationMode::FullPrompted,
    );
    let g = direction_group(&t.cells);
    let en_x = g[&Direction::EnToX].mean_pct.unwrap();
    let x_en = g[&Direction::XToEn].mean_pct.unwrap();
    assert!((en_x - 8.485).abs() < 1e-3, "{en_x}");
    assert!((x_en - 8.947).abs() < 1e-3, "{x_en}");
    assert_eq!(g[&Direction::XToY].cells, 1);
}

#[test]
fn direction_means_on_contaminated_pairs() {
    let rows = score_table();
    for model in ["1B", "8B"] {
        for copies in [1, 10, 100] {
            let t = table_impact(
                &rows,
                model,
                "wmt23",
                Temporal::Late,
                copies,
                ContaminationMode::FullPrompted,
            );
            let cells: Vec<_> = t
                .cells
                .into_iter()
                .filter(|c| CONTAMINATED_PAIRS.contains(&c.lang_pair.to_string().as_str()))
                .collect();
            assert_eq!(cells.len(), 10);
            let g = direction_group(&cells);
            let en_x = g[&Direction::EnToX].mean_pct.unwrap();
            let x_en = g[&Direction::XToEn].mean_pct.unwrap();
            assert!(en_x > x_en, "{model} x{copies}: {en_x} vs {x_en}");
        }
    }
}
