use std::path::PathBuf;

use nfrgen::analysis::reference::{reference_dataset, APPLICABILITY_COUNTS, VALIDITY_COUNTS};
use nfrgen::analysis::{
    analyze, confusion_matrix, fmt_mean, fmt_pct, match_breakdown, score_distribution, Dataset, ExportFormat, NfrIndex,
};
use nfrgen::quality_model::QualityAttribute::*;
use nfrgen::quality_model::{RelatednessMap, RubricDimension};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference")
}

#[test]
fn bundled_fixture_matches_generator() {
    let generated = reference_dataset();
    let dir = fixture_dir();
    if std::env::var_os("NFRGEN_REGEN_FIXTURES").is_some() {
        generated.export(&dir, ExportFormat::Json, None).unwrap();
    }
    assert_eq!(
        Dataset::load(&dir).unwrap(),
        generated,
        "run with NFRGEN_REGEN_FIXTURES=1 to refresh"
    );
}

#[test]
fn fixture_shape() {
    let ds = reference_dataset();
    assert_eq!(ds.frs.len(), 34);
    assert_eq!(ds.scores.len(), 174);
    assert_eq!(ds.selections.len(), 168);
    assert_eq!(VALIDITY_COUNTS.iter().sum::<usize>(), 174);
    assert_eq!(APPLICABILITY_COUNTS.iter().sum::<usize>(), 174);
    let years: u32 = ds.evaluators.iter().map(|e| e.years_experience).sum();
    assert_eq!(years, 130);
    ds.validate().unwrap();
}

#[test]
fn validity_distribution() {
    let d = score_distribution(&reference_dataset().scores, RubricDimension::Validity).unwrap();
    assert_eq!(d.counts, [2, 3, 11, 25, 133]);
    // 5*133 + 4*25 + 3*11 + 2*3 + 1*2 = 806
    assert!((d.mean - 806.0 / 174.0).abs() < 1e-12);
    assert_eq!(fmt_mean(d.mean), "4.63");
    assert_eq!(d.median, 5.0);
    assert_eq!(fmt_pct(d.proportion(5)), "76.4%");
    assert_eq!(fmt_pct(d.proportion(4)), "14.4%");
    assert_eq!(fmt_pct(d.proportion(3)), "6.3%");
    assert_eq!(fmt_pct(d.share(1, 2)), "2.9%");
}

#[test]
fn applicability_distribution() {
    let d = score_distribution(&reference_dataset().scores, RubricDimension::Applicability).unwrap();
    // 5*138 + 4*19 + 3*3 + 2*10 + 1*4 = 799
    assert!((d.mean - 799.0 / 174.0).abs() < 1e-12);
    assert_eq!(fmt_mean(d.mean), "4.59");
    assert_eq!(d.median, 5.0);
    assert_eq!(fmt_pct(d.share(4, 5)), "90.2%");
    assert_eq!(fmt_pct(d.proportion(3)), "1.7%");
    assert_eq!(fmt_pct(d.share(1, 2)), "8.0%");
}

#[test]
fn agreement_and_confusion() {
    let ds = reference_dataset();
    let index = NfrIndex::from_nfrs(&ds.nfrs);
    let b = match_breakdown(&ds.selections, &index, &RelatednessMap::default()).unwrap();
    assert_eq!((b.exact, b.near, b.mismatch, b.total), (135, 14, 19, 168));
    assert_eq!(
        [fmt_pct(b.exact_rate), fmt_pct(b.near_rate), fmt_pct(b.mismatch_rate)],
        ["80.4%", "8.3%", "11.3%"]
    );
    let c = confusion_matrix(&ds.selections, &index).unwrap();
    assert!((c.normalized(FunctionalSuitability, Reliability) - 0.2).abs() < 1e-12);
    assert!((c.normalized(Flexibility, Compatibility) - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(c.normalized(PerformanceEfficiency, PerformanceEfficiency), 1.0);
    assert_eq!(c.normalized(Compatibility, Compatibility), 1.0);
    assert_eq!(c.diagonal_sum(), 135);
    assert_eq!(c.counts.iter().flatten().sum::<usize>(), 168);
    assert!(c.empty_rows.is_empty());
    for row in c.row_normalized {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn empty_map_moves_near_misses_to_mismatch_only() {
    let ds = reference_dataset();
    let index = NfrIndex::from_nfrs(&ds.nfrs);
    let b = match_breakdown(&ds.selections, &index, &RelatednessMap::empty()).unwrap();
    assert_eq!((b.exact, b.near, b.mismatch), (135, 0, 33));
}

#[test]
fn export_import_round_trip() {
    let ds = reference_dataset();
    let map = RelatednessMap::default();
    let report = analyze(&ds, &map).unwrap();
    for format in [ExportFormat::Json, ExportFormat::Csv] {
        let dir = tempfile::tempdir().unwrap();
        ds.export(dir.path(), format, Some(&report)).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, ds, "{format:?}");
        let again = analyze(&back, &map).unwrap();
        let (a, b) = (report.validity.as_ref().unwrap(), again.validity.as_ref().unwrap());
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert_eq!(report, again);
        if format == ExportFormat::Csv {
            let scores = std::fs::read_to_string(dir.path().join("scores.csv")).unwrap();
            assert_eq!(scores.lines().count(), 175);
            for f in ["per_llm.csv", "confusion.csv", "histograms.csv", "report.json"] {
                assert!(dir.path().join(f).exists(), "{f}");
            }
        }
    }
}

#[test]
fn unwritable_export_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let err = Dataset::default()
        .export(&file.join("sub"), ExportFormat::Json, None)
        .unwrap_err();
    assert_eq!(err.code(), "io");
}

#[test]
fn per_llm_rows_cover_all_models() {
    let ds = reference_dataset();
    let report = analyze(&ds, &RelatednessMap::default()).unwrap();
    assert_eq!(report.per_llm.rows.len(), 8);
    let scored: usize = report.per_llm.rows.iter().map(|r| r.scored).sum();
    let selected: usize = report.per_llm.rows.iter().map(|r| r.selected).sum();
    assert_eq!((scored, selected), (174, 168));
    for r in &report.per_llm.rows {
        assert_eq!(r.selected, 21);
        assert!((21..=22).contains(&r.scored));
    }
}
