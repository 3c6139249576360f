use std::collections::BTreeMap;
use std::path::Path;

use gradpca_core::pipeline::artifacts::read_csv;
use gradpca_core::pipeline::{export_reports, run_pipeline, PipelineConfig};
use quick_xml::events::Event;
use quick_xml::Reader;

fn assert_well_formed(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut reader = Reader::from_str(&text);
    let mut depth = 0i32;
    let mut saw_root = false;
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                saw_root |= e.name().as_ref() == b"svg";
                depth += 1;
            }
            Ok(Event::End(_)) => depth -= 1,
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => panic!("{}: {e}", path.display()),
        }
    }
    assert!(saw_root);
    assert_eq!(depth, 0, "{} has unbalanced tags", path.display());
}

#[test]
fn chain_artifacts_follow_their_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::from_json(
        r#"{"sampling": {"schedule": [10, 20]}, "slp": {"K": 25}, "sweep": {"p_values": [1]}}"#,
    )
    .unwrap();
    config.output_dir = dir.path().to_path_buf();
    let summary = run_pipeline(&config).unwrap();
    let d = summary.dimension;

    let (header, rows) = read_csv(&dir.path().join("msre_curves.csv")).unwrap();
    assert_eq!(header, ["N", "p", "msre_percent"]);
    let mut per_n: BTreeMap<String, usize> = BTreeMap::new();
    for r in &rows {
        *per_n.entry(r[0].clone()).or_default() += 1;
    }
    assert_eq!(per_n.len(), 2);
    assert!(per_n.values().all(|&c| c == d + 1));

    let (header, rows) = read_csv(&dir.path().join("traces.csv")).unwrap();
    assert_eq!(header, ["p_mode", "rep", "k", "f", "delta", "evals_cum"]);
    let mut lengths: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for r in &rows {
        let e = lengths.entry((r[0].clone(), r[1].clone())).or_default();
        e.0 += 1;
        e.1 = r[5].parse().unwrap();
    }
    for entry in &summary.sweep {
        let runs: Vec<_> = lengths.iter().filter(|((m, _), _)| *m == entry.label).collect();
        assert_eq!(runs.len(), summary.repetitions);
        let full = runs.iter().filter(|(_, (n, _))| *n == config.slp.max_iters).count();
        assert!(runs.iter().all(|(_, (n, _))| *n <= config.slp.max_iters));
        assert_eq!(full, entry.stop_reasons.get("max_iters").copied().unwrap_or(0));
        let evals: usize = runs.iter().map(|(_, (_, e))| e).sum();
        assert_eq!(evals, entry.total_objective_evals);
    }
    assert_eq!(
        summary.total_objective_evals,
        summary.gradient_field.objective_evals + summary.sweep.iter().map(|e| e.total_objective_evals).sum::<usize>()
    );
    assert!(summary.accounting_consistent);

    let p1 = summary.sweep.iter().find(|e| e.label == "p1").unwrap();
    assert_eq!(p1.q, 2);
    assert_eq!(p1.cost_ratio, Some(0.25));
    assert_eq!(p1.measured_cost_ratio, Some(0.25));

    for svg in export_reports(dir.path()).unwrap() {
        assert_well_formed(&svg);
    }
    let raw = std::fs::read(dir.path().join("summary.json")).unwrap();
    assert!(!raw.contains(&b'\r'));
}

#[test]
fn finite_difference_field_matches_analytic_selection() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::from_json(
        r#"{"problem": {"type": "ridge", "ridge_dim": 7, "ridge_rank": 2},
            "sampling": {"schedule": [12, 24]},
            "gradient": {"eval_mode": "central_fd"},
            "slp": {"K": 10},
            "sweep": {"p_values": [], "include_exact": false}}"#,
    )
    .unwrap();
    config.output_dir = dir.path().to_path_buf();
    let summary = run_pipeline(&config).unwrap();
    assert_eq!(summary.p_star, 2);
    assert_eq!(summary.gradient_field.objective_evals, 24 * 14);
    assert_eq!(summary.sweep.len(), 1);
    assert_eq!(summary.sweep[0].cost_ratio, Some(4.0 / 14.0));
    assert!(summary.accounting_consistent);
}
