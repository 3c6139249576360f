//! Staged orchestration: sample, gradient field, PCA, optimization sweep,
//! reports. Every stage reads its inputs from the output directory, so each
//! can be rerun on its own.

pub mod artifacts;
pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::{fit_pca_rows, select_sample_size_from_field, GradientField, PrincipalSubspace};
use crate::problem::ProblemDefinition;
use crate::sampling::{generate_admissible, TrainingSet};
use crate::slp::{multi_start, MultiStartResult, StopReason};
use crate::subspace::{build_basis, GradientMode, GradientProvider, SubspaceGradient};

use artifacts::*;
pub use config::{PipelineConfig, ProblemKind};
use report::{LinePlot, Series};

pub const EXACT_LABEL: &str = "exact";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub eval_mode: GradientMode,
    pub h: f64,
    pub points: usize,
    pub objective_evals: usize,
    pub gradient_evals: usize,
    /// Objective calls seen by the counting wrapper.
    pub counted_objective_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisRecord {
    pub n_star: usize,
    pub n_star_warning: bool,
    pub r_percent: f64,
    pub p_star: usize,
    pub q: usize,
    pub includes_mean: bool,
    pub mean: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub msre_percent: Vec<f64>,
    pub basis_vectors: Vec<Vec<f64>>,
}

impl BasisRecord {
    pub fn subspace(&self) -> PrincipalSubspace {
        PrincipalSubspace {
            mean: self.mean.clone(),
            eigenvalues: self.eigenvalues.clone(),
            directions: self.directions.clone(),
            msre_percent: self.msre_percent.clone(),
            sample_size: self.n_star,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    /// Kept principal directions; `None` for the full-space gradient.
    pub p: Option<usize>,
    pub q: usize,
    pub best_value: f64,
    pub best_point: Vec<f64>,
    pub best_point_physical: Vec<f64>,
    /// 1-based repetition holding `best_value`.
    pub best_rep: Option<usize>,
    pub total_objective_evals: usize,
    pub evals_per_gradient: usize,
    pub measured_evals_per_gradient: usize,
    /// Per-gradient cost relative to the full-space gradient.
    pub cost_ratio: Option<f64>,
    pub measured_cost_ratio: Option<f64>,
    pub stop_reasons: BTreeMap<String, usize>,
    pub failed_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub dimension: usize,
    #[serde(rename = "N_star")]
    pub n_star: usize,
    #[serde(rename = "N_star_warning")]
    pub n_star_warning: bool,
    pub p_star: usize,
    pub q: usize,
    pub r_percent: f64,
    pub fd_mode: GradientMode,
    pub h: f64,
    pub max_iters: usize,
    pub repetitions: usize,
    pub gradient_field: FieldRecord,
    pub sweep: Vec<SweepEntry>,
    /// Repetition shown in the objective-history plot (1-based).
    pub best_rep: Option<usize>,
    pub optimization_objective_evals: usize,
    /// Field evaluations plus every run's final `evals_cum`.
    pub total_objective_evals: usize,
    pub counted_objective_evals: usize,
    pub accounting_consistent: bool,
}

fn out_dir(config: &PipelineConfig) -> &Path {
    &config.output_dir
}

fn timed<T>(stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let result = f().map_err(|e| Error::Stage { stage, source: Box::new(e) });
    if result.is_ok() {
        info!("stage {stage} finished in {:.2?}", start.elapsed());
    }
    result
}

pub fn write_config(config: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(out_dir(config))?;
    write_json(&out_dir(config).join(CONFIG_FILE), config)
}

fn load_samples(config: &PipelineConfig, problem: &ProblemDefinition) -> Result<TrainingSet> {
    let dir = out_dir(config);
    require(dir, &[SAMPLES_FILE])?;
    read_samples(&dir.join(SAMPLES_FILE), problem.dimension(), problem.label())
}

/// Admissible Halton points for the largest schedule entry.
pub fn stage_sample(config: &PipelineConfig) -> Result<TrainingSet> {
    config.validate()?;
    let problem = config.build_problem()?;
    std::fs::create_dir_all(out_dir(config))?;
    let n = *config.sampling.schedule.last().expect("validated schedule");
    let set = generate_admissible(&problem, n, config.sampling.max_scan)?;
    write_samples(&out_dir(config).join(SAMPLES_FILE), &set)?;
    Ok(set)
}

pub fn stage_grads(config: &PipelineConfig) -> Result<GradientField> {
    config.validate()?;
    let problem = config.build_problem()?;
    let set = load_samples(config, &problem)?;
    let (counted, counter) = problem.with_eval_counter();
    let field = crate::pca::compute_gradient_field(&counted, &set, config.gradient.eval_mode, config.gradient.h)?;
    let dir = out_dir(config);
    write_gradients(&dir.join(GRADIENTS_FILE), &field.gradients)?;
    let record = FieldRecord {
        eval_mode: field.eval_mode,
        h: config.gradient.h,
        points: field.len(),
        objective_evals: field.objective_eval_count,
        gradient_evals: if field.eval_mode == GradientMode::Analytic { field.len() } else { 0 },
        counted_objective_evals: counter.load(Ordering::Relaxed),
    };
    write_json(&dir.join(FIELD_FILE), &record)?;
    Ok(field)
}

pub fn stage_pca(config: &PipelineConfig) -> Result<BasisRecord> {
    config.validate()?;
    let problem = config.build_problem()?;
    let dir = out_dir(config);
    require(dir, &[SAMPLES_FILE, GRADIENTS_FILE, FIELD_FILE])?;
    let set = load_samples(config, &problem)?;
    let gradients = read_gradients(&dir.join(GRADIENTS_FILE), problem.dimension())?;
    let field_record: FieldRecord = read_json(&dir.join(FIELD_FILE))?;
    if gradients.len() != set.len() {
        return Err(Error::Artifact {
            file: dir.join(GRADIENTS_FILE).display().to_string(),
            reason: format!("{} rows for {} samples", gradients.len(), set.len()),
        });
    }
    let field = GradientField {
        gradients,
        points: set,
        eval_mode: field_record.eval_mode,
        objective_eval_count: field_record.objective_evals,
    };
    let selection = select_sample_size_from_field(
        field,
        &config.sampling.schedule,
        config.pca.r_percent,
        config.sampling.overlap_tol,
    )?;

    let mut out = CsvOut::create(&dir.join(MSRE_FILE), &["N".into(), "p".into(), "msre_percent".into()])?;
    for (n, curve, _) in &selection.curves {
        for (p, m) in curve.iter().enumerate() {
            out.row(&[n.to_string(), p.to_string(), fmt_f64(*m)])?;
        }
    }
    out.finish()?;

    let n_star = selection.n_star;
    let subspace = fit_pca_rows(&selection.field.gradients[..n_star])?;
    let p_star = selection.curves.iter().find(|(n, _, _)| *n == n_star).map(|c| c.2).expect("n_star is a schedule entry");
    let basis = build_basis(&subspace, p_star)?;
    info!("N° = {n_star}{}, p° = {p_star}, q = {}", if selection.warning { " (unstable)" } else { "" }, basis.dim());
    let record = BasisRecord {
        n_star,
        n_star_warning: selection.warning,
        r_percent: config.pca.r_percent,
        p_star,
        q: basis.dim(),
        includes_mean: basis.includes_mean,
        mean: subspace.mean,
        eigenvalues: subspace.eigenvalues,
        directions: subspace.directions,
        msre_percent: subspace.msre_percent,
        basis_vectors: basis.vectors,
    };
    write_json(&dir.join(BASIS_FILE), &record)?;
    Ok(record)
}

fn stop_name(reason: StopReason) -> String {
    match reason {
        StopReason::MaxIters => "max_iters",
        StopReason::DeltaFloor => "delta_floor",
        StopReason::Stationary => "stationary",
        StopReason::Failed => "failed",
    }
    .to_string()
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

struct SweepRun {
    label: String,
    p: Option<usize>,
    provider: SubspaceGradient,
    measured: usize,
    result: MultiStartResult,
}

pub fn stage_optimize(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate()?;
    let problem = config.build_problem()?;
    let d = problem.dimension();
    let dir = out_dir(config);
    require(dir, &[SAMPLES_FILE, FIELD_FILE, BASIS_FILE])?;
    let field: FieldRecord = read_json(&dir.join(FIELD_FILE))?;
    let basis_record: BasisRecord = read_json(&dir.join(BASIS_FILE))?;
    let starts = load_samples(config, &problem)?.prefix(basis_record.n_star);
    let subspace = basis_record.subspace();
    let (counted, counter) = problem.with_eval_counter();
    let (fd_mode, h) = (config.gradient.fd_mode, config.gradient.h);

    let mut ps: Vec<usize> = config.sweep.p_values.clone();
    ps.push(basis_record.p_star);
    ps.sort_unstable();
    ps.dedup();
    let mut modes: Vec<(String, Option<usize>, SubspaceGradient)> = Vec::new();
    for p in ps {
        if p > d {
            warn!("skipping p = {p}: exceeds the dimension {d}");
            continue;
        }
        let basis = build_basis(&subspace, p)?;
        modes.push((format!("p{p}"), Some(p), SubspaceGradient::new(counted.clone(), basis, fd_mode, h)?));
    }
    if config.sweep.include_exact {
        modes.push((EXACT_LABEL.to_string(), None, SubspaceGradient::full(counted.clone(), fd_mode, h)));
    }

    let mut runs = Vec::with_capacity(modes.len());
    for (label, p, provider) in modes {
        // Cost of one gradient at the first start, on a separately counted copy.
        let (probe_problem, probe_counter) = problem.with_eval_counter();
        let probe = SubspaceGradient::new(probe_problem, provider.basis().clone(), fd_mode, h)?;
        probe.gradient(&starts.points[0])?;
        let measured = probe_counter.load(Ordering::Relaxed);
        let start = Instant::now();
        let result = multi_start(&counted, &provider, &starts, config.slp.max_iters, &config.slp.trust_region)?;
        info!("{label}: best {:.6} after {:.2?}", result.best_value, start.elapsed());
        runs.push(SweepRun { label, p, provider, measured, result });
    }

    let mut traces = CsvOut::create(
        &dir.join(TRACES_FILE),
        &["p_mode", "rep", "k", "f", "delta", "evals_cum"].map(String::from),
    )?;
    for run in &runs {
        for (rep, trace) in run.result.traces.iter().enumerate() {
            let Ok(trace) = trace else { continue };
            for rec in &trace.records {
                traces.row(&[
                    run.label.clone(),
                    (rep + 1).to_string(),
                    rec.k.to_string(),
                    fmt_f64(rec.f),
                    fmt_f64(rec.delta),
                    rec.evals_cum.to_string(),
                ])?;
            }
        }
    }
    traces.finish()?;

    let exact_nominal = fd_mode.evals_per_gradient(d);
    let exact_measured = runs.iter().find(|r| r.p.is_none()).map(|r| r.measured);
    let mut sweep = Vec::with_capacity(runs.len());
    for run in &runs {
        let q = run.provider.basis().dim();
        let mut stop_reasons = BTreeMap::new();
        let mut failed_runs = 0;
        for trace in &run.result.traces {
            match trace {
                Ok(t) => *stop_reasons.entry(stop_name(t.stop_reason)).or_insert(0) += 1,
                Err(_) => failed_runs += 1,
            }
        }
        let best_point = run.result.best_point.as_ref().map(|p| p.to_vec()).unwrap_or_default();
        let best_point_physical =
            if best_point.is_empty() { Vec::new() } else { problem.bounds().from_unit_cube(&best_point)? };
        sweep.push(SweepEntry {
            label: run.label.clone(),
            p: run.p,
            q,
            best_value: run.result.best_value,
            best_point,
            best_point_physical,
            best_rep: run.result.best_run.map(|i| i + 1),
            total_objective_evals: run.result.total_evals(),
            evals_per_gradient: run.provider.nominal_evals(),
            measured_evals_per_gradient: run.measured,
            cost_ratio: ratio(run.provider.nominal_evals(), exact_nominal),
            measured_cost_ratio: exact_measured.and_then(|den| ratio(run.measured, den)),
            stop_reasons,
            failed_runs,
        });
    }

    let p_label = format!("p{}", basis_record.p_star);
    let best_rep = sweep
        .iter()
        .find(|e| e.p.is_none())
        .or_else(|| sweep.iter().find(|e| e.label == p_label))
        .and_then(|e| e.best_rep);
    let optimization_objective_evals: usize = sweep.iter().map(|e| e.total_objective_evals).sum();
    let counted_objective_evals = field.counted_objective_evals + counter.load(Ordering::Relaxed);
    let total_objective_evals = field.objective_evals + optimization_objective_evals;
    let summary = RunSummary {
        problem: problem.label().to_string(),
        dimension: d,
        n_star: basis_record.n_star,
        n_star_warning: basis_record.n_star_warning,
        p_star: basis_record.p_star,
        q: basis_record.q,
        r_percent: basis_record.r_percent,
        fd_mode,
        h,
        max_iters: config.slp.max_iters,
        repetitions: starts.len(),
        gradient_field: field,
        sweep,
        best_rep,
        optimization_objective_evals,
        total_objective_evals,
        counted_objective_evals,
        accounting_consistent: counted_objective_evals == total_objective_evals,
    };
    if !summary.accounting_consistent {
        warn!("evaluation accounting mismatch: {total_objective_evals} accounted, {counted_objective_evals} counted");
    }
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Writes the two SVG plots from the persisted artifacts.
pub fn export_reports(dir: &Path) -> Result<Vec<PathBuf>> {
    require(dir, &[MSRE_FILE, TRACES_FILE, SUMMARY_FILE])?;
    let summary: RunSummary = read_json(&dir.join(SUMMARY_FILE))?;

    let msre_path = dir.join(MSRE_FILE);
    let (_, rows) = read_csv(&msre_path)?;
    let mut curves: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    for (line, row) in rows.iter().enumerate() {
        let n: usize = parse_field(&msre_path, line + 1, &row[0])?;
        let p: f64 = parse_field(&msre_path, line + 1, &row[1])?;
        let m: f64 = parse_field(&msre_path, line + 1, &row[2])?;
        match curves.last_mut() {
            Some((last, pts)) if *last == n => pts.push((p, m)),
            _ => curves.push((n, vec![(p, m)])),
        }
    }
    let msre_plot = LinePlot {
        title: "Reconstruction error of the gradient field".into(),
        x_label: "number of principal components p".into(),
        y_label: "MSRE (%)".into(),
        series: curves.into_iter().map(|(n, points)| Series { name: format!("N = {n}"), points }).collect(),
    };

    let traces_path = dir.join(TRACES_FILE);
    let (_, rows) = read_csv(&traces_path)?;
    let mut series: Vec<Series> = summary
        .sweep
        .iter()
        .map(|e| Series {
            name: match e.p {
                Some(p) => format!("p = {p} (q = {})", e.q),
                None => format!("exact (q = {})", e.q),
            },
            points: Vec::new(),
        })
        .collect();
    if let Some(best_rep) = summary.best_rep {
        let rep = best_rep.to_string();
        for (line, row) in rows.iter().enumerate() {
            if row[1] != rep {
                continue;
            }
            if let Some(i) = summary.sweep.iter().position(|e| e.label == row[0]) {
                let k: f64 = parse_field(&traces_path, line + 1, &row[2])?;
                let f: f64 = parse_field(&traces_path, line + 1, &row[3])?;
                series[i].points.push((k, f));
            }
        }
    }
    let trace_plot = LinePlot {
        title: match summary.best_rep {
            Some(r) => format!("Objective history, repetition {r}"),
            None => "Objective history".into(),
        },
        x_label: "iteration k".into(),
        y_label: "objective f".into(),
        series,
    };

    let outputs = vec![dir.join(MSRE_PLOT_FILE), dir.join(TRACE_PLOT_FILE)];
    std::fs::write(&outputs[0], msre_plot.to_svg())?;
    std::fs::write(&outputs[1], trace_plot.to_svg())?;
    Ok(outputs)
}

/// All stages in order. A failing stage leaves earlier artifacts in place.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate()?;
    write_config(config)?;
    timed("sample", || stage_sample(config))?;
    timed("grads", || stage_grads(config))?;
    timed("pca", || stage_pca(config))?;
    let summary = timed("optimize", || stage_optimize(config))?;
    timed("report", || export_reports(out_dir(config)))?;
    Ok(summary)
}

/// Runs one named stage, wrapping any error with the stage name.
pub fn run_stage(stage: &str, config: &PipelineConfig) -> Result<()> {
    match stage {
        "sample" => timed("sample", || stage_sample(config)).map(drop),
        "grads" => timed("grads", || stage_grads(config)).map(drop),
        "pca" => timed("pca", || stage_pca(config)).map(drop),
        "optimize" => timed("optimize", || stage_optimize(config)).map(drop),
        "report" => timed("report", || export_reports(out_dir(config))).map(drop),
        "pipeline" => run_pipeline(config).map(drop),
        other => Err(Error::Config(format!("unknown stage '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ridge_config(dir: &Path) -> PipelineConfig {
        let mut c = PipelineConfig::from_json(
            r#"{"problem": {"type": "ridge", "ridge_dim": 6, "ridge_rank": 1},
                "sampling": {"schedule": [10, 20, 30]},
                "slp": {"K": 30},
                "sweep": {"p_values": [2]}}"#,
        )
        .unwrap();
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn ridge_pipeline_selects_rank_one() {
        let dir = tempfile::tempdir().unwrap();
        let config = ridge_config(dir.path());
        let s = run_pipeline(&config).unwrap();
        assert_eq!(s.n_star, 10);
        assert!(!s.n_star_warning);
        assert_eq!(s.p_star, 1);
        assert_eq!(s.q, 1);
        let p1 = s.sweep.iter().find(|e| e.label == "p1").unwrap();
        let exact = s.sweep.iter().find(|e| e.label == EXACT_LABEL).unwrap();
        assert!((p1.best_value - exact.best_value).abs() <= 1e-6, "{} vs {}", p1.best_value, exact.best_value);
        assert_eq!(p1.cost_ratio, Some(2.0 / 12.0));
        assert!(s.accounting_consistent);
        assert_eq!(s.sweep.iter().map(|e| e.label.as_str()).collect::<Vec<_>>(), ["p1", "p2", "exact"]);
        for f in [MSRE_PLOT_FILE, TRACE_PLOT_FILE, CONFIG_FILE] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
    }

    #[test]
    fn stages_report_missing_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let config = ridge_config(dir.path());
        match stage_pca(&config) {
            Err(Error::MissingArtifacts(files)) => assert_eq!(files.len(), 3),
            other => panic!("{other:?}"),
        }
        match export_reports(dir.path()) {
            Err(Error::MissingArtifacts(files)) => {
                assert!(files.iter().any(|f| f.ends_with(TRACES_FILE)))
            }
            other => panic!("{other:?}"),
        }
        let err = run_stage("grads", &config).unwrap_err();
        assert!(err.to_string().contains("stage 'grads'"));
    }
}
