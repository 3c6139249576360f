//! Centered PCA of a sampled gradient field and the rules for choosing the
//! number of kept components and the training-set size.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::ProblemDefinition;
use crate::sampling::{generate_admissible, TrainingSet};
use crate::subspace::{directional_derivatives, GradientMode, SubspaceBasis};

pub const DEFAULT_OVERLAP_TOL: f64 = 1.0;

/// Gradients at the training points, one row per point, in unit-cube coordinates.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub gradients: Vec<Vec<f64>>,
    pub points: TrainingSet,
    pub eval_mode: GradientMode,
    pub objective_eval_count: usize,
}

impl GradientField {
    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.gradients.first().map_or(0, Vec::len)
    }

    /// Rows belonging to the first `n` training points.
    pub fn prefix(&self, n: usize) -> GradientField {
        let n = n.min(self.len());
        let per_point = self.objective_eval_count.checked_div(self.len()).unwrap_or(0);
        GradientField {
            gradients: self.gradients[..n].to_vec(),
            points: self.points.prefix(n),
            eval_mode: self.eval_mode,
            objective_eval_count: per_point * n,
        }
    }
}

pub fn compute_gradient_field(
    problem: &ProblemDefinition,
    training_set: &TrainingSet,
    eval_mode: GradientMode,
    h: f64,
) -> Result<GradientField> {
    if training_set.is_empty() {
        return Err(Error::TooFewSamples { required: 1, found: 0 });
    }
    if eval_mode == GradientMode::Analytic && !problem.has_analytic_gradient() {
        return Err(Error::MissingAnalyticGradient(problem.label().to_string()));
    }
    let axes = SubspaceBasis::identity(problem.dimension()).vectors;
    let rows: Vec<Result<(Vec<f64>, usize)>> = training_set
        .points
        .par_iter()
        .map(|u| match eval_mode {
            GradientMode::Analytic => problem.analytic_gradient(u).map(|g| (g, 0)),
            _ => directional_derivatives(problem, u, &axes, eval_mode, h),
        })
        .collect();

    let mut gradients = Vec::with_capacity(rows.len());
    let mut objective_eval_count = 0;
    for (index, row) in rows.into_iter().enumerate() {
        let (g, evals) = row.map_err(|e| Error::GradientAt { index, source: Box::new(e) })?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::GradientAt {
                index,
                source: Box::new(Error::NonFinite("gradient entry".into())),
            });
        }
        objective_eval_count += evals;
        gradients.push(g);
    }
    Ok(GradientField { gradients, points: training_set.clone(), eval_mode, objective_eval_count })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalSubspace {
    pub mean: Vec<f64>,
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Unit principal directions, ordered like `eigenvalues`.
    pub directions: Vec<Vec<f64>>,
    /// Entry `p` is the reconstruction error with `p` components, in percent.
    pub msre_percent: Vec<f64>,
    pub sample_size: usize,
}

pub fn fit_pca(field: &GradientField) -> Result<PrincipalSubspace> {
    fit_pca_rows(&field.gradients)
}

/// Centered PCA of the given rows via the `d × d` covariance (normalized by `1/N`).
pub fn fit_pca_rows(rows: &[Vec<f64>]) -> Result<PrincipalSubspace> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::TooFewSamples { required: 2, found: n });
    }
    let d = rows[0].len();
    for row in rows {
        check_dim(d, row.len())?;
    }
    let mean = column_mean(rows);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in rows {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(g, m)| g - m).collect();
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let directions: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();

    Ok(PrincipalSubspace { msre_percent: msre_curve(&eigenvalues), mean, eigenvalues, directions, sample_size: n })
}

fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for row in rows {
        mean.iter_mut().zip(row).for_each(|(m, g)| *m += g);
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    mean
}

fn msre_curve(eigenvalues: &[f64]) -> Vec<f64> {
    let d = eigenvalues.len();
    let mut tail = vec![0.0; d + 1];
    for p in (0..d).rev() {
        tail[p] = tail[p + 1] + eigenvalues[p];
    }
    let total = tail[0];
    if total <= 1e-300 {
        return vec![0.0; d + 1];
    }
    tail.iter().map(|t| 100.0 * t / total).collect()
}

/// Reconstruction error with `p` components, computed by projecting every
/// centered gradient explicitly.
pub fn msre_by_reconstruction(rows: &[Vec<f64>], subspace: &PrincipalSubspace, p: usize) -> Result<f64> {
    let d = subspace.mean.len();
    if p > d {
        return Err(Error::InvalidInput(format!("p = {p} exceeds dimension {d}")));
    }
    let mut residual_sq = 0.0;
    let mut total_sq = 0.0;
    for row in rows {
        check_dim(d, row.len())?;
        let centered: Vec<f64> = row.iter().zip(&subspace.mean).map(|(g, m)| g - m).collect();
        let mut residual = centered.clone();
        for u in &subspace.directions[..p] {
            let c: f64 = centered.iter().zip(u).map(|(a, b)| a * b).sum();
            residual.iter_mut().zip(u).for_each(|(r, ui)| *r -= c * ui);
        }
        residual_sq += residual.iter().map(|x| x * x).sum::<f64>();
        total_sq += centered.iter().map(|x| x * x).sum::<f64>();
    }
    if total_sq / rows.len() as f64 <= 1e-300 {
        return Ok(0.0);
    }
    Ok(100.0 * residual_sq / total_sq)
}

/// Smallest `p` whose reconstruction error is at most `r_percent`.
pub fn select_p(subspace: &PrincipalSubspace, r_percent: f64) -> Result<usize> {
    if !(r_percent > 0.0) {
        return Err(Error::InvalidInput(format!("threshold must be positive, got {r_percent}")));
    }
    Ok(subspace
        .msre_percent
        .iter()
        .position(|&m| m <= r_percent)
        .unwrap_or(subspace.msre_percent.len() - 1))
}

#[derive(Debug, Clone)]
pub struct SampleSizeSelection {
    pub n_star: usize,
    /// `true` when no schedule entry before the last one was stable.
    pub warning: bool,
    /// `(N, msre curve, p°)` for every schedule entry.
    pub curves: Vec<(usize, Vec<f64>, usize)>,
    /// Field over the largest training set; smaller sets are its prefixes.
    pub field: GradientField,
}

/// First schedule entry whose curve agrees within `overlap_tol` (max over p)
/// with the curve of every larger entry. Falls back to the last entry, flagged.
pub fn select_from_curves(schedule: &[usize], curves: &[Vec<f64>], overlap_tol: f64) -> (usize, bool) {
    let last = schedule.len() - 1;
    for i in 0..last {
        let stable = curves[i + 1..].iter().all(|later| {
            later.iter().zip(&curves[i]).all(|(a, b)| (a - b).abs() <= overlap_tol)
        });
        if stable {
            return (schedule[i], false);
        }
    }
    (schedule[last], true)
}

/// Evaluates the gradient field once on the largest training set and fits PCA
/// to each prefix named in `schedule`.
pub fn select_sample_size(
    problem: &ProblemDefinition,
    schedule: &[usize],
    r_percent: f64,
    overlap_tol: f64,
    eval_mode: GradientMode,
    h: f64,
    max_scan: u64,
) -> Result<SampleSizeSelection> {
    validate_schedule(schedule)?;
    let largest = *schedule.last().expect("validated schedule");
    let training = generate_admissible(problem, largest, max_scan)?;
    let field = compute_gradient_field(problem, &training, eval_mode, h)?;
    select_sample_size_from_field(field, schedule, r_percent, overlap_tol)
}

pub fn select_sample_size_from_field(
    field: GradientField,
    schedule: &[usize],
    r_percent: f64,
    overlap_tol: f64,
) -> Result<SampleSizeSelection> {
    validate_schedule(schedule)?;
    let largest = *schedule.last().expect("validated schedule");
    if field.len() < largest {
        return Err(Error::TooFewSamples { required: largest, found: field.len() });
    }
    let mut curves = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let subspace = fit_pca_rows(&field.gradients[..n])?;
        let p = select_p(&subspace, r_percent)?;
        curves.push((n, subspace.msre_percent, p));
    }
    let raw: Vec<Vec<f64>> = curves.iter().map(|(_, c, _)| c.clone()).collect();
    let (n_star, warning) = select_from_curves(schedule, &raw, overlap_tol);
    if warning {
        warn!("no stable training-set size found; using the largest ({n_star})");
    }
    Ok(SampleSizeSelection { n_star, warning, curves, field })
}

fn validate_schedule(schedule: &[usize]) -> Result<()> {
    if schedule.len() < 2 || schedule[0] < 2 || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "schedule must be strictly increasing with at least two entries >= 2, got {schedule:?}"
        )));
    }
    Ok(())
}
