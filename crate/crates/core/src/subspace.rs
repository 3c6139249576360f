//! Reduced gradients: directional derivatives along an orthonormal basis of
//! `span{mean gradient, leading principal directions}`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::pca::PrincipalSubspace;
use crate::problem::{dot, ProblemDefinition};

/// Residual norm (relative to the mean's norm) below which the mean gradient is
/// treated as already spanned by the kept directions.
pub const DROP_TOL: f64 = 1e-8;
pub const DEFAULT_STEP: f64 = 1e-5;
/// Smallest usable step, as a fraction of the requested one, before a probe
/// falls back to a one-sided difference.
const MIN_STEP_FRACTION: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Analytic,
    CentralFd,
    ForwardFd,
}

impl GradientMode {
    /// Objective evaluations for one gradient in a `q`-dimensional basis.
    pub fn evals_per_gradient(self, q: usize) -> usize {
        match self {
            GradientMode::Analytic => 0,
            GradientMode::CentralFd => 2 * q,
            GradientMode::ForwardFd => q + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    pub vectors: Vec<Vec<f64>>,
    pub includes_mean: bool,
    pub p_kept: usize,
}

impl SubspaceBasis {
    /// The coordinate axes of `R^d`.
    pub fn identity(d: usize) -> Self {
        let vectors = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect();
        Self { vectors, includes_mean: false, p_kept: d }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// `Σ_b (v·b) b`
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for b in &self.vectors {
            let c = dot(v, b);
            out.iter_mut().zip(b).for_each(|(o, bi)| *o += c * bi);
        }
        out
    }

    /// Dense projector matrix, row-major.
    pub fn projector(&self) -> Vec<Vec<f64>> {
        let d = self.ambient_dim();
        let mut p = vec![vec![0.0; d]; d];
        for b in &self.vectors {
            for i in 0..d {
                for j in 0..d {
                    p[i][j] += b[i] * b[j];
                }
            }
        }
        p
    }
}

/// Orthonormal basis of `span{u_1, …, u_p, mean}`; the principal directions
/// are kept as they are and only the mean is orthogonalized against them.
pub fn build_basis(subspace: &PrincipalSubspace, p: usize) -> Result<SubspaceBasis> {
    let d = subspace.mean.len();
    if p > d {
        return Err(Error::InvalidInput(format!("cannot keep {p} directions in dimension {d}")));
    }
    let mut vectors: Vec<Vec<f64>> = subspace.directions[..p].to_vec();

    let mean_norm = dot(&subspace.mean, &subspace.mean).sqrt();
    let mut residual = subspace.mean.clone();
    for _ in 0..2 {
        for b in &vectors {
            let c = dot(&residual, b);
            residual.iter_mut().zip(b).for_each(|(r, bi)| *r -= c * bi);
        }
    }
    let residual_norm = dot(&residual, &residual).sqrt();
    let includes_mean = mean_norm > 0.0 && residual_norm > DROP_TOL * mean_norm;
    if includes_mean {
        residual.iter_mut().for_each(|r| *r /= residual_norm);
        vectors.push(residual);
    }
    if vectors.is_empty() {
        return Err(Error::EmptySubspace);
    }
    Ok(SubspaceBasis { vectors, includes_mean, p_kept: p })
}

/// Largest `t ≥ 0` with `u + t·dir` inside `[-margin, 1 + margin]^d`.
fn room_along(u: &[f64], dir: &[f64], margin: f64) -> f64 {
    u.iter().zip(dir).fold(f64::INFINITY, |room, (&x, &v)| {
        if v > 0.0 {
            room.min((1.0 + margin - x) / v)
        } else if v < 0.0 {
            room.min((x + margin) / -v)
        } else {
            room
        }
        .max(0.0)
    })
}

fn offset(u: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    u.iter().zip(dir).map(|(x, v)| x + t * v).collect()
}

/// Finite-difference derivatives of the objective along each direction.
/// Returns the derivatives and the number of objective evaluations used.
pub fn directional_derivatives(
    problem: &ProblemDefinition,
    u: &[f64],
    directions: &[Vec<f64>],
    mode: GradientMode,
    h: f64,
) -> Result<(Vec<f64>, usize)> {
    check_dim(problem.dimension(), u.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {h}")));
    }
    let margin = problem.probe_margin();
    let h_min = h * MIN_STEP_FRACTION;
    let mut evals = 0;
    let mut f_center: Option<f64> = None;
    let mut center = |evals: &mut usize| -> Result<f64> {
        if let Some(f) = f_center {
            return Ok(f);
        }
        *evals += 1;
        let f = problem.objective(u)?;
        f_center = Some(f);
        Ok(f)
    };
    if mode == GradientMode::ForwardFd {
        center(&mut evals)?;
    }

    let mut out = Vec::with_capacity(directions.len());
    for dir in directions {
        check_dim(u.len(), dir.len())?;
        let ahead = room_along(u, dir, margin);
        let back = room_along(u, &dir.iter().map(|v| -v).collect::<Vec<_>>(), margin);
        let derivative = match mode {
            GradientMode::CentralFd if ahead.min(back) >= h_min => {
                let t = h.min(ahead).min(back);
                evals += 2;
                let fp = problem.objective(&offset(u, dir, t))?;
                let fm = problem.objective(&offset(u, dir, -t))?;
                (fp - fm) / (2.0 * t)
            }
            GradientMode::CentralFd | GradientMode::ForwardFd => {
                let f0 = center(&mut evals)?;
                evals += 1;
                if ahead >= h_min || ahead >= back {
                    let t = h.min(ahead);
                    (problem.objective(&offset(u, dir, t))? - f0) / t
                } else {
                    let t = h.min(back);
                    (f0 - problem.objective(&offset(u, dir, -t))?) / t
                }
            }
            GradientMode::Analytic => {
                return Err(Error::InvalidInput("analytic mode has no finite-difference probes".into()))
            }
        };
        out.push(derivative);
    }
    Ok((out, evals))
}

/// Anything that maps an iterate to a gradient estimate plus its cost in
/// objective evaluations.
pub trait GradientProvider: Send + Sync {
    fn gradient(&self, u: &[f64]) -> Result<(Vec<f64>, usize)>;
}

/// Gradient estimate restricted to a subspace basis.
#[derive(Debug, Clone)]
pub struct SubspaceGradient {
    problem: ProblemDefinition,
    basis: SubspaceBasis,
    mode: GradientMode,
    h: f64,
}

impl SubspaceGradient {
    pub fn new(problem: ProblemDefinition, basis: SubspaceBasis, mode: GradientMode, h: f64) -> Result<Self> {
        check_dim(problem.dimension(), basis.ambient_dim())?;
        Ok(Self { problem, basis, mode, h })
    }

    /// Full-space gradient along the coordinate axes.
    pub fn full(problem: ProblemDefinition, mode: GradientMode, h: f64) -> Self {
        let basis = SubspaceBasis::identity(problem.dimension());
        Self { problem, basis, mode, h }
    }

    pub fn basis(&self) -> &SubspaceBasis {
        &self.basis
    }

    pub fn mode(&self) -> GradientMode {
        self.mode
    }

    pub fn nominal_evals(&self) -> usize {
        self.mode.evals_per_gradient(self.basis.dim())
    }
}

impl GradientProvider for SubspaceGradient {
    fn gradient(&self, u: &[f64]) -> Result<(Vec<f64>, usize)> {
        approx_gradient(&self.problem, &self.basis, u, self.mode, self.h)
    }
}

/// `Σ_b D_b f(u) · b`, or the projected analytic gradient in analytic mode.
pub fn approx_gradient(
    problem: &ProblemDefinition,
    basis: &SubspaceBasis,
    u: &[f64],
    mode: GradientMode,
    h: f64,
) -> Result<(Vec<f64>, usize)> {
    check_dim(problem.dimension(), basis.ambient_dim())?;
    if mode == GradientMode::Analytic {
        let g = problem.analytic_gradient(u)?;
        return Ok((basis.project(&g), 0));
    }
    let (derivatives, evals) = directional_derivatives(problem, u, &basis.vectors, mode, h)?;
    let mut g = vec![0.0; u.len()];
    for (b, dv) in basis.vectors.iter().zip(&derivatives) {
        g.iter_mut().zip(b).for_each(|(gi, bi)| *gi += dv * bi);
    }
    Ok((g, evals))
}
