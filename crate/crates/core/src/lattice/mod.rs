//! Floquet–Bloch spectrum of a periodic mass-spring chain and its band gap.
//!
//! The unit cell holds `n` masses `m_1..m_n` connected in a ring by springs
//! `k_1..k_n`: spring `i` joins mass `i` to mass `i+1`, and spring `n` joins
//! mass `n` to mass 1 of the neighbouring cell, picking up the Bloch phase
//! `e^{iκ}`. Frequencies are `ω = √λ` for `K(κ) v = λ M v`.
//!
//! The band gap between bands `j` and `j+1` is signed:
//! `min_κ ω_{j+1}(κ) − max_κ ω_j(κ)`, so overlapping bands give a negative
//! value rather than zero.

pub mod eigen;
pub mod ridge;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

pub use eigen::C64;
use crate::error::{check_dim, Error, Result};
use crate::problem::{GradientFn, LinearConstraint, ObjectiveFn, PhysicalBox, ProblemDefinition};

pub use ridge::{make_ridge_problem, orthonormal_directions, RidgeShape};

pub const DEFAULT_N_KAPPA: usize = 129;
pub const DEGENERACY_TOL: f64 = 1e-8;
const ZERO_EIGENVALUE_ULPS: f64 = 64.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    masses: Vec<f64>,
    stiffnesses: Vec<f64>,
}

impl ChainParams {
    pub fn new(masses: Vec<f64>, stiffnesses: Vec<f64>) -> Result<Self> {
        check_dim(masses.len(), stiffnesses.len())?;
        if masses.is_empty() {
            return Err(Error::InvalidInput("chain needs at least one mass".into()));
        }
        for (name, values) in [("mass", &masses), ("stiffness", &stiffnesses)] {
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidInput(format!("{name} {} must be positive, got {v}", i + 1)));
            }
        }
        Ok(Self { masses, stiffnesses })
    }

    /// Splits `x = (m_1..m_n, k_1..k_n)`.
    pub fn from_flat(x: &[f64]) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("flat chain vector has odd length {}", x.len())));
        }
        let n = x.len() / 2;
        Self::new(x[..n].to_vec(), x[n..].to_vec())
    }

    pub fn n_dof(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn stiffnesses(&self) -> &[f64] {
        &self.stiffnesses
    }

    // (a, b, phase on b) for spring i.
    fn spring(&self, i: usize, kappa: f64) -> (usize, usize, C64) {
        let n = self.n_dof();
        let phase = if i + 1 == n { C64::from_polar(1.0, kappa) } else { C64::new(1.0, 0.0) };
        (i, (i + 1) % n, phase)
    }
}

#[derive(Debug, Clone)]
pub struct BlochMatrices {
    pub stiffness: DMatrix<C64>,
    pub mass: Vec<f64>,
}

pub fn assemble_bloch_matrices(params: &ChainParams, kappa: f64) -> Result<BlochMatrices> {
    if !kappa.is_finite() {
        return Err(Error::NonFinite("wavenumber".into()));
    }
    let n = params.n_dof();
    let mut k = DMatrix::<C64>::zeros(n, n);
    for (i, &ki) in params.stiffnesses.iter().enumerate() {
        let (a, b, phase) = params.spring(i, kappa);
        k[(a, a)] += ki;
        k[(b, b)] += ki;
        k[(a, b)] -= phase * ki;
        k[(b, a)] -= phase.conj() * ki;
    }
    Ok(BlochMatrices { stiffness: k, mass: params.masses.clone() })
}

/// `n` uniformly spaced wavenumbers on `[0, π]`, endpoints included.
pub fn uniform_kappa_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidInput("kappa grid needs at least 2 points".into()));
    }
    let mut grid: Vec<f64> = (0..n).map(|i| PI * i as f64 / (n - 1) as f64).collect();
    grid[n - 1] = PI;
    Ok(grid)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    let ok = !grid.is_empty()
        && grid[0] == 0.0
        && grid[grid.len() - 1] == PI
        && grid.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput("kappa grid must increase strictly from 0 to π".into()))
    }
}

#[derive(Debug, Clone)]
pub struct DispersionResult {
    pub kappa_grid: Vec<f64>,
    /// Row `i` holds the ascending frequencies at `kappa_grid[i]`.
    pub bands: Vec<Vec<f64>>,
}

fn frequencies(values: &[f64], kappa: f64) -> Result<Vec<f64>> {
    let scale = values.last().copied().unwrap_or(1.0).abs().max(f64::MIN_POSITIVE);
    values
        .iter()
        .map(|&lambda| {
            if lambda < -1e-10 * scale {
                Err(Error::InvalidInput(format!("negative eigenvalue {lambda:e} at kappa = {kappa}")))
            } else if lambda <= ZERO_EIGENVALUE_ULPS * f64::EPSILON * scale {
                // Rounding noise around the rigid-body mode; √ would magnify it.
                Ok(0.0)
            } else {
                Ok(lambda.sqrt())
            }
        })
        .collect()
}

pub fn dispersion_bands(params: &ChainParams, kappa_grid: &[f64]) -> Result<DispersionResult> {
    validate_grid(kappa_grid)?;
    let bands = kappa_grid
        .iter()
        .map(|&kappa| {
            let m = assemble_bloch_matrices(params, kappa)?;
            let eig = eigen::solve(&m.stiffness, &m.mass, kappa, false)?;
            frequencies(&eig.values, kappa)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DispersionResult { kappa_grid: kappa_grid.to_vec(), bands })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandGapValue {
    pub gap: f64,
    pub upper_min: f64,
    pub lower_max: f64,
    pub kappa_upper: f64,
    pub kappa_lower: f64,
    /// 1-based index of the lower band.
    pub band_index_j: usize,
}

fn check_band_index(params: &ChainParams, j: usize) -> Result<()> {
    if j == 0 || j >= params.n_dof() {
        return Err(Error::InvalidInput(format!(
            "band index {j} outside 1..={}",
            params.n_dof().saturating_sub(1)
        )));
    }
    Ok(())
}

/// Signed gap between bands `j` and `j + 1` (1-based), extremized over the grid.
/// Ties resolve to the first grid point.
pub fn band_gap(params: &ChainParams, j: usize, kappa_grid: &[f64]) -> Result<BandGapValue> {
    check_band_index(params, j)?;
    let dispersion = dispersion_bands(params, kappa_grid)?;
    Ok(gap_from_dispersion(&dispersion, j))
}

fn gap_from_dispersion(dispersion: &DispersionResult, j: usize) -> BandGapValue {
    let (mut lower_max, mut kappa_lower) = (f64::NEG_INFINITY, 0.0);
    let (mut upper_min, mut kappa_upper) = (f64::INFINITY, 0.0);
    for (kappa, row) in dispersion.kappa_grid.iter().zip(&dispersion.bands) {
        if row[j - 1] > lower_max {
            lower_max = row[j - 1];
            kappa_lower = *kappa;
        }
        if row[j] < upper_min {
            upper_min = row[j];
            kappa_upper = *kappa;
        }
    }
    BandGapValue {
        gap: upper_min - lower_max,
        upper_min,
        lower_max,
        kappa_upper,
        kappa_lower,
        band_index_j: j,
    }
}

/// `∂ω_band/∂(m, k)` at a single wavenumber, from the eigenvector alone.
fn frequency_sensitivity(params: &ChainParams, band: usize, kappa: f64) -> Result<Vec<f64>> {
    let n = params.n_dof();
    let m = assemble_bloch_matrices(params, kappa)?;
    let eig = eigen::solve(&m.stiffness, &m.mass, kappa, true)?;
    let values = &eig.values;
    let lambda = values[band];
    let scale = values[n - 1].abs().max(f64::MIN_POSITIVE);
    let mut rel_gap = f64::INFINITY;
    if band > 0 {
        rel_gap = rel_gap.min((lambda - values[band - 1]).abs() / scale);
    }
    if band + 1 < n {
        rel_gap = rel_gap.min((values[band + 1] - lambda).abs() / scale);
    }
    if rel_gap <= DEGENERACY_TOL {
        return Err(Error::Degenerate { band: band + 1, kappa, rel_gap });
    }
    if lambda <= 1e-14 * scale {
        return Err(Error::ZeroFrequency { band: band + 1, kappa });
    }
    let omega = lambda.sqrt();
    let vectors = eig.vectors.expect("eigenvectors requested");
    let v = vectors.column(band);

    let mut grad = vec![0.0; 2 * n];
    for i in 0..n {
        grad[i] = -lambda * v[i].norm_sqr() / (2.0 * omega);
        let (a, b, phase) = params.spring(i, kappa);
        grad[n + i] = (v[a] - phase * v[b]).norm_sqr() / (2.0 * omega);
    }
    Ok(grad)
}

/// Gradient of the signed band gap with respect to `(m_1..m_n, k_1..k_n)`.
pub fn band_gap_gradient(params: &ChainParams, j: usize, kappa_grid: &[f64]) -> Result<Vec<f64>> {
    let gap = band_gap(params, j, kappa_grid)?;
    gradient_at_extremizers(params, &gap)
}

fn gradient_at_extremizers(params: &ChainParams, gap: &BandGapValue) -> Result<Vec<f64>> {
    let j = gap.band_index_j;
    let upper = frequency_sensitivity(params, j, gap.kappa_upper)?;
    let lower = frequency_sensitivity(params, j - 1, gap.kappa_lower)?;
    Ok(upper.iter().zip(&lower).map(|(a, b)| a - b).collect())
}

/// Settings for the band-gap maximization problem over `(m, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainProblemSpec {
    pub n_dof: usize,
    pub bounds: PhysicalBox,
    pub mass_budget: f64,
    pub band_index: usize,
    pub n_kappa: usize,
}

impl ChainProblemSpec {
    /// Box `[0.5, 5]` on every parameter, total mass at most 12, gap above band 2.
    pub fn flagship() -> Self {
        Self::with_defaults(4)
    }

    pub fn with_defaults(n_dof: usize) -> Self {
        Self {
            n_dof,
            bounds: PhysicalBox::uniform(2 * n_dof, 0.5, 5.0).expect("valid default box"),
            mass_budget: 12.0,
            band_index: 2.min(n_dof.saturating_sub(1)).max(1),
            n_kappa: DEFAULT_N_KAPPA,
        }
    }
}

/// Wraps the chain band gap as a problem on the unit cube: the first `n`
/// coordinates map to masses, the last `n` to stiffnesses.
pub fn make_chain_problem(spec: &ChainProblemSpec) -> Result<ProblemDefinition> {
    let n = spec.n_dof;
    if n < 2 {
        return Err(Error::InvalidInput("chain problem needs n_dof >= 2".into()));
    }
    check_dim(2 * n, spec.bounds.dim())?;
    if spec.bounds.lower().iter().any(|&lo| lo <= 0.0) {
        return Err(Error::InvalidBox("chain parameters need a positive lower bound".into()));
    }
    let dummy = ChainParams::new(vec![1.0; n], vec![1.0; n])?;
    check_band_index(&dummy, spec.band_index)?;

    let grid = Arc::new(uniform_kappa_grid(spec.n_kappa)?);
    let bounds = spec.bounds.clone();
    let j = spec.band_index;

    let objective: ObjectiveFn = {
        let (grid, bounds) = (Arc::clone(&grid), bounds.clone());
        Arc::new(move |u| {
            let params = ChainParams::from_flat(&bounds.from_unit_cube(u)?)?;
            Ok(band_gap(&params, j, &grid)?.gap)
        })
    };
    let gradient: GradientFn = {
        let (grid, bounds) = (Arc::clone(&grid), bounds.clone());
        let widths = bounds.widths();
        Arc::new(move |u| {
            let params = ChainParams::from_flat(&bounds.from_unit_cube(u)?)?;
            let g = band_gap_gradient(&params, j, &grid)?;
            Ok(g.iter().zip(&widths).map(|(gi, wi)| gi * wi).collect())
        })
    };

    let mass_selector: Vec<f64> = (0..2 * n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
    let budget = LinearConstraint::from_physical(&mass_selector, spec.mass_budget, &bounds)?;

    // Probes may step slightly outside the cube as long as every parameter stays positive.
    let margin = bounds
        .lower()
        .iter()
        .zip(bounds.widths())
        .map(|(lo, w)| 0.5 * lo / w)
        .fold(1e-3, f64::min);

    ProblemDefinition::new(format!("chain-n{n}-j{j}"), bounds, objective)
        .with_gradient(gradient)
        .with_probe_margin(margin)
        .with_constraint(budget)
}
