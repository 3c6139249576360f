//! Constrained maximization problems posed on the unit hypercube.
//!
//! Every optimizer, sampler and PCA routine in this crate works in unit-cube
//! coordinates `u ∈ [0, 1]^d`. Physical parameters only appear inside model
//! assembly, reached through [`PhysicalBox::from_unit_cube`].

use std::fmt;
use std::ops::Deref;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};

/// Tolerance used for both the hypercube bounds and the linear constraints
/// when deciding admissibility.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

pub type ObjectiveFn = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A point of the unit hypercube (optimization coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coordinate {i} of parameter vector")));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Axis-aligned box of physical parameter ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PhysicalBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidBox("box has zero dimensions".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidBox(format!(
                    "coordinate {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` on every one of `dim` coordinates.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).collect()
    }

    pub fn to_unit_cube(&self, x: &[f64]) -> Result<ParameterVector> {
        check_dim(self.dim(), x.len())?;
        let u = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(xi, (lo, hi))| (xi - lo) / (hi - lo))
            .collect();
        ParameterVector::new(u)
    }

    pub fn from_unit_cube(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), u.len())?;
        Ok(u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(ui, (lo, hi))| lo + ui * (hi - lo))
            .collect())
    }
}

/// `a·u − b ≤ 0` in unit-cube coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    coefficients: Vec<f64>,
    offset: f64,
}

impl LinearConstraint {
    pub fn new(coefficients: Vec<f64>, offset: f64) -> Result<Self> {
        if coefficients.iter().all(|&a| a == 0.0) {
            return Err(Error::InvalidInput("linear constraint with all-zero coefficients".into()));
        }
        if !offset.is_finite() || coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("linear constraint coefficients".into()));
        }
        Ok(Self { coefficients, offset })
    }

    /// Rewrites the physical constraint `a·x ≤ b` for unit coordinates,
    /// using `x = lower + width ∘ u`.
    pub fn from_physical(a: &[f64], b: f64, bounds: &PhysicalBox) -> Result<Self> {
        check_dim(bounds.dim(), a.len())?;
        let widths = bounds.widths();
        let coefficients = a.iter().zip(&widths).map(|(ai, wi)| ai * wi).collect();
        let shift: f64 = a.iter().zip(bounds.lower()).map(|(ai, lo)| ai * lo).sum();
        Self::new(coefficients, b - shift)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        dot(&self.coefficients, u) - self.offset
    }
}

/// `maximize f(u)` subject to `u ∈ [0,1]^d` and a list of linear inequalities.
#[derive(Clone)]
pub struct ProblemDefinition {
    label: String,
    bounds: PhysicalBox,
    constraints: Vec<LinearConstraint>,
    objective: ObjectiveFn,
    analytic_gradient: Option<GradientFn>,
    probe_margin: f64,
}

impl fmt::Debug for ProblemDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDefinition")
            .field("label", &self.label)
            .field("dimension", &self.dimension())
            .field("bounds", &self.bounds)
            .field("constraints", &self.constraints)
            .field("analytic_gradient", &self.analytic_gradient.is_some())
            .field("probe_margin", &self.probe_margin)
            .finish()
    }
}

impl ProblemDefinition {
    pub fn new(label: impl Into<String>, bounds: PhysicalBox, objective: ObjectiveFn) -> Self {
        Self {
            label: label.into(),
            bounds,
            constraints: Vec::new(),
            objective,
            analytic_gradient: None,
            probe_margin: 0.0,
        }
    }

    pub fn with_constraint(mut self, constraint: LinearConstraint) -> Result<Self> {
        check_dim(self.dimension(), constraint.coefficients.len())?;
        self.constraints.push(constraint);
        Ok(self)
    }

    pub fn with_gradient(mut self, gradient: GradientFn) -> Self {
        self.analytic_gradient = Some(gradient);
        self
    }

    /// Distance outside the unit cube at which the objective may still be
    /// evaluated by finite-difference probes. Iterates never leave the cube.
    pub fn with_probe_margin(mut self, margin: f64) -> Self {
        self.probe_margin = margin.max(0.0);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dimension(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &PhysicalBox {
        &self.bounds
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn probe_margin(&self) -> f64 {
        self.probe_margin
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.analytic_gradient.is_some()
    }

    pub fn objective(&self, u: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), u.len())?;
        let value = (self.objective)(u)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("objective of '{}'", self.label)));
        }
        Ok(value)
    }

    pub fn analytic_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dimension(), u.len())?;
        let gradient = self
            .analytic_gradient
            .as_ref()
            .ok_or_else(|| Error::MissingAnalyticGradient(self.label.clone()))?;
        let g = gradient(u)?;
        check_dim(self.dimension(), g.len())?;
        Ok(g)
    }

    pub fn evaluate_constraints(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dimension(), u.len())?;
        Ok(self.constraints.iter().map(|c| c.value(u)).collect())
    }

    pub fn is_admissible(&self, u: &[f64]) -> Result<bool> {
        check_dim(self.dimension(), u.len())?;
        let in_cube = u
            .iter()
            .all(|&x| (-ADMISSIBILITY_TOL..=1.0 + ADMISSIBILITY_TOL).contains(&x));
        Ok(in_cube && self.constraints.iter().all(|c| c.value(u) <= ADMISSIBILITY_TOL))
    }

    /// Returns a copy whose objective calls increment the returned counter.
    /// Analytic-gradient calls are not counted.
    pub fn with_eval_counter(&self) -> (Self, Arc<AtomicUsize>) {
        let counter = Arc::new(AtomicUsize::new(0));
        let inner = Arc::clone(&self.objective);
        let tally = Arc::clone(&counter);
        let counted: ObjectiveFn = Arc::new(move |u| {
            tally.fetch_add(1, Ordering::Relaxed);
            inner(u)
        });
        let mut problem = self.clone();
        problem.objective = counted;
        (problem, counter)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
