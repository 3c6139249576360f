//! Training sets drawn from the Halton sequence.

use crate::error::{Error, Result};
use crate::problem::{ParameterVector, ProblemDefinition};

pub const DEFAULT_MAX_SCAN: u64 = 100_000;

const PRIMES: [u64; 25] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];

/// Largest dimension supported by [`halton_point`].
pub const MAX_HALTON_DIM: usize = PRIMES.len();

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    // Digit reversal kept in integers so the single division is correctly rounded.
    let mut numerator: u128 = 0;
    let mut denominator: u128 = 1;
    while index > 0 {
        numerator = numerator * base as u128 + (index % base) as u128;
        denominator *= base as u128;
        index /= base;
    }
    numerator as f64 / denominator as f64
}

/// Halton point number `index` (starting at 1) in `d` dimensions, using the
/// first `d` primes as bases.
pub fn halton_point(index: u64, d: usize) -> Result<Vec<f64>> {
    if index == 0 {
        return Err(Error::InvalidInput("Halton indices start at 1".into()));
    }
    if d > MAX_HALTON_DIM {
        return Err(Error::HaltonDimension(d));
    }
    Ok(PRIMES[..d].iter().map(|&b| radical_inverse(index, b)).collect())
}

/// Admissible points in Halton order, with the sequence index of each.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub points: Vec<ParameterVector>,
    pub source_indices: Vec<u64>,
    pub problem_label: String,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The first `n` points (all of them if `n` exceeds the length).
    pub fn prefix(&self, n: usize) -> TrainingSet {
        let n = n.min(self.len());
        TrainingSet {
            points: self.points[..n].to_vec(),
            source_indices: self.source_indices[..n].to_vec(),
            problem_label: self.problem_label.clone(),
        }
    }
}

/// Scans Halton indices `1..=max_scan` and keeps the first `n` admissible points.
pub fn generate_admissible(problem: &ProblemDefinition, n: usize, max_scan: u64) -> Result<TrainingSet> {
    if n == 0 {
        return Err(Error::InvalidInput("training set size must be positive".into()));
    }
    let d = problem.dimension();
    let mut points = Vec::with_capacity(n);
    let mut source_indices = Vec::with_capacity(n);
    for index in 1..=max_scan {
        let u = halton_point(index, d)?;
        if problem.is_admissible(&u)? {
            points.push(ParameterVector::new(u)?);
            source_indices.push(index);
            if points.len() == n {
                return Ok(TrainingSet {
                    points,
                    source_indices,
                    problem_label: problem.label().to_string(),
                });
            }
        }
    }
    Err(Error::InsufficientAdmissible { found: points.len(), requested: n, scanned: max_scan })
}
