//! Ridge objectives `f(u) = φ(a_1·u, …, a_p·u)`, whose gradient field lies in
//! `span{a_i}` by construction.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::{dot, GradientFn, ObjectiveFn, PhysicalBox, ProblemDefinition};

type ShapeFn = dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync;

/// Smooth profile `φ(t)` returning the value and `∂φ/∂t`.
#[derive(Clone)]
pub struct RidgeShape(Arc<ShapeFn>);

impl fmt::Debug for RidgeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RidgeShape(..)")
    }
}

impl RidgeShape {
    pub fn custom(f: impl Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    /// `Σ t_i²`
    pub fn square() -> Self {
        Self::custom(|t| (t.iter().map(|x| x * x).sum(), t.iter().map(|x| 2.0 * x).collect()))
    }

    /// `−Σ (t_i − c_i)²`, maximized on the affine set `a_i·u = c_i`.
    pub fn concave_quadratic(targets: Vec<f64>) -> Self {
        Self::custom(move |t| {
            let value = -t.iter().zip(&targets).map(|(x, c)| (x - c).powi(2)).sum::<f64>();
            let grad = t.iter().zip(&targets).map(|(x, c)| -2.0 * (x - c)).collect();
            (value, grad)
        })
    }

    pub fn constant(c: f64) -> Self {
        Self::custom(move |t| (c, vec![0.0; t.len()]))
    }

    fn eval(&self, t: &[f64]) -> (f64, Vec<f64>) {
        (self.0)(t)
    }
}

/// Ridge problem on the plain unit cube (no linear constraints).
pub fn make_ridge_problem(d: usize, directions: Vec<Vec<f64>>, shape: RidgeShape) -> Result<ProblemDefinition> {
    for (i, a) in directions.iter().enumerate() {
        if a.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: a.len() });
        }
        for (j, b) in directions.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot(a, b) - target).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!("ridge directions {i} and {j} are not orthonormal")));
            }
        }
    }
    let directions = Arc::new(directions);
    let project = {
        let directions = Arc::clone(&directions);
        move |u: &[f64]| -> Vec<f64> { directions.iter().map(|a| dot(a, u)).collect() }
    };

    let objective: ObjectiveFn = {
        let (shape, project) = (shape.clone(), project.clone());
        Arc::new(move |u| Ok(shape.eval(&project(u)).0))
    };
    let gradient: GradientFn = {
        let directions = Arc::clone(&directions);
        Arc::new(move |u| {
            let (_, dphi) = shape.eval(&project(u));
            let mut g = vec![0.0; u.len()];
            for (a, w) in directions.iter().zip(&dphi) {
                for (gi, ai) in g.iter_mut().zip(a) {
                    *gi += w * ai;
                }
            }
            Ok(g)
        })
    };
    let p = directions.len();
    Ok(ProblemDefinition::new(format!("ridge-d{d}-p{p}"), PhysicalBox::uniform(d, 0.0, 1.0)?, objective)
        .with_gradient(gradient)
        .with_probe_margin(1.0))
}

/// A fixed, generic orthonormal family of `p` vectors in `R^d`.
pub fn orthonormal_directions(d: usize, p: usize) -> Result<Vec<Vec<f64>>> {
    if p > d {
        return Err(Error::InvalidInput(format!("cannot build {p} orthonormal vectors in dimension {d}")));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(p);
    for i in 0..p {
        let mut v: Vec<f64> = (0..d).map(|j| (1.0 + ((i + 1) * (j + 3)) as f64).sin() + 0.1 * (j as f64 + 1.0)).collect();
        // Two Gram–Schmidt passes.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    }

    #[test]
    fn rank_one_square() {
        let p = make_ridge_problem(4, vec![unit(4, 0)], RidgeShape::square()).unwrap();
        let u = [0.3, 0.7, 0.1, 0.9];
        assert_eq!(p.analytic_gradient(&u).unwrap(), vec![0.6, 0.0, 0.0, 0.0]);
        assert!((p.objective(&u).unwrap() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn constant_shape_has_zero_gradient() {
        let dirs = orthonormal_directions(5, 2).unwrap();
        let p = make_ridge_problem(5, dirs, RidgeShape::constant(3.0)).unwrap();
        assert_eq!(p.analytic_gradient(&[0.4; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(p.objective(&[0.4; 5]).unwrap(), 3.0);
    }

    #[test]
    fn generated_directions_are_orthonormal() {
        let dirs = orthonormal_directions(8, 8).unwrap();
        for (i, a) in dirs.iter().enumerate() {
            for (j, b) in dirs.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - target).abs() < 1e-12);
            }
        }
        assert!(orthonormal_directions(3, 4).is_err());
    }

    #[test]
    fn non_orthonormal_directions_rejected() {
        let err = make_ridge_problem(2, vec![vec![1.0, 1.0]], RidgeShape::square());
        assert!(err.is_err());
        assert!(make_ridge_problem(3, vec![vec![1.0, 0.0]], RidgeShape::square()).is_err());
    }
}
