//! Generalized Hermitian eigenproblem `K v = λ M v` with diagonal positive `M`.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Eigenpairs sorted by ascending eigenvalue. Each column of `vectors` is
/// `M`-normalized (`v† M v = 1`).
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<C64>>,
}

const MAX_SWEEPS: usize = 200;

/// Solves `K v = λ M v` by symmetric scaling with `M^{-1/2}`.
pub fn solve(stiffness: &DMatrix<C64>, mass: &[f64], kappa: f64, with_vectors: bool) -> Result<GeneralizedEigen> {
    let n = mass.len();
    let scale: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| stiffness[(i, j)] * (scale[i] * scale[j]));

    let eig = SymmetricEigen::try_new(scaled, f64::EPSILON, MAX_SWEEPS * n)
        .ok_or(Error::EigenNonConvergence { kappa })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNonConvergence { kappa });
    }

    let vectors = with_vectors.then(|| {
        DMatrix::from_fn(n, n, |row, col| eig.eigenvectors[(row, order[col])] * scale[row])
    });
    Ok(GeneralizedEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_problem() {
        let k = DMatrix::from_diagonal_element(2, 2, C64::new(2.0, 0.0));
        let eig = solve(&k, &[1.0, 2.0], 0.0, true).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 2.0).abs() < 1e-14);
        let v = eig.vectors.unwrap();
        // M-normalization: column 0 belongs to mass 2.
        assert!((v[(1, 0)].norm_sqr() * 2.0 - 1.0).abs() < 1e-14);
        assert!((v[(0, 1)].norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hermitian_with_complex_offdiagonal() {
        // [[2, i],[-i, 2]] has eigenvalues 1 and 3.
        let k = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)],
        );
        let eig = solve(&k, &[1.0, 1.0], 0.0, true).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-13);
        assert!((eig.values[1] - 3.0).abs() < 1e-13);
        let v = eig.vectors.unwrap();
        for c in 0..2 {
            let col = v.column(c);
            let kv = &k * col;
            for r in 0..2 {
                assert!((kv[r] - col[r] * eig.values[c]).norm() < 1e-12);
            }
        }
    }
}
