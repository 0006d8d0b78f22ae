use std::ops::Range;

use super::krylov::{cg, KrylovOptions};
use super::sparse::SparseMatrix;

/// Symmetric positive definite approximation of an inverse.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64]) -> Vec<f64>;
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }
}

/// Inverse of a positive diagonal.
pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    /// Non-positive or non-finite entries fall back to 1.
    pub fn new(diag: &[f64]) -> Self {
        Self {
            inv_diag: diag
                .iter()
                .map(|&d| if d > 0.0 && d.is_finite() { 1.0 / d } else { 1.0 })
                .collect(),
        }
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.inv_diag).map(|(r, d)| r * d).collect()
    }
}

/// Approximate inverse of an SPD matrix by an inner Jacobi-CG solve.
/// Tight inner tolerances keep the action close to a fixed linear map,
/// which MINRES requires.
pub struct InnerCgPreconditioner {
    matrix: SparseMatrix,
    jacobi: JacobiPreconditioner,
    opts: KrylovOptions,
}

impl InnerCgPreconditioner {
    pub fn new(matrix: SparseMatrix, opts: KrylovOptions) -> Self {
        let jacobi = JacobiPreconditioner::new(&matrix.diagonal());
        Self { matrix, jacobi, opts }
    }
}

impl Preconditioner for InnerCgPreconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        cg(&self.matrix, r, None, &self.jacobi, &self.opts).0
    }
}

/// Block-diagonal composition acting independently on index ranges.
pub struct BlockDiagonalPreconditioner {
    blocks: Vec<(Range<usize>, Box<dyn Preconditioner>)>,
}

impl BlockDiagonalPreconditioner {
    pub fn new(blocks: Vec<(Range<usize>, Box<dyn Preconditioner>)>) -> Self {
        Self { blocks }
    }
}

impl Preconditioner for BlockDiagonalPreconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut out = r.to_vec();
        for (range, p) in &self.blocks {
            let z = p.apply(&r[range.clone()]);
            out[range.clone()].copy_from_slice(&z);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_and_blocks() {
        let j = JacobiPreconditioner::new(&[2.0, 0.0, 4.0]);
        assert_eq!(j.apply(&[2.0, 3.0, 2.0]), vec![1.0, 3.0, 0.5]);
        let inner = InnerCgPreconditioner::new(
            SparseMatrix::from_dense(2, 2, &[4.0, 1.0, 1.0, 3.0]),
            KrylovOptions { tol: 1e-14, max_iter: 10 },
        );
        let b = BlockDiagonalPreconditioner::new(vec![
            (0..2, Box::new(inner) as Box<dyn Preconditioner>),
            (2..3, Box::new(JacobiPreconditioner::new(&[5.0]))),
        ]);
        let z = b.apply(&[1.0, 2.0, 10.0]);
        // [[4,1],[1,3]]^{-1} (1,2) = (1/11, 7/11)
        assert!((z[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((z[1] - 7.0 / 11.0).abs() < 1e-14);
        assert_eq!(z[2], 2.0);
    }
}
