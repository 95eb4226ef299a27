//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Systems whose 1-norm condition estimate exceeds this are reported as singular.
pub const MAX_CONDITION: f64 = 1e12;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization with partial pivoting plus a 1-norm condition estimate.
pub struct Factorized {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub condition: f64,
}

impl Factorized {
    pub fn new(m: &DMatrix<f64>, stage: usize) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let lu = m.clone().lu();
        let condition = match lu.try_inverse() {
            Some(inv) => norm1(m) * norm1(&inv),
            None => f64::INFINITY,
        };
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::SingularSystem { stage, condition });
        }
        Ok(Self { lu, condition })
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        // Invertibility was established at construction.
        self.lu
            .solve(rhs)
            .expect("factorization checked non-singular")
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.lu
            .solve(rhs)
            .expect("factorization checked non-singular")
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Projects a symmetric matrix onto the PSD cone by clamping negative
/// eigenvalues to zero. Non-negative eigenvalues are kept as they are.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    symmetrize(&mut out);
    out
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
