use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::derivatives::{
    materialize_jacobian, JacobianOperator, SecondOrder, DEFAULT_MATERIALIZE_BUDGET,
};
use crate::error::{check_len, Error, Result};
use crate::models::{Model, ParameterSet};

/// Eigenvalues below `RANK_THRESHOLD * lambda_max` count as zero.
pub const RANK_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// Eigenvalues of `J J^T`, descending and clamped at zero (length `d_x`).
    pub eigenvalues: Vec<f64>,
    /// `sqrt` of the eigenvalues.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Absolute cut-off used for `rank`.
    pub threshold: f64,
}

impl SpectrumReport {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let threshold = RANK_THRESHOLD * eigenvalues.first().copied().unwrap_or(0.0);
        let rank = eigenvalues
            .iter()
            .filter(|&&l| l > 0.0 && l >= threshold)
            .count();
        let singular_values = eigenvalues.iter().map(|l| l.sqrt()).collect();
        Self {
            eigenvalues,
            singular_values,
            rank,
            threshold,
        }
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

/// Full spectrum plus the factors needed to form singular directions.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub report: SpectrumReport,
    pub jacobian: DMatrix<f64>,
    /// Columns are unit eigenvectors of `J J^T`, ordered as `report.eigenvalues`.
    pub left_vectors: DMatrix<f64>,
}

impl DenseSpectrum {
    /// Unit right-singular vector `v_i = J^T u_i / sigma_i` (theta-space).
    pub fn right_singular_vector(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.report.rank {
            return Err(Error::IndexOutOfRange {
                index: i,
                rank: self.report.rank,
            });
        }
        let u = self.left_vectors.column(i);
        let v = self.jacobian.tr_mul(&u) / self.report.singular_values[i];
        Ok(v.as_slice().to_vec())
    }

    /// Left-singular vector `u_i` (x-space).
    pub fn left_singular_vector(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.report.eigenvalues.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                rank: self.report.eigenvalues.len(),
            });
        }
        Ok(self.left_vectors.column(i).as_slice().to_vec())
    }

    /// `||U Sigma^{-1} V^T delta||` over the numerically nonzero singular values.
    pub fn pseudo_inverse_response(&self, delta: &[f64]) -> Result<f64> {
        check_len("delta", self.jacobian.ncols(), delta.len())?;
        let jd = &self.jacobian * DVector::from_column_slice(delta);
        let mut sum = 0.0;
        for i in 0..self.report.rank {
            let u = self.left_vectors.column(i);
            let s = self.report.singular_values[i];
            // v_i^T delta = u_i^T J delta / sigma_i
            let proj = u.dot(&jd) / s;
            sum += (proj / s).powi(2);
        }
        Ok(sum.sqrt())
    }
}

pub fn dense_spectrum_op<O: JacobianOperator + ?Sized>(
    op: &mut O,
    budget: usize,
) -> Result<DenseSpectrum> {
    let jacobian = materialize_jacobian(op, budget)?;
    let jjt = &jacobian * jacobian.transpose();
    let eig = SymmetricEigen::new(jjt);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let left_vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok(DenseSpectrum {
        report: SpectrumReport::from_eigenvalues(eigenvalues),
        jacobian,
        left_vectors,
    })
}

/// Eigenvalues of `J J^T` alone, skipping the eigenvectors.
pub fn dense_eigenvalues_op<O: JacobianOperator + ?Sized>(
    op: &mut O,
    budget: usize,
) -> Result<SpectrumReport> {
    let jacobian = materialize_jacobian(op, budget)?;
    let jjt = &jacobian * jacobian.transpose();
    Ok(SpectrumReport::from_eigenvalues(
        jjt.symmetric_eigenvalues().iter().copied().collect(),
    ))
}

pub fn dense_spectrum(
    model: &Model,
    params: &ParameterSet,
    x: &[f64],
    label: usize,
) -> Result<DenseSpectrum> {
    let mut op = SecondOrder::new(model, params, x, label)?;
    dense_spectrum_op(&mut op, DEFAULT_MATERIALIZE_BUDGET)
}
