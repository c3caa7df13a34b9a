use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};

/// Square OV-circuit kernel of one head.
///
/// Usually the reduced `d_head x d_head` product `W_V W_E W_U W_O`, which has
/// the same nonzero spectrum as the `vocab x vocab` circuit `W_U W_O W_V W_E`.
#[derive(Debug, Clone, PartialEq)]
pub struct CopyKernel {
    pub matrix: DMatrix<f64>,
    pub layer: usize,
    pub head: usize,
}

impl CopyKernel {
    pub fn new(matrix: DMatrix<f64>, layer: usize, head: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite copy kernel for L{layer}H{head}")));
        }
        Ok(Self { matrix, layer, head })
    }
}

/// `W_U W_O W_V W_E`, the full token-to-logit circuit.
pub fn full_circuit(
    w_u: &DMatrix<f64>,
    w_o: &DMatrix<f64>,
    w_v: &DMatrix<f64>,
    w_e: &DMatrix<f64>,
) -> DMatrix<f64> {
    w_u * w_o * w_v * w_e
}

/// `W_V W_E W_U W_O`, cyclically permuted so it is `d_head x d_head`.
pub fn reduced_kernel(
    w_u: &DMatrix<f64>,
    w_o: &DMatrix<f64>,
    w_v: &DMatrix<f64>,
    w_e: &DMatrix<f64>,
) -> DMatrix<f64> {
    w_v * w_e * (w_u * w_o)
}

/// `sum(lambda) / sum(|lambda|)` over the eigenvalues of the kernel.
///
/// The numerator is the trace, which equals the sum of the real parts; the
/// imaginary parts of conjugate pairs cancel. A kernel whose eigenvalues are
/// all zero scores 0.
pub fn copying_score(kernel: &CopyKernel) -> Result<f64> {
    let m = &kernel.matrix;
    if m.is_empty() || m.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical(format!(
            "eigenvalue iteration did not converge for L{}H{}",
            kernel.layer, kernel.head
        ))
    })?;
    let eig = schur.complex_eigenvalues();
    let abs_sum: f64 = eig.iter().map(|z| z.norm()).sum();
    if abs_sum == 0.0 {
        return Ok(0.0);
    }
    Ok((m.trace() / abs_sum).clamp(-1.0, 1.0))
}
