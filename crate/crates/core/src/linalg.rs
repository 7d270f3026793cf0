use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

pub(crate) fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn sym_min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().min()
}

/// Minimal-norm solution of the underdetermined system `J δ = r` where the
/// norm is `δᵀ G δ` for the diagonal-blocked metric `G`, supplied through its
/// inverse: `δ = G⁻¹Jᵀ (J G⁻¹ Jᵀ)⁻¹ r`. Returns `None` when `J G⁻¹ Jᵀ` is not
/// positive definite.
pub(crate) fn min_norm_solve(j: &DMatrix<f64>, metric_inv: &DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    let gj = metric_inv * j.transpose();
    let normal = j * &gj;
    spd_solve(&normal, r).map(|y| gj * y)
}

/// Smallest singular value of a (possibly wide) matrix.
pub(crate) fn min_singular_value(j: &DMatrix<f64>) -> f64 {
    let (r, c) = j.shape();
    let gram = if r <= c { j * j.transpose() } else { j.transpose() * j };
    sym_min_eigenvalue(&gram).max(0.0).sqrt()
}

pub(crate) fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
