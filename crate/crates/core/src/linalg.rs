//! Dense matrix helpers shared by the tensor algebra and the detectors.

use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};
use crate::C64;

pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;

/// Thin SVD with singular values sorted in nonincreasing order.
pub(crate) fn svd_sorted<T>(a: &DMatrix<T>) -> Result<(DMatrix<T>, Vec<f64>, DMatrix<T>)>
where
    T: ComplexField<RealField = f64>,
{
    let (n, p) = a.shape();
    let k = n.min(p);
    if k == 0 {
        return Ok((DMatrix::zeros(n, 0), Vec::new(), DMatrix::zeros(p, 0)));
    }
    let svd = nalgebra::linalg::SVD::try_new(a.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::DecompositionFailed("SVD did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V").adjoint();
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let us = DMatrix::from_fn(n, k, |i, j| u[(i, order[j])].clone());
    let vs = DMatrix::from_fn(p, k, |i, j| v[(i, order[j])].clone());
    Ok((us, order.iter().map(|&i| s[i]).collect(), vs))
}

/// Extends the orthonormal columns of `q` to a full n×n unitary matrix.
pub(crate) fn complete_basis<T>(q: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let (n, p) = q.shape();
    if p >= n {
        return q.columns(0, n).into_owned();
    }
    let mut aug = DMatrix::<T>::zeros(n, p + n);
    aug.columns_mut(0, p).copy_from(q);
    for i in 0..n {
        aug[(i, p + i)] = T::one();
    }
    // Householder QR of [q | I]: the first p columns of Q span q, up to unit phases.
    let qr = aug.qr();
    let mut full = qr.q();
    for j in 0..p {
        // Restore the original columns exactly; the tail is orthogonal to them.
        full.column_mut(j).copy_from(&q.column(j));
    }
    full.columns(0, n).into_owned()
}

/// Orthonormal basis of the column range of `a`, with numerical rank decided at
/// `rel_tol` times the largest singular value.
pub(crate) fn range_basis<T>(a: &DMatrix<T>, rel_tol: f64) -> Result<(DMatrix<T>, usize)>
where
    T: ComplexField<RealField = f64>,
{
    let (u, s, _) = svd_sorted(a)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > rel_tol * smax && x > 0.0).count();
    Ok((u.columns(0, rank).into_owned(), rank))
}

/// Ratio of extreme singular values, infinite for a singular matrix.
pub(crate) fn condition_number<T>(a: &DMatrix<T>) -> Result<f64>
where
    T: ComplexField<RealField = f64>,
{
    let (_, s, _) = svd_sorted(a)?;
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

pub(crate) fn to_complex(a: &RMatrix) -> CMatrix {
    a.map(|x| C64::new(x, 0.0))
}

/// Largest imaginary magnitude relative to the largest entry magnitude.
pub(crate) fn imag_residue(a: &CMatrix) -> f64 {
    let mag = a.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let im = a.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    if mag == 0.0 {
        0.0
    } else {
        im / mag
    }
}

pub(crate) fn real_part(a: &CMatrix) -> RMatrix {
    a.map(|z| z.re)
}
