//! Unfolding and the structured block matrices that realize L-products as
//! ordinary matrix products: `unfold(a • c) = lmat(a) · unfold(c)`.

use crate::error::{dim_err, Error, Result};
use crate::linalg::{imag_residue, real_part, CMatrix, RMatrix};
use crate::tensor::Tensor3;
use crate::transform::{LinearTransform, TransformKind};
use crate::C64;

/// Frontal slices stacked vertically: an `(n1·n3) × n2` matrix.
pub fn unfold(a: &Tensor3) -> CMatrix {
    let (n1, n2, n3) = a.shape();
    CMatrix::from_fn(n1 * n3, n2, |row, j| a.get(row % n1, j, row / n1))
}

/// Inverse of [`unfold`] for a stack of `n3` slices.
pub fn fold(m: &CMatrix, n3: usize) -> Result<Tensor3> {
    if n3 == 0 || !m.nrows().is_multiple_of(n3) {
        return dim_err(format!("{} rows cannot be split into {n3} slices", m.nrows()));
    }
    let n1 = m.nrows() / n3;
    Ok(Tensor3::from_fn(n1, m.ncols(), n3, |i, j, k| m[(k * n1 + i, j)]))
}

fn block_matrix(a: &Tensor3, pick: impl Fn(usize, usize) -> Option<usize>) -> CMatrix {
    let (n1, n2, n3) = a.shape();
    let slices = a.slices();
    let mut out = CMatrix::zeros(n1 * n3, n2 * n3);
    for p in 0..n3 {
        for q in 0..n3 {
            if let Some(s) = pick(p, q) {
                out.view_mut((p * n1, q * n2), (n1, n2)).copy_from(&slices[s]);
            }
        }
    }
    out
}

/// Block-circulant matrix: block `(p, q)` is slice `(p − q) mod n3`.
pub fn bcirc(a: &Tensor3) -> CMatrix {
    let n3 = a.n3();
    block_matrix(a, |p, q| Some((p + n3 - q) % n3))
}

/// `(I + Z) ⊗ I_n`, or its inverse, with `Z` the upshift.
fn shift_kron(n3: usize, n: usize, inverse: bool) -> CMatrix {
    let mut out = CMatrix::zeros(n3 * n, n3 * n);
    for k in 0..n3 {
        for l in k..n3 {
            // (I + Z)⁻¹ is upper triangular with entries (−1)^(l−k).
            let w = if inverse {
                if (l - k) % 2 == 0 { 1.0 } else { -1.0 }
            } else if l == k || l == k + 1 {
                1.0
            } else {
                0.0
            };
            if w != 0.0 {
                for i in 0..n {
                    out[(k * n + i, l * n + i)] = C64::new(w, 0.0);
                }
            }
        }
    }
    out
}

/// Block Toeplitz-plus-Hankel matrix conjugated by the `(I + Z)` factors.
///
/// With 0-based block indices, the Toeplitz part has slice `|p − q|` and the
/// Hankel part has slice `s = p + q + 1` for `s < n3`, a zero block for
/// `s = n3`, and slice `2·n3 − s` beyond that.
pub fn lmat_dct(a: &Tensor3) -> CMatrix {
    let (n1, n2, n3) = a.shape();
    let toeplitz = block_matrix(a, |p, q| Some(p.abs_diff(q)));
    let hankel = block_matrix(a, |p, q| {
        let s = p + q + 1;
        match s.cmp(&n3) {
            std::cmp::Ordering::Less => Some(s),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(2 * n3 - s),
        }
    });
    shift_kron(n3, n1, true) * (toeplitz + hankel) * shift_kron(n3, n2, false)
}

/// Dispatches to [`bcirc`] or [`lmat_dct`].
pub fn lmat(t: &LinearTransform, a: &Tensor3) -> Result<CMatrix> {
    if a.n3() != t.n3() {
        return dim_err(format!("tensor has n3 = {} but transform has n3 = {}", a.n3(), t.n3()));
    }
    match t.kind() {
        TransformKind::Dft => Ok(bcirc(a)),
        TransformKind::Dct => Ok(lmat_dct(a)),
        TransformKind::Custom => Err(Error::UnsupportedTransform(TransformKind::Custom)),
    }
}

/// [`lmat`] of real data as a real matrix.
pub fn lmat_real(t: &LinearTransform, a: &Tensor3) -> Result<RMatrix> {
    if !a.is_real() {
        return Err(Error::ComplexData);
    }
    let m = lmat(t, a)?;
    let residue = imag_residue(&m);
    if residue > 1e-12 {
        return Err(Error::ComplexResidue { residue });
    }
    Ok(real_part(&m))
}
