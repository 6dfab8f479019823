//! Dense third-order tensors.

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::linalg::CMatrix;
use crate::C64;

/// Dense `n1 × n2 × n3` array of complex scalars.
///
/// Storage is slice-major, column-major inside each frontal slice, so slice
/// `k` is the contiguous block `data[k·n1·n2 .. (k+1)·n1·n2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n1: usize,
    n2: usize,
    n3: usize,
    data: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub frobenius: f64,
    /// Largest row-tube ℓ2 norm; only defined for tensor columns.
    pub linf_star: Option<f64>,
    pub linf: f64,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Tensor3 {
            n1,
            n2,
            n3,
            data: vec![C64::new(0.0, 0.0); n1 * n2 * n3],
        }
    }

    pub fn from_fn(n1: usize, n2: usize, n3: usize, mut f: impl FnMut(usize, usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n1 * n2 * n3);
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 { n1, n2, n3, data }
    }

    pub fn from_real_fn(n1: usize, n2: usize, n3: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        Self::from_fn(n1, n2, n3, |i, j, k| C64::new(f(i, j, k), 0.0))
    }

    /// Builds a tensor from values listed in `(i, j, k)` row-major order.
    pub fn from_row_major(n1: usize, n2: usize, n3: usize, values: &[C64]) -> Result<Self> {
        if values.len() != n1 * n2 * n3 {
            return dim_err(format!("{} values for a {n1}x{n2}x{n3} tensor", values.len()));
        }
        Ok(Self::from_fn(n1, n2, n3, |i, j, k| values[(i * n2 + j) * n3 + k]))
    }

    /// Values in `(i, j, k)` row-major order.
    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                for k in 0..self.n3 {
                    out.push(self.get(i, j, k));
                }
            }
        }
        out
    }

    pub(crate) fn from_slice_major(n1: usize, n2: usize, n3: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), n1 * n2 * n3);
        Tensor3 { n1, n2, n3, data }
    }

    /// Assembles a tensor from its frontal slices.
    pub fn from_slices(slices: &[CMatrix]) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(Error::InvalidArg("at least one frontal slice is required".into()));
        };
        let (n1, n2) = first.shape();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for s in slices {
            if s.shape() != (n1, n2) {
                return dim_err("frontal slices differ in shape");
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Tensor3::from_slice_major(n1, n2, slices.len(), data))
    }

    /// Entries drawn independently from U(0, 1).
    pub fn random_uniform<R: Rng + ?Sized>(n1: usize, n2: usize, n3: usize, rng: &mut R) -> Self {
        Self::from_real_fn(n1, n2, n3, |_, _, _| rng.random::<f64>())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.n3)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn n3(&self) -> usize {
        self.n3
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n2 + j) * self.n1 + i
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> C64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: C64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub(crate) fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn frontal_slice(&self, k: usize) -> CMatrix {
        let b = self.n1 * self.n2;
        CMatrix::from_column_slice(self.n1, self.n2, &self.data[k * b..(k + 1) * b])
    }

    pub fn slices(&self) -> Vec<CMatrix> {
        (0..self.n3).map(|k| self.frontal_slice(k)).collect()
    }

    /// Lateral slice `A(:, j, :)` as an `n1 × 1 × n3` tensor column.
    pub fn lateral(&self, j: usize) -> Tensor3 {
        Tensor3::from_fn(self.n1, 1, self.n3, |i, _, k| self.get(i, j, k))
    }

    /// Lateral slices `start .. start+count`.
    pub fn columns(&self, start: usize, count: usize) -> Result<Tensor3> {
        if start + count > self.n2 {
            return dim_err(format!("columns {start}..{} of {}", start + count, self.n2));
        }
        Ok(Tensor3::from_fn(self.n1, count, self.n3, |i, j, k| self.get(i, start + j, k)))
    }

    /// Horizontal slices listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Tensor3> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n1) {
            return dim_err(format!("row {bad} out of range for n1 = {}", self.n1));
        }
        Ok(Tensor3::from_fn(rows.len(), self.n2, self.n3, |i, j, k| self.get(rows[i], j, k)))
    }

    pub fn tube(&self, i: usize, j: usize) -> Vec<C64> {
        (0..self.n3).map(|k| self.get(i, j, k)).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// `max_i ‖A(i, 1, :)‖₂`, defined for tensor columns only.
    pub fn linf_star(&self) -> Result<f64> {
        if self.n2 != 1 {
            return Err(Error::NotATensorColumn { n2: self.n2 });
        }
        Ok((0..self.n1)
            .map(|i| (0..self.n3).map(|k| self.get(i, 0, k).norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max))
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn norms(&self) -> Norms {
        Norms {
            frobenius: self.frobenius(),
            linf_star: self.linf_star().ok(),
            linf: self.linf(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor3 {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Tensor3 {
        Tensor3::from_slice_major(self.n1, self.n2, self.n3, self.data.iter().map(|&z| f(z)).collect())
    }

    fn zip_with(&self, other: &Tensor3, f: impl Fn(C64, C64) -> C64) -> Result<Tensor3> {
        if self.shape() != other.shape() {
            return dim_err(format!("shapes {:?} and {:?}", self.shape(), other.shape()));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor3::from_slice_major(self.n1, self.n2, self.n3, data))
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Largest imaginary magnitude relative to the largest entry magnitude.
    pub fn imag_residue(&self) -> f64 {
        let mag = self.linf();
        if mag == 0.0 {
            return 0.0;
        }
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / mag
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    /// Drops imaginary parts after checking they are below `tol` relative.
    pub fn into_real(self, tol: f64) -> Result<Tensor3> {
        let residue = self.imag_residue();
        if residue > tol {
            return Err(Error::ComplexResidue { residue });
        }
        Ok(self.map(|z| C64::new(z.re, 0.0)))
    }

    /// Real parts in slice-major order; errors on complex data.
    pub fn real_values(&self) -> Result<Vec<f64>> {
        if !self.is_real() {
            return Err(Error::ComplexData);
        }
        Ok(self.data.iter().map(|z| z.re).collect())
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `‖self − other‖_F / max(‖other‖_F, tiny)`.
    pub fn rel_diff(&self, other: &Tensor3) -> f64 {
        let d = self.sub(other).expect("matching shapes").frobenius();
        d / other.frobenius().max(f64::MIN_POSITIVE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_column_norms() {
        let (n1, n3) = (6, 4);
        let t = Tensor3::from_real_fn(n1, 1, n3, |_, _, _| 1.0);
        let n = t.norms();
        assert!((n.frobenius - ((n1 * n3) as f64).sqrt()).abs() < 1e-14);
        assert!((n.linf_star.unwrap() - (n3 as f64).sqrt()).abs() < 1e-14);
        assert_eq!(n.linf, 1.0);
    }

    #[test]
    fn zero_norms() {
        let n = Tensor3::zeros(3, 1, 2).norms();
        assert_eq!((n.frobenius, n.linf_star, n.linf), (0.0, Some(0.0), 0.0));
    }

    #[test]
    fn linf_star_needs_a_column() {
        let t = Tensor3::zeros(3, 2, 2);
        assert_eq!(t.linf_star(), Err(Error::NotATensorColumn { n2: 2 }));
        assert_eq!(t.norms().linf_star, None);
    }

    #[test]
    fn frobenius_matches_flat_sum() {
        let t = Tensor3::from_real_fn(7, 1, 5, |i, _, k| (i as f64 * 0.3 - k as f64).sin());
        let flat: f64 = t.to_row_major().iter().map(|z| z.re * z.re).sum();
        assert!((t.frobenius() - flat.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn row_major_roundtrip_and_indexing() {
        let vals: Vec<C64> = (0..24).map(|v| C64::new(v as f64, 0.0)).collect();
        let t = Tensor3::from_row_major(2, 3, 4, &vals).unwrap();
        assert_eq!(t.get(1, 2, 3), C64::new(23.0, 0.0));
        assert_eq!(t.get(0, 1, 0), C64::new(4.0, 0.0));
        assert_eq!(t.to_row_major(), vals);
    }

    #[test]
    fn slices_roundtrip() {
        let t = Tensor3::from_real_fn(3, 2, 4, |i, j, k| (i + 10 * j + 100 * k) as f64);
        assert_eq!(Tensor3::from_slices(&t.slices()).unwrap(), t);
        assert_eq!(t.frontal_slice(2)[(1, 1)], C64::new(211.0, 0.0));
    }

    #[test]
    fn row_selection() {
        let t = Tensor3::from_real_fn(4, 1, 2, |i, _, k| (i * 10 + k) as f64);
        let s = t.select_rows(&[3, 0]).unwrap();
        assert_eq!(s.tube(0, 0), t.tube(3, 0));
        assert_eq!(s.tube(1, 0), t.tube(0, 0));
        assert!(t.select_rows(&[4]).is_err());
    }

    #[test]
    fn realification_guard() {
        let mut t = Tensor3::from_real_fn(2, 1, 2, |_, _, _| 1.0);
        t.set(0, 0, 0, C64::new(1.0, 1e-3));
        assert!(matches!(t.clone().into_real(1e-8), Err(Error::ComplexResidue { .. })));
        assert!(t.into_real(1e-2).unwrap().is_real());
    }
}
