//! The L-algebra on third-order tensors.
//!
//! Products, transposes, inverses and the SVD are all computed slice by slice
//! in the transform domain and mapped back with the inverse transform.

use crate::error::{dim_err, Error, Result};
use crate::linalg::{complete_basis, condition_number, svd_sorted, to_complex, CMatrix};
use crate::tensor::Tensor3;
use crate::transform::{LinearTransform, TransformKind};
use crate::C64;

/// Relative imaginary residue tolerated when casting back to real data.
const REAL_CAST_TOL: f64 = 1e-8;

/// `a = u • sigma • v†`.
#[derive(Debug, Clone)]
pub struct LSvd {
    pub u: Tensor3,
    pub sigma: Tensor3,
    pub v: Tensor3,
    /// Transform-domain singular values, one nonincreasing list per slice.
    pub slice_singular_values: Vec<Vec<f64>>,
}

impl LinearTransform {
    fn check_n3(&self, a: &Tensor3) -> Result<()> {
        if a.n3() != self.n3() {
            return dim_err(format!("tensor has n3 = {} but transform has n3 = {}", a.n3(), self.n3()));
        }
        Ok(())
    }

    /// Frontal slices of `L(a)`.
    pub fn to_domain(&self, a: &Tensor3) -> Result<Vec<CMatrix>> {
        self.check_n3(a)?;
        let (n1, n2, n3) = a.shape();
        let block = n1 * n2;
        let mixed = Self::mix_blocks(self.forward(), a.data(), block);
        Ok((0..n3)
            .map(|k| CMatrix::from_column_slice(n1, n2, &mixed[k * block..(k + 1) * block]))
            .collect())
    }

    /// `L⁻¹` of the given transform-domain slices. When `real_origin` is set and
    /// the transform preserves real data, the result is cast to real after
    /// checking the imaginary residue against `scale`.
    pub fn from_domain(&self, slices: &[CMatrix], real_origin: bool, scale: f64) -> Result<Tensor3> {
        if slices.len() != self.n3() {
            return dim_err(format!("{} slices for n3 = {}", slices.len(), self.n3()));
        }
        let stacked = Tensor3::from_slices(slices)?;
        let (n1, n2, n3) = stacked.shape();
        let data = Self::mix_blocks(self.inverse_matrix(), stacked.data(), n1 * n2);
        let out = Tensor3::from_slice_major(n1, n2, n3, data);
        self.settle(out, real_origin, scale)
    }

    fn settle(&self, out: Tensor3, real_origin: bool, scale: f64) -> Result<Tensor3> {
        if !real_origin {
            return Ok(out);
        }
        let im = out.data().iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let reference = out.linf().max(scale).max(f64::MIN_POSITIVE);
        let residue = im / reference;
        if residue <= REAL_CAST_TOL {
            Ok(out.map(|z| C64::new(z.re, 0.0)))
        } else if self.kind() == TransformKind::Custom && !self.is_real() {
            Ok(out)
        } else {
            Err(Error::ComplexResidue { residue })
        }
    }

    /// `a • b`.
    pub fn product(&self, a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
        self.check_n3(a)?;
        self.check_n3(b)?;
        if a.n2() != b.n1() {
            return dim_err(format!("inner dimensions {} and {} differ", a.n2(), b.n1()));
        }
        let da = self.to_domain(a)?;
        let db = self.to_domain(b)?;
        let prod: Vec<CMatrix> = da.iter().zip(&db).map(|(x, y)| x * y).collect();
        let real = a.is_real() && b.is_real();
        self.from_domain(&prod, real, a.frobenius() * b.frobenius())
    }

    /// `a†`, defined by conjugate-transposing every transform-domain slice.
    pub fn transpose(&self, a: &Tensor3) -> Result<Tensor3> {
        let d: Vec<CMatrix> = self.to_domain(a)?.iter().map(|s| s.adjoint()).collect();
        self.from_domain(&d, a.is_real(), a.frobenius())
    }

    /// `m × m × n3` identity: unity tubes on the diagonal.
    pub fn identity(&self, m: usize) -> Tensor3 {
        let e = self.unity();
        let mut t = Tensor3::zeros(m, m, self.n3());
        for i in 0..m {
            for (k, v) in e.values.iter().enumerate() {
                t.set(i, i, k, *v);
            }
        }
        if self.is_real() || self.kind() == TransformKind::Dft {
            t.map(|z| C64::new(z.re, 0.0))
        } else {
            t
        }
    }

    /// `a⁻¹` with `a • a⁻¹ = I`.
    pub fn inverse(&self, a: &Tensor3) -> Result<Tensor3> {
        if a.n1() != a.n2() {
            return dim_err(format!("inverse needs square slices, got {}x{}", a.n1(), a.n2()));
        }
        let mut inv = Vec::with_capacity(self.n3());
        for (k, s) in self.to_domain(a)?.into_iter().enumerate() {
            let condition = condition_number(&s)?;
            if !(condition <= 1e12) {
                return Err(Error::SingularSlice { slice: k, condition });
            }
            inv.push(s.try_inverse().ok_or(Error::SingularSlice { slice: k, condition })?);
        }
        self.from_domain(&inv, a.is_real(), 0.0)
    }

    /// Full L-SVD with per-slice singular values in nonincreasing order.
    pub fn svd(&self, a: &Tensor3) -> Result<LSvd> {
        let (n1, n2, n3) = a.shape();
        let slices = self.to_domain(a)?;
        let real = a.is_real();
        let mirror = real && self.kind() == TransformKind::Dft;
        let mut us: Vec<Option<CMatrix>> = vec![None; n3];
        let mut vs: Vec<Option<CMatrix>> = vec![None; n3];
        let mut ss: Vec<Vec<f64>> = vec![Vec::new(); n3];
        for k in 0..n3 {
            if mirror && k > n3 / 2 {
                let src = n3 - k;
                us[k] = us[src].as_ref().map(|u| u.map(|z| z.conj()));
                vs[k] = vs[src].as_ref().map(|v| v.map(|z| z.conj()));
                ss[k] = ss[src].clone();
                continue;
            }
            let slice_is_real = if mirror {
                k == 0 || 2 * k == n3
            } else {
                real && self.is_real()
            };
            let (u, s, v) = if slice_is_real {
                let (u, s, v) = svd_sorted(&slices[k].map(|z| z.re))?;
                (to_complex(&complete_basis(&u)), s, to_complex(&complete_basis(&v)))
            } else {
                let (u, s, v) = svd_sorted(&slices[k])?;
                (complete_basis(&u), s, complete_basis(&v))
            };
            us[k] = Some(u);
            vs[k] = Some(v);
            ss[k] = s;
        }
        let us: Vec<CMatrix> = us.into_iter().map(|u| u.expect("filled")).collect();
        let vs: Vec<CMatrix> = vs.into_iter().map(|v| v.expect("filled")).collect();
        let sigma_slices: Vec<CMatrix> = ss
            .iter()
            .map(|s| {
                let mut m = CMatrix::zeros(n1, n2);
                for (i, &x) in s.iter().enumerate() {
                    m[(i, i)] = C64::new(x, 0.0);
                }
                m
            })
            .collect();
        let scale = a.frobenius();
        Ok(LSvd {
            u: self.from_domain(&us, real, 1.0)?,
            sigma: self.from_domain(&sigma_slices, real, scale)?,
            v: self.from_domain(&vs, real, 1.0)?,
            slice_singular_values: ss,
        })
    }

    /// Number of diagonal tubes of `sigma` with Frobenius norm above `tol`.
    /// `None` uses `1e-9` times the largest transform-domain singular value.
    pub fn rank(&self, a: &Tensor3, tol: Option<f64>) -> Result<usize> {
        let svd = self.svd(a)?;
        let smax = svd
            .slice_singular_values
            .iter()
            .flat_map(|s| s.iter().copied())
            .fold(0.0, f64::max);
        let tol = tol.unwrap_or(1e-9 * smax);
        if tol < 0.0 {
            return Err(Error::InvalidArg("rank tolerance must be nonnegative".into()));
        }
        let k = a.n1().min(a.n2());
        Ok((0..k)
            .filter(|&i| {
                let e: f64 = svd.sigma.tube(i, i).iter().map(|z| z.norm_sqr()).sum();
                e.sqrt() > tol
            })
            .count())
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::block_matrix::lmat;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transform(dct: bool, n3: usize) -> LinearTransform {
        if dct {
            LinearTransform::dct(n3).unwrap()
        } else {
            LinearTransform::dft(n3).unwrap()
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn product_is_associative(dct: bool, dims in (1usize..4, 1usize..4, 1usize..4, 1usize..4, 1usize..6), seed: u64) {
            let (a1, a2, b2, c2, n3) = dims;
            let t = transform(dct, n3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor3::random_uniform(a1, a2, n3, &mut rng);
            let b = Tensor3::random_uniform(a2, b2, n3, &mut rng);
            let c = Tensor3::random_uniform(b2, c2, n3, &mut rng);
            let left = t.product(&t.product(&a, &b).unwrap(), &c).unwrap();
            let right = t.product(&a, &t.product(&b, &c).unwrap()).unwrap();
            prop_assert!(left.rel_diff(&right) < 1e-10);
        }

        #[test]
        fn transpose_reverses_products(dct: bool, dims in (1usize..4, 1usize..4, 1usize..4, 1usize..6), seed: u64) {
            let (n1, n2, n4, n3) = dims;
            let t = transform(dct, n3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor3::random_uniform(n1, n2, n3, &mut rng);
            let b = Tensor3::random_uniform(n2, n4, n3, &mut rng);
            let lhs = t.transpose(&t.product(&a, &b).unwrap()).unwrap();
            let rhs = t.product(&t.transpose(&b).unwrap(), &t.transpose(&a).unwrap()).unwrap();
            prop_assert!(lhs.rel_diff(&rhs) < 1e-10);
            prop_assert!(t.transpose(&t.transpose(&a).unwrap()).unwrap().rel_diff(&a) < 1e-12);
        }

        #[test]
        fn block_matrix_is_multiplicative(dct: bool, dims in (1usize..4, 1usize..4, 1usize..4, 1usize..6), seed: u64) {
            let (n1, n2, n4, n3) = dims;
            let t = transform(dct, n3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor3::random_uniform(n1, n2, n3, &mut rng);
            let b = Tensor3::random_uniform(n2, n4, n3, &mut rng);
            let direct = lmat(&t, &t.product(&a, &b).unwrap()).unwrap();
            let composed = lmat(&t, &a).unwrap() * lmat(&t, &b).unwrap();
            prop_assert!((&direct - &composed).norm() <= 1e-10 * (1.0 + direct.norm()));
        }

        #[test]
        fn svd_reconstructs(dct: bool, dims in (1usize..6, 1usize..6, 1usize..6), seed: u64) {
            let (n1, n2, n3) = dims;
            let t = transform(dct, n3);
            let a = Tensor3::random_uniform(n1, n2, n3, &mut ChaCha8Rng::seed_from_u64(seed));
            let f = t.svd(&a).unwrap();
            let us = t.product(&f.u, &f.sigma).unwrap();
            let back = t.product(&us, &t.transpose(&f.v).unwrap()).unwrap();
            prop_assert!(back.rel_diff(&a) < 1e-10);
            prop_assert!(t.rank(&a, None).unwrap() <= n1.min(n2));
        }
    }
}
