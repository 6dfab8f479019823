//! Tensor-column subspaces and their vector-space embeddings.

use nalgebra::DVector;

use crate::block_matrix::{lmat_real, unfold};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{condition_number, imag_residue, range_basis, real_part, to_complex, CMatrix, RMatrix};
use crate::tensor::Tensor3;
use crate::transform::LinearTransform;
use crate::C64;

/// Threshold on `‖u†•u − I‖_F` below which the basis is treated as orthonormal.
const ORTHONORMAL_TOL: f64 = 1e-8;
const MAX_GRAM_CONDITION: f64 = 1e12;

/// Span of the lateral slices of `basis` under the L-product.
#[derive(Debug, Clone)]
pub struct Subspace {
    transform: LinearTransform,
    basis: Tensor3,
    projection: Tensor3,
    orthonormal: bool,
    domain_basis: Vec<CMatrix>,
    domain_projection: Vec<CMatrix>,
}

impl Subspace {
    /// Builds the subspace and caches `P = u • (u†•u)⁻¹ • u†`.
    pub fn new(t: &LinearTransform, u: &Tensor3) -> Result<Self> {
        let domain_basis = t.to_domain(u)?;
        let (n1, r, _) = u.shape();
        if r == 0 || r > n1 {
            return dim_err(format!("basis must have 1..={n1} columns, got {r}"));
        }
        let grams: Vec<CMatrix> = domain_basis.iter().map(|b| b.adjoint() * b).collect();
        let dev: Vec<CMatrix> = grams.iter().map(|g| g - CMatrix::identity(r, r)).collect();
        let orthonormal = t.from_domain(&dev, u.is_real(), 1.0)?.frobenius() < ORTHONORMAL_TOL;
        let mut domain_projection = Vec::with_capacity(grams.len());
        for (k, (b, g)) in domain_basis.iter().zip(&grams).enumerate() {
            let p = if orthonormal {
                b * b.adjoint()
            } else {
                let condition = condition_number(g)?;
                if !(condition <= MAX_GRAM_CONDITION) {
                    return Err(Error::DegenerateBasis { slice: k, condition });
                }
                let inv = g
                    .clone()
                    .try_inverse()
                    .ok_or(Error::DegenerateBasis { slice: k, condition })?;
                b * inv * b.adjoint()
            };
            domain_projection.push(p);
        }
        let projection = t.from_domain(&domain_projection, u.is_real(), 1.0)?;
        Ok(Subspace {
            transform: t.clone(),
            basis: u.clone(),
            projection,
            orthonormal,
            domain_basis,
            domain_projection,
        })
    }

    pub fn transform(&self) -> &LinearTransform {
        &self.transform
    }

    pub fn basis(&self) -> &Tensor3 {
        &self.basis
    }

    pub fn projection(&self) -> &Tensor3 {
        &self.projection
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn n1(&self) -> usize {
        self.basis.n1()
    }

    pub fn rank(&self) -> usize {
        self.basis.n2()
    }

    pub fn n3(&self) -> usize {
        self.basis.n3()
    }

    /// Transform-domain slices of the basis, each `n1 × r`.
    pub fn domain_basis(&self) -> &[CMatrix] {
        &self.domain_basis
    }

    /// Transform-domain slices of `P`.
    pub fn domain_projection(&self) -> &[CMatrix] {
        &self.domain_projection
    }

    fn check_column(&self, x: &Tensor3) -> Result<()> {
        if x.n1() != self.n1() || x.n3() != self.n3() {
            return dim_err(format!(
                "signal {:?} does not match subspace rows {} and n3 {}",
                x.shape(),
                self.n1(),
                self.n3()
            ));
        }
        Ok(())
    }

    /// `P • x`.
    pub fn project(&self, x: &Tensor3) -> Result<Tensor3> {
        self.check_column(x)?;
        let dx = self.transform.to_domain(x)?;
        let px: Vec<CMatrix> = self.domain_projection.iter().zip(&dx).map(|(p, v)| p * v).collect();
        self.transform.from_domain(&px, x.is_real() && self.basis.is_real(), x.frobenius())
    }

    /// `x − P • x`.
    pub fn project_out(&self, x: &Tensor3) -> Result<Tensor3> {
        x.sub(&self.project(x)?)
    }

    /// `(n1 / r) · max_j ‖P • E_j‖_F²`, where `E_j` carries the unity tube in row `j`.
    ///
    /// Since the unity tube is neutral, `P • E_j` is the lateral slice `P(:, j, :)`.
    pub fn coherence(&self) -> f64 {
        let (n1, _, n3) = self.projection.shape();
        let best = (0..n1)
            .map(|j| {
                (0..n1)
                    .flat_map(|i| (0..n3).map(move |k| (i, k)))
                    .map(|(i, k)| self.projection.get(i, j, k).norm_sqr())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        n1 as f64 / self.rank() as f64 * best
    }

    /// Orthonormal bases of the sampled rows of every transform-domain slice.
    ///
    /// Each slice's range has rank `min(distinct rows, r)` for a generic
    /// subspace; anything lower is reported as a degenerate draw.
    pub fn restricted_range(&self, rows: &[usize]) -> Result<Vec<CMatrix>> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n1()) {
            return dim_err(format!("row {bad} out of range for n1 = {}", self.n1()));
        }
        let mut distinct = rows.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let expected = distinct.len().min(self.rank());
        let mut out = Vec::with_capacity(self.n3());
        for b in &self.domain_basis {
            let sub = b.select_rows(rows.iter());
            let (q, rank) = if imag_residue(&sub) == 0.0 {
                let (q, rank) = range_basis(&real_part(&sub), 1e-9)?;
                (to_complex(&q), rank)
            } else {
                range_basis(&sub, 1e-9)?
            };
            if rank < expected {
                return Err(Error::RankDeficientSample { rank, expected });
            }
            out.push(q);
        }
        Ok(out)
    }

    /// Embeds the subspace as the column space of `lmat(basis)`.
    pub fn embed(&self) -> Result<EmbeddedSubspace> {
        EmbeddedSubspace::new(self)
    }
}

/// Column space of `lmat(U)` in `R^{n1·n3}`.
#[derive(Debug, Clone)]
pub struct EmbeddedSubspace {
    basis_matrix: RMatrix,
    orthonormal_basis: RMatrix,
    n1: usize,
    n3: usize,
}

impl EmbeddedSubspace {
    /// Requires a DFT or DCT transform and a real basis.
    pub fn new(s: &Subspace) -> Result<Self> {
        let b = lmat_real(s.transform(), s.basis())?;
        let gram = b.transpose() * &b;
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::DecompositionFailed("embedded basis is rank deficient".into()))?;
        // Squared ratio of Cholesky pivots: a cheap lower estimate of cond(BᵀB).
        let d = chol.l_dirty().diagonal();
        let condition = (d.max() / d.min()).powi(2);
        if !(condition <= MAX_GRAM_CONDITION) {
            return Err(Error::DegenerateBasis { slice: 0, condition });
        }
        // Q = B·L⁻ᵀ has orthonormal columns spanning the range of B.
        let q = chol
            .l()
            .solve_lower_triangular(&b.transpose())
            .ok_or_else(|| Error::DecompositionFailed("triangular solve failed".into()))?
            .transpose();
        Ok(EmbeddedSubspace {
            basis_matrix: b,
            orthonormal_basis: q,
            n1: s.n1(),
            n3: s.n3(),
        })
    }

    /// `lmat(U)`, of size `n1·n3 × r·n3`.
    pub fn basis_matrix(&self) -> &RMatrix {
        &self.basis_matrix
    }

    /// Orthonormal basis of the same column space.
    pub fn orthonormal_basis(&self) -> &RMatrix {
        &self.orthonormal_basis
    }

    pub fn dimension(&self) -> usize {
        self.orthonormal_basis.ncols()
    }

    pub fn ambient_dimension(&self) -> usize {
        self.orthonormal_basis.nrows()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n3(&self) -> usize {
        self.n3
    }

    /// Dense orthogonal projector onto the column space.
    pub fn projection_matrix(&self) -> RMatrix {
        &self.orthonormal_basis * self.orthonormal_basis.transpose()
    }

    /// `(n1 / n2) · max_j ‖P_S e_j‖²` over the standard basis of `R^{n1·n3}`.
    pub fn coherence(&self, n1: usize, n2: usize) -> f64 {
        let q = &self.orthonormal_basis;
        let best = (0..q.nrows()).map(|i| q.row(i).norm_squared()).fold(0.0, f64::max);
        n1 as f64 / n2 as f64 * best
    }

    /// `unfold(y)` of a real tensor column as a plain vector.
    pub fn vectorize(&self, y: &Tensor3) -> Result<DVector<f64>> {
        if y.shape() != (self.n1, 1, self.n3) {
            return dim_err(format!("expected a {}x1x{} column, got {:?}", self.n1, self.n3, y.shape()));
        }
        if !y.is_real() {
            return Err(Error::ComplexData);
        }
        Ok(DVector::from_iterator(self.n1 * self.n3, unfold(y).iter().map(|z: &C64| z.re)))
    }

    /// `P_{S⊥} v` for a vector in the ambient space.
    pub fn residual_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        let q = &self.orthonormal_basis;
        v - q * (q.transpose() * v)
    }

    /// `‖P_{S⊥} unfold(y)‖ / ‖unfold(y)‖`.
    pub fn principal_angle_cos(&self, y: &Tensor3) -> Result<f64> {
        let v = self.vectorize(y)?;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::ZeroSignal);
        }
        Ok((self.residual_vector(&v).norm() / norm).min(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coordinate_basis(t: &LinearTransform, n1: usize, r: usize) -> Tensor3 {
        t.identity(n1).columns(0, r).unwrap()
    }

    fn random_basis(t: &LinearTransform, n1: usize, r: usize, seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor3::random_uniform(n1, r, t.n3(), &mut rng);
        t.svd(&a).unwrap().u.columns(0, r).unwrap()
    }

    #[test]
    fn coordinate_subspace_projection_and_coherence() {
        let t = LinearTransform::dct(4).unwrap();
        let s = Subspace::new(&t, &coordinate_basis(&t, 5, 2)).unwrap();
        assert!(s.is_orthonormal());
        let e = t.unity();
        for i in 0..5 {
            for k in 0..4 {
                let want = if i < 2 { e.values[k] } else { C64::new(0.0, 0.0) };
                assert!((s.projection().get(i, i, k) - want).norm() < 1e-12);
            }
        }
        assert!((s.coherence() - 2.5).abs() < 1e-10);
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint() {
        for t in [LinearTransform::dft(5).unwrap(), LinearTransform::dct(5).unwrap()] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let u = Tensor3::random_uniform(6, 2, 5, &mut rng);
            let s = Subspace::new(&t, &u).unwrap();
            assert!(!s.is_orthonormal());
            let p = s.projection();
            assert!(t.product(p, p).unwrap().rel_diff(p) < 1e-8);
            assert!(t.transpose(p).unwrap().rel_diff(p) < 1e-8);
            assert!(t.product(p, &u).unwrap().rel_diff(&u) < 1e-8);
        }
    }

    #[test]
    fn orthonormal_shortcut_matches_general_formula() {
        let t = LinearTransform::dft(4).unwrap();
        let u = random_basis(&t, 6, 2, 4);
        let s = Subspace::new(&t, &u).unwrap();
        assert!(s.is_orthonormal());
        let g = t.product(&t.transpose(&u).unwrap(), &u).unwrap();
        let general = t
            .product(
                &t.product(&u, &t.inverse(&g).unwrap()).unwrap(),
                &t.transpose(&u).unwrap(),
            )
            .unwrap();
        assert!(general.rel_diff(s.projection()) < 1e-9);
    }

    #[test]
    fn degenerate_basis_is_reported() {
        let t = LinearTransform::dft(3).unwrap();
        let col = Tensor3::from_real_fn(4, 1, 3, |i, _, _| i as f64);
        let u = Tensor3::from_fn(4, 2, 3, |i, _, k| col.get(i, 0, k));
        assert!(matches!(Subspace::new(&t, &u), Err(Error::DegenerateBasis { .. })));
    }

    #[test]
    fn coherence_matches_literal_products() {
        let t = LinearTransform::dct(4).unwrap();
        let s = Subspace::new(&t, &random_basis(&t, 6, 2, 9)).unwrap();
        let e = t.unity();
        let mut best: f64 = 0.0;
        for j in 0..6 {
            let mut ej = Tensor3::zeros(6, 1, 4);
            for k in 0..4 {
                ej.set(j, 0, k, e.values[k]);
            }
            best = best.max(t.product(s.projection(), &ej).unwrap().frobenius_sq());
        }
        assert!((s.coherence() - 3.0 * best).abs() < 1e-10);
        assert!(s.coherence() >= 1.0 - 1e-8 && s.coherence() <= 3.0 + 1e-8);
    }

    #[test]
    fn embedding_contains_subspace_members() {
        for t in [LinearTransform::dft(4).unwrap(), LinearTransform::dct(4).unwrap()] {
            let u = random_basis(&t, 5, 2, 2);
            let s = Subspace::new(&t, &u).unwrap();
            let e = s.embed().unwrap();
            assert_eq!(e.dimension(), 8);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let x = t.product(&u, &Tensor3::random_uniform(2, 1, 4, &mut rng)).unwrap();
            assert!(e.residual_vector(&e.vectorize(&x).unwrap()).norm() < 1e-8);
            assert!(e.principal_angle_cos(&x).unwrap() < 1e-8);
            let p = e.projection_matrix();
            assert!((&p * &p - &p).norm() < 1e-8);
            assert!((p.transpose() - &p).norm() < 1e-12);
        }
    }

    #[test]
    fn full_space_vector_coherence() {
        let t = LinearTransform::dft(3).unwrap();
        let s = Subspace::new(&t, &t.identity(4)).unwrap();
        let e = s.embed().unwrap();
        assert!((e.coherence(4, 4) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_signal_has_no_angle() {
        let t = LinearTransform::dft(3).unwrap();
        let e = Subspace::new(&t, &coordinate_basis(&t, 4, 1)).unwrap().embed().unwrap();
        assert_eq!(e.principal_angle_cos(&Tensor3::zeros(4, 1, 3)), Err(Error::ZeroSignal));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn projection_invariants(dct: bool, n1 in 2usize..7, n3 in 1usize..5, rf in 0.0f64..1.0, seed: u64) {
            let r = 1 + ((n1 - 1) as f64 * rf) as usize;
            let r = r.min(n1 - 1);
            let t = if dct { LinearTransform::dct(n3).unwrap() } else { LinearTransform::dft(n3).unwrap() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = Tensor3::random_uniform(n1, r, n3, &mut rng);
            let s = Subspace::new(&t, &u).unwrap();
            let p = s.projection();
            prop_assert!(t.product(p, p).unwrap().rel_diff(p) < 1e-8);
            let x = Tensor3::random_uniform(n1, 1, n3, &mut rng);
            let px = s.project(&x).unwrap();
            prop_assert!(s.project(&px).unwrap().rel_diff(&px) < 1e-8);
            prop_assert!(s.project(&s.project_out(&x).unwrap()).unwrap().frobenius() < 1e-8 * (1.0 + x.frobenius()));
            let mu = s.coherence();
            // The bracket relies on Parseval, which the DCT lacks.
            if dct {
                prop_assert!(mu > 0.0);
            } else {
                prop_assert!(mu >= 1.0 - 1e-9 && mu <= n1 as f64 / r as f64 + 1e-9, "coherence {}", mu);
            }
        }
    }
}
