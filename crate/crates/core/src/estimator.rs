//! Residual-energy estimators from full and sampled signals, and the
//! concentration bounds that sandwich them.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{range_basis, CMatrix, RMatrix};
use crate::sampling::{sampled_values, SampleKind, SampleSet};
use crate::subspace::{EmbeddedSubspace, Subspace};
use crate::tensor::Tensor3;

/// `‖x − P • x‖_F²`.
pub fn residual_energy_full(s: &Subspace, x: &Tensor3) -> Result<f64> {
    Ok(s.project_out(x)?.frobenius_sq())
}

/// Orthogonal projection onto the sampled rows of a subspace, per
/// transform-domain slice.
///
/// When fewer distinct rows than the subspace rank are sampled, the sampled
/// basis spans every sampled coordinate and the projection is the identity.
#[derive(Debug, Clone)]
pub struct TubalProjector {
    rows: Vec<usize>,
    ranges: Vec<CMatrix>,
}

impl TubalProjector {
    pub fn new(omega: &SampleSet, s: &Subspace) -> Result<Self> {
        if omega.kind() != SampleKind::Tubal {
            return Err(Error::KindMismatch { expected: SampleKind::Tubal, found: omega.kind() });
        }
        if omega.shape() != (s.n1(), s.n3()) {
            return dim_err(format!("sample shape {:?} vs subspace {}x{}", omega.shape(), s.n1(), s.n3()));
        }
        Ok(TubalProjector { rows: omega.rows().to_vec(), ranges: s.restricted_range(omega.rows())? })
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Orthonormal basis of the projector's range in transform slice `k`.
    pub fn range(&self, k: usize) -> &CMatrix {
        &self.ranges[k]
    }

    /// Transform-domain slices of `P_Ω`.
    pub fn domain_projection(&self) -> Vec<CMatrix> {
        self.ranges.iter().map(|q| q * q.adjoint()).collect()
    }

    /// Transform-domain slices of `x_Ω − P_Ω • x_Ω` for an already restricted `x_Ω`.
    pub fn domain_residual(&self, s: &Subspace, x_omega: &Tensor3) -> Result<Vec<CMatrix>> {
        if x_omega.shape() != (self.rows.len(), 1, s.n3()) {
            return dim_err(format!("restricted signal {:?} for m = {}", x_omega.shape(), self.rows.len()));
        }
        let dx = s.transform().to_domain(x_omega)?;
        Ok(self.ranges.iter().zip(dx).map(|(q, v)| &v - q * (q.adjoint() * &v)).collect())
    }

    /// `‖x_Ω − P_Ω • x_Ω‖_F²` for an already restricted `x_Ω`.
    pub fn residual(&self, s: &Subspace, x_omega: &Tensor3) -> Result<f64> {
        let res = self.domain_residual(s, x_omega)?;
        let t = s.transform();
        if let Some(scale) = t.gram_scale() {
            // Scaled-unitary transforms preserve energy up to the scale.
            return Ok(res.iter().map(|m| m.norm_squared()).sum::<f64>() / scale);
        }
        Ok(t.from_domain(&res, x_omega.is_real(), x_omega.frobenius())?.frobenius_sq())
    }
}

/// `‖T_Ω − P_Ω • T_Ω‖_F²` under tubal sampling.
pub fn residual_energy_tubal(omega: &SampleSet, s: &Subspace, x: &Tensor3) -> Result<f64> {
    let proj = TubalProjector::new(omega, s)?;
    proj.residual(s, &omega.restrict_signal_tubal(x)?)
}

/// Projection onto the sampled rows of `lmat(U)`, kept in compact form over
/// the distinct sampled positions.
#[derive(Debug, Clone)]
pub struct ElementwiseProjector {
    positions: Vec<usize>,
    range: SampledRange,
    rank: usize,
}

#[derive(Debug, Clone)]
enum SampledRange {
    /// The sampled rows span all of `R^m`.
    Everything,
    /// Sampled rows `Q_Ω` of an orthonormal basis, stored transposed, with the
    /// Cholesky factor of `Q_Ωᵀ Q_Ω`.
    Gram { qt: RMatrix, l: RMatrix },
    Basis(RMatrix),
}

impl ElementwiseProjector {
    pub fn new(omega: &SampleSet, e: &EmbeddedSubspace) -> Result<Self> {
        if omega.kind() != SampleKind::Elementwise {
            return Err(Error::KindMismatch { expected: SampleKind::Elementwise, found: omega.kind() });
        }
        if omega.shape() != (e.n1(), e.n3()) {
            return dim_err(format!("sample shape {:?} vs embedding {}x{}", omega.shape(), e.n1(), e.n3()));
        }
        let positions = omega.distinct_positions();
        let q = e.orthonormal_basis();
        let (n, p) = q.shape();
        let m = positions.len();
        let qt = q.select_rows(positions.iter()).transpose();
        if m <= p {
            if let Some(chol) = (qt.transpose() * &qt).cholesky() {
                if pivot_condition(chol.l_dirty()) <= 1e12 {
                    return Ok(ElementwiseProjector { positions, range: SampledRange::Everything, rank: m });
                }
            }
        } else {
            let gram = if n - m < m {
                // Q_Ωᵀ Q_Ω = I − Q_cᵀ Q_c over the unsampled rows, the cheaper product.
                let mut sampled = vec![false; n];
                positions.iter().for_each(|&i| sampled[i] = true);
                let qc = q.select_rows((0..n).filter(|&i| !sampled[i]).collect::<Vec<_>>().iter());
                RMatrix::identity(p, p) - qc.transpose() * qc
            } else {
                &qt * qt.transpose()
            };
            if let Some(chol) = gram.cholesky() {
                if pivot_condition(chol.l_dirty()) <= 1e12 {
                    let l = chol.unpack();
                    return Ok(ElementwiseProjector { positions, range: SampledRange::Gram { qt, l }, rank: p });
                }
            }
        }
        let (basis, rank) = range_basis(&qt.transpose(), 1e-9)?;
        let expected = m.min(p);
        if rank < expected {
            return Err(Error::RankDeficientSample { rank, expected });
        }
        Ok(ElementwiseProjector { positions, range: SampledRange::Basis(basis), rank })
    }

    /// Distinct sampled rows of `unfold(T)`, in increasing order.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Rank of the projection, `min(m, r·n3)` for a generic draw.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of distinct sampled entries.
    pub fn m(&self) -> usize {
        self.positions.len()
    }

    /// `y − P_Ω y` for `y` listed over [`positions`](Self::positions).
    pub fn residual_vector(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.range {
            SampledRange::Everything => DVector::zeros(y.len()),
            SampledRange::Gram { qt, l } => {
                let mut w = qt * y;
                l.solve_lower_triangular_mut(&mut w);
                l.tr_solve_lower_triangular_mut(&mut w);
                y - qt.tr_mul(&w)
            }
            SampledRange::Basis(q) => y - q * (q.transpose() * y),
        }
    }

    pub fn residual(&self, y: &DVector<f64>) -> f64 {
        self.residual_vector(y).norm_squared()
    }

    /// Dense `n·n` projector over the full ambient space (unsampled rows zero).
    pub fn dense_projection(&self, ambient: usize) -> RMatrix {
        let mut out = RMatrix::zeros(ambient, ambient);
        let m = self.positions.len();
        let mut local = RMatrix::identity(m, m);
        for j in 0..m {
            let r = self.residual_vector(&local.column(j).into_owned());
            local.column_mut(j).axpy(-1.0, &r, 1.0);
        }
        for (a, &i) in self.positions.iter().enumerate() {
            for (b, &j) in self.positions.iter().enumerate() {
                out[(i, j)] = local[(a, b)];
            }
        }
        out
    }
}

fn pivot_condition(l: &RMatrix) -> f64 {
    let d = l.diagonal();
    (d.max() / d.min()).powi(2)
}

/// `‖t_Ω − P_Ω t_Ω‖₂²` under elementwise sampling.
pub fn residual_energy_elementwise(omega: &SampleSet, e: &EmbeddedSubspace, x: &Tensor3) -> Result<f64> {
    let proj = ElementwiseProjector::new(omega, e)?;
    let y = DVector::from_vec(sampled_values(omega, x)?);
    Ok(proj.residual(&y))
}

/// Projection onto the restricted basis: an `m × m × n3` tensor for tubal sets.
pub fn restriction_projection_tubal(omega: &SampleSet, s: &Subspace) -> Result<Tensor3> {
    let proj = TubalProjector::new(omega, s)?;
    s.transform().from_domain(&proj.domain_projection(), s.basis().is_real(), 1.0)
}

/// Projection onto the restricted basis: an `n1·n3 × n1·n3` matrix for
/// elementwise sets.
pub fn restriction_projection_elementwise(omega: &SampleSet, e: &EmbeddedSubspace) -> Result<RMatrix> {
    Ok(ElementwiseProjector::new(omega, e)?.dense_projection(e.ambient_dimension()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Tubal,
    Elementwise,
}

/// Norms of the out-of-subspace component used by the tubal bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubalNorms {
    pub f_sq: f64,
    pub inf_star_sq: f64,
}

impl TubalNorms {
    pub fn of(y: &Tensor3) -> Result<Self> {
        let inf = y.linf_star()?;
        Ok(TubalNorms { f_sq: y.frobenius_sq(), inf_star_sq: inf * inf })
    }
}

/// Norms of the unfolded out-of-subspace component used by the elementwise bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorNorms {
    pub l2_sq: f64,
    pub linf_sq: f64,
}

impl VectorNorms {
    pub fn of(y: &Tensor3) -> Self {
        let inf = y.linf();
        VectorNorms { l2_sq: y.frobenius_sq(), linf_sq: inf * inf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub regime: Regime,
    pub delta: f64,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub m_min: usize,
    /// Lower bound clamped at zero; zero whenever `gamma ≥ 1`.
    pub lower: f64,
    /// Unclamped lower bound, absent when `gamma ≥ 1`.
    pub lower_raw: Option<f64>,
    pub upper: f64,
    pub valid: bool,
    pub c_sq: f64,
}

impl BoundReport {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

fn check_delta(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    Ok((1.0 / delta).ln())
}

/// `α` from the energy spread `ratio = (n·‖y‖∞² − ‖y‖²) / ‖y‖²`.
fn alpha(ratio: f64, m: usize, log_inv_delta: f64) -> f64 {
    let t = ratio.max(0.0) / m as f64 * log_inv_delta;
    (2.0 * t).sqrt() + 2.0 * t / 3.0
}

fn beta(log_inv_delta: f64) -> f64 {
    (1.0 + 2.0 * log_inv_delta.sqrt()).powi(2)
}

/// Assembles the sandwich `[lower, upper]` around `(m / n) · energy`.
#[allow(clippy::too_many_arguments)]
fn sandwich(
    regime: Regime,
    delta: f64,
    m: usize,
    n: f64,
    a: f64,
    b: f64,
    g: f64,
    m_min: usize,
    coherence_term: f64,
    energy: f64,
    c_sq: f64,
) -> BoundReport {
    let upper = (1.0 + a) * m as f64 / n * energy;
    let lower_raw = (g < 1.0).then(|| (m as f64 * (1.0 - a) - coherence_term * b / (1.0 - g)) / n * energy);
    BoundReport {
        regime,
        delta,
        m,
        alpha: a,
        beta: b,
        gamma: g,
        m_min,
        lower: lower_raw.map_or(0.0, |l| l.max(0.0)),
        lower_raw,
        upper,
        valid: g < 1.0 && m >= m_min,
        c_sq,
    }
}

/// Sandwich for the tubal estimator holding with probability at least `1 − 4δ`.
#[allow(clippy::too_many_arguments)]
pub fn bound_tubal(
    delta: f64,
    m: usize,
    n1: usize,
    n2: usize,
    n3: usize,
    mu: f64,
    c_sq: f64,
    y: TubalNorms,
    full_residual: f64,
) -> Result<BoundReport> {
    let li = check_delta(delta)?;
    if m == 0 {
        return Err(Error::InvalidArg("m must be positive".into()));
    }
    let ratio = if y.f_sq > 0.0 { (n1 as f64 * y.inf_star_sq - y.f_sq) / y.f_sq } else { 0.0 };
    let log_cover = (2.0 * (n2 * n3) as f64 / delta).ln();
    let g = (8.0 * c_sq * n2 as f64 * mu / (3.0 * m as f64) * log_cover).sqrt();
    let m_min = (8.0 / 3.0 * n2 as f64 * mu * log_cover).ceil() as usize;
    Ok(sandwich(
        Regime::Tubal,
        delta,
        m,
        n1 as f64,
        alpha(ratio, m, li),
        beta(li),
        g,
        m_min,
        c_sq * n2 as f64 * mu,
        full_residual,
        c_sq,
    ))
}

/// Sandwich for the elementwise estimator holding with probability at least `1 − 4δ`.
#[allow(clippy::too_many_arguments)]
pub fn bound_elementwise(
    delta: f64,
    m: usize,
    n1: usize,
    n2: usize,
    n3: usize,
    mu_vec: f64,
    y: VectorNorms,
    cos_theta: f64,
    full_residual: f64,
) -> Result<BoundReport> {
    let li = check_delta(delta)?;
    if m == 0 {
        return Err(Error::InvalidArg("m must be positive".into()));
    }
    if !(0.0..=1.0 + 1e-12).contains(&cos_theta) {
        return Err(Error::InvalidArg(format!("cos_theta must lie in [0, 1], got {cos_theta}")));
    }
    let n = (n1 * n3) as f64;
    let ratio = if y.l2_sq > 0.0 { (n * y.linf_sq - y.l2_sq) / y.l2_sq } else { 0.0 };
    let log_cover = (2.0 * (n2 * n3) as f64 / delta).ln();
    let n2n3 = (n2 * n3) as f64;
    let g = (8.0 * n2n3 * mu_vec / (3.0 * m as f64) * log_cover).sqrt();
    let m_min = (8.0 / 3.0 * n2n3 * mu_vec * log_cover).ceil() as usize;
    Ok(sandwich(
        Regime::Elementwise,
        delta,
        m,
        n,
        alpha(ratio, m, li),
        beta(li),
        g,
        m_min,
        n2n3 * mu_vec,
        cos_theta * cos_theta * full_residual,
        1.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::LinearTransform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(t: &LinearTransform, n1: usize, r: usize, seed: u64) -> (Subspace, Tensor3, Tensor3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor3::random_uniform(n1, r, t.n3(), &mut rng);
        let u = t.svd(&a).unwrap().u;
        let s = Subspace::new(t, &u.columns(0, r).unwrap()).unwrap();
        let inside = t
            .product(&u.columns(0, r).unwrap(), &Tensor3::random_uniform(r, 1, t.n3(), &mut rng))
            .unwrap();
        let outside = t
            .product(&u.columns(r, n1 - r).unwrap(), &Tensor3::random_uniform(n1 - r, 1, t.n3(), &mut rng))
            .unwrap();
        (s, inside.scale(1.0 / inside.frobenius()), outside.scale(1.0 / outside.frobenius()))
    }

    #[test]
    fn full_residual_membership_and_pythagoras() {
        for t in [LinearTransform::dft(4).unwrap(), LinearTransform::dct(4).unwrap()] {
            let (s, inside, outside) = setup(&t, 6, 2, 1);
            assert!(residual_energy_full(&s, &inside).unwrap() < 1e-10);
            assert!((residual_energy_full(&s, &outside).unwrap() - 1.0).abs() < 1e-8);
            let x = Tensor3::random_uniform(6, 1, 4, &mut ChaCha8Rng::seed_from_u64(2));
            let p = s.project(&x).unwrap();
            let direct = x.sub(&p).unwrap().frobenius_sq();
            assert!((residual_energy_full(&s, &x).unwrap() - direct).abs() < 1e-10);
            if t.gram_scale().is_some() {
                let want = x.frobenius_sq() - p.frobenius_sq();
                assert!((residual_energy_full(&s, &x).unwrap() - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn full_tubal_sample_reproduces_full_residual() {
        for t in [LinearTransform::dft(5).unwrap(), LinearTransform::dct(5).unwrap()] {
            let (s, _, outside) = setup(&t, 7, 2, 3);
            let x = outside.add(&Tensor3::random_uniform(7, 1, 5, &mut ChaCha8Rng::seed_from_u64(4))).unwrap();
            let omega = SampleSet::draw(SampleKind::Tubal, 7, (7, 5), false, 11).unwrap();
            let est = residual_energy_tubal(&omega, &s, &x).unwrap();
            assert!((est - residual_energy_full(&s, &x).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn tubal_in_subspace_is_zero_for_every_m() {
        for t in [LinearTransform::dft(4).unwrap(), LinearTransform::dct(4).unwrap()] {
            let (s, inside, _) = setup(&t, 8, 3, 5);
            for m in 1..=8 {
                let omega = SampleSet::draw(SampleKind::Tubal, m, (8, 4), false, m as u64).unwrap();
                assert!(residual_energy_tubal(&omega, &s, &inside).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn restricted_projection_is_a_projection() {
        let t = LinearTransform::dct(4).unwrap();
        let (s, _, _) = setup(&t, 8, 3, 6);
        let omega = SampleSet::draw(SampleKind::Tubal, 5, (8, 4), false, 1).unwrap();
        let p = restriction_projection_tubal(&omega, &s).unwrap();
        assert!(t.product(&p, &p).unwrap().rel_diff(&p) < 1e-8);
        assert!(t.transpose(&p).unwrap().rel_diff(&p) < 1e-8);
    }

    #[test]
    fn elementwise_estimator_basics() {
        for t in [LinearTransform::dft(3).unwrap(), LinearTransform::dct(3).unwrap()] {
            let (s, inside, outside) = setup(&t, 6, 2, 7);
            let e = s.embed().unwrap();
            for m in [1, 5, 6, 10, 18] {
                let omega = SampleSet::draw(SampleKind::Elementwise, m, (6, 3), false, m as u64).unwrap();
                assert!(residual_energy_elementwise(&omega, &e, &inside).unwrap() < 1e-10);
                let est = residual_energy_elementwise(&omega, &e, &outside).unwrap();
                let sampled = omega.restrict_signal_elementwise(&outside).unwrap().frobenius_sq();
                assert!(est <= sampled + 1e-10);
                let p = restriction_projection_elementwise(&omega, &e).unwrap();
                assert!((&p * &p - &p).norm() < 1e-8);
            }
            let full = SampleSet::draw(SampleKind::Elementwise, 18, (6, 3), false, 0).unwrap();
            let c = e.principal_angle_cos(&outside).unwrap();
            let est = residual_energy_elementwise(&full, &e, &outside).unwrap();
            assert!((est - c * c).abs() < 1e-9);
        }
    }

    #[test]
    fn elementwise_projection_matches_pseudo_inverse_formula() {
        let t = LinearTransform::dct(4).unwrap();
        let (s, _, _) = setup(&t, 7, 2, 9);
        let e = s.embed().unwrap();
        // m = 10 forms the Gram from sampled rows, m = 20 from the unsampled ones.
        for m in [10, 20] {
            let omega = SampleSet::draw(SampleKind::Elementwise, m, (7, 4), false, 3).unwrap();
            let positions = omega.distinct_positions();
            let b = e.basis_matrix().select_rows(positions.iter());
            let want = &b * (b.transpose() * &b).try_inverse().unwrap() * b.transpose();
            let got = restriction_projection_elementwise(&omega, &e).unwrap();
            let got = got.select_rows(positions.iter()).select_columns(positions.iter());
            assert!((got - want).norm() < 1e-9, "m={m}");
        }
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let t = LinearTransform::dft(3).unwrap();
        let (s, inside, _) = setup(&t, 5, 2, 8);
        let omega = SampleSet::draw(SampleKind::Elementwise, 4, (5, 3), false, 0).unwrap();
        assert!(matches!(residual_energy_tubal(&omega, &s, &inside), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn beta_at_inverse_e() {
        let y = TubalNorms { f_sq: 1.0, inf_star_sq: 0.1 };
        let b = bound_tubal((-1.0f64).exp(), 20, 50, 10, 50, 1.1, 50.0, y, 1.0).unwrap();
        assert!((b.beta - 9.0).abs() < 1e-12);
        let v = VectorNorms { l2_sq: 1.0, linf_sq: 0.01 };
        let b = bound_elementwise((-1.0f64).exp(), 500, 50, 10, 50, 1.1, v, 1.0, 1.0).unwrap();
        assert!((b.beta - 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_energy_gives_zero_bounds() {
        let y = TubalNorms { f_sq: 0.0, inf_star_sq: 0.0 };
        let b = bound_tubal(0.05, 2000, 50, 10, 50, 1.0, 1.0, y, 0.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let v = VectorNorms { l2_sq: 1.0, linf_sq: 0.01 };
        let b = bound_elementwise(0.05, 900, 50, 10, 50, 1.1, v, 0.0, 1.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn invalid_delta() {
        let y = TubalNorms { f_sq: 1.0, inf_star_sq: 0.1 };
        for d in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(bound_tubal(d, 10, 50, 10, 50, 1.0, 50.0, y, 1.0), Err(Error::InvalidDelta(_))));
        }
    }

    #[test]
    fn gamma_and_minimum_samples_match_closed_forms() {
        let y = TubalNorms { f_sq: 1.0, inf_star_sq: 0.05 };
        let b = bound_tubal(0.05, 300, 50, 10, 50, 1.1, 50.0, y, 1.0).unwrap();
        let log_cover = (2.0 * 500.0 / 0.05f64).ln();
        assert_eq!(b.m_min, (8.0 / 3.0 * 10.0 * 1.1 * log_cover).ceil() as usize);
        assert!((b.gamma - (8.0 * 50.0 * 10.0 * 1.1 / 900.0 * log_cover).sqrt()).abs() < 1e-12);
        assert!(!b.valid && b.lower == 0.0 && b.lower_raw.is_none());
        assert!((b.upper - (1.0 + b.alpha) * 6.0).abs() < 1e-12);
    }
}
