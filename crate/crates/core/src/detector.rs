//! Matched subspace detectors for sampled tensor signals.
//!
//! Without noise the residual energy is compared against a numerical zero.
//! With unit-variance Gaussian noise the residual of the observation is a
//! weighted sum `Σ σᵢ² χ²₁(λᵢ²)`; thresholds and detection probabilities come
//! from a four-cumulant noncentral chi-square approximation, or exactly from
//! a single noncentral chi-square when the weights are all one.
//!
//! Under tubal sampling the residual operator is `K = I − lmat(P_Ω)`. Its
//! nonzero spectrum is computed either densely from `KᵀK`
//! ([`noise_spectrum_tubal`]) or from a reduced Gram matrix whose size is the
//! number of nonzero weights ([`TubalNoiseModel`]).

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::block_matrix::lmat_real;
use crate::distributions::{chi2_quantile, noncentral_chi2_quantile, noncentral_chi2_sf};
use crate::error::{dim_err, Error, Result};
use crate::estimator::{restriction_projection_tubal, ElementwiseProjector, TubalProjector};
use crate::linalg::{complete_basis, real_part, RMatrix};
use crate::sampling::{sampled_values, SampleKind, SampleSet};
use crate::subspace::{EmbeddedSubspace, Subspace};
use crate::tensor::Tensor3;
use crate::transform::TransformKind;

/// Weights within this distance of one make the spectrum a projection.
const PROJECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    H0,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    Noiseless,
    NoisyGeneral,
    NoisyProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub statistic: f64,
    pub threshold: f64,
    pub decision: Decision,
    pub p_fa_target: Option<f64>,
    pub p_detect: Option<f64>,
    pub mode: DetectorMode,
    pub approx: Option<LiuApprox>,
    /// Degrees of freedom in projection mode.
    pub df: Option<usize>,
}

fn decide(statistic: f64, threshold: f64) -> Decision {
    if statistic > threshold {
        Decision::H1
    } else {
        Decision::H0
    }
}

/// Threshold-at-zero test on a noiseless residual.
pub fn detect_noiseless(residual: f64, tol: f64) -> DetectorReport {
    DetectorReport {
        statistic: residual,
        threshold: tol,
        decision: decide(residual, tol),
        p_fa_target: None,
        p_detect: None,
        mode: DetectorMode::Noiseless,
        approx: None,
        df: None,
    }
}

/// Weights `σᵢ²`, eigenbasis `B` of `KᵀK` and per-component noncentralities.
#[derive(Debug, Clone)]
pub struct SpectrumDecomposition {
    /// Nonincreasing.
    pub sigmas_sq: Vec<f64>,
    /// Columns are eigenvectors, in the order of `sigmas_sq`.
    pub basis: RMatrix,
    pub rank: usize,
    pub lambdas_sq: Vec<f64>,
}

impl SpectrumDecomposition {
    /// Eigendecomposition of `KᵀK` for a real residual operator `K`.
    pub fn of_operator(k: &RMatrix) -> Result<Self> {
        let ktk = k.transpose() * k;
        let ktk = (&ktk + ktk.transpose()) * 0.5;
        let n = ktk.nrows();
        let eig = SymmetricEigen::try_new(ktk, f64::EPSILON, 0)
            .ok_or_else(|| Error::DecompositionFailed("symmetric eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let sigmas_sq: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let basis = RMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let top = sigmas_sq.first().copied().unwrap_or(0.0);
        let rank = sigmas_sq.iter().filter(|&&s| s > 1e-9 * top.max(1.0)).count();
        Ok(SpectrumDecomposition { sigmas_sq, basis, rank, lambdas_sq: vec![0.0; n] })
    }

    /// True when every weight is within `1e-6` of zero or one.
    pub fn is_projection(&self) -> bool {
        self.sigmas_sq
            .iter()
            .all(|&s| s.abs() <= PROJECTION_TOL || (s - 1.0).abs() <= PROJECTION_TOL)
    }

    /// `Σ σᵢ^{2k} + k·Σ σᵢ^{2k} λᵢ²` for `k = 1..4`, over the nonzero weights.
    pub fn cumulants(&self) -> [f64; 4] {
        let mut c = [0.0; 4];
        for (&s, &l) in self.sigmas_sq.iter().zip(&self.lambdas_sq).take(self.rank) {
            let mut p = 1.0;
            for (k, ck) in c.iter_mut().enumerate() {
                p *= s;
                *ck += p * (1.0 + (k + 1) as f64 * l);
            }
        }
        c
    }
}

/// Dense spectrum of `I − lmat(P_Ω)` under tubal sampling.
pub fn noise_spectrum_tubal(omega: &SampleSet, s: &Subspace) -> Result<SpectrumDecomposition> {
    let p = restriction_projection_tubal(omega, s)?;
    let lp = lmat_real(s.transform(), &p)?;
    let k = RMatrix::identity(lp.nrows(), lp.ncols()) - lp;
    SpectrumDecomposition::of_operator(&k)
}

/// Dense spectrum of `I − P_Ω` over the distinct sampled entries.
pub fn noise_spectrum_elementwise(omega: &SampleSet, e: &EmbeddedSubspace) -> Result<SpectrumDecomposition> {
    let proj = ElementwiseProjector::new(omega, e)?;
    let m = proj.m();
    let mut k = RMatrix::identity(m, m);
    for j in 0..m {
        let mut unit = DVector::zeros(m);
        unit[j] = 1.0;
        k.set_column(j, &proj.residual_vector(&unit));
    }
    SpectrumDecomposition::of_operator(&k)
}

/// Sets `λᵢ² = ((Bᵀ s)ᵢ)²` on the nonzero weights and zero elsewhere.
pub fn noncentral_params(d: &SpectrumDecomposition, signal: &DVector<f64>) -> Result<SpectrumDecomposition> {
    if signal.len() != d.basis.nrows() {
        return dim_err(format!("signal of length {} for a spectrum of size {}", signal.len(), d.basis.nrows()));
    }
    let coords = d.basis.transpose() * signal;
    let lambdas_sq = (0..coords.len())
        .map(|i| if i < d.rank { coords[i] * coords[i] } else { 0.0 })
        .collect();
    Ok(SpectrumDecomposition { lambdas_sq, ..d.clone() })
}

/// Noncentral chi-square `χ²_l(λ_χ²)` matched to the first four cumulants of
/// a weighted sum of noncentral chi-squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiuApprox {
    pub mu_q: f64,
    pub sigma_q: f64,
    pub s1: f64,
    pub s2: f64,
    pub a: f64,
    pub l: f64,
    pub lambda_chi_sq: f64,
    pub mu_chi: f64,
    pub sigma_chi: f64,
}

impl LiuApprox {
    pub fn from_cumulants(c: [f64; 4]) -> Result<Self> {
        if !(c[1] > 0.0) {
            return Err(Error::DegenerateSpectrum);
        }
        let s1 = c[2] / c[1].powf(1.5);
        let s2 = c[3] / (c[1] * c[1]);
        let disc = s1 * s1 - s2;
        // Equal moments up to rounding mean an exact central chi-square.
        let a = if disc > 1e-12 * s1 * s1 { 1.0 / (s1 - disc.sqrt()) } else { 1.0 / s1 };
        let lambda_chi_sq = (s1 * a.powi(3) - a * a).max(0.0);
        let l = a * a - 2.0 * lambda_chi_sq;
        Ok(LiuApprox {
            mu_q: c[0],
            sigma_q: (2.0 * c[1]).sqrt(),
            s1,
            s2,
            a,
            l,
            lambda_chi_sq,
            mu_chi: l + lambda_chi_sq,
            sigma_chi: std::f64::consts::SQRT_2 * a,
        })
    }

    /// Maps a value of the statistic to the matching chi-square abscissa.
    fn chi_abscissa(&self, x: f64) -> f64 {
        ((x - self.mu_q) / self.sigma_q * self.sigma_chi + self.mu_chi).max(0.0)
    }
}

pub fn liu_approx(d: &SpectrumDecomposition) -> Result<LiuApprox> {
    LiuApprox::from_cumulants(d.cumulants())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidP(p));
    }
    Ok(())
}

/// CFAR threshold `η_p` with `P[statistic > η_p | H0] ≈ p`.
pub fn cfar_threshold(approx: &LiuApprox, p: f64) -> Result<f64> {
    check_p(p)?;
    let q = noncentral_chi2_quantile(1.0 - p, approx.l, approx.lambda_chi_sq)?;
    Ok(approx.mu_q + approx.sigma_q * (q - approx.mu_chi) / approx.sigma_chi)
}

/// `P[statistic > η_p]` under the approximation built with H1 noncentralities.
pub fn detection_probability(approx_h1: &LiuApprox, eta_p: f64) -> Result<f64> {
    noncentral_chi2_sf(approx_h1.chi_abscissa(eta_p), approx_h1.l, approx_h1.lambda_chi_sq)
}

/// Exact test when the statistic is `χ²_df(λ²)`.
pub fn detect_noisy_projection(statistic: f64, df: i64, lambda_sq: Option<f64>, p: f64) -> Result<DetectorReport> {
    check_p(p)?;
    if df <= 0 {
        return Err(Error::InvalidDegrees(df));
    }
    let threshold = chi2_quantile(1.0 - p, df as f64)?;
    let p_detect = match lambda_sq {
        Some(l) => Some(noncentral_chi2_sf(threshold, df as f64, l.max(0.0))?),
        None => None,
    };
    Ok(DetectorReport {
        statistic,
        threshold,
        decision: decide(statistic, threshold),
        p_fa_target: Some(p),
        p_detect,
        mode: DetectorMode::NoisyProjection,
        approx: None,
        df: Some(df as usize),
    })
}

/// Reduced form of the tubal residual operator `K = I − lmat(P_Ω)`.
///
/// In the transform domain `K` is similar to `D = diag(I − P̄_k)`. Writing
/// `D = V Vᵀ` with orthonormal complements `V_k`, the nonzero eigenvalues of
/// `KᵀK` are those of `G = Lᵀ C₂ L`, where `C₁ = Vᵀ S V = L Lᵀ`,
/// `C₂ = Vᵀ S⁻¹ V` and `S = (M Mᵀ)⁻¹ ⊗ I`. `G` is similar to `C₁ C₂`, so
/// traces of its powers come without factoring `C₁`, and the noncentral
/// terms `zᵀ G^j z` with `z = Lᵀ w` equal `wᵀ (C₁C₂)^j C₁ w` for `w = Vᵀ ŝ`.
#[derive(Debug, Clone)]
pub enum TubalNoiseModel {
    /// All nonzero weights are one: the statistic is `χ²_df(λ²)`.
    Projection { df: usize },
    Weighted(Box<WeightedSpectrum>),
}

#[derive(Debug, Clone)]
pub struct WeightedSpectrum {
    complements: Vec<RMatrix>,
    c1: RMatrix,
    c2: RMatrix,
    /// `C₁ C₂`.
    product: RMatrix,
    traces: [f64; 4],
}

impl WeightedSpectrum {
    pub fn size(&self) -> usize {
        self.c1.nrows()
    }

    /// Traces of `G^k` for `k = 1..4`.
    pub fn traces(&self) -> [f64; 4] {
        self.traces
    }

    /// Symmetric reduced Gram matrix `G`; its eigenvalues are the nonzero weights.
    pub fn gram(&self) -> Result<RMatrix> {
        let l = self
            .c1
            .clone()
            .cholesky()
            .ok_or_else(|| Error::DecompositionFailed("reduced Gram matrix is not positive definite".into()))?
            .unpack();
        let g = l.transpose() * (&self.c2 * &l);
        Ok((&g + g.transpose()) * 0.5)
    }

    /// `w = [V_kᵀ ŝ_k]` from the transform-domain slices of a restricted signal.
    fn coordinates(&self, s: &Subspace, x_omega: &Tensor3) -> Result<DVector<f64>> {
        let dx = s.transform().to_domain(x_omega)?;
        let mut stacked = Vec::with_capacity(self.size());
        for (v, xk) in self.complements.iter().zip(&dx) {
            stacked.extend((v.transpose() * real_part(xk)).iter().copied());
        }
        Ok(DVector::from_vec(stacked))
    }

    fn cumulants(&self, w: Option<&DVector<f64>>) -> [f64; 4] {
        let mut c = self.traces;
        if let Some(w) = w {
            let mut u = &self.c1 * w;
            for (k, ck) in c.iter_mut().enumerate() {
                if k > 0 {
                    u = &self.product * u;
                }
                *ck += (k + 1) as f64 * w.dot(&u);
            }
        }
        c
    }
}

impl TubalNoiseModel {
    pub fn new(proj: &TubalProjector, s: &Subspace) -> Result<Self> {
        let t = s.transform();
        if t.kind() == TransformKind::Custom {
            return Err(Error::UnsupportedTransform(TransformKind::Custom));
        }
        let m = proj.m();
        let n3 = s.n3();
        let df: usize = (0..n3).map(|k| m - proj.range(k).ncols()).sum();
        if df == 0 {
            return Err(Error::DegenerateSpectrum);
        }
        if t.gram_scale().is_some() {
            return Ok(TubalNoiseModel::Projection { df });
        }
        if !t.is_real() || !s.basis().is_real() {
            return Err(Error::ComplexData);
        }
        let complements: Vec<RMatrix> = (0..n3)
            .map(|k| {
                let q = real_part(proj.range(k));
                let full = complete_basis(&q);
                full.columns(q.ncols(), m - q.ncols()).into_owned()
            })
            .collect();
        let mut offsets = Vec::with_capacity(n3 + 1);
        offsets.push(0);
        for v in &complements {
            offsets.push(offsets.last().unwrap() + v.ncols());
        }
        let mmt = real_part(&(t.forward() * t.forward().adjoint()));
        let h = mmt
            .clone()
            .try_inverse()
            .ok_or(Error::SingularTransform { condition: f64::INFINITY })?;
        let mut c1 = RMatrix::zeros(df, df);
        let mut c2 = RMatrix::zeros(df, df);
        for k in 0..n3 {
            for l in k..n3 {
                let cross = complements[k].transpose() * &complements[l];
                let (rk, rl) = (offsets[k], offsets[l]);
                let (nk, nl) = cross.shape();
                c1.view_mut((rk, rl), (nk, nl)).copy_from(&(&cross * h[(k, l)]));
                c2.view_mut((rk, rl), (nk, nl)).copy_from(&(&cross * mmt[(k, l)]));
                if l != k {
                    c1.view_mut((rl, rk), (nl, nk)).copy_from(&(cross.transpose() * h[(l, k)]));
                    c2.view_mut((rl, rk), (nl, nk)).copy_from(&(cross.transpose() * mmt[(l, k)]));
                }
            }
        }
        let product = &c1 * &c2;
        let squared = &product * &product;
        let pt = product.transpose();
        let traces = [
            product.trace(),
            product.component_mul(&pt).sum(),
            squared.component_mul(&pt).sum(),
            squared.component_mul(&squared.transpose()).sum(),
        ];
        // ‖G − I‖_F² = tr G² − 2 tr G + N.
        let distance_sq = traces[1] - 2.0 * traces[0] + df as f64;
        if distance_sq.max(0.0).sqrt() <= PROJECTION_TOL {
            return Ok(TubalNoiseModel::Projection { df });
        }
        Ok(TubalNoiseModel::Weighted(Box::new(WeightedSpectrum { complements, c1, c2, product, traces })))
    }

    /// Number of nonzero weights, `Σ_k (m − rank_k)`.
    pub fn df(&self) -> usize {
        match self {
            TubalNoiseModel::Projection { df } => *df,
            TubalNoiseModel::Weighted(w) => w.size(),
        }
    }

    /// Cumulants of the statistic for a restricted clean signal (`None` under H0).
    pub fn cumulants(&self, s: &Subspace, proj: &TubalProjector, clean: Option<&Tensor3>) -> Result<[f64; 4]> {
        match self {
            TubalNoiseModel::Projection { df } => {
                let l = match clean {
                    Some(x) => proj.residual(s, x)?,
                    None => 0.0,
                };
                let d = *df as f64;
                Ok([d + l, d + 2.0 * l, d + 3.0 * l, d + 4.0 * l])
            }
            TubalNoiseModel::Weighted(w) => {
                let z = clean.map(|x| w.coordinates(s, x)).transpose()?;
                Ok(w.cumulants(z.as_ref()))
            }
        }
    }
}

/// Tubal CFAR detector for one sample set, reusable across observations.
#[derive(Debug, Clone)]
pub struct TubalDetector {
    proj: TubalProjector,
    model: TubalNoiseModel,
    h0: LiuApprox,
}

impl TubalDetector {
    pub fn new(omega: &SampleSet, s: &Subspace) -> Result<Self> {
        let proj = TubalProjector::new(omega, s)?;
        let model = TubalNoiseModel::new(&proj, s)?;
        let h0 = LiuApprox::from_cumulants(model.cumulants(s, &proj, None)?)?;
        Ok(TubalDetector { proj, model, h0 })
    }

    pub fn model(&self) -> &TubalNoiseModel {
        &self.model
    }

    pub fn projector(&self) -> &TubalProjector {
        &self.proj
    }

    pub fn h0_approx(&self) -> &LiuApprox {
        &self.h0
    }

    pub fn threshold(&self, p: f64) -> Result<f64> {
        match &self.model {
            TubalNoiseModel::Projection { df } => {
                check_p(p)?;
                chi2_quantile(1.0 - p, *df as f64)
            }
            TubalNoiseModel::Weighted(_) => cfar_threshold(&self.h0, p),
        }
    }

    pub fn statistic(&self, s: &Subspace, observed: &Tensor3) -> Result<f64> {
        self.proj.residual(s, observed)
    }

    /// Analytic detection probability for a restricted clean signal.
    pub fn detection_probability(&self, s: &Subspace, clean: &Tensor3, threshold: f64) -> Result<f64> {
        match &self.model {
            TubalNoiseModel::Projection { df } => {
                noncentral_chi2_sf(threshold, *df as f64, self.proj.residual(s, clean)?)
            }
            TubalNoiseModel::Weighted(_) => {
                let approx = LiuApprox::from_cumulants(self.model.cumulants(s, &self.proj, Some(clean))?)?;
                detection_probability(&approx, threshold)
            }
        }
    }

    /// Full report for a restricted observation `W_Ω`, with the analytic
    /// detection probability when the restricted clean signal is supplied.
    pub fn detect(&self, s: &Subspace, observed: &Tensor3, clean: Option<&Tensor3>, p: f64) -> Result<DetectorReport> {
        let statistic = self.statistic(s, observed)?;
        let threshold = self.threshold(p)?;
        let p_detect = clean.map(|c| self.detection_probability(s, c, threshold)).transpose()?;
        let (mode, approx) = match self.model {
            TubalNoiseModel::Projection { .. } => (DetectorMode::NoisyProjection, None),
            TubalNoiseModel::Weighted(_) => (DetectorMode::NoisyGeneral, Some(self.h0)),
        };
        Ok(DetectorReport {
            statistic,
            threshold,
            decision: decide(statistic, threshold),
            p_fa_target: Some(p),
            p_detect,
            mode,
            approx,
            df: matches!(mode, DetectorMode::NoisyProjection).then(|| self.model.df()),
        })
    }
}

/// Elementwise detector: the statistic is `χ²_{m − r·n3}(λ²)` over distinct samples.
#[derive(Debug, Clone)]
pub struct ElementwiseDetector {
    proj: ElementwiseProjector,
}

impl ElementwiseDetector {
    pub fn new(omega: &SampleSet, e: &EmbeddedSubspace) -> Result<Self> {
        let proj = ElementwiseProjector::new(omega, e)?;
        if proj.m() <= proj.rank() {
            return Err(Error::InvalidDegrees(proj.m() as i64 - proj.rank() as i64));
        }
        Ok(ElementwiseDetector { proj })
    }

    pub fn projector(&self) -> &ElementwiseProjector {
        &self.proj
    }

    pub fn df(&self) -> usize {
        self.proj.m() - self.proj.rank()
    }

    pub fn threshold(&self, p: f64) -> Result<f64> {
        check_p(p)?;
        chi2_quantile(1.0 - p, self.df() as f64)
    }

    /// Residual of a vector listed over the distinct sampled positions.
    pub fn statistic(&self, y: &DVector<f64>) -> f64 {
        self.proj.residual(y)
    }

    pub fn detection_probability(&self, clean: &DVector<f64>, threshold: f64) -> Result<f64> {
        noncentral_chi2_sf(threshold, self.df() as f64, self.proj.residual(clean))
    }

    pub fn detect(&self, y: &DVector<f64>, clean: Option<&DVector<f64>>, p: f64) -> Result<DetectorReport> {
        let lambda_sq = clean.map(|c| self.proj.residual(c));
        detect_noisy_projection(self.statistic(y), self.df() as i64, lambda_sq, p)
    }
}

/// One-shot noisy tubal detection on a restricted observation `W_Ω`.
pub fn detect_noisy_tubal(
    omega: &SampleSet,
    s: &Subspace,
    observed: &Tensor3,
    clean: Option<&Tensor3>,
    p: f64,
) -> Result<DetectorReport> {
    TubalDetector::new(omega, s)?.detect(s, observed, clean, p)
}

/// One-shot noisy elementwise detection on a zero-filled observation.
pub fn detect_noisy_elementwise(
    omega: &SampleSet,
    e: &EmbeddedSubspace,
    observed: &Tensor3,
    clean: Option<&Tensor3>,
    p: f64,
) -> Result<DetectorReport> {
    if omega.kind() != SampleKind::Elementwise {
        return Err(Error::KindMismatch { expected: SampleKind::Elementwise, found: omega.kind() });
    }
    let det = ElementwiseDetector::new(omega, e)?;
    let y = DVector::from_vec(sampled_values(omega, observed)?);
    let c = clean.map(|c| sampled_values(omega, c).map(DVector::from_vec)).transpose()?;
    det.detect(&y, c.as_ref(), p)
}

/// Signal gain `g` giving `SNR(dB) = 10·log₁₀(g²·clean_energy / noise_energy)`.
pub fn snr_gain(snr_db: f64, clean_energy: f64, noise_energy: f64) -> Result<f64> {
    if !(clean_energy > 0.0) {
        return Err(Error::ZeroSignal);
    }
    Ok((10f64.powf(snr_db / 10.0) * noise_energy / clean_energy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::fill_normals;
    use crate::transform::LinearTransform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn subspace(t: &LinearTransform, n1: usize, r: usize, seed: u64) -> (Subspace, Tensor3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor3::random_uniform(n1, r, t.n3(), &mut rng);
        let u = t.svd(&a).unwrap().u;
        let out = t
            .product(&u.columns(r, n1 - r).unwrap(), &Tensor3::random_uniform(n1 - r, 1, t.n3(), &mut rng))
            .unwrap();
        (Subspace::new(t, &u.columns(0, r).unwrap()).unwrap(), out)
    }

    fn spectrum(weights: &[f64], lambdas: &[f64]) -> SpectrumDecomposition {
        let n = weights.len();
        SpectrumDecomposition {
            sigmas_sq: weights.to_vec(),
            basis: RMatrix::identity(n, n),
            rank: n,
            lambdas_sq: lambdas.to_vec(),
        }
    }

    #[test]
    fn noiseless_decisions() {
        assert_eq!(detect_noiseless(0.0, 1e-9).decision, Decision::H0);
        assert_eq!(detect_noiseless(0.3, 1e-9).decision, Decision::H1);
    }

    #[test]
    fn single_central_component_reduces_exactly() {
        let a = liu_approx(&spectrum(&[1.0], &[0.0])).unwrap();
        assert!((a.mu_q - 1.0).abs() < 1e-14);
        assert!((a.sigma_q - 2f64.sqrt()).abs() < 1e-14);
        assert!((a.l - 1.0).abs() < 1e-8 && a.lambda_chi_sq.abs() < 1e-8);
    }

    #[test]
    fn equal_weights_give_the_central_family() {
        let d = 37;
        let a = liu_approx(&spectrum(&vec![1.0; d], &vec![0.0; d])).unwrap();
        assert!((a.mu_q - d as f64).abs() < 1e-12);
        assert!((a.sigma_q - (2.0 * d as f64).sqrt()).abs() < 1e-12);
        assert!((a.l - d as f64).abs() < 1e-8);
        let eta = cfar_threshold(&a, 0.01).unwrap();
        assert!((eta - chi2_quantile(0.99, d as f64).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn median_threshold_is_near_the_mean() {
        let a = liu_approx(&spectrum(&[1.0, 0.8, 0.6, 0.5, 0.3], &[0.0; 5])).unwrap();
        let eta = cfar_threshold(&a, 0.5).unwrap();
        assert!((eta - a.mu_q).abs() < 0.5 * a.sigma_q);
    }

    #[test]
    fn detection_probability_limits() {
        let w = [1.0, 0.7, 0.4];
        let eta = cfar_threshold(&liu_approx(&spectrum(&w, &[0.0; 3])).unwrap(), 0.05).unwrap();
        let pfa = detection_probability(&liu_approx(&spectrum(&w, &[0.0; 3])).unwrap(), eta).unwrap();
        assert!((pfa - 0.05).abs() < 1e-8);
        let strong = liu_approx(&spectrum(&w, &[1e4; 3])).unwrap();
        assert!(detection_probability(&strong, eta).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(liu_approx(&spectrum(&[0.0], &[0.0])).unwrap_err(), Error::DegenerateSpectrum);
        let a = liu_approx(&spectrum(&[1.0], &[0.0])).unwrap();
        assert_eq!(cfar_threshold(&a, 1.0).unwrap_err(), Error::InvalidP(1.0));
        assert_eq!(detect_noisy_projection(1.0, 0, None, 0.1).unwrap_err(), Error::InvalidDegrees(0));
    }

    #[test]
    fn projection_case_closed_forms() {
        let p = 0.05;
        let r = detect_noisy_projection(1.0, 2, Some(0.0), p).unwrap();
        assert!((r.threshold + 2.0 * p.ln()).abs() < 1e-8);
        assert!((r.p_detect.unwrap() - p).abs() < 1e-9);
    }

    #[test]
    fn dft_tubal_spectrum_is_a_projection() {
        let t = LinearTransform::dft(4).unwrap();
        let (s, _) = subspace(&t, 7, 2, 1);
        let omega = SampleSet::draw(SampleKind::Tubal, 4, (7, 4), false, 3).unwrap();
        let d = noise_spectrum_tubal(&omega, &s).unwrap();
        assert!(d.is_projection());
        assert_eq!(d.rank, (4 - 2) * 4);
        let p = restriction_projection_tubal(&omega, &s).unwrap();
        let k = RMatrix::identity(16, 16) - lmat_real(&t, &p).unwrap();
        assert!((d.sigmas_sq.iter().sum::<f64>() - k.norm_squared()).abs() < 1e-8);
        let det = TubalDetector::new(&omega, &s).unwrap();
        assert!(matches!(det.model(), TubalNoiseModel::Projection { df: 8 }));
    }

    #[test]
    fn minimal_sample_has_no_noise_degrees() {
        let t = LinearTransform::dct(3).unwrap();
        let (s, _) = subspace(&t, 6, 2, 2);
        let omega = SampleSet::draw(SampleKind::Tubal, 2, (6, 3), false, 0).unwrap();
        assert_eq!(noise_spectrum_tubal(&omega, &s).unwrap().rank, 0);
        assert_eq!(TubalDetector::new(&omega, &s).unwrap_err(), Error::DegenerateSpectrum);
    }

    #[test]
    fn reduced_spectrum_matches_dense_eigenvalues() {
        let t = LinearTransform::dct(5).unwrap();
        let (s, out) = subspace(&t, 8, 3, 4);
        let omega = SampleSet::draw(SampleKind::Tubal, 5, (8, 5), false, 9).unwrap();
        let dense = noise_spectrum_tubal(&omega, &s).unwrap();
        assert_eq!(dense.rank, 10);
        let proj = TubalProjector::new(&omega, &s).unwrap();
        let TubalNoiseModel::Weighted(w) = TubalNoiseModel::new(&proj, &s).unwrap() else {
            panic!("dct spectrum should not be a projection");
        };
        let mut reduced = SymmetricEigen::new(w.gram().unwrap()).eigenvalues.as_slice().to_vec();
        reduced.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in reduced.iter().zip(&dense.sigmas_sq) {
            assert!((a - b).abs() < 1e-8 * dense.sigmas_sq[0]);
        }
        // Noncentral cumulants through both routes.
        let x = omega.restrict_signal_tubal(&out).unwrap();
        let model = TubalNoiseModel::Weighted(w);
        let fast = model.cumulants(&s, &proj, Some(&x)).unwrap();
        let unfolded = DVector::from_iterator(25, crate::block_matrix::unfold(&x).iter().map(|z| z.re));
        let slow = noncentral_params(&dense, &unfolded).unwrap().cumulants();
        for k in 0..4 {
            assert!((fast[k] - slow[k]).abs() < 1e-8 * slow[k].abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn statistic_matches_quadratic_form() {
        let t = LinearTransform::dct(4).unwrap();
        let (s, out) = subspace(&t, 7, 2, 5);
        let omega = SampleSet::draw(SampleKind::Tubal, 5, (7, 4), false, 1).unwrap();
        let d = noise_spectrum_tubal(&omega, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = fill_normals(&mut rng, 20);
        let x = omega.restrict_signal_tubal(&out).unwrap();
        let w = Tensor3::from_real_fn(5, 1, 4, |i, _, k| x.get(i, 0, k).re + noise[k * 5 + i]);
        let wv = DVector::from_iterator(20, crate::block_matrix::unfold(&w).iter().map(|z| z.re));
        let coords = d.basis.transpose() * &wv;
        let quad: f64 = (0..20).map(|i| d.sigmas_sq[i] * coords[i] * coords[i]).sum();
        let det = TubalDetector::new(&omega, &s).unwrap();
        let stat = det.statistic(&s, &w).unwrap();
        assert!((stat - quad).abs() < 1e-8 * quad);
    }

    #[test]
    fn in_subspace_noiseless_observation_is_h0() {
        let t = LinearTransform::dft(4).unwrap();
        let (s, _) = subspace(&t, 8, 2, 6);
        let x = t.product(s.basis(), &Tensor3::from_real_fn(2, 1, 4, |i, _, k| (i + k) as f64)).unwrap();
        let omega = SampleSet::draw(SampleKind::Tubal, 5, (8, 4), false, 2).unwrap();
        let w = omega.restrict_signal_tubal(&x).unwrap();
        let r = detect_noisy_tubal(&omega, &s, &w, Some(&w), 0.01).unwrap();
        assert!(r.statistic < 1e-10);
        assert_eq!(r.decision, Decision::H0);
        assert!((r.p_detect.unwrap() - 0.01).abs() < 1e-8);
    }

    #[test]
    fn elementwise_degrees_of_freedom() {
        let t = LinearTransform::dct(3).unwrap();
        let (s, out) = subspace(&t, 6, 2, 7);
        let e = s.embed().unwrap();
        let omega = SampleSet::draw(SampleKind::Elementwise, 10, (6, 3), false, 5).unwrap();
        let r = detect_noisy_elementwise(&omega, &e, &out, Some(&out), 0.1).unwrap();
        assert_eq!(r.df, Some(4));
        assert_eq!(r.mode, DetectorMode::NoisyProjection);
        let small = SampleSet::draw(SampleKind::Elementwise, 6, (6, 3), false, 5).unwrap();
        assert!(matches!(ElementwiseDetector::new(&small, &e), Err(Error::InvalidDegrees(_))));
        let d = noise_spectrum_elementwise(&omega, &e).unwrap();
        assert!(d.is_projection() && d.rank == 4);
    }

    #[test]
    fn snr_gain_definition() {
        let g = snr_gain(10.0, 2.0, 20.0).unwrap();
        assert!((10.0 * (g * g * 2.0 / 20.0f64).log10() - 10.0).abs() < 1e-12);
        assert_eq!(snr_gain(0.0, 0.0, 1.0).unwrap_err(), Error::ZeroSignal);
    }
}
