//! Invertible length-n3 transforms along tubes.
//!
//! Every tensor operation in the crate is parameterized by a [`LinearTransform`].
//! The transform acts on the third mode: a tube `a` maps to `M·a`, and tube
//! multiplication becomes an elementwise product in the transform domain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{condition_number, CMatrix};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Dft,
    Dct,
    Custom,
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dft" => Ok(TransformKind::Dft),
            "dct" => Ok(TransformKind::Dct),
            other => Err(Error::InvalidConfig(format!("unknown transform '{other}'"))),
        }
    }
}

/// A mode-3 fiber `A(i, j, :)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    pub values: Vec<C64>,
}

impl Tube {
    pub fn new(values: Vec<C64>) -> Self {
        Tube { values }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Tube {
            values: values.iter().map(|&x| C64::new(x, 0.0)).collect(),
        }
    }

    pub fn zeros(n3: usize) -> Self {
        Tube {
            values: vec![C64::new(0.0, 0.0); n3],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct LinearTransform {
    n3: usize,
    forward: CMatrix,
    inverse: CMatrix,
    kind: TransformKind,
    energy_scale_sq: f64,
    /// `s` such that `M·Mᴴ = s·I`, when that holds.
    gram_scale: Option<f64>,
    real_matrix: bool,
}

impl LinearTransform {
    /// Unnormalized DFT, `F[j,k] = exp(−2πi·jk/n3)`.
    pub fn dft(n3: usize) -> Result<Self> {
        if n3 == 0 {
            return Err(Error::InvalidArg("n3 must be positive".into()));
        }
        let n = n3 as f64;
        let forward = CMatrix::from_fn(n3, n3, |j, k| {
            // Reduce jk mod n3 first so large products keep full phase accuracy.
            let e = ((j * k) % n3) as f64;
            C64::from_polar(1.0, -2.0 * PI * e / n)
        });
        let inverse = forward.map(|z| z.conj() / n);
        Ok(Self::assemble(n3, forward, inverse, TransformKind::Dft, n))
    }

    /// `M = W⁻¹·C·(I + Z)` with `C` the orthonormal DCT-II matrix, `W` the
    /// diagonal of its first column and `Z` the upshift matrix.
    pub fn dct(n3: usize) -> Result<Self> {
        if n3 == 0 {
            return Err(Error::InvalidArg("n3 must be positive".into()));
        }
        let n = n3 as f64;
        let c = nalgebra::DMatrix::<f64>::from_fn(n3, n3, |k, j| {
            let alpha = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            alpha * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * n)).cos()
        });
        let mut m = nalgebra::DMatrix::<f64>::zeros(n3, n3);
        for k in 0..n3 {
            let w = c[(k, 0)];
            for j in 0..n3 {
                let shifted = if j > 0 { c[(k, j - 1)] } else { 0.0 };
                m[(k, j)] = (c[(k, j)] + shifted) / w;
            }
        }
        let forward = m.map(|x| C64::new(x, 0.0));
        let inverse = Self::checked_inverse(&forward)?;
        Ok(Self::assemble(n3, forward, inverse, TransformKind::Dct, n))
    }

    /// Arbitrary invertible transform. The energy constant is the squared
    /// spectral norm of `forward`.
    pub fn custom(forward: CMatrix) -> Result<Self> {
        let (r, c) = forward.shape();
        if r != c || r == 0 {
            return dim_err(format!("transform matrix must be square and nonempty, got {r}x{c}"));
        }
        let inverse = Self::checked_inverse(&forward)?;
        let (_, s, _) = crate::linalg::svd_sorted(&forward)?;
        let energy = s[0] * s[0];
        Ok(Self::assemble(r, forward, inverse, TransformKind::Custom, energy))
    }

    fn checked_inverse(forward: &CMatrix) -> Result<CMatrix> {
        let condition = condition_number(forward)?;
        if !(condition <= 1e12) {
            return Err(Error::SingularTransform { condition });
        }
        forward
            .clone()
            .try_inverse()
            .ok_or(Error::SingularTransform { condition })
    }

    fn assemble(
        n3: usize,
        forward: CMatrix,
        inverse: CMatrix,
        kind: TransformKind,
        energy_scale_sq: f64,
    ) -> Self {
        let gram = &forward * forward.adjoint();
        let s = gram[(0, 0)].re;
        let dev = (&gram - CMatrix::identity(n3, n3) * C64::new(s, 0.0)).norm();
        let gram_scale = (s > 0.0 && dev <= 1e-10 * s * (n3 as f64).sqrt()).then_some(s);
        let real_matrix = forward.iter().all(|z| z.im == 0.0);
        LinearTransform {
            n3,
            forward,
            inverse,
            kind,
            energy_scale_sq,
            gram_scale,
            real_matrix,
        }
    }

    pub fn n3(&self) -> usize {
        self.n3
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn forward(&self) -> &CMatrix {
        &self.forward
    }

    pub fn inverse_matrix(&self) -> &CMatrix {
        &self.inverse
    }

    pub fn energy_scale_sq(&self) -> f64 {
        self.energy_scale_sq
    }

    /// `Some(s)` when `M·Mᴴ = s·I`, i.e. the transform is a scaled unitary.
    pub fn gram_scale(&self) -> Option<f64> {
        self.gram_scale
    }

    /// True when `M` has no imaginary part, so real slices stay real.
    pub fn is_real(&self) -> bool {
        self.real_matrix
    }

    fn check_len(&self, a: &Tube) -> Result<()> {
        if a.len() != self.n3 {
            return dim_err(format!("tube length {} but transform has n3 = {}", a.len(), self.n3));
        }
        Ok(())
    }

    fn mat_vec(m: &CMatrix, v: &[C64]) -> Vec<C64> {
        let n = v.len();
        (0..n)
            .map(|i| (0..n).map(|j| m[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn apply_tube(&self, a: &Tube) -> Result<Tube> {
        self.check_len(a)?;
        Ok(Tube::new(Self::mat_vec(&self.forward, &a.values)))
    }

    pub fn invert_tube(&self, a: &Tube) -> Result<Tube> {
        self.check_len(a)?;
        Ok(Tube::new(Self::mat_vec(&self.inverse, &a.values)))
    }

    /// `a • b = L⁻¹(L(a) ∘ L(b))`.
    pub fn tube_mult(&self, a: &Tube, b: &Tube) -> Result<Tube> {
        let fa = self.apply_tube(a)?;
        let fb = self.apply_tube(b)?;
        let prod: Vec<C64> = fa.values.iter().zip(&fb.values).map(|(x, y)| x * y).collect();
        Ok(Tube::new(Self::mat_vec(&self.inverse, &prod)))
    }

    /// Multiplicative unity `L⁻¹(1, …, 1)`.
    pub fn unity(&self) -> Tube {
        if self.kind != TransformKind::Custom {
            // Both built-in transforms have an all-ones first column, so the
            // unity is exactly the unit delta.
            let mut e = Tube::zeros(self.n3);
            e.values[0] = C64::new(1.0, 0.0);
            return e;
        }
        let ones = vec![C64::new(1.0, 0.0); self.n3];
        Tube::new(Self::mat_vec(&self.inverse, &ones))
    }

    /// Mixes the `n3` contiguous blocks of `data` (each of length `block`) by `m`:
    /// output block k is `Σ_l m[k,l]·block_l`.
    pub(crate) fn mix_blocks(m: &CMatrix, data: &[C64], block: usize) -> Vec<C64> {
        let n3 = m.nrows();
        let mut out = vec![C64::new(0.0, 0.0); data.len()];
        for k in 0..n3 {
            let dst = &mut out[k * block..(k + 1) * block];
            for l in 0..n3 {
                let w = m[(k, l)];
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                let src = &data[l * block..(l + 1) * block];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }
}
