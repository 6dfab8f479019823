//! Sample sets and the restriction operators they induce.
//!
//! Tubal sampling observes whole horizontal tubes `T(i, 1, :)`; elementwise
//! sampling observes single entries `T(i, 1, k)` and zero-fills the rest.
//! Draws use ChaCha8 seeded from a 64-bit seed, so index sequences are
//! reproducible across platforms.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::RMatrix;
use crate::subspace::EmbeddedSubspace;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Tubal,
    Elementwise,
}

impl std::str::FromStr for SampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tubal" => Ok(SampleKind::Tubal),
            "elementwise" => Ok(SampleKind::Elementwise),
            other => Err(Error::InvalidConfig(format!("unknown sampling '{other}'"))),
        }
    }
}

/// An index set Ω over an `n1 × 1 × n3` tensor column.
///
/// Tubal indices are rows in `0..n1`; elementwise indices are `(row, slice)`
/// cells. Order is kept as drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    kind: SampleKind,
    shape: (usize, usize),
    replacement: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    rows: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cells: Vec<(usize, usize)>,
}

impl SampleSet {
    /// Uniform draw of `m` positions, seeded.
    pub fn draw(kind: SampleKind, m: usize, shape: (usize, usize), replacement: bool, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Self::draw_with(kind, m, shape, replacement, &mut rng)?;
        s.seed = Some(seed);
        Ok(s)
    }

    /// Uniform draw of `m` positions from a caller-supplied generator.
    pub fn draw_with<R: Rng + ?Sized>(
        kind: SampleKind,
        m: usize,
        shape: (usize, usize),
        replacement: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let (n1, n3) = shape;
        if m == 0 || n1 == 0 || n3 == 0 {
            return Err(Error::InvalidArg("sample count and shape must be positive".into()));
        }
        let available = match kind {
            SampleKind::Tubal => n1,
            SampleKind::Elementwise => n1 * n3,
        };
        let flat: Vec<usize> = if replacement {
            (0..m).map(|_| rng.random_range(0..available)).collect()
        } else {
            if m > available {
                return Err(Error::TooManySamples { requested: m, available });
            }
            index::sample(rng, available, m).into_vec()
        };
        let mut s = SampleSet {
            kind,
            shape,
            replacement,
            seed: None,
            rows: Vec::new(),
            cells: Vec::new(),
        };
        match kind {
            SampleKind::Tubal => s.rows = flat,
            // Flat cell index c = k·n1 + i, the row of unfold(T) it lands on.
            SampleKind::Elementwise => s.cells = flat.into_iter().map(|c| (c % n1, c / n1)).collect(),
        }
        Ok(s)
    }

    /// Tubal sample set from explicit rows.
    pub fn from_rows(rows: Vec<usize>, shape: (usize, usize), replacement: bool) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= shape.0) {
            return Err(Error::InvalidArg(format!("row {bad} out of range for n1 = {}", shape.0)));
        }
        if !replacement && rows.iter().collect::<BTreeSet<_>>().len() != rows.len() {
            return Err(Error::InvalidArg("duplicate rows in a set drawn without replacement".into()));
        }
        Ok(SampleSet { kind: SampleKind::Tubal, shape, replacement, seed: None, rows, cells: Vec::new() })
    }

    /// Elementwise sample set from explicit `(row, slice)` cells.
    pub fn from_cells(cells: Vec<(usize, usize)>, shape: (usize, usize), replacement: bool) -> Result<Self> {
        if let Some(bad) = cells.iter().find(|(i, k)| *i >= shape.0 || *k >= shape.1) {
            return Err(Error::InvalidArg(format!("cell {bad:?} out of range for shape {shape:?}")));
        }
        if !replacement && cells.iter().collect::<BTreeSet<_>>().len() != cells.len() {
            return Err(Error::InvalidArg("duplicate cells in a set drawn without replacement".into()));
        }
        Ok(SampleSet { kind: SampleKind::Elementwise, shape, replacement, seed: None, rows: Vec::new(), cells })
    }

    pub fn kind(&self) -> SampleKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn replacement(&self) -> bool {
        self.replacement
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Number of draws, counting repeats.
    pub fn m(&self) -> usize {
        match self.kind {
            SampleKind::Tubal => self.rows.len(),
            SampleKind::Elementwise => self.cells.len(),
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    /// Distinct positions in increasing order: rows for tubal sets, rows of
    /// `unfold(T)` (`k·n1 + i`) for elementwise sets.
    pub fn distinct_positions(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = match self.kind {
            SampleKind::Tubal => self.rows.iter().copied().collect(),
            SampleKind::Elementwise => self.cells.iter().map(|&(i, k)| k * self.shape.0 + i).collect(),
        };
        set.into_iter().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sample sets always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let set: SampleSet = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        match set.kind {
            SampleKind::Tubal => SampleSet::from_rows(set.rows, set.shape, set.replacement),
            SampleKind::Elementwise => SampleSet::from_cells(set.cells, set.shape, set.replacement),
        }
        .map(|s| SampleSet { seed: set.seed, ..s })
    }

    fn expect_kind(&self, kind: SampleKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch { expected: kind, found: self.kind });
        }
        Ok(())
    }

    fn expect_column(&self, x: &Tensor3) -> Result<()> {
        if x.shape() != (self.shape.0, 1, self.shape.1) {
            return dim_err(format!("expected a {}x1x{} column, got {:?}", self.shape.0, self.shape.1, x.shape()));
        }
        Ok(())
    }

    /// `T_Ω(i, 1, :) = T(Ω(i), 1, :)`, an `m × 1 × n3` tensor.
    pub fn restrict_signal_tubal(&self, x: &Tensor3) -> Result<Tensor3> {
        self.expect_kind(SampleKind::Tubal)?;
        self.expect_column(x)?;
        x.select_rows(&self.rows)
    }

    /// `U_Ω(i, :, :) = U(Ω(i), :, :)`, an `m × r × n3` tensor.
    pub fn restrict_basis_tubal(&self, u: &Tensor3) -> Result<Tensor3> {
        self.expect_kind(SampleKind::Tubal)?;
        if u.n1() != self.shape.0 || u.n3() != self.shape.1 {
            return dim_err(format!("basis {:?} does not match sample shape {:?}", u.shape(), self.shape));
        }
        u.select_rows(&self.rows)
    }

    /// Copy of `x` with every unsampled entry set to zero.
    pub fn restrict_signal_elementwise(&self, x: &Tensor3) -> Result<Tensor3> {
        self.expect_kind(SampleKind::Elementwise)?;
        self.expect_column(x)?;
        let mut out = Tensor3::zeros(self.shape.0, 1, self.shape.1);
        for &(i, k) in &self.cells {
            out.set(i, 0, k, x.get(i, 0, k));
        }
        Ok(out)
    }

    /// `lmat(U)` with every row `k·n1 + i` outside Ω zeroed.
    pub fn restrict_basis_elementwise(&self, e: &EmbeddedSubspace) -> Result<RMatrix> {
        self.expect_kind(SampleKind::Elementwise)?;
        if (e.n1(), e.n3()) != self.shape {
            return dim_err(format!("embedding {}x{} does not match sample shape {:?}", e.n1(), e.n3(), self.shape));
        }
        let keep: BTreeSet<usize> = self.distinct_positions().into_iter().collect();
        let b = e.basis_matrix();
        Ok(RMatrix::from_fn(b.nrows(), b.ncols(), |i, j| if keep.contains(&i) { b[(i, j)] } else { 0.0 }))
    }
}

/// Real values of the sampled cells of a real column, in `distinct_positions` order.
pub(crate) fn sampled_values(omega: &SampleSet, x: &Tensor3) -> Result<Vec<f64>> {
    if !x.is_real() {
        return Err(Error::ComplexData);
    }
    let n1 = omega.shape().0;
    Ok(omega
        .distinct_positions()
        .into_iter()
        .map(|p| x.get(p % n1, 0, p / n1).re)
        .collect())
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn draws_are_valid_and_serialise(
            tubal: bool, replacement: bool, n1 in 1usize..9, n3 in 1usize..6, frac in 0.0f64..1.0, seed: u64,
        ) {
            let kind = if tubal { SampleKind::Tubal } else { SampleKind::Elementwise };
            let available = if tubal { n1 } else { n1 * n3 };
            let m = 1 + (frac * (available - 1) as f64) as usize;
            let s = SampleSet::draw(kind, m, (n1, n3), replacement, seed).unwrap();
            prop_assert_eq!(s.m(), m);
            let distinct = s.distinct_positions();
            prop_assert!(distinct.iter().all(|&i| i < available));
            prop_assert!(distinct.windows(2).all(|w| w[0] < w[1]));
            if !replacement {
                prop_assert_eq!(distinct.len(), m);
            }
            prop_assert_eq!(SampleSet::from_json(&s.to_json()).unwrap(), s);
        }
    }
}
