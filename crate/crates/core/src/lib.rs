//! Transform-based third-order tensor algebra and matched subspace detection
//! from incomplete tensor samples.
//!
//! The building blocks are:
//!
//! * [`LinearTransform`] and the L-algebra on [`Tensor3`] (product, transpose,
//!   inverse, SVD) in [`transform`] and [`algebra`];
//! * block-matrix representations in [`block_matrix`];
//! * tensor-column subspaces, projections and coherence in [`subspace`];
//! * tubal and elementwise sampling in [`sampling`];
//! * residual-energy estimators and their concentration bounds in [`estimator`];
//! * noiseless and CFAR detectors in [`detector`], backed by [`distributions`];
//! * a Monte Carlo harness in [`experiments`].

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod block_matrix;
pub mod detector;
pub mod distributions;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod sampling;
pub mod subspace;
pub mod tensor;
pub mod transform;

pub use nalgebra::Complex;

pub type C64 = nalgebra::Complex<f64>;

pub use algebra::LSvd;
pub use error::{Error, Result};
pub use sampling::{SampleKind, SampleSet};
pub use subspace::{EmbeddedSubspace, Subspace};
pub use tensor::{Norms, Tensor3};
pub use transform::{LinearTransform, TransformKind, Tube};
