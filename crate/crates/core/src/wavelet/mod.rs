//! Daubechies families, point evaluation, cell moments, the periodized
//! transform and multiscale indices.

pub mod family;
pub mod index;
pub mod moments;
pub mod refinement;
pub mod transform;

pub use family::{make_family, WaveletFamily, MAX_ORDER};
pub use index::{tensor_enumerate, tensor_size, BasisIndex, BasisKind, TensorIndex};
pub use refinement::{eval_scaling, PointEvaluator, ScalingTable};
pub use transform::{band_of, forward_transform, inverse_transform};
