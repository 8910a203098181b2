//! Reference densities, sampling, and kernel / spline density estimates.

pub mod field;
pub mod kde;
pub mod reference;
pub mod sampling;
pub mod sigma;
pub mod skde;

pub use field::{density_gradient, skde_fit, DensityField, DensityKind, FieldMeta, FLOOR_FRACTION};
pub use kde::{default_bandwidth, kde_evaluate, Kde, Kernel, TensorValues};
pub use reference::{reference_density, DensityId, ReferenceDensity};
pub use sampling::{sample_density, SampleSet};
pub use sigma::{sigma_eta, WeightProfile};
pub use skde::{fit_spline, SplineConfig, TensorSpline};
