//! Flow classification with a small feed-forward network, frequency-based
//! feature selection over three importance rankings, and Shapley-value
//! explanations (exact enumeration and Kernel SHAP).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*F64` and
//! `*F32` aliases below name the common instantiations.

pub mod dataio;
pub mod error;
pub mod explain_viz;
pub mod featsel;
pub mod metrics;
pub mod model_gbt;
pub mod model_mlp;
pub mod predictor;
pub mod rng;
pub mod scalar;
pub mod shapley;
pub mod synthgen;

pub use error::{Error, Result};
pub use predictor::Predictor;
pub use scalar::Scalar;

pub type FlowTableF64 = dataio::FlowTable<f64>;
pub type FlowTableF32 = dataio::FlowTable<f32>;
pub type ScalerParamsF64 = dataio::ScalerParams<f64>;
pub type MlpModelF64 = model_mlp::MlpModel<f64>;
pub type MlpModelF32 = model_mlp::MlpModel<f32>;
pub type GbtModelF64 = model_gbt::GbtModel<f64>;
pub type ShapExplanationF64 = shapley::ShapExplanation<f64>;
