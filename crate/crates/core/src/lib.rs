pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod eqsolve;
pub mod harness;
pub mod nnmath;
pub mod scalar;
pub mod uet;

/// Single-precision model used for training and inference.
pub type Model32 = decoder::Model<f32>;
/// Double-precision model used for gradient checks.
pub type Model64 = decoder::Model<f64>;
/// Reverse-mode tape over single-precision parameters.
pub type Graph32<'p> = nnmath::Graph<'p, f32>;
/// Reverse-mode tape over double-precision parameters.
pub type Graph64<'p> = nnmath::Graph<'p, f64>;
