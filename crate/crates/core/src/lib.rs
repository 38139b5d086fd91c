//! Adaptive data-free quantization at desk scale.
//!
//! A conditional generator and a fake-quantized student play a zero-sum
//! game over how much the student's predictions disagree with a frozen
//! full-precision teacher. The generator is pushed to produce samples whose
//! normalized disagreement entropy stays between two margins; the student
//! is calibrated on those samples to agree with the teacher. No training
//! data is touched after the teacher is trained.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptability;
pub mod data;
pub mod error;
pub mod game;
pub mod nn;
pub mod quant;
pub mod tensor;

pub use error::{Error, Result};
