//! Min/max linear quantization of weights and activations.
//!
//! A value `θ` in `[θ_min, θ_max]` maps to the integer code
//! `round((2ⁿ−1)·(θ−θ_min)/(θ_max−θ_min) − 2ⁿ⁻¹)` in `[−2ⁿ⁻¹, 2ⁿ⁻¹−1]`,
//! rounding half away from zero. Fake quantization runs the value through
//! quantize and dequantize in the forward pass and uses a clipping
//! straight-through estimator in the backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Layer, Mlp, Mode, Quantization};
use crate::tensor::{Graph, Var};

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 32;

/// EMA decay for activation ranges.
pub const ACTIVATION_EMA_DECAY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantSpec {
    bits: u32,
}

impl QuantSpec {
    pub fn new(bits: u32) -> Result<Self> {
        if !(MIN_BITS..=MAX_BITS).contains(&bits) {
            return Err(Error::config(format!(
                "bit width must be in [{MIN_BITS}, {MAX_BITS}], got {bits}"
            )));
        }
        Ok(QuantSpec { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn code_min(&self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    pub fn code_max(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    /// `2ⁿ − 1`, the number of grid steps across the range.
    pub fn steps(&self) -> f64 {
        ((1u64 << self.bits) - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn of(values: &[f64]) -> Option<Range> {
        let mut it = values.iter().copied();
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Some(Range { min, max })
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.min < self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Returned when `θ_min ≥ θ_max`; callers pass the value through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("degenerate quantization range")]
pub struct DegenerateRange;

pub fn quantize_value(theta: f64, min: f64, max: f64, spec: QuantSpec) -> Result<i64, DegenerateRange> {
    if !(min < max) {
        return Err(DegenerateRange);
    }
    let clamped = theta.clamp(min, max);
    let half = (1u64 << (spec.bits - 1)) as f64;
    let scaled = spec.steps() * ((clamped - min) / (max - min)) - half;
    // f64::round rounds half away from zero
    let code = scaled.round() as i64;
    Ok(code.clamp(spec.code_min(), spec.code_max()))
}

pub fn dequantize_value(code: i64, min: f64, max: f64, spec: QuantSpec) -> Result<f64> {
    if code < spec.code_min() || code > spec.code_max() {
        return Err(Error::contract(format!(
            "code {code} outside [{}, {}]",
            spec.code_min(),
            spec.code_max()
        )));
    }
    if !(min < max) {
        return Err(Error::contract("degenerate dequantization range"));
    }
    let half = (1u64 << (spec.bits - 1)) as f64;
    Ok((code as f64 + half) * (max - min) / spec.steps() + min)
}

/// `dequantize(quantize(x))`, or `x` itself for a degenerate range.
pub fn fake_quant_value(x: f64, range: Range, spec: QuantSpec) -> f64 {
    match quantize_value(x, range.min, range.max, spec) {
        Ok(code) => dequantize_value(code, range.min, range.max, spec).expect("quantize_value yields in-range codes"),
        Err(DegenerateRange) => x,
    }
}

/// Observed range of one activation quantization site.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FakeQuantState {
    pub range: Option<Range>,
    pub frozen: bool,
}

impl FakeQuantState {
    pub fn with_range(range: Range) -> Self {
        FakeQuantState {
            range: Some(range),
            frozen: false,
        }
    }

    /// The range after folding in a batch's min/max with the EMA rule
    /// `new = decay·old + (1−decay)·batch`. The first observation is taken as-is.
    pub fn updated_range(&self, batch: Range) -> Range {
        match self.range {
            Some(old) if !self.frozen => Range {
                min: ACTIVATION_EMA_DECAY * old.min + (1.0 - ACTIVATION_EMA_DECAY) * batch.min,
                max: ACTIVATION_EMA_DECAY * old.max + (1.0 - ACTIVATION_EMA_DECAY) * batch.max,
            },
            Some(old) => old,
            None => batch,
        }
    }
}

/// Fake-quantizes `x` on the graph. Inside the range the gradient passes
/// unchanged; outside it is zero. A missing or degenerate range is identity.
pub fn fake_quant(g: &mut Graph, x: Var, spec: QuantSpec, range: Option<Range>) -> Result<Var> {
    let Some(range) = range.filter(|r| !r.is_degenerate()) else {
        return Ok(x);
    };
    let values = g.value(x);
    let forward = values.iter().map(|v| fake_quant_value(*v, range, spec)).collect();
    let pass = values.iter().map(|v| range.contains(*v)).collect();
    g.straight_through(x, forward, pass)
}

/// Width of the initial activation range in units of the preceding BN
/// layer's `γ`: the site after `relu(γ·x̂ + β)` starts at
/// `[0, max_c (β_c + k·|γ_c|)]`.
pub const ACTIVATION_INIT_SIGMAS: f64 = 4.0;

/// Builds the quantized student from a trained network.
///
/// The student keeps the teacher's latent full-precision weights and BN
/// running statistics. Every linear layer fake-quantizes its weight with
/// the live per-tensor min/max; every hidden ReLU output is fake-quantized
/// with a tracked range, initialized from the preceding BN layer's affine
/// parameters so no data is needed.
pub fn build_quantized_student(teacher: &Mlp, spec: QuantSpec) -> Result<Mlp> {
    let mut student = teacher.clone();
    student.set_quantization(None)?;
    let mut sites = Vec::new();
    let mut last_bn = None;
    for layer in student.layers() {
        match layer {
            Layer::BatchNorm(bn) => last_bn = Some(bn),
            Layer::Relu => {
                let range = last_bn.map(|bn| {
                    let hi = bn
                        .gamma
                        .data()
                        .iter()
                        .zip(bn.beta.data())
                        .map(|(g, b)| b + ACTIVATION_INIT_SIGMAS * g.abs())
                        .fold(0.0, f64::max);
                    Range { min: 0.0, max: hi }
                });
                sites.push(FakeQuantState { range, frozen: false });
            }
            Layer::Linear(_) => {}
        }
    }
    student.set_quantization(Some(Quantization { spec, sites }))?;
    student.set_mode(Mode::Eval);
    Ok(student)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn spec(n: u32) -> QuantSpec {
        QuantSpec::new(n).unwrap()
    }

    #[test]
    fn boundaries_map_to_extreme_codes() {
        for n in [2, 3, 4, 8, 16, 32] {
            let s = spec(n);
            assert_eq!(quantize_value(-0.7, -0.7, 1.3, s).unwrap(), s.code_min());
            assert_eq!(quantize_value(1.3, -0.7, 1.3, s).unwrap(), s.code_max());
            assert_eq!(dequantize_value(s.code_min(), -0.7, 1.3, s).unwrap(), -0.7);
            assert!((dequantize_value(s.code_max(), -0.7, 1.3, s).unwrap() - 1.3).abs() < 1e-12);
        }
    }

    #[test]
    fn two_bit_worked_example() {
        // round(3·(1/3) − 2) = −1
        assert_eq!(quantize_value(1.0, 0.0, 3.0, spec(2)).unwrap(), -1);
    }

    #[test]
    fn round_half_away_from_zero() {
        // n=2, range [0,3]: θ=0.5 → 3·(1/6) − 2 = −1.5 → −2; θ=2.5 → 0.5 → 1
        assert_eq!(quantize_value(0.5, 0.0, 3.0, spec(2)).unwrap(), -2);
        assert_eq!(quantize_value(2.5, 0.0, 3.0, spec(2)).unwrap(), 1);
    }

    #[test]
    fn degenerate_range_is_signalled_and_passes_through() {
        assert_eq!(quantize_value(0.3, 1.0, 1.0, spec(4)), Err(DegenerateRange));
        assert_eq!(quantize_value(0.3, 2.0, 1.0, spec(4)), Err(DegenerateRange));
        let r = Range { min: 1.0, max: 1.0 };
        assert_eq!(fake_quant_value(0.3, r, spec(4)), 0.3);
    }

    #[test]
    fn bit_width_validation() {
        assert!(QuantSpec::new(1).is_err());
        assert!(QuantSpec::new(33).is_err());
        assert!(QuantSpec::new(2).is_ok());
    }

    #[test]
    fn dequantize_rejects_out_of_range_code() {
        assert!(dequantize_value(4, -1.0, 1.0, spec(3)).is_err());
        assert!(dequantize_value(-5, -1.0, 1.0, spec(3)).is_err());
    }

    #[test]
    fn exhaustive_round_trip_three_bits() {
        let s = spec(3);
        for code in s.code_min()..=s.code_max() {
            let v = dequantize_value(code, -1.0, 1.0, s).unwrap();
            assert_eq!(quantize_value(v, -1.0, 1.0, s).unwrap(), code);
        }
    }

    #[test]
    fn grid_points_are_fixed_points() {
        let s = spec(4);
        let r = Range { min: -2.0, max: 1.0 };
        for code in s.code_min()..=s.code_max() {
            let v = dequantize_value(code, r.min, r.max, s).unwrap();
            assert_eq!(fake_quant_value(v, r, s), v);
        }
    }

    #[test]
    fn eight_bit_half_step_bound() {
        let s = spec(8);
        let r = Range { min: -1.0, max: 1.0 };
        let step = 2.0 / 255.0;
        for i in 0..=4000 {
            let x = -1.0 + 2.0 * i as f64 / 4000.0;
            assert!((x - fake_quant_value(x, r, s)).abs() <= step / 2.0 + 1e-15);
        }
    }

    #[test]
    fn ste_gradient_is_one_inside_zero_outside() {
        let t = Tensor::new(vec![5], vec![-2.0, -0.5, 0.0, 0.7, 3.0])
            .unwrap()
            .with_grad();
        let mut g = Graph::new();
        let v = g.leaf(&t);
        let q = fake_quant(&mut g, v, spec(3), Some(Range { min: -1.0, max: 1.0 })).unwrap();
        let s = g.sum(q);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(v).unwrap(), &[0.0, 1.0, 1.0, 1.0, 0.0]);
        // clamped forward values
        assert_eq!(g.value(q)[0], -1.0);
        assert_eq!(g.value(q)[4], 1.0);
    }

    #[test]
    fn ema_range_update() {
        let st = FakeQuantState::with_range(Range { min: 0.0, max: 1.0 });
        let r = st.updated_range(Range { min: -1.0, max: 2.0 });
        assert!((r.min - -0.1).abs() < 1e-15);
        assert!((r.max - 1.1).abs() < 1e-15);
        let frozen = FakeQuantState { frozen: true, ..st };
        assert_eq!(frozen.updated_range(Range { min: -1.0, max: 2.0 }), st.range.unwrap());
        let fresh = FakeQuantState::default();
        assert_eq!(
            fresh.updated_range(Range { min: -1.0, max: 2.0 }),
            Range { min: -1.0, max: 2.0 }
        );
    }

    proptest! {
        #[test]
        fn codes_stay_in_range(n in 2u32..=16, x in prop::num::f64::NORMAL, lo in -10.0f64..10.0, w in 1e-6f64..10.0) {
            let s = spec(n);
            let c = quantize_value(x, lo, lo + w, s).unwrap();
            prop_assert!(c >= s.code_min() && c <= s.code_max());
        }

        #[test]
        fn quantize_is_monotone(n in 2u32..=8, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let s = spec(n);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize_value(lo, -1.0, 2.0, s).unwrap() <= quantize_value(hi, -1.0, 2.0, s).unwrap());
        }

        #[test]
        fn error_bound_inside_range(n in 2u32..=12, t in 0.0f64..=1.0, lo in -5.0f64..5.0, w in 1e-3f64..10.0) {
            let s = spec(n);
            let r = Range { min: lo, max: lo + w };
            let x = lo + t * w;
            let bound = w / (2.0 * s.steps());
            prop_assert!((x - fake_quant_value(x, r, s)).abs() <= bound * (1.0 + 1e-9));
        }
    }
}
