//! WebAssembly bindings for the static page in `www/`.
//!
//! Three operations are exposed: the fake-quantization staircase, a
//! single-sample adaptability readout and a small game that can be stepped
//! from the page. The plain Rust functions carry the logic; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use adadfq::adaptability::{margin_penalty, AdaptabilityBatch, SampleClass};
use adadfq::data::{make_blobs, one_hot, Dataset, SeededRng, Stream};
use adadfq::game::{Game, GameConfig, TraceRow};
use adadfq::nn::{accuracy, train_classifier, Architecture, Mlp, TrainSettings};
use adadfq::quant::{build_quantized_student, fake_quant_value, QuantSpec, Range};
use adadfq::tensor::Tensor;
use adadfq::Error;
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `points` evenly spaced inputs over `[min − pad, max + pad]` and their
/// fake-quantized values, interleaved as `x0, q0, x1, q1, …`.
pub fn staircase(bits: u32, min: f64, max: f64, points: usize) -> Result<Vec<f64>, Error> {
    let spec = QuantSpec::new(bits)?;
    if !min.is_finite() || !max.is_finite() || min >= max || points < 2 {
        return Err(Error::Config("need min < max and at least 2 points".into()));
    }
    let range = Range { min, max };
    let pad = 0.15 * (max - min);
    let (lo, hi) = (min - pad, max + pad);
    Ok((0..points)
        .flat_map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            [x, fake_quant_value(x, range, spec)]
        })
        .collect())
}

#[wasm_bindgen(js_name = quantizerCurve)]
pub fn quantizer_curve(bits: u32, min: f64, max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    staircase(bits, min, max, points).map_err(js)
}

/// Adaptability readout for one sample.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Readout {
    p_ds: Vec<f64>,
    p_as: Vec<f64>,
    h_info: f64,
    h_scaled: f64,
    penalty: f64,
    class: String,
}

#[wasm_bindgen]
impl Readout {
    #[wasm_bindgen(getter, js_name = pDs)]
    pub fn p_ds(&self) -> Vec<f64> {
        self.p_ds.clone()
    }

    #[wasm_bindgen(getter, js_name = pAs)]
    pub fn p_as(&self) -> Vec<f64> {
        self.p_as.clone()
    }

    #[wasm_bindgen(getter, js_name = hInfo)]
    pub fn h_info(&self) -> f64 {
        self.h_info
    }

    /// `h_info / ln C`, i.e. the normalization with a zero floor.
    #[wasm_bindgen(getter, js_name = hScaled)]
    pub fn h_scaled(&self) -> f64 {
        self.h_scaled
    }

    #[wasm_bindgen(getter)]
    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    #[wasm_bindgen(getter)]
    pub fn class(&self) -> String {
        self.class.clone()
    }
}

pub fn readout(zp: &[f64], zq: &[f64], label: usize, lambda_l: f64, lambda_u: f64) -> Result<Readout, Error> {
    let c = zp.len();
    if c < 2 || zq.len() != c || label >= c {
        return Err(Error::Config(
            "logit vectors must match, with at least 2 classes and a valid label".into(),
        ));
    }
    if !(0.0 <= lambda_l && lambda_l < lambda_u && lambda_u <= 1.0) {
        return Err(Error::Config("bounds must satisfy 0 ≤ λl < λu ≤ 1".into()));
    }
    let zp_t = Tensor::new(vec![1, c], zp.to_vec())?;
    let zq_t = Tensor::new(vec![1, c], zq.to_vec())?;
    let y = one_hot(&[label], c)?;
    let b = AdaptabilityBatch::compute(&zp_t, &zq_t, &y)?;
    let h_info = b.h_info[0];
    let h_scaled = h_info / (c as f64).ln();
    let class = match b.classes[0] {
        SampleClass::Disagreement => "disagreement",
        SampleClass::Agreement => "agreement",
        SampleClass::TeacherWrong => "teacher wrong",
    };
    Ok(Readout {
        p_ds: b.p_ds.data().to_vec(),
        p_as: b.p_as.data().to_vec(),
        h_info,
        h_scaled,
        penalty: margin_penalty(h_scaled, lambda_l, lambda_u),
        class: class.into(),
    })
}

#[wasm_bindgen]
pub fn adaptability(zp: &[f64], zq: &[f64], label: usize, lambda_l: f64, lambda_u: f64) -> Result<Readout, JsError> {
    readout(zp, zq, label, lambda_l, lambda_u).map_err(js)
}

/// Teacher, student and game on a small blobs task, sized for a browser tab.
#[wasm_bindgen]
pub struct DemoGame {
    game: Game,
    data: Dataset,
    teacher_accuracy: f64,
    naive_accuracy: f64,
    last: Option<TraceRow>,
}

impl DemoGame {
    pub fn build(seed: u64, bits: u32) -> Result<Self, Error> {
        let data = make_blobs(4, 120, 8, 1.0, seed)?;
        let root = SeededRng::new(seed);
        let arch = Architecture {
            input_dim: 8,
            hidden: vec![16; 8],
            output_dim: 4,
        };
        let mut teacher = Mlp::new(arch, &mut root.substream(Stream::Init))?;
        let settings = TrainSettings {
            epochs: 15,
            ..TrainSettings::default()
        };
        train_classifier(
            &mut teacher,
            &data.train.features,
            &data.train.labels,
            &settings,
            &mut root.substream(Stream::Shuffle),
        )?;
        let student = build_quantized_student(&teacher, QuantSpec::new(bits)?)?;
        let teacher_accuracy = accuracy(&teacher, &data.test.features, &data.test.labels)?;
        let naive_accuracy = accuracy(&student, &data.test.features, &data.test.labels)?;
        let config = GameConfig {
            seed,
            bits,
            ..GameConfig::default()
        };
        Ok(DemoGame {
            game: Game::new(&teacher, student, config)?,
            data,
            teacher_accuracy,
            naive_accuracy,
            last: None,
        })
    }

    pub fn advance(&mut self, n: usize) -> Result<(), Error> {
        for _ in 0..n {
            self.last = Some(self.game.iteration()?);
        }
        Ok(())
    }

    pub fn student_accuracy_now(&self) -> Result<f64, Error> {
        accuracy(&self.game.student, &self.data.test.features, &self.data.test.labels)
    }
}

#[wasm_bindgen]
impl DemoGame {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, bits: u32) -> Result<DemoGame, JsError> {
        Self::build(seed as u64, bits).map_err(js)
    }

    /// Plays `n` iterations.
    pub fn step(&mut self, n: usize) -> Result<(), JsError> {
        self.advance(n).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.game.iterations_done()
    }

    #[wasm_bindgen(getter, js_name = teacherAccuracy)]
    pub fn teacher_accuracy(&self) -> f64 {
        self.teacher_accuracy
    }

    #[wasm_bindgen(getter, js_name = naiveAccuracy)]
    pub fn naive_accuracy(&self) -> f64 {
        self.naive_accuracy
    }

    #[wasm_bindgen(js_name = studentAccuracy)]
    pub fn student_accuracy(&self) -> Result<f64, JsError> {
        self.student_accuracy_now().map_err(js)
    }

    /// Last trace row as `[delta_g, delta_q, hprime_mean, loss_gen, loss_cal,
    /// in-margin fraction]`, or an empty array before the first step.
    #[wasm_bindgen(getter, js_name = lastRow)]
    pub fn last_row(&self) -> Vec<f64> {
        self.last.map_or_else(Vec::new, |r| {
            vec![
                r.delta_g,
                r.delta_q,
                r.hprime_mean,
                r.loss_gen,
                r.loss_cal,
                r.n_in_margin as f64 / r.batch_size() as f64,
            ]
        })
    }
}
