//! The alternating zero-sum game between the generator and the quantized
//! student, with per-iteration trace rows and an equilibrium summary.

use serde::{Deserialize, Serialize};

use crate::adaptability::{
    calibration_objective, disagreement_vector, generator_objective, info_entropy, AdaptabilityBatch, GameHyperparams,
};
use crate::data::{sample_noise_and_labels, GeneratorInputs, NoiseSource, SeededRng, Stream};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, Adam, ConditionalGenerator, GeneratorShape, Mlp, Mode, Optimizer, Sgd};
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    pub generator_lr: f64,
    pub generator_betas: (f64, f64),
    pub calibration_lr: f64,
    pub calibration_momentum: f64,
    pub calibration_weight_decay: f64,
    /// Weight of an auxiliary cross-entropy between Q's logits and the
    /// conditioning labels. Zero disables it.
    pub calibration_ce_weight: f64,
    pub hyper: GameHyperparams,
    pub generator: GeneratorShape,
    pub seed: u64,
    pub bits: u32,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            epochs: 400,
            iterations_per_epoch: 50,
            batch_size: 16,
            generator_lr: 1e-3,
            generator_betas: (0.9, 0.999),
            calibration_lr: 1e-4,
            calibration_momentum: 0.9,
            calibration_weight_decay: 1e-4,
            calibration_ce_weight: 0.0,
            hyper: GameHyperparams::default(),
            generator: GeneratorShape::default(),
            seed: 0,
            bits: 3,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.iterations_per_epoch == 0 {
            return Err(Error::config("epochs and iterations_per_epoch must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        let rates = [
            ("generator_lr", self.generator_lr),
            ("calibration_lr", self.calibration_lr),
            ("calibration_weight_decay", self.calibration_weight_decay),
            ("calibration_ce_weight", self.calibration_ce_weight),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        for (name, v) in [
            ("generator beta1", self.generator_betas.0),
            ("generator beta2", self.generator_betas.1),
            ("calibration_momentum", self.calibration_momentum),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        crate::quant::QuantSpec::new(self.bits)?;
        self.hyper.validate()
    }

    pub fn total_iterations(&self) -> usize {
        self.epochs * self.iterations_per_epoch
    }
}

/// One iteration of the game. Entropies are batch means of `H(p_ds)` in
/// nats; the `h′` summary and class counts describe the generator's batch
/// before its update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub epoch: usize,
    pub loss_gen: f64,
    pub loss_cal: f64,
    pub h_info_pre_g: f64,
    pub h_info_post_g: f64,
    pub delta_g: f64,
    pub h_info_pre_q: f64,
    pub h_info_post_q: f64,
    pub delta_q: f64,
    pub n_disagree: usize,
    pub n_agree: usize,
    pub n_teacher_wrong: usize,
    pub hprime_min: f64,
    pub hprime_mean: f64,
    pub hprime_max: f64,
    /// Samples of the generator batch with `λ_l ≤ h′ ≤ λ_u`.
    #[serde(skip)]
    pub n_in_margin: usize,
}

impl TraceRow {
    pub const CSV_HEADER: [&'static str; 16] = [
        "iter",
        "epoch",
        "loss_gen",
        "loss_cal",
        "h_info_pre_g",
        "h_info_post_g",
        "delta_g",
        "h_info_pre_q",
        "h_info_post_q",
        "delta_q",
        "n_disagree",
        "n_agree",
        "n_teacher_wrong",
        "hprime_min",
        "hprime_mean",
        "hprime_max",
    ];

    pub fn batch_size(&self) -> usize {
        self.n_disagree + self.n_agree + self.n_teacher_wrong
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub rows: Vec<TraceRow>,
}

impl GameTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Fraction of generated samples inside the margin over `rows[range]`.
    pub fn margin_fraction(&self, range: std::ops::Range<usize>) -> f64 {
        let rows = &self.rows[range];
        let inside: usize = rows.iter().map(|r| r.n_in_margin).sum();
        let total: usize = rows.iter().map(TraceRow::batch_size).sum();
        inside as f64 / total.max(1) as f64
    }
}

/// The two players, their optimizers and the noise stream. The teacher is
/// held by value in eval mode and never updated.
#[derive(Debug, Clone)]
pub struct Game {
    teacher: Mlp,
    pub generator: ConditionalGenerator,
    pub student: Mlp,
    gen_opt: Adam,
    cal_opt: Sgd,
    noise: NoiseSource,
    config: GameConfig,
    iter: usize,
}

impl Game {
    /// Sets up the game with a fresh generator seeded from `config.seed`.
    pub fn new(teacher: &Mlp, student: Mlp, config: GameConfig) -> Result<Self> {
        let mut init = SeededRng::new(config.seed).substream(Stream::Init);
        let generator =
            ConditionalGenerator::new(config.generator, teacher.output_dim(), teacher.input_dim(), &mut init)?;
        Game::with_generator(teacher, student, generator, config)
    }

    pub fn with_generator(
        teacher: &Mlp,
        student: Mlp,
        generator: ConditionalGenerator,
        config: GameConfig,
    ) -> Result<Self> {
        config.validate()?;
        if teacher.quantization().is_some() {
            return Err(Error::contract("the teacher must be full precision"));
        }
        if student.quantization().is_none() {
            return Err(Error::contract("the student must carry a quantization"));
        }
        if student.architecture() != teacher.architecture() {
            return Err(Error::contract("teacher and student architectures differ"));
        }
        if generator.sample_dim() != teacher.input_dim() || generator.classes() != teacher.output_dim() {
            return Err(Error::dim(
                "generator",
                &[generator.classes(), generator.sample_dim()],
                &[teacher.output_dim(), teacher.input_dim()],
            ));
        }
        let mut teacher = teacher.clone();
        teacher.set_mode(Mode::Eval);
        teacher.set_trainable(false);
        let (b1, b2) = config.generator_betas;
        Ok(Game {
            teacher,
            generator,
            student,
            gen_opt: Adam::new(config.generator_lr).with_betas(b1, b2),
            cal_opt: Sgd::new(
                config.calibration_lr,
                config.calibration_momentum,
                config.calibration_weight_decay,
                true,
            ),
            noise: NoiseSource::new(config.seed),
            config,
            iter: 0,
        })
    }

    pub fn teacher(&self) -> &Mlp {
        &self.teacher
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn iterations_done(&self) -> usize {
        self.iter
    }

    fn draw(&mut self) -> Result<GeneratorInputs> {
        sample_noise_and_labels(
            &mut self.noise,
            self.config.batch_size,
            self.generator.noise_dim(),
            self.generator.classes(),
        )
    }

    /// Synthetic samples from the current generator without touching its
    /// state.
    pub fn synthesize(&self, inputs: &GeneratorInputs) -> Result<Tensor> {
        let mut gen = self.generator.clone();
        gen.set_mode(Mode::Probe);
        gen.set_trainable(false);
        let mut g = Graph::new();
        let z = g.constant(&inputs.noise);
        let y = g.constant(&inputs.one_hot);
        let fwd = gen.generate(&mut g, z, y)?;
        Ok(g.tensor(fwd.output))
    }

    /// Draws `n` samples from a stream independent of the game's own noise.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Tensor, Vec<usize>)> {
        let mut src = NoiseSource::new(seed);
        let inputs = sample_noise_and_labels(&mut src, n, self.generator.noise_dim(), self.generator.classes())?;
        Ok((self.synthesize(&inputs)?, inputs.labels))
    }

    fn mean_entropy(&self, x: &Tensor, student_mode: Mode) -> Result<f64> {
        let zp = self.teacher.predict_logits(x)?;
        let mut q = self.student.clone();
        q.set_mode(student_mode);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let zq = q.forward(&mut g, xv)?.output;
        let zp = g.constant(&zp);
        let p_ds = disagreement_vector(&mut g, zp, zq)?;
        Ok(mean(&info_entropy(&g.tensor(p_ds))?))
    }

    /// One generator step followed by one calibration step on a fresh batch.
    pub fn iteration(&mut self) -> Result<TraceRow> {
        let hp = self.config.hyper;
        let stats = self.teacher.bn_stats();

        // (a) generator ascent; Q frozen with fixed ranges
        let inputs = self.draw()?;
        self.generator.set_mode(Mode::Train);
        self.generator.set_trainable(true);
        self.student.set_mode(Mode::Eval);
        self.student.set_trainable(false);
        let mut g = Graph::new();
        let z = g.constant(&inputs.noise);
        let y = g.constant(&inputs.one_hot);
        let gen_fwd = self.generator.generate(&mut g, z, y)?;
        let p_fwd = self.teacher.forward(&mut g, gen_fwd.output)?;
        let q_fwd = self.student.forward(&mut g, gen_fwd.output)?;
        let obj = generator_objective(&mut g, p_fwd.output, q_fwd.output, y, &p_fwd.bn_inputs, &stats, &hp)?;
        let loss_gen = -g.scalar(obj.total);
        let zp = g.tensor(p_fwd.output);
        let zq = g.tensor(q_fwd.output);
        let batch = AdaptabilityBatch::compute(&zp, &zq, &inputs.one_hot)?;
        if !loss_gen.is_finite() {
            log::error!(
                "non-finite generator loss at iteration {}: l_bal={} l_bns={} margin={}",
                self.iter,
                g.scalar(obj.l_bal),
                g.scalar(obj.l_bns),
                g.scalar(obj.margin)
            );
            return Err(Error::NonFinite("generator loss"));
        }
        let neg = g.neg(obj.total);
        let grads = g.backward(neg)?;
        self.generator.zero_grad();
        self.generator.accumulate_grads(&grads, &gen_fwd)?;
        self.generator.apply_updates(&gen_fwd);
        self.gen_opt.step(&mut self.generator.params_mut())?;
        self.generator.set_trainable(false);

        let h_info_pre_g = batch.mean_h_info();
        let x_after = self.synthesize(&inputs)?;
        let h_info_post_g = self.mean_entropy(&x_after, Mode::Eval)?;

        // (b) calibration descent on a fresh batch; G frozen
        let inputs_q = self.draw()?;
        let x = self.synthesize(&inputs_q)?;
        self.student.set_mode(Mode::Calibrate);
        self.student.set_trainable(true);
        let mut g = Graph::new();
        let xv = g.constant(&x);
        let p_fwd = self.teacher.forward(&mut g, xv)?;
        let q_fwd = self.student.forward(&mut g, xv)?;
        let cal = calibration_objective(&mut g, p_fwd.output, q_fwd.output)?;
        let total = if self.config.calibration_ce_weight > 0.0 {
            let ce = cross_entropy(&mut g, q_fwd.output, &inputs_q.labels)?;
            let ce = g.scale(ce, self.config.calibration_ce_weight);
            g.add(cal.total, ce)?
        } else {
            cal.total
        };
        let loss_cal = g.scalar(total);
        if !loss_cal.is_finite() {
            log::error!("non-finite calibration loss at iteration {}", self.iter);
            return Err(Error::NonFinite("calibration loss"));
        }
        let h_info_pre_q = mean(g.value(cal.h_info));
        let grads = g.backward(total)?;
        self.student.zero_grad();
        self.student.accumulate_grads(&grads, &q_fwd)?;
        self.student.apply_updates(&q_fwd);
        self.cal_opt.step(&mut self.student.params_mut())?;
        self.student.set_trainable(false);
        self.student.set_mode(Mode::Eval);
        let h_info_post_q = self.mean_entropy(&x, Mode::Eval)?;

        let (n_disagree, n_agree, n_teacher_wrong) = batch.class_counts();
        let row = TraceRow {
            iter: self.iter,
            epoch: self.iter / self.config.iterations_per_epoch,
            loss_gen,
            loss_cal,
            h_info_pre_g,
            h_info_post_g,
            delta_g: h_info_post_g - h_info_pre_g,
            h_info_pre_q,
            h_info_post_q,
            delta_q: h_info_post_q - h_info_pre_q,
            n_disagree,
            n_agree,
            n_teacher_wrong,
            hprime_min: batch.h_prime.iter().copied().fold(f64::INFINITY, f64::min),
            hprime_mean: mean(&batch.h_prime),
            hprime_max: batch.h_prime.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n_in_margin: batch.in_margin(hp.lambda_l, hp.lambda_u),
        };
        self.iter += 1;
        Ok(row)
    }

    /// Runs the remaining iterations, handing each row to `on_row` as it is
    /// produced.
    pub fn run_with<E: From<Error>>(
        &mut self,
        mut on_row: impl FnMut(&TraceRow) -> std::result::Result<(), E>,
    ) -> std::result::Result<GameTrace, E> {
        let total = self.config.total_iterations();
        let mut trace = GameTrace {
            rows: Vec::with_capacity(total.saturating_sub(self.iter)),
        };
        while self.iter < total {
            let row = self.iteration()?;
            if row.iter % self.config.iterations_per_epoch == self.config.iterations_per_epoch - 1 {
                log::debug!(
                    "epoch {}: loss_gen {:.4} loss_cal {:.4} h′ mean {:.3}",
                    row.epoch,
                    row.loss_gen,
                    row.loss_cal,
                    row.hprime_mean
                );
            }
            on_row(&row)?;
            trace.rows.push(row);
        }
        Ok(trace)
    }

    pub fn run(&mut self) -> Result<GameTrace> {
        self.run_with(|_| Ok::<(), Error>(()))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub struct GameOutcome {
    pub student: Mlp,
    pub generator: ConditionalGenerator,
    pub trace: GameTrace,
}

/// Plays the full game and returns the calibrated student.
pub fn run_game(teacher: &Mlp, student: Mlp, config: &GameConfig) -> Result<GameOutcome> {
    let mut game = Game::new(teacher, student, config.clone())?;
    let trace = game.run()?;
    Ok(GameOutcome {
        student: game.student,
        generator: game.generator,
        trace,
    })
}

/// Windowed view of the end of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub window: usize,
    pub mean_delta_g: f64,
    pub mean_delta_q: f64,
    pub mean_delta_sum: f64,
    pub mean_abs_delta_g: f64,
    /// `|mean(Δ_G + Δ_Q)| / mean(|Δ_G|)`; infinite when `Δ_G` is always zero
    /// and the sum is not.
    pub zero_sum_ratio: f64,
    pub hprime_min: f64,
    pub hprime_mean: f64,
    pub hprime_max: f64,
    pub mean_loss_gen: f64,
    pub mean_loss_cal: f64,
    pub margin_fraction: f64,
    pub equilibrium: bool,
    pub underfit: bool,
    pub overfit: bool,
}

/// `zero_sum_ratio` below this counts as equilibrium.
pub const EQUILIBRIUM_RATIO: f64 = 0.25;
/// Calibration loss above this with a flat window flags underfitting.
pub const UNDERFIT_LOSS: f64 = 0.5;
/// Relative change between window halves below this counts as flat.
pub const FLAT_TOLERANCE: f64 = 0.01;
/// Generator loss magnitude below this counts as collapsed.
pub const COLLAPSE_LOSS: f64 = 1e-6;

pub fn equilibrium_report(trace: &GameTrace, window: usize) -> Result<EquilibriumReport> {
    if trace.is_empty() {
        return Err(Error::contract("equilibrium report of an empty trace"));
    }
    if window == 0 || window > trace.len() {
        return Err(Error::config(format!("window {window} outside 1..={}", trace.len())));
    }
    let start = trace.len() - window;
    let rows = &trace.rows[start..];
    let n = window as f64;
    let avg = |f: &dyn Fn(&TraceRow) -> f64| rows.iter().map(f).sum::<f64>() / n;

    let mean_delta_g = avg(&|r| r.delta_g);
    let mean_delta_q = avg(&|r| r.delta_q);
    let mean_delta_sum = avg(&|r| r.delta_g + r.delta_q);
    let mean_abs_delta_g = avg(&|r| r.delta_g.abs());
    let zero_sum_ratio = if mean_delta_sum == 0.0 {
        0.0
    } else {
        mean_delta_sum.abs() / mean_abs_delta_g
    };
    let mean_loss_gen = avg(&|r| r.loss_gen);
    let mean_loss_cal = avg(&|r| r.loss_cal);

    let half = window / 2;
    let flat = if half == 0 {
        true
    } else {
        let first = rows[..half].iter().map(|r| r.loss_cal).sum::<f64>() / half as f64;
        let second = rows[half..].iter().map(|r| r.loss_cal).sum::<f64>() / (window - half) as f64;
        (first - second).abs() <= FLAT_TOLERANCE * first.abs().max(f64::MIN_POSITIVE)
    };

    Ok(EquilibriumReport {
        window,
        mean_delta_g,
        mean_delta_q,
        mean_delta_sum,
        mean_abs_delta_g,
        zero_sum_ratio,
        hprime_min: rows.iter().map(|r| r.hprime_min).fold(f64::INFINITY, f64::min),
        hprime_mean: avg(&|r| r.hprime_mean),
        hprime_max: rows.iter().map(|r| r.hprime_max).fold(f64::NEG_INFINITY, f64::max),
        mean_loss_gen,
        mean_loss_cal,
        margin_fraction: trace.margin_fraction(start..trace.len()),
        equilibrium: zero_sum_ratio < EQUILIBRIUM_RATIO,
        underfit: mean_loss_cal > UNDERFIT_LOSS && flat,
        overfit: rows.iter().all(|r| r.loss_gen.abs() < COLLAPSE_LOSS),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Architecture, Mlp};
    use crate::quant::{build_quantized_student, QuantSpec};

    fn small_setup(seed: u64) -> (Mlp, Mlp, GameConfig) {
        let mut rng = SeededRng::new(seed);
        let mut teacher = Mlp::new(
            Architecture {
                input_dim: 4,
                hidden: vec![8],
                output_dim: 3,
            },
            &mut rng,
        )
        .unwrap();
        teacher.set_mode(Mode::Eval);
        let student = build_quantized_student(&teacher, QuantSpec::new(3).unwrap()).unwrap();
        let config = GameConfig {
            epochs: 2,
            iterations_per_epoch: 3,
            batch_size: 8,
            generator: GeneratorShape {
                noise_dim: 6,
                embed_dim: 3,
                hidden: [8, 8],
            },
            seed,
            ..Default::default()
        };
        (teacher, student, config)
    }

    #[test]
    fn trace_length_and_teacher_frozen() {
        let (teacher, student, config) = small_setup(1);
        let before = teacher.fingerprint();
        let mut game = Game::new(&teacher, student, config.clone()).unwrap();
        let inner = game.teacher().fingerprint();
        let trace = game.run().unwrap();
        assert_eq!(trace.len(), config.total_iterations());
        assert_eq!(game.teacher().fingerprint(), inner);
        assert_eq!(teacher.fingerprint(), before);
        for (i, r) in trace.rows.iter().enumerate() {
            assert_eq!(r.iter, i);
            assert_eq!(r.epoch, i / 3);
            assert_eq!(r.batch_size(), 8);
            assert!((r.delta_g - (r.h_info_post_g - r.h_info_pre_g)).abs() == 0.0);
        }
    }

    #[test]
    fn zero_learning_rates_are_a_no_op() {
        let (teacher, student, mut config) = small_setup(2);
        config.generator_lr = 0.0;
        config.calibration_lr = 0.0;
        config.calibration_weight_decay = 0.0;
        let mut game = Game::new(&teacher, student, config).unwrap();
        let gen_before = game.generator.clone();
        let q_params: Vec<Tensor> = game.student.params().into_iter().cloned().collect();
        let trace = game.run().unwrap();
        for r in &trace.rows {
            assert_eq!(r.delta_g, 0.0, "{r:?}");
            assert!(r.delta_q.abs() < 1e-15, "{r:?}");
        }
        assert_eq!(game.generator.embedding.data(), gen_before.embedding.data());
        for (a, b) in gen_before.body.params().iter().zip(game.generator.body.params()) {
            assert_eq!(a.data(), b.data());
        }
        for (a, b) in q_params.iter().zip(game.student.params()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let (teacher, student, config) = small_setup(3);
        let a = run_game(&teacher, student.clone(), &config).unwrap();
        let b = run_game(&teacher, student, &config).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.student.fingerprint(), b.student.fingerprint());
    }

    #[test]
    fn calibration_changes_only_the_student() {
        let (teacher, student, config) = small_setup(4);
        let mut game = Game::new(&teacher, student.clone(), config).unwrap();
        game.iteration().unwrap();
        assert_ne!(game.student.fingerprint(), student.fingerprint());
        // BN running statistics of Q are untouched by calibration
        for (a, b) in game.student.bn_layers().zip(student.bn_layers()) {
            assert_eq!(a.running_mean, b.running_mean);
            assert_eq!(a.running_var, b.running_var);
        }
    }

    #[test]
    fn config_validation() {
        let ok = GameConfig::default();
        assert!(ok.validate().is_ok());
        assert!(GameConfig {
            batch_size: 1,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(GameConfig { bits: 1, ..ok.clone() }.validate().is_err());
        assert!(GameConfig {
            epochs: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(GameConfig {
            calibration_lr: f64::NAN,
            ..ok
        }
        .validate()
        .is_err());
    }

    fn row(delta_g: f64, delta_q: f64, loss_cal: f64) -> TraceRow {
        TraceRow {
            iter: 0,
            epoch: 0,
            loss_gen: 0.7,
            loss_cal,
            h_info_pre_g: 1.0,
            h_info_post_g: 1.0 + delta_g,
            delta_g,
            h_info_pre_q: 1.0,
            h_info_post_q: 1.0 + delta_q,
            delta_q,
            n_disagree: 4,
            n_agree: 10,
            n_teacher_wrong: 2,
            hprime_min: 0.0,
            hprime_mean: 0.5,
            hprime_max: 1.0,
            n_in_margin: 8,
        }
    }

    #[test]
    fn report_on_constant_trace() {
        let trace = GameTrace {
            rows: vec![row(0.02, 0.03, 0.3); 10],
        };
        let r = equilibrium_report(&trace, 4).unwrap();
        assert!((r.mean_delta_g - 0.02).abs() < 1e-15);
        assert!((r.mean_delta_q - 0.03).abs() < 1e-15);
        assert!((r.mean_delta_sum - 0.05).abs() < 1e-15);
        assert_eq!(r.margin_fraction, 0.5);
        assert!(!r.equilibrium && !r.underfit && !r.overfit);
    }

    #[test]
    fn report_on_cancelling_trace() {
        let rows = (0..8).map(|i| row(-0.01 * i as f64, 0.01 * i as f64, 0.3)).collect();
        let r = equilibrium_report(&GameTrace { rows }, 8).unwrap();
        assert!(r.mean_delta_sum.abs() < 1e-15);
        assert!(r.equilibrium);
    }

    #[test]
    fn report_flags_and_errors() {
        let flat_high = GameTrace {
            rows: vec![row(0.01, 0.0, 0.9); 6],
        };
        assert!(equilibrium_report(&flat_high, 6).unwrap().underfit);
        let mut collapsed = flat_high.clone();
        collapsed.rows.iter_mut().for_each(|r| r.loss_gen = 0.0);
        assert!(equilibrium_report(&collapsed, 3).unwrap().overfit);
        assert!(equilibrium_report(&GameTrace::default(), 1).is_err());
        assert!(equilibrium_report(&flat_high, 7).is_err());
    }
}
