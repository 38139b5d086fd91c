//! Desk experiment: blobs teacher, naive 3-bit student, then the game.
//!
//! `cargo run --release -p adadfq --example desk -- [seed] [epochs] [cal_lr] [bits] [spread] [hidden]`
//!
//! `hidden` is a comma-separated width list. The environment variables
//! `GAMMA`, `BETA`, `GLR`, `LL` and `LU` override the matching game
//! hyperparameters.

use adadfq::data::{make_blobs, SeededRng, Stream};
use adadfq::game::{equilibrium_report, run_game, GameConfig};
use adadfq::nn::{accuracy, train_classifier, Architecture, Mlp, TrainSettings};
use adadfq::quant::{build_quantized_student, QuantSpec};

fn main() -> adadfq::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(400);
    let cal_lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let bits: u32 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(3);
    let spread: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let hidden: Vec<usize> = args
        .get(6)
        .map(|s| s.split(',').map(|v| v.parse().unwrap()).collect())
        .unwrap_or(vec![16; 8]);

    let data = make_blobs(4, 500, 8, spread, seed)?;
    let root = SeededRng::new(seed);
    let mut init = root.substream(Stream::Init);
    let mut teacher = Mlp::new(
        Architecture {
            input_dim: 8,
            hidden,
            output_dim: 4,
        },
        &mut init,
    )?;
    let mut shuffle = root.substream(Stream::Shuffle);
    train_classifier(
        &mut teacher,
        &data.train.features,
        &data.train.labels,
        &TrainSettings::default(),
        &mut shuffle,
    )?;
    let t_acc = accuracy(&teacher, &data.test.features, &data.test.labels)?;
    let student = build_quantized_student(&teacher, QuantSpec::new(bits)?)?;
    let q_acc = accuracy(&student, &data.test.features, &data.test.labels)?;
    println!("teacher {t_acc:.4} naive {q_acc:.4}");

    let mut config = GameConfig {
        epochs,
        seed,
        bits,
        calibration_lr: cal_lr,
        ..Default::default()
    };
    let env = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<f64>().ok());
    if let Some(v) = env("GAMMA") {
        config.hyper.gamma = v;
    }
    if let Some(v) = env("BETA") {
        config.hyper.beta = v;
    }
    if let Some(v) = env("GLR") {
        config.generator_lr = v;
    }
    if let Some(v) = env("LL") {
        config.hyper.lambda_l = v;
    }
    if let Some(v) = env("LU") {
        config.hyper.lambda_u = v;
    }
    let t0 = std::time::Instant::now();
    let out = run_game(&teacher, student, &config)?;
    let c_acc = accuracy(&out.student, &data.test.features, &data.test.labels)?;
    let n = out.trace.len();
    let rep = equilibrium_report(&out.trace, n / 4)?;
    let q = n / 4;
    let avg = |r: std::ops::Range<usize>, f: &dyn Fn(&adadfq::game::TraceRow) -> f64| {
        out.trace.rows[r.clone()].iter().map(f).sum::<f64>() / r.len() as f64
    };
    println!(
        "H pre_g q1 {:.4} q4 {:.4}; loss_gen q1 {:.4} q4 {:.4}; loss_cal q1 {:.4} q4 {:.4}; disagree q4 {:.2}",
        avg(0..q, &|r| r.h_info_pre_g),
        avg(n - q..n, &|r| r.h_info_pre_g),
        avg(0..q, &|r| r.loss_gen),
        avg(n - q..n, &|r| r.loss_gen),
        avg(0..q, &|r| r.loss_cal),
        avg(n - q..n, &|r| r.loss_cal),
        avg(n - q..n, &|r| r.n_disagree as f64),
    );
    println!(
        "calibrated {c_acc:.4} in {:.1}s; ratio {:.3} (dG {:.5} dQ {:.5} sum {:.5}, |dG| {:.5}); margin first {:.3} last {:.3}",
        t0.elapsed().as_secs_f64(),
        rep.zero_sum_ratio,
        rep.mean_delta_g,
        rep.mean_delta_q,
        rep.mean_delta_sum,
        rep.mean_abs_delta_g,
        out.trace.margin_fraction(0..n / 4),
        out.trace.margin_fraction(n - n / 4..n)
    );
    Ok(())
}
