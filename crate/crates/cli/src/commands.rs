use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use adadfq::adaptability::{l1_similarity_matrix, AdaptabilityBatch};
use adadfq::data::{one_hot, Dataset, SeededRng, Stream};
use adadfq::game::{equilibrium_report, EquilibriumReport, Game};
use adadfq::nn::{accuracy, argmax, train_classifier, Mlp};
use adadfq::quant::{build_quantized_student, QuantSpec};
use adadfq::tensor::Tensor;

use crate::audit;
use crate::checkpoint::{Checkpoint, Metadata};
use crate::config::{DatasetKind, RunConfig};
use crate::error::CliError;
use crate::output::{csv_text, fmt_f64, write_atomic, write_json, TraceWriter};

pub const TEACHER_CKPT: &str = "teacher.ckpt";
pub const TEACHER_METRICS: &str = "teacher_metrics.json";
pub const NAIVE_CKPT: &str = "q_naive.ckpt";
pub const QUANTIZE_REPORT: &str = "quantize_report.json";
pub const STUDENT_CKPT: &str = "q.ckpt";
pub const TRACE_CSV: &str = "trace.csv";
pub const EQUILIBRIUM_JSON: &str = "equilibrium.json";
pub const SIMILARITY_CSV: &str = "similarity.csv";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const EVAL_JSON: &str = "eval.json";

/// Sample dumps use noise drawn from `seed + SAMPLE_SEED_OFFSET` so they
/// never replay the game's own batches.
pub const SAMPLE_SEED_OFFSET: u64 = 1 << 32;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub bits: Option<u32>,
    pub out_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

pub fn resolve_config(file: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match file {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(b) = ov.bits {
        cfg.bits = b;
    }
    if let Some(d) = &ov.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(d) = &ov.dataset {
        cfg.dataset = DatasetKind::Csv;
        cfg.csv_path = Some(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherMetrics {
    pub dataset: String,
    pub seed: u64,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub loss_history: Vec<f64>,
    pub config_hash: String,
}

pub fn train_teacher(cfg: &RunConfig) -> Result<TeacherMetrics, CliError> {
    let data = cfg.dataset()?;
    let root = SeededRng::new(cfg.seed);
    let arch = cfg.architecture(data.input_dim(), data.num_classes);
    let mut teacher = Mlp::new(arch, &mut root.substream(Stream::Init))?;
    log::info!("training teacher on {} ({} samples)", data.provenance, data.train.len());
    let loss_history = train_classifier(
        &mut teacher,
        &data.train.features,
        &data.train.labels,
        &cfg.train_settings(),
        &mut root.substream(Stream::Shuffle),
    )?;
    let metrics = TeacherMetrics {
        dataset: data.provenance.clone(),
        seed: cfg.seed,
        epochs: cfg.teacher_epochs,
        train_accuracy: accuracy(&teacher, &data.train.features, &data.train.labels)?,
        test_accuracy: accuracy(&teacher, &data.test.features, &data.test.labels)?,
        loss_history,
        config_hash: cfg.hash(),
    };
    let meta = Metadata {
        kind: "teacher".into(),
        seed: cfg.seed,
        epochs: cfg.teacher_epochs,
        config_hash: cfg.hash(),
        dataset: data.provenance,
    };
    Checkpoint::new(&teacher, meta).save(&cfg.out_dir.join(TEACHER_CKPT))?;
    write_json(&cfg.out_dir.join(TEACHER_METRICS), &metrics)?;
    log::info!("teacher test accuracy {:.4}", metrics.test_accuracy);
    Ok(metrics)
}

fn check_compatible(net: &Mlp, data: &Dataset) -> Result<(), CliError> {
    if net.output_dim() != data.num_classes || net.input_dim() != data.input_dim() {
        return Err(CliError::Config(format!(
            "network maps {} features to {} classes but the dataset has {} features and {} classes",
            net.input_dim(),
            net.output_dim(),
            data.input_dim(),
            data.num_classes
        )));
    }
    Ok(())
}

fn load_teacher(path: &Path) -> Result<Checkpoint, CliError> {
    let ck = Checkpoint::load(path)?;
    if ck.net.quantization().is_some() {
        return Err(CliError::Config(format!(
            "{} holds a quantized network, not a teacher",
            path.display()
        )));
    }
    Ok(ck)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizeReport {
    pub bits: u32,
    pub teacher_accuracy: f64,
    pub student_accuracy: f64,
    pub accuracy_drop: f64,
}

pub fn quantize(cfg: &RunConfig, teacher_ckpt: &Path) -> Result<QuantizeReport, CliError> {
    let spec = QuantSpec::new(cfg.bits)?;
    let teacher = load_teacher(teacher_ckpt)?;
    let data = cfg.dataset()?;
    check_compatible(&teacher.net, &data)?;
    let student = build_quantized_student(&teacher.net, spec)?;
    let teacher_accuracy = accuracy(&teacher.net, &data.test.features, &data.test.labels)?;
    let student_accuracy = accuracy(&student, &data.test.features, &data.test.labels)?;
    let report = QuantizeReport {
        bits: cfg.bits,
        teacher_accuracy,
        student_accuracy,
        accuracy_drop: teacher_accuracy - student_accuracy,
    };
    let meta = Metadata {
        kind: "student".into(),
        config_hash: cfg.hash(),
        ..teacher.metadata
    };
    Checkpoint::new(&student, meta).save(&cfg.out_dir.join(NAIVE_CKPT))?;
    write_json(&cfg.out_dir.join(QUANTIZE_REPORT), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfqSummary {
    pub iterations: usize,
    pub margin_fraction_first: f64,
    pub margin_fraction_last: f64,
    pub report: EquilibriumReport,
}

/// Plays the game from a teacher checkpoint alone. Nothing but the
/// checkpoint is read.
pub fn dfq(cfg: &RunConfig, teacher_ckpt: &Path) -> Result<DfqSummary, CliError> {
    let teacher = load_teacher(teacher_ckpt)?;
    let student = build_quantized_student(&teacher.net, QuantSpec::new(cfg.bits)?)?;
    let mut game = Game::new(&teacher.net, student, cfg.game())?;
    let out = &cfg.out_dir;

    let mut writer = TraceWriter::create(&out.join(TRACE_CSV))?;
    log::info!("playing {} iterations", cfg.game().total_iterations());
    let trace = game.run_with(|row| writer.row(row))?;
    writer.finish()?;

    let n = trace.len();
    let window = ((n as f64 * cfg.report_window).ceil() as usize).clamp(1, n);
    let summary = DfqSummary {
        iterations: n,
        margin_fraction_first: trace.margin_fraction(0..window),
        margin_fraction_last: trace.margin_fraction(n - window..n),
        report: equilibrium_report(&trace, window)?,
    };
    write_json(&out.join(EQUILIBRIUM_JSON), &summary)?;

    let (x, labels) = game.sample(cfg.sample_count, cfg.seed.wrapping_add(SAMPLE_SEED_OFFSET))?;
    write_atomic(&out.join(SAMPLES_CSV), samples_csv(&x, &labels).as_bytes())?;
    let sim = similarity(&teacher.net, &game.student, &x)?;
    write_atomic(&out.join(SIMILARITY_CSV), matrix_csv(&sim).as_bytes())?;

    let meta = Metadata {
        kind: "student".into(),
        epochs: cfg.epochs,
        config_hash: cfg.hash(),
        ..teacher.metadata
    };
    Checkpoint::new(&game.student, meta).save(&out.join(STUDENT_CKPT))?;
    Ok(summary)
}

pub fn samples_csv(x: &Tensor, labels: &[usize]) -> String {
    let mut header: Vec<String> = (0..x.cols()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    let rows = (0..x.rows()).map(|i| {
        let mut r: Vec<String> = x.row(i).iter().map(|v| fmt_f64(*v)).collect();
        r.push(labels[i].to_string());
        r
    });
    csv_text(&header, rows)
}

pub fn matrix_csv(m: &[Vec<f64>]) -> String {
    let header: Vec<String> = (0..m.len()).map(|j| format!("s{j}")).collect();
    csv_text(&header, m.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()))
}

/// Pairwise ℓ1 distances between the samples' `p_ds` vectors.
pub fn similarity(teacher: &Mlp, student: &Mlp, x: &Tensor) -> Result<Vec<Vec<f64>>, CliError> {
    if x.cols() != teacher.input_dim() || x.cols() != student.input_dim() {
        return Err(CliError::Config(format!(
            "samples have {} features, networks expect {} and {}",
            x.cols(),
            teacher.input_dim(),
            student.input_dim()
        )));
    }
    let zp = teacher.predict_logits(x)?;
    let zq = student.predict_logits(x)?;
    if zp.cols() != zq.cols() {
        return Err(CliError::Config(format!(
            "teacher has {} classes, student {}",
            zp.cols(),
            zq.cols()
        )));
    }
    let dummy = one_hot(&vec![0; x.rows()], zp.cols())?;
    let batch = AdaptabilityBatch::compute(&zp, &zq, &dummy)?;
    Ok(l1_similarity_matrix(&batch.p_ds))
}

/// Reads a `samples.csv` dump: numeric feature columns then `label`.
pub fn read_samples(path: &Path) -> Result<(Tensor, Vec<usize>), CliError> {
    let text = audit::read_to_string(path)?;
    let bad = |line: usize, msg: String| CliError::Input {
        path: path.display().to_string(),
        msg: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad(1, "empty file".into()))?
        .split(',')
        .collect();
    if header.last() != Some(&"label") || header.len() < 2 {
        return Err(bad(1, "expected feature columns followed by label".into()));
    }
    let d = header.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(bad(i + 2, format!("{} fields, expected {}", fields.len(), d + 1)));
        }
        for f in &fields[..d] {
            data.push(f.trim().parse::<f64>().map_err(|e| bad(i + 2, format!("{f:?}: {e}")))?);
        }
        labels.push(
            fields[d]
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(i + 2, format!("label: {e}")))?,
        );
    }
    if labels.is_empty() {
        return Err(bad(2, "no samples".into()));
    }
    Ok((Tensor::new(vec![labels.len(), d], data)?, labels))
}

pub fn report_similarity(
    cfg: &RunConfig,
    samples: &Path,
    teacher_ckpt: &Path,
    student_ckpt: &Path,
) -> Result<Vec<Vec<f64>>, CliError> {
    let (x, _) = read_samples(samples)?;
    let teacher = Checkpoint::load(teacher_ckpt)?;
    let student = Checkpoint::load(student_ckpt)?;
    let sim = similarity(&teacher.net, &student.net, &x)?;
    write_atomic(&cfg.out_dir.join(SIMILARITY_CSV), matrix_csv(&sim).as_bytes())?;
    Ok(sim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(net: &Mlp, x: &Tensor, labels: &[usize], classes: usize) -> Result<EvalReport, CliError> {
    let logits = net.predict_logits(x)?;
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (r, &l) in labels.iter().enumerate() {
        confusion[l][argmax(logits.row(r))] += 1;
    }
    let hits: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            if n == 0 {
                0.0
            } else {
                row[c] as f64 / n as f64
            }
        })
        .collect();
    Ok(EvalReport {
        samples: labels.len(),
        accuracy: hits as f64 / labels.len().max(1) as f64,
        per_class_accuracy,
        confusion,
    })
}

pub fn eval(cfg: &RunConfig, ckpt: &Path) -> Result<EvalReport, CliError> {
    let ck = Checkpoint::load(ckpt)?;
    let data = cfg.dataset()?;
    check_compatible(&ck.net, &data)?;
    let report = evaluate(&ck.net, &data.test.features, &data.test.labels, data.num_classes)?;
    write_json(&cfg.out_dir.join(EVAL_JSON), &report)?;
    Ok(report)
}
