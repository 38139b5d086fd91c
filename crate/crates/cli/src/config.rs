use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use adadfq::adaptability::GameHyperparams;
use adadfq::data::{self, Dataset};
use adadfq::game::GameConfig;
use adadfq::nn::{Architecture, GeneratorShape, TrainSettings};

use crate::audit;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Blobs,
    Rings,
    Csv,
}

/// Every knob of every command. Missing keys take the defaults below;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    /// Feature file for `dataset = "csv"`.
    pub csv_path: Option<PathBuf>,
    pub label_column: String,

    pub hidden: Vec<usize>,
    pub teacher_epochs: usize,
    pub teacher_batch_size: usize,
    pub teacher_lr: f64,

    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    pub generator_lr: f64,
    pub generator_beta1: f64,
    pub generator_beta2: f64,
    pub calibration_lr: f64,
    pub calibration_momentum: f64,
    pub calibration_weight_decay: f64,
    pub calibration_ce_weight: f64,
    pub alpha_ds: f64,
    pub alpha_as: f64,
    pub lambda_l: f64,
    pub lambda_u: f64,
    pub beta: f64,
    pub gamma: f64,
    pub noise_dim: usize,
    pub embed_dim: usize,
    pub generator_hidden: [usize; 2],

    pub seed: u64,
    pub bits: u32,
    pub out_dir: PathBuf,
    /// Generated samples written by `dfq`.
    pub sample_count: usize,
    /// Fraction of the trace summarized by the equilibrium report.
    pub report_window: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let game = GameConfig::default();
        let hp = GameHyperparams::default();
        let gen = GeneratorShape::default();
        let train = TrainSettings::default();
        RunConfig {
            dataset: DatasetKind::Blobs,
            classes: 4,
            per_class: 500,
            dim: 8,
            spread: 1.0,
            csv_path: None,
            label_column: "label".into(),
            hidden: vec![16; 8],
            teacher_epochs: train.epochs,
            teacher_batch_size: train.batch_size,
            teacher_lr: train.lr,
            epochs: game.epochs,
            iterations_per_epoch: game.iterations_per_epoch,
            batch_size: game.batch_size,
            generator_lr: game.generator_lr,
            generator_beta1: game.generator_betas.0,
            generator_beta2: game.generator_betas.1,
            calibration_lr: game.calibration_lr,
            calibration_momentum: game.calibration_momentum,
            calibration_weight_decay: game.calibration_weight_decay,
            calibration_ce_weight: game.calibration_ce_weight,
            alpha_ds: hp.alpha_ds,
            alpha_as: hp.alpha_as,
            lambda_l: hp.lambda_l,
            lambda_u: hp.lambda_u,
            beta: hp.beta,
            gamma: hp.gamma,
            noise_dim: gen.noise_dim,
            embed_dim: gen.embed_dim,
            generator_hidden: gen.hidden,
            seed: game.seed,
            bits: game.bits,
            out_dir: PathBuf::from("runs"),
            sample_count: 64,
            report_window: 0.25,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = audit::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.classes < 2 {
            return fail(format!("classes must be at least 2, got {}", self.classes));
        }
        if self.per_class < 3 {
            return fail(format!("per_class must be at least 3, got {}", self.per_class));
        }
        if self.dataset == DatasetKind::Csv && self.csv_path.is_none() {
            return fail("dataset = \"csv\" needs csv_path or --dataset".into());
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be positive".into());
        }
        if self.teacher_epochs == 0 || self.teacher_batch_size < 2 || !(self.teacher_lr > 0.0) {
            return fail("teacher training needs epochs > 0, batch ≥ 2 and lr > 0".into());
        }
        if !(self.report_window > 0.0 && self.report_window <= 1.0) {
            return fail(format!("report_window must lie in (0, 1], got {}", self.report_window));
        }
        if self.sample_count < 2 {
            return fail("sample_count must be at least 2".into());
        }
        self.game().validate()?;
        Ok(())
    }

    pub fn game(&self) -> GameConfig {
        GameConfig {
            epochs: self.epochs,
            iterations_per_epoch: self.iterations_per_epoch,
            batch_size: self.batch_size,
            generator_lr: self.generator_lr,
            generator_betas: (self.generator_beta1, self.generator_beta2),
            calibration_lr: self.calibration_lr,
            calibration_momentum: self.calibration_momentum,
            calibration_weight_decay: self.calibration_weight_decay,
            calibration_ce_weight: self.calibration_ce_weight,
            hyper: GameHyperparams {
                alpha_ds: self.alpha_ds,
                alpha_as: self.alpha_as,
                lambda_l: self.lambda_l,
                lambda_u: self.lambda_u,
                beta: self.beta,
                gamma: self.gamma,
            },
            generator: GeneratorShape {
                noise_dim: self.noise_dim,
                embed_dim: self.embed_dim,
                hidden: self.generator_hidden,
            },
            seed: self.seed,
            bits: self.bits,
        }
    }

    pub fn architecture(&self, input_dim: usize, classes: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden: self.hidden.clone(),
            output_dim: classes,
        }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.teacher_epochs,
            batch_size: self.teacher_batch_size,
            lr: self.teacher_lr,
        }
    }

    /// Builds or loads the configured dataset. CSV files go through the
    /// audited reader.
    pub fn dataset(&self) -> Result<Dataset, CliError> {
        match self.dataset {
            DatasetKind::Blobs => Ok(data::make_blobs(
                self.classes,
                self.per_class,
                self.dim,
                self.spread,
                self.seed,
            )?),
            DatasetKind::Rings => Ok(data::make_rings(self.classes, self.per_class, self.seed)?),
            DatasetKind::Csv => {
                let path = self.csv_path.as_ref().expect("validated");
                let bytes = audit::read(path)?;
                Ok(data::parse_csv(&bytes, path, &self.label_column)?)
            }
        }
    }

    /// SHA-256 of the canonical JSON form. The output directory is left out
    /// so the same run written to two places hashes the same.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
