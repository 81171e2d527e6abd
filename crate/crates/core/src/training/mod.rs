//! Mutual training with spatial-temporal distillation and its baselines.

mod loss;
mod optim;
mod resample;
mod step;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{s, Array5, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{cross_entropy, kl_divergence, std_loss, top_k_correct, StdLoss};
pub use optim::{Schedule, Sgd};
pub use resample::{resample_clip, ResamplePlan};
pub use step::{
    multires_baseline_step, mutual_gradients, mutual_train_step, plain_gradients, plain_train_step, LossTerm, MutualOptions,
    StepRecord, TermKind, TermMask, TrainState,
};

use crate::configspace::{ArchSpec, ComputeRange, Configuration, SpatialLevel, TemporalLevel};
use crate::data::{ChannelNorm, Dataset, SynthSpec};
use crate::error::{A3dError, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Sandwich sampling with distillation.
    A3d,
    /// Cross-entropy at one fixed configuration.
    Independent,
    /// One full-width network per step at a random resolution.
    Multires,
    /// A3D with γt pinned to 1 and widened width/spatial grids.
    A3dNoTemporal,
}

impl std::str::FromStr for TrainMode {
    type Err = A3dError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a3d" => Ok(Self::A3d),
            "independent" => Ok(Self::Independent),
            "multires" => Ok(Self::Multires),
            "a3d_no_temporal" => Ok(Self::A3dNoTemporal),
            other => Err(A3dError::InvalidConfig(format!(
                "unknown mode '{other}' (expected a3d, independent, multires or a3d_no_temporal)"
            ))),
        }
    }
}

/// Where training and validation clips come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthSpec),
    Archive { train: PathBuf, val: PathBuf },
    Folder { train: PathBuf, val: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth(SynthSpec::default())
    }
}

/// Post-training calibration stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub batches: usize,
    pub batch_size: usize,
    pub passes: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            batches: 32,
            batch_size: 32,
            passes: 2,
        }
    }
}

/// A training run, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: TrainMode,
    /// Preset name or path to an architecture file.
    pub arch: String,
    /// Compute range preset: `0.016`, `0.06` or `full`.
    pub range: String,
    /// Fixed configuration `γw,γs,γt` for independent mode.
    pub config: String,
    pub epochs: usize,
    pub batch_size: usize,
    /// Base learning rate; defaults to `0.1 · batch_size / 64`.
    pub lr: Option<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub shared_draw: bool,
    /// Random horizontal flips and temporal window offsets.
    pub augment: bool,
    pub seed: u64,
    pub data: DataSource,
    pub calibration: CalibrationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::A3d,
            arch: "toy_slow".into(),
            range: "0.016".into(),
            config: "1,1,1".into(),
            epochs: 30,
            batch_size: 32,
            lr: None,
            momentum: 0.9,
            weight_decay: 1e-4,
            schedule: Schedule::Cosine,
            shared_draw: false,
            augment: true,
            seed: 0,
            data: DataSource::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(A3dError::InvalidConfig(m));
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return fail(format!("lr must be positive, got {lr}"));
            }
        }
        if self.calibration.batches == 0 || self.calibration.passes == 0 || self.calibration.batch_size == 0 {
            return fail("calibration batches, batch_size and passes must be positive".into());
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate()?;
        }
        self.fixed_config()?;
        let arch = self.resolve_arch()?;
        self.compute_range(&arch)?;
        Ok(())
    }

    pub fn base_lr(&self) -> f64 {
        self.lr.unwrap_or(0.1 * self.batch_size as f64 / 64.0)
    }

    pub fn fixed_config(&self) -> Result<Configuration> {
        self.config.parse()
    }

    pub fn resolve_arch(&self) -> Result<ArchSpec> {
        ArchSpec::resolve(&self.arch)
    }

    /// The range training samples from; independent mode uses its single configuration.
    pub fn compute_range(&self, arch: &ArchSpec) -> Result<ComputeRange> {
        let (crop, frames) = (arch.base_spatial, arch.base_frames);
        let range = ComputeRange::preset(&self.range, crop, frames)?;
        match self.mode {
            TrainMode::A3d | TrainMode::Multires => Ok(range),
            TrainMode::A3dNoTemporal => range.without_temporal(crop, frames),
            TrainMode::Independent => {
                let c = self.fixed_config()?;
                Ok(ComputeRange {
                    rho: 1.0 / c.reduction_factor(),
                    width_grid: vec![c.gamma_w],
                    spatial_grid: vec![SpatialLevel {
                        gamma: c.gamma_s,
                        pixels: c.pixels(crop),
                    }],
                    temporal_grid: vec![TemporalLevel {
                        gamma: c.gamma_t,
                        frames: c.frames(frames),
                    }],
                })
            }
        }
    }

    /// Loads the training and validation splits.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        match &self.data {
            DataSource::Synth(spec) => crate::data::generate_synth(spec),
            DataSource::Archive { train, val } => Ok((crate::data::read_archive(train)?.0, crate::data::read_archive(val)?.0)),
            DataSource::Folder { train, val } => {
                let arch = self.resolve_arch()?;
                let (t, s) = (arch.input_frames(), arch.base_spatial);
                Ok((
                    crate::data::load_clip_folder(train, t, s)?.data,
                    crate::data::load_clip_folder(val, t, s)?.data,
                ))
            }
        }
    }

    /// Seed after the `A3D_SEED` environment override.
    pub fn effective_seed(&self) -> Result<u64> {
        match std::env::var("A3D_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| A3dError::InvalidConfig(format!("A3D_SEED must be an unsigned integer, got '{v}'"))),
            Err(_) => Ok(self.seed),
        }
    }
}

/// Per-epoch training metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub ce: f64,
    pub kl_mean: f64,
    pub train_acc_full: f64,
}

pub const METRICS_HEADER: [&str; 5] = ["epoch", "lr", "ce", "kl_mean", "train_acc_full"];

pub fn write_metrics_csv<W: std::io::Write>(out: W, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            format!("{:.6e}", r.lr),
            format!("{:.6}", r.ce),
            format!("{:.6}", r.kl_mean),
            format!("{:.4}", r.train_acc_full),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// How often each factor value was run during training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleHistogram {
    pub gamma_w: BTreeMap<String, u64>,
    pub gamma_s: BTreeMap<String, u64>,
    pub gamma_t: BTreeMap<String, u64>,
}

impl SampleHistogram {
    pub fn record(&mut self, c: &Configuration) {
        let bucket = (c.gamma_w * 10.0).floor().min(9.0) / 10.0;
        let close = if bucket >= 0.9 { ']' } else { ')' };
        *self.gamma_w.entry(format!("[{bucket:.1},{:.1}{close}", bucket + 0.1)).or_default() += 1;
        *self.gamma_s.entry(format!("{}", c.gamma_s)).or_default() += 1;
        *self.gamma_t.entry(format!("{}", c.gamma_t)).or_default() += 1;
    }
}

/// Training progress that survives a checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub metrics: Vec<EpochMetrics>,
    pub histogram: SampleHistogram,
}

/// Runs `cfg` over `train` from an initial or resumed state.
pub struct Trainer {
    pub cfg: RunConfig,
    pub arch: ArchSpec,
    pub range: ComputeRange,
    pub seed: u64,
    pub state: TrainState<f32>,
    pub log: TrainLog,
}

impl Trainer {
    /// Fresh model initialized from the run seed, normalized on `train`.
    pub fn new(cfg: RunConfig, train: &Dataset) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.effective_seed()?;
        let arch = cfg.resolve_arch()?;
        let range = cfg.compute_range(&arch)?;
        let mut model = Model::new(arch.clone(), seed)?;
        model.norm = ChannelNorm::fit(train);
        let state = TrainState::new(model, cfg.momentum, cfg.weight_decay);
        Ok(Self {
            cfg,
            arch,
            range,
            seed,
            state,
            log: TrainLog::default(),
        })
    }

    /// Continues from a saved state.
    pub fn resume(cfg: RunConfig, state: TrainState<f32>, log: TrainLog) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.effective_seed()?;
        let arch = state.model.arch.clone();
        let range = cfg.compute_range(&arch)?;
        Ok(Self {
            cfg,
            arch,
            range,
            seed,
            state,
            log,
        })
    }

    pub fn done(&self) -> bool {
        self.state.epoch >= self.cfg.epochs
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64 + 1);
        rng
    }

    /// One pass over `train` in a seed-determined order.
    pub fn run_epoch(&mut self, train: &Dataset) -> Result<EpochMetrics> {
        let clip_frames = self.state.model.clip_frames();
        if train.frames() < clip_frames {
            return Err(A3dError::Shape(format!(
                "training videos have {} frames, the model needs {clip_frames}",
                train.frames()
            )));
        }
        let epoch = self.state.epoch;
        let mut rng = self.epoch_rng(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let bs = self.cfg.batch_size;
        let batches: Vec<&[usize]> = order.chunks(bs).filter(|b| b.len() >= 2).collect();
        let steps_per_epoch = batches.len().max(1) as f64;
        let total = self.cfg.epochs as f64 * steps_per_epoch;
        let base = self.cfg.base_lr();
        let (mut ce, mut kl, mut kl_n, mut correct, mut seen) = (0.0, 0.0, 0usize, 0usize, 0usize);
        let mut lr = base;
        for (k, idx) in batches.iter().enumerate() {
            let (clip, labels) = self.augmented_batch(train, idx, clip_frames, &mut rng);
            lr = self.cfg.schedule.lr(base, (epoch as f64 * steps_per_epoch + k as f64) / total);
            let record = match self.cfg.mode {
                TrainMode::A3d | TrainMode::A3dNoTemporal => {
                    let opts = MutualOptions {
                        shared_draw: self.cfg.shared_draw,
                        mask: TermMask::default(),
                    };
                    mutual_train_step(&mut self.state, &clip, &labels, &self.range, &mut rng, lr, opts)?
                }
                TrainMode::Independent => {
                    let c = self.cfg.fixed_config()?;
                    plain_train_step(&mut self.state, &clip, &labels, &c, lr)?
                }
                TrainMode::Multires => multires_baseline_step(&mut self.state, &clip, &labels, &self.range, &mut rng, lr)?,
            };
            for c in record.configs() {
                self.log.histogram.record(c);
            }
            ce += record.ce();
            for v in record.kl() {
                kl += v;
                kl_n += 1;
            }
            correct += record.correct;
            seen += record.batch;
        }
        let n = batches.len().max(1) as f64;
        let metrics = EpochMetrics {
            epoch,
            lr,
            ce: ce / n,
            kl_mean: if kl_n > 0 { kl / kl_n as f64 } else { 0.0 },
            train_acc_full: correct as f64 / seen.max(1) as f64,
        };
        log::info!(
            "epoch {epoch}: lr {:.4} ce {:.4} kl {:.4} acc {:.3}",
            metrics.lr,
            metrics.ce,
            metrics.kl_mean,
            metrics.train_acc_full
        );
        self.state.epoch += 1;
        self.log.metrics.push(metrics.clone());
        Ok(metrics)
    }

    fn augmented_batch<R: Rng>(&self, train: &Dataset, idx: &[usize], frames: usize, rng: &mut R) -> (Array5<f32>, Vec<usize>) {
        let slack = train.frames() - frames;
        if !self.cfg.augment {
            let b = train.center_clips(idx, frames);
            return (b.data, b.labels);
        }
        let starts: Vec<usize> = idx.iter().map(|_| rng.random_range(0..=slack)).collect();
        let mut b = train.windows(idx, &starts, frames);
        for mut clip in b.data.axis_iter_mut(Axis(0)) {
            if rng.random_bool(0.5) {
                let flipped = clip.slice(s![.., .., .., ..;-1]).to_owned();
                clip.assign(&flipped);
            }
        }
        (b.data, b.labels)
    }

    /// Runs the remaining epochs, calling `after_epoch` after each one.
    pub fn run(&mut self, train: &Dataset, mut after_epoch: impl FnMut(&Trainer) -> Result<()>) -> Result<()> {
        while !self.done() {
            self.run_epoch(train)?;
            after_epoch(self)?;
        }
        Ok(())
    }
}
