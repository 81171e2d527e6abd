//! Single optimization steps: mutual training, plain training and naive
//! multi-resolution training.

use ndarray::Array5;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, std_loss, top_k_correct};
use super::optim::Sgd;
use crate::configspace::{sample_training_triple, ComputeRange, Configuration, SampledTriple};
use crate::error::Result;
use crate::model::Model;
use crate::nn::ParamStore;
use crate::real::Real;
use crate::slimnet::Ctx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Ce,
    Kl,
}

/// One loss term of a step and the configuration it was computed at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub kind: TermKind,
    pub config: Configuration,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub terms: Vec<LossTerm>,
    /// Top-1 hits of the network trained with cross-entropy.
    pub correct: usize,
    pub batch: usize,
}

impl StepRecord {
    pub fn ce(&self) -> f64 {
        self.terms.iter().filter(|t| t.kind == TermKind::Ce).map(|t| t.value).sum()
    }

    pub fn kl(&self) -> Vec<f64> {
        self.terms.iter().filter(|t| t.kind == TermKind::Kl).map(|t| t.value).collect()
    }

    pub fn total(&self) -> f64 {
        self.terms.iter().map(|t| t.value).sum()
    }

    pub fn configs(&self) -> impl Iterator<Item = &Configuration> {
        self.terms.iter().map(|t| &t.config)
    }
}

/// Which loss terms contribute gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermMask {
    pub ce: bool,
    pub kl: bool,
}

impl Default for TermMask {
    fn default() -> Self {
        Self { ce: true, kl: true }
    }
}

/// Accumulates into `grads` the distillation-loss gradient for one triple.
///
/// The full network sees the identity-resampled batch and is trained with
/// cross-entropy; each sub-network sees the same clips resampled to its own
/// configuration and is trained towards the detached full-network outputs.
pub fn mutual_gradients<T: Real>(
    model: &Model<T>,
    clip: &Array5<T>,
    labels: &[usize],
    triple: &SampledTriple,
    mask: TermMask,
    grads: &mut ParamStore<T>,
) -> Result<StepRecord> {
    let input = model.input_for(clip, &triple.full)?;
    let (out, tape) = model.forward(&input, &triple.full, &mut Ctx::train())?;
    let full = out.logits;
    drop(input);
    let (ce, d_full) = cross_entropy(&full, labels)?;
    if mask.ce {
        model.backward(grads, tape.as_ref().expect("training tape"), &d_full)?;
    }
    drop(tape);
    let mut terms = vec![LossTerm {
        kind: TermKind::Ce,
        config: triple.full,
        value: ce,
    }];
    for sub in triple.subs() {
        let input = model.input_for(clip, &sub)?;
        let (out, tape) = model.forward(&input, &sub, &mut Ctx::train())?;
        let loss = std_loss(&full, std::slice::from_ref(&out.logits), labels)?;
        if mask.kl {
            model.backward(grads, tape.as_ref().expect("training tape"), &loss.d_subs[0])?;
        }
        terms.push(LossTerm {
            kind: TermKind::Kl,
            config: sub,
            value: loss.kl[0],
        });
    }
    Ok(StepRecord {
        terms,
        correct: top_k_correct(&full, labels, 1),
        batch: labels.len(),
    })
}

/// Accumulates the cross-entropy gradient of configuration `c` into `grads`.
pub fn plain_gradients<T: Real>(model: &Model<T>, clip: &Array5<T>, labels: &[usize], c: &Configuration, grads: &mut ParamStore<T>) -> Result<StepRecord> {
    let input = model.input_for(clip, c)?;
    let (out, tape) = model.forward(&input, c, &mut Ctx::train())?;
    let (ce, d) = cross_entropy(&out.logits, labels)?;
    model.backward(grads, tape.as_ref().expect("training tape"), &d)?;
    Ok(StepRecord {
        terms: vec![LossTerm {
            kind: TermKind::Ce,
            config: *c,
            value: ce,
        }],
        correct: top_k_correct(&out.logits, labels, 1),
        batch: labels.len(),
    })
}

/// Model plus optimizer state and progress counters.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub model: Model<T>,
    pub opt: Sgd<T>,
    pub epoch: usize,
    pub iteration: u64,
}

impl<T: Real> TrainState<T> {
    pub fn new(model: Model<T>, momentum: f64, weight_decay: f64) -> Self {
        let opt = Sgd::new(&model.params, momentum, weight_decay);
        Self {
            model,
            opt,
            epoch: 0,
            iteration: 0,
        }
    }

    fn apply(&mut self, grads: &ParamStore<T>, lr: f64) {
        self.opt.step(&mut self.model.params, grads, lr);
        self.iteration += 1;
    }
}

/// Options of a mutual-training step.
#[derive(Debug, Clone, Copy, Default)]
pub struct MutualOptions {
    /// One (γs, γt) draw shared by both sub-networks.
    pub shared_draw: bool,
    pub mask: TermMask,
}

/// Samples a triple, accumulates the three networks' gradients and takes one
/// optimizer step.
pub fn mutual_train_step<T: Real, R: Rng>(
    state: &mut TrainState<T>,
    clip: &Array5<T>,
    labels: &[usize],
    range: &ComputeRange,
    rng: &mut R,
    lr: f64,
    opts: MutualOptions,
) -> Result<StepRecord> {
    let triple = sample_training_triple(range, rng, opts.shared_draw);
    let mut grads = state.model.params.zeros_like();
    let record = mutual_gradients(&state.model, clip, labels, &triple, opts.mask, &mut grads)?;
    state.apply(&grads, lr);
    Ok(record)
}

/// Cross-entropy step at one fixed configuration.
pub fn plain_train_step<T: Real>(state: &mut TrainState<T>, clip: &Array5<T>, labels: &[usize], c: &Configuration, lr: f64) -> Result<StepRecord> {
    let mut grads = state.model.params.zeros_like();
    let record = plain_gradients(&state.model, clip, labels, c, &mut grads)?;
    state.apply(&grads, lr);
    Ok(record)
}

/// Naive multi-resolution baseline: one full-width network at a spatial and
/// temporal resolution drawn uniformly from the range's grids.
pub fn multires_baseline_step<T: Real, R: Rng>(
    state: &mut TrainState<T>,
    clip: &Array5<T>,
    labels: &[usize],
    range: &ComputeRange,
    rng: &mut R,
    lr: f64,
) -> Result<StepRecord> {
    let s = range.spatial_grid[rng.random_range(0..range.spatial_grid.len())].gamma;
    let t = range.temporal_grid[rng.random_range(0..range.temporal_grid.len())].gamma;
    let c = Configuration::new(1.0, s, t)?;
    plain_train_step(state, clip, labels, &c, lr)
}
