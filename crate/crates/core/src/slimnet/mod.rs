//! Slimmable 3-D building blocks and the single-pathway backbone.
//!
//! Every layer stores one full-size parameter set; a configuration with width
//! factor γw runs on the leading `width(C, γw)` channels of each layer.
//! Normalization uses current-batch statistics while training and per-configuration
//! calibrated statistics at inference.

mod backbone;
mod bn;
mod conv;
mod head;

use ndarray::{Array2, Array5};
use rand::Rng;

pub use backbone::{Backbone, BlockTape, ConvBn, ResBlock, StageTape, UnitTape};
pub use bn::{BnStats, BnTape, CalibBn, Ctx, Mode, Moments, StatBank, StatEntry, BN_EPS};
pub use conv::SlimConv3d;
pub use head::Head;

use crate::configspace::ArchSpec;
use crate::error::{A3dError, Result};
use crate::nn::ops::{global_avg_pool, global_avg_pool_backward};
use crate::nn::ParamStore;
use crate::real::Real;

/// Logits plus the final feature map of the adaptive pathway (for CAM).
#[derive(Debug, Clone)]
pub struct Output<T> {
    pub logits: Array2<T>,
    pub features: Array5<T>,
}

/// Single-pathway slimmable network: backbone, global average pool, linear head.
#[derive(Debug, Clone)]
pub struct SlimNet {
    pub backbone: Backbone,
    pub head: Head,
    pub num_norms: usize,
}

#[derive(Debug, Clone)]
pub struct SlimTape<T> {
    stem: UnitTape<T>,
    stages: Vec<StageTape<T>>,
    feat_dim: (usize, usize, usize, usize, usize),
    pooled: Array2<T>,
    gamma_w: f64,
}

impl SlimNet {
    pub fn build<T: Real, R: Rng>(store: &mut ParamStore<T>, arch: &ArchSpec, rng: &mut R) -> Result<Self> {
        if arch.is_two_pathway() {
            return Err(A3dError::InvalidArch(format!("'{}' has two pathways", arch.name)));
        }
        let mut bn_index = 0;
        let backbone = Backbone::build(store, arch, 0, &[], &mut bn_index, rng)?;
        let head = Head::new(store, backbone.out_channels(), 0, arch.num_classes, rng);
        Ok(Self {
            backbone,
            head,
            num_norms: bn_index,
        })
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Array5<T>, gamma_w: f64, ctx: &mut Ctx) -> Result<(Output<T>, Option<SlimTape<T>>)> {
        let (mut h, stem) = self.backbone.forward_stem(store, x, gamma_w, ctx)?;
        let mut stages = Vec::new();
        for i in 0..self.backbone.stages.len() {
            let (y, t) = self.backbone.forward_stage(i, store, h, gamma_w, ctx)?;
            stages.extend(t);
            h = y;
        }
        let pooled = global_avg_pool(&h);
        let logits = self.head.forward(store, &pooled, gamma_w)?;
        let tape = stem.map(|stem| SlimTape {
            stem,
            stages,
            feat_dim: h.dim(),
            pooled,
            gamma_w,
        });
        Ok((Output { logits, features: h }, tape))
    }

    pub fn backward<T: Real>(&self, store: &ParamStore<T>, grads: &mut ParamStore<T>, tape: &SlimTape<T>, dlogits: &Array2<T>) -> Result<()> {
        let gw = tape.gamma_w;
        let dpooled = self.head.backward(store, grads, &tape.pooled, dlogits, gw);
        let mut d = global_avg_pool_backward(&dpooled, tape.feat_dim);
        for i in (0..self.backbone.stages.len()).rev() {
            d = self.backbone.backward_stage(i, store, grads, &tape.stages[i], d, gw)?;
        }
        self.backbone.backward_stem(store, grads, &tape.stem, d, gw)
    }
}
