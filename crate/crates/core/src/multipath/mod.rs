//! Two-pathway assembly: a fixed full-size Fast pathway, an adaptive Slow
//! pathway and lateral fusion whose Fast block is pinned to the last `2βC`
//! input channels of each post-fusion Slow convolution.

use ndarray::{Array2, Array5};
use rand::Rng;

use crate::configspace::{ArchSpec, LayerKind, LayerSpec};
use crate::error::{A3dError, Result};
use crate::nn::ops::{
    concat_channels, frame_indices, global_avg_pool, global_avg_pool_backward, resize_spatial, resize_spatial_backward,
    select_frames, select_frames_backward, split_channels,
};
use crate::nn::ParamStore;
use crate::real::Real;
use crate::slimnet::{Backbone, Ctx, Head, Output, SlimConv3d, StageTape, UnitTape};

/// Lateral connection at one stage boundary: a `5×1²` convolution with
/// temporal stride α mapping `βC` Fast channels to `2βC`, never slimmed.
#[derive(Debug, Clone)]
pub struct FusionBlock {
    pub boundary: usize,
    pub conv: SlimConv3d,
}

#[derive(Debug, Clone)]
pub struct FuseTape<T> {
    fast: Array5<T>,
    conv_dim: (usize, usize, usize, usize, usize),
    frames: Vec<usize>,
    slow_channels: usize,
}

impl FusionBlock {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, boundary: usize, fast_channels: usize, alpha: usize, rng: &mut R) -> Self {
        let mut spec = LayerSpec::conv([5, 1, 1], fast_channels, 2 * fast_channels, [alpha, 1, 1], false);
        spec.kind = LayerKind::FusionConv;
        spec.bias = true;
        let conv = SlimConv3d::new(store, &format!("fuse.{boundary}"), spec, rng);
        Self { boundary, conv }
    }

    pub fn out_channels(&self) -> usize {
        self.conv.spec.out_channels
    }
}

/// Fuses Fast features onto Slow features: strided conv, bilinear resize to the
/// Slow spatial size, temporal index selection to the Slow frame count, then
/// channel concatenation `[slow | fast']`.
pub fn fuse<T: Real>(store: &ParamStore<T>, block: &FusionBlock, fast: &Array5<T>, slow: Array5<T>, record: bool) -> Result<(Array5<T>, Option<FuseTape<T>>)> {
    let (bs, cs, ts, hs, ws) = slow.dim();
    if fast.dim().0 != bs {
        return Err(A3dError::Shape(format!("fusion batch mismatch: {} vs {bs}", fast.dim().0)));
    }
    let lat = block.conv.forward(store, fast, 1.0)?;
    let conv_dim = lat.dim();
    let lat = resize_spatial(lat.view(), hs, ws);
    let frames = frame_indices(conv_dim.2, ts.max(1));
    let lat = select_frames(lat.view(), &frames);
    let out = concat_channels(&slow, &lat);
    let tape = record.then(|| FuseTape {
        fast: fast.clone(),
        conv_dim,
        frames,
        slow_channels: cs,
    });
    Ok((out, tape))
}

/// Splits the fused gradient; returns `(d_slow, d_fast)`.
pub fn fuse_backward<T: Real>(store: &ParamStore<T>, grads: &mut ParamStore<T>, block: &FusionBlock, tape: &FuseTape<T>, d: &Array5<T>) -> Result<(Array5<T>, Array5<T>)> {
    let (dslow, dlat) = split_channels(d, tape.slow_channels);
    let (_, _, t, h, w) = tape.conv_dim;
    let dlat = select_frames_backward(&dlat, &tape.frames, t);
    let dlat = resize_spatial_backward(&dlat, h, w);
    let dfast = block
        .conv
        .backward(store, grads, &tape.fast, 1.0, &dlat, true)?
        .expect("dx requested");
    Ok((dslow, dfast))
}

/// Adaptive Slow pathway plus fixed Fast pathway with lateral fusion and a joint head.
#[derive(Debug, Clone)]
pub struct TwoPathwayNet {
    pub slow: Backbone,
    pub fast: Backbone,
    pub fusions: Vec<FusionBlock>,
    pub head: Head,
    pub num_norms: usize,
}

#[derive(Debug, Clone)]
pub struct TwoPathwayTape<T> {
    slow_stem: UnitTape<T>,
    fast_stem: UnitTape<T>,
    slow_stages: Vec<StageTape<T>>,
    fast_stages: Vec<StageTape<T>>,
    fuses: Vec<Option<FuseTape<T>>>,
    slow_dim: (usize, usize, usize, usize, usize),
    fast_dim: (usize, usize, usize, usize, usize),
    pooled: Array2<T>,
    gamma_w: f64,
}

impl TwoPathwayNet {
    pub fn build<T: Real, R: Rng>(store: &mut ParamStore<T>, arch: &ArchSpec, rng: &mut R) -> Result<Self> {
        if !arch.is_two_pathway() {
            return Err(A3dError::InvalidArch(format!("'{}' has a single pathway", arch.name)));
        }
        arch.validate()?;
        let stages = arch.boundary_shapes(0)?.len() - 1;
        let mut laterals = vec![0; stages];
        for &b in &arch.fusion_points {
            laterals[b] = arch.lateral_channels(b)?;
        }
        let mut bn_index = 0;
        let slow = Backbone::build(store, arch, 0, &laterals, &mut bn_index, rng)?;
        let fast = Backbone::build(store, arch, 1, &[], &mut bn_index, rng)?;
        let fusions = arch
            .fusion_points
            .iter()
            .map(|&b| FusionBlock::new(store, b, fast.boundary_channels[b], arch.alpha, rng))
            .collect();
        let head = Head::new(
            store,
            slow.out_channels() + fast.out_channels(),
            fast.out_channels(),
            arch.num_classes,
            rng,
        );
        Ok(Self {
            slow,
            fast,
            fusions,
            head,
            num_norms: bn_index,
        })
    }

    fn fusion_at(&self, boundary: usize) -> Option<&FusionBlock> {
        self.fusions.iter().find(|f| f.boundary == boundary)
    }

    /// Runs both pathways. `slow_x` is already resampled to the configuration;
    /// `fast_x` is the full clip.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        slow_x: &Array5<T>,
        fast_x: &Array5<T>,
        gamma_w: f64,
        ctx: &mut Ctx,
    ) -> Result<(Output<T>, Option<TwoPathwayTape<T>>)> {
        let record = ctx.records();
        let (mut f, fast_stem) = self.fast.forward_stem(store, fast_x, 1.0, ctx)?;
        let (mut s, slow_stem) = self.slow.forward_stem(store, slow_x, gamma_w, ctx)?;
        let n = self.slow.stages.len();
        let (mut slow_stages, mut fast_stages, mut fuses) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..n {
            let mut ft = None;
            if let Some(block) = self.fusion_at(i) {
                let (fused, t) = fuse(store, block, &f, s, record)?;
                s = fused;
                ft = t;
            }
            fuses.push(ft);
            let (y, t) = self.slow.forward_stage(i, store, s, gamma_w, ctx)?;
            slow_stages.extend(t);
            s = y;
            let (y, t) = self.fast.forward_stage(i, store, f, 1.0, ctx)?;
            fast_stages.extend(t);
            f = y;
        }
        let pooled = concat_pooled(&global_avg_pool(&s), &global_avg_pool(&f));
        let logits = self.head.forward(store, &pooled, gamma_w)?;
        let tape = match (slow_stem, fast_stem) {
            (Some(slow_stem), Some(fast_stem)) => Some(TwoPathwayTape {
                slow_stem,
                fast_stem,
                slow_stages,
                fast_stages,
                fuses,
                slow_dim: s.dim(),
                fast_dim: f.dim(),
                pooled,
                gamma_w,
            }),
            _ => None,
        };
        Ok((Output { logits, features: s }, tape))
    }

    pub fn backward<T: Real>(&self, store: &ParamStore<T>, grads: &mut ParamStore<T>, tape: &TwoPathwayTape<T>, dlogits: &Array2<T>) -> Result<()> {
        let gw = tape.gamma_w;
        let dpooled = self.head.backward(store, grads, &tape.pooled, dlogits, gw);
        let cs = tape.slow_dim.1;
        let dps = dpooled.slice(ndarray::s![.., ..cs]).to_owned();
        let dpf = dpooled.slice(ndarray::s![.., cs..]).to_owned();
        let mut ds = global_avg_pool_backward(&dps, tape.slow_dim);
        let mut df = global_avg_pool_backward(&dpf, tape.fast_dim);
        for i in (0..self.slow.stages.len()).rev() {
            ds = self.slow.backward_stage(i, store, grads, &tape.slow_stages[i], ds, gw)?;
            df = self.fast.backward_stage(i, store, grads, &tape.fast_stages[i], df, 1.0)?;
            if let (Some(block), Some(ft)) = (self.fusion_at(i), &tape.fuses[i]) {
                let (dslow, dfast) = fuse_backward(store, grads, block, ft, &ds)?;
                ds = dslow;
                df += &dfast;
            }
        }
        self.slow.backward_stem(store, grads, &tape.slow_stem, ds, gw)?;
        self.fast.backward_stem(store, grads, &tape.fast_stem, df, 1.0)
    }
}

fn concat_pooled<T: Real>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()]).expect("equal batch")
}
