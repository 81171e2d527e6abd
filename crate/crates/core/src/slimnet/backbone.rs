use ndarray::Array5;
use rand::Rng;

use super::bn::{BnTape, CalibBn, Ctx};
use super::conv::SlimConv3d;
use crate::configspace::{ArchSpec, LayerSpec, PathwayBody};
use crate::error::{A3dError, Result};
use crate::nn::ops::{relu_backward, relu_inplace};
use crate::nn::ParamStore;
use crate::real::Real;

/// Convolution followed by normalization and an optional ReLU.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub conv: SlimConv3d,
    pub bn: CalibBn,
}

#[derive(Debug, Clone)]
pub struct UnitTape<T> {
    input: Array5<T>,
    bn: BnTape<T>,
    out: Option<Array5<T>>,
}

impl ConvBn {
    fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, spec: LayerSpec, zero_scale: bool, bn_index: &mut usize, rng: &mut R) -> Self {
        let scalable = spec.width_scalable_out;
        let channels = spec.out_channels;
        let bn_name = if name.ends_with("shortcut") {
            format!("{name}_bn")
        } else {
            name.replace("conv", "bn")
        };
        let conv = SlimConv3d::new(store, name, spec, rng);
        let bn = CalibBn::new(store, &bn_name, channels, scalable, zero_scale, *bn_index);
        *bn_index += 1;
        Self { conv, bn }
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Array5<T>, gamma_w: f64, relu: bool, ctx: &mut Ctx) -> Result<(Array5<T>, Option<UnitTape<T>>)> {
        let y = self.conv.forward(store, x, gamma_w)?;
        let (mut y, bn) = self.bn.forward(store, y, gamma_w, ctx)?;
        if relu {
            relu_inplace(&mut y);
        }
        let tape = bn.map(|bn| UnitTape {
            input: x.clone(),
            bn,
            out: relu.then(|| y.clone()),
        });
        Ok((y, tape))
    }

    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        grads: &mut ParamStore<T>,
        tape: &UnitTape<T>,
        mut dy: Array5<T>,
        gamma_w: f64,
        need_dx: bool,
    ) -> Result<Option<Array5<T>>> {
        if let Some(out) = &tape.out {
            relu_backward(&mut dy, out);
        }
        let d = self.bn.backward(store, grads, &tape.bn, dy);
        self.conv.backward(store, grads, &tape.input, gamma_w, &d, need_dx)
    }
}

/// Residual block: a chain of conv-bn units plus an optional projection shortcut.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub units: Vec<ConvBn>,
    pub shortcut: Option<ConvBn>,
}

#[derive(Debug, Clone)]
pub struct BlockTape<T> {
    units: Vec<UnitTape<T>>,
    shortcut: Option<UnitTape<T>>,
    out: Array5<T>,
}

impl ResBlock {
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Array5<T>, gamma_w: f64, ctx: &mut Ctx) -> Result<(Array5<T>, Option<BlockTape<T>>)> {
        let mut h = None;
        let mut tapes = Vec::new();
        let last = self.units.len() - 1;
        for (i, u) in self.units.iter().enumerate() {
            let (y, t) = u.forward(store, h.as_ref().unwrap_or(x), gamma_w, i < last, ctx)?;
            tapes.extend(t);
            h = Some(y);
        }
        let mut y = h.expect("at least one unit");
        let mut sc_tape = None;
        match &self.shortcut {
            Some(sc) => {
                let (s, t) = sc.forward(store, x, gamma_w, false, ctx)?;
                sc_tape = t;
                y += &s;
            }
            None => y += x,
        }
        relu_inplace(&mut y);
        let tape = ctx.records().then(|| BlockTape {
            units: tapes,
            shortcut: sc_tape,
            out: y.clone(),
        });
        Ok((y, tape))
    }

    pub fn backward<T: Real>(&self, store: &ParamStore<T>, grads: &mut ParamStore<T>, tape: &BlockTape<T>, mut dy: Array5<T>, gamma_w: f64) -> Result<Array5<T>> {
        relu_backward(&mut dy, &tape.out);
        let mut dh = dy.clone();
        for (u, t) in self.units.iter().zip(&tape.units).rev() {
            dh = u.backward(store, grads, t, dh, gamma_w, true)?.expect("dx requested");
        }
        match (&self.shortcut, &tape.shortcut) {
            (Some(sc), Some(t)) => dh += &sc.backward(store, grads, t, dy, gamma_w, true)?.expect("dx requested"),
            _ => dh += &dy,
        }
        Ok(dh)
    }
}

/// One residual pathway: stem plus stages of residual blocks.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub name: String,
    pub adaptive: bool,
    pub stem: ConvBn,
    pub stages: Vec<Vec<ResBlock>>,
    /// Output channels at each boundary (0 = stem, i = end of stage i).
    pub boundary_channels: Vec<usize>,
}

pub type StageTape<T> = Vec<BlockTape<T>>;

impl Backbone {
    /// Builds pathway `index` of `arch`. `laterals[i]` is the number of fixed
    /// trailing channels concatenated onto the input of stage `i` (0-based).
    pub fn build<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        arch: &ArchSpec,
        index: usize,
        laterals: &[usize],
        bn_index: &mut usize,
        rng: &mut R,
    ) -> Result<Self> {
        let pathway = &arch.pathways[index];
        let PathwayBody::Residual(r) = &pathway.body else {
            return Err(A3dError::InvalidArch(format!(
                "pathway '{}' is a plain layer list; executable networks need a residual body",
                pathway.name
            )));
        };
        if r.stem.pool.is_some() {
            return Err(A3dError::InvalidArch(format!(
                "pathway '{}': executable networks do not support stem pooling",
                pathway.name
            )));
        }
        let scal = pathway.adaptive;
        let p = &pathway.name;
        let mut stem_spec = LayerSpec::conv(r.stem.kernel, 3, r.stem.out_channels, r.stem.stride, scal);
        stem_spec.width_scalable_in = false;
        let stem = ConvBn::new(store, &format!("{p}.stem.conv"), stem_spec, false, bn_index, rng);
        let mut cin = r.stem.out_channels;
        let mut boundary_channels = vec![cin];
        let mut stages = Vec::new();
        for (si, st) in r.stages.iter().enumerate() {
            let lateral = laterals.get(si).copied().unwrap_or(0);
            let mut blocks = Vec::new();
            for b in 0..st.blocks {
                let stride = if b == 0 { st.spatial_stride } else { 1 };
                let tail = if b == 0 { lateral } else { 0 };
                let name = |n: &str| format!("{p}.s{}.b{b}.{n}", si + 1);
                let mut specs = if st.bottleneck {
                    vec![
                        ("conv_a", LayerSpec::conv([st.temporal_kernel, 1, 1], cin + tail, st.inner_channels, [1, 1, 1], scal)),
                        ("conv_b", LayerSpec::conv([1, 3, 3], st.inner_channels, st.inner_channels, [1, stride, stride], scal)),
                        ("conv_c", LayerSpec::conv([1, 1, 1], st.inner_channels, st.out_channels, [1, 1, 1], scal)),
                    ]
                } else {
                    vec![
                        ("conv_a", LayerSpec::conv([st.temporal_kernel, 3, 3], cin + tail, st.out_channels, [1, stride, stride], scal)),
                        ("conv_b", LayerSpec::conv([1, 3, 3], st.out_channels, st.out_channels, [1, 1, 1], scal)),
                    ]
                };
                specs[0].1.fixed_in_tail = tail;
                let last = specs.len() - 1;
                let units = specs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (n, s))| ConvBn::new(store, &name(n), s, i == last, bn_index, rng))
                    .collect();
                let shortcut = (b == 0 && (cin + tail != st.out_channels || stride != 1)).then(|| {
                    let mut s = LayerSpec::conv([1, 1, 1], cin + tail, st.out_channels, [1, stride, stride], scal);
                    s.fixed_in_tail = tail;
                    ConvBn::new(store, &name("shortcut"), s, false, bn_index, rng)
                });
                blocks.push(ResBlock { units, shortcut });
                cin = st.out_channels;
            }
            boundary_channels.push(cin);
            stages.push(blocks);
        }
        Ok(Self {
            name: p.clone(),
            adaptive: scal,
            stem,
            stages,
            boundary_channels,
        })
    }

    /// Width factor this pathway runs at (fixed pathways always use 1).
    pub fn gamma_w(&self, gamma_w: f64) -> f64 {
        if self.adaptive {
            gamma_w
        } else {
            1.0
        }
    }

    pub fn out_channels(&self) -> usize {
        *self.boundary_channels.last().expect("stem boundary")
    }

    pub fn forward_stem<T: Real>(&self, store: &ParamStore<T>, x: &Array5<T>, gamma_w: f64, ctx: &mut Ctx) -> Result<(Array5<T>, Option<UnitTape<T>>)> {
        self.stem.forward(store, x, self.gamma_w(gamma_w), true, ctx)
    }

    pub fn forward_stage<T: Real>(&self, stage: usize, store: &ParamStore<T>, x: Array5<T>, gamma_w: f64, ctx: &mut Ctx) -> Result<(Array5<T>, Option<StageTape<T>>)> {
        let gw = self.gamma_w(gamma_w);
        let mut h = x;
        let mut tapes = Vec::new();
        for block in &self.stages[stage] {
            let (y, t) = block.forward(store, &h, gw, ctx)?;
            tapes.extend(t);
            h = y;
        }
        Ok((h, ctx.records().then_some(tapes)))
    }

    pub fn backward_stage<T: Real>(&self, stage: usize, store: &ParamStore<T>, grads: &mut ParamStore<T>, tapes: &StageTape<T>, dy: Array5<T>, gamma_w: f64) -> Result<Array5<T>> {
        let gw = self.gamma_w(gamma_w);
        let mut d = dy;
        for (block, tape) in self.stages[stage].iter().zip(tapes).rev() {
            d = block.backward(store, grads, tape, d, gw)?;
        }
        Ok(d)
    }

    pub fn backward_stem<T: Real>(&self, store: &ParamStore<T>, grads: &mut ParamStore<T>, tape: &UnitTape<T>, dy: Array5<T>, gamma_w: f64) -> Result<()> {
        self.stem.backward(store, grads, tape, dy, self.gamma_w(gamma_w), false)?;
        Ok(())
    }

    /// All convolutions in execution order.
    pub fn convs(&self) -> Vec<&SlimConv3d> {
        let mut out = vec![&self.stem.conv];
        for stage in &self.stages {
            for block in stage {
                out.extend(block.units.iter().map(|u| &u.conv));
                out.extend(block.shortcut.iter().map(|u| &u.conv));
            }
        }
        out
    }

    /// All normalization layers in execution order.
    pub fn norms(&self) -> Vec<&CalibBn> {
        let mut out = vec![&self.stem.bn];
        for stage in &self.stages {
            for block in stage {
                out.extend(block.units.iter().map(|u| &u.bn));
                out.extend(block.shortcut.iter().map(|u| &u.bn));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::{ArchSpec, PoolSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(arch: &ArchSpec, index: usize) -> Result<(ParamStore<f64>, Backbone, usize)> {
        let mut store = ParamStore::new();
        let mut n = 0;
        let b = Backbone::build(&mut store, arch, index, &[], &mut n, &mut ChaCha8Rng::seed_from_u64(0))?;
        Ok((store, b, n))
    }

    #[test]
    fn layers_and_norms_pair_up() {
        let (_, b, n) = build(&ArchSpec::toy_slow(), 0).unwrap();
        assert_eq!(b.convs().len(), b.norms().len());
        assert_eq!(b.norms().len(), n);
        assert!(b.norms().iter().enumerate().all(|(i, bn)| bn.index == i));
        assert_eq!(b.boundary_channels, vec![8, 8, 16, 32, 64]);
    }

    #[test]
    fn fixed_pathways_run_at_full_width() {
        let (_, fast, _) = build(&ArchSpec::toy_slowfast(), 1).unwrap();
        assert!(!fast.adaptive);
        assert_eq!(fast.gamma_w(0.5), 1.0);
        let (_, slow, _) = build(&ArchSpec::toy_slowfast(), 0).unwrap();
        assert_eq!(slow.gamma_w(0.5), 0.5);
    }

    #[test]
    fn forward_shapes_follow_strides() {
        let (store, b, _) = build(&ArchSpec::toy_slow(), 0).unwrap();
        let x = Array5::<f64>::from_elem((2, 3, 4, 16, 16), 0.5);
        let mut ctx = Ctx::train();
        let (mut h, _) = b.forward_stem(&store, &x, 0.5, &mut ctx).unwrap();
        assert_eq!(h.dim(), (2, 4, 4, 8, 8));
        for i in 0..b.stages.len() {
            h = b.forward_stage(i, &store, h, 0.5, &mut ctx).unwrap().0;
        }
        assert_eq!(h.dim(), (2, 32, 4, 1, 1));
    }

    #[test]
    fn stem_pooling_and_layer_lists_rejected() {
        let mut arch = ArchSpec::toy_slow();
        if let PathwayBody::Residual(r) = &mut arch.pathways[0].body {
            r.stem.pool = Some(PoolSpec { kernel: [1, 3, 3], stride: [1, 2, 2] });
        }
        assert!(build(&arch, 0).is_err());
        arch.pathways[0].body = PathwayBody::Layers(vec![]);
        assert!(build(&arch, 0).is_err());
    }
}
