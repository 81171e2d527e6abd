//! A network plus its parameters and calibrated statistics.

use ndarray::{Array2, Array5, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::configspace::{ArchSpec, Configuration};
use crate::data::ChannelNorm;
use crate::error::{A3dError, Result};
use crate::multipath::{TwoPathwayNet, TwoPathwayTape};
use crate::nn::ops::{frame_indices, resample};
use crate::nn::ParamStore;
use crate::real::Real;
use crate::slimnet::{Ctx, Output, SlimNet, SlimTape, StatBank};

#[derive(Debug, Clone)]
pub enum Net {
    Slow(SlimNet),
    SlowFast(TwoPathwayNet),
}

#[derive(Debug, Clone)]
pub enum Tape<T> {
    Slow(SlimTape<T>),
    SlowFast(TwoPathwayTape<T>),
}

/// Network inputs for one configuration.
#[derive(Debug, Clone)]
pub struct NetInput<T> {
    /// Adaptive-pathway input at the configuration's frames and pixels.
    pub slow: Array5<T>,
    /// Full clip for a fixed Fast pathway.
    pub fast: Option<Array5<T>>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub arch: ArchSpec,
    pub net: Net,
    pub params: ParamStore<T>,
    pub stats: StatBank,
    /// Input normalization applied by [`Model::input_for`].
    pub norm: ChannelNorm,
}

impl<T: Real> Model<T> {
    /// Builds and initializes a network for `arch` from `seed`.
    pub fn new(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let net = if arch.is_two_pathway() {
            Net::SlowFast(TwoPathwayNet::build(&mut params, &arch, &mut rng)?)
        } else {
            Net::Slow(SlimNet::build(&mut params, &arch, &mut rng)?)
        };
        Ok(Self {
            arch,
            net,
            params,
            stats: StatBank::default(),
            norm: ChannelNorm::IDENTITY,
        })
    }

    pub fn num_norms(&self) -> usize {
        match &self.net {
            Net::Slow(n) => n.num_norms,
            Net::SlowFast(n) => n.num_norms,
        }
    }

    /// Frames of the full-resolution clip the model consumes.
    pub fn clip_frames(&self) -> usize {
        self.arch.input_frames()
    }

    pub fn clip_pixels(&self) -> usize {
        self.arch.base_spatial
    }

    /// Adaptive-pathway input size `(frames, pixels)` at `c`.
    pub fn input_size(&self, c: &Configuration) -> (usize, usize) {
        (c.frames(self.arch.base_frames), c.pixels(self.arch.base_spatial))
    }

    /// Derives the network inputs for `c` from a full-resolution clip batch
    /// with values in `[0, 1]`: normalizes, then resamples.
    pub fn input_for(&self, clip: &Array5<T>, c: &Configuration) -> Result<NetInput<T>> {
        let (_, ch, t, h, w) = clip.dim();
        let (ft, px) = (self.clip_frames(), self.clip_pixels());
        if ch != 3 || t != ft || h != px || w != px {
            return Err(A3dError::Shape(format!(
                "expected clips of 3×{ft}×{px}×{px}, got {ch}×{t}×{h}×{w}"
            )));
        }
        let (frames, pixels) = self.input_size(c);
        let mut clip = clip.clone();
        self.norm.apply(&mut clip);
        match self.net {
            Net::Slow(_) => Ok(NetInput {
                slow: resample(clip.view(), frames, pixels),
                fast: None,
            }),
            Net::SlowFast(_) => {
                let base = clip.select(Axis(2), &frame_indices(t, self.arch.base_frames));
                Ok(NetInput {
                    slow: resample(base.view(), frames, pixels),
                    fast: Some(clip),
                })
            }
        }
    }

    fn check_input(&self, input: &NetInput<T>, c: &Configuration) -> Result<()> {
        let (frames, pixels) = self.input_size(c);
        let (_, ch, t, h, w) = input.slow.dim();
        if ch != 3 || t != frames || h != pixels || w != pixels {
            return Err(A3dError::Shape(format!(
                "configuration {c} needs 3×{frames}×{pixels}×{pixels} input, got {ch}×{t}×{h}×{w}"
            )));
        }
        Ok(())
    }

    /// Forward pass; `ctx` selects batch or calibrated statistics.
    pub fn forward(&self, input: &NetInput<T>, c: &Configuration, ctx: &mut Ctx) -> Result<(Output<T>, Option<Tape<T>>)> {
        self.check_input(input, c)?;
        match &self.net {
            Net::Slow(n) => {
                let (out, tape) = n.forward(&self.params, &input.slow, c.gamma_w, ctx)?;
                Ok((out, tape.map(Tape::Slow)))
            }
            Net::SlowFast(n) => {
                let fast = input
                    .fast
                    .as_ref()
                    .ok_or_else(|| A3dError::Shape("two-pathway model needs the full clip".into()))?;
                let (out, tape) = n.forward(&self.params, &input.slow, fast, c.gamma_w, ctx)?;
                Ok((out, tape.map(Tape::SlowFast)))
            }
        }
    }

    /// Accumulates parameter gradients for `dlogits` into `grads`.
    pub fn backward(&self, grads: &mut ParamStore<T>, tape: &Tape<T>, dlogits: &Array2<T>) -> Result<()> {
        match (&self.net, tape) {
            (Net::Slow(n), Tape::Slow(t)) => n.backward(&self.params, grads, t, dlogits),
            (Net::SlowFast(n), Tape::SlowFast(t)) => n.backward(&self.params, grads, t, dlogits),
            _ => Err(A3dError::Invalid("tape does not belong to this network".into())),
        }
    }

    /// Inference with calibrated statistics for `c`.
    pub fn predict(&self, input: &NetInput<T>, c: &Configuration) -> Result<Output<T>> {
        let entry = self.stats.get(c)?;
        let mut ctx = Ctx::eval(entry);
        Ok(self.forward(input, c, &mut ctx)?.0)
    }

    /// Logits from a full-resolution clip batch with calibrated statistics.
    pub fn predict_clip(&self, clip: &Array5<T>, c: &Configuration) -> Result<Array2<T>> {
        Ok(self.predict(&self.input_for(clip, c)?, c)?.logits)
    }

    /// The classifier head.
    pub fn head(&self) -> &crate::slimnet::Head {
        match &self.net {
            Net::Slow(n) => &n.head,
            Net::SlowFast(n) => &n.head,
        }
    }
}
