use std::collections::BTreeMap;

use ndarray::{s, Array5, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::configspace::{width, Configuration};
use crate::error::{A3dError, Result};
use crate::nn::{ParamId, ParamStore};
use crate::real::Real;

pub const BN_EPS: f64 = 1e-5;

/// Mean and biased variance of one normalization layer's input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Calibrated statistics of every normalization layer for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatEntry {
    pub layers: Vec<BnStats>,
    /// Clips seen during calibration.
    pub clips: u64,
}

/// Per-configuration normalization statistics keyed by [`Configuration::key`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatBank {
    pub entries: BTreeMap<String, StatEntry>,
}

impl StatBank {
    pub fn get(&self, c: &Configuration) -> Result<&StatEntry> {
        self.entries
            .get(&c.key())
            .ok_or_else(|| A3dError::Uncalibrated(c.key()))
    }

    pub fn insert(&mut self, c: &Configuration, entry: StatEntry) {
        self.entries.insert(c.key(), entry);
    }

    pub fn contains(&self, c: &Configuration) -> bool {
        self.entries.contains_key(&c.key())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Streaming per-channel moments: count, mean and sum of squared deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Moments {
    /// Pairwise (Chan et al.) combination of two moment sets.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for c in 0..self.mean.len() {
            let delta = other.mean[c] - self.mean[c];
            self.mean[c] += delta * nb / n;
            self.m2[c] += other.m2[c] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn stats(&self) -> BnStats {
        let n = self.count.max(1) as f64;
        BnStats {
            mean: self.mean.clone(),
            var: self.m2.iter().map(|m| m / n).collect(),
        }
    }
}

/// How normalization layers obtain their statistics.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Current-batch statistics; tapes are kept for the backward pass.
    Train,
    /// Current-batch statistics; per-layer batch moments are recorded.
    Calibrate,
    /// Calibrated statistics of the running configuration.
    Eval(&'a StatEntry),
    /// Statistics of a wider configuration, truncated to the active channel
    /// prefix (deployment without per-configuration calibration).
    Prefix(&'a StatEntry),
}

/// Per-forward context threaded through every layer.
#[derive(Debug)]
pub struct Ctx<'a> {
    pub mode: Mode<'a>,
    /// Batch moments per normalization layer (filled in calibrate mode).
    pub moments: Vec<Option<Moments>>,
}

impl<'a> Ctx<'a> {
    pub fn train() -> Self {
        Self { mode: Mode::Train, moments: Vec::new() }
    }

    pub fn calibrate(layers: usize) -> Self {
        Self {
            mode: Mode::Calibrate,
            moments: vec![None; layers],
        }
    }

    pub fn eval(entry: &'a StatEntry) -> Self {
        Self { mode: Mode::Eval(entry), moments: Vec::new() }
    }

    pub fn prefix(entry: &'a StatEntry) -> Self {
        Self { mode: Mode::Prefix(entry), moments: Vec::new() }
    }

    /// Whether layers keep the activations needed for backward.
    pub fn records(&self) -> bool {
        matches!(self.mode, Mode::Train)
    }
}

#[derive(Debug, Clone)]
pub struct BnTape<T> {
    xhat: Array5<T>,
    inv_std: Vec<T>,
}

/// Batch normalization with prefix-sliced affine parameters and per-configuration
/// calibrated statistics.
#[derive(Debug, Clone)]
pub struct CalibBn {
    pub name: String,
    pub channels: usize,
    pub scalable: bool,
    pub scale: ParamId,
    pub shift: ParamId,
    /// Position in the network's statistics list.
    pub index: usize,
}

impl CalibBn {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, scalable: bool, zero_scale: bool, index: usize) -> Self {
        let init = if zero_scale { T::zero() } else { T::one() };
        let scale = store.add(format!("{name}.scale"), ArrayD::from_elem(IxDyn(&[channels]), init), false);
        let shift = store.add(format!("{name}.shift"), ArrayD::zeros(IxDyn(&[channels])), false);
        Self {
            name: name.to_string(),
            channels,
            scalable,
            scale,
            shift,
            index,
        }
    }

    pub fn active(&self, gamma_w: f64) -> usize {
        if self.scalable {
            width(self.channels, gamma_w)
        } else {
            self.channels
        }
    }

    fn affine<T: Real>(&self, store: &ParamStore<T>, c: usize) -> (Vec<T>, Vec<T>) {
        (
            store.get(self.scale).slice(s![..c]).to_vec(),
            store.get(self.shift).slice(s![..c]).to_vec(),
        )
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: Array5<T>, gamma_w: f64, ctx: &mut Ctx) -> Result<(Array5<T>, Option<BnTape<T>>)> {
        let (b, c, t, h, w) = x.dim();
        if c != self.active(gamma_w) {
            return Err(A3dError::Shape(format!(
                "{}: expected {} channels at width {gamma_w}, got {c}",
                self.name,
                self.active(gamma_w)
            )));
        }
        let p = t * h * w;
        let (gamma, beta) = self.affine(store, c);
        let mut x = x.as_standard_layout().into_owned();
        let (mean, var) = match ctx.mode {
            Mode::Eval(entry) | Mode::Prefix(entry) => {
                let st = entry.layers.get(self.index).ok_or_else(|| {
                    A3dError::Shape(format!("{}: statistics entry has no layer {}", self.name, self.index))
                })?;
                let fits = match ctx.mode {
                    Mode::Eval(_) => st.mean.len() == c,
                    _ => st.mean.len() >= c,
                };
                if !fits {
                    return Err(A3dError::Shape(format!(
                        "{}: calibrated for {} channels, running {c}",
                        self.name,
                        st.mean.len()
                    )));
                }
                (st.mean[..c].to_vec(), st.var[..c].to_vec())
            }
            Mode::Train | Mode::Calibrate => batch_moments(x.as_slice().unwrap(), b, c, p),
        };
        if let Mode::Calibrate = ctx.mode {
            let n = (b * p) as u64;
            ctx.moments[self.index] = Some(Moments {
                count: n,
                m2: var.iter().map(|v| v * n as f64).collect(),
                mean: mean.clone(),
            });
        }
        let inv_std: Vec<T> = var.iter().map(|v| T::of(1.0 / (v + BN_EPS).sqrt())).collect();
        let mean: Vec<T> = mean.into_iter().map(T::of).collect();
        let data = x.as_slice_mut().unwrap();
        let keep = ctx.records();
        let mut xhat = if keep { vec![T::zero(); data.len()] } else { Vec::new() };
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * p;
                let (m, is, g, be) = (mean[ci], inv_std[ci], gamma[ci], beta[ci]);
                for k in off..off + p {
                    let n = (data[k] - m) * is;
                    if keep {
                        xhat[k] = n;
                    }
                    data[k] = n * g + be;
                }
            }
        }
        let tape = keep.then(|| BnTape {
            xhat: Array5::from_shape_vec((b, c, t, h, w), xhat).expect("shape"),
            inv_std,
        });
        Ok((x, tape))
    }

    /// Backward through batch-statistics normalization.
    pub fn backward<T: Real>(&self, store: &ParamStore<T>, grads: &mut ParamStore<T>, tape: &BnTape<T>, dy: Array5<T>) -> Array5<T> {
        let (b, c, t, h, w) = dy.dim();
        let p = t * h * w;
        let n = T::of((b * p) as f64);
        let (gamma, _) = self.affine(store, c);
        let mut dy = dy.as_standard_layout().into_owned();
        let xhat = tape.xhat.as_slice().expect("standard layout");
        let d = dy.as_slice_mut().unwrap();
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dyx = vec![T::zero(); c];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * p;
                let (mut a, mut e) = (T::zero(), T::zero());
                for k in off..off + p {
                    a += d[k];
                    e += d[k] * xhat[k];
                }
                sum_dy[ci] += a;
                sum_dyx[ci] += e;
            }
        }
        {
            let mut gs = grads.get_mut(self.scale).slice_mut(s![..c]);
            for ci in 0..c {
                gs[ci] += sum_dyx[ci];
            }
        }
        {
            let mut gb = grads.get_mut(self.shift).slice_mut(s![..c]);
            for ci in 0..c {
                gb[ci] += sum_dy[ci];
            }
        }
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * p;
                let k0 = gamma[ci] * tape.inv_std[ci] / n;
                for k in off..off + p {
                    d[k] = k0 * (n * d[k] - sum_dy[ci] - xhat[k] * sum_dyx[ci]);
                }
            }
        }
        dy
    }
}

/// Per-channel mean and biased variance over `(B, T, H, W)` in f64.
fn batch_moments<T: Real>(x: &[T], b: usize, c: usize, p: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (b * p) as f64;
    let mut mean = vec![0.0; c];
    for bi in 0..b {
        for ci in 0..c {
            let off = (bi * c + ci) * p;
            mean[ci] += x[off..off + p].iter().map(|v| v.f64()).sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for bi in 0..b {
        for ci in 0..c {
            let off = (bi * c + ci) * p;
            let m = mean[ci];
            var[ci] += x[off..off + p].iter().map(|v| (v.f64() - m).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}
