use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array5, ArrayView2, ArrayView5, ArrayViewMut2, ArrayViewMut5, Axis, Ix3, Ix5, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::configspace::LayerSpec;
use crate::error::{A3dError, Result};
use crate::exec::{for_each_chunk_mut_with, map_indexed_with};
use crate::nn::im2col::{col2im, im2col, ConvGeom};
use crate::nn::{ParamId, ParamStore};
use crate::real::Real;

/// A 3-D convolution whose active weights at width factor γw are a prefix
/// slice of one full kernel `[Co, Ci, Kt, Kh, Kw]`.
///
/// Layers with `fixed_in_tail > 0` keep their last input channels (lateral
/// features) active at every width; the slimmable prefix sits in front of them.
#[derive(Debug, Clone)]
pub struct SlimConv3d {
    pub name: String,
    pub spec: LayerSpec,
    pub padding: [usize; 3],
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl SlimConv3d {
    /// Registers the weights in `store` with fan-out Kaiming-normal initialization.
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, spec: LayerSpec, rng: &mut R) -> Self {
        let [kt, kh, kw] = spec.kernel;
        let shape = [spec.out_channels, spec.in_channels, kt, kh, kw];
        let std = (2.0 / (spec.out_channels * kt * kh * kw) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let w = ndarray::ArrayD::from_shape_simple_fn(IxDyn(&shape), || T::of(normal.sample(rng)));
        let weight = store.add(format!("{name}.weight"), w, true);
        let bias = spec.bias.then(|| {
            store.add(format!("{name}.bias"), ndarray::ArrayD::zeros(IxDyn(&[spec.out_channels])), false)
        });
        Self {
            name: name.to_string(),
            padding: spec.kernel.map(|k| k / 2),
            spec,
            weight,
            bias,
        }
    }

    pub fn active_in(&self, gamma_w: f64) -> usize {
        self.spec.active_in(gamma_w)
    }

    pub fn active_out(&self, gamma_w: f64) -> usize {
        self.spec.active_out(gamma_w)
    }

    /// Number of active slimmable (non-tail) input channels.
    fn active_prefix_in(&self, gamma_w: f64) -> usize {
        self.active_in(gamma_w) - self.spec.fixed_in_tail
    }

    /// Full-weight input channel indices used at `gamma_w`, in order.
    pub fn input_channels(&self, gamma_w: f64) -> Vec<usize> {
        let base = self.spec.in_channels - self.spec.fixed_in_tail;
        (0..self.active_prefix_in(gamma_w)).chain(base..self.spec.in_channels).collect()
    }

    /// The active prefix block `weight[0:Co', 0:Ci', ..]` as a view into the full kernel.
    ///
    /// For layers with a lateral tail this is the slimmable part only.
    pub fn active_slice<'a, T: Real>(&self, store: &'a ParamStore<T>, gamma_in: f64, gamma_out: f64) -> ArrayView5<'a, T> {
        let w = store.get(self.weight).view().into_dimensionality::<Ix5>().expect("5-D kernel");
        let (ci, co) = (self.active_prefix_in(gamma_in), self.active_out(gamma_out));
        w.slice_move(s![..co, ..ci, .., .., ..])
    }

    pub fn active_slice_mut<'a, T: Real>(&self, store: &'a mut ParamStore<T>, gamma_in: f64, gamma_out: f64) -> ArrayViewMut5<'a, T> {
        let (ci, co) = (self.active_prefix_in(gamma_in), self.active_out(gamma_out));
        let w = store.get_mut(self.weight).view_mut().into_dimensionality::<Ix5>().expect("5-D kernel");
        w.slice_move(s![..co, ..ci, .., .., ..])
    }

    fn kernel_volume(&self) -> usize {
        self.spec.kernel.iter().product()
    }

    /// Active weights as a contiguous `[Co', Ci'·K]` matrix.
    fn gather<T: Real>(&self, store: &ParamStore<T>, gamma_w: f64) -> Array2<T> {
        let k = self.kernel_volume();
        let co = self.active_out(gamma_w);
        let w = store.get(self.weight);
        let w3 = w
            .view()
            .into_shape_with_order((self.spec.out_channels, self.spec.in_channels, k))
            .expect("contiguous kernel");
        let w3 = w3.slice(s![..co, .., ..]);
        let picked = if self.spec.fixed_in_tail == 0 {
            w3.slice(s![.., ..self.active_in(gamma_w), ..]).to_owned()
        } else {
            w3.select(Axis(1), &self.input_channels(gamma_w))
        };
        let ci = picked.dim().1;
        picked
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((co, ci * k))
            .expect("contiguous")
    }

    fn scatter_add<T: Real>(&self, grads: &mut ParamStore<T>, gamma_w: f64, dw: &Array2<T>) {
        let k = self.kernel_volume();
        let (out_c, in_c) = (self.spec.out_channels, self.spec.in_channels);
        let g = grads.get_mut(self.weight);
        let mut g3 = g
            .view_mut()
            .into_shape_with_order((out_c, in_c, k))
            .expect("contiguous kernel")
            .into_dimensionality::<Ix3>()
            .expect("3-D");
        let co = dw.nrows();
        for (j, c) in self.input_channels(gamma_w).into_iter().enumerate() {
            let mut dst = g3.slice_mut(s![..co, c, ..]);
            dst += &dw.slice(s![.., j * k..(j + 1) * k]);
        }
    }

    fn geometry(&self, x: &Array5<impl Real>, gamma_w: f64) -> Result<ConvGeom> {
        let (_, c, t, h, w) = x.dim();
        let ci = self.active_in(gamma_w);
        if c != ci {
            return Err(A3dError::Shape(format!(
                "{}: expected {ci} input channels at width {gamma_w}, got {c}",
                self.name
            )));
        }
        ConvGeom::new(ci, [t, h, w], self.spec.kernel, self.spec.stride, self.padding)
            .ok_or_else(|| A3dError::Shape(format!("{}: input {:?} smaller than kernel", self.name, [t, h, w])))
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Array5<T>, gamma_w: f64) -> Result<Array5<T>> {
        let g = self.geometry(x, gamma_w)?;
        let wm = self.gather(store, gamma_w);
        let co = wm.nrows();
        let bias: Option<Array1<T>> = self
            .bias
            .map(|id| store.get(id).slice(s![..co]).to_owned());
        let [ot, oh, ow] = g.output;
        let x = x.as_standard_layout();
        let mut out = Array5::<T>::zeros((x.dim().0, co, ot, oh, ow));
        for_each_chunk_mut_with(out.as_slice_mut().unwrap(), co * g.cols(), Vec::new, |buf, i, dst| {
            let xs = x.index_axis(Axis(0), i);
            let xs = xs.as_slice().expect("standard layout");
            let mut y = ArrayViewMut2::from_shape((co, g.cols()), dst).expect("output chunk");
            let cols = columns(xs, &g, buf);
            general_mat_mul(T::one(), &wm, &cols, T::zero(), &mut y);
            if let Some(b) = &bias {
                for (mut row, &bv) in y.rows_mut().into_iter().zip(b) {
                    row.mapv_inplace(|v| v + bv);
                }
            }
        });
        Ok(out)
    }

    /// Accumulates weight (and bias) gradients into `grads`; returns the input
    /// gradient when `need_dx`.
    ///
    /// Per-sample weight gradients are summed in sample order, so the result
    /// does not depend on the execution mode.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        grads: &mut ParamStore<T>,
        x: &Array5<T>,
        gamma_w: f64,
        dy: &Array5<T>,
        need_dx: bool,
    ) -> Result<Option<Array5<T>>> {
        let g = self.geometry(x, gamma_w)?;
        let wm = self.gather(store, gamma_w);
        let co = wm.nrows();
        let x = x.as_standard_layout();
        let dy = dy.as_standard_layout();
        let dy_sample = |i: usize| {
            let s = &dy.as_slice().expect("standard layout")[i * co * g.cols()..(i + 1) * co * g.cols()];
            ArrayView2::from_shape((co, g.cols()), s).expect("dy shape")
        };
        let parts = map_indexed_with(x.dim().0, Vec::new, |buf, i| {
            let xs = x.index_axis(Axis(0), i);
            let xs = xs.as_slice().expect("standard layout");
            let dys = dy_sample(i);
            let dw = dys.dot(&columns(xs, &g, buf).t());
            (dw, dys.sum_axis(Axis(1)))
        });
        let mut dw_sum = Array2::<T>::zeros(wm.raw_dim());
        let mut db_sum = Array1::<T>::zeros(co);
        for (dw, db) in parts {
            dw_sum += &dw;
            db_sum += &db;
        }
        self.scatter_add(grads, gamma_w, &dw_sum);
        if let Some(id) = self.bias {
            let mut gb = grads.get_mut(id).slice_mut(s![..co]);
            gb += &db_sum;
        }
        if !need_dx {
            return Ok(None);
        }
        let [t, h, w] = g.input;
        let wt = wm.t();
        let mut dx = Array5::<T>::zeros((x.dim().0, g.channels, t, h, w));
        for_each_chunk_mut_with(dx.as_slice_mut().unwrap(), g.channels * t * h * w, Vec::new, |buf: &mut Vec<T>, i, dst| {
            let dys = dy_sample(i);
            if g.is_pointwise() {
                let mut d = ArrayViewMut2::from_shape((g.rows(), g.cols()), dst).expect("dx chunk");
                general_mat_mul(T::one(), &wt, &dys, T::zero(), &mut d);
            } else {
                buf.resize(g.rows() * g.cols(), T::zero());
                let mut dcols = ArrayViewMut2::from_shape((g.rows(), g.cols()), &mut buf[..]).expect("scratch");
                general_mat_mul(T::one(), &wt, &dys, T::zero(), &mut dcols);
                col2im(buf, &g, dst);
            }
        });
        Ok(Some(dx))
    }
}

/// Column matrix of one sample: the input itself for pointwise kernels,
/// otherwise its unfolding into the reusable `buf`.
fn columns<'a, T: Real>(xs: &'a [T], g: &ConvGeom, buf: &'a mut Vec<T>) -> ArrayView2<'a, T> {
    let shape = (g.rows(), g.cols());
    if g.is_pointwise() {
        return ArrayView2::from_shape(shape, xs).expect("pointwise view");
    }
    buf.resize(shape.0 * shape.1, T::zero());
    im2col(xs, g, buf);
    ArrayView2::from_shape(shape, &buf[..]).expect("scratch")
}
