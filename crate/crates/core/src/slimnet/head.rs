use ndarray::{s, Array1, Array2, ArrayD, Axis, Ix2, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::configspace::{LayerKind, LayerSpec};
use crate::error::{A3dError, Result};
use crate::nn::{ParamId, ParamStore};
use crate::real::Real;

/// Fully connected classifier on pooled features. The slimmable prefix of its
/// input columns follows γw; a fixed tail (pooled Fast features) is always used.
#[derive(Debug, Clone)]
pub struct Head {
    pub spec: LayerSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Head {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, in_channels: usize, fixed_tail: usize, classes: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("finite std");
        let w = ArrayD::from_shape_simple_fn(IxDyn(&[classes, in_channels]), || T::of(normal.sample(rng)));
        let weight = store.add("head.fc.weight", w, true);
        let bias = store.add("head.fc.bias", ArrayD::zeros(IxDyn(&[classes])), false);
        Self {
            spec: LayerSpec {
                kind: LayerKind::Fc,
                kernel: [1, 1, 1],
                in_channels,
                out_channels: classes,
                stride: [1, 1, 1],
                width_scalable_in: true,
                width_scalable_out: false,
                fixed_in_tail: fixed_tail,
                bias: true,
            },
            weight,
            bias,
        }
    }

    pub fn input_columns(&self, gamma_w: f64) -> Vec<usize> {
        let base = self.spec.in_channels - self.spec.fixed_in_tail;
        let prefix = self.spec.active_in(gamma_w) - self.spec.fixed_in_tail;
        (0..prefix).chain(base..self.spec.in_channels).collect()
    }

    /// Active `[classes, C']` weight matrix.
    pub fn active_weight<T: Real>(&self, store: &ParamStore<T>, gamma_w: f64) -> Array2<T> {
        let w = store.get(self.weight).view().into_dimensionality::<Ix2>().expect("2-D weight");
        w.select(Axis(1), &self.input_columns(gamma_w))
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, pooled: &Array2<T>, gamma_w: f64) -> Result<Array2<T>> {
        let w = self.active_weight(store, gamma_w);
        if pooled.ncols() != w.ncols() {
            return Err(A3dError::Shape(format!(
                "head expects {} pooled channels at width {gamma_w}, got {}",
                w.ncols(),
                pooled.ncols()
            )));
        }
        let b: Array1<T> = store.get(self.bias).view().into_dimensionality().expect("1-D bias").to_owned();
        Ok(pooled.dot(&w.t()) + &b)
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. `pooled`.
    pub fn backward<T: Real>(&self, store: &ParamStore<T>, grads: &mut ParamStore<T>, pooled: &Array2<T>, dlogits: &Array2<T>, gamma_w: f64) -> Array2<T> {
        let w = self.active_weight(store, gamma_w);
        let dw = dlogits.t().dot(pooled);
        {
            let mut g = grads.get_mut(self.weight).view_mut().into_dimensionality::<Ix2>().expect("2-D weight");
            for (j, c) in self.input_columns(gamma_w).into_iter().enumerate() {
                let mut col = g.slice_mut(s![.., c]);
                col += &dw.slice(s![.., j]);
            }
        }
        {
            let mut gb = grads.get_mut(self.bias).view_mut().into_dimensionality::<ndarray::Ix1>().expect("1-D bias");
            gb += &dlogits.sum_axis(Axis(0));
        }
        dlogits.dot(&w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn head(tail: usize) -> (ParamStore<f64>, Head) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = Head::new(&mut store, 10, tail, 3, &mut rng);
        (store, h)
    }

    #[test]
    fn columns_keep_the_fixed_tail() {
        let (_, h) = head(2);
        assert_eq!(h.input_columns(1.0), (0..10).collect::<Vec<_>>());
        assert_eq!(h.input_columns(0.5), vec![0, 1, 2, 3, 8, 9]);
        let (_, plain) = head(0);
        assert_eq!(plain.input_columns(0.5), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn forward_checks_pooled_width() {
        let (store, h) = head(2);
        assert_eq!(h.forward(&store, &Array2::zeros((4, 6)), 0.5).unwrap().dim(), (4, 3));
        assert!(h.forward(&store, &Array2::zeros((4, 10)), 0.5).is_err());
    }

    #[test]
    fn backward_writes_active_columns_only() {
        let (store, h) = head(2);
        let mut grads = store.zeros_like();
        let pooled = Array2::from_elem((2, 6), 1.0);
        let dlogits = Array2::from_elem((2, 3), 0.5);
        let dx = h.backward(&store, &mut grads, &pooled, &dlogits, 0.5);
        assert_eq!(dx.dim(), (2, 6));
        let g = grads.get(h.weight).view().into_dimensionality::<Ix2>().unwrap();
        for c in 0..10 {
            let expect = if h.input_columns(0.5).contains(&c) { 1.0 } else { 0.0 };
            assert!(g.column(c).iter().all(|&v| v == expect), "column {c}");
        }
        assert!(grads.get(h.bias).iter().all(|&v| v == 1.0));
    }
}
