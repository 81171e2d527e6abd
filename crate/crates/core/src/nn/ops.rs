//! Stateless tensor operations on `[B, C, T, H, W]` arrays and their adjoints.

use ndarray::{s, Array2, Array4, Array5, ArrayView5, Axis, Zip};

use crate::exec::map_indexed;
use crate::real::Real;

/// Frame indices kept when sampling `out` frames from `len`: `⌊i·len/out⌋`.
///
/// Used by clip resampling, lateral temporal down-sampling and folder loading.
pub fn frame_indices(len: usize, out: usize) -> Vec<usize> {
    let out = out.max(1);
    (0..out).map(|i| i * len / out).collect()
}

/// Reassembles per-sample outputs into one batch tensor.
pub fn stack_samples<T: Real>(samples: Vec<Array4<T>>) -> Array5<T> {
    let b = samples.len();
    let (c, t, h, w) = samples[0].dim();
    let mut out = Array5::zeros((b, c, t, h, w));
    for (i, s) in samples.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), i).assign(&s);
    }
    out
}

pub fn relu_inplace<T: Real>(x: &mut Array5<T>) {
    x.mapv_inplace(|v| v.max(T::zero()));
}

/// Gradient through a ReLU given its output `y`.
pub fn relu_backward<T: Real>(dy: &mut Array5<T>, y: &Array5<T>) {
    Zip::from(dy).and(y).for_each(|d, &v| {
        if v <= T::zero() {
            *d = T::zero();
        }
    });
}

/// Mean over `(T, H, W)`: `[B, C, T, H, W] -> [B, C]`.
pub fn global_avg_pool<T: Real>(x: &Array5<T>) -> Array2<T> {
    let (b, c, t, h, w) = x.dim();
    let n = T::of((t * h * w) as f64);
    let flat = x.view().into_shape_with_order((b, c, t * h * w)).expect("contiguous");
    flat.sum_axis(Axis(2)).mapv(|v| v / n)
}

pub fn global_avg_pool_backward<T: Real>(d: &Array2<T>, shape: (usize, usize, usize, usize, usize)) -> Array5<T> {
    let (b, c, t, h, w) = shape;
    let n = T::of((t * h * w) as f64);
    let mut out = Array5::zeros(shape);
    for bi in 0..b {
        for ci in 0..c {
            out.slice_mut(s![bi, ci, .., .., ..]).fill(d[[bi, ci]] / n);
        }
    }
    out
}

/// Channel concatenation `[a | b]`.
pub fn concat_channels<T: Real>(a: &Array5<T>, b: &Array5<T>) -> Array5<T> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("matching shapes")
}

/// Splits a gradient at channel `at` into `(first, rest)`.
pub fn split_channels<T: Real>(d: &Array5<T>, at: usize) -> (Array5<T>, Array5<T>) {
    (
        d.slice(s![.., ..at, .., .., ..]).to_owned(),
        d.slice(s![.., at.., .., .., ..]).to_owned(),
    )
}

pub fn select_frames<T: Real>(x: ArrayView5<T>, idx: &[usize]) -> Array5<T> {
    if idx.len() == x.dim().2 && idx.iter().enumerate().all(|(i, &j)| i == j) {
        return x.to_owned();
    }
    x.select(Axis(2), idx)
}

pub fn select_frames_backward<T: Real>(d: &Array5<T>, idx: &[usize], frames: usize) -> Array5<T> {
    let (b, c, _, h, w) = d.dim();
    let mut out = Array5::zeros((b, c, frames, h, w));
    for (i, &j) in idx.iter().enumerate() {
        let mut dst = out.slice_mut(s![.., .., j, .., ..]);
        dst += &d.slice(s![.., .., i, .., ..]);
    }
    out
}

/// One output position of a 1-D linear interpolation: `w0·x[i0] + w1·x[i1]`.
#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    w0: f64,
    w1: f64,
}

/// Half-pixel-centre bilinear taps (no corner alignment).
fn taps(len: usize, out: usize) -> Vec<Tap> {
    let scale = len as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            let w1 = src - i0 as f64;
            Tap { i0, i1, w0: 1.0 - w1, w1 }
        })
        .collect()
}

fn resize_plane<T: Real>(src: &[T], w: usize, th: &[Tap], tw: &[Tap], dst: &mut [T]) {
    let ow = tw.len();
    let mut rows = vec![T::zero(); th.len() * w];
    for (o, t) in th.iter().enumerate() {
        let (w0, w1) = (T::of(t.w0), T::of(t.w1));
        for x in 0..w {
            rows[o * w + x] = w0 * src[t.i0 * w + x] + w1 * src[t.i1 * w + x];
        }
    }
    for o in 0..th.len() {
        for (x, t) in tw.iter().enumerate() {
            dst[o * ow + x] = T::of(t.w0) * rows[o * w + t.i0] + T::of(t.w1) * rows[o * w + t.i1];
        }
    }
}

fn resize_plane_adjoint<T: Real>(d: &[T], h: usize, w: usize, th: &[Tap], tw: &[Tap], dst: &mut [T]) {
    let ow = tw.len();
    let mut rows = vec![T::zero(); th.len() * w];
    for o in 0..th.len() {
        for (x, t) in tw.iter().enumerate() {
            let g = d[o * ow + x];
            rows[o * w + t.i0] += T::of(t.w0) * g;
            rows[o * w + t.i1] += T::of(t.w1) * g;
        }
    }
    dst[..h * w].iter_mut().for_each(|v| *v = T::zero());
    for (o, t) in th.iter().enumerate() {
        for x in 0..w {
            let g = rows[o * w + x];
            dst[t.i0 * w + x] += T::of(t.w0) * g;
            dst[t.i1 * w + x] += T::of(t.w1) * g;
        }
    }
}

/// Bilinear spatial resize to `oh × ow`. Same size is an exact copy.
pub fn resize_spatial<T: Real>(x: ArrayView5<T>, oh: usize, ow: usize) -> Array5<T> {
    let (b, c, t, h, w) = x.dim();
    if (oh, ow) == (h, w) {
        return x.to_owned();
    }
    let (th, tw) = (taps(h, oh), taps(w, ow));
    let x = x.as_standard_layout();
    let samples = map_indexed(b, |bi| {
        let xs = x.index_axis(Axis(0), bi);
        let xs = xs.as_slice().expect("standard layout");
        let mut out = Array4::zeros((c, t, oh, ow));
        let dst = out.as_slice_mut().unwrap();
        for p in 0..c * t {
            resize_plane(&xs[p * h * w..(p + 1) * h * w], w, &th, &tw, &mut dst[p * oh * ow..(p + 1) * oh * ow]);
        }
        out
    });
    stack_samples(samples)
}

/// Adjoint of [`resize_spatial`] back to `h × w`.
pub fn resize_spatial_backward<T: Real>(d: &Array5<T>, h: usize, w: usize) -> Array5<T> {
    let (b, c, t, oh, ow) = d.dim();
    if (oh, ow) == (h, w) {
        return d.clone();
    }
    let (th, tw) = (taps(h, oh), taps(w, ow));
    let d = d.as_standard_layout();
    let samples = map_indexed(b, |bi| {
        let ds = d.index_axis(Axis(0), bi);
        let ds = ds.as_slice().expect("standard layout");
        let mut out = Array4::zeros((c, t, h, w));
        let dst = out.as_slice_mut().unwrap();
        for p in 0..c * t {
            resize_plane_adjoint(&ds[p * oh * ow..(p + 1) * oh * ow], h, w, &th, &tw, &mut dst[p * h * w..(p + 1) * h * w]);
        }
        out
    });
    stack_samples(samples)
}

/// Keeps frames `⌊i·T/frames⌋` and resizes to `pixels × pixels`.
pub fn resample<T: Real>(x: ArrayView5<T>, frames: usize, pixels: usize) -> Array5<T> {
    let (_, _, t, h, w) = x.dim();
    let idx = frame_indices(t, frames);
    if idx.len() == t && (h, w) == (pixels, pixels) {
        return x.to_owned();
    }
    let y = select_frames(x, &idx);
    resize_spatial(y.view(), pixels, pixels)
}

/// Row-wise softmax in f64.
pub fn softmax_rows<T: Real>(logits: &Array2<T>) -> Array2<f64> {
    let mut p = logits.mapv(|v| v.f64());
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Row-wise log-softmax in f64.
pub fn log_softmax_rows<T: Real>(logits: &Array2<T>) -> Array2<f64> {
    let mut p = logits.mapv(|v| v.f64());
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    #[test]
    fn frame_index_rule() {
        assert_eq!(frame_indices(8, 4), vec![0, 2, 4, 6]);
        assert_eq!(frame_indices(8, 2), vec![0, 4]);
        assert_eq!(frame_indices(8, 5), vec![0, 1, 3, 4, 6]);
        assert_eq!(frame_indices(8, 8), (0..8).collect::<Vec<_>>());
        assert_eq!(frame_indices(24, 8), vec![0, 3, 6, 9, 12, 15, 18, 21]);
        assert_eq!(frame_indices(8, 0), vec![0]);
    }

    #[test]
    fn resize_identity_is_exact() {
        let x = Array::from_shape_fn((2, 3, 2, 5, 5), |(a, b, c, d, e)| (a + 2 * b + 3 * c + d * e) as f32 * 0.37);
        assert_eq!(resize_spatial(x.view(), 5, 5), x);
    }

    #[test]
    fn resize_preserves_constants() {
        let x = Array5::<f64>::from_elem((1, 2, 1, 7, 9), 2.5);
        let y = resize_spatial(x.view(), 4, 3);
        assert!(y.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        let y = resize_spatial(x.view(), 11, 13);
        assert!(y.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn resize_halving_averages_pairs() {
        let x = Array::from_shape_fn((1, 1, 1, 1, 4), |(.., w)| w as f64);
        let x = x.broadcast((1, 1, 1, 2, 4)).unwrap().to_owned();
        let y = resize_spatial(x.view(), 1, 2);
        assert_eq!(y.into_raw_vec_and_offset().0, vec![0.5, 2.5]);
    }

    #[test]
    fn resize_adjoint_identity() {
        let x = Array::from_shape_fn((2, 2, 2, 7, 6), |(a, b, c, d, e)| ((a * 31 + b * 17 + c * 7 + d * 3 + e) % 11) as f64 - 5.0);
        let d = Array::from_shape_fn((2, 2, 2, 4, 5), |(a, b, c, d, e)| ((a * 13 + b * 5 + c * 3 + d * 7 + e) % 9) as f64 - 4.0);
        let lhs = (&resize_spatial(x.view(), 4, 5) * &d).sum();
        let rhs = (&x * &resize_spatial_backward(&d, 7, 6)).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn select_adjoint_identity() {
        let x = Array::from_shape_fn((1, 2, 8, 2, 2), |(_, b, c, d, e)| (b * 8 + c + d * e) as f64);
        let idx = frame_indices(8, 3);
        let d = Array::from_shape_fn((1, 2, 3, 2, 2), |(_, b, c, d, e)| (b + 2 * c + d + e) as f64);
        let lhs = (&select_frames(x.view(), &idx) * &d).sum();
        let rhs = (&x * &select_frames_backward(&d, &idx, 8)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let l = ndarray::array![[1.0f32, 2.0, 3.0], [1000.0, 0.0, -1000.0]];
        let p = softmax_rows(&l);
        for r in p.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        let lp = log_softmax_rows(&l);
        assert!((lp[[0, 2]].exp() - p[[0, 2]]).abs() < 1e-12);
    }
}
