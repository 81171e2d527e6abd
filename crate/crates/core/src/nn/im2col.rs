//! Patch unfolding for 3-D convolutions of one sample `[C, T, H, W]`.

use crate::real::Real;

/// Input/output geometry of one 3-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn new(channels: usize, input: [usize; 3], kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Option<Self> {
        let mut output = [0; 3];
        for d in 0..3 {
            let span = input[d] + 2 * padding[d];
            if span < kernel[d] {
                return None;
            }
            output[d] = (span - kernel[d]) / stride[d] + 1;
        }
        Some(Self {
            channels,
            input,
            kernel,
            stride,
            padding,
            output,
        })
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel.iter().product::<usize>()
    }

    pub fn cols(&self) -> usize {
        self.output.iter().product()
    }

    /// 1×1×1, unit stride, no padding: the input already is the column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.padding == [0, 0, 0]
    }

    /// Output indices `o` along axis `d` whose source `o·s + k − p` is in range.
    fn valid(&self, d: usize, k: usize) -> (usize, usize) {
        let (s, p, n, o) = (self.stride[d], self.padding[d], self.input[d], self.output[d]);
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        let hi = if n + p > k { ((n + p - k - 1) / s + 1).min(o) } else { 0 };
        (lo, hi.max(lo))
    }
}

/// Unfolds `x` (`[C, T, H, W]`, row-major) into `out` (`[C·Kt·Kh·Kw, To·Ho·Wo]`),
/// overwriting every entry; padded positions become zero.
pub fn im2col<T: Real>(x: &[T], g: &ConvGeom, out: &mut [T]) {
    let [t, h, w] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let [ot, oh, ow] = g.output;
    let ncol = ot * oh * ow;
    let mut row = 0;
    for c in 0..g.channels {
        let xc = &x[c * t * h * w..(c + 1) * t * h * w];
        for a in 0..kt {
            let (t0, t1) = g.valid(0, a);
            for b in 0..kh {
                let (h0, h1) = g.valid(1, b);
                for e in 0..kw {
                    let (w0, w1) = g.valid(2, e);
                    let dst = &mut out[row * ncol..(row + 1) * ncol];
                    dst[..t0 * oh * ow].fill(T::zero());
                    dst[t1 * oh * ow..].fill(T::zero());
                    for to in t0..t1 {
                        let ti = to * st + a - pt;
                        let plane = &mut dst[to * oh * ow..(to + 1) * oh * ow];
                        plane[..h0 * ow].fill(T::zero());
                        plane[h1 * ow..].fill(T::zero());
                        for ho in h0..h1 {
                            let hi = ho * sh + b - ph;
                            let src = &xc[(ti * h + hi) * w..(ti * h + hi + 1) * w];
                            let line = &mut plane[ho * ow..(ho + 1) * ow];
                            line[..w0].fill(T::zero());
                            line[w1..].fill(T::zero());
                            if w1 > w0 {
                                let first = w0 * sw + e - pw;
                                if sw == 1 {
                                    line[w0..w1].copy_from_slice(&src[first..first + w1 - w0]);
                                } else {
                                    for (d, s) in line[w0..w1].iter_mut().zip(src[first..].iter().step_by(sw)) {
                                        *d = *s;
                                    }
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Folds column gradients back onto the input, accumulating into `dx`.
pub fn col2im<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let [t, h, w] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let [ot, oh, ow] = g.output;
    let ncol = ot * oh * ow;
    let mut row = 0;
    for c in 0..g.channels {
        let xc = &mut dx[c * t * h * w..(c + 1) * t * h * w];
        for a in 0..kt {
            let (t0, t1) = g.valid(0, a);
            for b in 0..kh {
                let (h0, h1) = g.valid(1, b);
                for e in 0..kw {
                    let (w0, w1) = g.valid(2, e);
                    let src = &cols[row * ncol..(row + 1) * ncol];
                    row += 1;
                    if w1 <= w0 {
                        continue;
                    }
                    let first = w0 * sw + e - pw;
                    for to in t0..t1 {
                        let ti = to * st + a - pt;
                        for ho in h0..h1 {
                            let hi = ho * sh + b - ph;
                            let dst = &mut xc[(ti * h + hi) * w..(ti * h + hi + 1) * w];
                            let base = (to * oh + ho) * ow;
                            let line = &src[base + w0..base + w1];
                            if sw == 1 {
                                for (d, s) in dst[first..first + w1 - w0].iter_mut().zip(line) {
                                    *d += *s;
                                }
                            } else {
                                for (d, s) in dst[first..].iter_mut().step_by(sw).zip(line) {
                                    *d += *s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
