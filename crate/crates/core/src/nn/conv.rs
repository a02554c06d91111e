//! Strided 2-D convolution and its transpose over NHWC batches, via
//! im2col / col2im and dense matrix products.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Geometry {
    /// Output side of a convolution over an input side of `n`.
    pub fn conv_out(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Output side of a transposed convolution over an input side of `n`.
    pub fn transpose_out(&self, n: usize) -> usize {
        (n - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// Spatial extent of one NHWC batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extent {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Extent {
    pub fn len(&self) -> usize {
        self.batch * self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Patch matrix with one row per output pixel `(b, oy, ox)` and columns
/// ordered `(ky, kx, c)`.
fn im2col(x: &[f64], ext: Extent, g: Geometry, out_h: usize, out_w: usize) -> Array2<f64> {
    let k = g.kernel;
    let c = ext.channels;
    let cols = k * k * c;
    let mut patches = Array2::zeros((ext.batch * out_h * out_w, cols));
    let data = patches.as_slice_mut().expect("standard layout");
    for b in 0..ext.batch {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let row = (b * out_h + oy) * out_w + ox;
                let dst = &mut data[row * cols..(row + 1) * cols];
                for ky in 0..k {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= ext.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= ext.width as isize {
                            continue;
                        }
                        let src = ((b * ext.height + iy as usize) * ext.width + ix as usize) * c;
                        let off = (ky * k + kx) * c;
                        dst[off..off + c].copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
    }
    patches
}

/// Adjoint of [`im2col`]: scatters patch rows back onto the image, summing overlaps.
fn col2im(patches: &Array2<f64>, ext: Extent, g: Geometry, out_h: usize, out_w: usize) -> Vec<f64> {
    let k = g.kernel;
    let c = ext.channels;
    let cols = k * k * c;
    let mut x = vec![0.0; ext.len()];
    let data = patches.as_slice().expect("standard layout");
    for b in 0..ext.batch {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let row = (b * out_h + oy) * out_w + ox;
                let src = &data[row * cols..(row + 1) * cols];
                for ky in 0..k {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= ext.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= ext.width as isize {
                            continue;
                        }
                        let dst = ((b * ext.height + iy as usize) * ext.width + ix as usize) * c;
                        let off = (ky * k + kx) * c;
                        for ch in 0..c {
                            x[dst + ch] += src[off + ch];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Convolution with weight `[k*k*cin, cout]` followed by a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: Geometry,
}

/// What a convolution keeps for its backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    patches: Array2<f64>,
    input: Extent,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            geometry: Geometry { kernel, stride, pad },
        }
    }

    pub fn weight_shape(&self) -> [usize; 2] {
        let k = self.geometry.kernel;
        [k * k * self.in_channels, self.out_channels]
    }

    pub fn weight_len(&self) -> usize {
        let [r, c] = self.weight_shape();
        r * c
    }

    pub fn fan_in(&self) -> usize {
        self.weight_shape()[0]
    }

    pub fn output_extent(&self, input: Extent) -> Extent {
        Extent {
            batch: input.batch,
            height: self.geometry.conv_out(input.height),
            width: self.geometry.conv_out(input.width),
            channels: self.out_channels,
        }
    }

    pub fn forward(&self, weight: &[f64], bias: &[f64], x: &[f64], input: Extent) -> (Vec<f64>, ConvCache) {
        debug_assert_eq!(input.channels, self.in_channels);
        debug_assert_eq!(x.len(), input.len());
        let out = self.output_extent(input);
        let patches = im2col(x, input, self.geometry, out.height, out.width);
        let w = ArrayView2::from_shape(self.weight_shape(), weight).expect("conv weight shape");
        let mut y = Array2::zeros((patches.nrows(), self.out_channels));
        general_mat_mul(1.0, &patches, &w, 0.0, &mut y);
        y += &ArrayView1::from(bias);
        (y.into_raw_vec_and_offset().0, ConvCache { patches, input })
    }

    /// Accumulates `d_weight`/`d_bias` and returns the input gradient.
    pub fn backward(
        &self,
        weight: &[f64],
        cache: &ConvCache,
        d_out: &[f64],
        d_weight: &mut [f64],
        d_bias: &mut [f64],
    ) -> Vec<f64> {
        let out = self.output_extent(cache.input);
        let dy = ArrayView2::from_shape((cache.patches.nrows(), self.out_channels), d_out).expect("conv grad shape");
        let mut dw = ArrayViewMut2::from_shape(self.weight_shape(), d_weight).expect("conv weight shape");
        general_mat_mul(1.0, &cache.patches.t(), &dy, 1.0, &mut dw);
        let mut db = ArrayViewMut1::from(d_bias);
        db += &dy.sum_axis(Axis(0));
        let w = ArrayView2::from_shape(self.weight_shape(), weight).expect("conv weight shape");
        let mut d_patches = Array2::zeros(cache.patches.raw_dim());
        general_mat_mul(1.0, &dy, &w.t(), 0.0, &mut d_patches);
        col2im(&d_patches, cache.input, self.geometry, out.height, out.width)
    }
}

/// Transposed convolution: the adjoint of a [`Conv2d`] from `out_channels`
/// to `in_channels`, with weight `[k*k*cout, cin]`, plus a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: Geometry,
}

#[derive(Debug, Clone)]
pub struct ConvTransposeCache {
    input: Vec<f64>,
    input_extent: Extent,
}

impl ConvTranspose2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            geometry: Geometry { kernel, stride, pad },
        }
    }

    pub fn weight_shape(&self) -> [usize; 2] {
        let k = self.geometry.kernel;
        [k * k * self.out_channels, self.in_channels]
    }

    pub fn weight_len(&self) -> usize {
        let [r, c] = self.weight_shape();
        r * c
    }

    pub fn fan_in(&self) -> usize {
        // each output pixel receives about k*k*cin/stride^2 contributions
        let k = self.geometry.kernel;
        (k * k * self.in_channels / (self.geometry.stride * self.geometry.stride)).max(1)
    }

    pub fn output_extent(&self, input: Extent) -> Extent {
        Extent {
            batch: input.batch,
            height: self.geometry.transpose_out(input.height),
            width: self.geometry.transpose_out(input.width),
            channels: self.out_channels,
        }
    }

    pub fn forward(&self, weight: &[f64], bias: &[f64], x: &[f64], input: Extent) -> (Vec<f64>, ConvTransposeCache) {
        debug_assert_eq!(input.channels, self.in_channels);
        debug_assert_eq!(x.len(), input.len());
        let out = self.output_extent(input);
        let rows = input.batch * input.height * input.width;
        let xm = ArrayView2::from_shape((rows, self.in_channels), x).expect("convT input shape");
        let w = ArrayView2::from_shape(self.weight_shape(), weight).expect("convT weight shape");
        let mut patches = Array2::zeros((rows, self.weight_shape()[0]));
        general_mat_mul(1.0, &xm, &w.t(), 0.0, &mut patches);
        let mut y = col2im(&patches, out, self.geometry, input.height, input.width);
        for px in y.chunks_exact_mut(self.out_channels) {
            for (v, b) in px.iter_mut().zip(bias) {
                *v += b;
            }
        }
        (
            y,
            ConvTransposeCache {
                input: x.to_vec(),
                input_extent: input,
            },
        )
    }

    pub fn backward(
        &self,
        weight: &[f64],
        cache: &ConvTransposeCache,
        d_out: &[f64],
        d_weight: &mut [f64],
        d_bias: &mut [f64],
    ) -> Vec<f64> {
        let input = cache.input_extent;
        let out = self.output_extent(input);
        for px in d_out.chunks_exact(self.out_channels) {
            for (db, g) in d_bias.iter_mut().zip(px) {
                *db += g;
            }
        }
        let d_patches = im2col(d_out, out, self.geometry, input.height, input.width);
        let rows = d_patches.nrows();
        let xm = ArrayView2::from_shape((rows, self.in_channels), &cache.input).expect("convT input shape");
        let mut dw = ArrayViewMut2::from_shape(self.weight_shape(), d_weight).expect("convT weight shape");
        general_mat_mul(1.0, &d_patches.t(), &xm, 1.0, &mut dw);
        let w = ArrayView2::from_shape(self.weight_shape(), weight).expect("convT weight shape");
        let mut dx = Array2::zeros((rows, self.in_channels));
        general_mat_mul(1.0, &d_patches, &w, 0.0, &mut dx);
        dx.into_raw_vec_and_offset().0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct nested-loop convolution used as the reference.
    fn naive_conv(conv: &Conv2d, w: &[f64], b: &[f64], x: &[f64], ext: Extent) -> Vec<f64> {
        let out = conv.output_extent(ext);
        let g = conv.geometry;
        let mut y = vec![0.0; out.len()];
        for n in 0..ext.batch {
            for oy in 0..out.height {
                for ox in 0..out.width {
                    for co in 0..conv.out_channels {
                        let mut acc = b[co];
                        for ky in 0..g.kernel {
                            for kx in 0..g.kernel {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= ext.height as isize || ix >= ext.width as isize {
                                    continue;
                                }
                                for ci in 0..conv.in_channels {
                                    let xv = x[((n * ext.height + iy as usize) * ext.width + ix as usize) * ext.channels + ci];
                                    let wv = w[((ky * g.kernel + kx) * conv.in_channels + ci) * conv.out_channels + co];
                                    acc += xv * wv;
                                }
                            }
                        }
                        y[((n * out.height + oy) * out.width + ox) * out.channels + co] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv2d::new(3, 2, 4, 2, 1);
        let ext = Extent { batch: 2, height: 8, width: 6, channels: 3 };
        let w = random(conv.weight_len(), &mut rng);
        let b = random(2, &mut rng);
        let x = random(ext.len(), &mut rng);
        let (y, _) = conv.forward(&w, &b, &x, ext);
        let reference = naive_conv(&conv, &w, &b, &x, ext);
        for (a, r) in y.iter().zip(&reference) {
            assert!((a - r).abs() < 1e-12);
        }
        assert_eq!(conv.output_extent(ext).height, 4);
        assert_eq!(conv.output_extent(ext).width, 3);
    }

    #[test]
    fn transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> with shared weights and no bias
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv2d::new(2, 3, 4, 2, 1);
        let convt = ConvTranspose2d::new(3, 2, 4, 2, 1);
        assert_eq!(conv.weight_len(), convt.weight_len());
        let ext = Extent { batch: 1, height: 8, width: 8, channels: 2 };
        let out = conv.output_extent(ext);
        let w = random(conv.weight_len(), &mut rng);
        let x = random(ext.len(), &mut rng);
        let y = random(out.len(), &mut rng);
        let (cx, _) = conv.forward(&w, &[0.0; 3], &x, ext);
        let (ty, _) = convt.forward(&w, &[0.0; 2], &y, out);
        assert_eq!(ty.len(), x.len());
        let lhs: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&ty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    fn check_grads(
        forward: &dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64>,
        backward: &dyn Fn(&[f64], &[f64], &[f64], &[f64], &mut [f64], &mut [f64]) -> Vec<f64>,
        w: Vec<f64>,
        b: Vec<f64>,
        x: Vec<f64>,
        probe: Vec<f64>,
    ) {
        let loss = |w: &[f64], b: &[f64], x: &[f64]| -> f64 { forward(w, b, x).iter().zip(&probe).map(|(a, p)| a * p).sum() };
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; b.len()];
        let dx = backward(&w, &b, &x, &probe, &mut dw, &mut db);
        let h = 1e-6;
        let numeric = |f: &dyn Fn(f64) -> f64| (f(h) - f(-h)) / (2.0 * h);
        for i in 0..w.len() {
            let n = numeric(&|d| {
                let mut w2 = w.clone();
                w2[i] += d;
                loss(&w2, &b, &x)
            });
            assert!((n - dw[i]).abs() < 1e-6, "dw[{i}]");
        }
        for i in 0..b.len() {
            let n = numeric(&|d| {
                let mut b2 = b.clone();
                b2[i] += d;
                loss(&w, &b2, &x)
            });
            assert!((n - db[i]).abs() < 1e-6, "db[{i}]");
        }
        for i in 0..x.len() {
            let n = numeric(&|d| {
                let mut x2 = x.clone();
                x2[i] += d;
                loss(&w, &b, &x2)
            });
            assert!((n - dx[i]).abs() < 1e-6, "dx[{i}]");
        }
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = Conv2d::new(2, 3, 4, 2, 1);
        let ext = Extent { batch: 2, height: 4, width: 4, channels: 2 };
        let out = conv.output_extent(ext);
        check_grads(
            &|w, b, x| conv.forward(w, b, x, ext).0,
            &|w, b, x, dy, dw, db| {
                let (_, cache) = conv.forward(w, b, x, ext);
                conv.backward(w, &cache, dy, dw, db)
            },
            random(conv.weight_len(), &mut rng),
            random(3, &mut rng),
            random(ext.len(), &mut rng),
            random(out.len(), &mut rng),
        );
    }

    #[test]
    fn conv_transpose_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let convt = ConvTranspose2d::new(3, 2, 4, 2, 1);
        let ext = Extent { batch: 2, height: 2, width: 2, channels: 3 };
        let out = convt.output_extent(ext);
        assert_eq!((out.height, out.width), (4, 4));
        check_grads(
            &|w, b, x| convt.forward(w, b, x, ext).0,
            &|w, b, x, dy, dw, db| {
                let (_, cache) = convt.forward(w, b, x, ext);
                convt.backward(w, &cache, dy, dw, db)
            },
            random(convt.weight_len(), &mut rng),
            random(2, &mut rng),
            random(ext.len(), &mut rng),
            random(out.len(), &mut rng),
        );
    }
}
