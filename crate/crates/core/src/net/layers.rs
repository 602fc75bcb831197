//! Forward and backward passes of the three layer types, on flat
//! channel-major (`C x H x W`) buffers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::net::spec::Activation;

/// A `channels x height x width` stack of images.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::LengthMismatch { expected: channels * height * width, found: data.len() });
        }
        Ok(Tensor3 { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor3 { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Bank of 3x3 filters, `out_c x in_c x 3 x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filters {
    pub out_c: usize,
    pub in_c: usize,
    pub data: Vec<f64>,
}

/// Stride-`stride` 3x3 convolution with one pixel of zero padding; output
/// pixel `(y, x)` is centered on input pixel `(stride·y, stride·x)`, so each
/// side becomes `ceil(n / stride)`.
pub fn conv2d_forward(
    input: &Tensor3,
    filters: &Filters,
    biases: &[f64],
    stride: usize,
    activation: Activation,
) -> Result<Tensor3> {
    if filters.in_c != input.channels || filters.data.len() != filters.out_c * filters.in_c * 9 {
        return Err(Error::ShapeMismatch(format!(
            "filters {}x{}x3x3 cannot convolve a {}-channel input",
            filters.out_c, filters.in_c, input.channels
        )));
    }
    if biases.len() != filters.out_c {
        return Err(Error::LengthMismatch { expected: filters.out_c, found: biases.len() });
    }
    if !(stride == 1 || stride == 2) {
        return Err(Error::ShapeMismatch(format!("stride {stride} not supported")));
    }
    let geom = ConvGeom { in_c: input.channels, out_c: filters.out_c, in_h: input.height, in_w: input.width, stride };
    let mut z = vec![0.0; geom.out_len()];
    conv_affine(&geom, &input.data, &filters.data, biases, &mut z);
    Ok(Tensor3 {
        channels: geom.out_c,
        height: geom.out_h(),
        width: geom.out_w(),
        data: z.into_iter().map(|v| activation.apply(v)).collect(),
    })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.in_h.div_ceil(self.stride)
    }
    pub fn out_w(&self) -> usize {
        self.in_w.div_ceil(self.stride)
    }
    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h() * self.out_w()
    }
}

// Calls `f(out_index, in_index, weight_index)` for every in-bounds tap of a
// strided 3x3 convolution.
#[inline]
fn for_each_tap(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize)) {
    let (oh, ow) = (g.out_h(), g.out_w());
    for o in 0..g.out_c {
        for c in 0..g.in_c {
            for ky in 0..3 {
                for kx in 0..3 {
                    let wi = ((o * g.in_c + c) * 3 + ky) * 3 + kx;
                    for y in 0..oh {
                        let iy = (g.stride * y + ky) as isize - 1;
                        if iy < 0 || iy >= g.in_h as isize {
                            continue;
                        }
                        for x in 0..ow {
                            let ix = (g.stride * x + kx) as isize - 1;
                            if ix < 0 || ix >= g.in_w as isize {
                                continue;
                            }
                            let ii = (c * g.in_h + iy as usize) * g.in_w + ix as usize;
                            let oi = (o * oh + y) * ow + x;
                            f(oi, ii, wi);
                        }
                    }
                }
            }
        }
    }
}

/// Pre-activation `z = b + W * input`.
pub(crate) fn conv_affine(g: &ConvGeom, input: &[f64], w: &[f64], b: &[f64], z: &mut [f64]) {
    let plane = g.out_h() * g.out_w();
    for o in 0..g.out_c {
        z[o * plane..(o + 1) * plane].fill(b[o]);
    }
    for_each_tap(g, |oi, ii, wi| z[oi] += w[wi] * input[ii]);
}

/// Accumulates `dW`, `db` and (optionally) `d input` from `dz`.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    w: &[f64],
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let plane = g.out_h() * g.out_w();
    for o in 0..g.out_c {
        db[o] += dz[o * plane..(o + 1) * plane].iter().sum::<f64>();
    }
    match dinput {
        Some(di) => for_each_tap(g, |oi, ii, wi| {
            dw[wi] += dz[oi] * input[ii];
            di[ii] += dz[oi] * w[wi];
        }),
        None => for_each_tap(g, |oi, ii, wi| dw[wi] += dz[oi] * input[ii]),
    }
}

/// Geometry of a stride-2 transpose convolution: the adjoint of a stride-2
/// convolution from a `2h x 2w` image, so each side doubles. Filters are
/// stored `in_c x out_c x 3 x 3`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl TConvGeom {
    pub fn out_h(&self) -> usize {
        2 * self.in_h
    }
    pub fn out_w(&self) -> usize {
        2 * self.in_w
    }

    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (oh, ow) = (self.out_h() as isize, self.out_w() as isize);
        for c in 0..self.in_c {
            for o in 0..self.out_c {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wi = ((c * self.out_c + o) * 3 + ky) * 3 + kx;
                        for y in 0..self.in_h {
                            let oy = (2 * y + ky) as isize - 1;
                            if oy < 0 || oy >= oh {
                                continue;
                            }
                            for x in 0..self.in_w {
                                let ox = (2 * x + kx) as isize - 1;
                                if ox < 0 || ox >= ow {
                                    continue;
                                }
                                let ii = (c * self.in_h + y) * self.in_w + x;
                                let oi = (o * oh as usize + oy as usize) * ow as usize + ox as usize;
                                f(oi, ii, wi);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn tconv_affine(g: &TConvGeom, input: &[f64], w: &[f64], b: &[f64], z: &mut [f64]) {
    let plane = g.out_h() * g.out_w();
    for o in 0..g.out_c {
        z[o * plane..(o + 1) * plane].fill(b[o]);
    }
    g.for_each_tap(|oi, ii, wi| z[oi] += w[wi] * input[ii]);
}

pub(crate) fn tconv_backward(
    g: &TConvGeom,
    input: &[f64],
    w: &[f64],
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let plane = g.out_h() * g.out_w();
    for o in 0..g.out_c {
        db[o] += dz[o * plane..(o + 1) * plane].iter().sum::<f64>();
    }
    match dinput {
        Some(di) => g.for_each_tap(|oi, ii, wi| {
            dw[wi] += dz[oi] * input[ii];
            di[ii] += dz[oi] * w[wi];
        }),
        None => g.for_each_tap(|oi, ii, wi| dw[wi] += dz[oi] * input[ii]),
    }
}

/// Stride-2 transpose convolution with an activation, on a [`Tensor3`].
/// The bank's data is laid out `in_c x out_c x 3 x 3`.
pub fn tconv2d_forward(input: &Tensor3, filters: &Filters, biases: &[f64], activation: Activation) -> Result<Tensor3> {
    if filters.in_c != input.channels || filters.data.len() != filters.out_c * filters.in_c * 9 {
        return Err(Error::ShapeMismatch(format!(
            "transpose filters {}x{}x3x3 cannot read a {}-channel input",
            filters.in_c, filters.out_c, input.channels
        )));
    }
    if biases.len() != filters.out_c {
        return Err(Error::LengthMismatch { expected: filters.out_c, found: biases.len() });
    }
    let g = TConvGeom { in_c: input.channels, out_c: filters.out_c, in_h: input.height, in_w: input.width };
    let mut z = vec![0.0; g.out_c * g.out_h() * g.out_w()];
    tconv_affine(&g, &input.data, &filters.data, biases, &mut z);
    Ok(Tensor3 {
        channels: g.out_c,
        height: g.out_h(),
        width: g.out_w(),
        data: z.into_iter().map(|v| activation.apply(v)).collect(),
    })
}

/// `z = W x + b` with `W` stored row-major `n_out x n_in`.
pub(crate) fn dense_affine(n_in: usize, n_out: usize, x: &[f64], w: &[f64], b: &[f64], z: &mut [f64]) {
    for o in 0..n_out {
        let row = &w[o * n_in..(o + 1) * n_in];
        z[o] = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

pub(crate) fn dense_backward(
    n_in: usize,
    n_out: usize,
    x: &[f64],
    w: &[f64],
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    for o in 0..n_out {
        db[o] += dz[o];
        let row = &mut dw[o * n_in..(o + 1) * n_in];
        for (r, xi) in row.iter_mut().zip(x) {
            *r += dz[o] * xi;
        }
    }
    if let Some(dx) = dx {
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            for (d, wi) in dx.iter_mut().zip(row) {
                *d += dz[o] * wi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn seeded(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::stream(seed, 9);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn centered_delta_filter_is_identity() {
        let input = Tensor3::new(1, 5, 4, seeded(20, 1)).unwrap();
        let mut f = vec![0.0; 9];
        f[4] = 1.0;
        let out = conv2d_forward(&input, &Filters { out_c: 1, in_c: 1, data: f }, &[0.0], 1, Activation::Identity).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn zero_filter_gives_bias() {
        let input = Tensor3::new(2, 6, 6, seeded(72, 2)).unwrap();
        let f = Filters { out_c: 3, in_c: 2, data: vec![0.0; 54] };
        let relu = Activation::LeakyRelu { slope: 0.0 };
        let out = conv2d_forward(&input, &f, &[0.7; 3], 2, relu).unwrap();
        assert_eq!((out.channels, out.height, out.width), (3, 3, 3));
        assert!(out.data.iter().all(|&v| v == 0.7));
    }

    // Naive reference written directly from the defining sum.
    fn reference_conv(input: &Tensor3, f: &Filters, b: &[f64], stride: usize) -> Tensor3 {
        let oh = (input.height + stride - 1) / stride;
        let ow = (input.width + stride - 1) / stride;
        let mut out = Tensor3::zeros(f.out_c, oh, ow);
        for o in 0..f.out_c {
            for y1 in 0..oh {
                for x1 in 0..ow {
                    let (y0, x0) = ((stride * y1) as i64, (stride * x1) as i64);
                    let mut acc = b[o];
                    for c in 0..f.in_c {
                        for i in -1i64..=1 {
                            for j in -1i64..=1 {
                                let (yy, xx) = (y0 + i, x0 + j);
                                if yy < 0 || xx < 0 || yy >= input.height as i64 || xx >= input.width as i64 {
                                    continue;
                                }
                                let wv = f.data[((o * f.in_c + c) * 3 + (i + 1) as usize) * 3 + (j + 1) as usize];
                                acc += wv * input.at(c, yy as usize, xx as usize);
                            }
                        }
                    }
                    out.data[(o * oh + y1) * ow + x1] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn stride_two_matches_naive_loops() {
        let input = Tensor3::new(1, 6, 6, seeded(36, 3)).unwrap();
        let f = Filters { out_c: 2, in_c: 1, data: seeded(18, 4) };
        let b = [0.3, -0.2];
        let got = conv2d_forward(&input, &f, &b, 2, Activation::Identity).unwrap();
        let want = reference_conv(&input, &f, &b, 2);
        assert_eq!((got.height, got.width), (3, 3));
        for (a, w) in got.data.iter().zip(&want.data) {
            assert!((a - w).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_conv_is_adjoint_of_strided_conv() {
        // <conv(u), v> == <u, tconv(v)> with shared weights and zero bias
        let (in_c, out_c, h) = (2, 3, 6);
        let u = seeded(in_c * h * h, 5);
        let v = seeded(out_c * 3 * 3, 6);
        let w = seeded(out_c * in_c * 9, 7);
        let g = ConvGeom { in_c, out_c, in_h: h, in_w: h, stride: 2 };
        let mut cu = vec![0.0; g.out_len()];
        conv_affine(&g, &u, &w, &vec![0.0; out_c], &mut cu);
        let lhs: f64 = cu.iter().zip(&v).map(|(a, b)| a * b).sum();
        // conv weights o x c x 3 x 3 read as the transpose bank's in_c x out_c layout
        let tg = TConvGeom { in_c: out_c, out_c: in_c, in_h: 3, in_w: 3 };
        let mut tv = vec![0.0; in_c * h * h];
        tconv_affine(&tg, &v, &w, &vec![0.0; in_c], &mut tv);
        let rhs: f64 = u.iter().zip(&tv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn shape_errors() {
        let input = Tensor3::zeros(2, 4, 4);
        let f = Filters { out_c: 1, in_c: 3, data: vec![0.0; 27] };
        assert!(conv2d_forward(&input, &f, &[0.0], 2, Activation::Identity).is_err());
        let f = Filters { out_c: 1, in_c: 2, data: vec![0.0; 18] };
        assert!(conv2d_forward(&input, &f, &[0.0], 3, Activation::Identity).is_err());
    }
}
