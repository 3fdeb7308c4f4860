//! Dense HWC tensors and the primitive ops the network is assembled from.
//!
//! Layout is row-major height x width x channels with no batch dimension:
//! `data[(y * width + x) * channels + c]`. All ops are pure and return new
//! tensors; parallel sections split work by output row, so results are
//! bit-identical at any thread count.

use rayon::prelude::*;

use crate::{Error, Result};

/// Dense H x W x C grid of f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::config("tensor dims must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "tensor data length {} != {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { height, width, channels, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// The C contiguous values at pixel (y, x).
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f32> {
        self.data.iter()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Full-convolution weights: kernel `[kH, kW, inC, outC]` plus bias.
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub kernel: Vec<f32>,
    pub kh: usize,
    pub kw: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub bias: Vec<f32>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn new(
        kernel: Vec<f32>,
        kh: usize,
        kw: usize,
        in_c: usize,
        out_c: usize,
        bias: Vec<f32>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if kh == 0 || kw == 0 || in_c == 0 || out_c == 0 {
            return Err(Error::config("kernel dims must be positive"));
        }
        if stride == 0 {
            return Err(Error::config("stride must be positive"));
        }
        if kernel.len() != kh * kw * in_c * out_c {
            return Err(Error::shape(format!(
                "kernel length {} != {}x{}x{}x{}",
                kernel.len(),
                kh,
                kw,
                in_c,
                out_c
            )));
        }
        if bias.len() != out_c {
            return Err(Error::shape(format!(
                "bias length {} != out channels {}",
                bias.len(),
                out_c
            )));
        }
        Ok(Self { kernel, kh, kw, in_c, out_c, bias, stride, padding })
    }
}

/// Per-channel spatial convolution weights: kernel `[kH, kW, C]` plus bias.
#[derive(Debug, Clone)]
pub struct DepthwiseParams {
    pub kernel: Vec<f32>,
    pub kh: usize,
    pub kw: usize,
    pub channels: usize,
    pub bias: Vec<f32>,
    pub stride: usize,
    pub padding: usize,
}

impl DepthwiseParams {
    pub fn new(
        kernel: Vec<f32>,
        kh: usize,
        kw: usize,
        channels: usize,
        bias: Vec<f32>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if kh == 0 || kw == 0 || channels == 0 {
            return Err(Error::config("kernel dims must be positive"));
        }
        if stride == 0 {
            return Err(Error::config("stride must be positive"));
        }
        if kernel.len() != kh * kw * channels {
            return Err(Error::shape(format!(
                "depthwise kernel length {} != {}x{}x{}",
                kernel.len(),
                kh,
                kw,
                channels
            )));
        }
        if bias.len() != channels {
            return Err(Error::shape(format!(
                "bias length {} != channels {}",
                bias.len(),
                channels
            )));
        }
        Ok(Self { kernel, kh, kw, channels, bias, stride, padding })
    }
}

/// Batch normalization parameters, one entry per channel.
#[derive(Debug, Clone)]
pub struct BatchNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub variance: Vec<f32>,
    pub epsilon: f32,
}

pub const BATCHNORM_DEFAULT_EPSILON: f32 = 1e-3;

impl BatchNormParams {
    pub fn new(
        gamma: Vec<f32>,
        beta: Vec<f32>,
        mean: Vec<f32>,
        variance: Vec<f32>,
        epsilon: f32,
    ) -> Result<Self> {
        let n = gamma.len();
        if beta.len() != n || mean.len() != n || variance.len() != n {
            return Err(Error::shape("batchnorm arrays must share one length"));
        }
        if epsilon <= 0.0 {
            return Err(Error::config("batchnorm epsilon must be positive"));
        }
        if variance.iter().any(|&v| v < 0.0) {
            return Err(Error::config("batchnorm variance must be non-negative"));
        }
        Ok(Self { gamma, beta, mean, variance, epsilon })
    }
}

/// `floor((in + 2*pad - k) / stride) + 1`, or an error when the window
/// does not fit.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::config(format!(
            "kernel {} does not fit input {} with padding {}",
            kernel, input, padding
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

// Rough MAC count below which row-parallelism costs more than it saves.
const PAR_MIN_MACS: usize = 32_768;

/// Zero-padded 2-D convolution.
pub fn conv2d(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    if input.channels != params.in_c {
        return Err(Error::shape(format!(
            "conv2d: input has {} channels, kernel expects {}",
            input.channels, params.in_c
        )));
    }
    let out_h = conv_output_dim(input.height, params.kh, params.stride, params.padding)?;
    let out_w = conv_output_dim(input.width, params.kw, params.stride, params.padding)?;
    let out_c = params.out_c;

    let macs = out_h * out_w * out_c * params.kh * params.kw * params.in_c;
    let mut data = vec![0.0f32; out_h * out_w * out_c];

    let row_job = |oy: usize, row: &mut [f32]| {
        let mut acc = vec![0.0f32; out_c];
        for ox in 0..out_w {
            acc.copy_from_slice(&params.bias);
            for ky in 0..params.kh {
                let iy = (oy * params.stride + ky) as isize - params.padding as isize;
                if iy < 0 || iy >= input.height as isize {
                    continue;
                }
                for kx in 0..params.kw {
                    let ix = (ox * params.stride + kx) as isize - params.padding as isize;
                    if ix < 0 || ix >= input.width as isize {
                        continue;
                    }
                    let px = input.pixel(iy as usize, ix as usize);
                    let wbase = ((ky * params.kw + kx) * params.in_c) * out_c;
                    for (ci, &iv) in px.iter().enumerate() {
                        let wrow = &params.kernel[wbase + ci * out_c..wbase + (ci + 1) * out_c];
                        for (a, &w) in acc.iter_mut().zip(wrow) {
                            *a += iv * w;
                        }
                    }
                }
            }
            row[ox * out_c..(ox + 1) * out_c].copy_from_slice(&acc);
        }
    };

    if macs >= PAR_MIN_MACS {
        data.par_chunks_mut(out_w * out_c)
            .enumerate()
            .for_each(|(oy, row)| row_job(oy, row));
    } else {
        for (oy, row) in data.chunks_mut(out_w * out_c).enumerate() {
            row_job(oy, row);
        }
    }

    Tensor::new(out_h, out_w, out_c, data)
}

/// Per-channel spatial convolution; channel count is preserved.
pub fn depthwise_conv2d(input: &Tensor, params: &DepthwiseParams) -> Result<Tensor> {
    if input.channels != params.channels {
        return Err(Error::shape(format!(
            "depthwise_conv2d: input has {} channels, kernel expects {}",
            input.channels, params.channels
        )));
    }
    let out_h = conv_output_dim(input.height, params.kh, params.stride, params.padding)?;
    let out_w = conv_output_dim(input.width, params.kw, params.stride, params.padding)?;
    let c = params.channels;

    let macs = out_h * out_w * c * params.kh * params.kw;
    let mut data = vec![0.0f32; out_h * out_w * c];

    let row_job = |oy: usize, row: &mut [f32]| {
        for ox in 0..out_w {
            let acc = &mut row[ox * c..(ox + 1) * c];
            acc.copy_from_slice(&params.bias);
            for ky in 0..params.kh {
                let iy = (oy * params.stride + ky) as isize - params.padding as isize;
                if iy < 0 || iy >= input.height as isize {
                    continue;
                }
                for kx in 0..params.kw {
                    let ix = (ox * params.stride + kx) as isize - params.padding as isize;
                    if ix < 0 || ix >= input.width as isize {
                        continue;
                    }
                    let px = input.pixel(iy as usize, ix as usize);
                    let krow = &params.kernel[(ky * params.kw + kx) * c..(ky * params.kw + kx + 1) * c];
                    for ((a, &iv), &w) in acc.iter_mut().zip(px).zip(krow) {
                        *a += iv * w;
                    }
                }
            }
        }
    };

    if macs >= PAR_MIN_MACS {
        data.par_chunks_mut(out_w * c)
            .enumerate()
            .for_each(|(oy, row)| row_job(oy, row));
    } else {
        for (oy, row) in data.chunks_mut(out_w * c).enumerate() {
            row_job(oy, row);
        }
    }

    Tensor::new(out_h, out_w, c, data)
}

/// 1x1 convolution: conv2d with k=1, stride 1, padding 0.
pub fn pointwise_conv(input: &Tensor, weights: &[f32], out_c: usize, bias: &[f32]) -> Result<Tensor> {
    let params = ConvParams::new(
        weights.to_vec(),
        1,
        1,
        input.channels,
        out_c,
        bias.to_vec(),
        1,
        0,
    )?;
    conv2d(input, &params)
}

/// Elementwise `min(max(x, 0), 6)`.
pub fn relu6(input: &Tensor) -> Tensor {
    input.map(|v| v.clamp(0.0, 6.0))
}

/// Folds batch normalization into convolution weights:
/// `W' = W * g / sqrt(var + eps)`, `b' = beta + (b - mean) * g / sqrt(var + eps)`.
pub fn fold_batchnorm(conv: &ConvParams, bn: &BatchNormParams) -> Result<ConvParams> {
    if bn.gamma.len() != conv.out_c {
        return Err(Error::shape(format!(
            "fold_batchnorm: bn arrays length {} != out channels {}",
            bn.gamma.len(),
            conv.out_c
        )));
    }
    let scale: Vec<f32> = bn
        .gamma
        .iter()
        .zip(&bn.variance)
        .map(|(&g, &v)| g / (v + bn.epsilon).sqrt())
        .collect();

    let mut folded = conv.clone();
    for chunk in folded.kernel.chunks_mut(conv.out_c) {
        for (w, &s) in chunk.iter_mut().zip(&scale) {
            *w *= s;
        }
    }
    for co in 0..conv.out_c {
        folded.bias[co] = bn.beta[co] + (conv.bias[co] - bn.mean[co]) * scale[co];
    }
    Ok(folded)
}

/// Same fold for depthwise weights, whose output channel is the channel axis.
pub fn fold_batchnorm_depthwise(
    conv: &DepthwiseParams,
    bn: &BatchNormParams,
) -> Result<DepthwiseParams> {
    if bn.gamma.len() != conv.channels {
        return Err(Error::shape(format!(
            "fold_batchnorm: bn arrays length {} != channels {}",
            bn.gamma.len(),
            conv.channels
        )));
    }
    let scale: Vec<f32> = bn
        .gamma
        .iter()
        .zip(&bn.variance)
        .map(|(&g, &v)| g / (v + bn.epsilon).sqrt())
        .collect();

    let mut folded = conv.clone();
    for chunk in folded.kernel.chunks_mut(conv.channels) {
        for (w, &s) in chunk.iter_mut().zip(&scale) {
            *w *= s;
        }
    }
    for c in 0..conv.channels {
        folded.bias[c] = bn.beta[c] + (conv.bias[c] - bn.mean[c]) * scale[c];
    }
    Ok(folded)
}

/// Bilinear resize with half-pixel centers: `src = (dst + 0.5) * scale - 0.5`.
pub fn resize_bilinear(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::config("resize target dims must be positive"));
    }
    let (in_h, in_w, c) = image.shape();
    let scale_y = in_h as f32 / out_h as f32;
    let scale_x = in_w as f32 / out_w as f32;

    let mut data = vec![0.0f32; out_h * out_w * c];
    for oy in 0..out_h {
        let sy = ((oy as f32 + 0.5) * scale_y - 0.5).max(0.0);
        let y0 = (sy as usize).min(in_h - 1);
        let y1 = (y0 + 1).min(in_h - 1);
        let fy = (sy - y0 as f32).clamp(0.0, 1.0);
        for ox in 0..out_w {
            let sx = ((ox as f32 + 0.5) * scale_x - 0.5).max(0.0);
            let x0 = (sx as usize).min(in_w - 1);
            let x1 = (x0 + 1).min(in_w - 1);
            let fx = (sx - x0 as f32).clamp(0.0, 1.0);

            let p00 = image.pixel(y0, x0);
            let p01 = image.pixel(y0, x1);
            let p10 = image.pixel(y1, x0);
            let p11 = image.pixel(y1, x1);
            let out = &mut data[(oy * out_w + ox) * c..(oy * out_w + ox + 1) * c];
            for ch in 0..c {
                let top = p00[ch] + (p01[ch] - p00[ch]) * fx;
                let bot = p10[ch] + (p11[ch] - p10[ch]) * fx;
                out[ch] = top + (bot - top) * fy;
            }
        }
    }
    Tensor::new(out_h, out_w, c, data)
}

/// Maps byte-range values to `[-1, 1]`: `x / 127.5 - 1`.
pub fn normalize_input(image: &Tensor) -> Tensor {
    image.map(|v| v / 127.5 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_tensor(rng: &mut SplitMix64, h: usize, w: usize, c: usize) -> Tensor {
        Tensor::from_fn(h, w, c, |_, _, _| rng.next_signed_unit_f32())
    }

    // Independent quadruple-loop oracle; scalar indexing only.
    fn conv2d_oracle(input: &Tensor, p: &ConvParams) -> Tensor {
        let out_h = (input.height() + 2 * p.padding - p.kh) / p.stride + 1;
        let out_w = (input.width() + 2 * p.padding - p.kw) / p.stride + 1;
        let mut data = vec![0.0f32; out_h * out_w * p.out_c];
        for oy in 0..out_h {
            for ox in 0..out_w {
                for co in 0..p.out_c {
                    let mut acc = p.bias[co];
                    for ky in 0..p.kh {
                        for kx in 0..p.kw {
                            for ci in 0..p.in_c {
                                let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                                let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                                if iy < 0
                                    || ix < 0
                                    || iy >= input.height() as isize
                                    || ix >= input.width() as isize
                                {
                                    continue;
                                }
                                let iv = input.at(iy as usize, ix as usize, ci);
                                let w = p.kernel[((ky * p.kw + kx) * p.in_c + ci) * p.out_c + co];
                                acc += iv * w;
                            }
                        }
                    }
                    data[(oy * out_w + ox) * p.out_c + co] = acc;
                }
            }
        }
        Tensor::new(out_h, out_w, p.out_c, data).unwrap()
    }

    fn max_rel_err(a: &Tensor, b: &Tensor) -> f32 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x - y).abs() / (1.0 + y.abs()))
            .fold(0.0, f32::max)
    }

    #[test]
    fn conv2d_identity_kernel() {
        let input = Tensor::new(1, 1, 1, vec![5.0]).unwrap();
        let p = ConvParams::new(vec![1.0], 1, 1, 1, 1, vec![0.0], 1, 0).unwrap();
        let out = conv2d(&input, &p).unwrap();
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn conv2d_stem_shape() {
        let input = Tensor::zeros(320, 320, 3);
        let p = ConvParams::new(vec![0.0; 3 * 3 * 3 * 32], 3, 3, 3, 32, vec![0.0; 32], 2, 1).unwrap();
        let out = conv2d(&input, &p).unwrap();
        assert_eq!(out.shape(), (160, 160, 32));
    }

    #[test]
    fn conv2d_matches_direct_summation() {
        let mut rng = SplitMix64::new(11);
        let input = random_tensor(&mut rng, 8, 8, 2);
        let kernel: Vec<f32> = (0..3 * 3 * 2 * 4).map(|_| rng.next_signed_unit_f32()).collect();
        let bias: Vec<f32> = (0..4).map(|_| rng.next_signed_unit_f32()).collect();
        let p = ConvParams::new(kernel, 3, 3, 2, 4, bias, 1, 1).unwrap();
        let got = conv2d(&input, &p).unwrap();
        let want = conv2d_oracle(&input, &p);
        assert!(max_rel_err(&got, &want) <= 1e-5);
    }

    #[test]
    fn conv2d_rejects_channel_mismatch() {
        let input = Tensor::zeros(4, 4, 3);
        let p = ConvParams::new(vec![0.0; 4], 1, 1, 4, 1, vec![0.0], 1, 0).unwrap();
        assert!(conv2d(&input, &p).is_err());
    }

    #[test]
    fn conv2d_rejects_oversized_kernel() {
        let input = Tensor::zeros(2, 2, 1);
        let p = ConvParams::new(vec![0.0; 25], 5, 5, 1, 1, vec![0.0], 1, 0).unwrap();
        assert!(conv2d(&input, &p).is_err());
    }

    #[test]
    fn conv2d_linear_in_input() {
        let mut rng = SplitMix64::new(21);
        let x = random_tensor(&mut rng, 6, 6, 3);
        let y = random_tensor(&mut rng, 6, 6, 3);
        let kernel: Vec<f32> = (0..3 * 3 * 3 * 2).map(|_| rng.next_signed_unit_f32()).collect();
        let p = ConvParams::new(kernel, 3, 3, 3, 2, vec![0.0; 2], 1, 1).unwrap();
        let (a, b) = (0.7f32, -1.3f32);
        let mixed = Tensor::from_fn(6, 6, 3, |yy, xx, cc| a * x.at(yy, xx, cc) + b * y.at(yy, xx, cc));
        let lhs = conv2d(&mixed, &p).unwrap();
        let cx = conv2d(&x, &p).unwrap();
        let cy = conv2d(&y, &p).unwrap();
        for i in 0..lhs.data().len() {
            let rhs = a * cx.data()[i] + b * cy.data()[i];
            assert!((lhs.data()[i] - rhs).abs() <= 1e-5 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn depthwise_identity() {
        let mut rng = SplitMix64::new(5);
        let input = random_tensor(&mut rng, 5, 7, 3);
        let p = DepthwiseParams::new(vec![1.0; 3], 1, 1, 3, vec![0.0; 3], 1, 0).unwrap();
        let out = depthwise_conv2d(&input, &p).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn depthwise_shape() {
        let input = Tensor::zeros(10, 10, 8);
        let p = DepthwiseParams::new(vec![0.0; 9 * 8], 3, 3, 8, vec![0.0; 8], 2, 1).unwrap();
        let out = depthwise_conv2d(&input, &p).unwrap();
        assert_eq!(out.shape(), (5, 5, 8));
    }

    #[test]
    fn depthwise_equals_block_diagonal_conv() {
        let mut rng = SplitMix64::new(17);
        let c = 4;
        let input = random_tensor(&mut rng, 7, 7, c);
        let dw_kernel: Vec<f32> = (0..9 * c).map(|_| rng.next_signed_unit_f32()).collect();
        let bias: Vec<f32> = (0..c).map(|_| rng.next_signed_unit_f32()).collect();

        // weight[kh,kw,i,o] = dw[kh,kw,i] when i == o else 0
        let mut full = vec![0.0f32; 9 * c * c];
        for k in 0..9 {
            for i in 0..c {
                full[(k * c + i) * c + i] = dw_kernel[k * c + i];
            }
        }
        let dp = DepthwiseParams::new(dw_kernel, 3, 3, c, bias.clone(), 2, 1).unwrap();
        let cp = ConvParams::new(full, 3, 3, c, c, bias, 2, 1).unwrap();

        let got = depthwise_conv2d(&input, &dp).unwrap();
        let want = conv2d(&input, &cp).unwrap();
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() <= 1e-6);
        }
    }

    #[test]
    fn depthwise_rejects_channel_mismatch() {
        let input = Tensor::zeros(4, 4, 3);
        let p = DepthwiseParams::new(vec![0.0; 9 * 2], 3, 3, 2, vec![0.0; 2], 1, 1).unwrap();
        assert!(depthwise_conv2d(&input, &p).is_err());
    }

    #[test]
    fn pointwise_identity() {
        let mut rng = SplitMix64::new(9);
        let input = random_tensor(&mut rng, 3, 3, 3);
        // identity matrix weights
        let mut w = vec![0.0f32; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let out = pointwise_conv(&input, &w, 3, &[0.0; 3]).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn pointwise_shape() {
        let input = Tensor::zeros(4, 4, 3);
        let out = pointwise_conv(&input, &vec![0.0; 3 * 16], 16, &vec![0.0; 16]).unwrap();
        assert_eq!(out.shape(), (4, 4, 16));
    }

    #[test]
    fn pointwise_equals_conv2d_k1() {
        let mut rng = SplitMix64::new(33);
        let input = random_tensor(&mut rng, 5, 4, 3);
        let w: Vec<f32> = (0..3 * 6).map(|_| rng.next_signed_unit_f32()).collect();
        let b: Vec<f32> = (0..6).map(|_| rng.next_signed_unit_f32()).collect();
        let got = pointwise_conv(&input, &w, 6, &b).unwrap();
        let p = ConvParams::new(w, 1, 1, 3, 6, b, 1, 0).unwrap();
        let want = conv2d(&input, &p).unwrap();
        assert_eq!(got.data(), want.data());
    }

    #[test]
    fn relu6_clamps() {
        let t = Tensor::new(1, 3, 1, vec![-1.0, 3.0, 7.0]).unwrap();
        let out = relu6(&t);
        assert_eq!(out.data(), &[0.0, 3.0, 6.0]);
    }

    #[test]
    fn relu6_idempotent() {
        let mut rng = SplitMix64::new(4);
        let t = Tensor::from_fn(4, 4, 2, |_, _, _| rng.next_signed_unit_f32() * 10.0);
        let once = relu6(&t);
        let twice = relu6(&once);
        assert_eq!(once.data(), twice.data());
    }

    #[test]
    fn fold_batchnorm_identity() {
        let eps = BATCHNORM_DEFAULT_EPSILON;
        let conv = ConvParams::new(vec![1.5, -2.0], 1, 1, 1, 2, vec![0.3, 0.4], 1, 0).unwrap();
        let bn = BatchNormParams::new(
            vec![1.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
            vec![1.0 - eps; 2],
            eps,
        )
        .unwrap();
        let folded = fold_batchnorm(&conv, &bn).unwrap();
        for (a, b) in folded.kernel.iter().zip(&conv.kernel) {
            assert!((a - b).abs() <= 1e-6);
        }
        for (a, b) in folded.bias.iter().zip(&conv.bias) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn fold_batchnorm_doubles() {
        let eps = BATCHNORM_DEFAULT_EPSILON;
        let conv = ConvParams::new(vec![1.5, -2.0], 1, 1, 1, 2, vec![0.3, 0.4], 1, 0).unwrap();
        let bn = BatchNormParams::new(
            vec![2.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
            vec![1.0 - eps; 2],
            eps,
        )
        .unwrap();
        let folded = fold_batchnorm(&conv, &bn).unwrap();
        for (a, b) in folded.kernel.iter().zip(&conv.kernel) {
            assert!((a - 2.0 * b).abs() <= 1e-6);
        }
        for (a, b) in folded.bias.iter().zip(&conv.bias) {
            assert!((a - 2.0 * b).abs() <= 1e-6);
        }
    }

    #[test]
    fn fold_batchnorm_matches_two_step() {
        let mut rng = SplitMix64::new(27);
        let input = random_tensor(&mut rng, 6, 6, 3);
        let kernel: Vec<f32> = (0..3 * 3 * 3 * 4).map(|_| rng.next_signed_unit_f32()).collect();
        let bias: Vec<f32> = (0..4).map(|_| rng.next_signed_unit_f32()).collect();
        let conv = ConvParams::new(kernel, 3, 3, 3, 4, bias, 1, 1).unwrap();
        let bn = BatchNormParams::new(
            (0..4).map(|_| 0.5 + rng.next_signed_unit_f32().abs()).collect(),
            (0..4).map(|_| rng.next_signed_unit_f32()).collect(),
            (0..4).map(|_| rng.next_signed_unit_f32()).collect(),
            (0..4).map(|_| rng.next_signed_unit_f32().abs() + 0.1).collect(),
            BATCHNORM_DEFAULT_EPSILON,
        )
        .unwrap();

        let folded = conv2d(&input, &fold_batchnorm(&conv, &bn).unwrap()).unwrap();

        // two-step oracle: convolve, then normalize each channel explicitly
        let raw = conv2d(&input, &conv).unwrap();
        let want = Tensor::from_fn(raw.height(), raw.width(), raw.channels(), |y, x, c| {
            let v = raw.at(y, x, c);
            bn.gamma[c] * (v - bn.mean[c]) / (bn.variance[c] + bn.epsilon).sqrt() + bn.beta[c]
        });
        for (g, w) in folded.data().iter().zip(want.data()) {
            assert!((g - w).abs() <= 1e-5 * (1.0 + w.abs()), "{g} vs {w}");
        }
    }

    #[test]
    fn fold_batchnorm_rejects_length_mismatch() {
        let conv = ConvParams::new(vec![1.0, 1.0], 1, 1, 1, 2, vec![0.0; 2], 1, 0).unwrap();
        let bn = BatchNormParams::new(vec![1.0], vec![0.0], vec![0.0], vec![1.0], 1e-3).unwrap();
        assert!(fold_batchnorm(&conv, &bn).is_err());
    }

    #[test]
    fn resize_identity() {
        let mut rng = SplitMix64::new(77);
        let t = random_tensor(&mut rng, 5, 9, 3);
        let out = resize_bilinear(&t, 5, 9).unwrap();
        assert_eq!(out.data(), t.data());
    }

    #[test]
    fn resize_constant_stays_constant() {
        let t = Tensor::from_fn(3, 7, 2, |_, _, _| 4.25);
        let out = resize_bilinear(&t, 11, 5).unwrap();
        assert!(out.data().iter().all(|&v| (v - 4.25).abs() <= 1e-6));
    }

    #[test]
    fn resize_monotone_gradient() {
        let t = Tensor::new(2, 2, 1, vec![0.0, 0.0, 10.0, 10.0]).unwrap();
        let out = resize_bilinear(&t, 4, 4).unwrap();
        for x in 0..4 {
            for y in 1..4 {
                assert!(out.at(y, x, 0) >= out.at(y - 1, x, 0));
            }
        }
        assert!(out.data().iter().all(|&v| (0.0..=10.0).contains(&v)));
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let t = Tensor::zeros(2, 2, 1);
        assert!(resize_bilinear(&t, 0, 4).is_err());
        assert!(resize_bilinear(&t, 4, 0).is_err());
    }

    #[test]
    fn normalize_endpoints() {
        let t = Tensor::new(1, 3, 1, vec![0.0, 255.0, 127.5]).unwrap();
        let out = normalize_input(&t);
        assert_eq!(out.data(), &[-1.0, 1.0, 0.0]);
    }

    #[test]
    fn ops_produce_finite_values() {
        let mut rng = SplitMix64::new(99);
        let input = random_tensor(&mut rng, 9, 9, 4);
        let kernel: Vec<f32> = (0..3 * 3 * 4 * 8).map(|_| rng.next_signed_unit_f32()).collect();
        let p = ConvParams::new(kernel, 3, 3, 4, 8, vec![0.1; 8], 2, 1).unwrap();
        let out = conv2d(&input, &p).unwrap();
        assert!(out.all_finite());
        assert!(relu6(&out).all_finite());
        assert!(resize_bilinear(&out, 13, 3).unwrap().all_finite());
    }
}
