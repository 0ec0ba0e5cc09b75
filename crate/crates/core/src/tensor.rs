//! Dense CHW feature maps and the handful of inference kernels the VGG
//! encoder/decoder needs: 3×3 convolution, ReLU and border padding.
//!
//! Storage is `f32`; every reduction (convolution sums, norms) accumulates
//! in `f64` so error stays bounded through deep conv stacks.

use rayon::prelude::*;

use crate::error::{contract, Result};

/// A `channels × height × width` tensor stored row-major, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(contract!(
                "feature map dimensions must be positive, got {channels}x{height}x{width}"
            ));
        }
        if data.len() != channels * height * width {
            return Err(contract!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty feature map");
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Builds a map by evaluating `f(channel, y, x)` at every site.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data).expect("from_fn dimensions must be positive")
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f32) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    /// One channel as a flat `height × width` slice.
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.dims() == other.dims()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> FeatureMap {
        FeatureMap {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    /// Elementwise `a·self + b·other`.
    pub fn lincomb(&self, a: f32, other: &FeatureMap, b: f32) -> Result<FeatureMap> {
        if !self.same_shape(other) {
            return Err(contract!(
                "shape mismatch {:?} vs {:?}",
                self.dims(),
                other.dims()
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Ok(FeatureMap { data, ..*self })
    }

    /// Squared Euclidean norm accumulated in f64.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }

    /// Largest absolute elementwise difference; `inf` if shapes differ.
    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        if !self.same_shape(other) {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Stacks maps along the channel axis. All inputs must share H×W.
    pub fn concat_channels(parts: &[&FeatureMap]) -> Result<FeatureMap> {
        let first = parts
            .first()
            .ok_or_else(|| contract!("cannot concatenate zero feature maps"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut channels = 0;
        for p in parts {
            if p.height != h || p.width != w {
                return Err(contract!(
                    "concat spatial mismatch {}x{} vs {}x{}",
                    p.height,
                    p.width,
                    h,
                    w
                ));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        FeatureMap::new(channels, h, w, data)
    }

    /// Contiguous channel range `[start, start + count)`.
    pub fn channel_slice(&self, start: usize, count: usize) -> Result<FeatureMap> {
        if count == 0 || start + count > self.channels {
            return Err(contract!(
                "channel slice {start}..{} out of range for {} channels",
                start + count,
                self.channels
            ));
        }
        let n = self.pixels();
        FeatureMap::new(
            count,
            self.height,
            self.width,
            self.data[start * n..(start + count) * n].to_vec(),
        )
    }
}

/// Border handling for 3×3 convolutions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PaddingMode {
    Zero,
    #[default]
    Reflect,
}

/// A 3×3 convolution layer. Kernel layout is `(out, in, 3, 3)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    out_channels: usize,
    in_channels: usize,
    kernel: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvLayer {
    pub const KERNEL: usize = 3;

    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(contract!("conv layer needs positive channel counts"));
        }
        if kernel.len() != out_channels * in_channels * 9 {
            return Err(contract!(
                "3x3 kernel for {out_channels}x{in_channels} needs {} weights, got {}",
                out_channels * in_channels * 9,
                kernel.len()
            ));
        }
        if bias.len() != out_channels {
            return Err(contract!(
                "bias needs {out_channels} values, got {}",
                bias.len()
            ));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            bias,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel(&self) -> &[f32] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn parameter_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }
}

/// Output pixels handled per im2col tile.
const TILE_PIXELS: usize = 1024;

/// Same-size 3×3 cross-correlation plus bias (pad 1 on every side).
/// Under reflection a dimension of length 1 is replicated.
///
/// Work is split into fixed row tiles, each an im2col block multiplied by
/// the flattened kernel. Tile boundaries never depend on the thread count,
/// so the result is bit-identical however rayon schedules it.
pub fn conv2d(input: &FeatureMap, layer: &ConvLayer, padding: PaddingMode) -> Result<FeatureMap> {
    if input.channels != layer.in_channels {
        return Err(contract!(
            "conv2d expects {} input channels, got {}",
            layer.in_channels,
            input.channels
        ));
    }
    if !input.is_finite() {
        return Err(contract!("conv2d input contains non-finite values"));
    }
    let (cin, h, w) = input.dims();
    let cout = layer.out_channels;
    let (ph, pw) = (h + 2, w + 2);

    let padded: Vec<f64> = match padding {
        PaddingMode::Zero => {
            let mut buf = vec![0.0f64; cin * ph * pw];
            for c in 0..cin {
                for y in 0..h {
                    let src = &input.plane(c)[y * w..(y + 1) * w];
                    let dst = &mut buf[(c * ph + y + 1) * pw + 1..][..w];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = s as f64;
                    }
                }
            }
            buf
        }
        PaddingMode::Reflect => {
            let mut buf = vec![0.0f64; cin * ph * pw];
            for c in 0..cin {
                for py in 0..ph {
                    let sy = reflect_index(py as isize - 1, h);
                    for px in 0..pw {
                        let sx = reflect_index(px as isize - 1, w);
                        buf[(c * ph + py) * pw + px] = input.get(c, sy, sx) as f64;
                    }
                }
            }
            buf
        }
    };

    let k = cin * 9;
    let weights: Vec<f64> = layer.kernel.iter().map(|&v| v as f64).collect();
    let rows_per_tile = (TILE_PIXELS / w).max(1);
    let tiles: Vec<(usize, usize)> = (0..h)
        .step_by(rows_per_tile)
        .map(|y0| (y0, (y0 + rows_per_tile).min(h)))
        .collect();

    let results: Vec<Vec<f64>> = tiles
        .par_iter()
        .map(|&(y0, y1)| {
            let n = (y1 - y0) * w;
            // im2col: row index = (ci, ky, kx), column = output pixel
            let mut cols = vec![0.0f64; k * n];
            for ci in 0..cin {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let row = (ci * 3 + ky) * 3 + kx;
                        let dst = &mut cols[row * n..(row + 1) * n];
                        for y in y0..y1 {
                            let src = &padded[(ci * ph + y + ky) * pw + kx..][..w];
                            dst[(y - y0) * w..(y - y0 + 1) * w].copy_from_slice(src);
                        }
                    }
                }
            }
            let mut out = vec![0.0f64; cout * n];
            for (o, row) in out.chunks_exact_mut(n).enumerate() {
                row.fill(layer.bias[o] as f64);
            }
            // SAFETY: all buffers are sized exactly m×k, k×n and m×n with
            // row-major strides matching those shapes.
            unsafe {
                matrixmultiply::dgemm(
                    cout,
                    k,
                    n,
                    1.0,
                    weights.as_ptr(),
                    k as isize,
                    1,
                    cols.as_ptr(),
                    n as isize,
                    1,
                    1.0,
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            out
        })
        .collect();

    let mut data = vec![0.0f32; cout * h * w];
    for (&(y0, y1), tile) in tiles.iter().zip(&results) {
        let n = (y1 - y0) * w;
        for o in 0..cout {
            let dst = &mut data[(o * h + y0) * w..(o * h + y1) * w];
            for (d, &s) in dst.iter_mut().zip(&tile[o * n..(o + 1) * n]) {
                *d = s as f32;
            }
        }
    }
    let out = FeatureMap::new(cout, h, w, data)?;
    if !out.is_finite() {
        return Err(contract!("conv2d produced non-finite values (overflow)"));
    }
    Ok(out)
}

/// Elementwise `max(x, 0)`.
pub fn relu(input: &FeatureMap) -> FeatureMap {
    input.map(|v| v.max(0.0))
}

pub(crate) fn relu_in_place(input: &mut FeatureMap) {
    for v in input.data_mut() {
        *v = v.max(0.0);
    }
}

/// Mirror index for positions outside `[0, len)` without repeating the edge.
/// Valid for `-len < i < 2·len - 1`; a single sample mirrors onto itself.
#[inline]
fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Mirror-reflection border extension; the edge sample is not duplicated,
/// so every pad amount must be smaller than the padded dimension.
pub fn reflect_pad(
    input: &FeatureMap,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> Result<FeatureMap> {
    let (c, h, w) = input.dims();
    if top >= h || bottom >= h {
        return Err(contract!(
            "vertical reflection pad ({top}, {bottom}) must be smaller than height {h}"
        ));
    }
    if left >= w || right >= w {
        return Err(contract!(
            "horizontal reflection pad ({left}, {right}) must be smaller than width {w}"
        ));
    }
    let (oh, ow) = (h + top + bottom, w + left + right);
    Ok(FeatureMap::from_fn(c, oh, ow, |ch, y, x| {
        let sy = reflect_index(y as isize - top as isize, h);
        let sx = reflect_index(x as isize - left as isize, w);
        input.get(ch, sy, sx)
    }))
}
