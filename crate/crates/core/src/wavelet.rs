//! Stride-2 pooling operators and their unpooling counterparts.
//!
//! Haar pooling splits every channel into four half-resolution subbands
//! with the orthonormal 2×2 kernels built from the low-pass filter
//! `L = [1, 1]/√2` and the high-pass filter `H = [-1, 1]/√2`. Kernels are
//! outer products with the **first factor filtering rows** (the vertical
//! axis) and the second filtering columns:
//!
//! ```text
//! LL = L⊗L = ½·[ 1  1]   LH = L⊗H = ½·[-1  1]
//!              [ 1  1]                [-1  1]
//!
//! HL = H⊗L = ½·[-1 -1]   HH = H⊗H = ½·[ 1 -1]
//!              [ 1  1]                [-1  1]
//! ```
//!
//! The four flattened kernels form an orthonormal basis of ℝ⁴, so the
//! analysis operator is a tight frame: unpooling (per-subband transposed
//! convolution followed by a sum) reconstructs the input exactly and the
//! subband energies add up to the input energy.
//!
//! Average, split (polyphase) and max pooling are kept as ablation
//! baselines behind the same [`Pooling`] trait.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{contract, Result};
use crate::registry::Registry;
use crate::tensor::FeatureMap;

/// The four 2×2 analysis kernels, each flattened row-major as
/// `[top-left, top-right, bottom-left, bottom-right]`, in LL, LH, HL, HH order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaarKernels(pub [[f32; 4]; 4]);

impl Default for HaarKernels {
    fn default() -> Self {
        Self::standard()
    }
}

impl HaarKernels {
    pub fn standard() -> Self {
        // Products formed in f64 so every tap rounds to exactly ±0.5.
        let l = [std::f64::consts::FRAC_1_SQRT_2; 2];
        let h = [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
        let outer = |rows: [f64; 2], cols: [f64; 2]| {
            [
                (rows[0] * cols[0]) as f32,
                (rows[0] * cols[1]) as f32,
                (rows[1] * cols[0]) as f32,
                (rows[1] * cols[1]) as f32,
            ]
        };
        HaarKernels([outer(l, l), outer(l, h), outer(h, l), outer(h, h)])
    }

    /// Standard kernels with `eps` added to the top-left LL tap. Only useful
    /// for demonstrating that the frame checks catch a broken filter bank.
    pub fn perturbed(eps: f32) -> Self {
        let mut k = Self::standard();
        k.0[0][0] += eps;
        k
    }

    /// `K·Kᵀ` of the 4×4 kernel matrix; the identity for a tight frame.
    pub fn gram(&self) -> [[f64; 4]; 4] {
        let mut g = [[0.0; 4]; 4];
        for (i, row) in g.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..4)
                    .map(|t| self.0[i][t] as f64 * self.0[j][t] as f64)
                    .sum();
            }
        }
        g
    }
}

/// The LL/LH/HL/HH outputs of one Haar pooling step.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletSubbands {
    pub ll: FeatureMap,
    pub lh: FeatureMap,
    pub hl: FeatureMap,
    pub hh: FeatureMap,
}

impl WaveletSubbands {
    pub fn new(ll: FeatureMap, lh: FeatureMap, hl: FeatureMap, hh: FeatureMap) -> Result<Self> {
        if !(ll.same_shape(&lh) && ll.same_shape(&hl) && ll.same_shape(&hh)) {
            return Err(contract!(
                "subband shapes differ: ll {:?}, lh {:?}, hl {:?}, hh {:?}",
                ll.dims(),
                lh.dims(),
                hl.dims(),
                hh.dims()
            ));
        }
        Ok(Self { ll, lh, hl, hh })
    }

    pub fn bands(&self) -> [&FeatureMap; 4] {
        [&self.ll, &self.lh, &self.hl, &self.hh]
    }

    /// Sum of the four subband energies.
    pub fn energy(&self) -> f64 {
        self.bands().iter().map(|b| b.norm_sq()).sum()
    }
}

fn require_even(input: &FeatureMap, op: &str) -> Result<()> {
    if !input.height().is_multiple_of(2) || !input.width().is_multiple_of(2) {
        return Err(contract!(
            "{op} needs even height and width, got {}x{}",
            input.height(),
            input.width()
        ));
    }
    Ok(())
}

/// Applies `f(window) -> [out; N]` to every 2×2 stride-2 window of every channel.
fn analyze<const N: usize>(
    input: &FeatureMap,
    op: &str,
    f: impl Fn([f32; 4]) -> [f32; N],
) -> Result<[FeatureMap; N]> {
    require_even(input, op)?;
    let (c, h, w) = input.dims();
    let (oh, ow) = (h / 2, w / 2);
    let mut outs: [Vec<f32>; N] = std::array::from_fn(|_| Vec::with_capacity(c * oh * ow));
    for ch in 0..c {
        let plane = input.plane(ch);
        for y in 0..oh {
            let top = &plane[2 * y * w..(2 * y + 1) * w];
            let bottom = &plane[(2 * y + 1) * w..(2 * y + 2) * w];
            for x in 0..ow {
                let window = [top[2 * x], top[2 * x + 1], bottom[2 * x], bottom[2 * x + 1]];
                for (o, v) in outs.iter_mut().zip(f(window)) {
                    o.push(v);
                }
            }
        }
    }
    let maps = outs.map(|data| FeatureMap::new(c, oh, ow, data).expect("window counts match"));
    Ok(maps)
}

/// Inverse of [`analyze`]: each coarse site contributes a 2×2 window `f(values)`.
fn synthesize<const N: usize>(parts: [&FeatureMap; N], f: impl Fn([f32; N]) -> [f32; 4]) -> Result<FeatureMap> {
    let first = parts[0];
    if parts.iter().any(|p| !p.same_shape(first)) {
        return Err(contract!("unpooling inputs must share one shape"));
    }
    let (c, h, w) = first.dims();
    let ow = 2 * w;
    let mut data = vec![0.0f32; c * 4 * h * w];
    for ch in 0..c {
        let planes: [&[f32]; N] = parts.map(|p| p.plane(ch));
        let out = &mut data[ch * 4 * h * w..(ch + 1) * 4 * h * w];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let win = f(std::array::from_fn(|k| planes[k][i]));
                out[2 * y * ow + 2 * x] = win[0];
                out[2 * y * ow + 2 * x + 1] = win[1];
                out[(2 * y + 1) * ow + 2 * x] = win[2];
                out[(2 * y + 1) * ow + 2 * x + 1] = win[3];
            }
        }
    }
    FeatureMap::new(c, 2 * h, 2 * w, data)
}

fn apply_kernels(k: &HaarKernels, win: [f32; 4]) -> [f32; 4] {
    std::array::from_fn(|band| {
        let kk = &k.0[band];
        kk[0] * win[0] + kk[1] * win[1] + kk[2] * win[2] + kk[3] * win[3]
    })
}

pub fn haar_pool(input: &FeatureMap) -> Result<WaveletSubbands> {
    haar_pool_with(input, &HaarKernels::standard())
}

pub fn haar_pool_with(input: &FeatureMap, kernels: &HaarKernels) -> Result<WaveletSubbands> {
    let [ll, lh, hl, hh] = analyze(input, "haar pooling", |win| apply_kernels(kernels, win))?;
    Ok(WaveletSubbands { ll, lh, hl, hh })
}

/// Component-wise transposed convolution of the subbands, summed.
pub fn haar_unpool(subbands: &WaveletSubbands) -> Result<FeatureMap> {
    haar_unpool_with(subbands, &HaarKernels::standard())
}

pub fn haar_unpool_with(subbands: &WaveletSubbands, kernels: &HaarKernels) -> Result<FeatureMap> {
    synthesize(subbands.bands(), |s| {
        std::array::from_fn(|t| (0..4).map(|b| kernels.0[b][t] * s[b]).sum())
    })
}

/// Transposed convolution of a single subband with one kernel.
fn transposed_single(band: &FeatureMap, kernel: &[f32; 4]) -> FeatureMap {
    synthesize([band], |[v]| kernel.map(|k| k * v)).expect("single input always consistent")
}

/// 2×2 stride-2 mean. Equals `haar_pool(x).ll / 2`.
pub fn average_pool(input: &FeatureMap) -> Result<FeatureMap> {
    let [avg] = analyze(input, "average pooling", |w| {
        [((w[0] as f64 + w[1] as f64 + w[2] as f64 + w[3] as f64) * 0.25) as f32]
    })?;
    Ok(avg)
}

/// Nearest-neighbour 2× upsampling (transposed convolution with a ones kernel).
pub fn nearest_upsample(input: &FeatureMap) -> FeatureMap {
    synthesize([input], |[v]| [v; 4]).expect("single input always consistent")
}

/// The four stride-2 polyphase components in window order
/// `[top-left, top-right, bottom-left, bottom-right]`.
pub fn split_pool(input: &FeatureMap) -> Result<[FeatureMap; 4]> {
    analyze(input, "split pooling", |w| w)
}

pub fn split_unpool(parts: &[FeatureMap; 4]) -> Result<FeatureMap> {
    synthesize([&parts[0], &parts[1], &parts[2], &parts[3]], |s| s)
}

/// Per-window argmax position (0..4, row-major inside the 2×2 window).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgmaxMask {
    channels: usize,
    height: usize,
    width: usize,
    indices: Vec<u8>,
}

impl ArgmaxMask {
    /// Dimensions of the pooled (coarse) map.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn index(&self, c: usize, y: usize, x: usize) -> u8 {
        self.indices[(c * self.height + y) * self.width + x]
    }
}

/// 2×2 stride-2 max with the winning window position; ties resolve to the
/// first position in row-major window order.
pub fn max_pool_with_mask(input: &FeatureMap) -> Result<(FeatureMap, ArgmaxMask)> {
    let [values, idx] = analyze(input, "max pooling", |w| {
        let mut best = 0;
        for i in 1..4 {
            if w[i] > w[best] {
                best = i;
            }
        }
        [w[best], best as f32]
    })?;
    let (channels, height, width) = idx.dims();
    let mask = ArgmaxMask {
        channels,
        height,
        width,
        indices: idx.data().iter().map(|&v| v as u8).collect(),
    };
    Ok((values, mask))
}

/// Writes each value back at its recorded argmax position, zeros elsewhere.
pub fn max_unpool(values: &FeatureMap, mask: &ArgmaxMask) -> Result<FeatureMap> {
    if values.dims() != mask.dims() {
        return Err(contract!(
            "max unpool: values {:?} vs mask {:?}",
            values.dims(),
            mask.dims()
        ));
    }
    let idx = FeatureMap::new(
        mask.channels,
        mask.height,
        mask.width,
        mask.indices.iter().map(|&i| i as f32).collect(),
    )?;
    synthesize([values, &idx], |[v, i]| {
        let mut win = [0.0; 4];
        win[i as usize] = v;
        win
    })
}

/// What an encoder pooling site routes past the bottleneck to the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolSkip {
    /// Components not forwarded to the next encoder layer (LH, HL, HH for Haar).
    pub high: Vec<FeatureMap>,
    pub mask: Option<ArgmaxMask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pooled {
    /// Forwarded to the next encoder layer.
    pub low: FeatureMap,
    pub skip: PoolSkip,
}

/// A stride-2 pooling operator paired with its unpooling.
///
/// `expand` maps the (decoder-side) low component and the stored skip back
/// to full resolution as one map per component, i.e. the transposed
/// convolutions before they are summed or concatenated.
pub trait Pooling: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Number of maps returned by [`Pooling::expand`].
    fn components(&self) -> usize;

    fn pool(&self, input: &FeatureMap) -> Result<Pooled>;

    fn expand(&self, low: &FeatureMap, skip: &PoolSkip) -> Result<Vec<FeatureMap>>;

    /// Sum of the expanded components.
    fn unpool(&self, low: &FeatureMap, skip: &PoolSkip) -> Result<FeatureMap> {
        let parts = self.expand(low, skip)?;
        let mut acc = parts[0].clone();
        for p in &parts[1..] {
            acc = acc.lincomb(1.0, p, 1.0)?;
        }
        Ok(acc)
    }
}

fn check_high(skip: &PoolSkip, low: &FeatureMap, expected: usize, op: &str) -> Result<()> {
    if skip.high.len() != expected {
        return Err(contract!(
            "{op} unpooling expects {expected} skipped components, got {}",
            skip.high.len()
        ));
    }
    if let Some(bad) = skip.high.iter().find(|h| !h.same_shape(low)) {
        return Err(contract!(
            "{op} unpooling: skipped component {:?} does not match low band {:?}",
            bad.dims(),
            low.dims()
        ));
    }
    Ok(())
}

/// Haar wavelet pooling: LL is forwarded, LH/HL/HH are skipped.
#[derive(Clone, Debug, Default)]
pub struct HaarPooling {
    kernels: HaarKernels,
}

impl HaarPooling {
    pub fn with_kernels(kernels: HaarKernels) -> Self {
        Self { kernels }
    }

    pub fn kernels(&self) -> &HaarKernels {
        &self.kernels
    }
}

impl Pooling for HaarPooling {
    fn name(&self) -> &'static str {
        "haar"
    }

    fn components(&self) -> usize {
        4
    }

    fn pool(&self, input: &FeatureMap) -> Result<Pooled> {
        let WaveletSubbands { ll, lh, hl, hh } = haar_pool_with(input, &self.kernels)?;
        Ok(Pooled {
            low: ll,
            skip: PoolSkip {
                high: vec![lh, hl, hh],
                mask: None,
            },
        })
    }

    fn expand(&self, low: &FeatureMap, skip: &PoolSkip) -> Result<Vec<FeatureMap>> {
        check_high(skip, low, 3, "haar")?;
        let bands = [low, &skip.high[0], &skip.high[1], &skip.high[2]];
        Ok(bands
            .iter()
            .zip(&self.kernels.0)
            .map(|(b, k)| transposed_single(b, k))
            .collect())
    }

    fn unpool(&self, low: &FeatureMap, skip: &PoolSkip) -> Result<FeatureMap> {
        check_high(skip, low, 3, "haar")?;
        let subbands = WaveletSubbands::new(
            low.clone(),
            skip.high[0].clone(),
            skip.high[1].clone(),
            skip.high[2].clone(),
        )?;
        haar_unpool_with(&subbands, &self.kernels)
    }
}

/// Average pooling; nothing is skipped, unpooling is nearest upsampling.
#[derive(Clone, Debug, Default)]
pub struct AveragePooling;

impl Pooling for AveragePooling {
    fn name(&self) -> &'static str {
        "average"
    }

    fn components(&self) -> usize {
        1
    }

    fn pool(&self, input: &FeatureMap) -> Result<Pooled> {
        Ok(Pooled {
            low: average_pool(input)?,
            skip: PoolSkip {
                high: Vec::new(),
                mask: None,
            },
        })
    }

    fn expand(&self, low: &FeatureMap, skip: &PoolSkip) -> Result<Vec<FeatureMap>> {
        check_high(skip, low, 0, "average")?;
        Ok(vec![nearest_upsample(low)])
    }
}

/// Polyphase split: the top-left sample is forwarded, the other three skipped.
#[derive(Clone, Debug, Default)]
pub struct SplitPooling;

const ONE_HOT: [[f32; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

impl Pooling for SplitPooling {
    fn name(&self) -> &'static str {
        "split"
    }

    fn components(&self) -> usize {
        4
    }

    fn pool(&self, input: &FeatureMap) -> Result<Pooled> {
        let [tl, tr, bl, br] = split_pool(input)?;
        Ok(Pooled {
            low: tl,
            skip: PoolSkip {
                high: vec![tr, bl, br],
                mask: None,
            },
        })
    }

    fn expand(&self, low: &FeatureMap, skip: &PoolSkip) -> Result<Vec<FeatureMap>> {
        check_high(skip, low, 3, "split")?;
        let parts = [low, &skip.high[0], &skip.high[1], &skip.high[2]];
        Ok(parts
            .iter()
            .zip(&ONE_HOT)
            .map(|(p, k)| transposed_single(p, k))
            .collect())
    }
}

/// Max pooling with argmax masks handed to the decoder.
#[derive(Clone, Debug, Default)]
pub struct MaxPooling;

impl Pooling for MaxPooling {
    fn name(&self) -> &'static str {
        "max"
    }

    fn components(&self) -> usize {
        1
    }

    fn pool(&self, input: &FeatureMap) -> Result<Pooled> {
        let (low, mask) = max_pool_with_mask(input)?;
        Ok(Pooled {
            low,
            skip: PoolSkip {
                high: Vec::new(),
                mask: Some(mask),
            },
        })
    }

    fn expand(&self, low: &FeatureMap, skip: &PoolSkip) -> Result<Vec<FeatureMap>> {
        check_high(skip, low, 0, "max")?;
        let mask = skip
            .mask
            .as_ref()
            .ok_or_else(|| contract!("max unpooling needs an argmax mask"))?;
        Ok(vec![max_unpool(low, mask)?])
    }
}

/// Built-in pooling operators: `haar`, `average`, `split`, `max`.
pub fn poolings() -> &'static Registry<dyn Pooling> {
    static REGISTRY: OnceLock<Registry<dyn Pooling>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn Pooling> = Registry::new("pooling");
        reg.register("haar", || Arc::new(HaarPooling::default()))
            .register("average", || Arc::new(AveragePooling))
            .register("split", || Arc::new(SplitPooling))
            .register("max", || Arc::new(MaxPooling));
        reg
    })
}

pub fn pooling_by_name(name: &str) -> Result<Arc<dyn Pooling>> {
    poolings().get(name)
}
