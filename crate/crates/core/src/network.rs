//! The VGG-19 (conv1_1 → conv4_1) encoder with pluggable pooling, its
//! mirror decoder, and the progressive stylization schedule.
//!
//! ```text
//! encoder: conv1_1 conv1_2 | pool1 | conv2_1 conv2_2 | pool2 |
//!          conv3_1 conv3_2 conv3_3 conv3_4 | pool3 | conv4_1
//! decoder: conv4_1 | unpool3 | conv3_4 conv3_3 conv3_2 conv3_1 | unpool2 |
//!          conv2_2 conv2_1 | unpool1 | conv1_2 conv1_1
//! ```
//!
//! Pooling forwards only its low component; the rest is stashed in a
//! [`SkipStack`] and rejoined at the matching unpooling site, either summed
//! (`UnpoolMode::Sum`) or concatenated with the pre-pool feature
//! (`UnpoolMode::Concat`), in which case the conv right after the unpool
//! takes five times the channels.
//!
//! Weight names are `encoder.<layer>.weight|bias` and
//! `decoder.<layer>.weight|bias`, kernels shaped `[out, in, 3, 3]`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::stylize::{FeatureTransform, RegionPair, SegmentationMap, Wct};
use crate::tensor::{conv2d, relu_in_place, ConvLayer, FeatureMap, PaddingMode};
use crate::wavelet::{PoolSkip, Pooling};
use crate::weights::{Tensor, WeightStore};

/// How skipped components rejoin the decoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum UnpoolMode {
    /// Sum of the per-component transposed convolutions.
    Sum,
    /// Channel-wise concatenation of the four expanded components and the
    /// pre-pool encoder feature.
    #[default]
    Concat,
}

impl UnpoolMode {
    /// Channel multiplier of the conv that follows an unpooling site.
    pub fn multiplier(self) -> usize {
        match self {
            UnpoolMode::Sum => 1,
            UnpoolMode::Concat => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnpoolMode::Sum => "sum",
            UnpoolMode::Concat => "concat",
        }
    }
}

impl fmt::Display for UnpoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnpoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(UnpoolMode::Sum),
            "concat" | "cat5" => Ok(UnpoolMode::Concat),
            _ => Err(Error::UnknownStrategy {
                kind: "unpool mode",
                name: s.to_owned(),
                available: "sum, concat".into(),
            }),
        }
    }
}

/// Places where a feature transform can be applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Conv1_1,
    Conv2_1,
    Conv3_1,
    Conv4_1,
    /// Skipped (high-frequency) components of pooling level 1..=3.
    Skip(u8),
    DecoderConv3_2,
    DecoderConv2_2,
    DecoderConv1_2,
}

impl Site {
    pub const ENCODER: [Site; 4] = [Site::Conv1_1, Site::Conv2_1, Site::Conv3_1, Site::Conv4_1];
    pub const DECODER: [Site; 3] = [Site::DecoderConv3_2, Site::DecoderConv2_2, Site::DecoderConv1_2];
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Conv1_1 => f.write_str("encoder.conv1_1"),
            Site::Conv2_1 => f.write_str("encoder.conv2_1"),
            Site::Conv3_1 => f.write_str("encoder.conv3_1"),
            Site::Conv4_1 => f.write_str("encoder.conv4_1"),
            Site::Skip(l) => write!(f, "skip.pool{l}"),
            Site::DecoderConv3_2 => f.write_str("decoder.conv3_2"),
            Site::DecoderConv2_2 => f.write_str("decoder.conv2_2"),
            Site::DecoderConv1_2 => f.write_str("decoder.conv1_2"),
        }
    }
}

/// One step of a layer plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    /// 3×3 conv; `relu` is false only for the decoder output layer.
    Conv {
        name: &'static str,
        in_channels: usize,
        out_channels: usize,
        relu: bool,
        site: Option<Site>,
    },
    Pool { level: u8 },
    Unpool { level: u8 },
}

const fn conv(name: &'static str, i: usize, o: usize, site: Option<Site>) -> Step {
    Step::Conv {
        name,
        in_channels: i,
        out_channels: o,
        relu: true,
        site,
    }
}

/// VGG-19 conv1_1 → conv4_1 with three pooling sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderSpec {
    pub steps: Vec<Step>,
}

impl EncoderSpec {
    pub fn vgg19() -> Self {
        Self {
            steps: vec![
                conv("conv1_1", 3, 64, Some(Site::Conv1_1)),
                conv("conv1_2", 64, 64, None),
                Step::Pool { level: 1 },
                conv("conv2_1", 64, 128, Some(Site::Conv2_1)),
                conv("conv2_2", 128, 128, None),
                Step::Pool { level: 2 },
                conv("conv3_1", 128, 256, Some(Site::Conv3_1)),
                conv("conv3_2", 256, 256, None),
                conv("conv3_3", 256, 256, None),
                conv("conv3_4", 256, 256, None),
                Step::Pool { level: 3 },
                conv("conv4_1", 256, 512, Some(Site::Conv4_1)),
            ],
        }
    }

    pub fn parameter_count(&self) -> usize {
        plan_parameters(&self.steps)
    }
}

/// Mirror of [`EncoderSpec`] with unpooling sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderSpec {
    pub mode: UnpoolMode,
    pub steps: Vec<Step>,
}

impl DecoderSpec {
    pub fn mirror(mode: UnpoolMode) -> Self {
        let m = mode.multiplier();
        Self {
            mode,
            steps: vec![
                conv("conv4_1", 512, 256, None),
                Step::Unpool { level: 3 },
                conv("conv3_4", 256 * m, 256, None),
                conv("conv3_3", 256, 256, None),
                conv("conv3_2", 256, 256, Some(Site::DecoderConv3_2)),
                conv("conv3_1", 256, 128, None),
                Step::Unpool { level: 2 },
                conv("conv2_2", 128 * m, 128, Some(Site::DecoderConv2_2)),
                conv("conv2_1", 128, 64, None),
                Step::Unpool { level: 1 },
                conv("conv1_2", 64 * m, 64, Some(Site::DecoderConv1_2)),
                Step::Conv {
                    name: "conv1_1",
                    in_channels: 64,
                    out_channels: 3,
                    relu: false,
                    site: None,
                },
            ],
        }
    }

    pub fn parameter_count(&self) -> usize {
        plan_parameters(&self.steps)
    }
}

fn plan_parameters(steps: &[Step]) -> usize {
    steps
        .iter()
        .map(|s| match *s {
            Step::Conv {
                in_channels,
                out_channels,
                ..
            } => out_channels * in_channels * 9 + out_channels,
            _ => 0,
        })
        .sum()
}

pub fn weight_name(prefix: &str, layer: &str) -> String {
    format!("{prefix}.{layer}.weight")
}

pub fn bias_name(prefix: &str, layer: &str) -> String {
    format!("{prefix}.{layer}.bias")
}

/// Convolution body of a model stage.
#[derive(Clone, Debug)]
enum ConvOp {
    Layer(ConvLayer),
    /// Identity; after a concat unpool it sums the four expanded components
    /// and drops the pre-pool block, i.e. reproduces the plain Haar inverse.
    Bypass,
}

#[derive(Clone, Debug)]
enum Stage {
    Conv {
        op: ConvOp,
        relu: bool,
        site: Option<Site>,
        after_unpool: bool,
    },
    Pool(u8),
    Unpool(u8),
}

/// Per-level skip: the pooling's skipped components plus, in concat mode,
/// the feature that entered the pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct SkipLevel {
    pub skip: PoolSkip,
    pub pre_pool: Option<FeatureMap>,
}

/// One entry per pooling site, index 0 = level 1 (finest).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SkipStack {
    pub levels: Vec<SkipLevel>,
}

impl SkipStack {
    pub fn level(&self, level: u8) -> Option<&SkipLevel> {
        self.levels.get(level as usize - 1)
    }
}

/// Result of an encoder pass.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// conv4_1 output.
    pub bottleneck: FeatureMap,
    pub skips: SkipStack,
    /// conv1_1, conv2_1, conv3_1 outputs (after any transform at that site).
    pub taps: Vec<(Site, FeatureMap)>,
}

impl Encoded {
    pub fn tap(&self, site: Site) -> Option<&FeatureMap> {
        if site == Site::Conv4_1 {
            return Some(&self.bottleneck);
        }
        self.taps.iter().find(|(s, _)| *s == site).map(|(_, f)| f)
    }
}

type Hook<'a> = dyn FnMut(Site, FeatureMap) -> Result<FeatureMap> + 'a;

/// An immutable, assembled encoder–decoder.
#[derive(Clone)]
pub struct Model {
    encoder: Vec<Stage>,
    decoder: Vec<Stage>,
    pooling: Arc<dyn Pooling>,
    mode: UnpoolMode,
    padding: PaddingMode,
    encoder_params: usize,
    decoder_params: usize,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("pooling", &self.pooling.name())
            .field("mode", &self.mode)
            .field("encoder_params", &self.encoder_params)
            .field("decoder_params", &self.decoder_params)
            .finish()
    }
}

fn check_pooling(pooling: &dyn Pooling, mode: UnpoolMode) -> Result<()> {
    if mode == UnpoolMode::Concat && pooling.components() != 4 {
        return Err(contract!(
            "concat unpooling needs a four-component pooling; `{}` has {}",
            pooling.name(),
            pooling.components()
        ));
    }
    Ok(())
}

fn fetch_layer(
    weights: &WeightStore,
    prefix: &str,
    name: &str,
    in_channels: usize,
    out_channels: usize,
) -> Result<ConvLayer> {
    let get = |key: String, expected: Vec<usize>| -> Result<Tensor> {
        let t = weights.get(&key).ok_or_else(|| Error::MissingTensor(key.clone()))?;
        if t.dims() != expected.as_slice() {
            return Err(Error::TensorShape {
                name: key,
                expected,
                found: t.dims().to_vec(),
            });
        }
        Ok(t.clone())
    };
    let w = get(weight_name(prefix, name), vec![out_channels, in_channels, 3, 3])?;
    let b = get(bias_name(prefix, name), vec![out_channels])?;
    ConvLayer::new(out_channels, in_channels, w.data().to_vec(), b.data().to_vec())
}

fn assemble(
    steps: &[Step],
    mut make: impl FnMut(&'static str, usize, usize) -> Result<ConvOp>,
) -> Result<Vec<Stage>> {
    let mut stages = Vec::with_capacity(steps.len());
    let mut after_unpool = false;
    for step in steps {
        match *step {
            Step::Conv {
                name,
                in_channels,
                out_channels,
                relu,
                site,
            } => {
                stages.push(Stage::Conv {
                    op: make(name, in_channels, out_channels)?,
                    relu,
                    site,
                    after_unpool,
                });
                after_unpool = false;
            }
            Step::Pool { level } => stages.push(Stage::Pool(level)),
            Step::Unpool { level } => {
                stages.push(Stage::Unpool(level));
                after_unpool = true;
            }
        }
    }
    Ok(stages)
}

/// Loads every layer of the encoder and the `mode` decoder from `weights`.
/// Tensors are looked up in forward order, so a missing or misshapen tensor
/// is reported by the first name the network needs.
pub fn build_model(weights: &WeightStore, mode: UnpoolMode, pooling: Arc<dyn Pooling>) -> Result<Model> {
    check_pooling(pooling.as_ref(), mode)?;
    let enc_spec = EncoderSpec::vgg19();
    let dec_spec = DecoderSpec::mirror(mode);
    let encoder = assemble(&enc_spec.steps, |name, i, o| {
        fetch_layer(weights, "encoder", name, i, o).map(ConvOp::Layer)
    })?;
    let decoder = assemble(&dec_spec.steps, |name, i, o| {
        fetch_layer(weights, "decoder", name, i, o).map(ConvOp::Layer)
    })?;
    Ok(Model {
        encoder_params: count_stage_params(&encoder),
        decoder_params: count_stage_params(&decoder),
        encoder,
        decoder,
        pooling,
        mode,
        padding: PaddingMode::Reflect,
    })
}

fn count_stage_params(stages: &[Stage]) -> usize {
    stages
        .iter()
        .map(|s| match s {
            Stage::Conv {
                op: ConvOp::Layer(l),
                ..
            } => l.parameter_count(),
            _ => 0,
        })
        .sum()
}

impl Model {
    /// The same pooling/unpooling plumbing with every conv (and ReLU)
    /// bypassed. With a lossless pooling, `reconstruct` is then the identity.
    pub fn identity_plumbing(pooling: Arc<dyn Pooling>, mode: UnpoolMode) -> Result<Model> {
        check_pooling(pooling.as_ref(), mode)?;
        let encoder = assemble(&EncoderSpec::vgg19().steps, |_, _, _| Ok(ConvOp::Bypass))?;
        let decoder = assemble(&DecoderSpec::mirror(mode).steps, |_, _, _| Ok(ConvOp::Bypass))?;
        Ok(Model {
            encoder,
            decoder,
            pooling,
            mode,
            padding: PaddingMode::Reflect,
            encoder_params: 0,
            decoder_params: 0,
        })
    }

    pub fn pooling(&self) -> &dyn Pooling {
        self.pooling.as_ref()
    }

    pub fn unpool_mode(&self) -> UnpoolMode {
        self.mode
    }

    pub fn encoder_parameter_count(&self) -> usize {
        self.encoder_params
    }

    pub fn decoder_parameter_count(&self) -> usize {
        self.decoder_params
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder_params + self.decoder_params
    }

    fn run_conv(&self, x: FeatureMap, op: &ConvOp, relu: bool, after_unpool: bool) -> Result<FeatureMap> {
        match op {
            ConvOp::Layer(layer) => {
                let mut y = conv2d(&x, layer, self.padding)?;
                if relu {
                    relu_in_place(&mut y);
                }
                Ok(y)
            }
            ConvOp::Bypass if after_unpool && self.mode == UnpoolMode::Concat => {
                let c = x.channels() / 5;
                let mut acc = x.channel_slice(0, c)?;
                for k in 1..4 {
                    acc = acc.lincomb(1.0, &x.channel_slice(k * c, c)?, 1.0)?;
                }
                Ok(acc)
            }
            ConvOp::Bypass => Ok(x),
        }
    }

    fn encode_with(&self, image: &FeatureMap, hook: &mut Hook<'_>) -> Result<Encoded> {
        if !image.height().is_multiple_of(8) || !image.width().is_multiple_of(8) {
            return Err(contract!(
                "encoder input {}x{} must have height and width divisible by 8",
                image.height(),
                image.width()
            ));
        }
        if image.channels() != 3 {
            return Err(contract!("encoder expects 3 channels, got {}", image.channels()));
        }
        let mut x = image.clone();
        let mut skips = SkipStack::default();
        let mut taps = Vec::with_capacity(3);
        for stage in &self.encoder {
            match stage {
                Stage::Conv {
                    op,
                    relu,
                    site,
                    after_unpool,
                } => {
                    x = self.run_conv(x, op, *relu, *after_unpool)?;
                    if let Some(site) = site {
                        x = hook(*site, x)?;
                        if *site != Site::Conv4_1 {
                            taps.push((*site, x.clone()));
                        }
                    }
                }
                Stage::Pool(level) => {
                    debug_assert_eq!(skips.levels.len() + 1, *level as usize);
                    let pooled = self.pooling.pool(&x)?;
                    let pre_pool = (self.mode == UnpoolMode::Concat).then(|| x.clone());
                    skips.levels.push(SkipLevel {
                        skip: pooled.skip,
                        pre_pool,
                    });
                    x = pooled.low;
                }
                Stage::Unpool(_) => unreachable!("encoder has no unpooling"),
            }
        }
        Ok(Encoded {
            bottleneck: x,
            skips,
            taps,
        })
    }

    fn decode_with(&self, bottleneck: &FeatureMap, skips: &SkipStack, hook: &mut Hook<'_>) -> Result<FeatureMap> {
        let mut x = bottleneck.clone();
        for stage in &self.decoder {
            match stage {
                Stage::Conv {
                    op,
                    relu,
                    site,
                    after_unpool,
                } => {
                    x = self.run_conv(x, op, *relu, *after_unpool)?;
                    if let Some(site) = site {
                        x = hook(*site, x)?;
                    }
                }
                Stage::Unpool(level) => {
                    let entry = skips
                        .level(*level)
                        .ok_or_else(|| contract!("skip stack has no level {level}"))?;
                    x = match self.mode {
                        UnpoolMode::Sum => self.pooling.unpool(&x, &entry.skip)?,
                        UnpoolMode::Concat => {
                            let mut parts = self.pooling.expand(&x, &entry.skip)?;
                            let pre = entry
                                .pre_pool
                                .as_ref()
                                .ok_or_else(|| contract!("concat unpooling needs the pre-pool feature at level {level}"))?;
                            parts.push(pre.clone());
                            let refs: Vec<&FeatureMap> = parts.iter().collect();
                            FeatureMap::concat_channels(&refs)?
                        }
                    };
                }
                Stage::Pool(_) => unreachable!("decoder has no pooling"),
            }
        }
        Ok(x)
    }

    /// Plain encoder pass.
    pub fn encode(&self, image: &FeatureMap) -> Result<Encoded> {
        self.encode_with(image, &mut |_, f| Ok(f))
    }

    pub fn decode(&self, bottleneck: &FeatureMap, skips: &SkipStack) -> Result<FeatureMap> {
        self.decode_with(bottleneck, skips, &mut |_, f| Ok(f))
    }

    /// Encode followed by decode, no transforms.
    pub fn reconstruct(&self, image: &FeatureMap) -> Result<FeatureMap> {
        let enc = self.encode(image)?;
        self.decode(&enc.bottleneck, &enc.skips)
    }

    /// conv1_1, conv2_1, conv3_1 and conv4_1 activations.
    pub fn encoder_taps(&self, image: &FeatureMap) -> Result<Vec<(Site, FeatureMap)>> {
        let enc = self.encode(image)?;
        let mut taps = enc.taps;
        taps.push((Site::Conv4_1, enc.bottleneck));
        Ok(taps)
    }

    /// Decoder activations at the optional decoder stylization sites.
    fn decoder_taps(&self, enc: &Encoded) -> Result<Vec<(Site, FeatureMap)>> {
        let mut taps = Vec::new();
        self.decode_with(&enc.bottleneck, &enc.skips, &mut |site, f| {
            taps.push((site, f.clone()));
            Ok(f)
        })?;
        Ok(taps)
    }
}

/// Which sites get stylized and how.
#[derive(Clone, Debug)]
pub struct StylizeSchedule {
    /// conv1_1, conv2_1, conv3_1, conv4_1 outputs.
    pub encoder_wct: bool,
    /// Skipped high-frequency components at every pooling level.
    pub skip_wct: bool,
    /// Decoder conv3_2, conv2_2, conv1_2 outputs.
    pub decoder_wct: bool,
    /// Recursive passes feeding each output back in as content.
    pub multi_level: bool,
    pub passes: usize,
    pub transform: Arc<dyn FeatureTransform>,
    pub alpha: f32,
}

impl Default for StylizeSchedule {
    fn default() -> Self {
        Self {
            encoder_wct: true,
            skip_wct: false,
            decoder_wct: false,
            multi_level: false,
            passes: MULTI_LEVEL_PASSES,
            transform: Arc::new(Wct),
            alpha: 1.0,
        }
    }
}

pub const MULTI_LEVEL_PASSES: usize = 4;

/// Content and style segmentation at image resolution.
#[derive(Clone, Copy, Debug)]
pub struct Segmentation<'a> {
    pub content: &'a SegmentationMap,
    pub style: &'a SegmentationMap,
}

impl Segmentation<'_> {
    fn at(&self, content: &FeatureMap, style: &FeatureMap) -> (SegmentationMap, SegmentationMap) {
        (
            self.content.resize_nearest(content.height(), content.width()),
            self.style.resize_nearest(style.height(), style.width()),
        )
    }
}

/// Output image features plus the sites that were actually transformed.
#[derive(Clone, Debug)]
pub struct Stylized {
    pub image: FeatureMap,
    pub applied: Vec<Site>,
}

fn transform_site(
    schedule: &StylizeSchedule,
    segmentation: Option<Segmentation<'_>>,
    site: Site,
    content: FeatureMap,
    style: &FeatureMap,
    applied: &mut Vec<Site>,
) -> Result<FeatureMap> {
    if content.pixels() < 2 || style.pixels() < 2 {
        log::warn!("{site}: feature map too small for statistics, left untouched");
        return Ok(content);
    }
    let masks = segmentation.map(|s| s.at(&content, style));
    let regions = masks.as_ref().map(|(c, s)| RegionPair { content: c, style: s });
    let out = schedule.transform.apply(&content, style, regions, schedule.alpha)?;
    applied.push(site);
    Ok(out)
}

/// Progressive stylization in one encoder–decoder pass.
///
/// The style is encoded once; the content is encoded with the transform
/// applied at each scheduled site against the style activation at the same
/// site, then decoded with its own (or, with `skip_wct`, stylized) skips.
pub fn stylize_forward(
    model: &Model,
    content: &FeatureMap,
    style: &FeatureMap,
    segmentation: Option<Segmentation<'_>>,
    schedule: &StylizeSchedule,
) -> Result<Stylized> {
    let style_enc = model.encode(style)?;
    let style_dec = if schedule.decoder_wct {
        model.decoder_taps(&style_enc)?
    } else {
        Vec::new()
    };
    let mut applied = Vec::new();

    let mut content_enc = model.encode_with(content, &mut |site, f| {
        if !schedule.encoder_wct {
            return Ok(f);
        }
        let s = style_enc
            .tap(site)
            .ok_or_else(|| contract!("style has no activation at {site}"))?;
        transform_site(schedule, segmentation, site, f, s, &mut applied)
    })?;

    if schedule.skip_wct {
        for (i, level) in content_enc.skips.levels.iter_mut().enumerate() {
            let style_level = &style_enc.skips.levels[i];
            let site = Site::Skip(i as u8 + 1);
            let highs = std::mem::take(&mut level.skip.high);
            for (h, s) in highs.into_iter().zip(&style_level.skip.high) {
                let out = transform_site(schedule, segmentation, site, h, s, &mut applied)?;
                level.skip.high.push(out);
            }
        }
    }

    let image = model.decode_with(&content_enc.bottleneck, &content_enc.skips, &mut |site, f| {
        if !schedule.decoder_wct {
            return Ok(f);
        }
        let s = style_dec
            .iter()
            .find(|(t, _)| *t == site)
            .map(|(_, f)| f)
            .ok_or_else(|| contract!("style has no decoder activation at {site}"))?;
        transform_site(schedule, segmentation, site, f, s, &mut applied)
    })?;

    Ok(Stylized { image, applied })
}

/// `schedule.passes` recursive stylization passes; each pass's output is
/// the next pass's content.
pub fn multi_level_stylize(
    model: &Model,
    content: &FeatureMap,
    style: &FeatureMap,
    segmentation: Option<Segmentation<'_>>,
    schedule: &StylizeSchedule,
) -> Result<Stylized> {
    if schedule.passes == 0 {
        return Err(contract!("multi-level stylization needs at least one pass"));
    }
    let mut current = content.clone();
    let mut applied = Vec::new();
    for _ in 0..schedule.passes {
        let pass = stylize_forward(model, &current, style, segmentation, schedule)?;
        applied.extend(pass.applied);
        current = pass.image;
    }
    Ok(Stylized {
        image: current,
        applied,
    })
}

/// Dispatches on `schedule.multi_level`.
pub fn stylize(
    model: &Model,
    content: &FeatureMap,
    style: &FeatureMap,
    segmentation: Option<Segmentation<'_>>,
    schedule: &StylizeSchedule,
) -> Result<Stylized> {
    if schedule.multi_level {
        multi_level_stylize(model, content, style, segmentation, schedule)
    } else {
        stylize_forward(model, content, style, segmentation, schedule)
    }
}

/// A complete, correctly shaped container of He-uniform random weights
/// (biases uniform in ±0.01). Used for tests and smoke runs without a
/// trained checkpoint.
pub fn random_weights(mode: UnpoolMode, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    let plans = [
        ("encoder", EncoderSpec::vgg19().steps),
        ("decoder", DecoderSpec::mirror(mode).steps),
    ];
    for (prefix, steps) in plans {
        for step in steps {
            if let Step::Conv {
                name,
                in_channels,
                out_channels,
                ..
            } = step
            {
                let bound = (6.0 / (in_channels * 9) as f32).sqrt();
                let w = (0..out_channels * in_channels * 9)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                let b = (0..out_channels).map(|_| rng.gen_range(-0.01..0.01)).collect();
                store.insert(
                    weight_name(prefix, name),
                    Tensor::new(vec![out_channels, in_channels, 3, 3], w).expect("shape"),
                );
                store.insert(
                    bias_name(prefix, name),
                    Tensor::new(vec![out_channels], b).expect("shape"),
                );
            }
        }
    }
    store
}
