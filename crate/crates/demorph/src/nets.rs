//! The decomposer and merger networks.
//!
//! Decomposer: a multi-decoder UNet — one encoder, `k` structurally identical
//! decoders that all consume the same latent tensor and the same encoder skip
//! tensors, each emitting one component image.
//!
//! Merger: the inverse — `k` encoders (one per component) whose per-stage
//! residuals and latents are point-wise summed to guide a single decoder per
//! head. Components are scaled by softplus-positive learned weights before
//! entering the encoders; each head owns its decoder and weight vector while
//! the encoders are shared across heads.
//!
//! Stage arithmetic: stage 0 is a full-resolution stem (stride 1); stages
//! 1..depth-1 halve the spatial side. At 224x224 with base 64 this yields the
//! 1024x14x14 latent; at 64x64 with base 16, 256x4x4.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ImageTensor, CHANNELS};
use crate::ops::act::{relu, relu_backward, sigmoid, sigmoid_backward, softplus, softplus_deriv, softplus_inverse};
use crate::ops::conv::{Conv2d, ConvTranspose2d};
use crate::ops::norm::{BatchNorm, BnCache};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub k: usize,
    pub resolution: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub heads: usize,
}

impl NetworkConfig {
    pub fn desk(k: usize, heads: usize) -> Self {
        NetworkConfig {
            k,
            resolution: 64,
            base_channels: 16,
            depth: 5,
            heads,
        }
    }

    pub fn paper(k: usize, heads: usize) -> Self {
        NetworkConfig {
            k,
            resolution: 224,
            base_channels: 64,
            depth: 5,
            heads,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be >= 2, got {}", self.k)));
        }
        if self.depth < 2 {
            return Err(Error::Config(format!("depth must be >= 2, got {}", self.depth)));
        }
        if !(self.heads == 1 || self.heads == 2) {
            return Err(Error::Config(format!("heads must be 1 or 2, got {}", self.heads)));
        }
        let halvings = 1usize << (self.depth - 1);
        if self.resolution % halvings != 0 || self.resolution / halvings == 0 {
            return Err(Error::Config(format!(
                "resolution {} not divisible by 2^(depth-1) = {}",
                self.resolution, halvings
            )));
        }
        Ok(())
    }

    pub fn channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    /// (channels, side, side) of the encoder latent.
    pub fn latent_shape(&self) -> (usize, usize, usize) {
        let side = self.resolution >> (self.depth - 1);
        (self.channels(self.depth - 1), side, side)
    }
}

// ---- building blocks ----

/// Conv + BatchNorm + ReLU.
#[derive(Debug, Clone)]
struct ConvBlock {
    conv: Conv2d,
    bn: BatchNorm,
}

struct ConvBlockCache {
    x: Tensor,
    bn: BnCache,
    y: Tensor,
}

impl ConvBlock {
    fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvBlock {
            conv: Conv2d::new(cin, cout, 3, stride, 1, rng),
            bn: BatchNorm::new(cout),
        }
    }

    fn forward_train(&mut self, x: &Tensor) -> (Tensor, ConvBlockCache) {
        let z = self.conv.forward(x);
        let (n, bn_cache) = self.bn.forward_train(&z);
        let y = relu(&n);
        (
            y.clone(),
            ConvBlockCache {
                x: x.clone(),
                bn: bn_cache,
                y,
            },
        )
    }

    fn forward_eval(&self, x: &Tensor) -> Tensor {
        relu(&self.bn.forward_eval(&self.conv.forward(x)))
    }

    fn backward(&mut self, cache: &ConvBlockCache, dy: &Tensor) -> Tensor {
        let d = relu_backward(&cache.y, dy);
        let d = self.bn.backward(&cache.bn, &d);
        self.conv.backward(&cache.x, &d)
    }
}

/// UNet encoder: stem at full resolution, then halving stages.
#[derive(Debug, Clone)]
pub struct Encoder {
    stages: Vec<ConvBlock>,
}

pub struct EncoderActs {
    /// Stage outputs; `acts[depth-1]` is the latent, the rest are skips.
    pub acts: Vec<Tensor>,
}

pub struct EncoderCache {
    stages: Vec<ConvBlockCache>,
}

impl Encoder {
    pub fn new(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut stages = Vec::with_capacity(cfg.depth);
        for s in 0..cfg.depth {
            let cin = if s == 0 { CHANNELS } else { cfg.channels(s - 1) };
            let stride = if s == 0 { 1 } else { 2 };
            let block = ConvBlock::new(cin, cfg.channels(s), stride, rng);
            debug_assert_eq!(block.conv.cout, cfg.base_channels << s);
            stages.push(block);
        }
        Encoder { stages }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> (EncoderActs, EncoderCache) {
        let mut acts = Vec::with_capacity(self.stages.len());
        let mut caches = Vec::with_capacity(self.stages.len());
        let mut cur = x.clone();
        for stage in &mut self.stages {
            let (y, c) = stage.forward_train(&cur);
            cur = y.clone();
            acts.push(y);
            caches.push(c);
        }
        (EncoderActs { acts }, EncoderCache { stages: caches })
    }

    pub fn forward_eval(&self, x: &Tensor) -> EncoderActs {
        let mut acts = Vec::with_capacity(self.stages.len());
        let mut cur = x.clone();
        for stage in &self.stages {
            cur = stage.forward_eval(&cur);
            acts.push(cur.clone());
        }
        EncoderActs { acts }
    }

    /// `d_latent` feeds the last stage; `d_skips[s]` adds at stage `s` output.
    pub fn backward(
        &mut self,
        cache: &EncoderCache,
        d_latent: &Tensor,
        d_skips: &[Tensor],
    ) -> Tensor {
        let depth = self.stages.len();
        assert_eq!(d_skips.len(), depth - 1);
        let mut grad = d_latent.clone();
        for s in (0..depth).rev() {
            if s < depth - 1 {
                grad.add_assign(&d_skips[s]);
            }
            grad = self.stages[s].backward(&cache.stages[s], &grad);
        }
        grad
    }
}

/// One upsample step: x2 transpose conv, skip concat, refining transpose conv.
#[derive(Debug, Clone)]
struct DecoderStage {
    up: ConvTranspose2d,
    bn1: BatchNorm,
    refine: ConvTranspose2d,
    bn2: BatchNorm,
}

struct DecoderStageCache {
    x: Tensor,
    a: Tensor,
    cat: Tensor,
    bn1: BnCache,
    bn2: BnCache,
    y: Tensor,
}

fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, ca, h, w) = a.dims4();
    let (nb, cb, hb, wb) = b.dims4();
    assert_eq!((n, h, w), (nb, hb, wb));
    let mut out = Tensor::zeros(&[n, ca + cb, h, w]);
    for i in 0..n {
        let dst = out.image_mut(i);
        dst[..ca * h * w].copy_from_slice(a.image(i));
        dst[ca * h * w..].copy_from_slice(b.image(i));
    }
    out
}

fn split_channels(x: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let (n, c, h, w) = x.dims4();
    assert!(ca < c);
    let cb = c - ca;
    let mut a = Tensor::zeros(&[n, ca, h, w]);
    let mut b = Tensor::zeros(&[n, cb, h, w]);
    for i in 0..n {
        let src = x.image(i);
        a.image_mut(i).copy_from_slice(&src[..ca * h * w]);
        b.image_mut(i).copy_from_slice(&src[ca * h * w..]);
    }
    (a, b)
}

impl DecoderStage {
    fn new(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        DecoderStage {
            up: ConvTranspose2d::new(cin, cout, 2, 2, 0, rng),
            bn1: BatchNorm::new(cout),
            refine: ConvTranspose2d::new(2 * cout, cout, 3, 1, 1, rng),
            bn2: BatchNorm::new(cout),
        }
    }

    fn forward_train(&mut self, x: &Tensor, skip: &Tensor) -> (Tensor, DecoderStageCache) {
        let z = self.up.forward(x);
        let (zn, bn1) = self.bn1.forward_train(&z);
        let a = relu(&zn);
        let cat = concat_channels(&a, skip);
        let r = self.refine.forward(&cat);
        let (rn, bn2) = self.bn2.forward_train(&r);
        let y = relu(&rn);
        (
            y.clone(),
            DecoderStageCache {
                x: x.clone(),
                a,
                cat,
                bn1,
                bn2,
                y,
            },
        )
    }

    fn forward_eval(&self, x: &Tensor, skip: &Tensor) -> Tensor {
        let a = relu(&self.bn1.forward_eval(&self.up.forward(x)));
        let cat = concat_channels(&a, skip);
        relu(&self.bn2.forward_eval(&self.refine.forward(&cat)))
    }

    fn backward(&mut self, cache: &DecoderStageCache, dy: &Tensor) -> (Tensor, Tensor) {
        let d = relu_backward(&cache.y, dy);
        let d = self.bn2.backward(&cache.bn2, &d);
        let dcat = self.refine.backward(&cache.cat, &d);
        let ca = cache.a.dims4().1;
        let (da, dskip) = split_channels(&dcat, ca);
        let da = relu_backward(&cache.a, &da);
        let da = self.bn1.backward(&cache.bn1, &da);
        let dx = self.up.backward(&cache.x, &da);
        (dx, dskip)
    }
}

/// Full decoder: upsample stages from the latent back to image space, then a
/// sigmoid head.
#[derive(Debug, Clone)]
pub struct Decoder {
    stages: Vec<DecoderStage>,
    head: Conv2d,
}

pub struct DecoderCache {
    stages: Vec<DecoderStageCache>,
    head_in: Tensor,
    out: Tensor,
}

impl Decoder {
    pub fn new(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Self {
        let depth = cfg.depth;
        let mut stages = Vec::with_capacity(depth - 1);
        for i in 0..(depth - 1) {
            let cin = cfg.channels(depth - 1 - i);
            let cout = cfg.channels(depth - 2 - i);
            stages.push(DecoderStage::new(cin, cout, rng));
        }
        Decoder {
            stages,
            head: Conv2d::new(cfg.base_channels, CHANNELS, 3, 1, 1, rng),
        }
    }

    /// `skips[s]` is the encoder stage-s output (shallow to deep).
    pub fn forward_train(&mut self, latent: &Tensor, skips: &[Tensor]) -> (Tensor, DecoderCache) {
        let depth = self.stages.len() + 1;
        assert_eq!(skips.len(), depth - 1);
        let mut cur = latent.clone();
        let mut caches = Vec::with_capacity(self.stages.len());
        for (i, stage) in self.stages.iter_mut().enumerate() {
            let skip = &skips[depth - 2 - i];
            let (y, c) = stage.forward_train(&cur, skip);
            cur = y;
            caches.push(c);
        }
        let z = self.head.forward(&cur);
        let out = sigmoid(&z);
        (
            out.clone(),
            DecoderCache {
                stages: caches,
                head_in: cur,
                out,
            },
        )
    }

    pub fn forward_eval(&self, latent: &Tensor, skips: &[Tensor]) -> Tensor {
        let depth = self.stages.len() + 1;
        assert_eq!(skips.len(), depth - 1);
        let mut cur = latent.clone();
        for (i, stage) in self.stages.iter().enumerate() {
            cur = stage.forward_eval(&cur, &skips[depth - 2 - i]);
        }
        sigmoid(&self.head.forward(&cur))
    }

    /// Returns (d_latent, d_skips shallow-to-deep).
    pub fn backward(&mut self, cache: &DecoderCache, dy: &Tensor) -> (Tensor, Vec<Tensor>) {
        let depth = self.stages.len() + 1;
        let d = sigmoid_backward(&cache.out, dy);
        let mut grad = self.head.backward(&cache.head_in, &d);
        let mut d_skips: Vec<Option<Tensor>> = vec![None; depth - 1];
        for i in (0..self.stages.len()).rev() {
            let (dx, dskip) = self.stages[i].backward(&cache.stages[i], &grad);
            d_skips[depth - 2 - i] = Some(dskip);
            grad = dx;
        }
        (grad, d_skips.into_iter().map(|d| d.unwrap()).collect())
    }
}

// ---- decomposer ----

/// One encoder, k decoders sharing latent and skip tensors.
#[derive(Debug, Clone)]
pub struct Decomposer {
    pub config: NetworkConfig,
    pub encoder: Encoder,
    pub decoders: Vec<Decoder>,
}

pub struct DecomposerCache {
    enc_acts: EncoderActs,
    enc: EncoderCache,
    decs: Vec<DecoderCache>,
}

impl Decomposer {
    pub fn new(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Self {
        Decomposer {
            config: *cfg,
            encoder: Encoder::new(cfg, rng),
            decoders: (0..cfg.k).map(|_| Decoder::new(cfg, rng)).collect(),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4();
        if c != CHANNELS || h != self.config.resolution || w != self.config.resolution {
            return Err(Error::Dimension(format!(
                "decomposer expects {}x{}x{}, got {}x{}x{}",
                CHANNELS, self.config.resolution, self.config.resolution, c, h, w
            )));
        }
        Ok(())
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Vec<Tensor>, DecomposerCache)> {
        self.check_input(x)?;
        let (acts, enc_cache) = self.encoder.forward_train(x);
        let depth = acts.acts.len();
        let skips = &acts.acts[..depth - 1];
        let latent = &acts.acts[depth - 1];
        let mut comps = Vec::with_capacity(self.decoders.len());
        let mut dec_caches = Vec::with_capacity(self.decoders.len());
        for dec in &mut self.decoders {
            let (y, c) = dec.forward_train(latent, skips);
            comps.push(y);
            dec_caches.push(c);
        }
        Ok((
            comps,
            DecomposerCache {
                enc_acts: acts,
                enc: enc_cache,
                decs: dec_caches,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let acts = self.encoder.forward_eval(x);
        let depth = acts.acts.len();
        let skips = &acts.acts[..depth - 1];
        let latent = &acts.acts[depth - 1];
        Ok(self
            .decoders
            .iter()
            .map(|d| d.forward_eval(latent, skips))
            .collect())
    }

    /// Latent and skip activations as the decoders see them (for inspection).
    pub fn encode_eval(&self, x: &Tensor) -> Result<EncoderActs> {
        self.check_input(x)?;
        Ok(self.encoder.forward_eval(x))
    }

    pub fn backward(&mut self, cache: &DecomposerCache, d_comps: &[Tensor]) -> Tensor {
        assert_eq!(d_comps.len(), self.decoders.len());
        let depth = cache.enc_acts.acts.len();
        let mut d_latent: Option<Tensor> = None;
        let mut d_skips: Vec<Option<Tensor>> = vec![None; depth - 1];
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            let (dl, ds) = dec.backward(&cache.decs[i], &d_comps[i]);
            match &mut d_latent {
                Some(t) => t.add_assign(&dl),
                None => d_latent = Some(dl),
            }
            for (s, d) in ds.into_iter().enumerate() {
                match &mut d_skips[s] {
                    Some(t) => t.add_assign(&d),
                    None => d_skips[s] = Some(d),
                }
            }
        }
        let d_skips: Vec<Tensor> = d_skips.into_iter().map(|d| d.unwrap()).collect();
        self.encoder
            .backward(&cache.enc, &d_latent.unwrap(), &d_skips)
    }
}

// ---- merger ----

/// k encoders with point-wise summed residuals, one decoder + weight vector
/// per head. Encoders are shared across heads.
#[derive(Debug, Clone)]
pub struct Merger {
    pub config: NetworkConfig,
    pub encoders: Vec<Encoder>,
    pub decoders: Vec<Decoder>,
    /// Raw (pre-softplus) weights, one length-k vector per head.
    pub w_raw: Vec<Tensor>,
    pub gw_raw: Vec<Tensor>,
}

pub struct MergerCache {
    head: usize,
    encs: Vec<EncoderCache>,
    dec: DecoderCache,
}

impl Merger {
    pub fn new(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Self {
        let encoders = (0..cfg.k).map(|_| Encoder::new(cfg, rng)).collect();
        let decoders = (0..cfg.heads).map(|_| Decoder::new(cfg, rng)).collect();
        // softplus(w) == 1 at init
        let raw = softplus_inverse(1.0);
        Merger {
            config: *cfg,
            encoders,
            decoders,
            w_raw: (0..cfg.heads).map(|_| Tensor::full(&[cfg.k], raw)).collect(),
            gw_raw: (0..cfg.heads).map(|_| Tensor::zeros(&[cfg.k])).collect(),
        }
    }

    pub fn check_head(&self, head: usize) -> Result<()> {
        if head >= self.config.heads {
            return Err(Error::Config(format!(
                "head {} out of range (heads = {})",
                head, self.config.heads
            )));
        }
        Ok(())
    }

    fn check_components(&self, comps: &[Tensor]) -> Result<()> {
        if comps.len() != self.config.k {
            return Err(Error::Dimension(format!(
                "expected {} components, got {}",
                self.config.k,
                comps.len()
            )));
        }
        Ok(())
    }

    /// Positive weight of component `i` for `head`.
    pub fn weight(&self, head: usize, i: usize) -> f64 {
        softplus(self.w_raw[head].data()[i])
    }

    /// Scale each component by its softplus weight, order preserved.
    pub fn apply_weights(&self, head: usize, comps: &[Tensor]) -> Result<Vec<Tensor>> {
        self.check_head(head)?;
        self.check_components(comps)?;
        Ok(comps
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = self.weight(head, i);
                c.map(|v| v * w)
            })
            .collect())
    }

    fn summed_acts(actsets: &[EncoderActs]) -> Vec<Tensor> {
        let depth = actsets[0].acts.len();
        (0..depth)
            .map(|s| {
                let mut acc = actsets[0].acts[s].clone();
                for set in &actsets[1..] {
                    acc.add_assign(&set.acts[s]);
                }
                acc
            })
            .collect()
    }

    pub fn forward_train(&mut self, head: usize, comps: &[Tensor]) -> Result<(Tensor, MergerCache)> {
        self.check_head(head)?;
        self.check_components(comps)?;
        let weighted = self.apply_weights(head, comps)?;
        let mut actsets = Vec::with_capacity(self.config.k);
        let mut enc_caches = Vec::with_capacity(self.config.k);
        for (enc, wc) in self.encoders.iter_mut().zip(&weighted) {
            let (acts, cache) = enc.forward_train(wc);
            actsets.push(acts);
            enc_caches.push(cache);
        }
        let summed = Self::summed_acts(&actsets);
        let depth = summed.len();
        let (out, dec_cache) =
            self.decoders[head].forward_train(&summed[depth - 1], &summed[..depth - 1]);
        Ok((
            out,
            MergerCache {
                head,
                encs: enc_caches,
                dec: dec_cache,
            },
        ))
    }

    pub fn forward_eval(&self, head: usize, comps: &[Tensor]) -> Result<Tensor> {
        self.check_head(head)?;
        self.check_components(comps)?;
        let weighted = self.apply_weights(head, comps)?;
        let actsets: Vec<EncoderActs> = self
            .encoders
            .iter()
            .zip(&weighted)
            .map(|(enc, wc)| enc.forward_eval(wc))
            .collect();
        let summed = Self::summed_acts(&actsets);
        let depth = summed.len();
        Ok(self.decoders[head].forward_eval(&summed[depth - 1], &summed[..depth - 1]))
    }

    /// Backprop one head; returns gradients w.r.t. the (unweighted)
    /// components. `comps` must be the tensors passed to `forward_train`.
    pub fn backward(
        &mut self,
        cache: &MergerCache,
        comps: &[Tensor],
        d_out: &Tensor,
    ) -> Vec<Tensor> {
        let head = cache.head;
        let (d_latent, d_skips) = self.decoders[head].backward(&cache.dec, d_out);
        let mut d_comps = Vec::with_capacity(self.config.k);
        for i in 0..self.config.k {
            // summed residuals broadcast the same gradient to every encoder
            let d_weighted = self.encoders[i].backward(&cache.encs[i], &d_latent, &d_skips);
            let raw = self.w_raw[head].data()[i];
            let w = softplus(raw);
            // d/d raw = sigmoid(raw) * sum(d_weighted ⊙ comp_i)
            let inner: f64 = d_weighted
                .data()
                .iter()
                .zip(comps[i].data())
                .map(|(g, c)| g * c)
                .sum();
            self.gw_raw[head].data_mut()[i] += softplus_deriv(raw) * inner;
            d_comps.push(d_weighted.map(|v| v * w));
        }
        d_comps
    }
}

// ---- top-level operations ----

/// Deterministic parameter initialization for both networks.
pub fn init_params(cfg: &NetworkConfig, seed: u64) -> Result<(Decomposer, Merger)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dec = Decomposer::new(cfg, &mut rng);
    let mer = Merger::new(cfg, &mut rng);
    Ok((dec, mer))
}

/// Decompose a single image into k component images (evaluation mode).
pub fn decompose(dec: &Decomposer, image: &ImageTensor) -> Result<Vec<ImageTensor>> {
    let batch = ImageTensor::batch(&[image]);
    let comps = dec.forward_eval(&batch)?;
    Ok(comps
        .iter()
        .map(|c| ImageTensor::from_batch(c).remove(0))
        .collect())
}

/// Merge a component set through one head (evaluation mode).
pub fn merge(mer: &Merger, head: usize, comps: &[ImageTensor]) -> Result<ImageTensor> {
    let tensors: Vec<Tensor> = comps.iter().map(|c| ImageTensor::batch(&[c])).collect();
    let out = mer.forward_eval(head, &tensors)?;
    Ok(ImageTensor::from_batch(&out).remove(0))
}

/// Demorph: decompose the morph and reconstruct both bonafide estimates.
pub fn demorph(
    dec: &Decomposer,
    mer: &Merger,
    morph: &ImageTensor,
) -> Result<(ImageTensor, ImageTensor, Vec<ImageTensor>)> {
    if mer.config.heads != 2 {
        return Err(Error::Config(format!(
            "demorphing needs a 2-head merger, got {}",
            mer.config.heads
        )));
    }
    let comps = decompose(dec, morph)?;
    let o1 = merge(mer, 0, &comps)?;
    let o2 = merge(mer, 1, &comps)?;
    Ok((o1, o2, comps))
}

// ---- parameter enumeration (for the optimizer and checkpoints) ----

/// A named trainable parameter with its gradient buffer.
pub struct ParamMut<'a> {
    pub name: String,
    pub value: &'a mut Tensor,
    pub grad: &'a mut Tensor,
}

/// A named persistent tensor (trainable or running statistic).
pub struct StateRef<'a> {
    pub name: String,
    pub value: &'a Tensor,
}

pub struct StateMut<'a> {
    pub name: String,
    pub value: &'a mut Tensor,
}

impl Conv2d {
    fn trainable<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            name: format!("{prefix}.weight"),
            value: &mut self.w,
            grad: &mut self.gw,
        });
        out.push(ParamMut {
            name: format!("{prefix}.bias"),
            value: &mut self.b,
            grad: &mut self.gb,
        });
    }

    fn state<'a>(&'a self, prefix: &str, out: &mut Vec<StateRef<'a>>) {
        out.push(StateRef {
            name: format!("{prefix}.weight"),
            value: &self.w,
        });
        out.push(StateRef {
            name: format!("{prefix}.bias"),
            value: &self.b,
        });
    }

    fn state_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<StateMut<'a>>) {
        out.push(StateMut {
            name: format!("{prefix}.weight"),
            value: &mut self.w,
        });
        out.push(StateMut {
            name: format!("{prefix}.bias"),
            value: &mut self.b,
        });
    }
}

impl ConvTranspose2d {
    fn trainable<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            name: format!("{prefix}.weight"),
            value: &mut self.w,
            grad: &mut self.gw,
        });
        out.push(ParamMut {
            name: format!("{prefix}.bias"),
            value: &mut self.b,
            grad: &mut self.gb,
        });
    }

    fn state<'a>(&'a self, prefix: &str, out: &mut Vec<StateRef<'a>>) {
        out.push(StateRef {
            name: format!("{prefix}.weight"),
            value: &self.w,
        });
        out.push(StateRef {
            name: format!("{prefix}.bias"),
            value: &self.b,
        });
    }

    fn state_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<StateMut<'a>>) {
        out.push(StateMut {
            name: format!("{prefix}.weight"),
            value: &mut self.w,
        });
        out.push(StateMut {
            name: format!("{prefix}.bias"),
            value: &mut self.b,
        });
    }
}

impl BatchNorm {
    fn trainable<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            name: format!("{prefix}.gamma"),
            value: &mut self.gamma,
            grad: &mut self.ggamma,
        });
        out.push(ParamMut {
            name: format!("{prefix}.beta"),
            value: &mut self.beta,
            grad: &mut self.gbeta,
        });
    }

    fn state<'a>(&'a self, prefix: &str, out: &mut Vec<StateRef<'a>>) {
        out.push(StateRef {
            name: format!("{prefix}.gamma"),
            value: &self.gamma,
        });
        out.push(StateRef {
            name: format!("{prefix}.beta"),
            value: &self.beta,
        });
        out.push(StateRef {
            name: format!("{prefix}.running_mean"),
            value: &self.running_mean,
        });
        out.push(StateRef {
            name: format!("{prefix}.running_var"),
            value: &self.running_var,
        });
    }

    fn state_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<StateMut<'a>>) {
        out.push(StateMut {
            name: format!("{prefix}.gamma"),
            value: &mut self.gamma,
        });
        out.push(StateMut {
            name: format!("{prefix}.beta"),
            value: &mut self.beta,
        });
        out.push(StateMut {
            name: format!("{prefix}.running_mean"),
            value: &mut self.running_mean,
        });
        out.push(StateMut {
            name: format!("{prefix}.running_var"),
            value: &mut self.running_var,
        });
    }
}

macro_rules! visit_block {
    ($block:expr, $prefix:expr, $out:expr, $method:ident) => {{
        $block.conv.$method(&format!("{}.conv", $prefix), $out);
        $block.bn.$method(&format!("{}.bn", $prefix), $out);
    }};
}

macro_rules! visit_dec_stage {
    ($stage:expr, $prefix:expr, $out:expr, $method:ident) => {{
        $stage.up.$method(&format!("{}.up", $prefix), $out);
        $stage.bn1.$method(&format!("{}.bn1", $prefix), $out);
        $stage.refine.$method(&format!("{}.refine", $prefix), $out);
        $stage.bn2.$method(&format!("{}.bn2", $prefix), $out);
    }};
}

impl Encoder {
    fn trainable<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        for (s, block) in self.stages.iter_mut().enumerate() {
            visit_block!(block, format!("{prefix}.stage{s}"), out, trainable);
        }
    }

    fn state<'a>(&'a self, prefix: &str, out: &mut Vec<StateRef<'a>>) {
        for (s, block) in self.stages.iter().enumerate() {
            visit_block!(block, format!("{prefix}.stage{s}"), out, state);
        }
    }

    fn state_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<StateMut<'a>>) {
        for (s, block) in self.stages.iter_mut().enumerate() {
            visit_block!(block, format!("{prefix}.stage{s}"), out, state_mut);
        }
    }
}

impl Decoder {
    fn trainable<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        for (s, stage) in self.stages.iter_mut().enumerate() {
            visit_dec_stage!(stage, format!("{prefix}.stage{s}"), out, trainable);
        }
        self.head.trainable(&format!("{prefix}.head"), out);
    }

    fn state<'a>(&'a self, prefix: &str, out: &mut Vec<StateRef<'a>>) {
        for (s, stage) in self.stages.iter().enumerate() {
            visit_dec_stage!(stage, format!("{prefix}.stage{s}"), out, state);
        }
        self.head.state(&format!("{prefix}.head"), out);
    }

    fn state_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<StateMut<'a>>) {
        for (s, stage) in self.stages.iter_mut().enumerate() {
            visit_dec_stage!(stage, format!("{prefix}.stage{s}"), out, state_mut);
        }
        self.head.state_mut(&format!("{prefix}.head"), out);
    }
}

impl Decomposer {
    pub fn trainable_params(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        self.encoder.trainable("decomposer.encoder", &mut out);
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            dec.trainable(&format!("decomposer.decoder{i}"), &mut out);
        }
        out
    }

    pub fn state_params(&self) -> Vec<StateRef<'_>> {
        let mut out = Vec::new();
        self.encoder.state("decomposer.encoder", &mut out);
        for (i, dec) in self.decoders.iter().enumerate() {
            dec.state(&format!("decomposer.decoder{i}"), &mut out);
        }
        out
    }

    pub fn state_params_mut(&mut self) -> Vec<StateMut<'_>> {
        let mut out = Vec::new();
        self.encoder.state_mut("decomposer.encoder", &mut out);
        for (i, dec) in self.decoders.iter_mut().enumerate() {
            dec.state_mut(&format!("decomposer.decoder{i}"), &mut out);
        }
        out
    }
}

impl Merger {
    pub fn trainable_params(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            enc.trainable(&format!("merger.encoder{i}"), &mut out);
        }
        for (h, dec) in self.decoders.iter_mut().enumerate() {
            dec.trainable(&format!("merger.decoder{h}"), &mut out);
        }
        for (h, (w, g)) in self.w_raw.iter_mut().zip(self.gw_raw.iter_mut()).enumerate() {
            out.push(ParamMut {
                name: format!("merger.weights{h}"),
                value: w,
                grad: g,
            });
        }
        out
    }

    pub fn state_params(&self) -> Vec<StateRef<'_>> {
        let mut out = Vec::new();
        for (i, enc) in self.encoders.iter().enumerate() {
            enc.state(&format!("merger.encoder{i}"), &mut out);
        }
        for (h, dec) in self.decoders.iter().enumerate() {
            dec.state(&format!("merger.decoder{h}"), &mut out);
        }
        for (h, w) in self.w_raw.iter().enumerate() {
            out.push(StateRef {
                name: format!("merger.weights{h}"),
                value: w,
            });
        }
        out
    }

    pub fn state_params_mut(&mut self) -> Vec<StateMut<'_>> {
        let mut out = Vec::new();
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            enc.state_mut(&format!("merger.encoder{i}"), &mut out);
        }
        for (h, dec) in self.decoders.iter_mut().enumerate() {
            dec.state_mut(&format!("merger.decoder{h}"), &mut out);
        }
        for (h, w) in self.w_raw.iter_mut().enumerate() {
            out.push(StateMut {
                name: format!("merger.weights{h}"),
                value: w,
            });
        }
        out
    }
}
