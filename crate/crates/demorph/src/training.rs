//! Optimization loops for the two training modes, with Adam, an exponential
//! learning-rate schedule, gradient clipping, checkpointing, and a loss trace.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::imaging::{ImageTensor, MorphSample};
use crate::losses::{decomposition_loss_with_grad, default_lambda, final_loss_with_grad};
use crate::nets::{init_params, Decomposer, Merger, NetworkConfig, ParamMut};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Decomposition,
    Demorphing,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_gamma")]
    pub lr_gamma: f64,
    #[serde(default)]
    pub seed: u64,
    /// None → 1/(k+1).
    #[serde(default)]
    pub lambda: Option<f64>,
    /// 0 disables intermediate checkpoints.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default = "default_clip")]
    pub grad_clip: f64,
    pub net: NetworkConfig,
}

fn default_lr() -> f64 {
    0.002
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    800
}
fn default_gamma() -> f64 {
    0.998
}
fn default_clip() -> f64 {
    5.0
}

impl TrainConfig {
    /// Desk-scale recipe for the given mode.
    pub fn desk(mode: TrainMode, k: usize) -> Self {
        let heads = match mode {
            TrainMode::Decomposition => 1,
            TrainMode::Demorphing => 2,
        };
        TrainConfig {
            mode,
            learning_rate: 0.002,
            batch_size: 8,
            epochs: 300,
            lr_gamma: 0.998,
            seed: 0,
            lambda: None,
            checkpoint_every: 0,
            grad_clip: 5.0,
            net: NetworkConfig::desk(k, heads),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return Err(Error::Config(format!(
                "lr_gamma must be in (0, 1], got {}",
                self.lr_gamma
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config(format!(
                "grad_clip must be positive, got {}",
                self.grad_clip
            )));
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("lambda must be in [0,1], got {l}")));
            }
        }
        let wanted_heads = match self.mode {
            TrainMode::Decomposition => 1,
            TrainMode::Demorphing => 2,
        };
        if self.net.heads != wanted_heads {
            return Err(Error::Config(format!(
                "{:?} mode needs {} merger head(s), config has {}",
                self.mode, wanted_heads, self.net.heads
            )));
        }
        Ok(())
    }

    pub fn effective_lambda(&self) -> Result<f64> {
        match self.lambda {
            Some(l) => Ok(l),
            None => default_lambda(self.net.k),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// One mean loss per epoch; length == epochs.
    pub losses: Vec<f64>,
    /// Learning rate used in each epoch.
    pub lrs: Vec<f64>,
    pub final_checkpoint: Option<PathBuf>,
    pub wall_clock_secs: f64,
    pub seed: u64,
}

// ---- optimizer ----

/// Adam with bias correction; state vectors keyed by parameter order.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [ParamMut<'_>], lr: f64) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer/parameter mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((w, &g), (mi, vi)) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

/// Scale all gradients so the global L2 norm is at most `max_norm`.
fn clip_grads(params: &mut [ParamMut<'_>], max_norm: f64) {
    let sq: f64 = params
        .iter()
        .map(|p| p.grad.data().iter().map(|g| g * g).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in params.iter_mut() {
            p.grad.scale(s);
        }
    }
}

fn optimize_step(
    adam: &mut Adam,
    dec: &mut Decomposer,
    mer: &mut Merger,
    lr: f64,
    clip: f64,
) {
    let mut params = dec.trainable_params();
    params.extend(mer.trainable_params());
    clip_grads(&mut params, clip);
    adam.step(&mut params, lr);
    for p in params.iter_mut() {
        p.grad.fill(0.0);
    }
}

fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add((epoch as u64).wrapping_mul(0xBF58476D1CE4E5B9))
        ^ 0x94D049BB133111EB;
    ChaCha8Rng::seed_from_u64(mixed)
}

fn write_loss_csv(dir: &Path, losses: &[f64], lrs: &[f64]) -> Result<()> {
    let mut csv = String::from("epoch,loss,lr\n");
    for (e, (l, lr)) in losses.iter().zip(lrs).enumerate() {
        csv.push_str(&format!("{e},{l},{lr}\n"));
    }
    let path = dir.join("loss.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(path, e))
}

struct EpochCheckpoints<'a> {
    out_dir: Option<&'a Path>,
    every: usize,
}

impl EpochCheckpoints<'_> {
    fn maybe_save(&self, epoch: usize, dec: &Decomposer, mer: &Merger) -> Result<()> {
        if let Some(dir) = self.out_dir {
            if self.every > 0 && (epoch + 1) % self.every == 0 {
                checkpoint::save(&dir.join(format!("checkpoint-epoch-{}", epoch + 1)), dec, mer)?;
            }
        }
        Ok(())
    }

    fn save_final(&self, dec: &Decomposer, mer: &Merger) -> Result<Option<PathBuf>> {
        if let Some(dir) = self.out_dir {
            let path = dir.join("checkpoint-final");
            checkpoint::save(&path, dec, mer)?;
            Ok(Some(path))
        } else {
            Ok(None)
        }
    }
}

fn params_are_finite(dec: &Decomposer, mer: &Merger) -> bool {
    dec.state_params()
        .iter()
        .chain(mer.state_params().iter())
        .all(|p| p.value.data().iter().all(|v| v.is_finite()))
}

/// Train decomposition mode: the decomposer splits each image, the single
/// merger head reconstructs it.
pub fn train_decomposition(
    images: &[ImageTensor],
    cfg: &TrainConfig,
    init: Option<(Decomposer, Merger)>,
    out_dir: Option<&Path>,
) -> Result<(Decomposer, Merger, TrainReport)> {
    cfg.validate()?;
    if cfg.mode != TrainMode::Decomposition {
        return Err(Error::Config("config mode is not decomposition".into()));
    }
    if images.is_empty() {
        return Err(Error::Data("no training images".into()));
    }
    for img in images {
        if img.resolution() != cfg.net.resolution {
            return Err(Error::Dimension(format!(
                "image resolution {} != network resolution {}",
                img.resolution(),
                cfg.net.resolution
            )));
        }
    }
    let lambda = cfg.effective_lambda()?;
    let (mut dec, mut mer) = match init {
        Some(pair) => pair,
        None => init_params(&cfg.net, cfg.seed)?,
    };
    if !params_are_finite(&dec, &mer) {
        return Err(Error::Diverged { epoch: 0 });
    }
    let mut adam = Adam::new();
    let ckpts = EpochCheckpoints {
        out_dir,
        every: cfg.checkpoint_every,
    };
    let start = Instant::now();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut lrs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * cfg.lr_gamma.powi(epoch as i32);
        let order = shuffled_indices(images.len(), &mut epoch_rng(cfg.seed, epoch));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&ImageTensor> = chunk.iter().map(|&i| &images[i]).collect();
            let x = ImageTensor::batch(&refs);
            let bs = chunk.len();
            let (comps, dcache) = dec.forward_train(&x)?;
            let (recon, mcache) = mer.forward_train(0, &comps)?;

            let mut d_recon = Tensor::zeros(recon.shape());
            let mut d_comps_loss: Vec<Tensor> =
                comps.iter().map(|c| Tensor::zeros(c.shape())).collect();
            let mut batch_loss = 0.0;
            for bi in 0..bs {
                let comp_slices: Vec<&[f64]> = comps.iter().map(|c| c.image(bi)).collect();
                let g = decomposition_loss_with_grad(
                    x.image(bi),
                    recon.image(bi),
                    &comp_slices,
                    lambda,
                );
                batch_loss += g.loss;
                let scale = 1.0 / bs as f64;
                for (dst, src) in d_recon.image_mut(bi).iter_mut().zip(&g.d_recon) {
                    *dst = src * scale;
                }
                for (c, gc) in d_comps_loss.iter_mut().zip(&g.d_components) {
                    for (dst, src) in c.image_mut(bi).iter_mut().zip(gc) {
                        *dst = src * scale;
                    }
                }
            }
            batch_loss /= bs as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += batch_loss * bs as f64;

            let d_comps_merger = mer.backward(&mcache, &comps, &d_recon);
            let d_comps: Vec<Tensor> = d_comps_loss
                .into_iter()
                .zip(d_comps_merger)
                .map(|(mut a, b)| {
                    a.add_assign(&b);
                    a
                })
                .collect();
            dec.backward(&dcache, &d_comps);
            optimize_step(&mut adam, &mut dec, &mut mer, lr, cfg.grad_clip);
        }
        losses.push(epoch_loss / images.len() as f64);
        lrs.push(lr);
        ckpts.maybe_save(epoch, &dec, &mer)?;
    }
    let final_checkpoint = ckpts.save_final(&dec, &mer)?;
    if let Some(dir) = out_dir {
        write_loss_csv(dir, &losses, &lrs)?;
    }
    let report = TrainReport {
        losses,
        lrs,
        final_checkpoint,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
    };
    Ok((dec, mer, report))
}

/// Train demorphing mode: two merger heads recover the bonafides behind each
/// morph under the cross-road loss.
pub fn train_demorph(
    samples: &[MorphSample],
    cfg: &TrainConfig,
    init: Option<(Decomposer, Merger)>,
    out_dir: Option<&Path>,
) -> Result<(Decomposer, Merger, TrainReport)> {
    cfg.validate()?;
    if cfg.mode != TrainMode::Demorphing {
        return Err(Error::Config("config mode is not demorphing".into()));
    }
    if samples.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    for s in samples {
        for img in [&s.morph, &s.bonafide1, &s.bonafide2] {
            if img.resolution() != cfg.net.resolution {
                return Err(Error::Dimension(format!(
                    "sample resolution {} != network resolution {}",
                    img.resolution(),
                    cfg.net.resolution
                )));
            }
        }
    }
    let lambda = cfg.effective_lambda()?;
    let (mut dec, mut mer) = match init {
        Some(pair) => pair,
        None => init_params(&cfg.net, cfg.seed)?,
    };
    if !params_are_finite(&dec, &mer) {
        return Err(Error::Diverged { epoch: 0 });
    }
    let mut adam = Adam::new();
    let ckpts = EpochCheckpoints {
        out_dir,
        every: cfg.checkpoint_every,
    };
    let start = Instant::now();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut lrs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * cfg.lr_gamma.powi(epoch as i32);
        let order = shuffled_indices(samples.len(), &mut epoch_rng(cfg.seed, epoch));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let bs = chunk.len();
            let morphs: Vec<&ImageTensor> = chunk.iter().map(|&i| &samples[i].morph).collect();
            let x = ImageTensor::batch(&morphs);
            let (comps, dcache) = dec.forward_train(&x)?;
            let (o1, mcache1) = mer.forward_train(0, &comps)?;
            let (o2, mcache2) = mer.forward_train(1, &comps)?;

            let mut d_o1 = Tensor::zeros(o1.shape());
            let mut d_o2 = Tensor::zeros(o2.shape());
            let mut d_comps_loss: Vec<Tensor> =
                comps.iter().map(|c| Tensor::zeros(c.shape())).collect();
            let mut batch_loss = 0.0;
            for (bi, &si) in chunk.iter().enumerate() {
                let s = &samples[si];
                let comp_slices: Vec<&[f64]> = comps.iter().map(|c| c.image(bi)).collect();
                let g = final_loss_with_grad(
                    x.image(bi),
                    o1.image(bi),
                    o2.image(bi),
                    s.bonafide1.data(),
                    s.bonafide2.data(),
                    &comp_slices,
                    lambda,
                );
                batch_loss += g.loss;
                let scale = 1.0 / bs as f64;
                for (dst, src) in d_o1.image_mut(bi).iter_mut().zip(&g.d_o1) {
                    *dst = src * scale;
                }
                for (dst, src) in d_o2.image_mut(bi).iter_mut().zip(&g.d_o2) {
                    *dst = src * scale;
                }
                for (c, gc) in d_comps_loss.iter_mut().zip(&g.d_components) {
                    for (dst, src) in c.image_mut(bi).iter_mut().zip(gc) {
                        *dst = src * scale;
                    }
                }
            }
            batch_loss /= bs as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += batch_loss * bs as f64;

            let d_comps_h1 = mer.backward(&mcache1, &comps, &d_o1);
            let d_comps_h2 = mer.backward(&mcache2, &comps, &d_o2);
            let d_comps: Vec<Tensor> = d_comps_loss
                .into_iter()
                .zip(d_comps_h1)
                .zip(d_comps_h2)
                .map(|((mut a, b), c)| {
                    a.add_assign(&b);
                    a.add_assign(&c);
                    a
                })
                .collect();
            dec.backward(&dcache, &d_comps);
            optimize_step(&mut adam, &mut dec, &mut mer, lr, cfg.grad_clip);
        }
        losses.push(epoch_loss / samples.len() as f64);
        lrs.push(lr);
        ckpts.maybe_save(epoch, &dec, &mer)?;
    }
    let final_checkpoint = ckpts.save_final(&dec, &mer)?;
    if let Some(dir) = out_dir {
        write_loss_csv(dir, &losses, &lrs)?;
    }
    let report = TrainReport {
        losses,
        lrs,
        final_checkpoint,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
    };
    Ok((dec, mer, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{render_bonafide, IdentityParams};
    use crate::losses::component_penalty_with_grad;

    fn tiny_net(heads: usize) -> NetworkConfig {
        NetworkConfig {
            k: 3,
            resolution: 16,
            base_channels: 4,
            depth: 3,
            heads,
        }
    }

    fn tiny_cfg(mode: TrainMode, epochs: usize) -> TrainConfig {
        TrainConfig {
            mode,
            learning_rate: 0.01,
            batch_size: 4,
            epochs,
            lr_gamma: 0.99,
            seed: 7,
            lambda: None,
            checkpoint_every: 0,
            grad_clip: 5.0,
            net: tiny_net(match mode {
                TrainMode::Decomposition => 1,
                TrainMode::Demorphing => 2,
            }),
        }
    }

    fn tiny_images(n: usize) -> Vec<ImageTensor> {
        (0..n)
            .map(|i| render_bonafide(&IdentityParams::new(i as u64 + 1), 0, 16).unwrap())
            .collect()
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let good = tiny_cfg(TrainMode::Decomposition, 1);
        good.validate().unwrap();
        let mut c = good.clone();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.lr_gamma = 1.5;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        // mode/head mismatch
        let mut c = good.clone();
        c.net.heads = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn decomposition_loss_decreases() {
        let images = tiny_images(6);
        let cfg = tiny_cfg(TrainMode::Decomposition, 6);
        let (_, _, report) = train_decomposition(&images, &cfg, None, None).unwrap();
        assert_eq!(report.losses.len(), 6);
        assert_eq!(report.lrs.len(), 6);
        assert!(
            report.losses.last().unwrap() < report.losses.first().unwrap(),
            "losses: {:?}",
            report.losses
        );
        // schedule: lr_e = lr0 * gamma^e
        assert!((report.lrs[0] - 0.01).abs() < 1e-15);
        assert!((report.lrs[1] - 0.01 * 0.99).abs() < 1e-15);
    }

    #[test]
    fn training_is_deterministic() {
        let images = tiny_images(4);
        let cfg = tiny_cfg(TrainMode::Decomposition, 2);
        let (d1, m1, r1) = train_decomposition(&images, &cfg, None, None).unwrap();
        let (d2, m2, r2) = train_decomposition(&images, &cfg, None, None).unwrap();
        assert_eq!(r1.losses, r2.losses);
        for (a, b) in d1.state_params().iter().zip(d2.state_params().iter()) {
            assert_eq!(a.value, b.value, "{} differs", a.name);
        }
        for (a, b) in m1.state_params().iter().zip(m2.state_params().iter()) {
            assert_eq!(a.value, b.value, "{} differs", a.name);
        }
    }

    #[test]
    fn checkpoint_counting() {
        let dir = tempfile::tempdir().unwrap();
        let images = tiny_images(2);
        let mut cfg = tiny_cfg(TrainMode::Decomposition, 4);
        cfg.batch_size = 2;
        cfg.checkpoint_every = 2;
        let (_, _, report) = train_decomposition(&images, &cfg, None, Some(dir.path())).unwrap();
        let mut intermediates: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| {
                let name = e.unwrap().file_name().into_string().unwrap();
                name.starts_with("checkpoint-epoch-").then_some(name)
            })
            .collect();
        intermediates.sort();
        assert_eq!(intermediates, ["checkpoint-epoch-2", "checkpoint-epoch-4"]);
        assert!(report.final_checkpoint.as_ref().unwrap().ends_with("checkpoint-final"));
        assert!(dir.path().join("checkpoint-final/config.json").is_file());
        assert!(dir.path().join("loss.csv").is_file());
        let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5); // header + 4 epochs
        assert!(csv.starts_with("epoch,loss,lr\n"));
    }

    #[test]
    fn lambda_one_kills_penalty_gradients() {
        // with lambda = 1 the decomposition penalty contributes no gradient
        let x = vec![0.3; 48];
        let c1 = vec![0.1; 48];
        let c2 = vec![0.9; 48];
        let comps: Vec<&[f64]> = vec![&c1, &c2];
        let (v, grads) = component_penalty_with_grad(&x, &comps, 1.0);
        assert_eq!(v, 0.0);
        assert!(grads.iter().all(|g| g.iter().all(|&d| d == 0.0)));
    }

    #[test]
    fn non_finite_init_is_divergence() {
        let images = tiny_images(2);
        let cfg = tiny_cfg(TrainMode::Decomposition, 1);
        let (mut dec, mer) = init_params(&cfg.net, 3).unwrap();
        dec.state_params_mut()[0].value.data_mut()[0] = f64::NAN;
        let err = train_decomposition(&images, &cfg, Some((dec, mer)), None).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0 }));
    }

    #[test]
    fn demorph_training_runs_and_decreases() {
        let ids: Vec<IdentityParams> = (1..=3).map(IdentityParams::new).collect();
        let mut samples = Vec::new();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let b1 = render_bonafide(&ids[i], 0, 16).unwrap();
                let b2 = render_bonafide(&ids[j], 0, 16).unwrap();
                let morph = crate::imaging::make_morph(&b1, &b2, 0.5).unwrap();
                samples.push(MorphSample {
                    morph,
                    bonafide1: b1,
                    bonafide2: b2,
                    identity1: i as u32,
                    identity2: j as u32,
                    alpha: 0.5,
                });
            }
        }
        let cfg = tiny_cfg(TrainMode::Demorphing, 5);
        let (_, mer, report) = train_demorph(&samples, &cfg, None, None).unwrap();
        assert_eq!(report.losses.len(), 5);
        assert!(report.losses.last().unwrap() < report.losses.first().unwrap());
        // both heads' weights stay positive by construction
        for h in 0..2 {
            for i in 0..3 {
                assert!(mer.weight(h, i) > 0.0);
            }
        }
    }

    #[test]
    fn mode_mismatch_is_config_error() {
        let images = tiny_images(1);
        let cfg = tiny_cfg(TrainMode::Demorphing, 1);
        assert!(matches!(
            train_decomposition(&images, &cfg, None, None),
            Err(Error::Config(_))
        ));
    }
}
