//! Image representation, procedural face generation, morphing and the
//! scenario-1 train/test split.
//!
//! The generator is a desk-scale stand-in for real face datasets: each
//! identity is a deterministic procedural "face" (textured background, head
//! ellipse, eyes, mouth) whose coarse structure separates identities under
//! the toy embedder. Real datasets plug in through the same manifest format.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHANNELS: usize = 3;

/// C×H×W image with intensities in [0, 1], height == width.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    resolution: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(resolution: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != CHANNELS * resolution * resolution {
            return Err(Error::Dimension(format!(
                "image data length {} does not match 3x{}x{}",
                data.len(),
                resolution,
                resolution
            )));
        }
        if !data.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::Data("image intensities outside [0,1]".into()));
        }
        Ok(ImageTensor { resolution, data })
    }

    pub fn zeros(resolution: usize) -> Self {
        ImageTensor {
            resolution,
            data: vec![0.0; CHANNELS * resolution * resolution],
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.resolution + y) * self.resolution + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.resolution + y) * self.resolution + x] = v;
    }

    /// Stack images into an NCHW batch tensor.
    pub fn batch(images: &[&ImageTensor]) -> Tensor {
        assert!(!images.is_empty());
        let r = images[0].resolution;
        assert!(images.iter().all(|i| i.resolution == r));
        let mut data = Vec::with_capacity(images.len() * CHANNELS * r * r);
        for img in images {
            data.extend_from_slice(&img.data);
        }
        Tensor::from_vec(&[images.len(), CHANNELS, r, r], data).unwrap()
    }

    /// Split an NCHW batch of sigmoid outputs back into images.
    pub fn from_batch(t: &Tensor) -> Vec<ImageTensor> {
        let (n, c, h, w) = t.dims4();
        assert_eq!(c, CHANNELS);
        assert_eq!(h, w);
        (0..n)
            .map(|i| ImageTensor {
                resolution: h,
                data: t.image(i).iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            })
            .collect()
    }

    /// Save as 8-bit PNG, rounding half-up.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let r = self.resolution as u32;
        let mut buf = image::RgbImage::new(r, r);
        for y in 0..self.resolution {
            for x in 0..self.resolution {
                let px = [
                    quantize(self.get(0, y, x)),
                    quantize(self.get(1, y, x)),
                    quantize(self.get(2, y, x)),
                ];
                buf.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        buf.save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        if w != h {
            return Err(Error::Data(format!(
                "{}: image must be square, got {}x{}",
                path.display(),
                w,
                h
            )));
        }
        let r = w as usize;
        let mut out = ImageTensor::zeros(r);
        for y in 0..r {
            for x in 0..r {
                let p = img.get_pixel(x as u32, y as u32);
                for c in 0..CHANNELS {
                    out.set(c, y, x, p[c] as f64 / 255.0);
                }
            }
        }
        Ok(out)
    }
}

fn quantize(v: f64) -> u8 {
    // round half-up on [0,1]
    ((v * 255.0) + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Deterministic appearance parameters of one procedural identity.
#[derive(Debug, Clone)]
pub struct IdentityParams {
    pub seed: u64,
    pub appearance: Vec<f64>,
}

const APPEARANCE_LEN: usize = 18;

impl IdentityParams {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15));
        let appearance = (0..APPEARANCE_LEN).map(|_| rng.gen::<f64>()).collect();
        IdentityParams { seed, appearance }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Render a bonafide image of `identity`. `variation_seed` adds bounded
/// per-pixel jitter (max 0.05 between any two variations) without touching
/// the identity-defining geometry.
pub fn render_bonafide(
    identity: &IdentityParams,
    variation_seed: u64,
    resolution: usize,
) -> Result<ImageTensor> {
    if resolution < 16 || resolution % 16 != 0 {
        return Err(Error::Config(format!(
            "resolution must be >= 16 and divisible by 16, got {resolution}"
        )));
    }
    let a = &identity.appearance;
    let r = resolution as f64;

    // Identity-specific blocky background texture: an 8x8 grid of tones.
    // Coarse and random per identity, so embeddings of distinct identities
    // decorrelate.
    let mut tex_rng =
        ChaCha8Rng::seed_from_u64(identity.seed.wrapping_mul(0xD1B54A32D192ED03) ^ 0xA5A5);
    let blocks: Vec<f64> = (0..64).map(|_| tex_rng.gen_range(0.08..0.92)).collect();
    let tint = [
        (a[0] - 0.5) * 0.16,
        (a[1] - 0.5) * 0.16,
        (a[2] - 0.5) * 0.16,
    ];

    // Head geometry and colors.
    let cx = 0.5 + (a[3] - 0.5) * 0.16;
    let cy = 0.5 + (a[4] - 0.5) * 0.16;
    let rx = lerp(0.18, 0.30, a[5]);
    let ry = lerp(0.24, 0.38, a[6]);
    let skin = [
        lerp(0.25, 0.9, a[7]),
        lerp(0.2, 0.8, a[8]),
        lerp(0.15, 0.75, a[9]),
    ];
    let eye_spacing = lerp(0.35, 0.6, a[10]);
    let eye_height = lerp(0.2, 0.4, a[11]);
    let eye_r = lerp(0.035, 0.07, a[12]);
    let eye_tone = lerp(0.0, 0.3, a[13]);
    let mouth_w = lerp(0.3, 0.65, a[14]);
    let mouth_curv = (a[15] - 0.5) * 0.12;
    let mouth_tone = lerp(0.05, 0.45, a[16]);
    let mouth_y = lerp(0.35, 0.55, a[17]);

    let mut img = ImageTensor::zeros(resolution);
    for y in 0..resolution {
        for x in 0..resolution {
            let u = (x as f64 + 0.5) / r;
            let v = (y as f64 + 0.5) / r;
            let block = blocks[(v * 8.0).min(7.999) as usize * 8 + (u * 8.0).min(7.999) as usize];
            let mut px = [
                (block + tint[0]).clamp(0.0, 1.0),
                (block + tint[1]).clamp(0.0, 1.0),
                (block + tint[2]).clamp(0.0, 1.0),
            ];

            let du = (u - cx) / rx;
            let dv = (v - cy) / ry;
            if du * du + dv * dv <= 1.0 {
                px = skin;
                // eyes
                for side in [-1.0, 1.0] {
                    let eu = (u - (cx + side * eye_spacing * rx)) / eye_r;
                    let ev = (v - (cy - eye_height * ry)) / eye_r;
                    if eu * eu + ev * ev <= 1.0 {
                        px = [eye_tone, eye_tone, eye_tone + 0.1];
                    }
                }
                // mouth: a curved horizontal band
                let mu = (u - cx) / (mouth_w * rx);
                if mu.abs() <= 1.0 {
                    let curve = mouth_curv * (1.0 - mu * mu);
                    let mv = v - (cy + mouth_y * ry + curve);
                    if mv.abs() <= 0.02 + 0.01 * (1.0 - mu * mu) {
                        px = [mouth_tone + 0.25, mouth_tone, mouth_tone];
                    }
                }
            }
            for c in 0..CHANNELS {
                img.set(c, y, x, px[c].clamp(0.0, 1.0));
            }
        }
    }

    // Bounded per-pixel jitter: each variation adds noise in [-0.025, 0.025],
    // so any two variations differ by at most 0.05 per pixel.
    let mut jit_rng = ChaCha8Rng::seed_from_u64(
        identity
            .seed
            .wrapping_mul(0xBF58476D1CE4E5B9)
            .wrapping_add(variation_seed.wrapping_mul(0x94D049BB133111EB)),
    );
    for v in img.data.iter_mut() {
        *v = (*v + jit_rng.gen_range(-0.025..=0.025)).clamp(0.0, 1.0);
    }
    Ok(img)
}

/// Per-pixel convex combination `alpha*b1 + (1-alpha)*b2`.
pub fn make_morph(b1: &ImageTensor, b2: &ImageTensor, alpha: f64) -> Result<ImageTensor> {
    if b1.resolution != b2.resolution {
        return Err(Error::Dimension(format!(
            "morph inputs disagree: {} vs {}",
            b1.resolution, b2.resolution
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must be in [0,1], got {alpha}")));
    }
    let beta = 1.0 - alpha;
    let data = b1
        .data
        .iter()
        .zip(&b2.data)
        .map(|(&p1, &p2)| (alpha * p1 + beta * p2).clamp(0.0, 1.0))
        .collect();
    Ok(ImageTensor {
        resolution: b1.resolution,
        data,
    })
}

/// A morph together with its ground-truth bonafides.
#[derive(Debug, Clone)]
pub struct MorphSample {
    pub morph: ImageTensor,
    pub bonafide1: ImageTensor,
    pub bonafide2: ImageTensor,
    pub identity1: u32,
    pub identity2: u32,
    pub alpha: f64,
}

/// Scenario-1 split: morph *pairs* are disjoint between train and test while
/// every test identity also appears in the training bonafide pool.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<MorphSample>,
    pub test: Vec<MorphSample>,
    pub bonafide_pool: BTreeSet<u32>,
}

fn mix_seed(base: u64, i: u64) -> u64 {
    let mut z = base
        .wrapping_add(i.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(0x2545F4914F6CDD1D);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Morphs over all unordered identity pairs x alphas, bonafides rendered with
/// rotating variation seeds. Deterministic given `seed`.
pub fn generate_dataset(
    n_identities: usize,
    variations_per_identity: usize,
    alphas: &[f64],
    resolution: usize,
    seed: u64,
) -> Result<Vec<MorphSample>> {
    if n_identities < 2 {
        return Err(Error::Config(format!(
            "need at least 2 identities, got {n_identities}"
        )));
    }
    let variations = variations_per_identity.max(1) as u64;
    let identities: Vec<IdentityParams> = (0..n_identities)
        .map(|i| IdentityParams::new(mix_seed(seed, i as u64)))
        .collect();

    // Assign rotating variation indices sequentially, then render in parallel.
    let mut usage = vec![0u64; n_identities];
    let mut jobs = Vec::new();
    for i in 0..n_identities {
        for j in (i + 1)..n_identities {
            for &alpha in alphas {
                let v1 = usage[i] % variations;
                usage[i] += 1;
                let v2 = usage[j] % variations;
                usage[j] += 1;
                jobs.push((i, j, v1, v2, alpha));
            }
        }
    }
    let samples = crate::par::par_map(jobs.len(), |idx| {
        let (i, j, v1, v2, alpha) = jobs[idx];
        let b1 = render_bonafide(&identities[i], v1, resolution)?;
        let b2 = render_bonafide(&identities[j], v2, resolution)?;
        let morph = make_morph(&b1, &b2, alpha)?;
        Ok(MorphSample {
            morph,
            bonafide1: b1,
            bonafide2: b2,
            identity1: i as u32,
            identity2: j as u32,
            alpha,
        })
    });
    samples.into_iter().collect()
}

/// Render the bonafide pool itself (used by decomposition-mode training).
pub fn render_identity_pool(
    n_identities: usize,
    variations_per_identity: usize,
    resolution: usize,
    seed: u64,
) -> Result<Vec<(u32, u64, ImageTensor)>> {
    let mut out = Vec::new();
    for i in 0..n_identities {
        let id = IdentityParams::new(mix_seed(seed, i as u64));
        for v in 0..variations_per_identity.max(1) as u64 {
            out.push((i as u32, v, render_bonafide(&id, v, resolution)?));
        }
    }
    Ok(out)
}

/// Split morphs into train/test by unordered identity pair, keeping every
/// identity represented in the training pool. Deterministic given `seed`.
pub fn build_scenario1_split(
    samples: &[MorphSample],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0,1), got {train_fraction}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::Data("no samples to split".into()));
    }
    for s in samples {
        if s.identity1 == s.identity2 {
            return Err(Error::Data(format!(
                "sample with identical identities {}",
                s.identity1
            )));
        }
    }

    // Group sample indices by unordered pair.
    let mut by_pair: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let key = (s.identity1.min(s.identity2), s.identity1.max(s.identity2));
        by_pair.entry(key).or_default().push(i);
    }
    // Precondition: every identity appears in >= 2 pairs.
    let mut pairs_per_id: BTreeMap<u32, usize> = BTreeMap::new();
    for &(a, b) in by_pair.keys() {
        *pairs_per_id.entry(a).or_default() += 1;
        *pairs_per_id.entry(b).or_default() += 1;
    }
    let offenders: Vec<u32> = pairs_per_id
        .iter()
        .filter(|(_, &n)| n < 2)
        .map(|(&id, _)| id)
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Split(offenders));
    }

    let mut pair_keys: Vec<(u32, u32)> = by_pair.keys().copied().collect();
    let n_pairs = pair_keys.len();
    if n_pairs < 2 {
        return Err(Error::Split(pair_keys.iter().map(|p| p.0).collect()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..pair_keys.len()).rev() {
        let j = rng.gen_range(0..=i);
        pair_keys.swap(i, j);
    }

    let quota = ((train_fraction * n_pairs as f64).round() as usize).clamp(1, n_pairs - 1);

    // First cover every identity in train, then fill up to the quota.
    let mut covered: BTreeSet<u32> = BTreeSet::new();
    let mut train_pairs: Vec<(u32, u32)> = Vec::new();
    let mut rest: Vec<(u32, u32)> = Vec::new();
    for &p in &pair_keys {
        if !covered.contains(&p.0) || !covered.contains(&p.1) {
            covered.insert(p.0);
            covered.insert(p.1);
            train_pairs.push(p);
        } else {
            rest.push(p);
        }
    }
    for p in rest {
        if train_pairs.len() < quota {
            train_pairs.push(p);
        }
    }
    if train_pairs.len() >= n_pairs {
        // covering consumed everything; give the test side the last pair whose
        // identities stay covered by other train pairs
        let mut moved = None;
        for (idx, &p) in train_pairs.iter().enumerate().rev() {
            let count = |id: u32| {
                train_pairs
                    .iter()
                    .filter(|q| q.0 == id || q.1 == id)
                    .count()
            };
            if count(p.0) >= 2 && count(p.1) >= 2 {
                moved = Some(idx);
                break;
            }
        }
        match moved {
            Some(idx) => {
                train_pairs.remove(idx);
            }
            None => {
                return Err(Error::Split(pairs_per_id.keys().copied().collect()));
            }
        }
    }

    let train_set: BTreeSet<(u32, u32)> = train_pairs.iter().copied().collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (key, idxs) in &by_pair {
        let dst = if train_set.contains(key) {
            &mut train
        } else {
            &mut test
        };
        for &i in idxs {
            dst.push(samples[i].clone());
        }
    }
    let mut bonafide_pool = BTreeSet::new();
    for s in &train {
        bonafide_pool.insert(s.identity1);
        bonafide_pool.insert(s.identity2);
    }
    // Invariant check: every test identity is in the train pool.
    for s in &test {
        if !bonafide_pool.contains(&s.identity1) || !bonafide_pool.contains(&s.identity2) {
            return Err(Error::Split(vec![s.identity1, s.identity2]));
        }
    }
    Ok(DatasetSplit {
        train,
        test,
        bonafide_pool,
    })
}

/// One manifest record per morph; paths are relative to the manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub morph_path: String,
    pub bonafide1_path: String,
    pub bonafide2_path: String,
    pub id1: u32,
    pub id2: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub split: Option<String>,
}

fn default_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub resolution: usize,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("manifest encode: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("manifest decode: {e}")))
    }

    /// Load every referenced image, resolving paths against `base`.
    pub fn load_samples(&self, base: &Path) -> Result<Vec<MorphSample>> {
        self.records
            .iter()
            .map(|r| {
                Ok(MorphSample {
                    morph: ImageTensor::load_png(&base.join(&r.morph_path))?,
                    bonafide1: ImageTensor::load_png(&base.join(&r.bonafide1_path))?,
                    bonafide2: ImageTensor::load_png(&base.join(&r.bonafide2_path))?,
                    identity1: r.id1,
                    identity2: r.id2,
                    alpha: r.alpha,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic() {
        let id = IdentityParams::new(7);
        let a = render_bonafide(&id, 0, 64).unwrap();
        let b = render_bonafide(&id, 0, 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variation_jitter_is_bounded() {
        let id = IdentityParams::new(7);
        let a = render_bonafide(&id, 0, 64).unwrap();
        let b = render_bonafide(&id, 1, 64).unwrap();
        let max = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(max <= 0.05 + 1e-12, "jitter {max}");
        assert!(max > 0.0);
    }

    #[test]
    fn bad_resolution_is_config_error() {
        let id = IdentityParams::new(1);
        assert!(matches!(
            render_bonafide(&id, 0, 15),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            render_bonafide(&id, 0, 40),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn morph_identity_and_boundary_cases() {
        let id = IdentityParams::new(3);
        let a = render_bonafide(&id, 0, 32).unwrap();
        let b = render_bonafide(&IdentityParams::new(4), 0, 32).unwrap();
        assert_eq!(make_morph(&a, &a, 0.5).unwrap(), a);
        assert_eq!(make_morph(&a, &b, 1.0).unwrap(), a);
        let m = make_morph(&a, &b, 0.5).unwrap();
        for (i, v) in m.data().iter().enumerate() {
            assert!((v - 0.5 * (a.data()[i] + b.data()[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn morph_constant_images_closed_form() {
        let a = ImageTensor::new(16, vec![0.2; 3 * 256]).unwrap();
        let b = ImageTensor::new(16, vec![0.6; 3 * 256]).unwrap();
        let m = make_morph(&a, &b, 0.5).unwrap();
        assert!(m.data().iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn morph_shape_mismatch_errors() {
        let a = ImageTensor::zeros(16);
        let b = ImageTensor::zeros(32);
        assert!(matches!(make_morph(&a, &b, 0.5), Err(Error::Dimension(_))));
    }

    #[test]
    fn dataset_counts_and_invariants() {
        let samples = generate_dataset(4, 2, &[0.5], 64, 1).unwrap();
        assert_eq!(samples.len(), 6); // C(4,2)
        for s in &samples {
            assert_ne!(s.identity1, s.identity2);
            assert!(s.morph.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let expect = make_morph(&s.bonafide1, &s.bonafide2, s.alpha).unwrap();
            assert_eq!(s.morph, expect);
        }
        let two = generate_dataset(2, 1, &[0.25, 0.75], 64, 1).unwrap();
        assert_eq!(two.len(), 2);
    }

    #[test]
    fn dataset_is_deterministic() {
        let a = generate_dataset(3, 2, &[0.5], 32, 9).unwrap();
        let b = generate_dataset(3, 2, &[0.5], 32, 9).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.morph, y.morph);
        }
    }

    #[test]
    fn split_respects_invariants() {
        let samples = generate_dataset(4, 2, &[0.25, 0.75], 32, 1).unwrap();
        assert_eq!(samples.len(), 12);
        let split = build_scenario1_split(&samples, 0.6, 42).unwrap();
        assert!(!split.train.is_empty() && !split.test.is_empty());
        // pair-disjointness
        let key = |s: &MorphSample| (s.identity1.min(s.identity2), s.identity1.max(s.identity2));
        let train_pairs: BTreeSet<_> = split.train.iter().map(key).collect();
        let test_pairs: BTreeSet<_> = split.test.iter().map(key).collect();
        assert!(train_pairs.is_disjoint(&test_pairs));
        // identity pool sharing
        for s in &split.test {
            assert!(split.bonafide_pool.contains(&s.identity1));
            assert!(split.bonafide_pool.contains(&s.identity2));
        }
        // all 4 identities present on both sides of the pool
        assert_eq!(split.bonafide_pool.len(), 4);
        // determinism
        let again = build_scenario1_split(&samples, 0.6, 42).unwrap();
        assert_eq!(again.train.len(), split.train.len());
        for (a, b) in again.train.iter().zip(&split.train) {
            assert_eq!(a.morph, b.morph);
        }
    }

    #[test]
    fn split_rejects_rare_identity() {
        // identity 3 appears in exactly one pair
        let mut samples = generate_dataset(3, 1, &[0.5], 32, 1).unwrap();
        let id0 = IdentityParams::new(mix_seed(1, 0));
        let id3 = IdentityParams::new(99);
        let b1 = render_bonafide(&id0, 0, 32).unwrap();
        let b2 = render_bonafide(&id3, 0, 32).unwrap();
        samples.push(MorphSample {
            morph: make_morph(&b1, &b2, 0.5).unwrap(),
            bonafide1: b1,
            bonafide2: b2,
            identity1: 0,
            identity2: 3,
            alpha: 0.5,
        });
        match build_scenario1_split(&samples, 0.5, 1) {
            Err(Error::Split(ids)) => assert!(ids.contains(&3)),
            other => panic!("expected split error, got {other:?}"),
        }
    }

    #[test]
    fn png_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let id = IdentityParams::new(11);
        let img = render_bonafide(&id, 0, 32).unwrap();
        let path = dir.path().join("img.png");
        img.save_png(&path).unwrap();
        let loaded = ImageTensor::load_png(&path).unwrap();
        // quantize twice -> fixed point
        let path2 = dir.path().join("img2.png");
        loaded.save_png(&path2).unwrap();
        let loaded2 = ImageTensor::load_png(&path2).unwrap();
        assert_eq!(loaded, loaded2);
        let max = img
            .data()
            .iter()
            .zip(loaded.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max <= 0.5 / 255.0 + 1e-12);
    }
}
