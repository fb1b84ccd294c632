//! Evaluation protocols: match accuracy, restoration accuracy, component
//! leakage, and image-quality metrics (SSIM, PSNR, FID).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::biometric::{is_match, similarity, Comparator, MatchResult};
use crate::error::{Error, Result};
use crate::imaging::{ImageTensor, CHANNELS};
use crate::nets::{decompose, merge, Decomposer, Merger};

pub const PSNR_CAP: f64 = 100.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

// ---- biometric protocols ----

/// Fraction of pairs the comparator matches at `tau`. With
/// `exclude_not_found`, pairs where either face is undetected leave the
/// denominator; the metric is undefined when nothing remains.
pub fn match_accuracy(
    pairs: &[(&ImageTensor, &ImageTensor)],
    comparator: &dyn Comparator,
    tau: f64,
    exclude_not_found: bool,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Metric("match accuracy over empty pair list".into()));
    }
    let mut matched = 0usize;
    let mut denom = 0usize;
    for (a, b) in pairs {
        let outcome = is_match(comparator, a, b, tau)?;
        let not_found = matches!(outcome.result, MatchResult::NotFound);
        if not_found && exclude_not_found {
            continue;
        }
        denom += 1;
        if outcome.matched {
            matched += 1;
        }
    }
    if denom == 0 {
        return Err(Error::Metric(
            "all pairs excluded as not-found; match accuracy undefined".into(),
        ));
    }
    Ok(matched as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    Natural,
    Swapped,
}

/// Per-morph bookkeeping for restoration accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestorationRecord {
    pub pairing: Pairing,
    /// `sims[i][j]` = similarity of output i to bonafide j; None = not found.
    pub sims: [[Option<f64>; 2]; 2],
    /// `subject_correct[s]`: assigned output matches bonafide s and not the
    /// other bonafide.
    pub subject_correct: [bool; 2],
}

fn opt_similarity(
    a: &Option<crate::biometric::Embedding>,
    b: &Option<crate::biometric::Embedding>,
) -> Result<Option<f64>> {
    match (a, b) {
        (Some(x), Some(y)) => Ok(Some(similarity(x, y)?)),
        _ => Ok(None),
    }
}

/// Restoration accuracy over demorphing outputs. Outputs are assigned to
/// bonafides by the pairing (natural or swapped) that maximizes total
/// similarity; subject-s accuracy is the fraction of morphs whose assigned
/// output matches bonafide s (similarity > tau) and does not match the other.
pub fn restoration_accuracy(
    results: &[(&ImageTensor, &ImageTensor, &ImageTensor, &ImageTensor)],
    comparator: &dyn Comparator,
    tau: f64,
) -> Result<(f64, f64, Vec<RestorationRecord>)> {
    if results.is_empty() {
        return Err(Error::Metric("restoration accuracy over empty list".into()));
    }
    if !(-1.0..1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must be in (-1,1), got {tau}")));
    }
    let mut records = Vec::with_capacity(results.len());
    let mut correct = [0usize; 2];
    for (o1, o2, b1, b2) in results {
        let eo = [comparator.embed(o1), comparator.embed(o2)];
        let eb = [comparator.embed(b1), comparator.embed(b2)];
        let mut sims = [[None; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                sims[i][j] = opt_similarity(&eo[i], &eb[j])?;
            }
        }
        // a missing face contributes the worst possible similarity
        let val = |s: Option<f64>| s.unwrap_or(-1.0);
        let natural = val(sims[0][0]) + val(sims[1][1]);
        let swapped = val(sims[0][1]) + val(sims[1][0]);
        let pairing = if natural >= swapped {
            Pairing::Natural
        } else {
            Pairing::Swapped
        };
        let mut subject_correct = [false; 2];
        for s in 0..2 {
            let assigned = match pairing {
                Pairing::Natural => s,
                Pairing::Swapped => 1 - s,
            };
            let own = sims[assigned][s];
            let other = sims[assigned][1 - s];
            subject_correct[s] = matches!(own, Some(v) if v > tau)
                && !matches!(other, Some(v) if v > tau);
            if subject_correct[s] {
                correct[s] += 1;
            }
        }
        records.push(RestorationRecord {
            pairing,
            sims,
            subject_correct,
        });
    }
    let n = results.len() as f64;
    Ok((correct[0] as f64 / n, correct[1] as f64 / n, records))
}

/// Leak rate of one component index, raw and with not-found trials removed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakRate {
    pub leak_rate: f64,
    /// Same numerator over the trials where the comparator found both faces;
    /// None when every trial was not-found.
    pub leak_rate_found_only: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Index i: merge([component_i] x k) matched against the original image.
    pub per_component: Vec<LeakRate>,
    /// Control: merge of the true component set matched against the original.
    pub full_reconstruction_match_rate: f64,
}

/// Replicate each decomposed component k times through the merger and test
/// whether the output still matches the original image (identity leakage).
pub fn component_leakage(
    dec: &Decomposer,
    mer: &Merger,
    images: &[&ImageTensor],
    comparator: &dyn Comparator,
    tau: f64,
) -> Result<LeakageReport> {
    if mer.config.heads != 1 {
        return Err(Error::Config(format!(
            "component leakage needs a decomposition-mode merger (1 head), got {}",
            mer.config.heads
        )));
    }
    if images.is_empty() {
        return Err(Error::Metric("component leakage over empty image list".into()));
    }
    let k = dec.config.k;
    let mut leaks = vec![0usize; k];
    let mut found = vec![0usize; k];
    let mut full_matches = 0usize;
    for img in images {
        let comps = decompose(dec, img)?;
        let recon = merge(mer, 0, &comps)?;
        if is_match(comparator, img, &recon, tau)?.matched {
            full_matches += 1;
        }
        for (i, c) in comps.iter().enumerate() {
            let replicated: Vec<ImageTensor> = (0..k).map(|_| c.clone()).collect();
            let out = merge(mer, 0, &replicated)?;
            let outcome = is_match(comparator, img, &out, tau)?;
            if !matches!(outcome.result, MatchResult::NotFound) {
                found[i] += 1;
            }
            if outcome.matched {
                leaks[i] += 1;
            }
        }
    }
    let n = images.len();
    let per_component = (0..k)
        .map(|i| LeakRate {
            leak_rate: leaks[i] as f64 / n as f64,
            leak_rate_found_only: (found[i] > 0).then(|| leaks[i] as f64 / found[i] as f64),
        })
        .collect();
    Ok(LeakageReport {
        per_component,
        full_reconstruction_match_rate: full_matches as f64 / n as f64,
    })
}

// ---- image quality ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IqaReport {
    pub fid: f64,
    pub ssim: f64,
    pub psnr: f64,
}

fn gaussian_kernel_1d() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable valid-mode Gaussian filter of an r x r channel; output side
/// r - SSIM_WINDOW + 1.
fn gaussian_filter_valid(chan: &[f64], r: usize) -> Vec<f64> {
    let k = gaussian_kernel_1d();
    let out_side = r - SSIM_WINDOW + 1;
    // horizontal pass: r rows, out_side columns
    let mut h = vec![0.0; r * out_side];
    for y in 0..r {
        for x in 0..out_side {
            let mut acc = 0.0;
            for (i, &w) in k.iter().enumerate() {
                acc += w * chan[y * r + x + i];
            }
            h[y * out_side + x] = acc;
        }
    }
    // vertical pass
    let mut out = vec![0.0; out_side * out_side];
    for y in 0..out_side {
        for x in 0..out_side {
            let mut acc = 0.0;
            for (i, &w) in k.iter().enumerate() {
                acc += w * h[(y + i) * out_side + x];
            }
            out[y * out_side + x] = acc;
        }
    }
    out
}

/// Standard SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
/// dynamic range 1.0, averaged over valid windows and channels.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::Dimension(format!(
            "ssim resolutions {} vs {}",
            a.resolution(),
            b.resolution()
        )));
    }
    let r = a.resolution();
    if r < SSIM_WINDOW {
        return Err(Error::Metric(format!(
            "image side {r} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..CHANNELS {
        let xa = &a.data()[ch * r * r..(ch + 1) * r * r];
        let xb = &b.data()[ch * r * r..(ch + 1) * r * r];
        let sq = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * x).collect() };
        let prod: Vec<f64> = xa.iter().zip(xb).map(|(x, y)| x * y).collect();
        let mu_a = gaussian_filter_valid(xa, r);
        let mu_b = gaussian_filter_valid(xb, r);
        let m_aa = gaussian_filter_valid(&sq(xa), r);
        let m_bb = gaussian_filter_valid(&sq(xb), r);
        let m_ab = gaussian_filter_valid(&prod, r);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = m_aa[i] - ma * ma;
            let vb = m_bb[i] - mb * mb;
            let cov = m_ab[i] - ma * mb;
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// PSNR in dB for unit-range images, capped at 100.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::Dimension(format!(
            "psnr resolutions {} vs {}",
            a.resolution(),
            b.resolution()
        )));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn embed_set(images: &[&ImageTensor], comparator: &dyn Comparator) -> Vec<Vec<f64>> {
    images
        .iter()
        .filter_map(|img| comparator.embed(img).map(|e| e.vector().to_vec()))
        .collect()
}

fn mean_and_cov(feats: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = feats.len();
    let d = feats[0].len();
    let mut mu = DVector::zeros(d);
    for f in feats {
        for (i, &v) in f.iter().enumerate() {
            mu[i] += v;
        }
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for f in feats {
        let x = DVector::from_column_slice(f) - &mu;
        cov += &x * x.transpose();
    }
    cov /= (n - 1) as f64; // unbiased
    (mu, cov)
}

/// Symmetric PSD square root via eigendecomposition; eigenvalues clamped at 0.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between the Gaussian fits of the two embedded sets.
///
/// The feature extractor is the comparator's embedder; absolute values are
/// not comparable across embedders.
pub fn fid(
    set_a: &[&ImageTensor],
    set_b: &[&ImageTensor],
    comparator: &dyn Comparator,
) -> Result<f64> {
    let fa = embed_set(set_a, comparator);
    let fb = embed_set(set_b, comparator);
    if fa.len() < 2 || fb.len() < 2 {
        return Err(Error::Metric(format!(
            "fid needs at least 2 embeddable images per set, got {} and {}",
            fa.len(),
            fb.len()
        )));
    }
    if fa[0].len() != fb[0].len() {
        return Err(Error::Dimension("embedding dimensions differ".into()));
    }
    let (mu_a, cov_a) = mean_and_cov(&fa);
    let (mu_b, cov_b) = mean_and_cov(&fb);
    let dmu = &mu_a - &mu_b;
    // tr((Sa Sb)^{1/2}) computed as tr((Sa^{1/2} Sb Sa^{1/2})^{1/2}),
    // which is symmetric PSD and shares the spectrum of Sa Sb.
    let ra = psd_sqrt(&cov_a);
    let inner = &ra * &cov_b * &ra;
    let sym = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    Ok(dmu.norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt)
}

/// SSIM and PSNR averaged over aligned pairs, plus FID between the sets.
pub fn iqa_report(
    truths: &[&ImageTensor],
    outputs: &[&ImageTensor],
    comparator: &dyn Comparator,
) -> Result<IqaReport> {
    if truths.len() != outputs.len() || truths.is_empty() {
        return Err(Error::Metric(format!(
            "iqa needs equal nonempty sets, got {} and {}",
            truths.len(),
            outputs.len()
        )));
    }
    let mut s = 0.0;
    let mut p = 0.0;
    for (t, o) in truths.iter().zip(outputs) {
        s += ssim(t, o)?;
        p += psnr(t, o)?;
    }
    Ok(IqaReport {
        fid: fid(truths, outputs, comparator)?,
        ssim: s / truths.len() as f64,
        psnr: p / truths.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biometric::ToyEmbedder;
    use crate::imaging::{make_morph, render_bonafide, IdentityParams};
    use crate::nets::init_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_image(rng: &mut ChaCha8Rng, res: usize) -> ImageTensor {
        ImageTensor::new(res, (0..3 * res * res).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    fn bonafide(id: u64) -> ImageTensor {
        render_bonafide(&IdentityParams::new(id), 0, 64).unwrap()
    }

    // -- match accuracy --

    #[test]
    fn match_accuracy_identical_pairs() {
        let imgs: Vec<ImageTensor> = (1..=4).map(bonafide).collect();
        let pairs: Vec<(&ImageTensor, &ImageTensor)> = imgs.iter().map(|i| (i, i)).collect();
        let acc = match_accuracy(&pairs, &ToyEmbedder, 0.4, false).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn match_accuracy_distinct_identities_zero() {
        let imgs: Vec<ImageTensor> = (1..=6).map(bonafide).collect();
        let mut pairs = Vec::new();
        for i in 0..imgs.len() {
            for j in (i + 1)..imgs.len() {
                pairs.push((&imgs[i], &imgs[j]));
            }
        }
        let acc = match_accuracy(&pairs, &ToyEmbedder, 0.4, false).unwrap();
        assert_eq!(acc, 0.0);
    }

    struct FlakyComparator;
    impl Comparator for FlakyComparator {
        fn embed(&self, image: &ImageTensor) -> Option<Embedding> {
            // images with a dark first pixel have "no face"
            (image.data()[0] >= 0.5).then(|| ToyEmbedder::embed_toy(image))
        }
        fn name(&self) -> &str {
            "flaky"
        }
    }
    use crate::biometric::Embedding;

    #[test]
    fn match_accuracy_not_found_handling() {
        let mut bright = bonafide(3);
        bright.set(0, 0, 0, 0.9);
        let mut dark = bright.clone();
        dark.set(0, 0, 0, 0.1);
        // three found matches + one not-found pair
        let pairs = vec![
            (&bright, &bright),
            (&bright, &bright),
            (&bright, &bright),
            (&dark, &bright),
        ];
        let raw = match_accuracy(&pairs, &FlakyComparator, 0.4, false).unwrap();
        assert_eq!(raw, 0.75);
        let excl = match_accuracy(&pairs, &FlakyComparator, 0.4, true).unwrap();
        assert_eq!(excl, 1.0);
        // all excluded -> undefined
        let only = vec![(&dark, &bright)];
        assert!(matches!(
            match_accuracy(&only, &FlakyComparator, 0.4, true),
            Err(Error::Metric(_))
        ));
        assert!(matches!(
            match_accuracy(&[], &ToyEmbedder, 0.4, false),
            Err(Error::Metric(_))
        ));
    }

    // -- restoration accuracy --

    #[test]
    fn restoration_exact_recovery() {
        let b1 = bonafide(5);
        let b2 = bonafide(6);
        let (a1, a2, recs) =
            restoration_accuracy(&[(&b1, &b2, &b1, &b2)], &ToyEmbedder, 0.4).unwrap();
        assert_eq!((a1, a2), (1.0, 1.0));
        assert_eq!(recs[0].pairing, Pairing::Natural);
    }

    #[test]
    fn restoration_both_outputs_same_bonafide() {
        let b1 = bonafide(5);
        let b2 = bonafide(6);
        let (a1, a2, _) =
            restoration_accuracy(&[(&b1, &b1, &b1, &b2)], &ToyEmbedder, 0.4).unwrap();
        assert_eq!(a1, 1.0);
        assert_eq!(a2, 0.0);
    }

    #[test]
    fn restoration_swap_invariance() {
        let b1 = bonafide(7);
        let b2 = bonafide(8);
        // swapped outputs: pairing should absorb the swap
        let (a1, a2, recs) =
            restoration_accuracy(&[(&b2, &b1, &b1, &b2)], &ToyEmbedder, 0.4).unwrap();
        assert_eq!((a1, a2), (1.0, 1.0));
        assert_eq!(recs[0].pairing, Pairing::Swapped);
    }

    #[test]
    fn restoration_not_found_is_failure() {
        let mut bright = bonafide(9);
        bright.set(0, 0, 0, 0.9);
        let mut dark1 = bright.clone();
        dark1.set(0, 0, 0, 0.1);
        let other = {
            let mut o = bonafide(10);
            o.set(0, 0, 0, 0.9);
            o
        };
        let (a1, a2, recs) =
            restoration_accuracy(&[(&dark1, &other, &bright, &other)], &FlakyComparator, 0.4)
                .unwrap();
        assert_eq!(a1, 0.0);
        assert_eq!(a2, 1.0);
        assert!(!recs[0].subject_correct[0]);
    }

    // -- ssim --

    #[test]
    fn ssim_identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = rand_image(&mut rng, 32);
        let b = rand_image(&mut rng, 32);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 1.0);
    }

    #[test]
    fn ssim_too_small_is_metric_error() {
        let a = ImageTensor::new(16, vec![0.5; 3 * 256]).unwrap();
        let _ = a;
        // resolutions below the window must be rejected; build an 8x8 image
        // bypassing the generator's 16-minimum via ImageTensor directly
        let small = ImageTensor::new(8, vec![0.5; 3 * 64]).unwrap();
        assert!(matches!(ssim(&small, &small), Err(Error::Metric(_))));
    }

    /// Direct per-window double-loop oracle (no separable filtering).
    fn ssim_oracle(a: &ImageTensor, b: &ImageTensor) -> f64 {
        let r = a.resolution();
        let k1d = gaussian_kernel_1d();
        let mut w2d = vec![0.0; SSIM_WINDOW * SSIM_WINDOW];
        for y in 0..SSIM_WINDOW {
            for x in 0..SSIM_WINDOW {
                w2d[y * SSIM_WINDOW + x] = k1d[y] * k1d[x];
            }
        }
        let c1 = 0.01f64.powi(2);
        let c2 = 0.03f64.powi(2);
        let out = r - SSIM_WINDOW + 1;
        let mut total = 0.0;
        let mut count = 0;
        for ch in 0..3 {
            let xa = &a.data()[ch * r * r..(ch + 1) * r * r];
            let xb = &b.data()[ch * r * r..(ch + 1) * r * r];
            for wy in 0..out {
                for wx in 0..out {
                    let (mut ma, mut mb) = (0.0, 0.0);
                    let (mut maa, mut mbb, mut mab) = (0.0, 0.0, 0.0);
                    for dy in 0..SSIM_WINDOW {
                        for dx in 0..SSIM_WINDOW {
                            let w = w2d[dy * SSIM_WINDOW + dx];
                            let va = xa[(wy + dy) * r + wx + dx];
                            let vb = xb[(wy + dy) * r + wx + dx];
                            ma += w * va;
                            mb += w * vb;
                            maa += w * va * va;
                            mbb += w * vb * vb;
                            mab += w * va * vb;
                        }
                    }
                    let va = maa - ma * ma;
                    let vb = mbb - mb * mb;
                    let cov = mab - ma * mb;
                    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let a = rand_image(&mut rng, 64);
        let b = rand_image(&mut rng, 64);
        assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-6);
        // also on a correlated pair
        let c = ImageTensor::new(
            64,
            a.data().iter().map(|v| (v * 0.9 + 0.05).min(1.0)).collect(),
        )
        .unwrap();
        assert!((ssim(&a, &c).unwrap() - ssim_oracle(&a, &c)).abs() < 1e-6);
    }

    #[test]
    fn ssim_maximum_only_at_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..5 {
            let a = rand_image(&mut rng, 16);
            let mut b = a.clone();
            let idx = rng.gen_range(0..b.data().len());
            b.data_mut()[idx] = (b.data()[idx] + 0.5) % 1.0;
            assert!(ssim(&a, &b).unwrap() < 1.0);
        }
    }

    // -- psnr --

    #[test]
    fn psnr_cap_and_closed_forms() {
        let a = ImageTensor::new(16, vec![0.4; 3 * 256]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        let b = ImageTensor::new(16, vec![0.5; 3 * 256]).unwrap();
        // uniform offset 0.1 -> MSE 0.01 -> 20 dB
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let a = rand_image(&mut rng, 32);
        let b = rand_image(&mut rng, 32);
        let mut mse = 0.0;
        for i in 0..a.data().len() {
            let d = a.data()[i] - b.data()[i];
            mse += d * d;
        }
        mse /= a.data().len() as f64;
        let expected = 10.0 * (1.0 / mse).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    // -- fid --

    #[test]
    fn fid_identical_sets_is_zero() {
        let imgs: Vec<ImageTensor> = (1..=5).map(bonafide).collect();
        let refs: Vec<&ImageTensor> = imgs.iter().collect();
        let v = fid(&refs, &refs, &ToyEmbedder).unwrap();
        assert!(v.abs() < 1e-6, "fid(S,S) = {v}");
    }

    #[test]
    fn fid_symmetric_and_nonnegative() {
        let a: Vec<ImageTensor> = (1..=5).map(bonafide).collect();
        let b: Vec<ImageTensor> = (10..=14).map(bonafide).collect();
        let ra: Vec<&ImageTensor> = a.iter().collect();
        let rb: Vec<&ImageTensor> = b.iter().collect();
        let ab = fid(&ra, &rb, &ToyEmbedder).unwrap();
        let ba = fid(&rb, &ra, &ToyEmbedder).unwrap();
        assert!((ab - ba).abs() < 1e-8);
        assert!(ab >= -1e-6);
        assert!(ab > 0.01, "distinct identity sets should separate, got {ab}");
    }

    /// Synthetic-embedding comparator: equal covariance, shifted means must
    /// give FID == ||d||^2.
    #[test]
    fn fid_mean_shift_closed_form() {
        // construct features directly and exercise the same math the public
        // fid uses, via a comparator that reads features out of pixels
        struct PixelEmbedder;
        impl Comparator for PixelEmbedder {
            fn embed(&self, image: &ImageTensor) -> Option<Embedding> {
                // raw (non-normalized) 4-dim feature from the first 4 pixels
                Some(Embedding::from_raw(image.data()[..4].to_vec()))
            }
            fn name(&self) -> &str {
                "pixel"
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let d = [0.2, -0.1, 0.05, 0.15];
        let mut set_a = Vec::new();
        let mut set_b = Vec::new();
        for _ in 0..40 {
            let mut base = vec![0.5; 3 * 256];
            for v in base.iter_mut().take(4) {
                *v = rng.gen_range(0.3..0.6);
            }
            let mut shifted = base.clone();
            for (v, dv) in shifted.iter_mut().zip(d.iter()) {
                *v += dv;
            }
            set_a.push(ImageTensor::new(16, base).unwrap());
            set_b.push(ImageTensor::new(16, shifted).unwrap());
        }
        let ra: Vec<&ImageTensor> = set_a.iter().collect();
        let rb: Vec<&ImageTensor> = set_b.iter().collect();
        let v = fid(&ra, &rb, &PixelEmbedder).unwrap();
        let d2: f64 = d.iter().map(|x| x * x).sum();
        assert!((v - d2).abs() < 1e-4, "fid {v}, expected {d2}");
    }

    #[test]
    fn fid_small_set_is_metric_error() {
        let a = bonafide(1);
        let refs = vec![&a];
        assert!(matches!(
            fid(&refs, &refs, &ToyEmbedder),
            Err(Error::Metric(_))
        ));
    }

    // -- leakage protocol sanity --

    #[test]
    fn leakage_untrained_full_reconstruction_floor() {
        let cfg = crate::nets::NetworkConfig {
            k: 3,
            resolution: 64,
            base_channels: 4,
            depth: 3,
            heads: 1,
        };
        let (dec, mer) = init_params(&cfg, 123).unwrap();
        let imgs: Vec<ImageTensor> = (1..=5).map(bonafide).collect();
        let refs: Vec<&ImageTensor> = imgs.iter().collect();
        let report = component_leakage(&dec, &mer, &refs, &ToyEmbedder, 0.4).unwrap();
        assert_eq!(report.per_component.len(), 3);
        assert!(
            report.full_reconstruction_match_rate < 0.2,
            "untrained reconstruction should not match, got {}",
            report.full_reconstruction_match_rate
        );
    }

    #[test]
    fn leakage_requires_single_head() {
        let cfg = crate::nets::NetworkConfig {
            k: 3,
            resolution: 64,
            base_channels: 4,
            depth: 3,
            heads: 2,
        };
        let (dec, mer) = init_params(&cfg, 1).unwrap();
        let img = bonafide(1);
        let refs = vec![&img];
        assert!(matches!(
            component_leakage(&dec, &mer, &refs, &ToyEmbedder, 0.4),
            Err(Error::Config(_))
        ));
    }

    // -- morphs vs metrics sanity --

    #[test]
    fn morph_iqa_between_bonafides() {
        let b1 = bonafide(2);
        let b2 = bonafide(3);
        let m = make_morph(&b1, &b2, 0.5).unwrap();
        // the morph is closer to each bonafide than the bonafides are to
        // each other
        assert!(psnr(&m, &b1).unwrap() > psnr(&b1, &b2).unwrap());
        assert!(ssim(&m, &b1).unwrap() > ssim(&b1, &b2).unwrap());
    }
}
