//! Training objectives: decomposition loss, cross-road loss, and the final
//! demorphing loss, as pure scalar functions with analytic gradients.
//!
//! L1 uses mean reduction everywhere. A summed per-pixel L1 would overflow
//! the exp() wrappers at any realistic resolution; with means, every exponent
//! stays in a small range regardless of resolution or batch size.

use crate::error::{Error, Result};
use crate::imaging::ImageTensor;

#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub lambda: f64,
    pub k: usize,
}

impl LossConfig {
    /// Default weighting lambda = 1/(k+1).
    pub fn new(k: usize) -> Result<Self> {
        Ok(LossConfig {
            lambda: default_lambda(k)?,
            k,
        })
    }

    pub fn with_lambda(k: usize, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda must be in [0,1], got {lambda}")));
        }
        Ok(LossConfig { lambda, k })
    }
}

/// lambda = 1/(k+1): one-part weight to reconstruction, k parts to
/// decomposition.
pub fn default_lambda(k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    Ok(1.0 / (k as f64 + 1.0))
}

// ---- slice-level core ----
//
// Training and the acceptance harness consume these directly on raw batch
// slices; the shape-checked ImageTensor wrappers below delegate here.

pub(crate) fn l1_slice(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Accumulate `coeff * d l1(a,b) / d a` into `ga`.
fn l1_grad_acc(a: &[f64], b: &[f64], coeff: f64, ga: &mut [f64]) {
    let n = a.len() as f64;
    for ((&x, &y), g) in a.iter().zip(b).zip(ga.iter_mut()) {
        *g += coeff * (x - y).signum_or_zero() / n;
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Value and gradients of the shared decomposition penalty
/// (1-lambda) * (exp(-sum_i l1(x, c_i)) + exp(-sum_{i<j} l1(c_i, c_j))).
pub fn component_penalty_with_grad(
    x: &[f64],
    comps: &[&[f64]],
    lambda: f64,
) -> (f64, Vec<Vec<f64>>) {
    let k = comps.len();
    let s1: f64 = comps.iter().map(|c| l1_slice(x, c)).sum();
    let mut s2 = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            s2 += l1_slice(comps[i], comps[j]);
        }
    }
    let e1 = (-s1).exp();
    let e2 = (-s2).exp();
    let w = 1.0 - lambda;
    let value = w * (e1 + e2);

    let mut grads: Vec<Vec<f64>> = (0..k).map(|_| vec![0.0; x.len()]).collect();
    for i in 0..k {
        // d/dc_i of -w*e1*s1: coefficient -w*e1 on l1(x, c_i) wrt c_i
        l1_grad_acc(comps[i], x, -w * e1, &mut grads[i]);
        for j in 0..k {
            if i != j {
                l1_grad_acc(comps[i], comps[j], -w * e2, &mut grads[i]);
            }
        }
    }
    (value, grads)
}

pub struct DecompGrad {
    pub loss: f64,
    pub d_recon: Vec<f64>,
    pub d_components: Vec<Vec<f64>>,
}

pub fn decomposition_loss_with_grad(
    input: &[f64],
    recon: &[f64],
    comps: &[&[f64]],
    lambda: f64,
) -> DecompGrad {
    let rec_l1 = l1_slice(input, recon);
    let e = rec_l1.exp();
    let (penalty, d_components) = component_penalty_with_grad(input, comps, lambda);
    let mut d_recon = vec![0.0; recon.len()];
    l1_grad_acc(recon, input, lambda * e, &mut d_recon);
    DecompGrad {
        loss: lambda * e + penalty,
        d_recon,
        d_components,
    }
}

pub struct CrossroadGrad {
    pub loss: f64,
    pub d_o1: Vec<f64>,
    pub d_o2: Vec<f64>,
}

pub fn crossroad_with_grad(
    o1: &[f64],
    o2: &[f64],
    b1: &[f64],
    b2: &[f64],
) -> CrossroadGrad {
    let natural = l1_slice(o1, b1) + l1_slice(o2, b2);
    let swapped = l1_slice(o1, b2) + l1_slice(o2, b1);
    let mut d_o1 = vec![0.0; o1.len()];
    let mut d_o2 = vec![0.0; o2.len()];
    // ties resolve to the natural pairing
    if natural <= swapped {
        l1_grad_acc(o1, b1, 1.0, &mut d_o1);
        l1_grad_acc(o2, b2, 1.0, &mut d_o2);
    } else {
        l1_grad_acc(o1, b2, 1.0, &mut d_o1);
        l1_grad_acc(o2, b1, 1.0, &mut d_o2);
    }
    CrossroadGrad {
        loss: natural.min(swapped),
        d_o1,
        d_o2,
    }
}

pub struct FinalGrad {
    pub loss: f64,
    pub d_o1: Vec<f64>,
    pub d_o2: Vec<f64>,
    pub d_components: Vec<Vec<f64>>,
}

pub fn final_loss_with_grad(
    morph: &[f64],
    o1: &[f64],
    o2: &[f64],
    b1: &[f64],
    b2: &[f64],
    comps: &[&[f64]],
    lambda: f64,
) -> FinalGrad {
    let mut cr = crossroad_with_grad(o1, o2, b1, b2);
    for g in cr.d_o1.iter_mut().chain(cr.d_o2.iter_mut()) {
        *g *= lambda;
    }
    let (penalty, d_components) = component_penalty_with_grad(morph, comps, lambda);
    FinalGrad {
        loss: lambda * cr.loss + penalty,
        d_o1: cr.d_o1,
        d_o2: cr.d_o2,
        d_components,
    }
}

// ---- public, shape-checked operations on images ----

fn check_same(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if a.resolution() != b.resolution() {
        return Err(Error::Dimension(format!(
            "image resolutions {} vs {}",
            a.resolution(),
            b.resolution()
        )));
    }
    Ok(())
}

/// Mean absolute difference over all elements.
pub fn l1(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_same(a, b)?;
    Ok(l1_slice(a.data(), b.data()))
}

/// Eq.-style decomposition objective:
/// lambda*exp(l1(I, I_hat)) + (1-lambda)*(exp(-sum_i l1(I, I_i)) +
/// exp(-sum_{i<j} l1(I_i, I_j))).
pub fn decomposition_loss(
    input: &ImageTensor,
    reconstruction: &ImageTensor,
    components: &[ImageTensor],
    cfg: &LossConfig,
) -> Result<f64> {
    check_same(input, reconstruction)?;
    if components.len() != cfg.k {
        return Err(Error::Dimension(format!(
            "expected {} components, got {}",
            cfg.k,
            components.len()
        )));
    }
    for c in components {
        check_same(input, c)?;
    }
    let comps: Vec<&[f64]> = components.iter().map(|c| c.data()).collect();
    Ok(
        decomposition_loss_with_grad(input.data(), reconstruction.data(), &comps, cfg.lambda)
            .loss,
    )
}

/// min over natural/swapped output-to-bonafide pairings of summed L1 losses.
pub fn crossroad_loss(
    o1: &ImageTensor,
    o2: &ImageTensor,
    b1: &ImageTensor,
    b2: &ImageTensor,
) -> Result<f64> {
    check_same(o1, o2)?;
    check_same(o1, b1)?;
    check_same(o1, b2)?;
    Ok(crossroad_with_grad(o1.data(), o2.data(), b1.data(), b2.data()).loss)
}

/// Batch form: mean of per-sample minima.
pub fn crossroad_loss_batch(
    samples: &[(&ImageTensor, &ImageTensor, &ImageTensor, &ImageTensor)],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("empty cross-road batch".into()));
    }
    let mut acc = 0.0;
    for (o1, o2, b1, b2) in samples {
        acc += crossroad_loss(o1, o2, b1, b2)?;
    }
    Ok(acc / samples.len() as f64)
}

/// Demorphing objective: the cross-road loss replaces the reconstruction term
/// of the decomposition loss.
pub fn final_loss(
    morph: &ImageTensor,
    o1: &ImageTensor,
    o2: &ImageTensor,
    b1: &ImageTensor,
    b2: &ImageTensor,
    components: &[ImageTensor],
    cfg: &LossConfig,
) -> Result<f64> {
    check_same(morph, o1)?;
    check_same(morph, o2)?;
    check_same(morph, b1)?;
    check_same(morph, b2)?;
    if components.len() != cfg.k {
        return Err(Error::Dimension(format!(
            "expected {} components, got {}",
            cfg.k,
            components.len()
        )));
    }
    for c in components {
        check_same(morph, c)?;
    }
    let comps: Vec<&[f64]> = components.iter().map(|c| c.data()).collect();
    Ok(final_loss_with_grad(
        morph.data(),
        o1.data(),
        o2.data(),
        b1.data(),
        b2.data(),
        &comps,
        cfg.lambda,
    )
    .loss)
}
