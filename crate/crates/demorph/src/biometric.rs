//! Biometric comparator: embedder + cosine similarity + threshold decision.
//!
//! Ships a deterministic toy embedder (coarse 8x8 grayscale signature) and an
//! adapter that shells out to an external embedding command, so real matchers
//! can be plugged in without touching the evaluation protocols.

use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageTensor;

pub const DEFAULT_TAU: f64 = 0.4;

/// Unit-norm feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vector: Vec<f64>,
}

impl Embedding {
    /// L2-normalize `raw`; a zero vector maps to the canonical unit vector.
    pub fn normalized(mut raw: Vec<f64>) -> Self {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            raw.iter_mut().for_each(|v| *v = 0.0);
            raw[0] = 1.0;
        } else {
            raw.iter_mut().for_each(|v| *v /= norm);
        }
        Embedding { vector: raw }
    }

    /// Use `raw` as-is, without normalization. For custom [`Comparator`]s
    /// whose feature space is not unit-norm (e.g. FID embedders); cosine
    /// similarity assumes unit vectors, so prefer [`Embedding::normalized`]
    /// for matching.
    pub fn from_raw(raw: Vec<f64>) -> Self {
        assert!(!raw.is_empty(), "embedding cannot be empty");
        Embedding { vector: raw }
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchResult {
    Found { similarity: f64 },
    NotFound,
}

/// Outcome of comparing two images.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub result: MatchResult,
    pub matched: bool,
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
pub fn similarity(e1: &Embedding, e2: &Embedding) -> Result<f64> {
    if e1.vector.len() != e2.vector.len() {
        return Err(Error::Dimension(format!(
            "embedding lengths {} vs {}",
            e1.vector.len(),
            e2.vector.len()
        )));
    }
    let dot: f64 = e1
        .vector
        .iter()
        .zip(&e2.vector)
        .map(|(a, b)| a * b)
        .sum();
    Ok(dot.clamp(-1.0, 1.0))
}

pub trait Comparator: Sync {
    /// Embed an image; `None` means "face not found".
    fn embed(&self, image: &ImageTensor) -> Option<Embedding>;

    fn name(&self) -> &str;
}

/// Deterministic desk-scale embedder: grayscale, 3x3 box blur, 8x8 average
/// pooling, mean subtraction, L2 normalization.
#[derive(Debug, Clone, Default)]
pub struct ToyEmbedder;

pub const TOY_EMBED_DIM: usize = 64;

impl ToyEmbedder {
    pub fn embed_toy(image: &ImageTensor) -> Embedding {
        let r = image.resolution();
        // grayscale
        let mut gray = vec![0.0; r * r];
        for y in 0..r {
            for x in 0..r {
                gray[y * r + x] = 0.299 * image.get(0, y, x)
                    + 0.587 * image.get(1, y, x)
                    + 0.114 * image.get(2, y, x);
            }
        }
        // 3x3 box blur, edge-clamped
        let mut blur = vec![0.0; r * r];
        for y in 0..r {
            for x in 0..r {
                let mut acc = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = (y as i64 + dy).clamp(0, r as i64 - 1) as usize;
                        let xx = (x as i64 + dx).clamp(0, r as i64 - 1) as usize;
                        acc += gray[yy * r + xx];
                    }
                }
                blur[y * r + x] = acc / 9.0;
            }
        }
        // 8x8 average pooling
        let block = r / 8;
        let mut pooled = vec![0.0; TOY_EMBED_DIM];
        for by in 0..8 {
            for bx in 0..8 {
                let mut acc = 0.0;
                for y in by * block..(by + 1) * block {
                    for x in bx * block..(bx + 1) * block {
                        acc += blur[y * r + x];
                    }
                }
                pooled[by * 8 + bx] = acc / (block * block) as f64;
            }
        }
        let mean = pooled.iter().sum::<f64>() / TOY_EMBED_DIM as f64;
        pooled.iter_mut().for_each(|v| *v -= mean);
        Embedding::normalized(pooled)
    }
}

impl Comparator for ToyEmbedder {
    fn embed(&self, image: &ImageTensor) -> Option<Embedding> {
        Some(Self::embed_toy(image))
    }

    fn name(&self) -> &str {
        "toy"
    }
}

/// Shells out to `command <png-path>`; stdout must be whitespace-separated
/// reals. Nonzero exit maps to face-not-found.
#[derive(Debug, Clone)]
pub struct ExternalEmbedder {
    pub command: String,
}

impl Comparator for ExternalEmbedder {
    fn embed(&self, image: &ImageTensor) -> Option<Embedding> {
        let dir = tempdir_in_std().ok()?;
        let path = dir.join("embed_input.png");
        image.save_png(&path).ok()?;
        let out = Command::new(&self.command).arg(&path).output();
        let _ = std::fs::remove_file(&path);
        let _ = std::fs::remove_dir(&dir);
        match out {
            Ok(o) if o.status.success() => {
                let text = String::from_utf8_lossy(&o.stdout);
                let vals: Vec<f64> = text
                    .split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect();
                if vals.is_empty() {
                    None
                } else {
                    Some(Embedding::normalized(vals))
                }
            }
            _ => None,
        }
    }

    fn name(&self) -> &str {
        "external"
    }
}

fn tempdir_in_std() -> std::io::Result<std::path::PathBuf> {
    let base = std::env::temp_dir();
    let dir = base.join(format!("demorph-embed-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Comparator selection as it appears in experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorConfig {
    Toy,
    External { command: String },
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        ComparatorConfig::Toy
    }
}

impl ComparatorConfig {
    pub fn build(&self) -> Box<dyn Comparator> {
        match self {
            ComparatorConfig::Toy => Box::new(ToyEmbedder),
            ComparatorConfig::External { command } => Box::new(ExternalEmbedder {
                command: command.clone(),
            }),
        }
    }
}

/// Strict-threshold match decision; `NotFound` on either side is a non-match.
pub fn is_match(
    comparator: &dyn Comparator,
    i1: &ImageTensor,
    i2: &ImageTensor,
    tau: f64,
) -> Result<MatchOutcome> {
    if !(-1.0..1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must be in (-1,1), got {tau}")));
    }
    let (e1, e2) = match (comparator.embed(i1), comparator.embed(i2)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Ok(MatchOutcome {
                result: MatchResult::NotFound,
                matched: false,
            })
        }
    };
    let sim = similarity(&e1, &e2)?;
    Ok(MatchOutcome {
        result: MatchResult::Found { similarity: sim },
        matched: sim > tau,
    })
}
