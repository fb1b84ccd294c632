//! Command-line surface: data generation, training, inference, evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use demorph::biometric::{is_match, Comparator, MatchResult};
use demorph::checkpoint;
use demorph::config::ExperimentConfig;
use demorph::error::{Error, Result};
use demorph::imaging::{
    build_scenario1_split, generate_dataset, ImageTensor, Manifest, ManifestRecord, MorphSample,
};
use demorph::metrics::{
    component_leakage, iqa_report, match_accuracy, restoration_accuracy,
};
use demorph::nets::{decompose, demorph as demorph_op, merge, Decomposer, Merger};
use demorph::training::{train_decomposition, train_demorph, TrainMode};

#[derive(Parser)]
#[command(name = "demorph", version, about = "Reference-free face demorphing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic morph dataset (PNGs + manifest).
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured mode on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset manifest written by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Split one image into its k components.
    Decompose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover both bonafide estimates behind a morph.
    Demorph {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the biometric and IQA protocols against a dataset manifest.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, out } => cmd_gen_data(&config, &out),
        Command::Train {
            config,
            data,
            out,
            resume,
        } => cmd_train(&config, &data, &out, resume.as_deref()),
        Command::Decompose {
            checkpoint,
            image,
            out,
        } => cmd_decompose(&checkpoint, &image, &out),
        Command::Demorph {
            checkpoint,
            image,
            out,
        } => cmd_demorph(&checkpoint, &image, &out),
        Command::Evaluate {
            checkpoint,
            manifest,
            config,
            out,
        } => cmd_evaluate(&checkpoint, &manifest, &config, &out),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Index of every artifact a command wrote into its run directory.
fn write_run_manifest(dir: &Path, artifacts: &[String]) -> Result<()> {
    let mut text = String::new();
    for a in artifacts {
        text.push_str(a);
        text.push('\n');
    }
    write_text(&dir.join("MANIFEST"), &text)
}

fn cmd_gen_data(config_path: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    ensure_dir(out)?;
    let images_dir = out.join("images");
    ensure_dir(&images_dir)?;

    let samples = generate_dataset(
        cfg.data.n_identities,
        cfg.data.variations_per_identity,
        &cfg.data.alphas,
        cfg.data.resolution,
        cfg.data.seed,
    )?;
    let split = build_scenario1_split(&samples, cfg.data.train_fraction, cfg.data.seed)?;

    let mut records = Vec::new();
    let mut artifacts = vec!["config.json".to_string(), "manifest.json".to_string()];
    let mut write_set = |set: &[MorphSample], tag: &str, base: usize| -> Result<()> {
        for (i, s) in set.iter().enumerate() {
            let idx = base + i;
            let m = format!("images/r{idx:04}_morph.png");
            let b1 = format!("images/r{idx:04}_bonafide1.png");
            let b2 = format!("images/r{idx:04}_bonafide2.png");
            s.morph.save_png(&out.join(&m))?;
            s.bonafide1.save_png(&out.join(&b1))?;
            s.bonafide2.save_png(&out.join(&b2))?;
            records.push(ManifestRecord {
                morph_path: m.clone(),
                bonafide1_path: b1.clone(),
                bonafide2_path: b2.clone(),
                id1: s.identity1,
                id2: s.identity2,
                alpha: s.alpha,
                split: Some(tag.to_string()),
            });
            artifacts.extend([m, b1, b2]);
        }
        Ok(())
    };
    write_set(&split.train, "train", 0)?;
    write_set(&split.test, "test", split.train.len())?;

    let manifest = Manifest {
        resolution: cfg.data.resolution,
        records,
    };
    manifest.save(&out.join("manifest.json"))?;
    cfg.save(&out.join("config.json"))?;
    write_run_manifest(out, &artifacts)?;
    println!(
        "wrote {} morphs ({} train, {} test) to {}",
        manifest.records.len(),
        split.train.len(),
        split.test.len(),
        out.display()
    );
    Ok(())
}

/// Unique bonafide images of the requested split. Each record carries its own
/// copies of the bonafide PNGs, so uniqueness is by pixel content (keyed by
/// identity then first-seen path for deterministic order).
fn unique_bonafides(
    manifest: &Manifest,
    base: &Path,
    split: Option<&str>,
) -> Result<Vec<ImageTensor>> {
    let mut by_path: BTreeMap<&str, u32> = BTreeMap::new();
    for r in &manifest.records {
        if split.is_some() && r.split.as_deref() != split {
            continue;
        }
        by_path.entry(&r.bonafide1_path).or_insert(r.id1);
        by_path.entry(&r.bonafide2_path).or_insert(r.id2);
    }
    let mut seen: std::collections::BTreeSet<(u32, Vec<u64>)> = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (p, &id) in &by_path {
        let img = ImageTensor::load_png(&base.join(p))?;
        let key = (id, img.data().iter().map(|v| v.to_bits()).collect());
        if seen.insert(key) {
            out.push(img);
        }
    }
    Ok(out)
}

fn split_samples(manifest: &Manifest, base: &Path, split: &str) -> Result<Vec<MorphSample>> {
    let filtered = Manifest {
        resolution: manifest.resolution,
        records: manifest
            .records
            .iter()
            .filter(|r| r.split.as_deref() == Some(split))
            .cloned()
            .collect(),
    };
    filtered.load_samples(base)
}

fn cmd_train(
    config_path: &Path,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
) -> Result<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    ensure_dir(out)?;
    cfg.save(&out.join("config.json"))?;

    let manifest = Manifest::load(data)?;
    let base = data.parent().unwrap_or(Path::new("."));
    if manifest.resolution != cfg.train.net.resolution {
        return Err(Error::Data(format!(
            "dataset resolution {} != network resolution {}",
            manifest.resolution, cfg.train.net.resolution
        )));
    }

    let init = match resume {
        Some(ckpt) => {
            let (ck_cfg, dec, mer) = checkpoint::load(ckpt)?;
            if ck_cfg != cfg.train.net {
                return Err(Error::Integrity(format!(
                    "checkpoint network config {ck_cfg:?} does not match experiment {:?}",
                    cfg.train.net
                )));
            }
            Some((dec, mer))
        }
        None => None,
    };

    let report = match cfg.train.mode {
        TrainMode::Decomposition => {
            let images = unique_bonafides(&manifest, base, Some("train"))?;
            let (_, _, report) = train_decomposition(&images, &cfg.train, init, Some(out))?;
            report
        }
        TrainMode::Demorphing => {
            let samples = split_samples(&manifest, base, "train")?;
            let (_, _, report) = train_demorph(&samples, &cfg.train, init, Some(out))?;
            report
        }
    };
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Data(format!("report encode: {e}")))?;
    write_text(&out.join("train_report.json"), &report_json)?;
    write_run_manifest(
        out,
        &[
            "config.json".into(),
            "loss.csv".into(),
            "checkpoint-final".into(),
            "train_report.json".into(),
        ],
    )?;
    println!(
        "trained {} epochs: loss {:.6} -> {:.6}",
        report.losses.len(),
        report.losses.first().unwrap(),
        report.losses.last().unwrap()
    );
    Ok(())
}

fn load_checkpoint_and_image(
    ckpt: &Path,
    image: &Path,
) -> Result<(Decomposer, Merger, ImageTensor)> {
    let (cfg, dec, mer) = checkpoint::load(ckpt)?;
    let img = ImageTensor::load_png(image)?;
    if img.resolution() != cfg.resolution {
        return Err(Error::Data(format!(
            "image resolution {} != checkpoint resolution {}",
            img.resolution(),
            cfg.resolution
        )));
    }
    Ok((dec, mer, img))
}

fn cmd_decompose(ckpt: &Path, image: &Path, out: &Path) -> Result<()> {
    let (dec, mer, img) = load_checkpoint_and_image(ckpt, image)?;
    ensure_dir(out)?;
    let comps = decompose(&dec, &img)?;
    let mut artifacts = Vec::new();
    for (i, c) in comps.iter().enumerate() {
        let name = format!("component_{}.png", i + 1);
        c.save_png(&out.join(&name))?;
        artifacts.push(name);
    }
    if mer.config.heads == 1 {
        let recon = merge(&mer, 0, &comps)?;
        recon.save_png(&out.join("reconstruction.png"))?;
        artifacts.push("reconstruction.png".into());
    }
    write_run_manifest(out, &artifacts)?;
    println!("wrote {} components to {}", comps.len(), out.display());
    Ok(())
}

fn similarity_line(
    comparator: &dyn Comparator,
    tag: &str,
    a: &ImageTensor,
    b: &ImageTensor,
    tau: f64,
) -> Result<String> {
    let outcome = is_match(comparator, a, b, tau)?;
    Ok(match outcome.result {
        MatchResult::Found { similarity } => format!(
            "{tag}: similarity {similarity:.4} ({})",
            if outcome.matched { "match" } else { "non-match" }
        ),
        MatchResult::NotFound => format!("{tag}: face not found"),
    })
}

fn cmd_demorph(ckpt: &Path, image: &Path, out: &Path) -> Result<()> {
    let (dec, mer, img) = load_checkpoint_and_image(ckpt, image)?;
    if mer.config.heads != 2 {
        return Err(Error::Config(format!(
            "checkpoint has {} merger head(s); demorphing needs 2",
            mer.config.heads
        )));
    }
    ensure_dir(out)?;
    let (o1, o2, comps) = demorph_op(&dec, &mer, &img)?;
    let mut artifacts = vec!["input.png".to_string()];
    img.save_png(&out.join("input.png"))?;
    for (i, c) in comps.iter().enumerate() {
        let name = format!("component_{}.png", i + 1);
        c.save_png(&out.join(&name))?;
        artifacts.push(name);
    }
    o1.save_png(&out.join("output_1.png"))?;
    o2.save_png(&out.join("output_2.png"))?;
    artifacts.extend(["output_1.png".into(), "output_2.png".into()]);

    let comparator = demorph::biometric::ToyEmbedder;
    let tau = demorph::biometric::DEFAULT_TAU;
    let captions = [
        similarity_line(&comparator, "output_1 vs input", &o1, &img, tau)?,
        similarity_line(&comparator, "output_2 vs input", &o2, &img, tau)?,
        similarity_line(&comparator, "output_1 vs output_2", &o1, &o2, tau)?,
    ]
    .join("\n");
    write_text(&out.join("captions.txt"), &(captions + "\n"))?;
    artifacts.push("captions.txt".into());
    write_run_manifest(out, &artifacts)?;
    println!("wrote outputs and {} components to {}", comps.len(), out.display());
    Ok(())
}

fn cmd_evaluate(
    ckpt: &Path,
    manifest_path: &Path,
    config_path: &Path,
    out: &Path,
) -> Result<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    let (net_cfg, dec, mer) = checkpoint::load(ckpt)?;
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    if manifest.resolution != net_cfg.resolution {
        return Err(Error::Data(format!(
            "dataset resolution {} != checkpoint resolution {}",
            manifest.resolution, net_cfg.resolution
        )));
    }
    ensure_dir(out)?;
    let comparator = cfg.comparator.build();
    let tau = cfg.tau;

    let report = if net_cfg.heads == 1 {
        evaluate_decomposition(&dec, &mer, &manifest, base, comparator.as_ref(), tau)?
    } else {
        evaluate_demorphing(&dec, &mer, &manifest, base, comparator.as_ref(), tau)?
    };
    write_text(&out.join("report.json"), &report)?;
    write_run_manifest(out, &["report.json".into()])?;
    println!("{report}");
    Ok(())
}

fn evaluate_decomposition(
    dec: &Decomposer,
    mer: &Merger,
    manifest: &Manifest,
    base: &Path,
    comparator: &dyn Comparator,
    tau: f64,
) -> Result<String> {
    // the decomposer is trained on the bonafide pool; evaluate on all of it
    let images = unique_bonafides(manifest, base, None)?;
    if images.is_empty() {
        return Err(Error::Data("manifest contains no bonafides".into()));
    }
    let recons: Vec<ImageTensor> = images
        .iter()
        .map(|img| {
            let comps = decompose(dec, img)?;
            merge(mer, 0, &comps)
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(&ImageTensor, &ImageTensor)> =
        images.iter().zip(recons.iter()).collect();
    let match_raw = match_accuracy(&pairs, comparator, tau, false)?;
    let match_found = match_accuracy(&pairs, comparator, tau, true)?;
    let img_refs: Vec<&ImageTensor> = images.iter().collect();
    let rec_refs: Vec<&ImageTensor> = recons.iter().collect();
    let leakage = component_leakage(dec, mer, &img_refs, comparator, tau)?;
    let iqa = iqa_report(&img_refs, &rec_refs, comparator)?;

    let report = serde_json::json!({
        "mode": "decomposition",
        "comparator": comparator.name(),
        "tau": tau,
        "n_images": images.len(),
        "reconstruction_match_accuracy": match_raw,
        "reconstruction_match_accuracy_found_only": match_found,
        "component_leakage": leakage,
        "iqa_note": "fid uses the configured embedder; values are not comparable across embedders",
        "iqa": iqa,
    });
    serde_json::to_string_pretty(&report).map_err(|e| Error::Data(format!("report encode: {e}")))
}

fn evaluate_demorphing(
    dec: &Decomposer,
    mer: &Merger,
    manifest: &Manifest,
    base: &Path,
    comparator: &dyn Comparator,
    tau: f64,
) -> Result<String> {
    let mut samples = split_samples(manifest, base, "test")?;
    if samples.is_empty() {
        // unsplit manifests evaluate over everything
        samples = manifest.load_samples(base)?;
    }
    if samples.is_empty() {
        return Err(Error::Data("manifest contains no morphs".into()));
    }
    let mut outputs = Vec::with_capacity(samples.len());
    for s in &samples {
        let (o1, o2, _) = demorph_op(dec, mer, &s.morph)?;
        outputs.push((o1, o2));
    }
    let quads: Vec<(&ImageTensor, &ImageTensor, &ImageTensor, &ImageTensor)> = samples
        .iter()
        .zip(outputs.iter())
        .map(|(s, (o1, o2))| (o1, o2, &s.bonafide1, &s.bonafide2))
        .collect();
    let (acc1, acc2, records) = restoration_accuracy(&quads, comparator, tau)?;
    let not_found = records
        .iter()
        .flat_map(|r| r.sims.iter().flatten())
        .filter(|s| s.is_none())
        .count();

    // IQA between ground-truth bonafides and the restored outputs
    let mut truths: Vec<&ImageTensor> = Vec::new();
    let mut outs: Vec<&ImageTensor> = Vec::new();
    for (s, (o1, o2)) in samples.iter().zip(outputs.iter()) {
        truths.push(&s.bonafide1);
        outs.push(o1);
        truths.push(&s.bonafide2);
        outs.push(o2);
    }
    let iqa = iqa_report(&truths, &outs, comparator)?;

    let report = serde_json::json!({
        "mode": "demorphing",
        "comparator": comparator.name(),
        "tau": tau,
        "n_morphs": samples.len(),
        "subject1_restoration_accuracy": acc1,
        "subject2_restoration_accuracy": acc2,
        "not_found_similarities": not_found,
        "iqa_note": "fid uses the configured embedder; values are not comparable across embedders",
        "iqa": iqa,
    });
    serde_json::to_string_pretty(&report).map_err(|e| Error::Data(format!("report encode: {e}")))
}
