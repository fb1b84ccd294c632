//! Checkpoint directory format.
//!
//! A checkpoint is a directory containing:
//!
//! * `config.json` — the [`NetworkConfig`] snapshot;
//! * `manifest.json` — the parameter names in order, with shapes;
//! * one `<name>.bin` file per named parameter.
//!
//! Array file format (all little-endian): `u32` rank, then rank × `u64`
//! dimensions, then the `f64` elements in row-major order. Round-trips are
//! bit-exact because values are stored as raw IEEE-754 bits.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{init_params, Decomposer, Merger, NetworkConfig};
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    params: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

fn array_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.bin"))
}

/// Write one tensor in the raw little-endian format.
pub fn write_array(path: &Path, t: &Tensor) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 8 * t.shape().len() + 8 * t.numel());
    buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

/// Read one tensor, validating the header against the file length.
pub fn read_array(path: &Path) -> Result<Tensor> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let corrupt = |what: &str| Error::Integrity(format!("{}: {}", path.display(), what));
    if buf.len() < 4 {
        return Err(corrupt("truncated header"));
    }
    let rank = u32::from_le_bytes(buf[0..4].try_into().unwrap()) as usize;
    let dims_end = 4 + 8 * rank;
    if buf.len() < dims_end {
        return Err(corrupt("truncated shape"));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 4 + 8 * i;
        shape.push(u64::from_le_bytes(buf[off..off + 8].try_into().unwrap()) as usize);
    }
    let n: usize = shape.iter().product();
    if buf.len() != dims_end + 8 * n {
        return Err(corrupt("payload length does not match shape"));
    }
    let data: Vec<f64> = buf[dims_end..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(&shape, data)
}

/// Save both networks and the config into `dir` (created if needed).
pub fn save(dir: &Path, dec: &Decomposer, mer: &Merger) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = dec.config;
    let cfg_json = serde_json::to_string_pretty(&cfg)
        .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    let cfg_path = dir.join("config.json");
    let mut f = fs::File::create(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    f.write_all(cfg_json.as_bytes())
        .map_err(|e| Error::io(&cfg_path, e))?;

    let mut entries = Vec::new();
    for p in dec.state_params().into_iter().chain(mer.state_params()) {
        write_array(&array_path(dir, &p.name), p.value)?;
        entries.push(ManifestEntry {
            name: p.name,
            shape: p.value.shape().to_vec(),
        });
    }
    let manifest = Manifest { params: entries };
    let man_path = dir.join("manifest.json");
    let man_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
    fs::write(&man_path, man_json).map_err(|e| Error::io(&man_path, e))
}

/// Load a checkpoint, rebuilding both networks bit-exactly.
pub fn load(dir: &Path) -> Result<(NetworkConfig, Decomposer, Merger)> {
    let cfg_path = dir.join("config.json");
    let cfg_json = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg: NetworkConfig = serde_json::from_str(&cfg_json)
        .map_err(|e| Error::Integrity(format!("unreadable config snapshot: {e}")))?;
    cfg.validate()?;

    let man_path = dir.join("manifest.json");
    let man_json = fs::read_to_string(&man_path).map_err(|e| Error::io(&man_path, e))?;
    let manifest: Manifest = serde_json::from_str(&man_json)
        .map_err(|e| Error::Integrity(format!("unreadable manifest: {e}")))?;

    // The seed is irrelevant: every value is overwritten below.
    let (mut dec, mut mer) = init_params(&cfg, 0)?;

    // The structural expectation is the exact ordered name list.
    {
        let expected: Vec<(String, Vec<usize>)> = dec
            .state_params()
            .into_iter()
            .chain(mer.state_params())
            .map(|p| (p.name, p.value.shape().to_vec()))
            .collect();
        let found: Vec<(String, Vec<usize>)> = manifest
            .params
            .iter()
            .map(|e| (e.name.clone(), e.shape.clone()))
            .collect();
        if expected != found {
            let missing: Vec<&str> = expected
                .iter()
                .filter(|(n, _)| !found.iter().any(|(fnm, _)| fnm == n))
                .map(|(n, _)| n.as_str())
                .collect();
            return Err(Error::Integrity(format!(
                "manifest does not match config structure (missing or mismatched: {:?})",
                if missing.is_empty() {
                    vec!["<shape or order mismatch>"]
                } else {
                    missing
                }
            )));
        }
    }

    let mut missing = Vec::new();
    for p in dec
        .state_params_mut()
        .into_iter()
        .chain(mer.state_params_mut())
    {
        let path = array_path(dir, &p.name);
        if !path.is_file() {
            missing.push(p.name.clone());
            continue;
        }
        let t = read_array(&path)?;
        if t.shape() != p.value.shape() {
            return Err(Error::Integrity(format!(
                "{}: stored shape {:?} does not match expected {:?}",
                p.name,
                t.shape(),
                p.value.shape()
            )));
        }
        *p.value = t;
    }
    if !missing.is_empty() {
        return Err(Error::Integrity(format!(
            "missing parameter arrays: {missing:?}"
        )));
    }
    Ok((cfg, dec, mer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn desk_cfg() -> NetworkConfig {
        NetworkConfig {
            k: 3,
            resolution: 16,
            base_channels: 4,
            depth: 3,
            heads: 2,
        }
    }

    #[test]
    fn array_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let t = Tensor::from_vec(
            &[2, 3],
            vec![0.1, -0.2, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -0.0],
        )
        .unwrap();
        let path = dir.path().join("t.bin");
        write_array(&path, &t).unwrap();
        let back = read_array(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let (mut dec, mut mer) = init_params(&desk_cfg(), 42).unwrap();
        // perturb some running stats so they are non-default
        for p in dec.state_params_mut() {
            if p.name.ends_with("running_mean") {
                p.value.fill(0.25);
            }
        }
        mer.w_raw[1].data_mut()[0] = 1.75;
        save(dir.path(), &dec, &mer).unwrap();
        let (cfg, dec2, mer2) = load(dir.path()).unwrap();
        assert_eq!(cfg, desk_cfg());
        for (a, b) in dec.state_params().iter().zip(dec2.state_params().iter()) {
            assert_eq!(a.name, b.name);
            let bits_equal = a
                .value
                .data()
                .iter()
                .zip(b.value.data())
                .all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(bits_equal, "{} not bit-exact", a.name);
        }
        for (a, b) in mer.state_params().iter().zip(mer2.state_params().iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn missing_array_is_integrity_error_listing_name() {
        let dir = tempdir().unwrap();
        let (dec, mer) = init_params(&desk_cfg(), 1).unwrap();
        save(dir.path(), &dec, &mer).unwrap();
        fs::remove_file(array_path(dir.path(), "merger.weights0")).unwrap();
        let err = load(dir.path()).unwrap_err();
        match err {
            Error::Integrity(msg) => assert!(msg.contains("merger.weights0"), "{msg}"),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_array_is_integrity_error() {
        let dir = tempdir().unwrap();
        let (dec, mer) = init_params(&desk_cfg(), 1).unwrap();
        save(dir.path(), &dec, &mer).unwrap();
        let victim = array_path(dir.path(), "decomposer.encoder.stage0.conv.weight");
        let bytes = fs::read(&victim).unwrap();
        fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn mismatched_structure_is_integrity_error() {
        let dir = tempdir().unwrap();
        let (dec, mer) = init_params(&desk_cfg(), 1).unwrap();
        save(dir.path(), &dec, &mer).unwrap();
        // claim a different k in the config: structure no longer matches
        let cfg_path = dir.path().join("config.json");
        let other = NetworkConfig { k: 4, ..desk_cfg() };
        fs::write(&cfg_path, serde_json::to_string(&other).unwrap()).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn missing_directory_is_io_error() {
        assert!(matches!(
            load(Path::new("/nonexistent/ckpt")),
            Err(Error::Io { .. })
        ));
    }
}
