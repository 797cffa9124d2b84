//! Dataset container. One file holds the generator config echo plus all four
//! splits, so a bundle can be regenerated or verified from the file alone.
//!
//! Layout (all integers little-endian):
//!
//! | field           | bytes                                   |
//! |-----------------|-----------------------------------------|
//! | magic           | `SMDS`                                  |
//! | version         | u32 (= 1)                               |
//! | fingerprint     | u32 len + utf8 hex                      |
//! | config JSON     | u32 len + utf8                          |
//! | side            | u32                                     |
//! | split counts    | u32 × 4 (train, val, test, unlabeled)   |
//! | per study       | see below, splits concatenated in order |
//!
//! Study record: u32 id len + utf8 id, u8 label (255 = unlabeled), u32 k,
//! k × u8 view-type codes, k × f64 oracle relevance, k·side² × f32 pixels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::generate::{DatasetBundle, GeneratorConfig, SyntheticStudy};
use super::render::ViewType;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SMDS";
const VERSION: u32 = 1;
const NO_LABEL: u8 = 255;

fn ioerr(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

fn fmterr(path: &Path, detail: impl Into<String>) -> Error {
    Error::format(path.display().to_string(), detail)
}

// ── Writing ──────────────────────────────────────────────────────────────

fn write_u32(w: &mut impl Write, v: u32, path: &Path) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(|e| ioerr(path, e))
}

fn write_str(w: &mut impl Write, s: &str, path: &Path) -> Result<()> {
    write_u32(w, s.len() as u32, path)?;
    w.write_all(s.as_bytes()).map_err(|e| ioerr(path, e))
}

fn write_study(w: &mut impl Write, s: &SyntheticStudy, path: &Path) -> Result<()> {
    write_str(w, &s.id, path)?;
    let label = s.label.unwrap_or(NO_LABEL);
    w.write_all(&[label]).map_err(|e| ioerr(path, e))?;
    write_u32(w, s.k() as u32, path)?;
    let codes: Vec<u8> = s.view_types.iter().map(|vt| vt.code()).collect();
    w.write_all(&codes).map_err(|e| ioerr(path, e))?;
    for &r in &s.oracle_relevance {
        w.write_all(&r.to_le_bytes()).map_err(|e| ioerr(path, e))?;
    }
    for &p in &s.pixels {
        w.write_all(&p.to_le_bytes()).map_err(|e| ioerr(path, e))?;
    }
    Ok(())
}

pub fn save_dataset(path: &Path, bundle: &DatasetBundle) -> Result<()> {
    let file = File::create(path).map_err(|e| ioerr(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(|e| ioerr(path, e))?;
    write_u32(&mut w, VERSION, path)?;
    write_str(&mut w, &bundle.fingerprint, path)?;
    let config_json = serde_json::to_string(&bundle.config)
        .map_err(|e| fmterr(path, format!("config encode: {e}")))?;
    write_str(&mut w, &config_json, path)?;
    write_u32(&mut w, bundle.config.image_side as u32, path)?;
    for split in [&bundle.train, &bundle.val, &bundle.test, &bundle.unlabeled] {
        write_u32(&mut w, split.len() as u32, path)?;
    }
    for split in [&bundle.train, &bundle.val, &bundle.test, &bundle.unlabeled] {
        for s in split {
            write_study(&mut w, s, path)?;
        }
    }
    w.flush().map_err(|e| ioerr(path, e))
}

// ── Reading ──────────────────────────────────────────────────────────────

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| ioerr(path, e))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read, path: &Path, what: &str) -> Result<String> {
    let len = read_u32(r, path)? as usize;
    if len > 1 << 20 {
        return Err(fmterr(path, format!("{what} length {len} implausible")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| ioerr(path, e))?;
    String::from_utf8(buf).map_err(|_| fmterr(path, format!("{what} is not UTF-8")))
}

fn read_study(r: &mut impl Read, side: usize, path: &Path) -> Result<SyntheticStudy> {
    let id = read_str(r, path, "study id")?;
    let mut label_byte = [0u8; 1];
    r.read_exact(&mut label_byte).map_err(|e| ioerr(path, e))?;
    let label = match label_byte[0] {
        NO_LABEL => None,
        l if l <= 2 => Some(l),
        l => return Err(fmterr(path, format!("study {id}: label byte {l}"))),
    };
    let k = read_u32(r, path)? as usize;
    if k == 0 || k > 100_000 {
        return Err(fmterr(path, format!("study {id}: bag size {k}")));
    }
    let mut codes = vec![0u8; k];
    r.read_exact(&mut codes).map_err(|e| ioerr(path, e))?;
    let view_types = codes
        .iter()
        .map(|&c| {
            ViewType::from_code(c)
                .ok_or_else(|| fmterr(path, format!("study {id}: view code {c}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut oracle_relevance = Vec::with_capacity(k);
    for _ in 0..k {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(|e| ioerr(path, e))?;
        let v = f64::from_le_bytes(buf);
        if !(0.0..=1.0).contains(&v) {
            return Err(fmterr(path, format!("study {id}: relevance {v}")));
        }
        oracle_relevance.push(v);
    }
    let n_px = k * side * side;
    let mut raw = vec![0u8; n_px * 4];
    r.read_exact(&mut raw).map_err(|e| ioerr(path, e))?;
    let pixels: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if pixels.iter().any(|p| !p.is_finite()) {
        return Err(fmterr(path, format!("study {id}: non-finite pixel")));
    }
    Ok(SyntheticStudy { id, label, side, pixels, view_types, oracle_relevance })
}

pub fn load_dataset(path: &Path) -> Result<DatasetBundle> {
    let file = File::open(path).map_err(|e| ioerr(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| ioerr(path, e))?;
    if &magic != MAGIC {
        return Err(fmterr(path, "bad magic; not a dataset file"));
    }
    let version = read_u32(&mut r, path)?;
    if version != VERSION {
        return Err(fmterr(path, format!("unsupported version {version}")));
    }
    let fingerprint = read_str(&mut r, path, "fingerprint")?;
    let config_json = read_str(&mut r, path, "config")?;
    let config: GeneratorConfig = serde_json::from_str(&config_json)
        .map_err(|e| fmterr(path, format!("config decode: {e}")))?;
    if config.fingerprint() != fingerprint {
        return Err(fmterr(path, "fingerprint does not match embedded config"));
    }
    let side = read_u32(&mut r, path)? as usize;
    if side != config.image_side {
        return Err(fmterr(path, format!("side {side} disagrees with config")));
    }
    let counts: Vec<usize> = (0..4)
        .map(|_| read_u32(&mut r, path).map(|c| c as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut read_split = |n: usize| -> Result<Vec<SyntheticStudy>> {
        (0..n).map(|_| read_study(&mut r, side, path)).collect()
    };
    let train = read_split(counts[0])?;
    let val = read_split(counts[1])?;
    let test = read_split(counts[2])?;
    let unlabeled = read_split(counts[3])?;
    let mut trailer = [0u8; 1];
    if r.read(&mut trailer).map_err(|e| ioerr(path, e))? != 0 {
        return Err(fmterr(path, "trailing bytes after last study"));
    }
    Ok(DatasetBundle { config, fingerprint, train, val, test, unlabeled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_bundle;

    fn tiny_bundle() -> DatasetBundle {
        let cfg = GeneratorConfig {
            seed: 5,
            train_count: 6,
            val_count: 3,
            test_count: 3,
            unlabeled_count: 4,
            k_min: 4,
            k_max: 8,
            ..GeneratorConfig::default()
        };
        generate_bundle(&cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.smds");
        let bundle = tiny_bundle();
        save_dataset(&path, &bundle).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(bundle, loaded);
    }

    #[test]
    fn save_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.smds"), dir.path().join("b.smds"));
        let bundle = tiny_bundle();
        save_dataset(&p1, &bundle).unwrap();
        save_dataset(&p2, &bundle).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.smds");
        std::fs::write(&path, b"not a dataset at all").unwrap();
        assert!(load_dataset(&path).is_err());

        let good = dir.path().join("good.smds");
        save_dataset(&good, &tiny_bundle()).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let cut = dir.path().join("cut.smds");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_dataset(&cut).is_err());
    }

    #[test]
    fn rejects_fingerprint_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.smds");
        save_dataset(&path, &tiny_bundle()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // fingerprint hex starts right after magic+version+len
        bytes[12] = if bytes[12] == b'0' { b'1' } else { b'0' };
        std::fs::write(&path, &bytes).unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("fingerprint"));
    }

    #[test]
    fn rejects_trailing_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.smds");
        save_dataset(&path, &tiny_bundle()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_dataset(&path).is_err());
    }
}
