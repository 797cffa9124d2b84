//! Versioned binary checkpoint for parameter sets and optimizer state.
//!
//! Byte layout (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes   "SMCK"
//! version      u32       currently 1
//! flags        u32       bit 0 = projection head discarded
//! n_params     u32
//! opt_present  u8        0 or 1
//! if opt_present == 1:
//!   lr             f64
//!   momentum       f64
//!   weight_decay   f64
//!   n_velocity     u32
//! n_params parameter entries, then n_velocity velocity entries, each:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   ndim       u32
//!   dims       ndim × u32
//!   values     prod(dims) × f32
//! ```
//!
//! Entries are written in sorted-name order, so identical state produces an
//! identical file. Values quantize to f32 on disk; a save→load→save cycle is
//! byte-stable after the first quantization.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::optim::{SgdConfig, SgdOptimizer};
use super::params::ParameterSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SMCK";
const VERSION: u32 = 1;

/// Header flag: the contrastive projection head was dropped before saving.
pub const FLAG_PROJECTION_DISCARDED: u32 = 1;

/// Everything a checkpoint file holds.
pub struct Checkpoint {
    pub params: ParameterSet,
    pub flags: u32,
    pub optimizer: Option<OptimizerState>,
}

pub struct OptimizerState {
    pub cfg: SgdConfig,
    pub velocity: BTreeMap<String, Tensor>,
}

impl OptimizerState {
    /// Rebuilds a live optimizer from saved state.
    pub fn into_optimizer(self) -> SgdOptimizer {
        let mut opt = SgdOptimizer::new(self.cfg);
        opt.restore_velocity(self.velocity);
        opt
    }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ParameterSet,
    optimizer: Option<&SgdOptimizer>,
    flags: u32,
) -> Result<()> {
    let path = path.as_ref();
    let ioerr = |e| Error::io(path.display().to_string(), e);
    let mut w = BufWriter::new(File::create(path).map_err(ioerr)?);

    let write_u32 = |w: &mut BufWriter<File>, v: u32| w.write_all(&v.to_le_bytes());
    let write_entry = |w: &mut BufWriter<File>, name: &str, t: &Tensor| -> std::io::Result<()> {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &t.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    };

    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        write_u32(&mut w, VERSION)?;
        write_u32(&mut w, flags)?;
        write_u32(&mut w, params.len() as u32)?;
        match optimizer {
            None => w.write_all(&[0u8])?,
            Some(opt) => {
                w.write_all(&[1u8])?;
                w.write_all(&opt.cfg.lr.to_le_bytes())?;
                w.write_all(&opt.cfg.momentum.to_le_bytes())?;
                w.write_all(&opt.cfg.weight_decay.to_le_bytes())?;
                write_u32(&mut w, opt.velocity().count() as u32)?;
            }
        }
        for (name, t) in params.iter() {
            write_entry(&mut w, name, t)?;
        }
        if let Some(opt) = optimizer {
            for (name, t) in opt.velocity() {
                write_entry(&mut w, name, t)?;
            }
        }
        w.flush()
    })()
    .map_err(ioerr)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(&pstr, e))?);

    let mut read_exact = |n: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf).map_err(|e| Error::io(&pstr, e))?;
        Ok(buf)
    };
    macro_rules! read_u32 {
        () => {{
            let b = read_exact(4)?;
            u32::from_le_bytes([b[0], b[1], b[2], b[3]])
        }};
    }
    macro_rules! read_f64 {
        () => {{
            let b = read_exact(8)?;
            f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
        }};
    }

    if read_exact(4)? != MAGIC {
        return Err(Error::format(&pstr, "bad magic; not a checkpoint file"));
    }
    let version = read_u32!();
    if version != VERSION {
        return Err(Error::format(&pstr, format!("unsupported version {version}")));
    }
    let flags = read_u32!();
    let n_params = read_u32!() as usize;
    let opt_present = read_exact(1)?[0];
    let (opt_cfg, n_velocity) = if opt_present == 1 {
        let cfg = SgdConfig {
            lr: read_f64!(),
            momentum: read_f64!(),
            weight_decay: read_f64!(),
        };
        let nv = read_u32!() as usize;
        (Some(cfg), nv)
    } else if opt_present == 0 {
        (None, 0)
    } else {
        return Err(Error::format(&pstr, format!("bad optimizer-presence byte {opt_present}")));
    };

    let mut read_entry = |what: &str| -> Result<(String, Tensor)> {
        let name_len = {
            let b = read_exact(4)?;
            u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize
        };
        if name_len > 4096 {
            return Err(Error::format(&pstr, format!("{what} name length {name_len} implausible")));
        }
        let name = String::from_utf8(read_exact(name_len)?)
            .map_err(|_| Error::format(&pstr, format!("{what} name is not UTF-8")))?;
        let ndim = {
            let b = read_exact(4)?;
            u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize
        };
        if ndim > 2 {
            return Err(Error::format(&pstr, format!("{what} {name:?} has rank {ndim} > 2")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for _ in 0..ndim {
            let b = read_exact(4)?;
            let d = u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
            count = count.saturating_mul(d);
            shape.push(d);
        }
        if count > 100_000_000 {
            return Err(Error::format(&pstr, format!("{what} {name:?} size {count} implausible")));
        }
        let raw = read_exact(4 * count)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let t = Tensor { shape, data };
        t.ensure_finite(&format!("{what} {name:?} in {pstr}"))?;
        Ok((name, t))
    };

    let mut params = ParameterSet::new();
    for _ in 0..n_params {
        let (name, t) = read_entry("parameter")?;
        params.insert(&name, t)?;
    }
    let optimizer = match opt_cfg {
        None => None,
        Some(cfg) => {
            let mut velocity = BTreeMap::new();
            for _ in 0..n_velocity {
                let (name, t) = read_entry("velocity")?;
                velocity.insert(name, t);
            }
            Some(OptimizerState { cfg, velocity })
        }
    };
    Ok(Checkpoint { params, flags, optimizer })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f32_clean_params() -> ParameterSet {
        // values chosen to be exactly representable in f32
        let mut p = ParameterSet::new();
        p.insert("enc.w", Tensor::matrix(2, 3, vec![0.5, -1.25, 2.0, 0.0, 3.5, -0.75]).unwrap())
            .unwrap();
        p.insert("enc.b", Tensor::vector(vec![1.0, -2.0, 0.25])).unwrap();
        p
    }

    #[test]
    fn round_trip_preserves_values_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let p = f32_clean_params();
        save_checkpoint(&path, &p, None, FLAG_PROJECTION_DISCARDED).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.flags, FLAG_PROJECTION_DISCARDED);
        assert!(ck.optimizer.is_none());
        assert_eq!(ck.params.get("enc.w").unwrap(), p.get("enc.w").unwrap());
        assert_eq!(ck.params.get("enc.b").unwrap(), p.get("enc.b").unwrap());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("1.ckpt"), dir.path().join("2.ckpt"));
        // values NOT f32-clean: quantization settles after the first save
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::vector(vec![std::f64::consts::PI, 1.0 / 3.0])).unwrap();
        save_checkpoint(&p1, &p, None, 0).unwrap();
        let ck = load_checkpoint(&p1).unwrap();
        save_checkpoint(&p2, &ck.params, None, ck.flags).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn optimizer_state_survives() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.ckpt");
        let mut p = f32_clean_params();
        let cfg = SgdConfig { lr: 0.0625, momentum: 0.875, weight_decay: 0.03125 };
        let mut opt = SgdOptimizer::new(cfg);
        p.accumulate_grad("enc.b", &Tensor::vector(vec![1.0, 1.0, 1.0])).unwrap();
        opt.step(&mut p).unwrap();
        save_checkpoint(&path, &p, Some(&opt), 0).unwrap();

        let ck = load_checkpoint(&path).unwrap();
        let state = ck.optimizer.unwrap();
        assert_eq!(state.cfg.lr, 0.0625);
        assert_eq!(state.cfg.momentum, 0.875);
        assert_eq!(state.cfg.weight_decay, 0.03125);
        // velocity for enc.b was exactly the gradient + wd·θ, all f32-clean
        let v = &state.velocity["enc.b"];
        let expect: Vec<f64> =
            [1.0f64, -2.0, 0.25].iter().map(|t| 1.0 + 0.03125 * t).collect();
        assert_eq!(v.data, expect);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.ckpt");
        std::fs::write(&bad, b"NOPE....").unwrap();
        assert!(matches!(load_checkpoint(&bad), Err(Error::Format { .. })));

        let trunc = dir.path().join("trunc.ckpt");
        let p = f32_clean_params();
        save_checkpoint(&trunc, &p, None, 0).unwrap();
        let bytes = std::fs::read(&trunc).unwrap();
        std::fs::write(&trunc, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load_checkpoint(&trunc).is_err());
    }
}
