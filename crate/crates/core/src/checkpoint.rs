//! Binary checkpoint files.
//!
//! Layout (all integers little-endian u64 unless noted):
//!
//! ```text
//! magic            8 bytes, ASCII "SSDGCKPT"
//! version          u32, currently 1
//! input_dim        u64
//! hidden_count     u64
//! hidden_dims      hidden_count x u64
//! num_classes      u64
//! dropout_rate     f64 (IEEE-754 bits, little-endian)
//! param_count      u64
//! per parameter, in ParamSet order:
//!   name_len       u64
//!   name           name_len bytes, UTF-8
//!   rank           u64
//!   dims           rank x u64
//!   data           product(dims) x f64, little-endian bits
//! ```
//!
//! Floats are written as raw IEEE-754 bit patterns, so a save/load cycle is
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::NetworkSpec;
use crate::tensor::{ParamSet, Tensor};

const MAGIC: &[u8; 8] = b"SSDGCKPT";
const VERSION: u32 = 1;

pub fn save(path: &Path, spec: &NetworkSpec, params: &ParamSet) -> Result<()> {
    spec.check_params(params)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_u64(&mut w, spec.input_dim as u64)?;
    write_u64(&mut w, spec.hidden_dims.len() as u64)?;
    for &d in &spec.hidden_dims {
        write_u64(&mut w, d as u64)?;
    }
    write_u64(&mut w, spec.num_classes as u64)?;
    w.write_all(&spec.dropout_rate.to_le_bytes())?;
    write_u64(&mut w, params.len() as u64)?;
    for (name, tensor) in params.iter() {
        write_u64(&mut w, name.len() as u64)?;
        w.write_all(name.as_bytes())?;
        write_u64(&mut w, tensor.shape().len() as u64)?;
        for &d in tensor.shape() {
            write_u64(&mut w, d as u64)?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(NetworkSpec, ParamSet)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::CheckpointFormat(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let mut vb = [0u8; 4];
    read_exact(&mut r, &mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(Error::CheckpointFormat(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }

    let input_dim = read_usize(&mut r)?;
    let hidden_count = read_usize(&mut r)?;
    if hidden_count > 1024 {
        return Err(Error::CheckpointFormat(format!(
            "implausible hidden layer count {hidden_count}"
        )));
    }
    let mut hidden_dims = Vec::with_capacity(hidden_count);
    for _ in 0..hidden_count {
        hidden_dims.push(read_usize(&mut r)?);
    }
    let num_classes = read_usize(&mut r)?;
    let mut db = [0u8; 8];
    read_exact(&mut r, &mut db)?;
    let dropout_rate = f64::from_le_bytes(db);
    let spec = NetworkSpec {
        input_dim,
        hidden_dims,
        num_classes,
        dropout_rate,
    };
    spec.validate()
        .map_err(|e| Error::CheckpointFormat(format!("invalid stored spec: {e}")))?;

    let param_count = read_usize(&mut r)?;
    let mut params = ParamSet::new();
    for _ in 0..param_count {
        let name_len = read_usize(&mut r)?;
        if name_len > 4096 {
            return Err(Error::CheckpointFormat(format!(
                "implausible parameter name length {name_len}"
            )));
        }
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::CheckpointFormat("parameter name is not UTF-8".into()))?;
        let rank = read_usize(&mut r)?;
        if rank > 8 {
            return Err(Error::CheckpointFormat(format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_usize(&mut r)?);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            read_exact(&mut r, &mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        let tensor = Tensor::new(shape, data)
            .map_err(|e| Error::CheckpointFormat(format!("parameter {name}: {e}")))?;
        params
            .insert(name, tensor)
            .map_err(|e| Error::CheckpointFormat(e.to_string()))?;
    }

    spec.check_params(&params)
        .map_err(|e| Error::CheckpointFormat(format!("params do not match stored spec: {e}")))?;
    Ok((spec, params))
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::CheckpointFormat("unexpected end of file".into()))
}

fn read_usize<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    let v = u64::from_le_bytes(b);
    usize::try_from(v)
        .map_err(|_| Error::CheckpointFormat(format!("value {v} exceeds platform usize")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;
    use crate::rng;

    fn spec() -> NetworkSpec {
        NetworkSpec {
            input_dim: 3,
            hidden_dims: vec![5, 4],
            num_classes: 2,
            dropout_rate: 0.25,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = spec();
        let mut r = rng::stream(99, &[rng::tag::INIT]);
        let params = init_params(&spec, &mut r).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &spec, &params).unwrap();
        let (spec2, params2) = load(&path).unwrap();
        assert_eq!(spec, spec2);
        assert_eq!(params, params2);
        for ((_, a), (_, b)) in params.iter().zip(params2.iter()) {
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxx").unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn rejects_truncation() {
        let spec = spec();
        let mut r = rng::stream(99, &[rng::tag::INIT]);
        let params = init_params(&spec, &mut r).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &spec, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = path.with_extension("cut");
        std::fs::write(&cut, &bytes[..bytes.len() - 7]).unwrap();
        let err = load(&cut).unwrap_err();
        assert!(err.to_string().contains("end of file"));
    }
}
