//! Model files: `VXCN` magic, u32 version, u32 grid side, architecture
//! descriptor, u64 parameter count, little-endian f64 parameters, optional
//! Adam state, CRC32 of everything before it.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::formats::{atomic_write, ByteReader};
use crate::net::arch::{Architecture, ConvSpec};
use crate::net::model::{AdamState, Model};

pub const MAGIC: &[u8; 4] = b"VXCN";
pub const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, vals: &[f64]) {
    buf.reserve(vals.len() * 8);
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_model(m: &Model) -> Vec<u8> {
    let a = m.arch();
    let mut buf = Vec::with_capacity(64 + m.params.len() * 8);
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION as usize);
    put_u32(&mut buf, a.input_side);
    put_u32(&mut buf, a.input_side);
    put_u32(&mut buf, a.conv.len());
    for c in &a.conv {
        put_u32(&mut buf, c.out_channels);
        put_u32(&mut buf, c.kernel);
        put_u32(&mut buf, c.pool);
    }
    put_u32(&mut buf, a.dense.len());
    for &d in &a.dense {
        put_u32(&mut buf, d);
    }
    buf.extend_from_slice(&(m.params.len() as u64).to_le_bytes());
    put_f64s(&mut buf, &m.params);
    if m.adam.m.len() == m.params.len() {
        buf.push(1);
        buf.extend_from_slice(&m.adam.t.to_le_bytes());
        put_f64s(&mut buf, &m.adam.m);
        put_f64s(&mut buf, &m.adam.v);
    } else {
        buf.push(0);
        buf.extend_from_slice(&m.adam.t.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::format("not a model file (bad magic)"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let crc = u32::from_le_bytes(trailer.try_into().unwrap());
    let mut r = ByteReader::new(&body[4..]);
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported model version {version}")));
    }
    if crc32fast::hash(body) != crc {
        return Err(Error::format("model checksum mismatch"));
    }
    let grid_side = r.u32()? as usize;
    let input_side = r.u32()? as usize;
    if grid_side != input_side {
        return Err(Error::format(format!(
            "declared grid side {grid_side} does not match architecture input side {input_side}"
        )));
    }
    let nconv = r.u32()? as usize;
    let mut conv = Vec::with_capacity(nconv.min(64));
    for _ in 0..nconv {
        conv.push(ConvSpec::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize));
    }
    let ndense = r.u32()? as usize;
    let mut dense = Vec::with_capacity(ndense.min(64));
    for _ in 0..ndense {
        dense.push(r.u32()? as usize);
    }
    let arch =
        Architecture::new(input_side, conv, dense).map_err(|e| Error::format(format!("invalid architecture: {e}")))?;
    let n = r.u64()? as usize;
    if n != arch.param_count() {
        return Err(Error::format(format!(
            "parameter count {n} does not match architecture ({})",
            arch.param_count()
        )));
    }
    let params = r.f64s(n)?;
    let mut m = Model::from_params(arch, params)?;
    let has_adam = r.u8()?;
    let t = r.u64()?;
    m.adam = match has_adam {
        0 => AdamState {
            t,
            ..AdamState::default()
        },
        1 => AdamState {
            m: r.f64s(n)?,
            v: r.f64s(n)?,
            t,
        },
        f => return Err(Error::format(format!("bad optimizer flag {f}"))),
    };
    r.finish()?;
    Ok(m)
}

pub fn write_model(w: &mut impl Write, m: &Model) -> Result<()> {
    w.write_all(&encode_model(m))?;
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<Model> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_model(&bytes)
}

pub fn save_model(path: &Path, m: &Model) -> Result<()> {
    atomic_write(path, &encode_model(m))
}

pub fn load_model(path: &Path) -> Result<Model> {
    decode_model(&std::fs::read(path)?)
}
