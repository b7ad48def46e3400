//! Binary checkpoint: `"PCCM"`, version (u32 LE), architecture as
//! length-prefixed (u32 LE) UTF-8 JSON, then every parameter as f32 LE in
//! flat index order.

use std::io::{Read, Write};

use super::arch::ArchSpec;
use super::net::ModelParams;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PCCM";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<()> {
    let json = serde_json::to_vec(&params.arch).map_err(|e| Error::Config(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(4 * params.len());
    for v in &params.theta {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::domain("not a model checkpoint (bad magic)"));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::domain(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u32(&mut input)? as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let arch: ArchSpec =
        serde_json::from_slice(&json).map_err(|e| Error::domain(format!("bad architecture header: {e}")))?;
    arch.validate()?;
    let count = arch.param_count();
    let mut raw = vec![0u8; 4 * count];
    input.read_exact(&mut raw)?;
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::domain("trailing bytes after parameters"));
    }
    let theta = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    ModelParams::from_theta(&arch, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartnet::build_model;

    #[test]
    fn round_trip_rounds_to_f32() {
        let params = build_model(&ArchSpec::reduced(30, 3), 4).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"PCCM");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.arch, params.arch);
        for (a, b) in back.theta.iter().zip(&params.theta) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let json_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        assert_eq!(buf.len(), 12 + json_len + 4 * params.len());
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&b"PCCX\x01\0\0\0"[..]).is_err());
        let params = build_model(&ArchSpec::reduced(30, 3), 4).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        buf.pop();
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}
