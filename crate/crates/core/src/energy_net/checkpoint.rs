//! `EBMW1` parameter checkpoints.
//!
//! Layout (little-endian): magic `EBMW1`; architecture descriptor
//! (`u8` conditioning, `u8` noise scaling, `u32` stem width, `u32` stage
//! count, then per stage `u32` width, `u32` blocks, `u8` downsample);
//! `u32` tensor count; then per tensor `u32` name length, UTF-8 name,
//! `u32` rank, `u32` dims and `f64` values.
//!
//! Parameters come first in canonical order, followed by the power-iteration
//! vectors (`<weight>.sn_u`) and any extra named tensors (trainer state).

use std::io::{Read, Write};
use std::path::Path;

use super::{Architecture, Conditioning, EnergyParams, Stage};
use crate::error::{Error, Result};
use crate::io::{atomic_write, Reader};

const MAGIC: &[u8; 5] = b"EBMW1";
const SN_SUFFIX: &str = ".sn_u";

/// A tensor stored alongside the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(name: impl Into<String>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape: vec![data.len()],
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: EnergyParams,
    pub extras: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn extra(&self, name: &str) -> Option<&NamedTensor> {
        self.extras.iter().find(|t| t.name == name)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("value {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len())?;
    for &d in shape {
        put_u32(out, d)?;
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode(params: &EnergyParams, extras: &[NamedTensor]) -> Result<Vec<u8>> {
    let arch = params.arch();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(match arch.conditioning {
        Conditioning::Unconditional => 0,
        Conditioning::NoiseChannel => 1,
    });
    out.push(arch.noise_scaled as u8);
    put_u32(&mut out, arch.stem_width)?;
    put_u32(&mut out, arch.stages.len())?;
    for s in &arch.stages {
        put_u32(&mut out, s.width)?;
        put_u32(&mut out, s.blocks)?;
        out.push(s.downsample as u8);
    }
    let n_sn = params.power_vectors().iter().flatten().count();
    put_u32(&mut out, params.tensors().len() + n_sn + extras.len())?;
    for (spec, t) in params.specs().iter().zip(params.tensors()) {
        put_tensor(&mut out, &spec.name, &spec.shape, t)?;
    }
    for (spec, u) in params.specs().iter().zip(params.power_vectors()) {
        if let Some(u) = u {
            put_tensor(&mut out, &format!("{}{SN_SUFFIX}", spec.name), &[u.len()], u)?;
        }
    }
    for e in extras {
        if e.shape.iter().product::<usize>() != e.data.len() {
            return Err(Error::Format(format!("extra tensor {} has inconsistent shape", e.name)));
        }
        put_tensor(&mut out, &e.name, &e.shape, &e.data)?;
    }
    Ok(out)
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &EnergyParams, extras: &[NamedTensor]) -> Result<()> {
    w.write_all(&encode(params, extras)?)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn flag(b: u8, what: &str) -> Result<bool> {
    match b {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::Format(format!("bad {what} flag {b}"))),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let conditioning = match r.u8()? {
        0 => Conditioning::Unconditional,
        1 => Conditioning::NoiseChannel,
        c => return Err(Error::Format(format!("unknown conditioning code {c}"))),
    };
    let noise_scaled = flag(r.u8()?, "noise scaling")?;
    let stem_width = r.u32()? as usize;
    let n_stages = r.u32()? as usize;
    let mut stages = Vec::new();
    for _ in 0..n_stages {
        let width = r.u32()? as usize;
        let blocks = r.u32()? as usize;
        let downsample = flag(r.u8()?, "downsample")?;
        stages.push(Stage {
            width,
            blocks,
            downsample,
        });
    }
    let arch = Architecture {
        conditioning,
        noise_scaled,
        stem_width,
        stages,
    };
    arch.validate().map_err(|e| Error::Format(format!("bad architecture: {e}")))?;
    let template = EnergyParams::zeros(&arch)?;
    let specs = template.specs();
    let mut tensors: Vec<Option<Vec<f64>>> = vec![None; specs.len()];
    let mut sn_u: Vec<Option<Vec<f64>>> = vec![None; specs.len()];
    let mut extras = Vec::new();

    let count = r.u32()? as usize;
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?.to_vec())
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
        let data = r.f64s(n)?;
        if let Some(i) = specs.iter().position(|s| s.name == name) {
            if shape != specs[i].shape {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {shape:?}, architecture expects {:?}",
                    specs[i].shape
                )));
            }
            tensors[i] = Some(data);
        } else if let Some(i) = name
            .strip_suffix(SN_SUFFIX)
            .and_then(|base| specs.iter().position(|s| s.name == base && s.normalized))
        {
            sn_u[i] = Some(data);
        } else {
            extras.push(NamedTensor { name, shape, data });
        }
    }
    r.finish()?;
    let tensors = tensors
        .into_iter()
        .zip(specs)
        .map(|(t, s)| t.ok_or_else(|| Error::Format(format!("missing tensor {}", s.name))))
        .collect::<Result<Vec<_>>>()?;
    // Checkpoints without power vectors fall back to the zero-params default.
    let sn_u = sn_u
        .into_iter()
        .zip(template.power_vectors())
        .map(|(u, d)| u.or_else(|| d.clone()))
        .collect();
    let params = EnergyParams::from_parts(&arch, tensors, sn_u).map_err(|e| Error::Format(e.to_string()))?;
    Ok(Checkpoint { params, extras })
}

pub fn save_checkpoint(path: &Path, params: &EnergyParams, extras: &[NamedTensor]) -> Result<()> {
    atomic_write(path, &encode(params, extras)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    decode(&bytes)
}
