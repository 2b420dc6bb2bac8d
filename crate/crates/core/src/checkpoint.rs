//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | field          | type            |
//! |----------------|-----------------|
//! | magic          | `b"SNETCKPT"`   |
//! | version        | u32 (= 1)       |
//! | variant        | u32 (0 scaling, 1 baseline) |
//! | num_channels   | u32             |
//! | weight_length  | u32             |
//! | conv_kh, conv_kw | u32, u32      |
//! | num_filters    | u32, then that many u32 filter counts |
//! | activation     | u32 (0 relu, 1 identity) |
//! | num_classes    | u32             |
//! | shared_scaling | u32 (0/1)       |
//! | max_levels     | u32 (0 = all levels) |
//! | param_count    | u64             |
//! | params         | `param_count` f64 in [`ScalingNetParams::tensors`] order |

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ScalingNetConfig, ScalingNetParams, Variant};
use crate::scaling::Activation;

pub const MAGIC: &[u8; 8] = b"SNETCKPT";
pub const VERSION: u32 = 1;

fn push_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(params: &ScalingNetParams) -> Vec<u8> {
    let c = &params.config;
    let mut buf = Vec::with_capacity(64 + params.num_params() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    push_u32(&mut buf, matches!(params.variant, Variant::Baseline) as usize);
    push_u32(&mut buf, c.num_channels);
    push_u32(&mut buf, c.weight_length);
    push_u32(&mut buf, c.conv_kernel.0);
    push_u32(&mut buf, c.conv_kernel.1);
    push_u32(&mut buf, c.conv_filters.len());
    for &f in &c.conv_filters {
        push_u32(&mut buf, f);
    }
    buf.extend_from_slice(&c.activation.code().to_le_bytes());
    push_u32(&mut buf, c.num_classes);
    push_u32(&mut buf, c.shared_scaling as usize);
    push_u32(&mut buf, c.max_levels.unwrap_or(0));
    buf.extend_from_slice(&(params.num_params() as u64).to_le_bytes());
    for v in params.flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn err(&self, field: &str, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, field: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(field, "truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn usize(&mut self, field: &str) -> Result<usize> {
        self.u32(field).map(|v| v as usize)
    }
}

/// Decodes a checkpoint; `path` is only used in diagnostics.
pub fn decode(bytes: &[u8], path: &Path) -> Result<ScalingNetParams> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8, "magic")? != MAGIC {
        return Err(r.err("magic", "not a checkpoint file"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.err("version", format!("unsupported version {version}")));
    }
    let variant = match r.u32("variant")? {
        0 => Variant::Scaling,
        1 => Variant::Baseline,
        v => return Err(r.err("variant", format!("unknown code {v}"))),
    };
    let num_channels = r.usize("num_channels")?;
    let weight_length = r.usize("weight_length")?;
    let kh = r.usize("conv_kh")?;
    let kw = r.usize("conv_kw")?;
    let nf = r.usize("num_filters")?;
    if nf > 1024 {
        return Err(r.err("num_filters", format!("implausible count {nf}")));
    }
    let conv_filters = (0..nf)
        .map(|_| r.usize("conv_filters"))
        .collect::<Result<Vec<_>>>()?;
    let code = r.u32("activation")?;
    let activation =
        Activation::from_code(code).ok_or_else(|| r.err("activation", format!("unknown code {code}")))?;
    let num_classes = r.usize("num_classes")?;
    let shared_scaling = match r.u32("shared_scaling")? {
        0 => false,
        1 => true,
        v => return Err(r.err("shared_scaling", format!("invalid flag {v}"))),
    };
    let max_levels = match r.usize("max_levels")? {
        0 => None,
        n => Some(n),
    };
    let config = ScalingNetConfig {
        num_channels,
        weight_length,
        conv_kernel: (kh, kw),
        conv_filters,
        activation,
        num_classes,
        shared_scaling,
        max_levels,
    };
    config
        .validate()
        .map_err(|e| r.err("config", e.to_string()))?;
    let mut params = ScalingNetParams::init_variant(&config, variant, 0)?;
    let count = u64::from_le_bytes(r.take(8, "param_count")?.try_into().unwrap()) as usize;
    if count != params.num_params() {
        return Err(r.err(
            "param_count",
            format!("config implies {}, header says {count}", params.num_params()),
        ));
    }
    let payload = r.take(count * 8, "params")?;
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if r.pos != bytes.len() {
        return Err(r.err("params", format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    params.load_flat(&flat)?;
    Ok(params)
}

pub fn save(params: &ScalingNetParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ScalingNetParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
