//! `WIVINN01` checkpoints: config, parameter tensors, normalization statistics.

use std::collections::BTreeMap;

use wivi_core::binio::{BinError, ByteReader, ByteWriter};

use super::net::{Cnn, NetConfig, Winn};
use super::tensor::{Param, Scalar};
use super::NnError;

pub const NN_MAGIC: &[u8; 8] = b"WIVINN01";
pub const NN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Cnn = 1,
    Winn = 2,
}

fn write_config(w: &mut ByteWriter, c: &NetConfig) {
    w.u64(c.input_side as u64).u64(c.input_channels as u64).u32(c.blocks.len() as u32);
    for &b in &c.blocks {
        w.u64(b as u64);
    }
    w.u64(c.depth as u64)
        .u64(c.num_classes as u64)
        .f64(c.lr)
        .f64(c.weight_decay)
        .u64(c.epochs as u64)
        .u64(c.batch as u64)
        .u64(c.seed)
        .u64(c.winn_hidden as u64);
}

fn read_config(r: &mut ByteReader<'_>) -> Result<NetConfig, NnError> {
    let input_side = r.u64()? as usize;
    let input_channels = r.u64()? as usize;
    let nb = r.u32()? as usize;
    if nb > 64 {
        return Err(r.malformed(format!("{nb} stages")).into());
    }
    let blocks = (0..nb).map(|_| r.u64().map(|v| v as usize)).collect::<Result<_, _>>()?;
    let cfg = NetConfig {
        input_side,
        input_channels,
        blocks,
        depth: r.u64()? as usize,
        num_classes: r.u64()? as usize,
        lr: r.f64()?,
        weight_decay: r.f64()?,
        epochs: r.u64()? as usize,
        batch: r.u64()? as usize,
        seed: r.u64()?,
        winn_hidden: r.u64()? as usize,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_body<T: Scalar>(
    w: &mut ByteWriter,
    kind: NetKind,
    cfg: &NetConfig,
    params: &[&Param<T>],
    buffers: &[&Vec<T>],
    meta: &BTreeMap<String, String>,
) {
    w.bytes(NN_MAGIC).u32(NN_FORMAT_VERSION).u8(kind as u8);
    write_config(w, cfg);
    let as_f64 = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    w.u32(params.len() as u32);
    for p in params {
        w.f64s(&as_f64(&p.value));
    }
    w.u32(buffers.len() as u32);
    for b in buffers {
        w.f64s(&as_f64(b));
    }
    w.u32(meta.len() as u32);
    for (k, v) in meta {
        w.str(k).str(v);
    }
}

fn read_header(r: &mut ByteReader<'_>, want: NetKind) -> Result<NetConfig, NnError> {
    r.magic(NN_MAGIC)?;
    let version = r.u32()?;
    if version != NN_FORMAT_VERSION {
        return Err(BinError::UnsupportedVersion {
            expected: NN_FORMAT_VERSION,
            found: version,
        }
        .into());
    }
    let kind = r.u8()?;
    if kind != want as u8 {
        return Err(r.malformed(format!("checkpoint kind {kind}, expected {}", want as u8)).into());
    }
    read_config(r)
}

fn read_tensors<T: Scalar>(
    r: &mut ByteReader<'_>,
    mut slots: Vec<&mut Vec<T>>,
    what: &str,
) -> Result<(), NnError> {
    let n = r.u32()? as usize;
    if n != slots.len() {
        return Err(r.malformed(format!("{n} {what} tensors, architecture has {}", slots.len())).into());
    }
    for slot in slots.iter_mut() {
        let v = r.f64s()?;
        if v.len() != slot.len() {
            return Err(r.malformed(format!("{what} tensor of {} values, expected {}", v.len(), slot.len())).into());
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFinite);
        }
        for (d, s) in slot.iter_mut().zip(v) {
            *d = T::lit(s);
        }
    }
    Ok(())
}

fn read_meta(r: &mut ByteReader<'_>) -> Result<BTreeMap<String, String>, NnError> {
    let n = r.u32()? as usize;
    let mut meta = BTreeMap::new();
    for _ in 0..n {
        let k = r.str()?;
        meta.insert(k, r.str()?);
    }
    if r.remaining() != 0 {
        return Err(r.malformed("trailing bytes after checkpoint").into());
    }
    Ok(meta)
}

pub fn save_cnn<T: Scalar>(m: &Cnn<T>, meta: &BTreeMap<String, String>) -> Vec<u8> {
    let mut w = ByteWriter::new();
    let buffers: Vec<&Vec<T>> = m.backbone.norms().into_iter().flat_map(|n| n.buffers()).collect();
    write_body(&mut w, NetKind::Cnn, &m.config, &m.params(), &buffers, meta);
    w.into_inner()
}

pub fn load_cnn<T: Scalar>(bytes: &[u8]) -> Result<(Cnn<T>, BTreeMap<String, String>), NnError> {
    let mut r = ByteReader::new(bytes);
    let cfg = read_header(&mut r, NetKind::Cnn)?;
    let mut m = Cnn::new(&cfg)?;
    read_tensors(&mut r, m.params_mut().into_iter().map(|p| &mut p.value).collect(), "parameter")?;
    read_tensors(
        &mut r,
        m.backbone.norms_mut().into_iter().flat_map(|n| n.buffers_mut()).collect(),
        "statistics",
    )?;
    Ok((m, read_meta(&mut r)?))
}

pub fn save_winn<T: Scalar>(m: &Winn<T>, meta: &BTreeMap<String, String>) -> Vec<u8> {
    let mut w = ByteWriter::new();
    let buffers: Vec<&Vec<T>> = m.backbone.norms().into_iter().flat_map(|n| n.buffers()).collect();
    write_body(&mut w, NetKind::Winn, &m.config, &m.params(), &buffers, meta);
    w.into_inner()
}

pub fn load_winn<T: Scalar>(bytes: &[u8]) -> Result<(Winn<T>, BTreeMap<String, String>), NnError> {
    let mut r = ByteReader::new(bytes);
    let cfg = read_header(&mut r, NetKind::Winn)?;
    let mut m = Winn::new(&cfg)?;
    read_tensors(&mut r, m.params_mut().into_iter().map(|p| &mut p.value).collect(), "parameter")?;
    read_tensors(
        &mut r,
        m.backbone.norms_mut().into_iter().flat_map(|n| n.buffers_mut()).collect(),
        "statistics",
    )?;
    Ok((m, read_meta(&mut r)?))
}
