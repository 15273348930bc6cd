//! Capture-file codec for the beamforming-feedback (`0xBB`) record format.
//!
//! A capture is a flat sequence of records:
//!
//! ```text
//! field_len : u16 big-endian   (counts the code byte plus the payload)
//! code      : u8
//! payload   : field_len - 1 bytes
//! ```
//!
//! A CSI record (code `0xBB`) carries a 20-byte little-endian header followed
//! by the bit-packed CSI matrix:
//!
//! | bytes | field            |
//! |-------|------------------|
//! | 0..4  | timestamp_low    |
//! | 4..6  | bfee_count       |
//! | 6..8  | reserved         |
//! | 8     | nrx              |
//! | 9     | ntx              |
//! | 10-12 | rssi_a/b/c       |
//! | 13    | noise (i8)       |
//! | 14    | agc              |
//! | 15    | antenna_sel      |
//! | 16..18| len              |
//! | 18..20| rate             |
//!
//! The CSI bits hold, per subcarrier, 3 skipped bits and then one signed
//! 8-bit real and one signed 8-bit imaginary part per antenna pair (pair `j`
//! is `tx = j % ntx`, `rx = j / ntx`). Bits are consumed least-significant
//! first within each byte.

use std::fmt::Write as _;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::csi::{
    ActivityLabel, ComplexGain, CsiError, CsiMatrix, CsiPacket, CsiSequence, SceneLabel,
    NUM_SUBCARRIERS,
};

/// Record code of a beamforming (CSI) record.
pub const BFEE_CODE: u8 = 0xBB;
/// Bytes of the fixed bfee header preceding the CSI bits.
pub const BFEE_HEADER_LEN: usize = 20;
/// Largest payload a record can carry.
pub const MAX_PAYLOAD: usize = 65534;
/// Noise value meaning "not reported".
pub const NOISE_SENTINEL: i8 = -127;
/// Noise floor assumed when the NIC reports [`NOISE_SENTINEL`].
pub const DEFAULT_NOISE_FLOOR_DBM: f64 = -92.0;
/// Header of the label sidecar CSV.
pub const LABELS_HEADER: &str = "start_packet,end_packet,activity,subject,scene";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("truncated record at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("invalid record length {field_len} at byte offset {offset}")]
    Oversize { offset: u64, field_len: u16 },
    #[error("record code {code:#04x} is not a CSI record")]
    NotBeamforming { code: u8 },
    #[error("CSI record payload of {len} bytes is shorter than the {BFEE_HEADER_LEN}-byte header")]
    ShortHeader { len: usize },
    #[error("declared CSI length {declared} does not match {expected} for ntx={ntx} nrx={nrx}")]
    LengthMismatch {
        declared: usize,
        expected: usize,
        ntx: u8,
        nrx: u8,
    },
    #[error("unsupported antenna configuration ntx={ntx} nrx={nrx}")]
    UnsupportedDimension { ntx: u8, nrx: u8 },
    #[error("CSI payload underflow: need {needed} bits, have {available}")]
    Underflow { needed: usize, available: usize },
    #[error("invalid antenna permutation {0:?}")]
    InvalidPermutation([u8; 3]),
    #[error("cannot scale CSI with zero total power")]
    DegeneratePower,
    #[error("label sidecar line {line}: {msg}")]
    Labels { line: usize, msg: String },
    #[error(transparent)]
    Csi(#[from] CsiError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One framed record of a capture file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub code: u8,
    pub payload: Vec<u8>,
}

/// Sequential record reader. Stops after the first error.
pub struct RecordReader<R> {
    inner: R,
    offset: u64,
    done: bool,
}

/// Iterates the records of a capture stream.
pub fn read_records<R: Read>(inner: R) -> RecordReader<R> {
    RecordReader {
        inner,
        offset: 0,
        done: false,
    }
}

impl<R: Read> RecordReader<R> {
    /// Byte offset of the next record.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn fill(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        Ok(got)
    }

    fn next_record(&mut self) -> Result<Option<RawRecord>, IngestError> {
        let start = self.offset;
        let mut len = [0u8; 2];
        match self.fill(&mut len)? {
            0 => return Ok(None),
            2 => {}
            _ => return Err(IngestError::Truncated { offset: start }),
        }
        let field_len = u16::from_be_bytes(len);
        if field_len == 0 {
            return Err(IngestError::Oversize {
                offset: start,
                field_len,
            });
        }
        let mut body = vec![0u8; field_len as usize];
        if self.fill(&mut body)? != body.len() {
            return Err(IngestError::Truncated { offset: start });
        }
        self.offset = start + 2 + field_len as u64;
        let code = body[0];
        body.remove(0);
        Ok(Some(RawRecord {
            code,
            payload: body,
        }))
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<RawRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Decoded fixed header of a CSI record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BfeeFields {
    pub timestamp_low: u32,
    pub bfee_count: u16,
    pub nrx: u8,
    pub ntx: u8,
    pub rssi_a: u8,
    pub rssi_b: u8,
    pub rssi_c: u8,
    pub noise: i8,
    pub agc: u8,
    pub antenna_sel: u8,
    pub len: u16,
    pub rate: u16,
    pub csi_bits: Vec<u8>,
}

/// Bytes of packed CSI for an `ntx × nrx` link.
pub fn expected_csi_len(ntx: usize, nrx: usize) -> usize {
    (NUM_SUBCARRIERS * (nrx * ntx * 8 * 2 + 3)).div_ceil(8)
}

fn csi_bit_count(ntx: usize, nrx: usize) -> usize {
    NUM_SUBCARRIERS * (3 + 16 * ntx * nrx)
}

impl BfeeFields {
    pub fn parse(payload: &[u8]) -> Result<Self, IngestError> {
        if payload.len() < BFEE_HEADER_LEN {
            return Err(IngestError::ShortHeader { len: payload.len() });
        }
        let u16le = |i: usize| u16::from_le_bytes([payload[i], payload[i + 1]]);
        let nrx = payload[8];
        let ntx = payload[9];
        if !(1..=3).contains(&ntx) || !(1..=3).contains(&nrx) {
            return Err(IngestError::UnsupportedDimension { ntx, nrx });
        }
        let len = u16le(16);
        let expected = expected_csi_len(ntx as usize, nrx as usize);
        if len as usize != expected {
            return Err(IngestError::LengthMismatch {
                declared: len as usize,
                expected,
                ntx,
                nrx,
            });
        }
        let bits = &payload[BFEE_HEADER_LEN..];
        if bits.len() < expected {
            return Err(IngestError::Underflow {
                needed: csi_bit_count(ntx as usize, nrx as usize),
                available: bits.len() * 8,
            });
        }
        Ok(Self {
            timestamp_low: u32::from_le_bytes([payload[0], payload[1], payload[2], payload[3]]),
            bfee_count: u16le(4),
            nrx,
            ntx,
            rssi_a: payload[10],
            rssi_b: payload[11],
            rssi_c: payload[12],
            noise: payload[13] as i8,
            agc: payload[14],
            antenna_sel: payload[15],
            len,
            rate: u16le(18),
            csi_bits: bits[..expected].to_vec(),
        })
    }

    /// Serializes the header followed by `csi_bits`.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BFEE_HEADER_LEN + self.csi_bits.len());
        out.extend_from_slice(&self.timestamp_low.to_le_bytes());
        out.extend_from_slice(&self.bfee_count.to_le_bytes());
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&[
            self.nrx,
            self.ntx,
            self.rssi_a,
            self.rssi_b,
            self.rssi_c,
            self.noise as u8,
            self.agc,
            self.antenna_sel,
        ]);
        out.extend_from_slice(&self.len.to_le_bytes());
        out.extend_from_slice(&self.rate.to_le_bytes());
        out.extend_from_slice(&self.csi_bits);
        out
    }
}

#[inline]
fn read_bits8(bits: &[u8], pos: usize) -> Option<u8> {
    let byte = pos / 8;
    let shift = pos % 8;
    let lo = *bits.get(byte)? as u16;
    if shift == 0 {
        return Some(lo as u8);
    }
    let hi = *bits.get(byte + 1)? as u16;
    Some(((lo >> shift) | (hi << (8 - shift))) as u8)
}

#[inline]
fn write_bits8(bits: &mut [u8], pos: usize, v: u8) {
    let byte = pos / 8;
    let shift = pos % 8;
    bits[byte] |= v << shift;
    if shift != 0 {
        bits[byte + 1] |= v >> (8 - shift);
    }
}

/// Decodes the bit-packed CSI of an `ntx × nrx` link into a matrix in NIC antenna order.
pub fn unpack_csi_payload(bits: &[u8], ntx: usize, nrx: usize) -> Result<CsiMatrix, IngestError> {
    if !(1..=3).contains(&ntx) || !(1..=3).contains(&nrx) {
        return Err(IngestError::UnsupportedDimension {
            ntx: ntx as u8,
            nrx: nrx as u8,
        });
    }
    let needed = csi_bit_count(ntx, nrx);
    let underflow = || IngestError::Underflow {
        needed,
        available: bits.len() * 8,
    };
    if bits.len() * 8 < needed {
        return Err(underflow());
    }
    let mut m = CsiMatrix::zeros(ntx, nrx)?;
    let mut pos = 0usize;
    for sub in 0..NUM_SUBCARRIERS {
        pos += 3;
        for j in 0..ntx * nrx {
            let re = read_bits8(bits, pos).ok_or_else(underflow)? as i8;
            let im = read_bits8(bits, pos + 8).ok_or_else(underflow)? as i8;
            pos += 16;
            m.set(j % ntx, j / ntx, sub, ComplexGain::new(re as f64, im as f64))?;
        }
    }
    Ok(m)
}

/// Nearest integer, clamped to `[-127, 127]`.
pub fn quantize(x: f64) -> i8 {
    if x.is_nan() {
        return 0;
    }
    x.round().clamp(-127.0, 127.0) as i8
}

/// Packs a matrix (already in NIC antenna order) into CSI bits, quantizing every component.
pub fn pack_csi_payload(m: &CsiMatrix) -> Vec<u8> {
    let (ntx, nrx) = (m.ntx(), m.nrx());
    let mut bits = vec![0u8; expected_csi_len(ntx, nrx)];
    let mut pos = 0usize;
    for sub in 0..NUM_SUBCARRIERS {
        pos += 3;
        for j in 0..ntx * nrx {
            let g = m.at(j % ntx, j / ntx, sub);
            write_bits8(&mut bits, pos, quantize(g.re) as u8);
            write_bits8(&mut bits, pos + 8, quantize(g.im) as u8);
            pos += 16;
        }
    }
    bits
}

/// Splits `antenna_sel` into its three 2-bit fields.
pub fn decode_antenna_sel(antenna_sel: u8) -> [u8; 3] {
    [antenna_sel & 3, (antenna_sel >> 2) & 3, (antenna_sel >> 4) & 3]
}

pub fn encode_antenna_sel(perm: [u8; 3]) -> u8 {
    (perm[0] & 3) | ((perm[1] & 3) << 2) | ((perm[2] & 3) << 4)
}

fn check_permutation(perm: [u8; 3], nrx: usize) -> Result<(), IngestError> {
    let mut seen = [false; 3];
    for &p in &perm[..nrx] {
        let p = p as usize;
        if p >= nrx || seen[p] {
            return Err(IngestError::InvalidPermutation(perm));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Restores physical receive-antenna order: NIC slot `r` moves to slot `perm[r]`.
pub fn apply_antenna_permutation(m: &CsiMatrix, antenna_sel: u8) -> Result<CsiMatrix, IngestError> {
    let perm = decode_antenna_sel(antenna_sel);
    check_permutation(perm, m.nrx())?;
    let mut out = CsiMatrix::zeros(m.ntx(), m.nrx())?;
    for tx in 0..m.ntx() {
        for rx in 0..m.nrx() {
            for sub in 0..NUM_SUBCARRIERS {
                out.set(tx, perm[rx] as usize, sub, m.at(tx, rx, sub))?;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`apply_antenna_permutation`]: physical order back to NIC order.
fn unapply_antenna_permutation(m: &CsiMatrix, perm: [u8; 3]) -> Result<CsiMatrix, IngestError> {
    check_permutation(perm, m.nrx())?;
    let mut out = CsiMatrix::zeros(m.ntx(), m.nrx())?;
    for tx in 0..m.ntx() {
        for rx in 0..m.nrx() {
            for sub in 0..NUM_SUBCARRIERS {
                out.set(tx, rx, sub, m.at(tx, perm[rx] as usize, sub))?;
            }
        }
    }
    Ok(out)
}

/// Decodes a CSI record. The timestamp is the raw 32-bit value; see [`read_capture`] for unwrapping.
pub fn parse_bfee(r: &RawRecord) -> Result<CsiPacket, IngestError> {
    if r.code != BFEE_CODE {
        return Err(IngestError::NotBeamforming { code: r.code });
    }
    let f = BfeeFields::parse(&r.payload)?;
    let nic_order = unpack_csi_payload(&f.csi_bits, f.ntx as usize, f.nrx as usize)?;
    let csi = apply_antenna_permutation(&nic_order, f.antenna_sel)?;
    Ok(CsiPacket {
        timestamp_us: f.timestamp_low as u64,
        rssi: [f.rssi_a, f.rssi_b, f.rssi_c],
        noise_dbm: f.noise,
        agc: f.agc,
        permutation: decode_antenna_sel(f.antenna_sel),
        rate: f.rate,
        csi,
    })
}

fn dbinv(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Combined RSSI of all reporting antennas, in dBm.
pub fn total_rss_dbm(p: &CsiPacket) -> Option<f64> {
    let lin: f64 = p.rssi.iter().filter(|&&r| r != 0).map(|&r| dbinv(r as f64)).sum();
    if lin <= 0.0 {
        return None;
    }
    Some(10.0 * lin.log10() - 44.0 - p.agc as f64)
}

/// Rescales the CSI so its total power equals `SNR · (nrx·ntx·30)`.
pub fn scale_csi(p: &CsiPacket) -> Result<CsiMatrix, IngestError> {
    let power = p.csi.total_power();
    if power <= 0.0 {
        return Err(IngestError::DegeneratePower);
    }
    let rss = total_rss_dbm(p).ok_or(IngestError::DegeneratePower)?;
    let noise = if p.noise_dbm == NOISE_SENTINEL {
        DEFAULT_NOISE_FLOOR_DBM
    } else {
        p.noise_dbm as f64
    };
    let cells = (p.csi.ntx() * p.csi.nrx() * NUM_SUBCARRIERS) as f64;
    let k = (dbinv(rss - noise) * cells / power).sqrt();
    Ok(p.csi.map(|g| g.scale(k))?)
}

/// Builds the CSI record for one packet.
pub fn encode_bfee(p: &CsiPacket, bfee_count: u16) -> Result<RawRecord, IngestError> {
    let nic_order = unapply_antenna_permutation(&p.csi, p.permutation)?;
    let csi_bits = pack_csi_payload(&nic_order);
    let fields = BfeeFields {
        timestamp_low: (p.timestamp_us & 0xFFFF_FFFF) as u32,
        bfee_count,
        nrx: p.csi.nrx() as u8,
        ntx: p.csi.ntx() as u8,
        rssi_a: p.rssi[0],
        rssi_b: p.rssi[1],
        rssi_c: p.rssi[2],
        noise: p.noise_dbm,
        agc: p.agc,
        antenna_sel: encode_antenna_sel(p.permutation),
        len: csi_bits.len() as u16,
        rate: p.rate,
        csi_bits,
    };
    Ok(RawRecord {
        code: BFEE_CODE,
        payload: fields.to_payload(),
    })
}

pub fn write_record<W: Write>(w: &mut W, r: &RawRecord) -> io::Result<()> {
    assert!(r.payload.len() <= MAX_PAYLOAD, "record payload too large");
    w.write_all(&((r.payload.len() + 1) as u16).to_be_bytes())?;
    w.write_all(&[r.code])?;
    w.write_all(&r.payload)
}

/// Serializes packets as consecutive CSI records. Components are quantized with [`quantize`].
pub fn write_packets<W: Write>(w: &mut W, packets: &[CsiPacket]) -> Result<(), IngestError> {
    for (i, p) in packets.iter().enumerate() {
        write_record(w, &encode_bfee(p, i as u16)?)?;
    }
    Ok(())
}

/// Serializes a whole sequence to capture bytes.
pub fn write_records(seq: &CsiSequence) -> Result<Vec<u8>, IngestError> {
    let mut out = Vec::new();
    write_packets(&mut out, seq.packets())?;
    Ok(out)
}

/// Reads every CSI record of a capture, skipping unknown codes and unwrapping timestamps.
pub fn read_capture<R: Read>(r: R) -> Result<Vec<CsiPacket>, IngestError> {
    let mut out = Vec::new();
    let mut wraps = 0u64;
    let mut prev_low: Option<u64> = None;
    for rec in read_records(r) {
        let rec = rec?;
        if rec.code != BFEE_CODE {
            continue;
        }
        let mut p = parse_bfee(&rec)?;
        let low = p.timestamp_us;
        if let Some(prev) = prev_low {
            if low < prev {
                wraps += 1;
            }
        }
        prev_low = Some(low);
        p.timestamp_us = (wraps << 32) + low;
        out.push(p);
    }
    Ok(out)
}

/// One row of a `<capture>.labels.csv` sidecar. Packet range is `[start_packet, end_packet)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub start_packet: usize,
    pub end_packet: usize,
    pub activity: ActivityLabel,
    pub subject: String,
    pub scene: SceneLabel,
}

pub fn parse_labels(text: &str) -> Result<Vec<LabelRow>, IngestError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == LABELS_HEADER => {}
        Some((i, h)) => {
            return Err(IngestError::Labels {
                line: i + 1,
                msg: format!("expected header '{LABELS_HEADER}', found '{}'", h.trim()),
            })
        }
        None => {
            return Err(IngestError::Labels {
                line: 1,
                msg: "empty label file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let bad = |msg: String| IngestError::Labels { line: i + 1, msg };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(bad(format!("expected 5 columns, found {}", cols.len())));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("bad packet index '{s}': {e}")));
        let start_packet = num(cols[0])?;
        let end_packet = num(cols[1])?;
        if end_packet <= start_packet {
            return Err(bad(format!("empty range {start_packet}..{end_packet}")));
        }
        rows.push(LabelRow {
            start_packet,
            end_packet,
            activity: cols[2].parse().map_err(|e: CsiError| bad(e.to_string()))?,
            subject: cols[3].to_string(),
            scene: cols[4].parse().map_err(|e: CsiError| bad(e.to_string()))?,
        });
    }
    Ok(rows)
}

pub fn format_labels(rows: &[LabelRow]) -> String {
    let mut s = String::from(LABELS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.start_packet, r.end_packet, r.activity, r.subject, r.scene
        );
    }
    s
}

/// Cuts a parsed capture into labelled sequences.
pub fn sequences_from_capture(
    packets: &[CsiPacket],
    labels: &[LabelRow],
    fs_hz: f64,
) -> Result<Vec<CsiSequence>, IngestError> {
    labels
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.end_packet > packets.len() {
                return Err(IngestError::Labels {
                    line: i + 2,
                    msg: format!(
                        "range ends at packet {} but capture has {}",
                        row.end_packet,
                        packets.len()
                    ),
                });
            }
            Ok(CsiSequence::new(
                fs_hz,
                packets[row.start_packet..row.end_packet].to_vec(),
                row.activity,
                row.subject.clone(),
                row.scene,
            )?)
        })
        .collect()
}
