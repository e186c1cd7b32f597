//! Interferogram stacks, elite masks, and their on-disk formats.
//!
//! A stack file (`.tsstack`) is a single UTF-8 JSON header line terminated by
//! `\n`, followed by a raw payload of little-endian IEEE-754 32-bit values in
//! `(epoch, row, col)` row-major order, bands concatenated
//! amplitude → phase → coherence.
//!
//! A mask file (`.mask`) uses the same header style with
//! `"bands": ["elite", "valid"]` and an unsigned 8-bit `{0, 1}` payload.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

const STACK_BANDS: [&str; 3] = ["amplitude", "phase", "coherence"];
const MASK_BANDS: [&str; 2] = ["elite", "valid"];

/// A co-registered time series of interferograms over a fixed pixel grid.
///
/// Each band holds `epochs * height * width` values in `(epoch, row, col)`
/// row-major order. Values are stored at 32-bit precision (the file format's
/// width); all statistics downstream accumulate in 64-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferogramStack {
    pub epochs: usize,
    pub height: usize,
    pub width: usize,
    /// Backscatter amplitude, nonnegative.
    pub amplitude: Vec<f32>,
    /// Wrapped interferometric phase in `[-π, π)` (at f32 granularity).
    pub phase: Vec<f32>,
    /// Interferometric coherence in `[0, 1]`.
    pub coherence: Vec<f32>,
    /// Optional provenance entries carried in the file header (for example
    /// the generator identity and seed of a synthetic scene).
    pub meta: BTreeMap<String, String>,
}

impl InterferogramStack {
    /// Allocates an all-zero stack. Zero phase and coherence are valid;
    /// the caller fills in real content before writing.
    pub fn zeros(epochs: usize, height: usize, width: usize) -> Result<Self> {
        let stack = Self {
            epochs,
            height,
            width,
            amplitude: vec![0.0; epochs * height * width],
            phase: vec![0.0; epochs * height * width],
            coherence: vec![0.0; epochs * height * width],
            meta: BTreeMap::new(),
        };
        stack.check_dims()?;
        Ok(stack)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Flat index of `(epoch, row, col)` within a band.
    #[inline]
    pub fn index(&self, t: usize, r: usize, c: usize) -> usize {
        (t * self.height + r) * self.width + c
    }

    fn check_dims(&self) -> Result<()> {
        if self.epochs < 2 {
            return Err(Error::InvalidStack(format!(
                "epoch count must be >= 2, got {}",
                self.epochs
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidStack(format!(
                "empty pixel grid {}x{}",
                self.height, self.width
            )));
        }
        let n = self.epochs * self.height * self.width;
        for (name, band) in [
            ("amplitude", &self.amplitude),
            ("phase", &self.phase),
            ("coherence", &self.coherence),
        ] {
            if band.len() != n {
                return Err(Error::InvalidStack(format!(
                    "{name} band holds {} values, expected {n}",
                    band.len()
                )));
            }
        }
        Ok(())
    }

    /// Checks every stack invariant (dimensions and per-band value ranges).
    pub fn validate(&self) -> Result<()> {
        self.check_dims()?;
        for (i, &a) in self.amplitude.iter().enumerate() {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::InvalidStack(format!(
                    "amplitude[{i}] = {a} is not a finite nonnegative value"
                )));
            }
        }
        // The wrapped-phase range is checked at f32 granularity: -π32 stands
        // in for -π, and +π32 is excluded (π wraps to -π).
        let pi = std::f32::consts::PI;
        for (i, &p) in self.phase.iter().enumerate() {
            if !p.is_finite() || !(-pi..pi).contains(&p) {
                return Err(Error::InvalidStack(format!(
                    "phase[{i}] = {p} outside [-pi, pi)"
                )));
            }
        }
        for (i, &g) in self.coherence.iter().enumerate() {
            if !g.is_finite() || !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidStack(format!(
                    "coherence[{i}] = {g} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Per-pixel selection output: `elite` marks selected pixels, `valid` marks
/// pixels that carry data at all (padding and masked-out regions are invalid).
///
/// Invariant: `elite[i]` implies `valid[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliteMask {
    pub height: usize,
    pub width: usize,
    pub elite: Vec<bool>,
    pub valid: Vec<bool>,
}

impl EliteMask {
    /// An all-valid, all-non-elite mask.
    pub fn blank(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            elite: vec![false; height * width],
            valid: vec![true; height * width],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidMask(format!(
                "empty pixel grid {}x{}",
                self.height, self.width
            )));
        }
        let n = self.height * self.width;
        if self.elite.len() != n || self.valid.len() != n {
            return Err(Error::InvalidMask(format!(
                "band lengths {}/{} do not match {n} pixels",
                self.elite.len(),
                self.valid.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| self.elite[i] && !self.valid[i]) {
            return Err(Error::InvalidMask(format!(
                "pixel {i} is elite but not valid"
            )));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        self.elite.iter().filter(|&&e| e).count()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

#[derive(Serialize, Deserialize)]
struct StackHeader {
    version: u32,
    n_t: usize,
    h: usize,
    w: usize,
    bands: Vec<String>,
    endian: String,
    dtype: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct MaskHeader {
    version: u32,
    h: usize,
    w: usize,
    bands: Vec<String>,
    endian: String,
    dtype: String,
}

/// Reads the header line (everything up to and including the first `\n`).
pub(crate) fn read_header_line(reader: &mut impl Read) -> Result<String> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match reader.read(&mut byte)? {
            0 => {
                return Err(Error::MalformedHeader(
                    "no newline-terminated header line found".into(),
                ))
            }
            _ => {
                if byte[0] == b'\n' {
                    break;
                }
                line.push(byte[0]);
                if line.len() > 1 << 20 {
                    return Err(Error::MalformedHeader("header line exceeds 1 MiB".into()));
                }
            }
        }
    }
    String::from_utf8(line).map_err(|e| Error::MalformedHeader(format!("header is not UTF-8: {e}")))
}

/// Parses JSON and checks the `version` field before any schema decoding, so
/// a future-version header reports a version mismatch rather than a schema
/// error.
pub(crate) fn parse_header<T: for<'de> Deserialize<'de>>(line: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| Error::MalformedHeader(format!("header is not valid JSON: {e}")))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::MalformedHeader("missing integer `version` field".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::MalformedHeader(format!("bad header: {e}")))
}

fn check_common(endian: &str, dtype: &str, expect_dtype: &str, bands: &[String], expect: &[&str]) -> Result<()> {
    if endian != "little" {
        return Err(Error::MalformedHeader(format!("unsupported endian \"{endian}\"")));
    }
    if dtype != expect_dtype {
        return Err(Error::MalformedHeader(format!(
            "unsupported dtype \"{dtype}\" (expected \"{expect_dtype}\")"
        )));
    }
    if bands != expect {
        return Err(Error::MalformedHeader(format!("unexpected band list {bands:?}")));
    }
    Ok(())
}

/// Writes a stack to `path` in the `.tsstack` format. The stack is validated
/// first; re-writing a stack read from disk produces byte-identical output.
pub fn write_stack(stack: &InterferogramStack, path: impl AsRef<Path>) -> Result<()> {
    stack.validate()?;
    let header = StackHeader {
        version: FORMAT_VERSION,
        n_t: stack.epochs,
        h: stack.height,
        w: stack.width,
        bands: STACK_BANDS.iter().map(|s| s.to_string()).collect(),
        endian: "little".into(),
        dtype: "f32".into(),
        meta: stack.meta.clone(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for band in [&stack.amplitude, &stack.phase, &stack.coherence] {
        write_f32_le(&mut out, band)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `.tsstack` file, validating header, payload size, and stack
/// invariants.
pub fn read_stack(path: impl AsRef<Path>) -> Result<InterferogramStack> {
    let mut reader = BufReader::new(File::open(path)?);
    let line = read_header_line(&mut reader)?;
    let header: StackHeader = parse_header(&line)?;
    check_common(&header.endian, &header.dtype, "f32", &header.bands, &STACK_BANDS)?;
    if header.n_t < 2 {
        return Err(Error::MalformedHeader(format!(
            "header declares n_t = {}, need at least 2 epochs",
            header.n_t
        )));
    }
    if header.h == 0 || header.w == 0 {
        return Err(Error::MalformedHeader(format!(
            "header declares empty grid {}x{}",
            header.h, header.w
        )));
    }
    let band_len = header
        .n_t
        .checked_mul(header.h)
        .and_then(|v| v.checked_mul(header.w))
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let expected_bytes = band_len as u64 * 3 * 4;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if (payload.len() as u64) < expected_bytes {
        return Err(Error::TruncatedPayload {
            expected: expected_bytes,
            found: payload.len() as u64,
        });
    }
    if (payload.len() as u64) > expected_bytes {
        return Err(Error::TrailingData {
            extra: payload.len() as u64 - expected_bytes,
        });
    }
    let mut bands = payload.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    let mut take = |n: usize| -> Vec<f32> { bands.by_ref().take(n).collect() };
    let stack = InterferogramStack {
        epochs: header.n_t,
        height: header.h,
        width: header.w,
        amplitude: take(band_len),
        phase: take(band_len),
        coherence: take(band_len),
        meta: header.meta,
    };
    stack.validate()?;
    Ok(stack)
}

/// Writes an elite mask to `path` in the `.mask` format.
pub fn write_mask(mask: &EliteMask, path: impl AsRef<Path>) -> Result<()> {
    mask.validate()?;
    let header = MaskHeader {
        version: FORMAT_VERSION,
        h: mask.height,
        w: mask.width,
        bands: MASK_BANDS.iter().map(|s| s.to_string()).collect(),
        endian: "little".into(),
        dtype: "u8".into(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for band in [&mask.elite, &mask.valid] {
        let bytes: Vec<u8> = band.iter().map(|&b| u8::from(b)).collect();
        out.write_all(&bytes)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `.mask` file, validating header, payload, and mask invariants.
pub fn read_mask(path: impl AsRef<Path>) -> Result<EliteMask> {
    let mut reader = BufReader::new(File::open(path)?);
    let line = read_header_line(&mut reader)?;
    let header: MaskHeader = parse_header(&line)?;
    check_common(&header.endian, &header.dtype, "u8", &header.bands, &MASK_BANDS)?;
    if header.h == 0 || header.w == 0 {
        return Err(Error::MalformedHeader(format!(
            "header declares empty grid {}x{}",
            header.h, header.w
        )));
    }
    let n = header.h * header.w;
    let expected_bytes = n as u64 * 2;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if (payload.len() as u64) < expected_bytes {
        return Err(Error::TruncatedPayload {
            expected: expected_bytes,
            found: payload.len() as u64,
        });
    }
    if (payload.len() as u64) > expected_bytes {
        return Err(Error::TrailingData {
            extra: payload.len() as u64 - expected_bytes,
        });
    }
    let decode = |bytes: &[u8]| -> Result<Vec<bool>> {
        bytes
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidMask(format!("byte value {other} is not 0 or 1"))),
            })
            .collect()
    };
    let mask = EliteMask {
        height: header.h,
        width: header.w,
        elite: decode(&payload[..n])?,
        valid: decode(&payload[n..])?,
    };
    mask.validate()?;
    Ok(mask)
}

fn write_f32_le(out: &mut impl Write, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_stack() -> InterferogramStack {
        let mut s = InterferogramStack::zeros(3, 2, 2).unwrap();
        for (i, v) in s.amplitude.iter_mut().enumerate() {
            *v = 1.0 + i as f32;
        }
        for (i, v) in s.phase.iter_mut().enumerate() {
            *v = -3.0 + 0.5 * i as f32;
        }
        for (i, v) in s.coherence.iter_mut().enumerate() {
            *v = (i as f32) / 12.0;
        }
        s.meta.insert("rng".into(), "chacha8".into());
        s
    }

    #[test]
    fn stack_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.tsstack");
        let p2 = dir.path().join("b.tsstack");
        let stack = small_stack();
        write_stack(&stack, &p1).unwrap();
        let back = read_stack(&p1).unwrap();
        assert_eq!(back, stack);
        write_stack(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn header_with_zero_epochs_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.tsstack");
        let mut f = File::create(&p).unwrap();
        f.write_all(
            br#"{"version":1,"n_t":0,"h":2,"w":2,"bands":["amplitude","phase","coherence"],"endian":"little","dtype":"f32"}"#,
        )
        .unwrap();
        f.write_all(b"\n").unwrap();
        match read_stack(&p) {
            Err(Error::MalformedHeader(_)) => {}
            other => panic!("expected malformed header, got {other:?}"),
        }
    }

    #[test]
    fn short_payload_reports_truncation_with_expected_byte_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsstack");
        let stack = small_stack();
        write_stack(&stack, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        // Expected payload size follows directly from the header dimensions.
        let expected = 3 * 2 * 2 * 3 * 4;
        match read_stack(&p) {
            Err(Error::TruncatedPayload { expected: e, found }) => {
                assert_eq!(e, expected);
                assert_eq!(found, expected - 5);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsstack");
        write_stack(&small_stack(), &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.extend_from_slice(&[0, 0, 0]);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_stack(&p), Err(Error::TrailingData { extra: 3 })));
    }

    #[test]
    fn future_version_is_a_version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.tsstack");
        let mut f = File::create(&p).unwrap();
        f.write_all(b"{\"version\":2,\"something\":\"else\"}\n").unwrap();
        assert!(matches!(
            read_stack(&p),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn out_of_range_coherence_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tsstack");
        let mut stack = small_stack();
        stack.coherence[0] = 1.5;
        assert!(matches!(write_stack(&stack, &p), Err(Error::InvalidStack(_))));
    }

    #[test]
    fn mask_round_trip_and_invariant() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mask");
        let mut mask = EliteMask::blank(3, 4);
        mask.elite[5] = true;
        mask.valid[7] = false;
        write_mask(&mask, &p).unwrap();
        assert_eq!(read_mask(&p).unwrap(), mask);

        mask.elite[7] = true; // elite but invalid
        assert!(matches!(write_mask(&mask, &p), Err(Error::InvalidMask(_))));
    }

    #[test]
    fn mask_payload_values_must_be_binary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mask");
        let mask = EliteMask::blank(2, 2);
        write_mask(&mask, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        let len = bytes.len();
        bytes[len - 1] = 7;
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_mask(&p), Err(Error::InvalidMask(_))));
    }
}
