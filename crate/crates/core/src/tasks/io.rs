//! Binary PGM/PPM, 16-bit PCM WAV and RAW-F64 readers and writers.

use std::fs;
use std::path::Path;

use super::SignalGrid;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalFormat {
    Pgm,
    Ppm,
    Wav,
    RawF64,
}

impl SignalFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "pgm" => Some(Self::Pgm),
            "ppm" => Some(Self::Ppm),
            "wav" => Some(Self::Wav),
            "raw" | "f64" | "inrb" => Some(Self::RawF64),
            _ => None,
        }
    }
}

pub const RAW_MAGIC: &[u8; 4] = b"INRB";

pub fn ingest(path: &Path, format: SignalFormat) -> Result<SignalGrid> {
    let bytes = fs::read(path)?;
    match format {
        SignalFormat::Pgm | SignalFormat::Ppm => decode_pnm(&bytes),
        SignalFormat::Wav => decode_wav(&bytes),
        SignalFormat::RawF64 => {
            let (shape, data) = decode_raw(&bytes)?;
            SignalGrid::new(shape, 1, data)
        }
    }
}

/// Writes `grid` in the given format; images are quantised to 8 bits and
/// audio to 16-bit PCM.
pub fn save(path: &Path, format: SignalFormat, grid: &SignalGrid) -> Result<()> {
    let bytes = match format {
        SignalFormat::Pgm | SignalFormat::Ppm => encode_pnm(grid)?,
        SignalFormat::Wav => encode_wav(grid.values(), grid.sample_rate.unwrap_or(16_000)),
        SignalFormat::RawF64 => {
            let mut shape = grid.shape().to_vec();
            if grid.channels() > 1 {
                shape.push(grid.channels());
            }
            encode_raw(&shape, grid.values())
        }
    };
    fs::write(path, bytes)?;
    Ok(())
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn token(&mut self) -> Result<&str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader("unexpected end of header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::MalformedHeader("non-ASCII header".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse().map_err(|_| Error::MalformedHeader(format!("bad {what} {tok:?}")))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<SignalGrid> {
    let mut h = Header { bytes, pos: 0 };
    let channels = match h.token()? {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::MalformedHeader(format!("unknown magic {other:?}"))),
    };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero image dimension".into()));
    }
    let sample_bytes = match maxval {
        1..=255 => 1,
        256..=65535 => 2,
        _ => return Err(Error::UnsupportedBitDepth(maxval as u32)),
    };
    // exactly one whitespace byte separates the header from the raster
    let start = h.pos + 1;
    let expected = width * height * channels * sample_bytes;
    let payload = bytes.get(start..).unwrap_or(&[]);
    if payload.len() < expected {
        return Err(Error::TruncatedPayload { expected, found: payload.len() });
    }
    let scale = maxval as f64;
    let data = if sample_bytes == 1 {
        payload[..expected].iter().map(|&b| b as f64 / scale).collect()
    } else {
        payload[..expected].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale).collect()
    };
    SignalGrid::new(vec![height, width], channels, data)
}

fn encode_pnm(grid: &SignalGrid) -> Result<Vec<u8>> {
    let [h, w] = grid.shape() else {
        return Err(Error::Shape(format!("image writer needs a 2-D grid, got {:?}", grid.shape())));
    };
    let magic = match grid.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Unsupported(format!("{c}-channel image"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(grid.values().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

fn decode_wav(bytes: &[u8]) -> Result<SignalGrid> {
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedHeader("missing RIFF/WAVE signature".into()));
    }
    let u16_at = |p: usize| u16::from_le_bytes([bytes[p], bytes[p + 1]]);
    let u32_at = |p: usize| u32::from_le_bytes([bytes[p], bytes[p + 1], bytes[p + 2], bytes[p + 3]]);
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(Error::MalformedHeader("short fmt chunk".into()));
                }
                format = Some((u16_at(body), u16_at(body + 2), u32_at(body + 4), u16_at(body + 14)));
            }
            b"data" => {
                let (tag, channels, rate, bits) =
                    format.ok_or_else(|| Error::MalformedHeader("data chunk before fmt chunk".into()))?;
                if tag != 1 {
                    return Err(Error::Unsupported(format!("WAV format tag {tag}; only PCM is read")));
                }
                if bits != 16 {
                    return Err(Error::UnsupportedBitDepth(bits as u32));
                }
                if channels != 1 {
                    return Err(Error::Unsupported(format!("{channels}-channel WAV; only mono is read")));
                }
                let found = bytes.len() - body;
                if found < size {
                    return Err(Error::TruncatedPayload { expected: size, found });
                }
                let data: Vec<f64> = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                let n = data.len();
                let mut grid = SignalGrid::new(vec![n], 1, data)?;
                grid.sample_rate = Some(rate);
                return Ok(grid);
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(Error::MalformedHeader("no data chunk".into()))
}

pub fn encode_wav(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn encode_raw(shape: &[usize], data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * shape.len() + 8 * data.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Returns the shape and payload; trailing bytes after the payload are ignored.
pub fn decode_raw(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>)> {
    if bytes.len() < 8 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::MalformedHeader("missing INRB magic".into()));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header = 8 + 8 * rank;
    if bytes.len() < header {
        return Err(Error::MalformedHeader(format!("header declares rank {rank} but is cut short")));
    }
    let shape: Vec<usize> =
        (0..rank).map(|k| u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap()) as usize).collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::MalformedHeader("dimension product overflows".into()))?;
    let expected = count * 8;
    let found = bytes.len() - header;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    let data =
        bytes[header..header + expected].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_bytes_scale_by_maxval() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 128, 64]);
        let g = decode_pnm(&bytes).unwrap();
        assert_eq!(g.shape(), &[2, 2]);
        let expect = [0.0, 1.0, 0.50196, 0.25098];
        for (v, e) in g.values().iter().zip(expect) {
            assert!((v - e).abs() < 1e-5);
        }
    }

    #[test]
    fn pnm_errors_are_distinct() {
        assert!(matches!(decode_pnm(b"P7\n1 1\n255\n\0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pnm(b"P5\n1 1\n70000\n\0"), Err(Error::UnsupportedBitDepth(70000))));
        assert!(matches!(decode_pnm(b"P6\n2 1\n255\n\0\0"), Err(Error::TruncatedPayload { expected: 6, found: 2 })));
    }

    #[test]
    fn wav_extremes() {
        let mut bytes = encode_wav(&[0.0, 0.0], 8000);
        let n = bytes.len();
        bytes[n - 4..n - 2].copy_from_slice(&32767i16.to_le_bytes());
        bytes[n - 2..].copy_from_slice(&(-32768i16).to_le_bytes());
        let g = decode_wav(&bytes).unwrap();
        assert!((g.values()[0] - 1.0).abs() < 1e-4);
        assert_eq!(g.values()[1], -1.0);
        assert_eq!(g.sample_rate, Some(8000));
    }

    #[test]
    fn wav_bit_depth_and_truncation() {
        let mut bytes = encode_wav(&[0.1, 0.2], 8000);
        bytes[34] = 8;
        assert!(matches!(decode_wav(&bytes), Err(Error::UnsupportedBitDepth(8))));
        let bytes = encode_wav(&[0.1, 0.2], 8000);
        assert!(matches!(decode_wav(&bytes[..bytes.len() - 1]), Err(Error::TruncatedPayload { .. })));
        assert!(matches!(decode_wav(b"RIFX0000WAVE"), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn raw_round_trip_is_bitwise() {
        let data = vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300, std::f64::consts::PI, -7.25];
        let bytes = encode_raw(&[2, 3], &data);
        let (shape, back) = decode_raw(&bytes).unwrap();
        assert_eq!(shape, vec![2, 3]);
        assert!(data.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(matches!(decode_raw(&bytes[..bytes.len() - 3]), Err(Error::TruncatedPayload { .. })));
        assert!(matches!(decode_raw(b"NOPE"), Err(Error::MalformedHeader(_))));
    }
}
