//! CSV tables and binary PGM images.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::stats::quantile;
use crate::{Error, Result};

/// Formats a double with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text with a header row; every number printed round-trip exact.
pub fn csv_string(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    fs::write(path, csv_string(header, rows))?;
    Ok(())
}

/// P5 image, maxval 65535, big-endian samples, row-major. Values are clipped
/// to the `(1 − q, q)` quantile range; a flat field maps to mid-gray.
pub fn pgm_bytes(values: &[f64], rows: usize, cols: usize, q: f64) -> Result<Vec<u8>> {
    if values.len() != rows * cols || values.is_empty() {
        return Err(Error::InvalidConfig(format!("image of {} values is not {rows}x{cols}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange("image contains non-finite values".into()));
    }
    let q = q.clamp(0.5, 1.0);
    let lo = quantile(values, 1.0 - q);
    let hi = quantile(values, q);
    let flat = !(hi - lo > 1e-6 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE));
    let mut out = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    out.reserve(2 * values.len());
    for &v in values {
        let level = if flat {
            32768u16
        } else {
            let u = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            (u * 65535.0).round() as u16
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, values: &[f64], rows: usize, cols: usize, q: f64) -> Result<()> {
    let bytes = pgm_bytes(values, rows, cols, q)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Header `(width, height, maxval)` and samples of a P5 image.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, u32, Vec<u16>)> {
    let bad = || Error::InvalidConfig("malformed PGM".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    let maxval: u32 = fields[3].parse().map_err(|_| bad())?;
    let data = bytes.get(pos..).ok_or_else(bad)?;
    if data.len() != 2 * w * h {
        return Err(bad());
    }
    let samples = data.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, maxval, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_field_is_mid_gray() {
        let bytes = pgm_bytes(&[1.0; 12], 3, 4, 0.99).unwrap();
        let (w, h, maxval, px) = parse_pgm(&bytes).unwrap();
        assert_eq!((w, h, maxval), (4, 3, 65535));
        assert!(px.iter().all(|&p| p == 32768));
    }

    #[test]
    fn ramp_spans_full_range() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (_, _, _, px) = parse_pgm(&pgm_bytes(&v, 10, 10, 1.0).unwrap()).unwrap();
        assert_eq!(px[0], 0);
        assert_eq!(px[99], 65535);
        assert!(px.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn csv_round_trips() {
        let x = 0.1 + 0.2;
        let s = csv_string(&["a", "b"], &[vec![x, -1.5e-300]]);
        let line = s.lines().nth(1).unwrap();
        let parsed: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(parsed, vec![x, -1.5e-300]);
    }
}
