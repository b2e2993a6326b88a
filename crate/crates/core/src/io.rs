//! File formats: PHM phase maps, PGM previews and the benchmark CSV.
//!
//! PHM layout (all little-endian):
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `PHM1`                       |
//! | 4      | 4    | width (cols), u32                  |
//! | 8      | 4    | height (rows), u32                 |
//! | 12     | 1    | kind: 0 wrapped, 1 unwrapped       |
//! | 13     | 8·wh | f64 values, row-major              |

use std::f64::consts::PI;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::bench::BenchRecord;
use crate::error::{Error, Result};
use crate::grid::{wrap_finite, PhaseKind, PhaseMap};

pub const PHM_MAGIC: [u8; 4] = *b"PHM1";
pub const PHM_HEADER_LEN: usize = 13;

/// Column order of the benchmark CSV.
pub const BENCH_COLUMNS: [&str; 17] = [
    "scale",
    "rows",
    "cols",
    "nnz",
    "density_pct",
    "preconditioner",
    "p",
    "outer_iters",
    "inner_iters_total",
    "precond_build_s",
    "precond_build_pct",
    "pcg_s",
    "total_s",
    "q_raw",
    "q_mean_aligned",
    "exit_reason",
    "seed",
];

/// Columns that carry wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 4] = ["precond_build_s", "precond_build_pct", "pcg_s", "total_s"];

pub fn encode_phm(map: &PhaseMap) -> Result<Vec<u8>> {
    let width = u32::try_from(map.cols())
        .map_err(|_| Error::InvalidInput("map too wide for PHM".into()))?;
    let height = u32::try_from(map.rows())
        .map_err(|_| Error::InvalidInput("map too tall for PHM".into()))?;
    let mut bytes = Vec::with_capacity(PHM_HEADER_LEN + 8 * map.len());
    bytes.extend_from_slice(&PHM_MAGIC);
    bytes.extend_from_slice(&width.to_le_bytes());
    bytes.extend_from_slice(&height.to_le_bytes());
    bytes.push(match map.kind() {
        PhaseKind::Wrapped => 0,
        PhaseKind::Unwrapped => 1,
    });
    for v in map.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(bytes)
}

pub fn write_phm(map: &PhaseMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_phm(map)?)?;
    Ok(())
}

pub fn decode_phm(bytes: &[u8], path: &Path) -> Result<PhaseMap> {
    let path_buf = path.to_path_buf();
    if bytes.len() < PHM_HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != PHM_MAGIC {
            return Err(Error::BadMagic {
                path: path_buf,
                found: bytes[..4].try_into().unwrap(),
            });
        }
        return Err(Error::Truncated {
            path: path_buf,
            offset: bytes.len(),
            expected: PHM_HEADER_LEN,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != PHM_MAGIC {
        return Err(Error::BadMagic {
            path: path_buf,
            found: magic,
        });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    for (field, offset, value) in [("width", 4, width), ("height", 8, height)] {
        if value < 2 {
            return Err(Error::BadHeader {
                path: path_buf,
                field,
                offset,
                detail: format!("{value} is below the minimum of 2"),
            });
        }
    }
    let kind = match bytes[12] {
        0 => PhaseKind::Wrapped,
        1 => PhaseKind::Unwrapped,
        other => {
            return Err(Error::BadHeader {
                path: path_buf,
                field: "kind",
                offset: 12,
                detail: format!("unknown kind byte {other}"),
            })
        }
    };
    let cells = width * height;
    let expected = PHM_HEADER_LEN + 8 * cells;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path_buf,
            offset: bytes.len(),
            expected,
        });
    }
    if bytes.len() > expected {
        return Err(Error::BadHeader {
            path: path_buf,
            field: "payload",
            offset: expected,
            detail: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let mut values = Vec::with_capacity(cells);
    for cell in 0..cells {
        let offset = PHM_HEADER_LEN + 8 * cell;
        let v = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite {
                path: path_buf,
                cell,
                offset,
            });
        }
        if kind == PhaseKind::Wrapped && !(v > -PI && v <= PI) {
            return Err(Error::RangeViolation {
                path: path_buf,
                cell,
                offset,
                value: v,
            });
        }
        values.push(v);
    }
    PhaseMap::new(height, width, values, kind)
}

pub fn read_phm(path: impl AsRef<Path>) -> Result<PhaseMap> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_phm(&bytes, path)
}

/// 8-bit binary PGM preview.
///
/// Wrapped maps (or unwrapped maps with `rewrap`) are scaled from
/// `(-pi, pi]` onto 0..=255. Other unwrapped maps are stretched between
/// their minimum and maximum.
pub fn write_pgm(map: &PhaseMap, path: impl AsRef<Path>, rewrap: bool) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", map.cols(), map.rows())?;
    let pixels: Vec<u8> = if map.kind() == PhaseKind::Wrapped || rewrap {
        map.values()
            .iter()
            .map(|&v| {
                let w = wrap_finite(v);
                ((w + PI) / (2.0 * PI) * 255.0).round().clamp(0.0, 255.0) as u8
            })
            .collect()
    } else {
        let (lo, hi) = map.min_max();
        let span = hi - lo;
        map.values()
            .iter()
            .map(|&v| {
                if span > 0.0 {
                    ((v - lo) / span * 255.0).round() as u8
                } else {
                    128
                }
            })
            .collect()
    };
    out.write_all(&pixels)?;
    out.flush()?;
    Ok(())
}

/// Appends one record, writing the header first when the file is new or empty.
pub fn append_bench_csv(record: &BenchRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let needs_header = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if needs_header {
        w.write_record(BENCH_COLUMNS)?;
    }
    w.write_record(record.to_fields())?;
    w.flush()?;
    Ok(())
}

pub fn read_bench_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(BENCH_COLUMNS) {
        return Err(Error::InvalidInput(format!(
            "unexpected bench CSV header: {headers:?}"
        )));
    }
    r.records()
        .map(|row| BenchRecord::from_fields(&row?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn zero_map_file_size_and_header() {
        let dir = tmp();
        let path = dir.path().join("z.phm");
        let map = PhaseMap::filled(2, 2, 0.0, PhaseKind::Wrapped).unwrap();
        write_phm(&map, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 13 + 32);
        assert_eq!(&bytes[..4], b"PHM1");
        assert_eq!(bytes[12], 0);
        write_phm(&map, dir.path().join("z2.phm")).unwrap();
        assert_eq!(bytes, fs::read(dir.path().join("z2.phm")).unwrap());
    }

    #[test]
    fn header_dims_match_map() {
        let map = PhaseMap::filled(3, 5, 1.0, PhaseKind::Unwrapped).unwrap();
        let bytes = encode_phm(&map).unwrap();
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(bytes[12], 1);
    }

    #[test]
    fn parse_errors() {
        let p = Path::new("mem.phm");
        let map = PhaseMap::filled(2, 2, 0.5, PhaseKind::Wrapped).unwrap();
        let good = encode_phm(&map).unwrap();

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_phm(&bad, p), Err(Error::BadMagic { .. })));

        assert!(matches!(
            decode_phm(&good[..20], p),
            Err(Error::Truncated { offset: 20, expected: 45, .. })
        ));
        assert!(matches!(decode_phm(&good[..6], p), Err(Error::Truncated { .. })));

        let mut bad = good.clone();
        bad[PHM_HEADER_LEN + 8..PHM_HEADER_LEN + 16].copy_from_slice(&3.2f64.to_le_bytes());
        assert!(matches!(
            decode_phm(&bad, p),
            Err(Error::RangeViolation { cell: 1, offset: 21, .. })
        ));

        let mut bad = good.clone();
        bad[PHM_HEADER_LEN..PHM_HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_phm(&bad, p), Err(Error::NonFinite { cell: 0, .. })));

        let mut bad = good.clone();
        bad[12] = 7;
        assert!(matches!(decode_phm(&bad, p), Err(Error::BadHeader { field: "kind", .. })));

        let mut bad = good.clone();
        bad[4..8].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(decode_phm(&bad, p), Err(Error::BadHeader { field: "width", .. })));

        let mut bad = good;
        bad.push(0);
        assert!(matches!(decode_phm(&bad, p), Err(Error::BadHeader { field: "payload", .. })));
    }

    #[test]
    fn unwrapped_files_allow_any_finite_value() {
        let map = PhaseMap::unwrapped(2, 2, vec![100.0, -50.0, 3.2, 0.0]).unwrap();
        let back = decode_phm(&encode_phm(&map).unwrap(), Path::new("m")).unwrap();
        assert_eq!(back, map);
    }

    fn pgm_pixels(path: &Path) -> (usize, usize, Vec<u8>) {
        let bytes = fs::read(path).unwrap();
        let text_end = bytes
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .nth(2)
            .unwrap()
            .0;
        let header = std::str::from_utf8(&bytes[..text_end]).unwrap();
        let mut parts = header.split_whitespace();
        assert_eq!(parts.next(), Some("P5"));
        let w: usize = parts.next().unwrap().parse().unwrap();
        let h: usize = parts.next().unwrap().parse().unwrap();
        assert_eq!(parts.next(), Some("255"));
        (w, h, bytes[text_end + 1..].to_vec())
    }

    #[test]
    fn pgm_endpoints_and_constant() {
        let dir = tmp();
        let path = dir.path().join("a.pgm");
        let map = PhaseMap::wrapped(2, 2, vec![PI, -PI + 1e-9, 0.0, 0.0]).unwrap();
        write_pgm(&map, &path, false).unwrap();
        let (w, h, px) = pgm_pixels(&path);
        assert_eq!((w, h), (2, 2));
        assert_eq!(px[0], 255);
        assert_eq!(px[1], 0);

        let flat = PhaseMap::filled(3, 4, 17.0, PhaseKind::Unwrapped).unwrap();
        write_pgm(&flat, &path, false).unwrap();
        let (_, _, px) = pgm_pixels(&path);
        assert_eq!(px.len(), 12);
        assert!(px.iter().all(|&p| p == px[0]));
    }

    #[test]
    fn pgm_wrapped_ramp_is_sawtooth() {
        let dir = tmp();
        let path = dir.path().join("ramp.pgm");
        let cols = 40;
        let values: Vec<f64> = (0..2 * cols).map(|k| 0.5 * (k % cols) as f64).collect();
        let ramp = PhaseMap::unwrapped(2, cols, values).unwrap();
        write_pgm(&ramp, &path, true).unwrap();
        let (_, _, px) = pgm_pixels(&path);
        let row = &px[..cols];
        let drops = row.windows(2).filter(|w| w[1] < w[0]).count();
        // 0.5 rad/px over 39 px spans 19.5 rad: three wraps
        assert_eq!(drops, 3);
        for w in row.windows(2) {
            assert!(w[1] >= w[0] || w[0] - w[1] > 200);
        }
    }

    proptest! {
        #[test]
        fn phm_round_trip(rows in 2usize..6, cols in 2usize..6, wrapped in any::<bool>(),
                          raw in proptest::collection::vec(-1.0e6f64..1.0e6, 36)) {
            let values: Vec<f64> = raw[..rows * cols]
                .iter()
                .map(|&v| if wrapped { wrap_finite(v) } else { v })
                .collect();
            let kind = if wrapped { PhaseKind::Wrapped } else { PhaseKind::Unwrapped };
            let map = PhaseMap::new(rows, cols, values, kind).unwrap();
            let back = decode_phm(&encode_phm(&map).unwrap(), Path::new("m")).unwrap();
            prop_assert_eq!(back.kind(), kind);
            prop_assert!(back.values().iter().zip(map.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
