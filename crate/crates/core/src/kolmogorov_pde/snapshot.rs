//! Export of Kolmogorov solutions.
//!
//! CSV: header `x,y,value`, one row per node, x-major.
//!
//! Binary snapshot, little-endian throughout:
//!
//! | offset | type      | content                          |
//! |--------|-----------|----------------------------------|
//! | 0      | `[u8; 4]` | magic `ZKV1`                     |
//! | 4      | `u32`     | format version (1)               |
//! | 8      | `u32`     | `n_x`                            |
//! | 12     | `u32`     | `n_y`                            |
//! | 16     | `f64 × 6` | `x_min, x_max, y_min, y_max, t, T` |
//! | 64     | `f64 × n_x·n_y` | values, x-major (`v(x_i, y_j)` at `i·n_y + j`) |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Axis, Grid2D, PDESolution};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"ZKV1";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

pub fn write_csv(sol: &PDESolution, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let g = sol.grid();
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "x,y,value")?;
        for i in 0..g.x.n() {
            let x = g.x.node(i);
            for j in 0..g.y.n() {
                writeln!(w, "{},{},{}", x, g.y.node(j), sol.value(i, j))?;
            }
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

pub fn encode_snapshot(sol: &PDESolution) -> Vec<u8> {
    let g = sol.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.x.n() as u32).to_le_bytes());
    out.extend_from_slice(&(g.y.n() as u32).to_le_bytes());
    for v in [g.x.min(), g.x.max(), g.y.min(), g.y.max(), sol.t(), sol.horizon()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in sol.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<PDESolution> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Snapshot(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let (nx, ny) = (u32_at(8) as usize, u32_at(12) as usize);
    let expected = HEADER_LEN + 8 * nx * ny;
    if bytes.len() != expected {
        return Err(Error::Snapshot(format!(
            "expected {expected} bytes for a {nx}×{ny} grid, got {}",
            bytes.len()
        )));
    }
    let grid = Grid2D::new(
        Axis::new(f64_at(16), f64_at(24), nx)?,
        Axis::new(f64_at(32), f64_at(40), ny)?,
    );
    let values = (0..nx * ny).map(|k| f64_at(HEADER_LEN + 8 * k)).collect();
    PDESolution::from_values(grid, values, f64_at(48), f64_at(56))
}

pub fn write_snapshot(sol: &PDESolution, path: &Path) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_snapshot(sol)).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<PDESolution> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kolmogorov_pde::solve;
    use crate::model::{build_model, DerivedCoefficients};
    use std::collections::BTreeMap;

    fn small() -> PDESolution {
        let c = DerivedCoefficients::derive(&build_model("ou-tanh", &BTreeMap::new()).unwrap()).unwrap();
        let g = Grid2D::for_horizon(0.1, -4.0, 4.0, 17, 11, 7.5, 1.0).unwrap();
        solve(&g, 0.1, 4, &c).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let s = small();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.zkv");
        write_snapshot(&s, &p).unwrap();
        let back = read_snapshot(&p).unwrap();
        assert_eq!(back.values(), s.values());
        assert_eq!(back.grid(), s.grid());
        assert_eq!((back.t(), back.horizon()), (s.t(), s.horizon()));
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"ZKV1");
        assert_eq!(bytes.len(), 64 + 8 * 17 * 11);
    }

    #[test]
    fn corrupt_snapshots_are_rejected() {
        let mut bytes = encode_snapshot(&small());
        assert!(decode_snapshot(&bytes[..100]).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode_snapshot(&bytes), Err(Error::Snapshot(_))));
    }

    #[test]
    fn csv_layout() {
        let s = small();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        write_csv(&s, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,value");
        assert_eq!(lines.len(), 1 + 17 * 11);
        let cols: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols, vec![-4.0, s.grid().y.min(), s.value(0, 0)]);
    }
}
