//! Grid field snapshot files.
//!
//! Layout: one line of JSON ([`SnapshotHeader`]) terminated by `\n`, followed
//! by `count` little-endian `f64` samples in row-major node order (axis 0
//! slowest).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Domain, GridScalar};
use crate::error::{Result, StarError};

pub const FORMAT: &str = "starlab-grid-field";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub domain: Domain,
    pub n: usize,
    pub field: String,
    pub time: f64,
    pub encoding: String,
    pub count: usize,
}

pub fn write_snapshot<W: Write>(mut w: W, name: &str, time: f64, field: &GridScalar) -> Result<()> {
    let header = SnapshotHeader {
        format: FORMAT.into(),
        version: VERSION,
        domain: field.grid.domain(),
        n: field.grid.n(),
        field: name.into(),
        time,
        encoding: "f64-le".into(),
        count: field.data.len(),
    };
    let line = serde_json::to_string(&header).map_err(|e| StarError::Io(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(8 * field.data.len());
    for v in &field.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_snapshot<R: BufRead>(mut r: R) -> Result<(SnapshotHeader, Vec<f64>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: SnapshotHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| StarError::Io(format!("bad snapshot header: {e}")))?;
    if header.format != FORMAT || header.encoding != "f64-le" {
        return Err(StarError::Io(format!("unsupported snapshot {} / {}", header.format, header.encoding)));
    }
    let mut bytes = vec![0u8; 8 * header.count];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok((header, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    #[test]
    fn round_trip() {
        let grid = Grid::new(&Domain::unit_torus(2), 4).unwrap();
        let f = GridScalar::sample(&grid, |x| x[0] - 0.5 * x[1]);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, "f", 0.25, &f).unwrap();
        let (h, data) = read_snapshot(&buf[..]).unwrap();
        assert_eq!(h.field, "f");
        assert_eq!(h.n, 4);
        assert_eq!(h.time, 0.25);
        assert_eq!(data, f.data);
    }
}
