//! Binary state snapshots: `MPOL`, u16 version, u32 `nx`, `ny`, f64 `lx`,
//! `ly`, `t`, then `w`, `ux`, `uy` as row-major f64, all little-endian.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VelocityField};
use crate::micropolar::SimState;

pub const MAGIC: &[u8; 4] = b"MPOL";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 3 * 8;

pub fn encode(state: &SimState) -> Vec<u8> {
    let g = state.grid();
    let n = state.w.data.len() + state.u.ux.len() + state.u.uy.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.nx as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny as u32).to_le_bytes());
    for v in [g.lx, g.ly, state.t] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in state.w.data.iter().chain(&state.u.ux).chain(&state.u.uy) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Snapshot(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap_or_default()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap_or_default()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap_or_default()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Snapshot("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap_or_default()))
            .collect())
    }
}

/// Decodes and validates a snapshot; the step counter restarts at 0.
pub fn decode(bytes: &[u8]) -> Result<SimState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let (lx, ly, t) = (r.f64()?, r.f64()?, r.f64()?);
    let cells = nx.checked_mul(ny);
    let faces = (nx + 1).checked_mul(ny).zip(nx.checked_mul(ny + 1));
    let expected = cells
        .zip(faces)
        .and_then(|(c, (a, b))| c.checked_add(a)?.checked_add(b)?.checked_mul(8)?.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::Snapshot(format!(
            "length {} does not match a {nx}x{ny} grid",
            bytes.len()
        )));
    }
    let grid = GridSpec::new(nx, ny, lx, ly).map_err(|e| Error::Snapshot(e.to_string()))?;
    if !t.is_finite() {
        return Err(Error::Snapshot(format!("non-finite time {t}")));
    }
    let w = ScalarField::from_vec(grid, r.f64s(nx * ny)?)?;
    let ux = r.f64s((nx + 1) * ny)?;
    let uy = r.f64s(nx * (ny + 1))?;
    let u = VelocityField::from_parts(grid, ux, uy)?;
    if !w.is_finite() || !u.is_finite() {
        return Err(Error::Snapshot("non-finite field values".into()));
    }
    let mut s = SimState::new(u, w).map_err(|e| Error::Snapshot(e.to_string()))?;
    s.t = t;
    Ok(s)
}

pub fn write(path: &Path, state: &SimState) -> Result<()> {
    std::fs::write(path, encode(state))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<SimState> {
    decode(&std::fs::read(path)?)
}

/// Plain-text export: a header line, then `w` rows, then `ux` and `uy` rows.
pub fn export_text(state: &SimState) -> String {
    let g = state.grid();
    let mut s = format!("# nx={} ny={} lx={:e} ly={:e} t={:.16e}\n", g.nx, g.ny, g.lx, g.ly, state.t);
    let mut block = |name: &str, data: &[f64], cols: usize| {
        let _ = writeln!(s, "# {name}");
        for row in data.chunks(cols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
    };
    block("w", &state.w.data, g.nx);
    block("ux", &state.u.ux, g.nx + 1);
    block("uy", &state.u.uy, g.nx);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manufactured::{reference_rotation, reference_velocity};

    fn sample() -> SimState {
        let g = GridSpec::new(16, 8, 2.0, 1.0).unwrap();
        let mut s = SimState::new(reference_velocity(g, 0.5), reference_rotation(g, 1.0)).unwrap();
        s.t = 0.375;
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let bytes = encode(&s);
        assert_eq!(&bytes[..4], b"MPOL");
        let back = decode(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = encode(&sample());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(&[]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode(&bad).is_err());
        let mut bad = bytes;
        bad[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&bad).is_err());
    }

    #[test]
    fn text_export_has_all_rows() {
        let t = export_text(&sample());
        assert_eq!(t.lines().count(), 1 + (1 + 8) + (1 + 8) + (1 + 9));
    }
}
