use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::TrajectoryBatch;
use crate::error::{Error, Result};
use crate::io::{check_finite, header_len, sha256_hex, BinReader, BinWriter};

const MAGIC: &[u8; 8] = b"SDEOBS1\0";

/// Observation pairs `(x_m, Δx_m)`, each stored row-major as `M × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub dim: usize,
    pub dt: f64,
    pub x: Vec<f64>,
    pub dx: Vec<f64>,
}

/// Regroups trajectories into adjacent pairs ordered by `m = l·H + i`.
pub fn build_observation_set(batch: &TrajectoryBatch) -> Result<ObservationSet> {
    let (h, l, d) = (batch.paths, batch.steps, batch.dim);
    if l == 0 || batch.data.len() != h * (l + 1) * d {
        return Err(Error::invalid("trajectory batch has no steps or inconsistent shape"));
    }
    let mut x = Vec::with_capacity(h * l * d);
    let mut dx = Vec::with_capacity(h * l * d);
    for step in 0..l {
        for path in 0..h {
            let now = batch.state(path, step);
            let next = batch.state(path, step + 1);
            x.extend_from_slice(now);
            dx.extend(next.iter().zip(now).map(|(b, a)| b - a));
        }
    }
    Ok(ObservationSet { dim: d, dt: batch.dt, x, dx })
}

impl ObservationSet {
    pub fn new(dim: usize, dt: f64, x: Vec<f64>, dx: Vec<f64>) -> Result<Self> {
        if dim == 0 || x.len() != dx.len() || !x.len().is_multiple_of(dim) {
            return Err(Error::invalid("x and dx must both be M × d"));
        }
        Ok(Self { dim, dt, x, dx })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn state(&self, m: usize) -> &[f64] {
        &self.x[m * self.dim..(m + 1) * self.dim]
    }

    pub fn increment(&self, m: usize) -> &[f64] {
        &self.dx[m * self.dim..(m + 1) * self.dim]
    }

    /// The SDEOBS1 encoding: magic, `d`, `M`, `dt`, then all `x` rows and
    /// all `Δx` rows, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BinWriter::new(Vec::with_capacity(32 + 16 * self.x.len()));
        self.encode(&mut w).expect("writing to memory");
        w.finish().expect("writing to memory")
    }

    fn encode<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.bytes(MAGIC)?;
        w.u64(self.dim as u64)?;
        w.u64(self.len() as u64)?;
        w.f64(self.dt)?;
        w.f64s(&self.x)?;
        w.f64s(&self.dx)
    }

    pub fn from_reader(r: impl std::io::Read) -> Result<Self> {
        let mut r = BinReader::new(r);
        r.magic(MAGIC)?;
        let dim = header_len(r.u64()?, "d")?;
        let m = header_len(r.u64()?, "M")?;
        let dt = r.f64()?;
        if dim == 0 {
            return Err(Error::Format("d must be positive".into()));
        }
        let n = m.checked_mul(dim).ok_or_else(|| Error::Format("M·d overflows".into()))?;
        let x = r.f64s(n)?;
        let dx = r.f64s(n)?;
        if !r.rest()?.is_empty() {
            return Err(Error::Format("trailing bytes after observation data".into()));
        }
        check_finite(&x, "x").map_err(|e| Error::Format(e.to_string()))?;
        check_finite(&dx, "dx").map_err(|e| Error::Format(e.to_string()))?;
        Self::new(dim, dt, x, dx)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?));
        self.encode(&mut w)?;
        w.finish()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    /// SHA-256 of the binary encoding.
    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    /// CSV with header `x_1..x_d,dx_1..dx_d`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        let header: Vec<String> =
            (1..=self.dim).map(|i| format!("x_{i}")).chain((1..=self.dim).map(|i| format!("dx_{i}"))).collect();
        writeln!(out, "{}", header.join(","))?;
        for m in 0..self.len() {
            let row: Vec<String> = self.state(m).iter().chain(self.increment(m)).map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(paths: usize, steps: usize, data: Vec<f64>) -> TrajectoryBatch {
        TrajectoryBatch { paths, steps, dim: 1, dt: 0.1, t0: 0.0, seed: 0, data }
    }

    #[test]
    fn single_trajectory_pairs() {
        let obs = build_observation_set(&batch(1, 2, vec![1.0, 1.5, 0.5])).unwrap();
        assert_eq!(obs.x, vec![1.0, 1.5]);
        assert_eq!(obs.dx, vec![0.5, -1.0]);
    }

    #[test]
    fn constant_trajectories_have_zero_increments() {
        let obs = build_observation_set(&batch(2, 3, vec![4.0; 8])).unwrap();
        assert_eq!(obs.len(), 6);
        assert!(obs.dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ordering_is_step_major() {
        // path 0: 0,1,3; path 1: 10,20,40
        let obs = build_observation_set(&batch(2, 2, vec![0.0, 1.0, 3.0, 10.0, 20.0, 40.0])).unwrap();
        assert_eq!(obs.x, vec![0.0, 10.0, 1.0, 20.0]);
        assert_eq!(obs.dx, vec![1.0, 10.0, 2.0, 20.0]);
    }

    #[test]
    fn binary_layout() {
        let obs = ObservationSet::new(1, 0.5, vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let bytes = obs.to_bytes();
        assert_eq!(&bytes[..8], b"SDEOBS1\0");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 0.5);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(bytes[48..56].try_into().unwrap()), 3.0);
        assert_eq!(bytes.len(), 32 + 4 * 8);
        assert_eq!(ObservationSet::from_reader(&bytes[..]).unwrap(), obs);
    }

    #[test]
    fn rejects_corrupt_files() {
        let obs = ObservationSet::new(1, 0.5, vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let bytes = obs.to_bytes();
        assert!(ObservationSet::from_reader(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ObservationSet::from_reader(&bad[..]).is_err());
        let mut nan = bytes;
        nan[32..40].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(ObservationSet::from_reader(&nan[..]).is_err());
    }

    #[test]
    fn csv_header() {
        let obs = ObservationSet::new(2, 0.5, vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let mut out = Vec::new();
        obs.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x_1,x_2,dx_1,dx_2");
        assert_eq!(text.lines().count(), 2);
    }
}
