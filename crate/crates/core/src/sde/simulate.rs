use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SdeSpec;
use crate::error::{Error, Result};
use crate::io::{check_finite, header_len, sha256_hex, BinReader, BinWriter};
use crate::rng;

const MAGIC: &[u8; 8] = b"SDEENS1\0";

/// Distribution of initial states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSampler {
    /// Independent uniforms on the box `[low, high)`.
    Uniform { low: Vec<f64>, high: Vec<f64> },
    /// Every trajectory starts at this state.
    Point(Vec<f64>),
}

impl InitSampler {
    pub fn dim(&self) -> usize {
        match self {
            InitSampler::Uniform { low, .. } => low.len(),
            InitSampler::Point(x) => x.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            InitSampler::Uniform { low, high } => {
                for ((o, lo), hi) in out.iter_mut().zip(low).zip(high) {
                    *o = lo + (hi - lo) * rng.random::<f64>();
                }
            }
            InitSampler::Point(x) => out.copy_from_slice(x),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::invalid(format!("initial sampler has dimension {}, SDE has {dim}", self.dim())));
        }
        if let InitSampler::Uniform { low, high } = self {
            if low.len() != high.len() || low.iter().zip(high).any(|(l, h)| !(l <= h)) {
                return Err(Error::invalid("uniform init box needs low <= high per coordinate"));
            }
        }
        Ok(())
    }
}

/// One Euler–Maruyama step (or the benchmark's custom update) with fresh
/// noise drawn from `rng`.
pub fn em_step<R: Rng + ?Sized>(spec: &SdeSpec, x: &[f64], dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let law = spec.noise_law();
    let noise: Vec<f64> = (0..spec.noise_dim).map(|_| law.draw(rng)).collect();
    let mut out = vec![0.0; spec.dim];
    spec.step_with_noise(x, dt, &noise, &mut out, &mut Vec::new());
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{} step from {x:?} produced {out:?}", spec.name)));
    }
    Ok(out)
}

/// `H` trajectories of `L + 1` states stored row-major as `[path][step][coord]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub paths: usize,
    pub steps: usize,
    pub dim: usize,
    pub dt: f64,
    pub t0: f64,
    pub seed: u64,
    pub data: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let at = (path * (self.steps + 1) + step) * self.dim;
        &self.data[at..at + self.dim]
    }

    pub fn path(&self, path: usize) -> &[f64] {
        let len = (self.steps + 1) * self.dim;
        &self.data[path * len..(path + 1) * len]
    }

    /// States of every path at one step, `[path][coord]`.
    pub fn snapshot(&self, step: usize) -> Vec<f64> {
        (0..self.paths).flat_map(|p| self.state(p, step).iter().copied()).collect()
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    /// Assembles a batch from per-path state sequences of equal length.
    pub fn from_paths(paths: Vec<Vec<f64>>, dim: usize, dt: f64, seed: u64) -> Result<Self> {
        let len = paths.first().map_or(0, Vec::len);
        if paths.is_empty() || len < dim || !len.is_multiple_of(dim) || paths.iter().any(|p| p.len() != len) {
            return Err(Error::invalid("paths must be non-empty and of equal length"));
        }
        Ok(Self { paths: paths.len(), steps: len / dim - 1, dim, dt, t0: 0.0, seed, data: paths.concat() })
    }

    /// The SDEENS1 encoding: magic, `d`, `H`, `L`, `dt`, `t0`, seed, then the
    /// states `[path][step][coord]`, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BinWriter::new(Vec::with_capacity(56 + 8 * self.data.len()));
        self.encode(&mut w).expect("writing to memory");
        w.finish().expect("writing to memory")
    }

    fn encode<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.bytes(MAGIC)?;
        w.u64(self.dim as u64)?;
        w.u64(self.paths as u64)?;
        w.u64(self.steps as u64)?;
        w.f64(self.dt)?;
        w.f64(self.t0)?;
        w.u64(self.seed)?;
        w.f64s(&self.data)
    }

    pub fn from_reader(r: impl std::io::Read) -> Result<Self> {
        let mut r = BinReader::new(r);
        r.magic(MAGIC)?;
        let dim = header_len(r.u64()?, "d")?;
        let paths = header_len(r.u64()?, "H")?;
        let steps = header_len(r.u64()?, "L")?;
        let (dt, t0, seed) = (r.f64()?, r.f64()?, r.u64()?);
        if dim == 0 || paths == 0 {
            return Err(Error::Format("d and H must be positive".into()));
        }
        let n = steps
            .checked_add(1)
            .and_then(|s| s.checked_mul(paths))
            .and_then(|s| s.checked_mul(dim))
            .ok_or_else(|| Error::Format("H·(L+1)·d overflows".into()))?;
        let data = r.f64s(n)?;
        if !r.rest()?.is_empty() {
            return Err(Error::Format("trailing bytes after ensemble data".into()));
        }
        check_finite(&data, "states").map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self { paths, steps, dim, dt, t0, seed, data })
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
}

/// Simulates `paths` trajectories of `steps` steps each. Trajectory `i` uses
/// random stream `i` of `seed`, so the batch does not depend on `workers`
/// (zero means the global thread pool).
pub fn simulate(
    spec: &SdeSpec,
    init: &InitSampler,
    paths: usize,
    steps: usize,
    dt: f64,
    seed: u64,
    workers: usize,
) -> Result<TrajectoryBatch> {
    if paths == 0 || steps == 0 {
        return Err(Error::invalid("need at least one path and one step"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    init.validate(spec.dim)?;
    let d = spec.dim;
    let run = |i: usize| -> Result<Vec<f64>> {
        let mut rng = rng::stream(seed, i as u64);
        let mut path = vec![0.0; (steps + 1) * d];
        init.sample(&mut rng, &mut path[..d]);
        let law = spec.noise_law();
        let mut noise = vec![0.0; spec.noise_dim];
        let mut scratch = Vec::new();
        for l in 0..steps {
            noise.iter_mut().for_each(|v| *v = law.draw(&mut rng));
            let (head, tail) = path.split_at_mut((l + 1) * d);
            let next = &mut tail[..d];
            spec.step_with_noise(&head[l * d..], dt, &noise, next, &mut scratch);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("trajectory {i} blew up at step {} ({})", l + 1, spec.name)));
            }
        }
        Ok(path)
    };
    let out: Result<Vec<Vec<f64>>> = rng::with_workers(workers, || (0..paths).into_par_iter().map(run).collect());
    let mut batch = TrajectoryBatch::from_paths(out?, d, dt, seed)?;
    batch.steps = steps;
    Ok(batch)
}
