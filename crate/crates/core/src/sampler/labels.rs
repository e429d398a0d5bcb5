use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::ode::{reverse_ode_solve_with, ReverseWorkspace};
use crate::error::{Error, Result};
use crate::io::{check_finite, header_len, sha256_hex, BinReader, BinWriter};
use crate::rng;
use crate::score::{DiffusionSchedule, NeighborIndex, DEFAULT_FRACTION, DEFAULT_NU};
use crate::sde::ObservationSet;

const MAGIC: &[u8; 8] = b"SDELAB1\0";
const TRAILER: &[u8; 8] = b"LABMETA1";

#[derive(Clone, Debug, PartialEq)]
pub struct LabelConfig {
    /// Number of labels `J`.
    pub count: usize,
    /// Reverse Euler steps `K`.
    pub steps: usize,
    pub fraction: f64,
    pub nu: f64,
    pub eps_tau: f64,
    pub seed: u64,
    /// Thread count; zero uses the global pool. Never changes the output.
    pub workers: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            count: 1,
            steps: 10_000,
            fraction: DEFAULT_FRACTION,
            nu: DEFAULT_NU,
            eps_tau: DiffusionSchedule::default().eps_tau,
            seed: 0,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelMeta {
    pub steps: usize,
    pub seed: u64,
    pub fraction: f64,
    pub nu: f64,
    pub eps_tau: f64,
    pub source_digest: String,
}

/// Triples `(x_j, z_j, y_j)`, each block row-major `J × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub dim: usize,
    pub dt: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub meta: LabelMeta,
}

/// Generates `cfg.count` labels from the observation set. Label `j` uses
/// random stream `j`: it picks `x_j` uniformly (with replacement) among the
/// observed states, draws `z_j ~ N(0, I)`, and integrates the reverse ODE
/// with the neighbor subset of `x_j`.
pub fn generate_labels(obs: &ObservationSet, cfg: &LabelConfig) -> Result<LabeledSet> {
    let index = NeighborIndex::new(obs);
    generate_labels_indexed(&index, &obs.digest(), cfg)
}

/// One label: query state, noise draw and transported increment.
type Row = (Vec<f64>, Vec<f64>, Vec<f64>);

/// As [`generate_labels`], reusing a prebuilt index and a known digest of
/// its observation set.
pub fn generate_labels_indexed(
    index: &NeighborIndex<'_>,
    source_digest: &str,
    cfg: &LabelConfig,
) -> Result<LabeledSet> {
    let obs = index.observations();
    if cfg.count == 0 {
        return Err(Error::invalid("label count must be positive"));
    }
    if obs.is_empty() {
        return Err(Error::invalid("observation set is empty"));
    }
    let sched = DiffusionSchedule::new(cfg.eps_tau)?;
    let d = obs.dim;
    let m = obs.len();

    let one = |j: usize, ws: &mut ReverseWorkspace| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut r = rng::stream(cfg.seed, j as u64);
        let pick = r.random_range(0..m);
        let x = obs.state(pick).to_vec();
        let z: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let subset = index.select(&x, cfg.fraction, cfg.nu)?;
        let y = reverse_ode_solve_with(&z, cfg.steps, &subset, &sched, ws)?;
        Ok((x, z, y))
    };
    let results: Vec<Result<Row>> = rng::with_workers(cfg.workers, || {
        (0..cfg.count).into_par_iter().map_init(ReverseWorkspace::new, |ws, j| one(j, ws)).collect()
    });

    let mut failed = Vec::new();
    let mut first = None;
    let (mut xs, mut zs, mut ys) =
        (Vec::with_capacity(cfg.count * d), Vec::with_capacity(cfg.count * d), Vec::with_capacity(cfg.count * d));
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok((x, z, y)) => {
                xs.extend(x);
                zs.extend(z);
                ys.extend(y);
            }
            Err(e) if e.is_numerical() => {
                failed.push(j);
                first.get_or_insert_with(|| e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    if !failed.is_empty() {
        return Err(Error::LabelFailures {
            count: failed.len(),
            indices: failed.into_iter().take(16).collect(),
            first: first.unwrap_or_default(),
        });
    }
    Ok(LabeledSet {
        dim: d,
        dt: obs.dt,
        x: xs,
        z: zs,
        y: ys,
        meta: LabelMeta {
            steps: cfg.steps,
            seed: cfg.seed,
            fraction: cfg.fraction,
            nu: cfg.nu,
            eps_tau: cfg.eps_tau,
            source_digest: source_digest.to_string(),
        },
    })
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn row(&self, j: usize) -> (&[f64], &[f64], &[f64]) {
        let r = j * self.dim..(j + 1) * self.dim;
        (&self.x[r.clone()], &self.z[r.clone()], &self.y[r])
    }

    /// Builds a set from raw blocks, e.g. synthetic labels for training tests.
    pub fn from_blocks(dim: usize, dt: f64, x: Vec<f64>, z: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if dim == 0 || x.len() != z.len() || x.len() != y.len() || !x.len().is_multiple_of(dim) {
            return Err(Error::invalid("x, z and y must all be J × d"));
        }
        Ok(Self {
            dim,
            dt,
            x,
            z,
            y,
            meta: LabelMeta {
                steps: 0,
                seed: 0,
                fraction: f64::NAN,
                nu: f64::NAN,
                eps_tau: f64::NAN,
                source_digest: String::new(),
            },
        })
    }

    /// SDELAB1: magic, `d`, `J`, `K`, `seed`, then the `x`, `z`, `y` blocks;
    /// followed by a trailer holding `dt`, the neighbor settings and the
    /// source digest.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BinWriter::new(Vec::with_capacity(64 + 24 * self.x.len()));
        self.encode(&mut w).expect("writing to memory");
        w.finish().expect("writing to memory")
    }

    fn encode<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.bytes(MAGIC)?;
        w.u64(self.dim as u64)?;
        w.u64(self.len() as u64)?;
        w.u64(self.meta.steps as u64)?;
        w.u64(self.meta.seed)?;
        w.f64s(&self.x)?;
        w.f64s(&self.z)?;
        w.f64s(&self.y)?;
        w.bytes(TRAILER)?;
        w.f64(self.dt)?;
        w.f64(self.meta.fraction)?;
        w.f64(self.meta.nu)?;
        w.f64(self.meta.eps_tau)?;
        w.str(&self.meta.source_digest)
    }

    pub fn from_reader(r: impl std::io::Read) -> Result<Self> {
        let mut r = BinReader::new(r);
        r.magic(MAGIC)?;
        let dim = header_len(r.u64()?, "d")?;
        let count = header_len(r.u64()?, "J")?;
        let steps = header_len(r.u64()?, "K")?;
        let seed = r.u64()?;
        if dim == 0 {
            return Err(Error::Format("d must be positive".into()));
        }
        let n = count.checked_mul(dim).ok_or_else(|| Error::Format("J·d overflows".into()))?;
        let (x, z, y) = (r.f64s(n)?, r.f64s(n)?, r.f64s(n)?);
        for (v, what) in [(&x, "x"), (&z, "z"), (&y, "y")] {
            check_finite(v, what).map_err(|e| Error::Format(e.to_string()))?;
        }
        let mut set = Self::from_blocks(dim, f64::NAN, x, z, y)?;
        set.meta.steps = steps;
        set.meta.seed = seed;
        let rest = r.rest()?;
        if !rest.is_empty() {
            let mut t = BinReader::new(&rest[..]);
            t.magic(TRAILER)?;
            set.dt = t.f64()?;
            set.meta.fraction = t.f64()?;
            set.meta.nu = t.f64()?;
            set.meta.eps_tau = t.f64()?;
            set.meta.source_digest = t.str()?;
            if !t.rest()?.is_empty() {
                return Err(Error::Format("trailing bytes after label metadata".into()));
            }
        }
        Ok(set)
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

    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    /// CSV with header `x_1..x_d,z_1..z_d,y_1..y_d`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut out = BufWriter::new(out);
        let header: Vec<String> =
            ["x", "z", "y"].iter().flat_map(|p| (1..=self.dim).map(move |i| format!("{p}_{i}"))).collect();
        writeln!(out, "{}", header.join(","))?;
        for j in 0..self.len() {
            let (x, z, y) = self.row(j);
            let row: Vec<String> = x.iter().chain(z).chain(y).map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}
