use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::FlowMap;
use crate::error::{Error, Result};
use crate::io::{header_len, sha256_hex, BinReader, BinWriter};
use crate::score::exp_nonpositive;

const MAGIC: &[u8; 8] = b"SDEMLP1\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }

    #[inline(always)]
    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = exp_nonpositive(-2.0 * v.abs());
                ((1.0 - t) / (1.0 + t)).copysign(v)
            }
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline(always)]
    pub(crate) fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Per-coordinate standardization `(v - mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(n: usize) -> Self {
        Self { mean: vec![0.0; n], std: vec![1.0; n] }
    }

    /// Fits to the rows of a row-major `n × width` block. Zero spreads fall
    /// back to unit scale.
    pub fn fit(rows: &[f64], width: usize) -> Self {
        let n = rows.len() / width;
        let mut mean = vec![0.0; width];
        for row in rows.chunks_exact(width) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; width];
        for row in rows.chunks_exact(width) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 * m.abs().max(1e-300) && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(v).zip(&self.mean).zip(&self.std) {
            *o = (v - m) / s;
        }
    }

    pub fn invert(&self, v: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(v).zip(&self.mean).zip(&self.std) {
            *o = v * s + m;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainMeta {
    pub epochs: usize,
    pub lr: f64,
    pub split: f64,
    /// Mini-batch size; zero means full batch.
    pub batch: usize,
    pub seed: u64,
    /// Lowest validation MSE seen (original units) and its epoch.
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub final_val_mse: f64,
    /// `(width, best validation MSE)` for every width tried.
    pub width_scores: Vec<(usize, f64)>,
}

impl Default for TrainMeta {
    fn default() -> Self {
        Self {
            epochs: 0,
            lr: 0.0,
            split: 0.0,
            batch: 0,
            seed: 0,
            best_val_mse: f64::NAN,
            best_epoch: 0,
            final_val_mse: f64::NAN,
            width_scores: Vec::new(),
        }
    }
}

/// One-hidden-layer network `G(x, z)`: inputs `[x, z]` (standardized),
/// `hidden` units, `d` outputs (de-standardized).
///
/// `w1` is `2d × hidden` and `w2` is `hidden × d`, both row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMapModel {
    pub dim: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub in_scaler: Scaler,
    pub out_scaler: Scaler,
    pub dt: f64,
    pub meta: TrainMeta,
}

impl FlowMapModel {
    /// All-zero weights with identity scalers: predicts a zero increment.
    pub fn zeros(dim: usize, hidden: usize, dt: f64) -> Self {
        Self {
            dim,
            hidden,
            activation: Activation::Tanh,
            w1: vec![0.0; 2 * dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * dim],
            b2: vec![0.0; dim],
            in_scaler: Scaler::identity(2 * dim),
            out_scaler: Scaler::identity(dim),
            dt,
            meta: TrainMeta::default(),
        }
    }

    /// Network output in standardized units for standardized inputs.
    pub(crate) fn forward_scaled(&self, input: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        hidden.copy_from_slice(&self.b1);
        for (a, row) in input.iter().zip(self.w1.chunks_exact(self.hidden)) {
            for (h, w) in hidden.iter_mut().zip(row) {
                *h += a * w;
            }
        }
        for h in hidden.iter_mut() {
            *h = self.activation.apply(*h);
        }
        out.copy_from_slice(&self.b2);
        for (h, row) in hidden.iter().zip(self.w2.chunks_exact(self.dim)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += h * w;
            }
        }
    }

    /// `G(x, z)` in original units.
    pub fn predict_increment(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.increment(x, z, &mut out);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.dim, self.hidden);
        let shapes_ok = d > 0
            && h > 0
            && self.w1.len() == 2 * d * h
            && self.b1.len() == h
            && self.w2.len() == h * d
            && self.b2.len() == d
            && self.in_scaler.mean.len() == 2 * d
            && self.in_scaler.std.len() == 2 * d
            && self.out_scaler.mean.len() == d
            && self.out_scaler.std.len() == d;
        if !shapes_ok {
            return Err(Error::invalid("model parameter shapes are inconsistent"));
        }
        let params = self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2);
        if params.chain(&self.in_scaler.mean).chain(&self.out_scaler.mean).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        if self.in_scaler.std.iter().chain(&self.out_scaler.std).any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("scaler standard deviations must be positive"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BinWriter::new(Vec::new());
        self.encode(&mut w).expect("writing to memory");
        w.finish().expect("writing to memory")
    }

    fn encode<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.bytes(MAGIC)?;
        w.u32(FORMAT_VERSION)?;
        w.u64(self.dim as u64)?;
        w.u64(self.hidden as u64)?;
        w.str(self.activation.name())?;
        w.f64(self.dt)?;
        for block in [&self.w1, &self.b1, &self.w2, &self.b2] {
            w.f64s(block)?;
        }
        for s in [&self.in_scaler, &self.out_scaler] {
            w.f64s(&s.mean)?;
            w.f64s(&s.std)?;
        }
        let m = &self.meta;
        w.u64(m.epochs as u64)?;
        w.f64(m.lr)?;
        w.f64(m.split)?;
        w.u64(m.batch as u64)?;
        w.u64(m.seed)?;
        w.f64(m.best_val_mse)?;
        w.u64(m.best_epoch as u64)?;
        w.f64(m.final_val_mse)?;
        w.u64(m.width_scores.len() as u64)?;
        for (width, score) in &m.width_scores {
            w.u64(*width as u64)?;
            w.f64(*score)?;
        }
        Ok(())
    }

    pub fn from_reader(r: impl std::io::Read) -> Result<Self> {
        let mut r = BinReader::new(r);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {version}")));
        }
        let dim = header_len(r.u64()?, "d")?;
        let hidden = header_len(r.u64()?, "hidden")?;
        if dim == 0 || hidden == 0 || dim > 1 << 16 || hidden > 1 << 20 {
            return Err(Error::Format(format!("bad model shape d={dim}, hidden={hidden}")));
        }
        let activation = Activation::from_name(&r.str()?).map_err(|e| Error::Format(e.to_string()))?;
        let dt = r.f64()?;
        let w1 = r.f64s(2 * dim * hidden)?;
        let b1 = r.f64s(hidden)?;
        let w2 = r.f64s(hidden * dim)?;
        let b2 = r.f64s(dim)?;
        let in_scaler = Scaler { mean: r.f64s(2 * dim)?, std: r.f64s(2 * dim)? };
        let out_scaler = Scaler { mean: r.f64s(dim)?, std: r.f64s(dim)? };
        let mut meta = TrainMeta {
            epochs: r.u64()? as usize,
            lr: r.f64()?,
            split: r.f64()?,
            batch: r.u64()? as usize,
            seed: r.u64()?,
            best_val_mse: r.f64()?,
            best_epoch: r.u64()? as usize,
            final_val_mse: r.f64()?,
            width_scores: Vec::new(),
        };
        let n = header_len(r.u64()?, "width count")?.min(1 << 16);
        for _ in 0..n {
            meta.width_scores.push((r.u64()? as usize, r.f64()?));
        }
        if !r.rest()?.is_empty() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        let model = Self { dim, hidden, activation, w1, b1, w2, b2, in_scaler, out_scaler, dt, meta };
        model.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(model)
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
}

impl FlowMap for FlowMapModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn increment(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut raw = [0.0; 32];
        let mut input = vec![0.0; 2 * d];
        raw[..d].copy_from_slice(x);
        if 2 * d <= raw.len() {
            raw[d..2 * d].copy_from_slice(z);
            self.in_scaler.apply(&raw[..2 * d], &mut input);
        } else {
            let joined: Vec<f64> = x.iter().chain(z).copied().collect();
            self.in_scaler.apply(&joined, &mut input);
        }
        let mut hidden = vec![0.0; self.hidden];
        let mut scaled = vec![0.0; d];
        self.forward_scaled(&input, &mut hidden, &mut scaled);
        self.out_scaler.invert(&scaled, out);
    }
}
