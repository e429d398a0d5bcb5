use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::sde::ObservationSet;

/// The observation pairs nearest to a conditioning state, with their fixed
/// spatial log-weights `-|x - x_m|² / 2ν²`.
///
/// Indices are ordered by increasing distance, ties by increasing index. The
/// selected increments are kept column-major for the score kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborSubset {
    pub indices: Vec<usize>,
    pub spatial_logw: Vec<f64>,
    pub nu: f64,
    pub x_query: Vec<f64>,
    pub(crate) dim: usize,
    pub(crate) increments: Vec<f64>,
}

impl NeighborSubset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Increments of the selected pairs, `[coord][neighbor]`.
    pub fn increment_column(&self, coord: usize) -> &[f64] {
        let k = self.len();
        &self.increments[coord * k..(coord + 1) * k]
    }

    pub fn digest(&self) -> String {
        let mut bytes = Vec::with_capacity(self.len() * 16 + self.increments.len() * 8);
        for (i, w) in self.indices.iter().zip(&self.spatial_logw) {
            bytes.extend_from_slice(&(*i as u64).to_le_bytes());
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        for v in self.x_query.iter().chain(&self.increments).chain([&self.nu]) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        sha256_hex(&bytes)
    }
}

/// `⌈fraction · M⌉`, ignoring rounding noise in the product, at least 1.
pub fn subset_size(m: usize, fraction: f64) -> usize {
    let raw = fraction * m as f64;
    let k = if (raw - raw.round()).abs() <= 1e-9 * raw.max(1.0) { raw.round() } else { raw.ceil() };
    (k as usize).clamp(1, m.max(1))
}

fn validate(obs: &ObservationSet, x: &[f64], fraction: f64, nu: f64) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::invalid("observation set is empty"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("neighbor fraction must lie in (0, 1], got {fraction}")));
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!("bandwidth nu must be positive, got {nu}")));
    }
    if x.len() != obs.dim {
        return Err(Error::invalid(format!("query has dimension {}, observations {}", x.len(), obs.dim)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("query state {x:?}")));
    }
    Ok(())
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

fn finish(obs: &ObservationSet, x: &[f64], nu: f64, mut chosen: Vec<Candidate>) -> NeighborSubset {
    chosen.sort_unstable();
    let dim = obs.dim;
    let k = chosen.len();
    let inv = 0.5 / (nu * nu);
    let mut increments = vec![0.0; dim * k];
    for (i, c) in chosen.iter().enumerate() {
        for (coord, v) in obs.increment(c.index).iter().enumerate() {
            increments[coord * k + i] = *v;
        }
    }
    NeighborSubset {
        indices: chosen.iter().map(|c| c.index).collect(),
        spatial_logw: chosen.iter().map(|c| -c.d2 * inv).collect(),
        nu,
        x_query: x.to_vec(),
        dim,
        increments,
    }
}

/// Exact `k`-nearest selection by a full scan and partial sort.
pub fn select_neighbors(obs: &ObservationSet, x: &[f64], fraction: f64, nu: f64) -> Result<NeighborSubset> {
    validate(obs, x, fraction, nu)?;
    let m = obs.len();
    let k = subset_size(m, fraction);
    let mut all: Vec<Candidate> = (0..m).map(|index| Candidate { d2: sq_dist(x, obs.state(index)), index }).collect();
    if k < m {
        all.select_nth_unstable(k - 1);
        all.truncate(k);
    }
    Ok(finish(obs, x, nu, all))
}

/// Observation states sorted along their widest coordinate, for repeated
/// exact nearest-neighbor queries against one observation set.
///
/// A query walks outwards from the query's position in the sorted order and
/// stops once the distance along the sort axis alone exceeds the current
/// `k`-th best distance. The result is identical to [`select_neighbors`].
#[derive(Clone, Debug)]
pub struct NeighborIndex<'a> {
    obs: &'a ObservationSet,
    axis: usize,
    keys: Vec<f64>,
    order: Vec<usize>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(obs: &'a ObservationSet) -> Self {
        let d = obs.dim;
        let m = obs.len();
        let axis = (0..d)
            .map(|c| {
                let (lo, hi) = (0..m).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = obs.x[i * d + c];
                    (lo.min(v), hi.max(v))
                });
                (c, hi - lo)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(c, _)| c);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_unstable_by(|&a, &b| obs.x[a * d + axis].total_cmp(&obs.x[b * d + axis]).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| obs.x[i * d + axis]).collect();
        Self { obs, axis, keys, order }
    }

    pub fn observations(&self) -> &'a ObservationSet {
        self.obs
    }

    pub fn select(&self, x: &[f64], fraction: f64, nu: f64) -> Result<NeighborSubset> {
        validate(self.obs, x, fraction, nu)?;
        let m = self.obs.len();
        let k = subset_size(m, fraction);
        let q = x[self.axis];
        let start = self.keys.partition_point(|v| *v < q);
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let (mut lo, mut hi) = (start, start);
        loop {
            let gap_lo = (lo > 0).then(|| (q - self.keys[lo - 1]) * (q - self.keys[lo - 1]));
            let gap_hi = (hi < m).then(|| (self.keys[hi] - q) * (self.keys[hi] - q));
            let take_lo = match (gap_lo, gap_hi) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(a), Some(b)) => a <= b,
            };
            let gap = if take_lo { gap_lo.unwrap() } else { gap_hi.unwrap() };
            if heap.len() == k && gap > heap.peek().map_or(f64::INFINITY, |c| c.d2) {
                break;
            }
            let pos = if take_lo {
                lo -= 1;
                lo
            } else {
                hi += 1;
                hi - 1
            };
            let index = self.order[pos];
            let cand = Candidate { d2: sq_dist(x, self.obs.state(index)), index };
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().expect("non-empty heap") {
                heap.pop();
                heap.push(cand);
            }
        }
        Ok(finish(self.obs, x, nu, heap.into_vec()))
    }
}
