use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Silverman's rule `1.06 σ̂ n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid("bandwidth needs at least two samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::invalid("samples have zero variance; pass a bandwidth"));
    }
    Ok(1.06 * sd * n.powf(-0.2))
}

/// Gaussian kernel density estimate evaluated on `grid`.
pub fn kde_density(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("density estimate needs at least two samples"));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(samples)?,
    };
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid.iter().map(|g| samples.iter().map(|s| (-0.5 * ((g - s) / h).powi(2)).exp()).sum::<f64>() * norm).collect())
}

pub fn normal_cdf(mean: f64, std: f64) -> Result<impl Fn(f64) -> f64> {
    let n = Normal::new(mean, std).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(move |x| n.cdf(x))
}

/// One-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Total variation distance between the histograms of `a` and `b` over
/// `bins` shared uniform bins.
pub fn tv_distance(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() || bins == 0 {
        return Err(Error::invalid("need samples and bins"));
    }
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let hist = |v: &[f64]| {
        let mut h = vec![0.0; bins];
        for x in v {
            h[(((x - lo) / width) as usize).min(bins - 1)] += 1.0 / v.len() as f64;
        }
        h
    };
    Ok(0.5 * hist(a).iter().zip(hist(b)).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

/// Fractions of samples below and above `split`.
pub fn well_occupancy(samples: &[f64], split: f64) -> (f64, f64) {
    let n = samples.len().max(1) as f64;
    let left = samples.iter().filter(|x| **x < split).count() as f64;
    let right = samples.iter().filter(|x| **x > split).count() as f64;
    (left / n, right / n)
}
