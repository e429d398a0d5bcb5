//! Inner loops of the score estimator, written so the compiler can
//! vectorize them. Reductions run over fixed lanes, so results do not depend
//! on the target's vector width.

const LANES: usize = 8;

/// `a·b + c`, fused when the target has FMA (a libm call otherwise).
#[inline(always)]
fn madd(a: f64, b: f64, c: f64) -> f64 {
    #[cfg(target_feature = "fma")]
    {
        a.mul_add(b, c)
    }
    #[cfg(not(target_feature = "fma"))]
    {
        a * b + c
    }
}

/// `e^x` for `x <= 0`, accurate to a couple of ulps; arguments below -708
/// are treated as -708. Branch-free so it vectorizes.
#[inline(always)]
pub fn exp_nonpositive(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // 1.5·2^52: adding it rounds to an integer held in the low mantissa bits.
    const SHIFT: f64 = 6_755_399_441_055_744.0;

    let x = if x < -708.0 { -708.0 } else { x };
    let x = if x > 0.0 { 0.0 } else { x };
    let t = madd(x, LOG2E, SHIFT);
    let k = t - SHIFT;
    let r = madd(-k, LN2_LO, madd(-k, LN2_HI, x));
    // Taylor polynomial of degree 12 on |r| <= ln2/2.
    let mut p = madd(1.0 / 479_001_600.0, r, 1.0 / 39_916_800.0);
    p = madd(p, r, 1.0 / 3_628_800.0);
    p = madd(p, r, 1.0 / 362_880.0);
    p = madd(p, r, 1.0 / 40_320.0);
    p = madd(p, r, 1.0 / 5_040.0);
    p = madd(p, r, 1.0 / 720.0);
    p = madd(p, r, 1.0 / 120.0);
    p = madd(p, r, 1.0 / 24.0);
    p = madd(p, r, 1.0 / 6.0);
    p = madd(p, r, 0.5);
    p = madd(p, r, 1.0);
    p = madd(p, r, 1.0);
    let bits = t.to_bits().wrapping_sub(SHIFT.to_bits()).wrapping_add(1023) << 52;
    f64::from_bits(bits) * p
}

/// Log-weights `spatial[i] - |z - α c_i|² / 2β²` into `logw`; returns their
/// maximum. `cols` holds the increments column-major, `dim` columns of
/// `k = spatial.len()` entries.
pub(crate) fn log_weights(cols: &[f64], spatial: &[f64], z: &[f64], alpha: f64, beta2: f64, logw: &mut [f64]) -> f64 {
    let k = spatial.len();
    let logw = &mut logw[..k];
    let scale = 0.5 / beta2;
    logw.copy_from_slice(spatial);
    for (col, zc) in cols.chunks_exact(k).zip(z) {
        for (o, c) in logw.iter_mut().zip(col) {
            let diff = madd(-alpha, *c, *zc);
            *o = madd(-diff * scale, diff, *o);
        }
    }
    let mut lanes = [f64::NEG_INFINITY; LANES];
    let mut chunks = logw.chunks_exact(LANES);
    for c in &mut chunks {
        for l in 0..LANES {
            lanes[l] = if c[l] > lanes[l] { c[l] } else { lanes[l] };
        }
    }
    chunks.remainder().iter().chain(&lanes).copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Accumulates `Σ_i w_i c_i` per column into `sums` for the unnormalized
/// weights `w_i = exp(logw_i - max)` and returns `Σ_i w_i`.
pub(crate) fn weighted_sums(logw: &[f64], max: f64, cols: &[f64], sums: &mut [f64]) -> f64 {
    let k = logw.len();
    // Exponentials go through a stack block: a plain elementwise map
    // vectorizes at full width, after which each column is a dot product.
    const BLOCK: usize = 512;
    let mut e = [0.0; BLOCK];
    let mut total = [0.0; LANES];
    let mut acc = vec![[0.0; LANES]; sums.len()];
    let mut tail = 0.0;
    let mut tail_acc = vec![0.0; sums.len()];
    for (b, lw) in logw.chunks(BLOCK).enumerate() {
        let e = &mut e[..lw.len()];
        exp_shifted(lw, max, e);
        tail += lane_sum(e, &mut total);
        let offset = b * BLOCK;
        for ((a, t), col) in acc.iter_mut().zip(tail_acc.iter_mut()).zip(cols.chunks_exact(k)) {
            *t += lane_dot(e, &col[offset..offset + lw.len()], a);
        }
    }
    for ((s, a), t) in sums.iter_mut().zip(&acc).zip(&tail_acc) {
        *s = pairwise_lanes(a) + t;
    }
    pairwise_lanes(&total) + tail
}

#[inline(always)]
fn exp_shifted(x: &[f64], shift: f64, out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o = exp_nonpositive(v - shift);
    }
}

/// Adds the full chunks of `x` into `lanes`; returns the sum of the tail.
#[inline(always)]
fn lane_sum(x: &[f64], lanes: &mut [f64; LANES]) -> f64 {
    let mut chunks = x.chunks_exact(LANES);
    for c in &mut chunks {
        for l in 0..LANES {
            lanes[l] += c[l];
        }
    }
    chunks.remainder().iter().sum()
}

/// Adds the full chunks of `x·y` into `lanes`; returns the tail's dot.
#[inline(always)]
fn lane_dot(x: &[f64], y: &[f64], lanes: &mut [f64; LANES]) -> f64 {
    let mut xc = x.chunks_exact(LANES);
    let mut yc = y.chunks_exact(LANES);
    for (a, b) in (&mut xc).zip(&mut yc) {
        for l in 0..LANES {
            lanes[l] = madd(a[l], b[l], lanes[l]);
        }
    }
    xc.remainder().iter().zip(yc.remainder()).fold(0.0, |t, (a, b)| madd(*a, *b, t))
}

/// Replaces `logw` by `exp(logw - max)` and returns their sum.
pub(crate) fn exponentiate(logw: &mut [f64], max: f64) -> f64 {
    for v in logw.iter_mut() {
        *v = exp_nonpositive(*v - max);
    }
    let mut lanes = [0.0; LANES];
    let tail = lane_sum(logw, &mut lanes);
    pairwise_lanes(&lanes) + tail
}

/// `Σ_i w_i c_i` over one column.
#[cfg(test)]
fn dot(w: &[f64], col: &[f64]) -> f64 {
    let mut lanes = [0.0; LANES];
    let tail = lane_dot(w, col, &mut lanes);
    pairwise_lanes(&lanes) + tail
}

#[inline]
fn pairwise_lanes(l: &[f64; LANES]) -> f64 {
    ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]))
}
