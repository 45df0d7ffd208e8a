//! Contiguous-slice distance kernels.
//!
//! The reductions use eight independent lanes so the compiler can keep them
//! in vector registers. The lane layout is fixed, which keeps results
//! bitwise reproducible across runs on the same build.

const LANES: usize = 8;

/// Squared Euclidean distance between two equal-length slices.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let chunks_a = a.chunks_exact(LANES);
    let chunks_b = b.chunks_exact(LANES);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for lane in 0..LANES {
            let d = ca[lane] - cb[lane];
            acc[lane] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in tail_a.iter().zip(tail_b) {
        let d = x - y;
        tail += d * d;
    }
    let s0 = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let s1 = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}

/// Inner product accumulated in double precision.
#[inline]
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let chunks_a = a.chunks_exact(LANES);
    let chunks_b = b.chunks_exact(LANES);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for lane in 0..LANES {
            acc[lane] += ca[lane] as f64 * cb[lane] as f64;
        }
    }
    let mut tail = 0.0f64;
    for (x, y) in tail_a.iter().zip(tail_b) {
        tail += *x as f64 * *y as f64;
    }
    let s0 = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let s1 = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}

/// Index of the row of `rows` (row-major, `dim` columns) closest to `query`,
/// together with its squared distance. Ties resolve to the lower index.
pub fn nearest_row(query: &[f32], rows: &[f32], dim: usize) -> Option<(usize, f32)> {
    let mut best: Option<(usize, f32)> = None;
    for (i, row) in rows.chunks_exact(dim).enumerate() {
        let d = squared_l2(query, row);
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best
}
