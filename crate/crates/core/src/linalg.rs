//! Small dense kernels shared by the coder and the dictionary update.
//!
//! Reductions use a fixed accumulation order so results do not depend on
//! thread count.

/// Dot product with four interleaved accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dominant singular triple `(u, sigma, v)` of an `m × k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1 {
    pub u: Vec<f64>,
    pub sigma: f64,
    pub v: Vec<f64>,
    pub iterations: usize,
}

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 1000;

/// Best rank-1 approximation of the matrix whose columns are the
/// consecutive length-`m` chunks of `cols`.
///
/// Power iteration runs on the `m × m` Gram matrix `E Eᵀ`, started from the
/// first nonzero column of `E`. The sign is fixed so that the
/// largest-magnitude entry of `u` is positive. Returns `None` for an
/// all-zero matrix.
pub fn dominant_rank1(cols: &[f64], m: usize) -> Option<Rank1> {
    assert!(m > 0 && cols.len().is_multiple_of(m));
    let columns = || cols.chunks_exact(m);
    let start = columns().find(|c| c.iter().any(|&v| v != 0.0))?;

    let mut gram = vec![0.0f64; m * m];
    for col in columns() {
        for a in 0..m {
            let ca = col[a];
            if ca == 0.0 {
                continue;
            }
            let row = &mut gram[a * m..a * m + m];
            for b in a..m {
                row[b] += ca * col[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            gram[a * m + b] = gram[b * m + a];
        }
    }

    let mut u: Vec<f64> = start.to_vec();
    let n0 = norm(&u);
    u.iter_mut().for_each(|x| *x /= n0);
    let mut next = vec![0.0f64; m];
    let mut iterations = 0;
    while iterations < POWER_MAX_ITERS {
        iterations += 1;
        for (a, out) in next.iter_mut().enumerate() {
            *out = dot(&gram[a * m..a * m + m], &u);
        }
        let n = norm(&next);
        if n == 0.0 || !n.is_finite() {
            break;
        }
        next.iter_mut().for_each(|x| *x /= n);
        let change = u
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut u, &mut next);
        if change < POWER_TOL {
            break;
        }
    }

    let pivot = u
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1.abs() { (i, x) } else { best })
        .0;
    if u[pivot] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }

    let mut v: Vec<f64> = columns().map(|c| dot(c, &u)).collect();
    let sigma = norm(&v);
    if sigma == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= sigma);
    Some(Rank1 {
        u,
        sigma,
        v,
        iterations,
    })
}
