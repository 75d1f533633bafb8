//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;

pub const DENSE_NODES: usize = 1_000_000;

/// Composite trapezoid rule for `∫_lo^hi exp(log_f(x)) dx`, rescaled by
/// `shift` to stay in range. Returns the natural log of the integral.
pub fn dense_log_trapezoid(lo: f64, hi: f64, shift: f64, log_f: impl Fn(f64) -> f64) -> f64 {
    let h = (hi - lo) / DENSE_NODES as f64;
    let f = |x: f64| (log_f(x) - shift).exp();
    let mut sum = 0.5 * (f(lo) + f(hi));
    for j in 1..DENSE_NODES {
        sum += f(lo + j as f64 * h);
    }
    (sum * h).ln() + shift
}

pub fn dense_beta_ratio(b: usize, n: usize, gamma: f64) -> f64 {
    let (b, n) = (b as f64, n as f64);
    let num = dense_log_trapezoid(0.0, gamma, 0.0, |p| {
        if p == 0.0 {
            f64::NEG_INFINITY
        } else {
            b * p.ln() + (n - b - 1.0) * (1.0 - p).ln()
        }
    });
    let den = dense_log_trapezoid(0.0, gamma, 0.0, |p| {
        let lead = if b == 1.0 {
            0.0
        } else if p == 0.0 {
            f64::NEG_INFINITY
        } else {
            (b - 1.0) * p.ln()
        };
        lead + (n - b) * (1.0 - p).ln()
    });
    num - den
}

pub fn dense_w_integral(within: f64, between: f64, n_eff: usize, lambda: f64, e: u32) -> f64 {
    let a = f64::from(e) / 2.0;
    let k = (n_eff as f64 - 1.0) / 2.0;
    let shift = -k * within.ln();
    dense_log_trapezoid(0.0, lambda, shift, |w| {
        let lead = if e == 0 {
            0.0
        } else if w == 0.0 {
            f64::NEG_INFINITY
        } else {
            a * w.ln()
        };
        lead - k * (within + between * w).ln()
    })
}

/// Within/between sums by explicit double loop over blocks of raw values.
pub fn brute_block_sums(x: &[f64], indicators: &[bool]) -> (f64, f64) {
    let n = x.len();
    let grand: f64 = x.iter().sum::<f64>() / n as f64;
    let mut bounds = vec![0];
    for (i, &u) in indicators.iter().enumerate() {
        if u {
            bounds.push(i + 1);
        }
    }
    bounds.push(n);
    let (mut w, mut b) = (0.0, 0.0);
    for pair in bounds.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        let mut mean = 0.0;
        for v in &x[i..j] {
            mean += v;
        }
        mean /= (j - i) as f64;
        for v in &x[i..j] {
            w += (v - mean).powi(2);
        }
        b += (j - i) as f64 * (mean - grand).powi(2);
    }
    (w, b)
}

/// Mean of the finite cells in the clipped `w × w` window, by direct loop.
pub fn brute_box_mean(a: &Array2<f64>, w: usize) -> Array2<f64> {
    let (h, wd) = a.dim();
    let half = (w / 2) as isize;
    Array2::from_shape_fn((h, wd), |(r, c)| {
        if a[[r, c]].is_nan() {
            return f64::NAN;
        }
        let (mut s, mut n) = (0.0, 0.0);
        for dr in -half..=half {
            for dc in -half..=half {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr < 0 || cc < 0 || rr >= h as isize || cc >= wd as isize {
                    continue;
                }
                let v = a[[rr as usize, cc as usize]];
                if !v.is_nan() {
                    s += v;
                    n += 1.0;
                }
            }
        }
        s / n
    })
}

/// Within-class variance of splitting `counts` at edge `k`, computed
/// directly over bin centres `lo + (j + 0.5) width`.
pub fn otsu_objective(counts: &[u64], lo: f64, width: f64, k: usize) -> f64 {
    let total: u64 = counts.iter().sum();
    let class = |range: std::ops::Range<usize>| {
        let mass: u64 = counts[range.clone()].iter().sum();
        if mass == 0 {
            return 0.0;
        }
        let mut mean = 0.0;
        for j in range.clone() {
            mean += counts[j] as f64 * (lo + (j as f64 + 0.5) * width);
        }
        mean /= mass as f64;
        let mut var = 0.0;
        for j in range {
            var += counts[j] as f64 * (lo + (j as f64 + 0.5) * width - mean).powi(2);
        }
        var / total as f64
    };
    class(0..k) + class(k..counts.len())
}

/// First edge index in `1..bins` minimizing [`otsu_objective`].
pub fn exhaustive_otsu(counts: &[u64], lo: f64, width: f64) -> usize {
    let mut best = (f64::INFINITY, 1);
    for k in 1..counts.len() {
        let v = otsu_objective(counts, lo, width, k);
        if v < best.0 {
            best = (v, k);
        }
    }
    best.1
}

/// Equal-width histogram of the finite values over their own range.
pub fn brute_histogram(values: &[f64], bins: usize) -> (Vec<u64>, f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in finite {
        let j = (((v - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1);
        counts[j] += 1;
    }
    (counts, lo, width)
}

/// (tp, fp, fn, tn) by explicit loop; label 1 is flood, 0 is dry, other
/// labels and NoData predictions are skipped.
pub fn loop_confusion(pred: &Array2<Option<bool>>, labels: &Array2<u8>) -> [u64; 4] {
    let mut out = [0u64; 4];
    for r in 0..pred.nrows() {
        for c in 0..pred.ncols() {
            let Some(p) = pred[[r, c]] else { continue };
            match (p, labels[[r, c]]) {
                (true, 1) => out[0] += 1,
                (true, 0) => out[1] += 1,
                (false, 1) => out[2] += 1,
                (false, 0) => out[3] += 1,
                _ => {}
            }
        }
    }
    out
}
