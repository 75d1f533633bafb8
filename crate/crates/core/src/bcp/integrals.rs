//! The two integral factors of the conditional changepoint odds.
//!
//! The first factor integrates the changepoint probability `p` over its
//! uniform prior on `(0, gamma)`; with integer exponents it reduces to a ratio
//! of regularized incomplete beta functions, which are evaluated exactly as
//! binomial tail sums in log space.
//!
//! The second factor integrates the variance ratio `w` over `(0, lambda)`:
//!
//! ```text
//! I(e) = ∫_0^λ w^{e/2} / (W + B w)^{k} dw,   k = (n_eff - 1) / 2
//! ```
//!
//! and is evaluated by composite Gauss–Legendre quadrature on decade panels
//! `[λ/10, λ]`, `[λ/100, λ/10]`, …, `[0, c]`, accumulated with log-sum-exp.
//! Extra decades are added when `W/B` is small so that the innermost panel
//! ends within ten peak widths of zero. On the innermost panel odd `e` uses
//! the substitution `w = c s²`, which removes the square-root behaviour at
//! the origin.

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Upper bound on decade splits; reached only for `W/B` below about 1e-38.
const MAX_DECADES: usize = 40;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pairs: Vec<(f64, f64)>,
}

impl QuadratureRule {
    pub fn new(nodes: usize) -> Result<Self> {
        let rule = GaussLegendre::new(nodes)
            .map_err(|e| Error::Parameter(format!("quadrature_nodes = {nodes}: {e}")))?;
        Ok(Self {
            pairs: rule.into_node_weight_pairs(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Adds `∫_lo^hi exp(log_f(w)) dw` to `acc`; `log_f` receives `(w, ln w)`.
    fn panel(&self, lo: f64, hi: f64, acc: &mut LogSum, log_f: impl Fn(f64, f64) -> f64) {
        let half = 0.5 * (hi - lo);
        let ln_half = half.ln();
        for &(x, wt) in &self.pairs {
            let w = lo + half * (x + 1.0);
            acc.add(ln_half + wt.ln() + log_f(w, w.ln()));
        }
    }
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub(crate) fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    pub(crate) fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// `ln k!` for `k = 0..=n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `ln I_x(a, c)` for positive integers `a`, `c`, using
/// `I_x(a, c) = P(Binomial(a + c - 1, x) >= a)`.
fn ln_regularized_beta(a: usize, c: usize, x: f64, ln_fact: &[f64]) -> f64 {
    if x >= 1.0 {
        return 0.0;
    }
    let m = a + c - 1;
    let ln_x = x.ln();
    let ln_1mx = (-x).ln_1p();
    let mut acc = LogSum::new();
    for j in a..=m {
        let ln_choose = ln_fact[m] - ln_fact[j] - ln_fact[m - j];
        acc.add(ln_choose + j as f64 * ln_x + (m - j) as f64 * ln_1mx);
    }
    acc.value()
}

fn check_beta_args(b: usize, n: usize, gamma: f64) -> Result<()> {
    if b == 0 || b >= n {
        return Err(Error::Domain(format!(
            "block count b = {b} must satisfy 1 <= b < n = {n}"
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must lie in (0, 1]")));
    }
    Ok(())
}

/// Log of `∫_0^γ p^b (1-p)^{n-b-1} dp / ∫_0^γ p^{b-1} (1-p)^{n-b} dp`.
///
/// The complete beta functions cancel to `b / (n - b)`, leaving the ratio of
/// the two regularized incomplete beta values at `γ`.
pub fn incomplete_beta_ratio(b: usize, n: usize, gamma: f64) -> Result<f64> {
    check_beta_args(b, n, gamma)?;
    let ln_fact = ln_factorials(n);
    Ok(beta_ratio_with(b, n, gamma, &ln_fact))
}

fn beta_ratio_with(b: usize, n: usize, gamma: f64, ln_fact: &[f64]) -> f64 {
    let complete = (b as f64).ln() - ((n - b) as f64).ln();
    complete + ln_regularized_beta(b + 1, n - b, gamma, ln_fact)
        - ln_regularized_beta(b, n - b + 1, gamma, ln_fact)
}

/// Table of [`incomplete_beta_ratio`] for every `b` in `1..n`; index 0 is unused.
pub(crate) fn beta_ratio_table(n: usize, gamma: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Ok(vec![f64::NAN; n.max(1)]);
    }
    check_beta_args(1, n, gamma)?;
    let ln_fact = ln_factorials(n);
    let mut table = vec![f64::NAN; n];
    for (b, slot) in table.iter_mut().enumerate().skip(1) {
        *slot = beta_ratio_with(b, n, gamma, &ln_fact);
    }
    Ok(table)
}

/// Log of `∫_0^λ w^{e/2} / (W + B w)^{(n_eff - 1)/2} dw`.
///
/// `half_exponent` is `e`: the block count for the split partition's
/// numerator term and one less than that for the merged partition.
/// Returns `+∞` when `W = 0` and the integral diverges at the origin.
pub fn variance_ratio_integral(
    within: f64,
    between: f64,
    n_eff: usize,
    lambda: f64,
    half_exponent: u32,
    rule: &QuadratureRule,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} must lie in (0, 1]"
        )));
    }
    if n_eff == 0 {
        return Err(Error::Domain("n_eff must be positive".into()));
    }
    if !(within >= 0.0 && between >= 0.0) || !within.is_finite() || !between.is_finite() {
        return Err(Error::Domain(format!(
            "sums of squares must be finite and non-negative (W = {within}, B = {between})"
        )));
    }
    let power = (n_eff - 1) as f64 / 2.0;
    log_w_integral(within, between, power, half_exponent, lambda, rule)
}

/// Core of [`variance_ratio_integral`] with the denominator power given directly.
pub(crate) fn log_w_integral(
    within: f64,
    between: f64,
    power: f64,
    half_exponent: u32,
    lambda: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    let scale = within + between * lambda;
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::DegenerateVariance(scale));
    }
    let a = f64::from(half_exponent) / 2.0;

    if within == 0.0 {
        // ∫ w^{a-k} B^{-k} dw, finite only when a - k + 1 > 0.
        let p = a + 1.0 - power;
        return Ok(if p > 0.0 {
            -power * between.ln() + p * lambda.ln() - p.ln()
        } else {
            f64::INFINITY
        });
    }

    let mut decades = 2usize;
    if between > 0.0 {
        let tau = within / between;
        let need = (lambda / (10.0 * tau)).log10().ceil();
        if need > decades as f64 {
            decades = (need as usize).min(MAX_DECADES);
        }
    }

    let log_f = |w: f64, ln_w: f64| a * ln_w - power * (within + between * w).ln();
    let mut acc = LogSum::new();

    let inner = lambda * 10f64.powi(-(decades as i32));
    if half_exponent % 2 == 1 {
        // w = c s², dw = 2 c s ds over s in [0, 1].
        let ln_c = inner.ln();
        for &(x, wt) in &rule.pairs {
            let s = 0.5 * (x + 1.0);
            let ln_s = s.ln();
            let w = inner * s * s;
            let ln_w = ln_c + 2.0 * ln_s;
            acc.add(wt.ln() + ln_c + ln_s + log_f(w, ln_w));
        }
    } else {
        rule.panel(0.0, inner, &mut acc, log_f);
    }
    for j in (0..decades).rev() {
        let hi = lambda * 10f64.powi(-(j as i32));
        let lo = hi / 10.0;
        rule.panel(lo, hi, &mut acc, log_f);
    }
    Ok(acc.value())
}

/// Combines `ln(beta ratio)` with the split and merged `w`-integrals.
///
/// `W = 0` limits: a finite merged integral against a divergent split one
/// gives `+∞`; a divergent merged integral (which forces `W = 0` in the split
/// partition too) gives `−∞`, the `W → 0` limit of the ratio.
pub(crate) fn combine_log_odds(log_beta: f64, ln_split: f64, ln_merged: f64) -> f64 {
    if ln_merged.is_infinite() {
        f64::NEG_INFINITY
    } else if ln_split.is_infinite() {
        f64::INFINITY
    } else {
        log_beta + ln_split - ln_merged
    }
}
