//! Exact means and variances of the small counts as certified series.
//!
//! Every series is sum_k f(p_k) with f(p) ~ c p as p -> 0. Terms are summed
//! directly up to K, where s p_K <= 0.1 (s = t or n); the tail is replaced by
//! Euler-Maclaurin with the first derivative correction,
//!
//!   sum_{k > K} f(k) = int_{K+1}^inf f + f(K+1)/2 - f'(K+1)/12 + R,
//!   |R| <= 2 zeta(3) / (2 pi)^3 * |f''(K+1)|,
//!
//! valid when f''' keeps one sign beyond K (true for u <= 0.1 for all
//! families here). |f''(K+1)| is bounded by the backward second difference.
//! The integral is c s W(K+1) plus a quadrature of f - c s p in log x, cut
//! where |f - c s p| <= 2 (s p)^2 makes the remainder below tol / 100.
//! `error_bound` covers truncation only; rounding in the head sum is not
//! included.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{integrate, ln_binomial, poisson_pmf, poisson_sf, CompensatedSum};
use crate::weights::WeightModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("series truncation failed: bound {bound:e} exceeds tol {tol:e} at K = {k}")]
    TruncationFailure { k: u64, bound: f64, tol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountKind {
    /// K_j^*: boxes with exactly j balls.
    ExactlyJ,
    /// K_j: boxes with at least j balls.
    AtLeastJ,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub value: f64,
    pub error_bound: f64,
    pub k_truncation: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct SeriesOptions {
    /// Absolute truncation budget.
    pub tol: f64,
    /// Largest number of directly summed terms.
    pub max_k: u64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_k: 1 << 30 }
    }
}

impl SeriesOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

const EM_REMAINDER: f64 = 2.0 * 1.202_056_903_159_594_3 / 248.050_213_442_398_56;
const HEAD_CHUNK: u64 = 1 << 16;

/// A summand f(p) together with df/dp and its linear coefficient at p = 0.
#[derive(Clone, Copy, Debug)]
enum Term {
    PoissonMean { j: u32, t: f64, kind: CountKind },
    PoissonVar { j: u32, t: f64, kind: CountKind },
    BinomialMean { j: u64, n: u64, kind: CountKind, ln_c: f64 },
    BinomialVar { j: u64, n: u64, ln_c: f64 },
}

fn poisson_prob(j: u32, u: f64, kind: CountKind) -> (f64, f64) {
    // value and d/du
    match kind {
        CountKind::ExactlyJ => {
            let v = poisson_pmf(j, u);
            let below = if j == 0 {
                0.0
            } else if u > 0.0 {
                v * j as f64 / u
            } else {
                poisson_pmf(j - 1, u)
            };
            (v, below - v)
        }
        CountKind::AtLeastJ => {
            let v = poisson_sf(j, u);
            let d = if j == 0 { 0.0 } else { poisson_pmf(j - 1, u) };
            (v, d)
        }
    }
}

/// P(Bin(n, p) >= j) and its p-derivative n * P(Bin(n-1, p) = j-1).
fn binomial_sf(j: u64, n: u64, p: f64) -> (f64, f64) {
    let ln_q = (-p).ln_1p();
    let ln_p = p.ln();
    let pmf = |i: u64| (ln_binomial(n, i) + i as f64 * ln_p + (n - i) as f64 * ln_q).exp();
    let d = if j == 0 {
        0.0
    } else {
        n as f64 * (ln_binomial(n - 1, j - 1) + (j - 1) as f64 * ln_p + (n - j) as f64 * ln_q).exp()
    };
    if j == 0 {
        return (1.0, 0.0);
    }
    let mean = n as f64 * p;
    if mean < j as f64 {
        let mut acc = CompensatedSum::new();
        let mut term = pmf(j);
        let mut i = j;
        loop {
            acc.add(term);
            if i == n || term < acc.value() * 1e-18 {
                break;
            }
            term *= (n - i) as f64 / (i + 1) as f64 * p / (1.0 - p);
            i += 1;
        }
        (acc.value(), d)
    } else {
        let mut acc = CompensatedSum::new();
        for i in 0..j {
            acc.add(pmf(i));
        }
        (1.0 - acc.value(), d)
    }
}

impl Term {
    fn scale(&self) -> f64 {
        match *self {
            Term::PoissonMean { t, .. } | Term::PoissonVar { t, .. } => t,
            Term::BinomialMean { n, .. } | Term::BinomialVar { n, .. } => n as f64,
        }
    }

    fn linear(&self) -> f64 {
        match *self {
            Term::PoissonMean { j: 1, t, .. } | Term::PoissonVar { j: 1, t, .. } => t,
            Term::BinomialMean { j: 1, n, .. } | Term::BinomialVar { j: 1, n, .. } => n as f64,
            _ => 0.0,
        }
    }

    /// f(p) and df/dp.
    #[inline]
    fn eval(&self, p: f64) -> (f64, f64) {
        match *self {
            Term::PoissonMean { j, t, kind } => {
                let (v, d) = poisson_prob(j, t * p, kind);
                (v, d * t)
            }
            Term::PoissonVar { j, t, kind } => {
                let (v, d) = poisson_prob(j, t * p, kind);
                (v * (1.0 - v), (1.0 - 2.0 * v) * d * t)
            }
            Term::BinomialMean { j, n, kind, ln_c } => match kind {
                CountKind::ExactlyJ => binomial_exact(j, n, ln_c, p),
                CountKind::AtLeastJ => binomial_sf(j, n, p),
            },
            Term::BinomialVar { j, n, ln_c } => {
                let (v, d) = binomial_exact(j, n, ln_c, p);
                (v * (1.0 - v), (1.0 - 2.0 * v) * d)
            }
        }
    }

    #[inline]
    fn value(&self, p: f64) -> f64 {
        self.eval(p).0
    }
}

/// C(n,j) p^j (1-p)^{n-j} and its p-derivative.
#[inline]
fn binomial_exact(j: u64, n: u64, ln_c: f64, p: f64) -> (f64, f64) {
    if p >= 1.0 {
        let v = if j == n { 1.0 } else { 0.0 };
        return (v, 0.0);
    }
    let v = (ln_c + j as f64 * p.ln() + (n - j) as f64 * (-p).ln_1p()).exp();
    (v, v * (j as f64 / p - (n - j) as f64 / (1.0 - p)))
}

fn sum_range(model: &WeightModel, term: &Term, lo: u64, hi: u64) -> f64 {
    // sum over k in [lo, hi], chunked so the result does not depend on threads
    if hi < lo {
        return 0.0;
    }
    let chunks: Vec<(u64, u64)> = (0..=(hi - lo) / HEAD_CHUNK)
        .map(|c| {
            let a = lo + c * HEAD_CHUNK;
            (a, (a + HEAD_CHUNK - 1).min(hi))
        })
        .collect();
    let partial: Vec<f64> = chunks
        .par_iter()
        .map(|&(a, b)| {
            let mut acc = CompensatedSum::new();
            for p in model.probs(a, b) {
                acc.add(term.value(p));
            }
            acc.value()
        })
        .collect();
    partial.into_iter().sum::<CompensatedSum>().value()
}

struct TailEstimate {
    value: f64,
    error: f64,
}

fn tail_from(model: &WeightModel, term: &Term, k: u64, tol: f64) -> TailEstimate {
    let s = term.scale();
    let lin = term.linear();
    let x = (k + 1) as f64;
    let p1 = model.prob_at(x);
    let (f1, dfdp) = term.eval(p1);
    let df = dfdp * p1 * model.d_ln_weight(x);
    let f0 = term.value(model.prob(k));
    let fm = term.value(model.prob(k - 1));
    let second = (fm - 2.0 * f0 + f1).abs();
    let remainder = 2.0 * EM_REMAINDER * second;

    // integral of the nonlinear part, cut where its remainder is negligible
    let budget = tol / 100.0;
    let mut x_end = 2.0 * x;
    let beyond = |xe: f64| 2.0 * s * s * model.prob_at(xe) * model.tail_integral(xe);
    while beyond(x_end) > budget && x_end < 1e280 {
        x_end *= 2.0;
    }
    let (y0, y1) = (x.ln(), x_end.ln());
    let pieces = ((y1 - y0) / 0.5).ceil().max(1.0) as usize;
    let (nonlinear, quad_err) = integrate(
        |y| {
            let xx = y.exp();
            let p = model.prob_at(xx);
            (term.value(p) - lin * p) * xx
        },
        y0,
        y1,
        budget,
        pieces,
    );
    let linear_part = if lin != 0.0 { lin * model.tail_integral(x) } else { 0.0 };
    TailEstimate {
        value: linear_part + nonlinear + 0.5 * f1 - df / 12.0,
        error: remainder + quad_err + beyond(x_end),
    }
}

fn certified_series(model: &WeightModel, term: Term, opts: &SeriesOptions) -> Result<MomentResult, MomentError> {
    if let Some(n) = model.num_boxes() {
        return Ok(MomentResult { value: sum_range(model, &term, 1, n), error_bound: 0.0, k_truncation: n });
    }
    if !(opts.tol > 0.0) {
        return Err(MomentError::InvalidArgument(format!("tol must be positive, got {}", opts.tol)));
    }
    let start = model.rho(10.0 * term.scale()).saturating_add(1).max(64);
    if start > opts.max_k {
        return Err(MomentError::TruncationFailure { k: start, bound: f64::INFINITY, tol: opts.tol });
    }
    let mut k = start;
    let mut head = CompensatedSum::new();
    head.add(sum_range(model, &term, 1, k));
    loop {
        let tail = tail_from(model, &term, k, opts.tol);
        if tail.error <= opts.tol {
            let mut total = head;
            total.add(tail.value);
            return Ok(MomentResult { value: total.value(), error_bound: tail.error, k_truncation: k });
        }
        let next = k.saturating_mul(2);
        if next > opts.max_k {
            return Err(MomentError::TruncationFailure { k, bound: tail.error, tol: opts.tol });
        }
        head.add(sum_range(model, &term, k + 1, next));
        k = next;
    }
}

fn check_args(j: u32, scale: f64) -> Result<(), MomentError> {
    if j == 0 {
        return Err(MomentError::InvalidArgument("j must be >= 1".into()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(MomentError::InvalidArgument(format!("horizon must be positive and finite, got {scale}")));
    }
    Ok(())
}

/// E K_j^*(t) or E K_j(t) in the Poissonized scheme.
pub fn mean_poisson_exact(
    model: &WeightModel,
    j: u32,
    t: f64,
    kind: CountKind,
    opts: &SeriesOptions,
) -> Result<MomentResult, MomentError> {
    check_args(j, t)?;
    certified_series(model, Term::PoissonMean { j, t, kind }, opts)
}

/// Var K_j^*(t) or Var K_j(t): sum of pi_k (1 - pi_k) over independent boxes.
pub fn var_poisson_exact(
    model: &WeightModel,
    j: u32,
    t: f64,
    kind: CountKind,
    opts: &SeriesOptions,
) -> Result<MomentResult, MomentError> {
    check_args(j, t)?;
    certified_series(model, Term::PoissonVar { j, t, kind }, opts)
}

/// The right-hand side E K_j^*(t) - 4^{-j} C(2j, j) E K_{2j}^*(2t) of the
/// variance identity, computed from means only.
pub fn var_identity_rhs(model: &WeightModel, j: u32, t: f64, opts: &SeriesOptions) -> Result<MomentResult, MomentError> {
    check_args(j, t)?;
    let half = SeriesOptions { tol: opts.tol / 2.0, ..*opts };
    let a = mean_poisson_exact(model, j, t, CountKind::ExactlyJ, &half)?;
    let b = mean_poisson_exact(model, 2 * j, 2.0 * t, CountKind::ExactlyJ, &half)?;
    let c = (ln_binomial(2 * j as u64, j as u64) - j as f64 * 4f64.ln()).exp();
    Ok(MomentResult {
        value: a.value - c * b.value,
        error_bound: a.error_bound + c * b.error_bound,
        k_truncation: a.k_truncation.max(b.k_truncation),
    })
}

/// E of the count after n balls (fixed-n scheme).
pub fn mean_binomial_exact(
    model: &WeightModel,
    j: u32,
    n: u64,
    kind: CountKind,
    opts: &SeriesOptions,
) -> Result<MomentResult, MomentError> {
    check_args(j, n as f64)?;
    if (j as u64) > n {
        return Ok(MomentResult { value: 0.0, error_bound: 0.0, k_truncation: 0 });
    }
    let ln_c = ln_binomial(n, j as u64);
    certified_series(model, Term::BinomialMean { j: j as u64, n, kind, ln_c }, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomialVariance {
    pub value: f64,
    /// sum_k P_k (1 - P_k), certified.
    pub diagonal: MomentResult,
    /// sum over i != k <= k_used of the covariances.
    pub cross: f64,
    pub k_used: u64,
    /// Heuristic size of the omitted covariances beyond k_used.
    pub residual_estimate: f64,
    /// True when no covariance was omitted.
    pub exact_cross: bool,
}

/// Var of the exactly-j count after n balls, with the O(k^2) covariance
/// sum truncated at `k_cap`.
pub fn var_binomial_exact(
    model: &WeightModel,
    j: u32,
    n: u64,
    k_cap: u64,
    opts: &SeriesOptions,
) -> Result<BinomialVariance, MomentError> {
    check_args(j, n as f64)?;
    let jj = j as u64;
    if jj > n {
        let zero = MomentResult { value: 0.0, error_bound: 0.0, k_truncation: 0 };
        return Ok(BinomialVariance { value: 0.0, diagonal: zero, cross: 0.0, k_used: 0, residual_estimate: 0.0, exact_cross: true });
    }
    let ln_c = ln_binomial(n, jj);
    let diagonal = certified_series(model, Term::BinomialVar { j: jj, n, ln_c }, opts)?;
    let mean_term = Term::BinomialMean { j: jj, n, kind: CountKind::ExactlyJ, ln_c };

    let full = model.num_boxes();
    let k_used = match full {
        Some(m) => m.min(k_cap),
        None => diagonal.k_truncation.min(k_cap),
    };
    let exact_cross = full.is_some_and(|m| m <= k_cap);

    let probs = model.probs(1, k_used);
    let ln_q: Vec<f64> = probs.iter().map(|&p| (-p).ln_1p()).collect();
    let big_p: Vec<f64> = probs.iter().map(|&p| mean_term.value(p)).collect();
    let ratio0 = if n >= 2 * jj { ln_binomial(n - jj, jj) - ln_c } else { f64::NEG_INFINITY };
    let cross_row = |i: usize| -> f64 {
        let mut acc = CompensatedSum::new();
        for k in (i + 1)..probs.len() {
            let pp = big_p[i] * big_p[k];
            if pp == 0.0 {
                continue;
            }
            let lr = if n < 2 * jj {
                f64::NEG_INFINITY
            } else {
                let rest = 1.0 - probs[i] - probs[k];
                let joint = if n == 2 * jj {
                    0.0
                } else if rest <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (n - 2 * jj) as f64 * (-(probs[i] + probs[k])).ln_1p()
                };
                ratio0 + joint - (n - jj) as f64 * (ln_q[i] + ln_q[k])
            };
            acc.add(pp * lr.exp_m1());
        }
        acc.value()
    };
    let rows: Vec<f64> = (0..probs.len()).into_par_iter().map(cross_row).collect();
    let cross = 2.0 * rows.into_iter().sum::<CompensatedSum>().value();

    let residual_estimate = if exact_cross {
        0.0
    } else {
        // covariances are about -P_i P_k (1/n + p_i + p_k); pair the omitted
        // mean mass with the included one
        let head_mean: f64 = big_p.iter().sum();
        let total = mean_binomial_exact(model, j, n, CountKind::ExactlyJ, opts)?.value;
        let weighted: f64 = big_p.iter().zip(&probs).map(|(&b, &p)| b * (1.0 / n as f64 + 2.0 * p)).sum();
        2.0 * (total - head_mean).max(0.0) * weighted
    };
    Ok(BinomialVariance {
        value: diagonal.value + cross,
        diagonal,
        cross,
        k_used,
        residual_estimate,
        exact_cross,
    })
}

/// Largest number of boxes a window sum will visit.
pub const MAX_WINDOW_BOXES: u64 = 1 << 34;

/// sum of pi_k (1 - pi_k) over boxes with lo < 1/p_k <= hi.
pub fn var_poisson_window(model: &WeightModel, j: u32, t: f64, lo: f64, hi: f64) -> Result<f64, MomentError> {
    check_args(j, t)?;
    if !(lo >= 0.0 && hi.is_finite()) {
        return Err(MomentError::InvalidArgument(format!("window ({lo}, {hi}] must be finite")));
    }
    let term = Term::PoissonVar { j, t, kind: CountKind::ExactlyJ };
    let a = model.rho(lo) + 1;
    let b = model.rho(hi);
    if b - a.min(b) > MAX_WINDOW_BOXES {
        return Err(MomentError::InvalidArgument(format!("window ({lo}, {hi}] spans more than {MAX_WINDOW_BOXES} boxes")));
    }
    Ok(sum_range(model, &term, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(s: &str) -> WeightModel {
        WeightModel::parse(s).unwrap()
    }

    fn brute_poisson(m: &WeightModel, j: u32, t: f64, kmax: u64) -> (f64, f64) {
        let mut mean = CompensatedSum::new();
        let mut var = CompensatedSum::new();
        for k in 1..=kmax {
            let pi = poisson_pmf(j, t * m.prob(k));
            mean.add(pi);
            var.add(pi * (1.0 - pi));
        }
        (mean.value(), var.value())
    }

    #[test]
    fn two_box_values() {
        let m = model("finite:0.5,0.5");
        let o = SeriesOptions::default();
        let e = mean_poisson_exact(&m, 1, 2.0, CountKind::ExactlyJ, &o).unwrap();
        assert!((e.value - 2.0 * (-1f64).exp()).abs() < 1e-15);
        assert!((e.value - 0.735_759).abs() < 1e-6);
        let v = var_poisson_exact(&m, 1, 2.0, CountKind::ExactlyJ, &o).unwrap();
        assert!((v.value - 0.465_088).abs() < 1e-6);
        let eb = mean_binomial_exact(&m, 1, 2, CountKind::ExactlyJ, &o).unwrap();
        assert!((eb.value - 1.0).abs() < 1e-13);
        let vb = var_binomial_exact(&m, 1, 2, 10, &o).unwrap();
        assert!((vb.value - 1.0).abs() < 1e-14);
        assert!(vb.exact_cross);
    }

    #[test]
    fn single_box_is_degenerate_in_n() {
        let m = model("finite:1");
        let o = SeriesOptions::default();
        for n in 1..6u64 {
            for j in 1..6u32 {
                let e = mean_binomial_exact(&m, j, n, CountKind::ExactlyJ, &o).unwrap();
                let want = if j as u64 == n { 1.0 } else { 0.0 };
                assert!((e.value - want).abs() < 1e-13);
                let v = var_binomial_exact(&m, j, n, 10, &o).unwrap();
                assert!(v.value.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn tail_matches_long_direct_sum() {
        // Zipf(0.5) at t = 100: terms decay like t p_k, so summing to 1e7
        // leaves a tail below t * W(1e7) ~ 6e-6; compare the difference of
        // the certified value and the direct head against the certified tail
        let m = model("zipf:alpha=0.5");
        let t = 100.0;
        let o = SeriesOptions::with_tol(1e-12);
        let e = mean_poisson_exact(&m, 1, t, CountKind::ExactlyJ, &o).unwrap();
        let kmax = 10_000_000u64;
        let (head, _) = brute_poisson(&m, 1, t, kmax);
        let rest = mean_poisson_exact_from(&m, 1, t, kmax);
        assert!((e.value - head - rest).abs() < 1e-10, "{} vs {}", e.value, head + rest);
        assert!(e.error_bound <= 1e-12);
    }

    fn mean_poisson_exact_from(m: &WeightModel, j: u32, t: f64, k: u64) -> f64 {
        // independent tail: plain Euler-Maclaurin with trapezoid end terms
        // and a finely split quadrature of the full summand
        let f = |x: f64| poisson_pmf(j, t * m.prob_at(x));
        let x = (k + 1) as f64;
        let (int, _) = integrate(|y| f(y.exp()) * y.exp(), x.ln(), (x * 1e9).ln(), 1e-16, 400);
        int + m.tail_integral(x * 1e9) * t + 0.5 * f(x)
    }

    #[test]
    fn variance_identity_holds() {
        for s in ["zipf:alpha=0.5", "pipolylog:beta=2", "pistretch:sigma=1,lambda=0.5", "alpha1logsq:c=1"] {
            let m = model(s);
            for j in 1..=3u32 {
                for t in [10.0, 1e3, 1e5] {
                    let o = SeriesOptions::with_tol(1e-10);
                    let v = var_poisson_exact(&m, j, t, CountKind::ExactlyJ, &o).unwrap();
                    let r = var_identity_rhs(&m, j, t, &o).unwrap();
                    let scale = v.value.abs().max(1.0);
                    assert!((v.value - r.value).abs() <= 1e-10 * scale + v.error_bound + r.error_bound, "{s} j={j} t={t}: {} vs {}", v.value, r.value);
                }
            }
        }
    }

    #[test]
    fn at_least_counts_telescope() {
        let m = model("zipf:alpha=0.5");
        let o = SeriesOptions::with_tol(1e-11);
        let t = 1e4;
        let k1 = mean_poisson_exact(&m, 1, t, CountKind::AtLeastJ, &o).unwrap().value;
        let k2 = mean_poisson_exact(&m, 2, t, CountKind::AtLeastJ, &o).unwrap().value;
        let k1s = mean_poisson_exact(&m, 1, t, CountKind::ExactlyJ, &o).unwrap().value;
        assert!((k1 - k2 - k1s).abs() < 1e-8);
    }

    #[test]
    fn binomial_mean_close_to_poisson_for_large_n() {
        let m = model("zipf:alpha=0.5");
        let o = SeriesOptions::default();
        let n = 100_000u64;
        let eb = mean_binomial_exact(&m, 2, n, CountKind::ExactlyJ, &o).unwrap().value;
        let ep = mean_poisson_exact(&m, 2, n as f64, CountKind::ExactlyJ, &o).unwrap().value;
        assert!(((eb - ep) / ep).abs() < 0.01);
    }

    #[test]
    fn binomial_at_least_matches_enumeration() {
        let m = model("finite:0.5,0.3,0.2");
        let o = SeriesOptions::default();
        for n in 1..=6u64 {
            for j in 1..=3u32 {
                let got = mean_binomial_exact(&m, j, n, CountKind::AtLeastJ, &o).unwrap().value;
                let mut want = 0.0;
                for p in [0.5f64, 0.3, 0.2] {
                    for i in j as u64..=n {
                        want += (ln_binomial(n, i) + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp();
                    }
                }
                assert!((got - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn bad_arguments() {
        let m = model("zipf:alpha=0.5");
        let o = SeriesOptions::default();
        assert!(mean_poisson_exact(&m, 0, 1.0, CountKind::ExactlyJ, &o).is_err());
        assert!(mean_poisson_exact(&m, 1, -1.0, CountKind::ExactlyJ, &o).is_err());
        let tight = SeriesOptions { tol: 1e-30, max_k: 1 << 12 };
        assert!(matches!(
            mean_poisson_exact(&m, 1, 1e6, CountKind::ExactlyJ, &tight),
            Err(MomentError::TruncationFailure { .. })
        ));
    }

    #[test]
    fn window_variance_is_part_of_total() {
        let m = model("pipolylog:beta=2");
        let o = SeriesOptions::default();
        let t = 1e6;
        let total = var_poisson_exact(&m, 1, t, CountKind::ExactlyJ, &o).unwrap().value;
        let w = var_poisson_window(&m, 1, t, t / t.ln(), t * t.ln()).unwrap();
        assert!(w > 0.0 && w < total);
        let all = var_poisson_window(&m, 1, t, 0.0, 1e30).unwrap();
        assert!((all - total).abs() < 1e-6 * total);
    }
}
