//! Numeric helpers shared by the moment, asymptotic and simulation code.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::Sum<f64> for CompensatedSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

const LN_FACTORIAL_TABLE: usize = 256;

pub fn ln_factorial(n: u64) -> f64 {
    static TABLE: std::sync::OnceLock<Vec<f64>> = std::sync::OnceLock::new();
    if n < 2 {
        return 0.0;
    }
    if (n as usize) < LN_FACTORIAL_TABLE {
        let table = TABLE.get_or_init(|| (0..LN_FACTORIAL_TABLE).map(|i| ln_gamma(i as f64 + 1.0)).collect());
        return table[n as usize];
    }
    ln_gamma(n as f64 + 1.0)
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// ln P(N = j) for N ~ Poisson(u), u > 0.
#[inline]
pub fn poisson_ln_pmf(j: u32, u: f64) -> f64 {
    if j == 0 {
        return -u;
    }
    -u + j as f64 * u.ln() - ln_factorial(j as u64)
}

#[inline]
pub fn poisson_pmf(j: u32, u: f64) -> f64 {
    if u <= 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    poisson_ln_pmf(j, u).exp()
}

/// P(N >= j) for N ~ Poisson(u), accurate in both tails.
pub fn poisson_sf(j: u32, u: f64) -> f64 {
    if j == 0 {
        return 1.0;
    }
    if u <= 0.0 {
        return 0.0;
    }
    if j == 1 {
        return -(-u).exp_m1();
    }
    if u < j as f64 + 1.0 {
        // e^{-u} u^j / j! * sum_{i>=0} u^i / ((j+1)...(j+i))
        let lead = poisson_ln_pmf(j, u);
        let mut term = 1.0;
        let mut series = 1.0;
        let mut i = 1.0;
        while term > series * 1e-17 {
            term *= u / (j as f64 + i);
            series += term;
            i += 1.0;
        }
        (lead + series.ln()).exp()
    } else {
        1.0 - poisson_cdf(j - 1, u)
    }
}

/// P(N <= j) for N ~ Poisson(u).
pub fn poisson_cdf(j: u32, u: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    if u > j as f64 + 1.0 {
        // summed downward from the largest term
        let mut acc = CompensatedSum::new();
        let mut term = poisson_ln_pmf(j, u).exp();
        let mut i = j;
        loop {
            acc.add(term);
            if i == 0 || term < acc.value() * 1e-18 {
                break;
            }
            term *= i as f64 / u;
            i -= 1;
        }
        acc.value()
    } else {
        1.0 - poisson_sf(j + 1, u)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Integral of `f` over `[a, b]` by double-exponential quadrature on `pieces`
/// equal subintervals. Returns (value, error estimate).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, pieces: usize) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let pieces = pieces.max(1);
    let h = (b - a) / pieces as f64;
    let tol = abs_tol / pieces as f64;
    let mut value = CompensatedSum::new();
    let mut err = 0.0;
    for i in 0..pieces {
        let lo = a + h * i as f64;
        let hi = if i + 1 == pieces { b } else { lo + h };
        let out = quadrature::double_exponential::integrate(&f, lo, hi, tol);
        value.add(out.integral);
        err += out.error_estimate;
    }
    (value.value(), err)
}

/// Five-point Gauss-Legendre rule on `[a, b]`, for short smooth intervals.
pub fn gauss_legendre5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
        0.236_926_885_056_189_08,
    ];
    let c = 0.5 * (b - a);
    let d = 0.5 * (a + b);
    let mut s = 0.0;
    for i in 0..5 {
        s += W[i] * f(c * X[i] + d);
    }
    s * c
}

/// Sample skewness and excess kurtosis.
pub fn skew_kurtosis(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Kolmogorov-Smirnov statistic of `xs` against the standard normal and its
/// asymptotic p-value (Stephens' small-sample correction).
pub fn ks_normal(xs: &[f64]) -> (f64, f64) {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = normal_cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    (d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d))
}

/// P(K > x) for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}
