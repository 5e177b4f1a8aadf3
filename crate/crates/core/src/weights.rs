//! Weight families, normalization, the counting function and tail integrals.

use std::fmt;
use std::str::FromStr;
use std::sync::RwLock;

use statrs::function::gamma::{gamma_ur, ln_gamma};
use thiserror::Error;

use crate::special::{gauss_legendre5, integrate, CompensatedSum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("cannot parse family spec `{0}`: {1}")]
    Parse(String, String),
    #[error("invalid parameter {name}={value} for {family}: {reason}")]
    InvalidParameter {
        family: &'static str,
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// A weight family. Weights are listed up to normalization; see
/// [`WeightModel`] for the normalized probabilities.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// p_k proportional to exp(-k^{1/(beta+1)}).
    PiPolyLog { beta: f64 },
    /// 1/p_k proportional to e^{v_k}, v_k = R^{-1}(k), R(v) = int_0^v e^{sigma u^lambda} du.
    PiStretchedExp { sigma: f64, lambda: f64 },
    /// p_k proportional to k^{-1/alpha}.
    Zipf { alpha: f64 },
    /// p_k proportional to 1 / (k log^2(k + 1 + c)).
    AlphaOneLogSq { c: f64 },
    /// Finitely many boxes with non-increasing probabilities (normalized on load).
    Finite { probs: Vec<f64> },
}

/// Asymptotic regime of a family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    PiPolyLog { beta: f64 },
    PiStretchedExp { sigma: f64, lambda: f64 },
    RegVar { alpha: f64 },
    RegVarOne,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::PiPolyLog { .. } => "pipolylog",
            Family::PiStretchedExp { .. } => "pistretch",
            Family::Zipf { .. } => "zipf",
            Family::AlphaOneLogSq { .. } => "alpha1logsq",
            Family::Finite { .. } => "finite",
        }
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        fn check(
            family: &'static str,
            name: &'static str,
            value: f64,
            ok: bool,
            reason: &'static str,
        ) -> Result<(), WeightError> {
            if value.is_finite() && ok {
                Ok(())
            } else {
                Err(WeightError::InvalidParameter { family, name, value, reason })
            }
        }
        match *self {
            Family::PiPolyLog { beta } => check("pipolylog", "beta", beta, beta > 0.0, "must be > 0"),
            Family::PiStretchedExp { sigma, lambda } => {
                check("pistretch", "sigma", sigma, sigma > 0.0, "must be > 0")?;
                check("pistretch", "lambda", lambda, lambda > 0.0 && lambda < 1.0, "must lie in (0, 1)")
            }
            Family::Zipf { alpha } => check("zipf", "alpha", alpha, alpha > 0.0 && alpha < 1.0, "must lie in (0, 1)"),
            Family::AlphaOneLogSq { c } => check("alpha1logsq", "c", c, c > 0.0, "must be > 0"),
            Family::Finite { ref probs } => {
                if probs.is_empty() {
                    return Err(WeightError::InvalidParameter {
                        family: "finite",
                        name: "probs",
                        value: 0.0,
                        reason: "needs at least one box",
                    });
                }
                for (i, &p) in probs.iter().enumerate() {
                    check("finite", "p", p, p > 0.0, "must be > 0")?;
                    if i > 0 && p > probs[i - 1] {
                        return Err(WeightError::InvalidParameter {
                            family: "finite",
                            name: "p",
                            value: p,
                            reason: "probabilities must be non-increasing",
                        });
                    }
                }
                Ok(())
            }
        }
    }

    pub fn regime(&self) -> Option<Regime> {
        match *self {
            Family::PiPolyLog { beta } => Some(Regime::PiPolyLog { beta }),
            Family::PiStretchedExp { sigma, lambda } => Some(Regime::PiStretchedExp { sigma, lambda }),
            Family::Zipf { alpha } => Some(Regime::RegVar { alpha }),
            Family::AlphaOneLogSq { .. } => Some(Regime::RegVarOne),
            Family::Finite { .. } => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::PiPolyLog { beta } => write!(f, "pipolylog:beta={beta}"),
            Family::PiStretchedExp { sigma, lambda } => write!(f, "pistretch:sigma={sigma},lambda={lambda}"),
            Family::Zipf { alpha } => write!(f, "zipf:alpha={alpha}"),
            Family::AlphaOneLogSq { c } => write!(f, "alpha1logsq:c={c}"),
            Family::Finite { probs } => {
                write!(f, "finite:")?;
                for (i, p) in probs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Family {
    type Err = WeightError;

    /// Grammar: `name[:key=value,...]`, e.g. `zipf:alpha=0.5`,
    /// `pistretch:sigma=1,lambda=0.5`, `finite:0.5,0.3,0.2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |msg: &str| WeightError::Parse(s.to_string(), msg.to_string());
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (s.trim(), ""),
        };
        if name == "finite" {
            let probs = rest
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| err("bad probability")))
                .collect::<Result<Vec<_>, _>>()?;
            let family = Family::Finite { probs };
            family.validate()?;
            return Ok(family);
        }
        let mut kv: Vec<(String, f64)> = Vec::new();
        if !rest.is_empty() {
            for item in rest.split(',') {
                let (k, v) = item.split_once('=').ok_or_else(|| err("expected key=value"))?;
                let v: f64 = v.trim().parse().map_err(|_| err("bad number"))?;
                kv.push((k.trim().to_string(), v));
            }
        }
        let mut take = |key: &str, default: f64| -> f64 {
            match kv.iter().position(|(k, _)| k == key) {
                Some(i) => kv.remove(i).1,
                None => default,
            }
        };
        let family = match name {
            "pipolylog" => Family::PiPolyLog { beta: take("beta", 2.0) },
            "pistretch" => Family::PiStretchedExp { sigma: take("sigma", 1.0), lambda: take("lambda", 0.5) },
            "zipf" => Family::Zipf { alpha: take("alpha", 0.5) },
            "alpha1logsq" => Family::AlphaOneLogSq { c: take("c", 1.0) },
            _ => return Err(err("unknown family")),
        };
        if let Some((k, _)) = kv.first() {
            return Err(err(&format!("unknown key `{k}`")));
        }
        family.validate()?;
        Ok(family)
    }
}

const NORMALIZER_CUTOFF: u64 = 4096;
const STRETCH_TABLE_MAX: u64 = 1 << 20;
// v_k at multiples of this comes from the grid, other k step from there
const STRETCH_ANCHOR: u64 = 1024;
// spacing of the coarse grid in u = sigma v^lambda
const STRETCH_GRID_DU: f64 = 0.5;

/// Inverse of R(v) = int_0^v e^{sigma u^lambda} du for the stretched family.
/// `dense` holds v_k = R^{-1}(k) for the integers reached by `prob`, `grid`
/// holds (v, R(v)) at points where sigma v^lambda steps by a fixed amount and
/// serves every other argument.
#[derive(Debug)]
struct StretchTable {
    sigma: f64,
    lambda: f64,
    dense: RwLock<Vec<f64>>,
    grid: RwLock<Vec<(f64, f64)>>,
}

impl StretchTable {
    fn new(sigma: f64, lambda: f64) -> Self {
        Self { sigma, lambda, dense: RwLock::new(vec![0.0]), grid: RwLock::new(vec![(0.0, 0.0)]) }
    }

    #[inline]
    fn r_prime(&self, v: f64) -> f64 {
        (self.sigma * v.powf(self.lambda)).exp()
    }

    /// int_a^b e^{sigma u^lambda} du
    fn r_between(&self, a: f64, b: f64) -> f64 {
        if b == a {
            return 0.0;
        }
        if b < a {
            return -self.r_between(b, a);
        }
        let f = |u: f64| self.r_prime(u);
        let du = self.sigma * (b.powf(self.lambda) - a.powf(self.lambda));
        if a > 1.0 && du < 0.05 {
            gauss_legendre5(f, a, b)
        } else {
            let pieces = (du / 0.25).ceil().clamp(1.0, 4096.0) as usize;
            integrate(f, a, b, 1e-16 * self.r_prime(b) * (b - a), pieces).0
        }
    }

    /// Solve int_{v0}^{v} e^{sigma u^lambda} du = target for v.
    fn solve(&self, v0: f64, target: f64) -> f64 {
        if target <= 0.0 {
            return v0;
        }
        // guess with sigma u^lambda linearized at v0, then Newton on the
        // running integral so later corrections only integrate short steps
        let mut v = if v0 > 1.0 {
            let a = v0.powf(self.lambda);
            let d1 = self.sigma * self.lambda * a / v0;
            v0 + (d1 * target * (-self.sigma * a).exp()).ln_1p() / d1
        } else {
            v0 + target / self.r_prime(v0)
        };
        let mut r = self.r_between(v0, v);
        for _ in 0..100 {
            let step = (r - target) / self.r_prime(v);
            let next = (v - step).max(0.5 * (v0 + v));
            if (next - v).abs() <= 1e-15 * next.max(1e-300) {
                return next;
            }
            r += self.r_between(v, next);
            v = next;
        }
        v
    }

    /// v' with R(v') - R(v) = 1. Closed form with sigma u^lambda linearized
    /// and its curvature as a correction while that correction is tiny,
    /// Newton otherwise.
    fn step(&self, v: f64) -> f64 {
        if v > 0.0 {
            let a = v.powf(self.lambda);
            let inv_e = (-self.sigma * a).exp();
            let d1 = self.sigma * self.lambda * a / v;
            let d2 = d1 * (self.lambda - 1.0) / v;
            let h0 = (d1 * inv_e).ln_1p() / d1;
            if d2.abs() * h0 * h0 < 1e-8 {
                let curvature = d2 * h0 * h0 * h0 / (6.0 * inv_e);
                return v + (d1 * (1.0 - curvature) * inv_e).ln_1p() / d1;
            }
        }
        self.solve(v, 1.0)
    }

    fn ensure_dense(&self, k: usize) {
        if self.dense.read().expect("stretch table poisoned").len() > k {
            return;
        }
        let mut table = self.dense.write().expect("stretch table poisoned");
        while table.len() <= k {
            let i = table.len() as u64;
            let next = if i % STRETCH_ANCHOR == 0 { self.anchor(i) } else { self.step(table[table.len() - 1]) };
            table.push(next);
        }
    }

    /// R^{-1}(k) solved from the grid.
    fn anchor(&self, k: u64) -> f64 {
        let x = k as f64;
        self.grow_grid(|_, r| r > x);
        let (v0, r0) = self.grid_floor(x, true);
        self.solve(v0, x - r0)
    }

    /// Appends grid points until `done` holds for the last one or R overflows.
    fn grow_grid(&self, done: impl Fn(f64, f64) -> bool) {
        let ok = |g: &[(f64, f64)]| {
            let (v, r) = *g.last().expect("grid starts at 0");
            done(v, r)
        };
        if ok(&self.grid.read().expect("stretch grid poisoned")) {
            return;
        }
        let mut grid = self.grid.write().expect("stretch grid poisoned");
        while !ok(&grid) {
            let (v, r) = *grid.last().expect("grid starts at 0");
            let next = (STRETCH_GRID_DU * grid.len() as f64 / self.sigma).powf(1.0 / self.lambda);
            let r_next = r + self.r_between(v, next);
            if !r_next.is_finite() {
                break;
            }
            grid.push((next, r_next));
        }
    }

    /// Last grid point with the given coordinate (0 for v, 1 for R) not above `x`.
    fn grid_floor(&self, x: f64, by_r: bool) -> (f64, f64) {
        let grid = self.grid.read().expect("stretch grid poisoned");
        let i = grid.partition_point(|&(v, r)| if by_r { r <= x } else { v <= x });
        grid[i.max(1) - 1]
    }

    /// v_k = R^{-1}(k), cached for k below the table limit.
    fn v_int(&self, k: u64) -> f64 {
        if k < STRETCH_TABLE_MAX {
            self.ensure_dense(k as usize);
            self.dense.read().expect("stretch table poisoned")[k as usize]
        } else {
            let base = k - k % STRETCH_ANCHOR;
            (base..k).fold(self.anchor(base), |v, _| self.step(v))
        }
    }

    /// v(x) = R^{-1}(x) for real x >= 0. Integers below the table limit
    /// come from the table, everything else from the grid, so the result
    /// never depends on how far either cache has grown.
    fn v_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x.fract() == 0.0 && x < STRETCH_TABLE_MAX as f64 {
            return self.v_int(x as u64);
        }
        self.grow_grid(|_, r| r > x);
        let (v0, r0) = self.grid_floor(x, true);
        self.solve(v0, x - r0)
    }

    /// R(v) = int_0^v e^{sigma u^lambda} du.
    fn r(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        self.grow_grid(|g, _| g > v);
        let (v0, r0) = self.grid_floor(v, false);
        r0 + self.r_between(v0, v)
    }
}

/// A normalized weight model: p_k = w(k) / Z for k >= 1.
#[derive(Debug)]
pub struct WeightModel {
    family: Family,
    ln_z: f64,
    stretch: Option<StretchTable>,
}

impl WeightModel {
    pub fn new(family: Family) -> Result<Self, WeightError> {
        family.validate()?;
        let stretch = match family {
            Family::PiStretchedExp { sigma, lambda } => Some(StretchTable::new(sigma, lambda)),
            _ => None,
        };
        let mut model = WeightModel { family, ln_z: 0.0, stretch };
        model.ln_z = model.compute_normalizer().ln();
        Ok(model)
    }

    pub fn parse(spec: &str) -> Result<Self, WeightError> {
        Self::new(spec.parse()?)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn regime(&self) -> Option<Regime> {
        self.family.regime()
    }

    pub fn normalizer(&self) -> f64 {
        self.ln_z.exp()
    }

    pub fn ln_normalizer(&self) -> f64 {
        self.ln_z
    }

    /// Number of boxes for finite models.
    pub fn num_boxes(&self) -> Option<u64> {
        match &self.family {
            Family::Finite { probs } => Some(probs.len() as u64),
            _ => None,
        }
    }

    fn shift(&self) -> f64 {
        match self.family {
            Family::AlphaOneLogSq { c } => 1.0 + c,
            _ => 0.0,
        }
    }

    /// ln w(x), the unnormalized log-weight extended to real x >= 1.
    pub fn ln_weight(&self, x: f64) -> f64 {
        match self.family {
            Family::PiPolyLog { beta } => -x.powf(1.0 / (beta + 1.0)),
            Family::PiStretchedExp { .. } => -self.stretch_table().v_at(x),
            Family::Zipf { alpha } => -x.ln() / alpha,
            Family::AlphaOneLogSq { .. } => -x.ln() - 2.0 * (x + self.shift()).ln().ln(),
            Family::Finite { ref probs } => {
                let k = x as usize;
                if k >= 1 && k <= probs.len() {
                    probs[k - 1].ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// d/dx ln w(x).
    pub fn d_ln_weight(&self, x: f64) -> f64 {
        match self.family {
            Family::PiPolyLog { beta } => {
                let m = beta + 1.0;
                -x.powf(1.0 / m - 1.0) / m
            }
            Family::PiStretchedExp { .. } => {
                let t = self.stretch_table();
                1.0 / -t.r_prime(t.v_at(x))
            }
            Family::Zipf { alpha } => -1.0 / (alpha * x),
            Family::AlphaOneLogSq { .. } => {
                let y = x + self.shift();
                -1.0 / x - 2.0 / (y * y.ln())
            }
            Family::Finite { .. } => 0.0,
        }
    }

    fn stretch_table(&self) -> &StretchTable {
        self.stretch.as_ref().expect("stretch table exists for the stretched family")
    }

    /// p_k.
    #[inline]
    pub fn prob(&self, k: u64) -> f64 {
        match self.family {
            Family::PiStretchedExp { .. } => (-self.stretch_table().v_int(k) - self.ln_z).exp(),
            _ => self.prob_at(k as f64),
        }
    }

    /// p_k for k in [lo, hi]. The stretched family steps v_k from the
    /// first index instead of solving for each k.
    pub fn probs(&self, lo: u64, hi: u64) -> Vec<f64> {
        if hi < lo {
            return Vec::new();
        }
        match self.family {
            Family::PiStretchedExp { .. } => {
                let t = self.stretch_table();
                let mut v = t.v_int(lo);
                let mut out = Vec::with_capacity((hi - lo + 1) as usize);
                out.push((-v - self.ln_z).exp());
                for k in lo + 1..=hi {
                    v = if k % STRETCH_ANCHOR == 0 { t.v_int(k) } else { t.step(v) };
                    out.push((-v - self.ln_z).exp());
                }
                out
            }
            _ => (lo..=hi).map(|k| self.prob(k)).collect(),
        }
    }

    /// ln p_k.
    pub fn ln_prob(&self, k: u64) -> f64 {
        self.ln_weight(k as f64) - self.ln_z
    }

    /// Continuous extension p(x) = w(x) / Z.
    #[inline]
    pub fn prob_at(&self, x: f64) -> f64 {
        (self.ln_weight(x) - self.ln_z).exp()
    }

    /// int_{x0}^inf w(x) dx for x0 >= 1 (unnormalized).
    fn tail_integral_unnormalized(&self, x0: f64) -> f64 {
        match self.family {
            Family::Zipf { alpha } => {
                let s = 1.0 / alpha;
                x0.powf(1.0 - s) / (s - 1.0)
            }
            Family::PiPolyLog { beta } => {
                let m = beta + 1.0;
                let y0 = x0.powf(1.0 / m);
                m * ln_gamma(m).exp() * gamma_ur(m, y0)
            }
            Family::AlphaOneLogSq { .. } => {
                let s = self.shift();
                let y0 = x0.ln();
                let f = |y: f64| {
                    let z = y.exp() + s;
                    let l = z.ln();
                    s / (z * l * l)
                };
                let scale = f(y0);
                let (corr, _) = integrate(f, y0, y0 + 45.0, 1e-16 * scale, 45);
                1.0 / (x0 + s).ln() + corr
            }
            Family::PiStretchedExp { sigma, lambda } => {
                let v0 = self.stretch_table().v_at(x0);
                let f = |v: f64| (-v + sigma * v.powf(lambda)).exp();
                let mut acc = CompensatedSum::new();
                let mut a = v0;
                loop {
                    // about two e-folds of the integrand per piece
                    let rate = 1.0 - sigma * lambda * a.powf(lambda - 1.0);
                    let width = if rate > 0.0 { (2.0 / rate).max(2.0) } else { 2.0 };
                    let (piece, _) = integrate(f, a, a + width, 1e-17 * f(a), 1);
                    acc.add(piece);
                    a += width;
                    if f(a) <= 1e-18 * acc.value() && a > v0 + 4.0 {
                        break;
                    }
                }
                acc.value()
            }
            Family::Finite { .. } => 0.0,
        }
    }

    /// W(x0) = int_{x0}^inf p(x) dx for infinite families, x0 >= 1. For
    /// finite models returns the exact remaining mass beyond floor(x0).
    pub fn tail_integral(&self, x0: f64) -> f64 {
        match &self.family {
            Family::Finite { .. } => self.tail_mass(x0.floor().max(0.0) as u64),
            _ => self.tail_integral_unnormalized(x0.max(1.0)) / self.normalizer(),
        }
    }

    /// Upper bound on sum_{k > k0} p_k (exact for finite models).
    pub fn tail_mass(&self, k0: u64) -> f64 {
        match &self.family {
            Family::Finite { probs } => {
                let z: f64 = probs.iter().sum();
                probs.iter().skip(k0 as usize).sum::<f64>() / z
            }
            _ => {
                if k0 == 0 {
                    1.0
                } else {
                    self.tail_integral(k0 as f64)
                }
            }
        }
    }

    /// Estimate of sum_{k >= k0} p_k via Euler-Maclaurin (k0 >= 1).
    pub fn tail_sum_from(&self, k0: u64) -> f64 {
        if let Family::Finite { .. } = self.family {
            return self.tail_mass(k0.saturating_sub(1));
        }
        let x = k0 as f64;
        let p = self.prob_at(x);
        self.tail_integral(x) + 0.5 * p - p * self.d_ln_weight(x) / 12.0
    }

    /// sum_{k <= k0} p_k by direct summation.
    pub fn prefix_mass(&self, k0: u64) -> f64 {
        let mut acc = CompensatedSum::new();
        let end = self.num_boxes().map_or(k0, |n| n.min(k0));
        for k in 1..=end {
            acc.add(self.prob(k));
        }
        acc.value()
    }

    fn compute_normalizer(&self) -> f64 {
        if let Family::Finite { probs } = &self.family {
            return probs.iter().sum();
        }
        let k0 = NORMALIZER_CUTOFF;
        let mut acc = CompensatedSum::new();
        for k in 1..k0 {
            acc.add(self.ln_weight(k as f64).exp());
        }
        let x = k0 as f64;
        let w = self.ln_weight(x).exp();
        acc.add(self.tail_integral_unnormalized(x));
        acc.add(0.5 * w);
        acc.add(-w * self.d_ln_weight(x) / 12.0);
        acc.value()
    }

    /// Continuous counting function: the x >= 0 with 1/p(x) = t.
    pub fn rho_continuous(&self, t: f64) -> f64 {
        let ratio = t / self.normalizer();
        if !(ratio > 1.0) {
            return 0.0;
        }
        let l = ratio.ln();
        match self.family {
            Family::Zipf { alpha } => ratio.powf(alpha),
            Family::PiPolyLog { beta } => l.powf(beta + 1.0),
            Family::PiStretchedExp { .. } => self.stretch_table().r(l),
            Family::AlphaOneLogSq { .. } => {
                let s = self.shift();
                let mut y = (l - 2.0 * l.max(1.0).ln()).max(0.0);
                for _ in 0..100 {
                    let e = y.exp() + s;
                    let lz = e.ln();
                    let f = y + 2.0 * lz.ln() - l;
                    let df = 1.0 + 2.0 * (e - s) / (e * lz);
                    let step = f / df;
                    y -= step;
                    if step.abs() < 1e-15 * y.abs().max(1.0) {
                        break;
                    }
                }
                y.exp()
            }
            Family::Finite { .. } => self.rho(t) as f64,
        }
    }

    /// ln rho_c(t) as a function of ln t, without forming t (for t beyond
    /// f64 range). Returns -inf where rho_c vanishes.
    pub fn ln_rho_continuous(&self, ln_t: f64) -> f64 {
        let l = ln_t - self.ln_z;
        if !(l > 0.0) {
            return f64::NEG_INFINITY;
        }
        match self.family {
            Family::Zipf { alpha } => alpha * l,
            Family::PiPolyLog { beta } => (beta + 1.0) * l.ln(),
            Family::PiStretchedExp { .. } => self.stretch_table().r(l).ln(),
            Family::AlphaOneLogSq { .. } => {
                let s = self.shift();
                // ln(e^y + s) without overflow
                let ln_shift = |y: f64| if y > 0.0 { y + (s * (-y).exp()).ln_1p() } else { (y.exp() + s).ln() };
                let mut y = (l - 2.0 * l.max(1.0).ln()).max(0.0);
                for _ in 0..200 {
                    let lz = ln_shift(y);
                    let f = y + 2.0 * lz.ln() - l;
                    let frac = 1.0 / (1.0 + s * (-y).exp());
                    let df = 1.0 + 2.0 * frac / lz;
                    let step = f / df;
                    y -= step;
                    if step.abs() < 1e-15 * y.abs().max(1.0) {
                        break;
                    }
                }
                y
            }
            Family::Finite { .. } => (self.rho(ln_t.exp()) as f64).ln(),
        }
    }

    /// rho(t) = #{k : 1/p_k <= t}.
    pub fn rho(&self, t: f64) -> u64 {
        if let Family::Finite { probs } = &self.family {
            let z: f64 = probs.iter().sum();
            return probs.iter().filter(|&&p| p / z * t >= 1.0).count() as u64;
        }
        let x = self.rho_continuous(t);
        if x >= 1.8e19 {
            return u64::MAX;
        }
        let mut k = x.floor() as u64;
        while k >= 1 && self.prob(k) * t < 1.0 {
            k -= 1;
        }
        while self.prob(k + 1) * t >= 1.0 {
            k += 1;
        }
        k
    }

    /// The real x with p(x) = q (inverse of the continuous weight).
    pub fn index_of_prob(&self, q: f64) -> f64 {
        self.rho_continuous(1.0 / q)
    }
}
