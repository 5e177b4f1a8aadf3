//! Asymptotic constants, scale functions, LIL normalizers and the exotic
//! condition checker for the alpha = 1 regime.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::special::{integrate, ln_factorial};
use crate::weights::{Family, Regime, WeightModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticError {
    #[error("model has no asymptotic regime (finite number of boxes)")]
    NoRegime,
    #[error("{0}")]
    Domain(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerKind {
    /// sqrt(Var log Var)
    LogVar,
    /// sqrt(Var log log Var)
    LogLogVar,
}

impl NormalizerKind {
    /// m(Var), or None outside the domain (Var <= 1 resp. Var <= e).
    pub fn m(self, var: f64) -> Option<f64> {
        match self {
            NormalizerKind::LogVar if var > 1.0 => Some(var.ln()),
            NormalizerKind::LogLogVar if var > std::f64::consts::E => Some(var.ln().ln()),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeInfo {
    pub regime: RegimeTag,
    pub mu: f64,
    pub q: f64,
    pub normalizer_kind: NormalizerKind,
    pub lil_constant: f64,
    pub upper_bound_only: bool,
}

/// Serializable mirror of [`Regime`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegimeTag {
    PiPolyLog { beta: f64 },
    PiStretchedExp { sigma: f64, lambda: f64 },
    RegVar { alpha: f64 },
    RegVarOne,
}

impl From<Regime> for RegimeTag {
    fn from(r: Regime) -> Self {
        match r {
            Regime::PiPolyLog { beta } => RegimeTag::PiPolyLog { beta },
            Regime::PiStretchedExp { sigma, lambda } => RegimeTag::PiStretchedExp { sigma, lambda },
            Regime::RegVar { alpha } => RegimeTag::RegVar { alpha },
            Regime::RegVarOne => RegimeTag::RegVarOne,
        }
    }
}

/// mu, q, normalizer and constant of a regime, ignoring the j = 1, alpha = 1
/// bound-only case.
pub fn regime_info(regime: Regime) -> RegimeInfo {
    let (mu, q, normalizer_kind) = match regime {
        Regime::PiPolyLog { beta } => (1.0 / beta + 1.0, 0.0, NormalizerKind::LogVar),
        Regime::PiStretchedExp { lambda, .. } => (1.0, 1.0 / lambda - 1.0, NormalizerKind::LogLogVar),
        Regime::RegVar { .. } | Regime::RegVarOne => (1.0, 0.0, NormalizerKind::LogLogVar),
    };
    let lil_constant = match normalizer_kind {
        NormalizerKind::LogVar => (2.0 * (mu - 1.0)).sqrt(),
        NormalizerKind::LogLogVar => (2.0 * (q + 1.0)).sqrt(),
    };
    RegimeInfo { regime: regime.into(), mu, q, normalizer_kind, lil_constant, upper_bound_only: false }
}

/// LIL normalizer and constant for K_j^*. For alpha = 1 and j = 1 the
/// exotic condition is checked on the closed-form L-hat; unless it holds,
/// only the upper bound is available.
pub fn lil_spec(model: &WeightModel, j: u32) -> Result<RegimeInfo, AsymptoticError> {
    let regime = model.regime().ok_or(AsymptoticError::NoRegime)?;
    let mut info = regime_info(regime);
    if regime == Regime::RegVarOne && j == 1 {
        let report = exotic_check(|ln_t| ln_l_hat(model, ln_t), &DEFAULT_GAMMA_GRID, DEFAULT_EXOTIC_N_MAX);
        info.upper_bound_only = report.verdict != ExoticVerdict::Holds;
    }
    Ok(info)
}

fn ln_gamma_ratio_small_mean(alpha: f64, j: u32) -> f64 {
    (alpha.ln() + ln_gamma(j as f64 - alpha) - ln_factorial(j as u64)).exp()
}

/// c_{j,alpha} = alpha (Gamma(j-alpha)/j! - 2^alpha Gamma(2j-alpha) / (2^{2j} (j!)^2)).
pub fn c_j_alpha(j: u32, alpha: f64) -> f64 {
    let jf = j as f64;
    let a = (ln_gamma(jf - alpha) - ln_factorial(j as u64)).exp();
    let b = (alpha * 2f64.ln() + ln_gamma(2.0 * jf - alpha) - 2.0 * jf * 2f64.ln() - 2.0 * ln_factorial(j as u64)).exp();
    alpha * (a - b)
}

/// c_{j,1} = 1/(j(j-1)) - (2j-2)! / (2^{2j-1} (j!)^2), j >= 2.
pub fn c_j_one(j: u32) -> f64 {
    let jf = j as f64;
    let b = (ln_factorial(2 * j as u64 - 2) - (2.0 * jf - 1.0) * 2f64.ln() - 2.0 * ln_factorial(j as u64)).exp();
    1.0 / (jf * (jf - 1.0)) - b
}

/// (2j-1)! / ((j!)^2 4^j), the second term of the Pi-class variance constant.
fn pi_var_correction(j: u32) -> f64 {
    (ln_factorial(2 * j as u64 - 1) - 2.0 * ln_factorial(j as u64) - 2.0 * j as f64 * 2f64.ln()).exp()
}

/// Which function of t a constant multiplies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// The auxiliary function ell(t) of the de Haan class.
    Auxiliary,
    /// The continuous counting function rho_c(t) = t^alpha L(t).
    Counting,
    /// t L-hat(t), L-hat by quadrature of the family's L.
    LinearHat,
}

/// constant * scale(t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticForm {
    pub constant: f64,
    pub scale: Scale,
}

fn check_j(j: u32) -> Result<(), AsymptoticError> {
    if j == 0 {
        Err(AsymptoticError::Domain("j must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// E K_j^*(t) ~ constant * scale(t).
pub fn small_mean(regime: Regime, j: u32) -> Result<AsymptoticForm, AsymptoticError> {
    check_j(j)?;
    Ok(match regime {
        Regime::PiPolyLog { .. } | Regime::PiStretchedExp { .. } => AsymptoticForm { constant: 1.0 / j as f64, scale: Scale::Auxiliary },
        Regime::RegVar { alpha } => AsymptoticForm { constant: ln_gamma_ratio_small_mean(alpha, j), scale: Scale::Counting },
        Regime::RegVarOne if j == 1 => AsymptoticForm { constant: 1.0, scale: Scale::LinearHat },
        Regime::RegVarOne => AsymptoticForm { constant: 1.0 / (j as f64 * (j as f64 - 1.0)), scale: Scale::Counting },
    })
}

/// Var K_j^*(t) ~ constant * scale(t).
pub fn small_var(regime: Regime, j: u32) -> Result<AsymptoticForm, AsymptoticError> {
    check_j(j)?;
    Ok(match regime {
        Regime::PiPolyLog { .. } | Regime::PiStretchedExp { .. } => AsymptoticForm {
            constant: 1.0 / j as f64 - pi_var_correction(j),
            scale: Scale::Auxiliary,
        },
        Regime::RegVar { alpha } => AsymptoticForm { constant: c_j_alpha(j, alpha), scale: Scale::Counting },
        Regime::RegVarOne if j == 1 => AsymptoticForm { constant: 1.0, scale: Scale::LinearHat },
        Regime::RegVarOne => AsymptoticForm { constant: c_j_one(j), scale: Scale::Counting },
    })
}

pub fn mean_constant(regime: Regime, j: u32) -> Result<f64, AsymptoticError> {
    small_mean(regime, j).map(|f| f.constant)
}

pub fn var_constant(regime: Regime, j: u32) -> Result<f64, AsymptoticError> {
    small_var(regime, j).map(|f| f.constant)
}

/// Asymptotics of the at-least-j counts K_j: (mean, variance).
pub fn big_counts(regime: Regime, j: u32) -> Result<(AsymptoticForm, AsymptoticForm), AsymptoticError> {
    check_j(j)?;
    let alpha = match regime {
        Regime::PiPolyLog { .. } | Regime::PiStretchedExp { .. } => {
            let mut c = 2f64.ln();
            for k in 1..j {
                c -= pi_var_correction(k);
            }
            return Ok((
                AsymptoticForm { constant: 1.0, scale: Scale::Counting },
                AsymptoticForm { constant: c, scale: Scale::Auxiliary },
            ));
        }
        Regime::RegVarOne if j == 1 => {
            let f = AsymptoticForm { constant: 1.0, scale: Scale::LinearHat };
            return Ok((f, f));
        }
        Regime::RegVar { alpha } => alpha,
        Regime::RegVarOne => 1.0,
    };
    let jf = j as f64;
    let mean = (ln_gamma(jf - alpha) - ln_factorial(j as u64 - 1)).exp();
    let mut var = -mean;
    for i in 0..j {
        let ifl = i as f64;
        var += (ln_gamma(ifl + jf - alpha)
            - ln_factorial(i as u64)
            - ln_factorial(j as u64 - 1)
            - (ifl + jf - 1.0 - alpha) * 2f64.ln())
        .exp();
    }
    Ok((
        AsymptoticForm { constant: mean, scale: Scale::Counting },
        AsymptoticForm { constant: var, scale: Scale::Counting },
    ))
}

/// (mean_c, var_c) for K_j.
pub fn big_counts_constants(regime: Regime, j: u32) -> Result<(f64, f64), AsymptoticError> {
    big_counts(regime, j).map(|(m, v)| (m.constant, v.constant))
}

/// The auxiliary function of the de Haan class: d rho_c / d log t.
pub fn auxiliary_ell(model: &WeightModel, t: f64) -> Result<f64, AsymptoticError> {
    let l = (t / model.normalizer()).ln();
    match *model.family() {
        Family::PiPolyLog { beta } if l > 0.0 => Ok((beta + 1.0) * l.powf(beta)),
        Family::PiStretchedExp { sigma, lambda } if l > 0.0 => Ok((sigma * l.powf(lambda)).exp()),
        Family::PiPolyLog { .. } | Family::PiStretchedExp { .. } => Err(AsymptoticError::Domain(format!("ell undefined at t = {t}"))),
        _ => Err(AsymptoticError::Domain("auxiliary function exists only for de Haan families".into())),
    }
}

/// Closed-form L-hat for the alpha = 1 family: c / log t with c = 1/Z.
pub fn l_hat(model: &WeightModel, t: f64) -> Result<f64, AsymptoticError> {
    match model.family() {
        Family::AlphaOneLogSq { .. } if t > 1.0 => Ok(1.0 / (model.normalizer() * t.ln())),
        Family::AlphaOneLogSq { .. } => Err(AsymptoticError::Domain(format!("L-hat undefined at t = {t}"))),
        _ => Err(AsymptoticError::Domain("integral of L(y)/y diverges outside the alpha = 1 regime".into())),
    }
}

fn ln_l_hat(model: &WeightModel, ln_t: f64) -> f64 {
    -model.ln_normalizer() - ln_t.ln()
}

/// int_t^inf L(y)/y dy by quadrature, with ln L given as a function of ln y.
pub fn l_hat_quadrature<F: Fn(f64) -> f64>(ln_l: F, t: f64) -> f64 {
    // y = e^z, z = z0 / w
    let z0 = t.ln();
    let f = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let z = z0 / w;
        (ln_l(z)).exp() * z0 / (w * w)
    };
    let scale = f(1.0).abs().max(1e-300);
    let (v, _) = integrate(f, 0.0, 1.0, 1e-11 * scale, 8);
    v
}

/// t * L-hat(t) with L(y) = rho_c(y)/y for the alpha = 1 family.
pub fn counting_l_hat(model: &WeightModel, t: f64) -> Result<f64, AsymptoticError> {
    if !matches!(model.family(), Family::AlphaOneLogSq { .. }) {
        return Err(AsymptoticError::Domain("integral of L(y)/y diverges outside the alpha = 1 regime".into()));
    }
    Ok(l_hat_quadrature(|z| model.ln_rho_continuous(z) - z, t))
}

/// Evaluate a scale function for a model.
pub fn eval_scale(model: &WeightModel, scale: Scale, t: f64) -> Result<f64, AsymptoticError> {
    match scale {
        Scale::Auxiliary => auxiliary_ell(model, t),
        Scale::Counting => Ok(model.rho_continuous(t)),
        Scale::LinearHat => Ok(t * counting_l_hat(model, t)?),
    }
}

pub const DEFAULT_GAMMA_GRID: [f64; 3] = [0.05, 0.1, 0.2];
pub const DEFAULT_EXOTIC_N_MAX: u32 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExoticVerdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExoticRow {
    pub gamma: f64,
    pub n: u32,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExoticReport {
    pub verdict: ExoticVerdict,
    pub per_gamma: Vec<(f64, ExoticVerdict)>,
    pub rows: Vec<ExoticRow>,
}

const EXOTIC_FLOOR: f64 = 0.1;
const EXOTIC_ZERO: f64 = 1e-3;

/// Ratios L-hat(exp((n+1)^{1+g})) / L-hat(exp(n^{1+g})) for n = 1..n_max.
/// `ln_l_hat` maps ln t to ln L-hat(t).
pub fn exotic_check<F: Fn(f64) -> f64>(ln_l_hat: F, gamma_grid: &[f64], n_max: u32) -> ExoticReport {
    let mut rows = Vec::new();
    let mut per_gamma = Vec::new();
    for &g in gamma_grid {
        let ratios: Vec<f64> = (1..=n_max)
            .map(|n| {
                let a = (n as f64).powf(1.0 + g);
                let b = (n as f64 + 1.0).powf(1.0 + g);
                (ln_l_hat(b) - ln_l_hat(a)).exp()
            })
            .collect();
        for (i, &r) in ratios.iter().enumerate() {
            rows.push(ExoticRow { gamma: g, n: i as u32 + 1, ratio: r });
        }
        per_gamma.push((g, classify(&ratios)));
    }
    let verdict = if per_gamma.iter().all(|&(_, v)| v == ExoticVerdict::Fails) {
        ExoticVerdict::Fails
    } else if per_gamma.iter().all(|&(_, v)| v == ExoticVerdict::Holds) {
        ExoticVerdict::Holds
    } else {
        ExoticVerdict::Inconclusive
    };
    ExoticReport { verdict, per_gamma, rows }
}

fn classify(ratios: &[f64]) -> ExoticVerdict {
    let tail = &ratios[ratios.len().saturating_sub(10)..];
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // settled at a positive level and not drifting down
    let drifting_down = tail[tail.len() - 1] < tail[0];
    if lo >= EXOTIC_FLOOR && (hi - lo) <= 0.01 * hi && !drifting_down {
        return ExoticVerdict::Fails;
    }
    let half = &ratios[ratios.len() / 2..];
    let monotone = half.windows(2).all(|w| w[1] <= w[0]);
    if monotone && *ratios.last().expect("nonempty ratio sequence") < EXOTIC_ZERO {
        return ExoticVerdict::Holds;
    }
    ExoticVerdict::Inconclusive
}
