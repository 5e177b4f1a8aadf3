//! Experiment harness: asymptotic ratios, CLT, de-Poissonization, variance
//! windows and LIL path statistics, each producing tables and verdicts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::{self, AsymptoticError, AsymptoticForm, Scale};
use crate::exact_moments::{
    mean_binomial_exact, mean_poisson_exact, var_binomial_exact, var_poisson_exact, var_poisson_window, CountKind, MomentError,
    SeriesOptions,
};
use crate::simulator::{self, Layout, SimConfig, SimError};
use crate::special::{ks_normal, skew_kurtosis};
use crate::weights::{WeightError, WeightModel};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Asymptotic(#[from] AsymptoticError),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// True for numeric failures (truncation, horizon), as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, ExperimentError::Moment(MomentError::TruncationFailure { .. }) | ExperimentError::Sim(SimError::Horizon { .. }))
    }
}

/// Grid of times or ball counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// `count` points from t0 to t1, equally spaced in log t.
    Geometric { t0: f64, t1: f64, count: usize },
    Explicit { values: Vec<f64> },
    /// tau_n = inf{t : Var K_j^*(t) > w_n}; mu and q default to the regime's.
    TauGrid {
        gamma: f64,
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<f64>,
    },
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Geometric { t0, t1, count } => write!(f, "geometric:{t0:e}:{t1:e}:{count}"),
            GridSpec::Explicit { values } => {
                let v: Vec<String> = values.iter().map(|x| format!("{x}")).collect();
                write!(f, "list:{}", v.join(","))
            }
            GridSpec::TauGrid { gamma, count, .. } => write!(f, "tau:{gamma}:{count}"),
        }
    }
}

impl FromStr for GridSpec {
    type Err = ExperimentError;

    /// `geometric:t0:t1:count`, `list:v1,v2,...`, `tau:gamma:count` or a
    /// single number.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExperimentError::Config(format!("cannot parse grid '{s}'"));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["geometric", t0, t1, n] => Ok(GridSpec::Geometric { t0: num(t0)?, t1: num(t1)?, count: n.parse().map_err(|_| bad())? }),
            ["list", vals] => Ok(GridSpec::Explicit { values: vals.split(',').map(num).collect::<Result<_, _>>()? }),
            ["tau", g, n] => Ok(GridSpec::TauGrid { gamma: num(g)?, count: n.parse().map_err(|_| bad())?, mu: None, q: None }),
            [x] => Ok(GridSpec::Explicit { values: vec![num(x)?] }),
            _ => Err(bad()),
        }
    }
}

/// Largest t the tau grid searches before stopping.
pub const TAU_T_LIMIT: f64 = 1e12;

/// ln w_n: w_n = exp(n^{(1+g)/(q+1)}) for mu = 1, n^{(1+g)/(mu-1)} for mu > 1.
pub fn ln_tau_level(gamma: f64, mu: f64, q: f64, n: u32) -> f64 {
    let n = n as f64;
    if mu == 1.0 {
        n.powf((1.0 + gamma) / (q + 1.0))
    } else {
        (1.0 + gamma) / (mu - 1.0) * n.ln()
    }
}

impl GridSpec {
    pub fn geometric(t0: f64, t1: f64, count: usize) -> Self {
        GridSpec::Geometric { t0, t1, count }
    }

    pub fn values(&self, model: &WeightModel, j: u32) -> Result<Vec<f64>, ExperimentError> {
        let v = match self {
            GridSpec::Geometric { t0, t1, count } => {
                if !(*t0 > 0.0 && t1 > t0) || *count < 1 {
                    return Err(ExperimentError::Config(format!("bad geometric grid {self}")));
                }
                if *count == 1 {
                    vec![*t1]
                } else {
                    let (a, b) = (t0.ln(), t1.ln());
                    let mut v: Vec<f64> = (0..*count).map(|i| (a + (b - a) * i as f64 / (*count - 1) as f64).exp()).collect();
                    v[0] = *t0;
                    v[count - 1] = *t1;
                    v
                }
            }
            GridSpec::Explicit { values } => values.clone(),
            GridSpec::TauGrid { gamma, count, mu, q } => {
                let info = asymptotics::lil_spec(model, j)?;
                tau_grid(model, j, *gamma, mu.unwrap_or(info.mu), q.unwrap_or(info.q), *count)?
            }
        };
        if v.windows(2).any(|w| w[1] <= w[0]) || v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ExperimentError::Config(format!("grid {self} is not strictly increasing")));
        }
        Ok(v)
    }
}

/// Level-crossing times of the variance, stopping at TAU_T_LIMIT.
pub fn tau_grid(model: &WeightModel, j: u32, gamma: f64, mu: f64, q: f64, count: usize) -> Result<Vec<f64>, ExperimentError> {
    let var = |t: f64| -> Result<f64, ExperimentError> {
        Ok(var_poisson_exact(model, j, t, CountKind::ExactlyJ, &moment_opts(model, t))?.value)
    };
    let mut out: Vec<f64> = Vec::new();
    let mut lo = 1.0;
    for n in 1..=count as u32 {
        let level = ln_tau_level(gamma, mu, q, n);
        let above = |t: f64| var(t).map(|v| v.ln() > level);
        let mut hi = lo;
        while !above(hi)? {
            lo = hi;
            hi *= 2.0;
            if hi > TAU_T_LIMIT {
                return Ok(out);
            }
        }
        for _ in 0..60 {
            if hi / lo < 1.0 + 1e-9 {
                break;
            }
            let mid = (lo * hi).sqrt();
            if above(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if out.last().is_none_or(|&x| hi > x) {
            out.push(hi);
        }
        lo = hi;
    }
    Ok(out)
}

/// Series tolerance used by experiments: absolute, scaled with the count size.
pub fn moment_opts(model: &WeightModel, t: f64) -> SeriesOptions {
    let scale = model.rho_continuous(t) + 1.0;
    SeriesOptions::with_tol((1e-12 * scale).max(1e-9))
}

/// Versioned defaults for every tolerance the verdicts use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub version: u32,
    /// Relative tolerance on the final ratio in ratio_convergence.
    pub ratio: f64,
    pub clt_p_min: f64,
    pub clt_min_var: f64,
    pub clt_min_replicates: u32,
    pub depois_var_lo: f64,
    pub depois_var_hi: f64,
    pub window_min_fraction: f64,
    pub lil_slack: f64,
    pub lil_fraction: f64,
    pub lil_symmetry: f64,
    pub lil_min_points: usize,
    /// Grid points with m(Var) below this are reported but not normalized.
    pub lil_min_m: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            version: 1,
            ratio: 0.02,
            clt_p_min: 0.01,
            clt_min_var: 100.0,
            clt_min_replicates: 2000,
            depois_var_lo: 0.9,
            depois_var_hi: 1.1,
            window_min_fraction: 0.9,
            lil_slack: 0.5,
            lil_fraction: 0.95,
            lil_symmetry: 0.2,
            lil_min_points: 10,
            lil_min_m: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_j")]
    pub j: u32,
    pub grid: GridSpec,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Cross-term cap for the deterministic variance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_cap: Option<u64>,
    /// Count kind for ratio_convergence.
    #[serde(default = "default_kind")]
    pub kind: CountKind,
}

fn default_j() -> u32 {
    1
}

fn default_replicates() -> u32 {
    200
}

fn default_kind() -> CountKind {
    CountKind::ExactlyJ
}

impl ExperimentConfig {
    pub fn new(experiment: &str, family: &str, j: u32, grid: GridSpec) -> Self {
        ExperimentConfig {
            experiment: experiment.to_string(),
            family: family.to_string(),
            params: BTreeMap::new(),
            j,
            grid,
            replicates: default_replicates(),
            seed: 0,
            tolerances: Tolerances::default(),
            k_cap: None,
            kind: CountKind::ExactlyJ,
        }
    }

    /// Family spec string, e.g. "zipf:alpha=0.5".
    pub fn model_spec(&self) -> String {
        if self.params.is_empty() {
            return self.family.clone();
        }
        let kv: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}:{}", self.family, kv.join(","))
    }

    pub fn model(&self) -> Result<WeightModel, ExperimentError> {
        Ok(WeightModel::parse(&self.model_spec())?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub outcome: Outcome,
    /// Table and row the verdict is computed from.
    pub table: String,
    pub row: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for r in &self.rows {
            out.write_record(r.iter().map(|x| format_cell(*x)))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn format_cell(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    fn new(config: &ExperimentConfig) -> Self {
        ExperimentReport {
            experiment: config.experiment.clone(),
            config: config.clone(),
            seed: config.seed,
            tables: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn verdict(&self, criterion: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.criterion == criterion)
    }

    /// Pass unless some verdict failed; inconclusive if nothing failed but
    /// something was inconclusive.
    pub fn overall(&self) -> Outcome {
        if self.verdicts.iter().any(|v| v.outcome == Outcome::Fail) {
            Outcome::Fail
        } else if self.verdicts.iter().any(|v| v.outcome == Outcome::Inconclusive) {
            Outcome::Inconclusive
        } else {
            Outcome::Pass
        }
    }

    fn verdict_row(&mut self, criterion: &str, outcome: Outcome, table: &str, row: Option<usize>, detail: String) {
        self.verdicts.push(Verdict { criterion: criterion.to_string(), outcome, table: table.to_string(), row, detail });
    }

    /// report.json plus one CSV per table.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let json = dir.join("report.json");
        std::fs::write(&json, serde_json::to_string_pretty(self)? + "\n")?;
        written.push(json);
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            t.write_csv(std::fs::File::create(&path)?)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn ratio_to_bool(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

/// Deviations below this are rounding, not trend.
const RATIO_NOISE: f64 = 1e-9;

/// Deviation from 1 shrinking over the last three rows.
fn eventually_monotone(ratios: &[f64]) -> bool {
    let n = ratios.len();
    let dev = |i: usize| (ratios[i] - 1.0).abs();
    n >= 3 && (n - 3..n - 1).all(|i| dev(i + 1) <= dev(i).max(RATIO_NOISE))
}

/// Exact mean and variance against their asymptotic forms along the grid.
pub fn ratio_convergence(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let model = config.model()?;
    let j = config.j;
    let regime = model.regime().ok_or(AsymptoticError::NoRegime)?;
    let (mean_form, var_form): (AsymptoticForm, AsymptoticForm) = match config.kind {
        CountKind::ExactlyJ => (asymptotics::small_mean(regime, j)?, asymptotics::small_var(regime, j)?),
        CountKind::AtLeastJ => asymptotics::big_counts(regime, j)?,
    };
    let grid = config.grid.values(&model, j)?;
    let mut report = ExperimentReport::new(config);
    let mut table = Table::new(
        "ratios",
        &["t", "mean", "var", "mean_scale", "var_scale", "mean_ratio", "var_ratio", "var_over_mean", "feasible"],
    );
    let rows: Vec<_> = grid
        .par_iter()
        .map(|&t| -> Result<Vec<f64>, ExperimentError> {
            let opts = moment_opts(&model, t);
            let m = mean_poisson_exact(&model, j, t, config.kind, &opts);
            let v = var_poisson_exact(&model, j, t, config.kind, &opts);
            let (m, v) = match (m, v) {
                (Ok(m), Ok(v)) => (m.value, v.value),
                (Err(MomentError::TruncationFailure { .. }), _) | (_, Err(MomentError::TruncationFailure { .. })) => {
                    return Ok(vec![t, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0.0]);
                }
                (Err(e), _) | (_, Err(e)) => return Err(e.into()),
            };
            let ms = mean_form.constant * asymptotics::eval_scale(&model, mean_form.scale, t)?;
            let vs = var_form.constant * asymptotics::eval_scale(&model, var_form.scale, t)?;
            Ok(vec![t, m, v, ms, vs, m / ms, v / vs, v / m, 1.0])
        })
        .collect::<Result<_, _>>()?;
    for r in rows {
        table.push(r);
    }
    let feasible: Vec<usize> = (0..table.rows.len()).filter(|&i| table.rows[i][8] == 1.0).collect();
    let tol = config.tolerances.ratio;
    if let Some(&last) = feasible.last() {
        let pick = |col: usize| feasible.iter().map(|&i| table.rows[i][col]).collect::<Vec<f64>>();
        for (name, col) in [("mean_ratio", 5), ("var_ratio", 6)] {
            let ratios = pick(col);
            let r = table.rows[last][col];
            let ok = (r - 1.0).abs() <= tol && eventually_monotone(&ratios);
            report.verdict_row(
                name,
                ratio_to_bool(ok),
                "ratios",
                Some(last),
                format!("final {name} {r:.6} (tolerance {tol}), deviation shrinking over last 3: {}", eventually_monotone(&ratios)),
            );
        }
        if mean_form.scale == Scale::LinearHat && var_form.scale == Scale::LinearHat {
            let r = table.rows[last][7];
            report.verdict_row(
                "var_over_mean",
                ratio_to_bool((r - 1.0).abs() <= tol),
                "ratios",
                Some(last),
                format!("final Var/E {r:.6} (tolerance {tol})"),
            );
        }
    } else {
        report.verdict_row("mean_ratio", Outcome::Inconclusive, "ratios", None, "no feasible grid point".into());
    }
    let mut consts = Table::new("constants", &["j", "mean_constant", "var_constant"]);
    consts.push(vec![j as f64, mean_form.constant, var_form.constant]);
    report.tables.push(table);
    report.tables.push(consts);
    Ok(report)
}

/// Standardized simulated K_j^*(t) against the standard normal.
pub fn clt_check(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let model = config.model()?;
    let j = config.j;
    let grid = config.grid.values(&model, j)?;
    let t = *grid.last().ok_or_else(|| ExperimentError::Config("empty grid".into()))?;
    let opts = moment_opts(&model, t);
    let mean = mean_poisson_exact(&model, j, t, CountKind::ExactlyJ, &opts)?.value;
    let var = var_poisson_exact(&model, j, t, CountKind::ExactlyJ, &opts)?.value;
    let mut report = ExperimentReport::new(config);
    let mut summary = Table::new("clt", &["t", "j", "replicates", "mean", "var", "ks_d", "ks_p", "skewness", "excess_kurtosis", "z_mean"]);
    let tol = &config.tolerances;
    if var < tol.clt_min_var {
        summary.push(vec![t, j as f64, config.replicates as f64, mean, var, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN]);
        report.tables.push(summary);
        report.verdict_row(
            "ks",
            Outcome::Inconclusive,
            "clt",
            Some(0),
            format!("Var K_{j}^*({t:e}) = {var:.4} is below {}; raise t", tol.clt_min_var),
        );
        return Ok(report);
    }
    let mut cfg = SimConfig::new(vec![t], j, config.replicates, config.seed);
    cfg.track_balls = false;
    let paths = simulator::simulate_poisson_path(&model, &cfg)?;
    let sd = var.sqrt();
    let z: Vec<f64> = paths.iter().map(|p| (p.points[0].k_exactly(j) as f64 - mean) / sd).collect();
    let (d, p) = ks_normal(&z);
    let (skew, kurt) = skew_kurtosis(&z);
    let z_mean = z.iter().sum::<f64>() / z.len() as f64;
    summary.push(vec![t, j as f64, config.replicates as f64, mean, var, d, p, skew, kurt, z_mean]);
    let mut samples = Table::new("samples", &["replicate", "k_star", "z"]);
    for (path, zi) in paths.iter().zip(&z) {
        samples.push(vec![path.replicate as f64, path.points[0].k_exactly(j) as f64, *zi]);
    }
    report.tables.push(summary);
    report.tables.push(samples);
    if config.replicates < tol.clt_min_replicates {
        report.verdict_row(
            "ks",
            Outcome::Inconclusive,
            "clt",
            Some(0),
            format!("{} replicates is below {}", config.replicates, tol.clt_min_replicates),
        );
    } else {
        report.verdict_row("ks", ratio_to_bool(p > tol.clt_p_min), "clt", Some(0), format!("KS p = {p:.4} (needs > {})", tol.clt_p_min));
    }
    let m = config.replicates as f64;
    report.verdict_row(
        "standardized_mean",
        ratio_to_bool(z_mean.abs() <= 4.0 / m.sqrt()),
        "clt",
        Some(0),
        format!("mean of z = {z_mean:.5} (bound {:.5})", 4.0 / m.sqrt()),
    );
    Ok(report)
}

/// Exact gap between the deterministic and Poissonized moments.
pub fn depoissonization_check(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let model = config.model()?;
    let j = config.j;
    let grid = config.grid.values(&model, j)?;
    if grid.iter().any(|n| n.fract() != 0.0 || *n < 1.0) {
        return Err(ExperimentError::Config("de-Poissonization grid must hold positive integers".into()));
    }
    let mut report = ExperimentReport::new(config);
    let mut table = Table::new(
        "depoisson",
        &["n", "mean_det", "mean_poi", "mean_gap", "var_det", "var_poi", "var_ratio", "k_used", "residual_estimate"],
    );
    for &n in &grid {
        let nn = n as u64;
        let opts = moment_opts(&model, n);
        let md = mean_binomial_exact(&model, j, nn, CountKind::ExactlyJ, &opts)?.value;
        let mp = mean_poisson_exact(&model, j, n, CountKind::ExactlyJ, &opts)?.value;
        let k_cap = config.k_cap.unwrap_or(2 * nn).max(1);
        let vd = var_binomial_exact(&model, j, nn, k_cap, &opts)?;
        let vp = var_poisson_exact(&model, j, n, CountKind::ExactlyJ, &opts)?.value;
        table.push(vec![n, md, mp, (md - mp).abs(), vd.value, vp, vd.value / vp, vd.k_used as f64, vd.residual_estimate]);
    }
    let gaps = table.column("mean_gap").expect("column exists");
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let last = table.rows.len() - 1;
    let ratio = table.rows[last][6];
    let tol = &config.tolerances;
    report.verdict_row(
        "mean_gap_decreasing",
        ratio_to_bool(decreasing),
        "depoisson",
        Some(last),
        format!("mean gaps {gaps:?}"),
    );
    report.verdict_row(
        "var_ratio",
        ratio_to_bool(ratio >= tol.depois_var_lo && ratio <= tol.depois_var_hi),
        "depoisson",
        Some(last),
        format!("final variance ratio {ratio:.6} (band [{}, {}])", tol.depois_var_lo, tol.depois_var_hi),
    );
    report.tables.push(table);
    report.tables.push(two_box_reference()?);
    Ok(report)
}

/// Two equal boxes at n = 2, j = 1: documentation row showing the ratio is
/// far from 1 at small n.
pub fn two_box_reference() -> Result<Table, ExperimentError> {
    let model = WeightModel::parse("finite:0.5,0.5")?;
    let opts = SeriesOptions::default();
    let vd = var_binomial_exact(&model, 1, 2, 2, &opts)?.value;
    let vp = var_poisson_exact(&model, 1, 2.0, CountKind::ExactlyJ, &opts)?.value;
    let mut t = Table::new("two_box_reference", &["n", "var_det", "var_poi", "var_ratio"]);
    t.push(vec![2.0, vd, vp, vd / vp]);
    Ok(t)
}

/// Share of Var K_j^*(t) from boxes with 1/p_k in (t/log t, t log t].
pub fn variance_window(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let model = config.model()?;
    let j = config.j;
    let grid = config.grid.values(&model, j)?;
    if grid.iter().any(|&t| t <= std::f64::consts::E) {
        return Err(ExperimentError::Config("variance window needs t > e".into()));
    }
    let mut report = ExperimentReport::new(config);
    let mut table = Table::new("window", &["t", "var", "window_var", "fraction"]);
    let rows: Vec<_> = grid
        .par_iter()
        .map(|&t| -> Result<Vec<f64>, ExperimentError> {
            let v = var_poisson_exact(&model, j, t, CountKind::ExactlyJ, &moment_opts(&model, t))?.value;
            let w = var_poisson_window(&model, j, t, t / t.ln(), t * t.ln())?;
            Ok(vec![t, v, w, w / v])
        })
        .collect::<Result<_, _>>()?;
    for r in rows {
        table.push(r);
    }
    let fr = table.column("fraction").expect("column exists");
    let last = fr.len() - 1;
    let inc = fr.windows(2).all(|w| w[1] >= w[0]);
    let tol = &config.tolerances;
    report.verdict_row(
        "window_fraction",
        ratio_to_bool(fr[last] >= tol.window_min_fraction),
        "window",
        Some(last),
        format!("fraction {:.6} at t = {:e} (needs >= {})", fr[last], grid[last], tol.window_min_fraction),
    );
    report.verdict_row("window_increasing", ratio_to_bool(inc), "window", Some(last), format!("fractions {fr:?}"));
    report.tables.push(table);
    Ok(report)
}

/// Per-replicate statistics of a normalized path.
struct Envelope {
    max: f64,
    min: f64,
    max_abs: f64,
}

fn envelope(r: &[f64]) -> Envelope {
    let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
    Envelope { max, min, max_abs: max.max(-min) }
}

/// Normalized LIL paths R(t) = (K - E K) / sqrt(Var m(Var)) for both schemes.
pub fn lil_paths(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let model = config.model()?;
    let j = config.j;
    let info = asymptotics::lil_spec(&model, j)?;
    let grid = config.grid.values(&model, j)?;
    let tol = config.tolerances.clone();
    let mut report = ExperimentReport::new(config);
    let min_m = tol.lil_min_m;

    // exact normalizers; ball grid n_i = floor(t_i)
    let mut norm = Table::new(
        "normalizers",
        &["t", "mean", "var", "m_var", "scale", "n", "mean_det", "scale_det", "valid"],
    );
    let rows: Vec<_> = grid
        .par_iter()
        .map(|&t| -> Result<Vec<f64>, ExperimentError> {
            let opts = moment_opts(&model, t);
            let mean = mean_poisson_exact(&model, j, t, CountKind::ExactlyJ, &opts)?.value;
            let var = var_poisson_exact(&model, j, t, CountKind::ExactlyJ, &opts)?.value;
            let n = t.floor();
            let mean_det = if n >= 1.0 { mean_binomial_exact(&model, j, n as u64, CountKind::ExactlyJ, &opts)?.value } else { 0.0 };
            let var_n = if n >= 1.0 { var_poisson_exact(&model, j, n, CountKind::ExactlyJ, &opts)?.value } else { 0.0 };
            let m = info.normalizer_kind.m(var).filter(|&m| m >= min_m);
            let m_n = info.normalizer_kind.m(var_n).filter(|&m| m >= min_m);
            let scale = m.map_or(f64::NAN, |m| (var * m).sqrt());
            let scale_det = m_n.map_or(f64::NAN, |m| (var_n * m).sqrt());
            let valid = (m.is_some() && m_n.is_some()) as u8 as f64;
            Ok(vec![t, mean, var, m.unwrap_or(f64::NAN), scale, n, mean_det, scale_det, valid])
        })
        .collect::<Result<_, _>>()?;
    for r in rows {
        norm.push(r);
    }
    let valid: Vec<usize> = (0..norm.rows.len()).filter(|&i| norm.rows[i][8] == 1.0).collect();
    let mut consts = Table::new("lil_constant", &["j", "mu", "q", "lil_constant", "upper_bound_only", "log_var_normalizer"]);
    consts.push(vec![
        j as f64,
        info.mu,
        info.q,
        info.lil_constant,
        info.upper_bound_only as u8 as f64,
        (info.normalizer_kind == asymptotics::NormalizerKind::LogVar) as u8 as f64,
    ]);
    report.tables.push(consts);
    if valid.len() < tol.lil_min_points {
        report.tables.push(norm);
        report.verdict_row(
            "lil_bound",
            Outcome::Inconclusive,
            "normalizers",
            None,
            format!("only {} grid points inside the normalizer domain (need {})", valid.len(), tol.lil_min_points),
        );
        return Ok(report);
    }

    let times: Vec<f64> = valid.iter().map(|&i| norm.rows[i][0]).collect();
    let balls: Vec<f64> = valid.iter().map(|&i| norm.rows[i][5]).collect();
    if balls.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::Config("ball grid floor(t_i) must be strictly increasing".into()));
    }
    let mut cfg = SimConfig::new(times.clone(), j, config.replicates, config.seed);
    cfg.track_balls = false;
    let layout = Layout::new(&model, *times.last().expect("nonempty"), cfg.spread)?;
    let poi = simulator::poisson_paths(&model, &layout, &cfg);
    let mut bcfg = SimConfig::new(balls.clone(), j, config.replicates, config.seed ^ 0x9e37_79b9_7f4a_7c15);
    bcfg.spread = cfg.spread;
    let det = simulator::binomial_paths(&model, &layout, &bcfg);

    let normalize = |path: &simulator::OccupancyPath, mean_col: usize, scale_col: usize| -> Vec<f64> {
        path.points
            .iter()
            .zip(&valid)
            .map(|(p, &i)| (p.k_exactly(j) as f64 - norm.rows[i][mean_col]) / norm.rows[i][scale_col])
            .collect()
    };
    let r_poi: Vec<Vec<f64>> = poi.iter().map(|p| normalize(p, 1, 4)).collect();
    let r_det: Vec<Vec<f64>> = det.iter().map(|p| normalize(p, 6, 7)).collect();

    let c = info.lil_constant;
    let bound = c * (1.0 + tol.lil_slack);
    let mut reps = Table::new(
        "replicates",
        &["replicate", "max_r", "min_r", "max_abs_r", "within", "max_r_det", "min_r_det", "max_abs_r_det", "within_det"],
    );
    for (i, (a, b)) in r_poi.iter().zip(&r_det).enumerate() {
        let (ea, eb) = (envelope(a), envelope(b));
        reps.push(vec![
            i as f64,
            ea.max,
            ea.min,
            ea.max_abs,
            (ea.max_abs <= bound) as u8 as f64,
            eb.max,
            eb.min,
            eb.max_abs,
            (eb.max_abs <= bound) as u8 as f64,
        ]);
    }
    let mut env = Table::new("envelope", &["t", "n", "mean_r", "q025_r", "q975_r", "max_r", "min_r", "mean_r_det", "max_r_det", "min_r_det"]);
    for (k, &t) in times.iter().enumerate() {
        let mut col: Vec<f64> = r_poi.iter().map(|r| r[k]).collect();
        let colb: Vec<f64> = r_det.iter().map(|r| r[k]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let meanb = colb.iter().sum::<f64>() / colb.len() as f64;
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite R"));
        let q = |p: f64| col[((col.len() - 1) as f64 * p).round() as usize];
        env.push(vec![
            t,
            balls[k],
            mean,
            q(0.025),
            q(0.975),
            col[col.len() - 1],
            col[0],
            meanb,
            colb.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            colb.iter().cloned().fold(f64::INFINITY, f64::min),
        ]);
    }
    let m = config.replicates as f64;
    let mut summary = Table::new("lil_summary", &["scheme", "fraction_within", "mean_max_r", "mean_min_r", "symmetry", "bound", "constant"]);
    for (scheme, off) in [(0.0, 1usize), (1.0, 5)] {
        let within = reps.rows.iter().map(|r| r[off + 3]).sum::<f64>() / m;
        let mmax = reps.rows.iter().map(|r| r[off]).sum::<f64>() / m;
        let mmin = reps.rows.iter().map(|r| r[off + 1]).sum::<f64>() / m;
        summary.push(vec![scheme, within, mmax, mmin, (mmax + mmin).abs(), bound, c]);
    }
    for (row, suffix) in [(0usize, ""), (1, "_det")] {
        let s = &summary.rows[row];
        report.verdict_row(
            &format!("lil_bound{suffix}"),
            ratio_to_bool(s[1] >= tol.lil_fraction),
            "lil_summary",
            Some(row),
            format!("{:.3} of replicates keep |R| <= {bound:.4} (needs {})", s[1], tol.lil_fraction),
        );
        report.verdict_row(
            &format!("lil_symmetry{suffix}"),
            ratio_to_bool(s[4] <= tol.lil_symmetry * c),
            "lil_summary",
            Some(row),
            format!("|mean max + mean min| = {:.4} (needs <= {:.4})", s[4], tol.lil_symmetry * c),
        );
    }
    report.tables.push(norm);
    report.tables.push(summary);
    report.tables.push(reps);
    report.tables.push(env);
    Ok(report)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    match config.experiment.as_str() {
        "ratio" => ratio_convergence(config),
        "clt" => clt_check(config),
        "depoisson" => depoissonization_check(config),
        "window" => variance_window(config),
        "lil" => lil_paths(config),
        other => Err(ExperimentError::Config(format!("unknown experiment '{other}'"))),
    }
}
