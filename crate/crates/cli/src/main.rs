mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use karlin::asymptotics::{self, AsymptoticError, NormalizerKind};
use karlin::exact_moments::{
    mean_binomial_exact, mean_poisson_exact, var_binomial_exact, var_identity_rhs, var_poisson_exact, MomentResult,
};
use karlin::experiments::{self, ExperimentConfig, ExperimentError, ExperimentReport, GridSpec, Outcome, Table};
use karlin::simulator::{self, SimConfig, SimError};
use karlin::{CountKind, MomentError, Regime, SeriesOptions, WeightModel};

const MANIFEST_SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(name = "karlin", version, about = "Small counts in the infinite occupancy scheme")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, env = "KARLIN_OUT", default_value = "karlin-out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Asymptotic constants for j in a range.
    Constants(ConstantsArgs),
    /// Exact moments at one time or ball count.
    Moments(MomentsArgs),
    /// Occupancy paths over a grid.
    Simulate(SimulateArgs),
    /// CLT check for K_j^*(t).
    Clt(ExperimentArgs),
    /// LIL path statistics.
    Lil(ExperimentArgs),
    /// Fixed-n versus Poissonized moments.
    Depoisson(ExperimentArgs),
    /// Variance concentration in (t/log t, t log t].
    Window(ExperimentArgs),
    /// Exact moments over their asymptotic forms.
    Ratio(ExperimentArgs),
}

#[derive(Args)]
struct ConstantsArgs {
    #[arg(long)]
    family: String,
    /// A single j or a range a..b (inclusive).
    #[arg(long, default_value = "1..5")]
    j: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Exactly,
    AtLeast,
}

impl From<Kind> for CountKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Exactly => CountKind::ExactlyJ,
            Kind::AtLeast => CountKind::AtLeastJ,
        }
    }
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 1)]
    j: u32,
    /// Poissonized time.
    #[arg(long, conflicts_with = "n", required_unless_present = "n")]
    t: Option<f64>,
    /// Number of balls (fixed-n scheme, exactly-j counts).
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, value_enum, default_value_t = Kind::Exactly)]
    kind: Kind,
    /// Absolute series tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Cross-term cap for the fixed-n variance (default 2n).
    #[arg(long)]
    k_cap: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Poisson,
    Binomial,
    Coupled,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    family: String,
    /// Largest j tracked.
    #[arg(long, default_value_t = 3)]
    j: u32,
    #[arg(long)]
    grid: String,
    #[arg(short = 'M', long = "replicates", default_value_t = 10)]
    replicates: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Scheme::Poisson)]
    scheme: Scheme,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    j: Option<u32>,
    /// Single time, shorthand for --grid list:T.
    #[arg(long, conflicts_with = "grid")]
    t: Option<f64>,
    /// geometric:t0:t1:count, list:v1,v2,... or tau:gamma:count.
    #[arg(long)]
    grid: Option<String>,
    #[arg(short = 'M', long = "replicates")]
    replicates: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_cap: Option<u64>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Experiment config JSON; flags override its fields.
    #[arg(long, conflicts_with = "replay")]
    config: Option<PathBuf>,
    /// Rerun the config recorded in a report.json.
    #[arg(long, conflicts_with_all = ["family", "j", "t", "grid", "replicates", "seed", "k_cap", "kind"])]
    replay: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}

/// 3 for numeric or truncation failures, 2 for everything else.
fn error_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(x) = cause.downcast_ref::<ExperimentError>() {
            return if x.is_numeric() { 3 } else { 2 };
        }
        if let Some(MomentError::TruncationFailure { .. }) = cause.downcast_ref::<MomentError>() {
            return 3;
        }
        if let Some(SimError::Horizon { .. }) = cause.downcast_ref::<SimError>() {
            return 3;
        }
    }
    2
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let start = Instant::now();
    let (name, config, outputs, code) = match &cli.command {
        Command::Constants(a) => constants(a, &cli)?,
        Command::Moments(a) => moments(a, &cli)?,
        Command::Simulate(a) => simulate(a, &cli)?,
        Command::Clt(a) => experiment("clt", a, &cli)?,
        Command::Lil(a) => experiment("lil", a, &cli)?,
        Command::Depoisson(a) => experiment("depoisson", a, &cli)?,
        Command::Window(a) => experiment("window", a, &cli)?,
        Command::Ratio(a) => experiment("ratio", a, &cli)?,
    };
    write_manifest(&cli.out, name, config, cli.format, &outputs)?;
    eprintln!("{name}: {:.2}s, outputs in {}", start.elapsed().as_secs_f64(), cli.out.display());
    Ok(code)
}

type RunOutput = (&'static str, Value, Vec<String>, u8);

fn write_manifest(out: &Path, subcommand: &str, config: Value, format: Format, outputs: &[String]) -> Result<()> {
    let manifest = json!({
        "schema_version": MANIFEST_SCHEMA,
        "tool": "karlin",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "format": format!("{format:?}").to_lowercase(),
        "config": config,
        "outputs": outputs,
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn parse_model(spec: &str) -> Result<WeightModel> {
    Ok(WeightModel::parse(spec)?)
}

fn parse_j_range(s: &str) -> Result<(u32, u32)> {
    let parse = |x: &str| x.trim().parse::<u32>().with_context(|| format!("bad j '{s}'"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => (parse(s)?, parse(s)?),
    };
    if a == 0 || b < a {
        bail!("j range '{s}' must satisfy 1 <= a <= b");
    }
    Ok((a, b))
}

/// Writes a table as CSV or JSON per `format`; SVG also writes the CSV.
fn emit_table(out: &Path, table: &Table, format: Format, outputs: &mut Vec<String>) -> Result<()> {
    match format {
        Format::Json => {
            let name = format!("{}.json", table.name);
            std::fs::write(out.join(&name), serde_json::to_string_pretty(table)? + "\n")?;
            outputs.push(name);
        }
        Format::Csv | Format::Svg => {
            let name = format!("{}.csv", table.name);
            table.write_csv(std::fs::File::create(out.join(&name))?)?;
            outputs.push(name);
        }
    }
    Ok(())
}

fn emit_svg(out: &Path, table: &Table, x: &str, ys: &[&str], log_x: bool, outputs: &mut Vec<String>) -> Result<()> {
    if let Some(s) = svg::line_chart(table, x, ys, log_x) {
        let name = format!("{}.svg", table.name);
        std::fs::write(out.join(&name), s)?;
        outputs.push(name);
    }
    Ok(())
}

fn constants(a: &ConstantsArgs, cli: &Cli) -> Result<RunOutput> {
    let model = parse_model(&a.family)?;
    let regime = model.regime().ok_or(AsymptoticError::NoRegime)?;
    let (j0, j1) = parse_j_range(&a.j)?;
    let mut cols = vec!["j", "mean_constant", "var_constant", "big_mean_constant", "big_var_constant", "lil_constant", "log_var_normalizer", "upper_bound_only"];
    let extra = match regime {
        Regime::RegVar { .. } => Some("c_j_alpha"),
        Regime::RegVarOne => Some("c_j_one"),
        _ => None,
    };
    cols.extend(extra);
    let mut table = Table::new("constants", &cols);
    for j in j0..=j1 {
        let mean = asymptotics::small_mean(regime, j)?;
        let var = asymptotics::small_var(regime, j)?;
        let (bm, bv) = asymptotics::big_counts(regime, j)?;
        let info = asymptotics::lil_spec(&model, j)?;
        let mut row = vec![
            j as f64,
            mean.constant,
            var.constant,
            bm.constant,
            bv.constant,
            info.lil_constant,
            (info.normalizer_kind == NormalizerKind::LogVar) as u8 as f64,
            info.upper_bound_only as u8 as f64,
        ];
        match regime {
            Regime::RegVar { alpha } => row.push(asymptotics::c_j_alpha(j, alpha)),
            Regime::RegVarOne => row.push(asymptotics::c_j_one(j)),
            _ => {}
        }
        table.push(row);
    }
    let mut outputs = Vec::new();
    emit_table(&cli.out, &table, cli.format, &mut outputs)?;
    if cli.format == Format::Svg {
        emit_svg(&cli.out, &table, "j", &["mean_constant", "var_constant"], false, &mut outputs)?;
    }
    Ok(("constants", json!({"family": a.family, "j": a.j}), outputs, 0))
}

fn moment_json(m: &MomentResult) -> Value {
    json!({"value": m.value, "error_bound": m.error_bound, "k_truncation": m.k_truncation})
}

fn moments(a: &MomentsArgs, cli: &Cli) -> Result<RunOutput> {
    let model = parse_model(&a.family)?;
    let opts = SeriesOptions::with_tol(a.tol);
    let kind: CountKind = a.kind.into();
    let mut table = Table::new("moments", &["j", "t", "n", "mean", "mean_error_bound", "var", "var_error_bound"]);
    let result = if let Some(t) = a.t {
        let mean = mean_poisson_exact(&model, a.j, t, kind, &opts)?;
        let var = var_poisson_exact(&model, a.j, t, kind, &opts)?;
        table.push(vec![a.j as f64, t, f64::NAN, mean.value, mean.error_bound, var.value, var.error_bound]);
        let mut r = json!({"scheme": "poisson", "t": t, "mean": moment_json(&mean), "var": moment_json(&var)});
        if kind == CountKind::ExactlyJ {
            r["identity_rhs"] = moment_json(&var_identity_rhs(&model, a.j, t, &opts)?);
        }
        r
    } else {
        let n = a.n.expect("clap requires t or n");
        if kind != CountKind::ExactlyJ {
            return Err(MomentError::InvalidArgument("fixed-n moments cover exactly-j counts only".into()).into());
        }
        let mean = mean_binomial_exact(&model, a.j, n, kind, &opts)?;
        let var = var_binomial_exact(&model, a.j, n, a.k_cap.unwrap_or(2 * n).max(1), &opts)?;
        table.push(vec![a.j as f64, f64::NAN, n as f64, mean.value, mean.error_bound, var.value, var.diagonal.error_bound]);
        json!({
            "scheme": "binomial",
            "n": n,
            "mean": moment_json(&mean),
            "var": {
                "value": var.value,
                "error_bound": var.diagonal.error_bound,
                "k_used": var.k_used,
                "residual_estimate": var.residual_estimate,
                "exact_cross": var.exact_cross,
            },
        })
    };
    let doc = json!({"family": a.family, "j": a.j, "kind": kind, "result": result});
    std::fs::write(cli.out.join("moments.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    let mut outputs = vec!["moments.json".to_string()];
    if cli.format != Format::Json {
        emit_table(&cli.out, &table, Format::Csv, &mut outputs)?;
    }
    println!("{}", serde_json::to_string_pretty(&doc["result"])?);
    let config = json!({"family": a.family, "j": a.j, "t": a.t, "n": a.n, "kind": kind, "tol": a.tol, "k_cap": a.k_cap});
    Ok(("moments", config, outputs, 0))
}

fn simulate(a: &SimulateArgs, cli: &Cli) -> Result<RunOutput> {
    let model = parse_model(&a.family)?;
    let spec: GridSpec = a.grid.parse()?;
    let grid = spec.values(&model, a.j)?;
    let cfg = SimConfig::new(grid, a.j, a.replicates, a.seed);
    let mut cols: Vec<String> = ["replicate", "scheme", "grid_value", "balls", "overflow_count"].iter().map(|s| s.to_string()).collect();
    cols.extend((1..=a.j + 1).map(|j| format!("k_{j}")));
    cols.extend((1..=a.j).map(|j| format!("k_star_{j}")));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new("paths", &col_refs);
    let mut push = |rep: u32, scheme: f64, points: &[simulator::PathPoint]| {
        for p in points {
            let mut row = vec![rep as f64, scheme, p.grid_value, p.balls.map_or(f64::NAN, |b| b as f64), p.overflow_count as f64];
            row.extend(p.k.iter().map(|&x| x as f64));
            row.extend(p.k_star.iter().map(|&x| x as f64));
            table.push(row);
        }
    };
    // scheme column: 0 fixed-n, 1 Poissonized
    match a.scheme {
        Scheme::Poisson => simulator::simulate_poisson_path(&model, &cfg)?.iter().for_each(|p| push(p.replicate, 1.0, &p.points)),
        Scheme::Binomial => simulator::simulate_binomial_path(&model, &cfg)?.iter().for_each(|p| push(p.replicate, 0.0, &p.points)),
        Scheme::Coupled => {
            for c in simulator::simulate_coupled(&model, &cfg)? {
                push(c.replicate, 0.0, &c.deterministic);
                push(c.replicate, 1.0, &c.poissonized);
            }
        }
    }
    let mut outputs = Vec::new();
    emit_table(&cli.out, &table, cli.format, &mut outputs)?;
    let config = json!({
        "family": a.family, "j": a.j, "grid": a.grid, "replicates": a.replicates, "seed": a.seed,
        "scheme": format!("{:?}", a.scheme).to_lowercase(), "spread": cfg.spread,
    });
    Ok(("simulate", config, outputs, 0))
}

fn default_config(name: &str, family: &str) -> ExperimentConfig {
    let (grid, replicates) = match name {
        "clt" => (GridSpec::Explicit { values: vec![1e6] }, 5000),
        "lil" => (GridSpec::geometric(1e2, 1e10, 30), 200),
        "depoisson" => (GridSpec::Explicit { values: vec![1e2, 1e3, 1e4] }, 0),
        "window" => (GridSpec::geometric(1e4, 1e8, 5), 0),
        _ => (GridSpec::geometric(1e4, 1e10, 13), 0),
    };
    let mut c = ExperimentConfig::new(name, family, 1, grid);
    c.replicates = replicates;
    c
}

fn resolve_config(name: &str, a: &ExperimentArgs) -> Result<ExperimentConfig> {
    if let Some(path) = &a.replay {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: ExperimentReport =
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        if report.experiment != name {
            bail!(ExperimentError::Config(format!("{} holds a '{}' report, not '{name}'", path.display(), report.experiment)));
        }
        return Ok(report.config);
    }
    let mut c = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut c: ExperimentConfig =
                serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
            if c.experiment != name {
                bail!(ExperimentError::Config(format!("config is for '{}', not '{name}'", c.experiment)));
            }
            if let Some(f) = &a.family {
                c.family = f.clone();
                c.params.clear();
            }
            c
        }
        None => {
            let family = a.family.as_deref().ok_or_else(|| ExperimentError::Config("--family or --config is required".into()))?;
            default_config(name, family)
        }
    };
    if let Some(j) = a.j {
        c.j = j;
    }
    if let Some(t) = a.t {
        c.grid = GridSpec::Explicit { values: vec![t] };
    }
    if let Some(g) = &a.grid {
        c.grid = g.parse()?;
    }
    if let Some(m) = a.replicates {
        c.replicates = m;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if a.k_cap.is_some() {
        c.k_cap = a.k_cap;
    }
    if let Some(k) = a.kind {
        c.kind = k.into();
    }
    Ok(c)
}

fn experiment(name: &'static str, a: &ExperimentArgs, cli: &Cli) -> Result<RunOutput> {
    let config = resolve_config(name, a)?;
    let report = experiments::run_experiment(&config)?;
    let written = report.write(&cli.out)?;
    let mut outputs: Vec<String> =
        written.iter().map(|p| p.file_name().expect("file").to_string_lossy().into_owned()).collect();
    if cli.format == Format::Svg {
        plot_report(&report, &cli.out, &mut outputs)?;
    }
    for v in &report.verdicts {
        println!("{:<22} {:<12} {}", v.criterion, v.outcome, v.detail);
    }
    let overall = report.overall();
    println!("overall {overall}");
    let code = if overall == Outcome::Fail { 1 } else { 0 };
    Ok((name, serde_json::to_value(&config)?, outputs, code))
}

fn plot_report(report: &ExperimentReport, out: &Path, outputs: &mut Vec<String>) -> Result<()> {
    let plots: &[(&str, &str, &[&str], bool)] = &[
        ("ratios", "t", &["mean_ratio", "var_ratio"], true),
        ("envelope", "t", &["q025_r", "q975_r", "max_r", "min_r", "mean_r"], true),
        ("window", "t", &["fraction"], true),
        ("depoisson", "n", &["var_ratio"], true),
    ];
    for (table, x, ys, log_x) in plots {
        if let Some(t) = report.table(table) {
            emit_svg(out, t, x, ys, *log_x, outputs)?;
        }
    }
    Ok(())
}
