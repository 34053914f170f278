//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::base_measure::BaseMeasure;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::model::CovariateGrid;
use crate::moments::{self, EventRect, DEFAULT_REPLICATES, DEFAULT_TRUNCATION};
use crate::run::{run_chains, SamplerKind};
use crate::selfcheck;
use crate::simulate;
use crate::summary;
use crate::trace::{self, TraceRecord};

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "config.txt";

#[derive(Debug, Parser)]
#[command(
    name = "nhdp",
    version,
    about = "Nested hierarchical Dirichlet process mixtures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    #[value(name = "twogroup")]
    Twogroup,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SamplerArg {
    Conditional,
    Marginal,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known truth.
    Simulate {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Subjects of the two-group surrogate.
        #[arg(long, default_value_t = 30)]
        subjects: usize,
        /// Days of the two-group surrogate.
        #[arg(long, default_value_t = 30)]
        horizon: usize,
    },
    /// Run the sampler and write per-chain traces plus a run manifest.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset applied when no config file is given.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long, value_enum)]
        sampler: Option<SamplerArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pool the chains of a fit and write plot-ready summaries.
    Summarize {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Slot interval `lo:hi` (inclusive) for co-clustering; repeatable.
        /// Defaults to all slots when the data carry stream ids.
        #[arg(long = "interval")]
        intervals: Vec<String>,
    },
    /// Closed-form moments of the random measures next to a truncated simulation.
    Moments {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha_u: f64,
        /// Defaults to `alpha-u`.
        #[arg(long)]
        alpha_v: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        distance: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long, default_value_t = 0.05)]
        omega: f64,
        #[arg(long, default_value_t = 0.0)]
        mean: f64,
        /// Event `lo:hi` at slot u; either end may be `inf` or `-inf`.
        #[arg(long, default_value = "-inf:0")]
        event_a: String,
        #[arg(long, default_value = "-inf:0")]
        event_b: String,
        #[arg(long, default_value_t = DEFAULT_TRUNCATION)]
        truncation: usize,
        #[arg(long, default_value_t = DEFAULT_REPLICATES)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the built-in oracle checks.
    Selfcheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub chains: usize,
    pub sweeps: usize,
    pub burnin: usize,
    pub thin: usize,
    pub data: FileHash,
    pub grid: FileHash,
    pub group_sizes: Vec<usize>,
    pub streams: bool,
    pub traces: Vec<FileHash>,
}

fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path, name: String) -> Result<FileHash> {
    Ok(FileHash {
        path: name,
        sha256: sha256_bytes(&std::fs::read(path)?),
    })
}

/// Run a parsed command, writing reports to `out`.
pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Simulate {
            preset,
            seed,
            out: dir,
            subjects,
            horizon,
        } => {
            let syn = match preset {
                Preset::A => simulate::gen_dataset_a(seed),
                Preset::B => simulate::gen_dataset_b(seed),
                Preset::Twogroup => simulate::gen_two_group(seed, subjects, horizon),
            }?;
            std::fs::create_dir_all(&dir)?;
            io::write_grid(&dir.join("grid.csv"), &syn.grid)?;
            io::write_data(&dir.join("data.csv"), &syn.data)?;
            io::write_json(&dir.join("truth.json"), &syn.truth)?;
            writeln!(
                out,
                "wrote {} observations to {}",
                syn.data.total(),
                dir.display()
            )?;
            Ok(())
        }
        Command::Fit {
            config,
            preset,
            data,
            grid,
            seed,
            chains,
            sweeps,
            burnin,
            thin,
            sampler,
            out: dir,
        } => {
            let mut cfg = match (&config, &preset) {
                (Some(_), Some(_)) => {
                    return Err(Error::config(
                        "preset",
                        "give either --config or --preset, not both",
                    ))
                }
                (Some(p), None) => RunConfig::from_file(p)?,
                (None, Some(p)) => RunConfig::preset(p)?,
                (None, None) => RunConfig::default(),
            };
            cfg.data = data.or(cfg.data);
            cfg.grid = grid.or(cfg.grid);
            cfg.out = dir.or(cfg.out);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.chains = chains.unwrap_or(cfg.chains);
            cfg.sweeps = sweeps.unwrap_or(cfg.sweeps);
            cfg.burnin = burnin.or(cfg.burnin);
            cfg.thin = thin.unwrap_or(cfg.thin);
            if let Some(s) = sampler {
                cfg.sampler = match s {
                    SamplerArg::Conditional => SamplerKind::Conditional,
                    SamplerArg::Marginal => SamplerKind::Marginal,
                };
            }
            cfg.apply_env()?;
            if cfg.chains == 0 || cfg.thin == 0 || cfg.sweeps == 0 {
                return Err(Error::config(
                    "chains",
                    "chains, sweeps and thin must be positive",
                ));
            }
            let manifest = fit(&cfg)?;
            writeln!(
                out,
                "{} chains x {} sweeps written to {}",
                manifest.chains,
                manifest.sweeps,
                cfg.out
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default()
            )?;
            Ok(())
        }
        Command::Summarize {
            trace,
            out: dir,
            intervals,
        } => summarize(&trace, &dir, &intervals, out),
        Command::Moments {
            gamma,
            alpha_u,
            alpha_v,
            distance,
            sigma2,
            omega,
            mean,
            event_a,
            event_b,
            truncation,
            replicates,
            seed,
        } => {
            let grid = CovariateGrid::new(vec![vec![0.0], vec![distance]])?;
            let h = BaseMeasure::gp(&grid, mean, sigma2, omega)?;
            let (alo, ahi) = parse_interval("event-a", &event_a)?;
            let (blo, bhi) = parse_interval("event-b", &event_b)?;
            let a = EventRect::new(0, alo, ahi)?;
            let b = EventRect::new(1, blo, bhi)?;
            let alpha_v = alpha_v.unwrap_or(alpha_u);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mc = moments::mc_truncated(
                &h, gamma, alpha_u, alpha_v, &a, &b, truncation, replicates, &mut rng,
            )?;
            let rows = [
                ("var_q_u", moments::var_q(&h, gamma, &a)?, mc.var_q_u),
                ("var_q_v", moments::var_q(&h, gamma, &b)?, mc.var_q_v),
                ("corr_q", moments::corr_q(&h, &a, &b)?, mc.corr_q),
                (
                    "var_g_u",
                    moments::var_g(&h, gamma, alpha_u, &a)?,
                    mc.var_g_u,
                ),
                (
                    "var_g_v",
                    moments::var_g(&h, gamma, alpha_v, &b)?,
                    mc.var_g_v,
                ),
                (
                    "corr_g",
                    moments::corr_g(&h, gamma, alpha_u, alpha_v, &a, &b)?,
                    mc.corr_g,
                ),
            ];
            writeln!(out, "quantity,closed_form,monte_carlo,se,z")?;
            for (name, closed, est) in rows {
                writeln!(
                    out,
                    "{name},{closed:.16e},{:.16e},{:.16e},{:.4}",
                    est.value,
                    est.se,
                    (est.value - closed) / est.se
                )?;
            }
            Ok(())
        }
        Command::Selfcheck => {
            let checks = selfcheck::run_all();
            for c in &checks {
                writeln!(
                    out,
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                )?;
            }
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name)
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::Numerical(format!(
                    "self-check failed: {}",
                    failed.join(", ")
                )))
            }
        }
    }
}

fn parse_bound(key: &str, s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t
            .parse()
            .map_err(|_| Error::config(key, format!("cannot parse bound {t:?}"))),
    }
}

fn parse_interval(key: &str, s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::config(key, format!("expected lo:hi, got {s:?}")))?;
    Ok((parse_bound(key, lo)?, parse_bound(key, hi)?))
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::config(key, "path is required"))
}

/// Fit `cfg` and write traces, the resolved config and the manifest to `cfg.out`.
pub fn fit(cfg: &RunConfig) -> Result<Manifest> {
    let data_path = required(&cfg.data, "data")?;
    let grid_path = required(&cfg.grid, "grid")?;
    let dir = required(&cfg.out, "out")?;
    let schedule = cfg.schedule()?;
    let opts = cfg.sampler_options()?;
    let grid = io::read_grid(grid_path)?;
    let data = io::read_data(data_path, grid.len())?;
    let h = cfg.base_measure(&grid)?;
    let hyper = cfg.hyper(grid.len());
    hyper.validate(grid.len())?;

    let chains = run_chains(
        &data,
        &h,
        &hyper,
        opts,
        cfg.sampler,
        &schedule,
        cfg.seed,
        cfg.chains,
    )?;
    std::fs::create_dir_all(dir)?;
    let mut traces = Vec::new();
    for (c, records) in chains.iter().enumerate() {
        trace::write_chain(dir, c, records)?;
        for name in trace::chain_files(c) {
            traces.push(hash_file(&dir.join(&name), name)?);
        }
    }
    let text = cfg.to_text();
    std::fs::write(dir.join(RESOLVED_CONFIG), &text)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_bytes(text.as_bytes()),
        config: text,
        seed: cfg.seed,
        sampler: cfg.sampler,
        chains: cfg.chains,
        sweeps: schedule.sweeps,
        burnin: schedule.burnin,
        thin: schedule.thin,
        data: hash_file(data_path, data_path.display().to_string())?,
        grid: hash_file(grid_path, grid_path.display().to_string())?,
        group_sizes: data.group_sizes(),
        streams: data.streams().is_some(),
        traces,
    };
    io::write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(dir.join(MANIFEST))
        .map_err(|e| Error::Data(format!("{}: {e}", dir.join(MANIFEST).display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// All chains of a fit, pooled in chain order.
pub fn read_traces(dir: &Path, manifest: &Manifest) -> Result<Vec<TraceRecord>> {
    let mut all = Vec::new();
    for c in 0..manifest.chains {
        all.extend(trace::read_chain(dir, c, &manifest.group_sizes)?);
    }
    Ok(all)
}

fn summarize(
    trace_dir: &Path,
    dir: &Path,
    intervals: &[String],
    out: &mut dyn Write,
) -> Result<()> {
    let manifest = read_manifest(trace_dir)?;
    let records = read_traces(trace_dir, &manifest)?;
    let m = manifest.group_sizes.len();
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("k_posterior.csv"))?;
    w.write_record(["k", "probability"])?;
    for (k, p) in summary::k_posterior(&records)? {
        w.write_record([k.to_string(), format!("{p:.16e}")])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("local_k_u.csv"))?;
    w.write_record(["slot", "k", "probability"])?;
    for u in 0..m {
        for (k, p) in summary::local_k_posterior(&records, u)? {
            w.write_record([u.to_string(), k.to_string(), format!("{p:.16e}")])?;
        }
    }
    w.flush()?;

    let curves = summary::atom_curves(&records)?;
    let mut w = csv::Writer::from_path(dir.join("atom_curves.csv"))?;
    w.write_record(["slot", "cluster", "mean", "q05", "q95"])?;
    for u in 0..m {
        for (c, curve) in curves.curves.iter().enumerate() {
            w.write_record([
                u.to_string(),
                c.to_string(),
                format!("{:.16e}", curve.mean[u]),
                format!("{:.16e}", curve.q05[u]),
                format!("{:.16e}", curve.q95[u]),
            ])?;
        }
    }
    w.flush()?;
    writeln!(
        out,
        "{} records pooled; atom curves from {} records with K = {} ({} unaligned)",
        records.len(),
        curves.used,
        curves.k,
        curves.unaligned
    )?;

    let mut ranges = Vec::new();
    for s in intervals {
        let (lo, hi) = s
            .split_once(':')
            .and_then(|(a, b)| {
                Some((
                    a.trim().parse::<usize>().ok()?,
                    b.trim().parse::<usize>().ok()?,
                ))
            })
            .filter(|&(lo, hi)| lo <= hi && hi < m)
            .ok_or_else(|| {
                Error::config(
                    "interval",
                    format!("expected lo:hi within 0..{m}, got {s:?}"),
                )
            })?;
        ranges.push((lo, hi));
    }
    if ranges.is_empty() && manifest.streams {
        ranges.push((0, m - 1));
    }
    if ranges.is_empty() {
        return Ok(());
    }
    let data = io::read_data(Path::new(&manifest.data.path), m)?;
    if data.group_sizes() != manifest.group_sizes {
        return Err(Error::Data(format!(
            "{} no longer matches the fit",
            manifest.data.path
        )));
    }
    for (lo, hi) in ranges {
        let cc = summary::coclustering(&records, data.streams(), lo..=hi)?;
        let mut w = csv::Writer::from_path(dir.join(format!("cocluster_{lo}-{hi}.csv")))?;
        w.write_record(["stream_a", "stream_b", "probability"])?;
        for (i, a) in cc.streams.iter().enumerate() {
            for (j, b) in cc.streams.iter().enumerate() {
                w.write_record([
                    a.to_string(),
                    b.to_string(),
                    format!("{:.16e}", cc.matrix[i][j]),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    key: Option<&'a str>,
    exit_code: i32,
}

/// JSON line describing `e`, as written to stderr.
pub fn error_json(e: &Error) -> String {
    let key = match e {
        Error::Config { key, .. } => Some(key.as_str()),
        _ => None,
    };
    let report = ErrorReport {
        error: e.kind(),
        message: e.to_string(),
        key,
        exit_code: e.exit_code(),
    };
    serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.kind()))
}

/// Parse the process arguments, run, and return the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli.command, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}
