//! `ids-chan` command line.
//!
//! Every subcommand resolves and checks all of its inputs before computing,
//! and writes its outputs only once everything has succeeded.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::extract::{self, ChannelParamSet, KfMode, PRESET_NAMES};
use crate::genchan::{self, DEFAULT_TAPS};
use crate::linksim::{self, BerConfig, LinkBudget};
use crate::pathdata::{self, Condition, DatasetError};
use crate::tracer::{self, GeometryError, ScenarioPreset, SceneConfig};

pub const DEFAULT_SEED: u64 = 28;

#[derive(Debug, Parser)]
#[command(
    name = "ids-chan",
    version,
    about = "mmWave channel synthesis, extraction, generation and BER simulation"
)]
pub struct Cli {
    /// Base RNG seed.
    #[arg(long, global = true, env = "IDS_CHAN_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ray-trace a scenario and write a path dataset (CSV + .meta.json).
    Trace(TraceArgs),
    /// Extract channel parameters, condition ratios and path-loss residuals.
    Extract(ExtractArgs),
    /// Draw stochastic realizations and write them as a path dataset.
    Gen(GenArgs),
    /// Per-receiver RSSI and SNR.
    Rssi(RssiArgs),
    /// Monte-Carlo BPSK BER sweep over parameter presets.
    Ber(BerArgs),
    /// Dump the built-in parameter presets.
    Presets(PresetsArgs),
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// BL, CV, RecV or EmV.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON scene overrides.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// `key=json` override applied on top of the scene file; dotted keys
    /// address nested fields. Repeatable.
    #[arg(long = "set", value_name = "KEY=JSON")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KfModeArg {
    Direct,
    Strongest,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output prefix; writes `<prefix>.params.csv`, `<prefix>.ratios.csv`
    /// and `<prefix>.residuals.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "direct")]
    pub kf_mode: KfModeArg,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub cond: String,
    #[arg(long, default_value_t = 2400)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_TAPS)]
    pub taps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RssiArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BerArgs {
    /// Comma-separated preset names.
    #[arg(long, default_value = "BL,3GPP-InO")]
    pub presets: String,
    #[arg(long, default_value = "LOS")]
    pub cond: String,
    /// `start:step:stop` in dB, or a comma-separated list.
    #[arg(long, default_value = "0:1:20")]
    pub ebn0: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub bits: u64,
    #[arg(long, default_value_t = 100)]
    pub block_len: usize,
    /// BER at which curve gaps are reported.
    #[arg(long, default_value_t = 1e-3)]
    pub target_ber: f64,
    /// BER CSV; gaps go to `<stem>.gaps.csv` next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresetsArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("extract: {0}")]
    Extract(#[from] extract::ExtractError),
    #[error("gen: {0}")]
    Gen(#[from] genchan::GenError),
    #[error("link: {0}")]
    Link(#[from] linksim::LinkError),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn check_input(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

fn check_output(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        return Err(usage(format!("output {} is a directory", path.display())));
    }
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(usage(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_param_set(name: &str) -> Result<ChannelParamSet, CliError> {
    ChannelParamSet::builtin(name).ok_or_else(|| {
        usage(format!(
            "unknown preset {name:?}; expected one of {}",
            PRESET_NAMES.join(", ")
        ))
    })
}

fn parse_condition(s: &str) -> Result<Condition, CliError> {
    match s.parse::<Condition>().map_err(usage)? {
        c @ (Condition::Los | Condition::Nlos) => Ok(c),
        c => Err(usage(format!(
            "condition {c} has no channel parameters; use LOS or NLOS"
        ))),
    }
}

fn set_dotted(
    root: &mut serde_json::Value,
    key: &str,
    value: serde_json::Value,
) -> Result<(), CliError> {
    let mut cur = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            usage(format!(
                "override {key:?}: {part:?} is not inside an object"
            ))
        })?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part)
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
        if cur.is_null() {
            *cur = serde_json::Value::Object(Default::default());
        }
    }
    Err(usage(format!("empty override key {key:?}")))
}

/// Loads the scene file (if any) and applies `key=json` overrides.
pub fn load_scene_config(
    scene: Option<&Path>,
    overrides: &[String],
) -> Result<SceneConfig, CliError> {
    let mut value = match scene {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("scene {}: {e}", path.display())))?
        }
        None => serde_json::Value::Object(Default::default()),
    };
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| usage(format!("override {ov:?} is not KEY=JSON")))?;
        let v = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        set_dotted(&mut value, key.trim(), v)?;
    }
    serde_json::from_value(value).map_err(|e| usage(format!("scene config: {e}")))
}

fn cmd_trace(a: &TraceArgs) -> Result<(), CliError> {
    if let Some(s) = &a.scene {
        check_input(s)?;
    }
    check_output(&a.out)?;
    let cfg = load_scene_config(a.scene.as_deref(), &a.overrides)?;
    let name = a
        .preset
        .as_deref()
        .or(cfg.preset.as_deref())
        .ok_or_else(|| usage("trace needs --preset or a scene file with \"preset\""))?;
    let preset = ScenarioPreset::parse(name).ok_or_else(|| {
        usage(format!(
            "unknown scenario preset {name:?}; expected BL, CV, RecV or EmV"
        ))
    })?;
    let scene = tracer::build_scenario(preset, &cfg)?;
    let mut budget = LinkBudget::default();
    cfg.apply_to_budget(&mut budget);
    budget.validate()?;
    let ds = tracer::trace_scenario(&scene, &budget)?;
    pathdata::save_dataset(&ds, &a.out)?;
    Ok(())
}

fn cmd_extract(a: &ExtractArgs) -> Result<(), CliError> {
    check_input(&a.input)?;
    let outs = [".params.csv", ".ratios.csv", ".residuals.csv"].map(|s| with_suffix(&a.out, s));
    for o in &outs {
        check_output(o)?;
    }
    let ds = pathdata::load_dataset(&a.input)?;
    let mode = match a.kf_mode {
        KfModeArg::Direct => KfMode::DirectPath,
        KfModeArg::Strongest => KfMode::StrongestPath,
    };
    let summary = extract::summarize(&ds, &ds.link_budget, mode)?;
    let residuals: Vec<_> = summary
        .fits
        .iter()
        .flat_map(|f| extract::residuals(&ds, f, &ds.link_budget))
        .collect();
    write_file(
        &outs[0],
        &extract::param_table_csv(std::slice::from_ref(&summary.params)),
    )?;
    write_file(
        &outs[1],
        &extract::ratios_csv(&[(ds.scenario_name.as_str(), summary.ratios)]),
    )?;
    write_file(&outs[2], &extract::residuals_csv(&residuals))?;
    Ok(())
}

fn cmd_gen(a: &GenArgs, seed: u64) -> Result<(), CliError> {
    check_output(&a.out)?;
    let params = parse_param_set(&a.preset)?;
    let cond = parse_condition(&a.cond)?;
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if u32::try_from(a.n).is_err() {
        return Err(usage("--n exceeds the receiver id range"));
    }
    let reals = genchan::draw_many(&params, cond, a.taps, a.n, seed)?;
    let ds = genchan::realizations_dataset(&params, cond, &reals);
    pathdata::save_dataset(&ds, &a.out)?;
    Ok(())
}

fn cmd_rssi(a: &RssiArgs) -> Result<(), CliError> {
    check_input(&a.input)?;
    check_output(&a.out)?;
    let ds = pathdata::load_dataset(&a.input)?;
    ds.link_budget.validate()?;
    write_file(&a.out, &linksim::rssi_csv(&linksim::rssi_map(&ds)))
}

fn cmd_ber(a: &BerArgs, seed: u64) -> Result<(), CliError> {
    check_output(&a.out)?;
    let gaps_path = a.out.with_extension("gaps.csv");
    check_output(&gaps_path)?;
    let presets = a
        .presets
        .split(',')
        .map(|s| parse_param_set(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let cond = parse_condition(&a.cond)?;
    let grid = linksim::parse_grid(&a.ebn0).map_err(usage)?;
    if !(a.target_ber > 0.0 && a.target_ber < 0.5) {
        return Err(usage("--target-ber must lie in (0, 0.5)"));
    }
    let cfg = BerConfig {
        block_len: a.block_len,
        ..Default::default()
    };
    let sweep = linksim::ber_sweep(&presets, cond, &grid, a.bits, seed, &cfg)?;

    let mut gaps = String::from("preset_a,preset_b,condition,target_ber,gap_db\n");
    for i in 0..sweep.curves.len() {
        for j in i + 1..sweep.curves.len() {
            let gap = sweep.gap_db(i, j, a.target_ber);
            let shown = gap.map_or_else(|| "n/a".to_string(), |g| format!("{g}"));
            let _ = writeln!(
                gaps,
                "{},{},{cond},{},{shown}",
                sweep.curves[i].preset, sweep.curves[j].preset, a.target_ber
            );
            eprintln!(
                "{} vs {} ({cond}): Eb/N0 gap at BER {} = {shown} dB",
                sweep.curves[i].preset, sweep.curves[j].preset, a.target_ber
            );
        }
    }
    write_file(&a.out, &sweep.to_csv())?;
    write_file(&gaps_path, &gaps)
}

fn cmd_presets(a: &PresetsArgs) -> Result<(), CliError> {
    check_output(&a.out)?;
    write_file(
        &a.out,
        &extract::param_table_csv(&ChannelParamSet::builtins()),
    )
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Trace(a) => cmd_trace(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Gen(a) => cmd_gen(a, cli.seed),
        Command::Rssi(a) => cmd_rssi(a),
        Command::Ber(a) => cmd_ber(a, cli.seed),
        Command::Presets(a) => cmd_presets(a),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| usage(format!("thread pool: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string();
            let line = first
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {line}");
            return 2;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
