//! Command-line surface: `synth`, `train`, `verify`, and `ablate`.
//!
//! Every tunable is reachable three ways with fixed precedence — command-line
//! flag, then flat `key=value` config file, then the built-in default — and
//! the fully resolved configuration is echoed into the run manifest so a run
//! is reproducible from its artifacts alone. All randomness flows from the
//! single resolved seed. Training artifacts live in a run directory named by
//! the hash of the manifest core (code version, dataset fingerprint, resolved
//! config), so identical invocations land in the same directory with
//! byte-identical contents.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime or solver error,
//! 3 verification failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{parse_letor, save_letor, synth_generate, Dataset};
use crate::optim::{
    train, Algorithm, Checkpoint, MetricsRecord, SamplingMode, TrainConfig, UpdateRule,
};
use crate::scorer::Arch;
use crate::surrogate::PsiKind;
use crate::verify::{run_batteries, VerifyFault};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "songrank",
    version,
    about = "Stochastic optimization of NDCG and top-K NDCG surrogates for ranking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic LETOR dataset from a planted linear teacher.
    Synth(SynthArgs),
    /// Train a scorer and write curves, checkpoint, and manifest.
    Train(TrainArgs),
    /// Run the verification batteries against the analytic oracles.
    Verify(VerifyArgs),
    /// Sweep beta0 over several seeds and summarize final NDCG@10.
    Ablate(AblateArgs),
}

/// Parses `argv` and dispatches. Returns the process exit code instead of
/// exiting so tests can drive the full binary surface in-process.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Ablate(args) => cmd_ablate(args),
    }
}

// ---------------------------------------------------------------------------
// Configuration resolution.

/// Training tunables shared by `train` and `ablate`. Values are kept as raw
/// strings so flags and config-file entries funnel through the same
/// [`set_key`] parser and accept the same spellings.
#[derive(Debug, Clone, Default, Args)]
struct TrainFlags {
    /// Flat key=value config file, one entry per line, `#` comments.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Algorithm: song, ksong, ksong-theoretical, or solc.
    #[arg(long)]
    algo: Option<String>,
    /// Scorer architecture: linear or mlp:H1,H2,...
    #[arg(long)]
    arch: Option<String>,
    /// Truncation depth K of the top-K objective.
    #[arg(long)]
    k: Option<String>,
    /// Innovation weight of the rank-estimate moving average.
    #[arg(long)]
    beta0: Option<String>,
    /// Innovation weight of the parameter momentum.
    #[arg(long)]
    beta1: Option<String>,
    /// Innovation weight of the lower-level averages.
    #[arg(long)]
    beta2: Option<String>,
    /// Parameter step size.
    #[arg(long)]
    eta: Option<String>,
    /// Threshold step size.
    #[arg(long)]
    eta2: Option<String>,
    /// Softplus temperature of the smoothed lower-level problem.
    #[arg(long)]
    tau1: Option<String>,
    /// Tikhonov weight of the smoothed lower-level problem.
    #[arg(long)]
    tau2: Option<String>,
    /// Squared-hinge margin.
    #[arg(long)]
    margin: Option<String>,
    /// Top-K selector: squared-relu or sigmoid-like.
    #[arg(long)]
    psi: Option<String>,
    /// Width parameter of the sigmoid-like selector.
    #[arg(long)]
    psi_scale: Option<String>,
    /// Anchor pairs drawn per step.
    #[arg(long)]
    pairs_per_step: Option<String>,
    /// Items drawn per touched query.
    #[arg(long)]
    items_per_query: Option<String>,
    /// Relevant items drawn per query in stratified sampling.
    #[arg(long)]
    relevant_per_query: Option<String>,
    /// Merge each anchor into its query's item batch (true/false).
    #[arg(long)]
    include_self: Option<String>,
    /// Sampling mode: flat-pairs or per-query-stratified.
    #[arg(long)]
    sampling: Option<String>,
    /// Update rule: momentum or adam.
    #[arg(long)]
    update_rule: Option<String>,
    /// Adam denominator floor.
    #[arg(long)]
    adam_eps: Option<String>,
    /// Adam first-moment innovation weight.
    #[arg(long)]
    adam_b1: Option<String>,
    /// Adam second-moment innovation weight.
    #[arg(long)]
    adam_b2: Option<String>,
    /// Main training epochs.
    #[arg(long)]
    epochs: Option<String>,
    /// SOLC warm-up epochs run before the main phase.
    #[arg(long)]
    warmup_epochs: Option<String>,
    /// Fraction of queries held out for evaluation.
    #[arg(long)]
    eval_fraction: Option<String>,
    /// Comma-separated NDCG cutoffs to record.
    #[arg(long)]
    eval_ks: Option<String>,
    /// Lower-level solver tolerance.
    #[arg(long)]
    solver_tol: Option<String>,
    /// Lower-level solver iteration cap.
    #[arg(long)]
    max_iter: Option<String>,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<String>,
}

impl TrainFlags {
    /// Flag overrides as (config key, raw value) pairs, declaration order.
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($key:literal, $field:ident) => {
                if let Some(v) = &self.$field {
                    out.push(($key, v.as_str()));
                }
            };
        }
        push!("algo", algo);
        push!("arch", arch);
        push!("k", k);
        push!("beta0", beta0);
        push!("beta1", beta1);
        push!("beta2", beta2);
        push!("eta", eta);
        push!("eta2", eta2);
        push!("tau1", tau1);
        push!("tau2", tau2);
        push!("margin", margin);
        push!("psi", psi);
        push!("psi-scale", psi_scale);
        push!("pairs-per-step", pairs_per_step);
        push!("items-per-query", items_per_query);
        push!("relevant-per-query", relevant_per_query);
        push!("include-self", include_self);
        push!("sampling", sampling);
        push!("update-rule", update_rule);
        push!("adam-eps", adam_eps);
        push!("adam-b1", adam_b1);
        push!("adam-b2", adam_b2);
        push!("epochs", epochs);
        push!("warmup-epochs", warmup_epochs);
        push!("eval-fraction", eval_fraction);
        push!("eval-ks", eval_ks);
        push!("solver-tol", solver_tol);
        push!("max-iter", max_iter);
        push!("seed", seed);
        out
    }

    /// Defaults, then the config file, then the flags; validated at the end.
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)?;
            apply_kv_text(&mut cfg, &text)?;
        }
        for (key, value) in self.overrides() {
            set_key(&mut cfg, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Applies a flat `key=value` config text. Blank lines and `#` comments are
/// skipped; keys are the kebab-case flag names.
fn apply_kv_text(cfg: &mut TrainConfig, text: &str) -> Result<()> {
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        set_key(cfg, key.trim(), value.trim())?;
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false"))),
    }
}

fn parse_algorithm(value: &str) -> Result<Algorithm> {
    match value {
        "song" => Ok(Algorithm::Song),
        "ksong" | "ksong-practical" => Ok(Algorithm::KsongPractical),
        "ksong-theoretical" => Ok(Algorithm::KsongTheoretical),
        "solc" => Ok(Algorithm::Solc),
        _ => Err(Error::Config(format!(
            "algo: unknown algorithm {value:?} (song, ksong, ksong-theoretical, solc)"
        ))),
    }
}

fn parse_arch(value: &str) -> Result<Arch> {
    if value == "linear" {
        return Ok(Arch::Linear);
    }
    if let Some(widths) = value.strip_prefix("mlp:") {
        let hidden = widths
            .split(',')
            .map(|w| parse_num::<usize>("arch", w.trim()))
            .collect::<Result<Vec<_>>>()?;
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Config("arch: hidden widths must be >= 1".into()));
        }
        return Ok(Arch::Mlp { hidden });
    }
    Err(Error::Config(format!(
        "arch: expected linear or mlp:H1,H2,... got {value:?}"
    )))
}

fn parse_psi(value: &str) -> Result<PsiKind> {
    match value {
        "squared-relu" => Ok(PsiKind::SquaredRelu),
        "sigmoid-like" => Ok(PsiKind::SigmoidLike),
        _ => Err(Error::Config(format!(
            "psi: expected squared-relu or sigmoid-like, got {value:?}"
        ))),
    }
}

fn parse_sampling(value: &str) -> Result<SamplingMode> {
    match value {
        "flat-pairs" => Ok(SamplingMode::FlatPairs),
        "per-query-stratified" => Ok(SamplingMode::PerQueryStratified),
        _ => Err(Error::Config(format!(
            "sampling: expected flat-pairs or per-query-stratified, got {value:?}"
        ))),
    }
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| parse_num::<usize>(key, v.trim()))
        .collect()
}

/// Current Adam constants, or the defaults when the rule is still momentum.
fn adam_constants(cfg: &TrainConfig) -> (f64, f64, f64) {
    let rule = match cfg.update_rule {
        UpdateRule::Adam { .. } => cfg.update_rule,
        UpdateRule::Momentum => UpdateRule::adam_default(),
    };
    match rule {
        UpdateRule::Adam { eps, b1, b2 } => (eps, b1, b2),
        UpdateRule::Momentum => unreachable!(),
    }
}

/// Applies one config entry. Keys are the kebab-case flag names; setting any
/// adam-* key switches the update rule to Adam.
fn set_key(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "algo" => cfg.algorithm = parse_algorithm(value)?,
        "arch" => cfg.arch = parse_arch(value)?,
        "k" => cfg.k = parse_num(key, value)?,
        "beta0" => cfg.beta0 = parse_num(key, value)?,
        "beta1" => cfg.beta1 = parse_num(key, value)?,
        "beta2" => cfg.beta2 = parse_num(key, value)?,
        "eta" => cfg.eta = parse_num(key, value)?,
        "eta2" => cfg.eta2 = parse_num(key, value)?,
        "tau1" => cfg.tau1 = parse_num(key, value)?,
        "tau2" => cfg.tau2 = parse_num(key, value)?,
        "margin" => cfg.margin = parse_num(key, value)?,
        "psi" => cfg.psi = parse_psi(value)?,
        "psi-scale" => cfg.psi_scale = parse_num(key, value)?,
        "pairs-per-step" => cfg.pairs_per_step = parse_num(key, value)?,
        "items-per-query" => cfg.items_per_query = parse_num(key, value)?,
        "relevant-per-query" => cfg.relevant_per_query = parse_num(key, value)?,
        "include-self" => cfg.include_self = parse_bool(key, value)?,
        "sampling" => cfg.sampling = parse_sampling(value)?,
        "update-rule" => match value {
            "momentum" => cfg.update_rule = UpdateRule::Momentum,
            "adam" => {
                let (eps, b1, b2) = adam_constants(cfg);
                cfg.update_rule = UpdateRule::Adam { eps, b1, b2 };
            }
            _ => {
                return Err(Error::Config(format!(
                    "update-rule: expected momentum or adam, got {value:?}"
                )))
            }
        },
        "adam-eps" | "adam-b1" | "adam-b2" => {
            let (mut eps, mut b1, mut b2) = adam_constants(cfg);
            let v = parse_num(key, value)?;
            match key {
                "adam-eps" => eps = v,
                "adam-b1" => b1 = v,
                _ => b2 = v,
            }
            cfg.update_rule = UpdateRule::Adam { eps, b1, b2 };
        }
        "epochs" => cfg.epochs = parse_num(key, value)?,
        "warmup-epochs" => cfg.warmup_epochs = parse_num(key, value)?,
        "eval-fraction" => cfg.eval_fraction = parse_num(key, value)?,
        "eval-ks" => cfg.eval_ks = parse_usize_list(key, value)?,
        "solver-tol" => cfg.solver_tol = parse_num(key, value)?,
        "max-iter" => cfg.max_iter = parse_num(key, value)?,
        "seed" => cfg.seed = parse_num(key, value)?,
        _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Run manifest.

/// Everything needed to reproduce a run: resolved config, dataset
/// fingerprint, seed, code version, and where the artifacts went. The run id
/// is a hash over the reproducibility core (code version, dataset
/// fingerprint, config), so the output paths cannot feed back into it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub code_version: String,
    pub seed: u64,
    pub dataset_path: String,
    pub dataset_sha256: String,
    pub run_dir: String,
    pub artifacts: Vec<String>,
    pub config: TrainConfig,
}

pub const CURVES_FILE: &str = "curves.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(data_path: &Path, raw_data: &str, out_parent: &Path, config: TrainConfig) -> Self {
        let dataset_sha256 = sha256_hex(raw_data.as_bytes());
        let core = serde_json::json!({
            "code_version": env!("CARGO_PKG_VERSION"),
            "dataset_sha256": dataset_sha256,
            "config": config,
        });
        let core_text = serde_json::to_string(&core).expect("manifest core serializes");
        let run_id = sha256_hex(core_text.as_bytes())[..16].to_string();
        let run_dir = out_parent.join(&run_id);
        RunManifest {
            run_id,
            code_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            dataset_path: data_path.display().to_string(),
            dataset_sha256,
            run_dir: run_dir.display().to_string(),
            artifacts: vec![
                MANIFEST_FILE.into(),
                CURVES_FILE.into(),
                CHECKPOINT_FILE.into(),
            ],
            config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))
    }
}

/// Renders metric records as `epoch,split,metric,value` CSV. Values print in
/// shortest round-trip form, so equal trajectories give equal bytes.
pub fn render_curves_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from("epoch,split,metric,value\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch, r.split, r.metric, r.value
        ));
    }
    out
}

/// Last recorded value of `metric`, preferring the eval split.
fn final_metric(records: &[MetricsRecord], metric: &str) -> Option<f64> {
    let pick = |split: &str| {
        records
            .iter()
            .rev()
            .find(|r| r.split == split && r.metric == metric)
            .map(|r| r.value)
    };
    pick("eval").or_else(|| pick("train"))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn load_dataset(path: &Path) -> Result<(Dataset, String)> {
    let text = fs::read_to_string(path)?;
    let dataset = parse_letor(&text)?;
    Ok((dataset, text))
}

// ---------------------------------------------------------------------------
// synth

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of queries.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    queries: u64,
    /// Items per query.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    items: u64,
    /// Feature dimension.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    features: u64,
    /// Distinct relevance grades including zero.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..))]
    levels: u64,
    /// Generator seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output LETOR file.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let dataset = synth_generate(
        args.queries as usize,
        args.items as usize,
        args.features as usize,
        args.levels as usize,
        args.seed,
    )?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    save_letor(&dataset, &args.out)?;
    println!(
        "wrote {} ({} queries x {} items, {} features, seed {})",
        args.out.display(),
        args.queries,
        args.items,
        args.features,
        args.seed
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Args)]
struct TrainArgs {
    /// LETOR dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Output directory; the run directory is created beneath it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (dataset, raw) = load_dataset(&args.data)?;
    let cfg = args.flags.resolve()?;
    let output = train(&dataset, &cfg)?;

    let manifest = RunManifest::new(&args.data, &raw, &args.out, cfg);
    let run_dir = PathBuf::from(&manifest.run_dir);
    fs::create_dir_all(&run_dir)?;
    fs::write(
        run_dir.join(CURVES_FILE),
        render_curves_csv(&output.records),
    )?;
    let checkpoint = Checkpoint::capture(&output.state, &output.bank, &output.rng);
    fs::write(run_dir.join(CHECKPOINT_FILE), checkpoint.to_json()?)?;
    fs::write(run_dir.join(MANIFEST_FILE), manifest.to_json()?)?;

    println!("run {} -> {}", manifest.run_id, run_dir.display());
    for k in &manifest.config.eval_ks {
        let name = format!("ndcg@{k}");
        if let Some(v) = final_metric(&output.records, &name) {
            println!("final {name} {v:.4}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Run only batteries whose name contains this substring.
    #[arg(long)]
    filter: Option<String>,
    /// Seed of the oracle instance generators.
    #[arg(long, default_value_t = 1234)]
    seed: u64,
    /// Write the report as JSON lines to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Harness self-check: corrupt a named formula so the run must fail.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let fault = match args.inject_fault.as_deref() {
        None => VerifyFault::None,
        Some("lower-grad-sign") => VerifyFault::LowerGradSign,
        Some(other) => {
            return Err(Error::Config(format!(
                "inject-fault: unknown fault {other:?}"
            )))
        }
    };
    let report = run_batteries(args.filter.as_deref(), args.seed, fault)?;
    print!("{}", report.render_table());
    if let Some(path) = &args.out {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, report.to_json_lines())?;
    }
    let failed = report.rows.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Error::Verification(format!(
            "{failed} of {} rows failed",
            report.rows.len()
        )));
    }
    println!("all {} rows passed", report.rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate

#[derive(Debug, Args)]
struct AblateArgs {
    /// LETOR dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for curve files and summaries.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated beta0 settings to sweep.
    #[arg(long, default_value = "0.1,0.5,1.0")]
    beta0_list: String,
    /// Seeds per setting, drawn as seed, seed+1, ...
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[command(flatten)]
    flags: TrainFlags,
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let (dataset, _) = load_dataset(&args.data)?;
    let mut base = args.flags.resolve()?;
    if !base.eval_ks.contains(&10) {
        base.eval_ks.push(10);
    }
    if base.epochs == 0 {
        return Err(Error::Config("ablate: epochs must be >= 1".into()));
    }
    let betas: Vec<f64> = args
        .beta0_list
        .split(',')
        .map(|v| parse_num::<f64>("beta0-list", v.trim()))
        .collect::<Result<Vec<_>>>()?;
    if betas.is_empty() {
        return Err(Error::Config("beta0-list: at least one value".into()));
    }
    fs::create_dir_all(&args.out)?;

    let mut summary = String::from("beta0,seed,final_ndcg_at_10\n");
    let mut medians = String::from("beta0,median_final_ndcg_at_10\n");
    for &beta in &betas {
        let mut finals = Vec::new();
        for offset in 0..args.seeds {
            let mut cfg = base.clone();
            cfg.beta0 = beta;
            cfg.seed = base.seed + offset;
            cfg.validate()?;
            let output = train(&dataset, &cfg)?;
            let value =
                final_metric(&output.records, "ndcg@10").expect("epochs >= 1 records ndcg@10");
            let name = format!("beta0-{beta}-seed-{}.csv", cfg.seed);
            fs::write(args.out.join(&name), render_curves_csv(&output.records))?;
            summary.push_str(&format!("{beta},{},{value}\n", cfg.seed));
            finals.push(value);
        }
        let med = median(&mut finals);
        medians.push_str(&format!("{beta},{med}\n"));
        println!(
            "beta0 {beta}: median final ndcg@10 {med:.4} over {} seeds",
            args.seeds
        );
    }
    fs::write(args.out.join("summary.csv"), summary)?;
    fs::write(args.out.join("medians.csv"), medians)?;
    Ok(())
}

// ---------------------------------------------------------------------------
