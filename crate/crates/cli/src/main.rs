use clap::{Args, Parser, Subcommand, ValueEnum};
use derfkit::checkpoint;
use derfkit::data::{make_synthetic_dataset, DatasetKind, DatasetSpec, Split};
use derfkit::funcs::{catalog, lookup, ShiftKind};
use derfkit::harness::{
    catalog_hash, eval_mode_train_loss_from_checkpoint, run_experiment, train, DatasetSource, ExperimentKind,
    ExperimentReport, ExperimentSpec, Grid, ReportMetadata, TrainSpec, TrialResult,
};
use derfkit::layers::{NormSlot, ShiftMode};
use derfkit::model::ToyTransformer;
use derfkit::props::{classify, fit_eps};
use derfkit::Error;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_LOOKUP: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_OTHER: u8 = 1;

#[derive(Parser)]
#[command(name = "derfkit", version, about = "Point-wise normalization functions, their properties and toy-scale experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Query the function catalog.
    #[command(subcommand)]
    Funcs(FuncsCmd),
    /// Fit the tanh coefficient that best matches erf in L1.
    FitEps {
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Write synthetic train/val datasets (`train.dfk`, `val.dfk`).
    GenData(GenDataArgs),
    /// Train a single model.
    Train(RunArgs),
    /// Train every function in a list (or `all` search candidates).
    Search {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated catalog names, or `all`.
        #[arg(long, value_delimiter = ',')]
        functions: Vec<String>,
    },
    /// Sweep a property transformation or compare variants.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long, value_enum)]
        shift_type: Option<ShiftType>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        functions: Vec<String>,
        /// For `s_ablation`: absent, scalar, per_channel.
        #[arg(long, value_delimiter = ',')]
        s_modes: Vec<String>,
        /// Leave out the untransformed base function.
        #[arg(long)]
        no_baseline: bool,
    },
    /// Compare evaluation-mode training loss across normalization slots.
    Fitloss {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated: layer_norm, rms_norm, dyt, derf or a catalog name.
        #[arg(long, value_delimiter = ',')]
        slots: Vec<String>,
        /// Where trained checkpoints go (default: <out-dir>/checkpoints).
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FuncsCmd {
    /// Name, formula and construction group of every entry.
    List,
    /// Print f(x) and f'(x).
    #[command(allow_negative_numbers = true)]
    Eval { name: String, x: f64 },
    /// Measured property report as JSON.
    Props { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Shift,
    Bound,
    Mix,
    Flat,
    Monotonic,
    Growth,
    SAblation,
    EpsTanh,
}

impl SweepKind {
    fn experiment(self) -> ExperimentKind {
        match self {
            SweepKind::Shift => ExperimentKind::ShiftSweep,
            SweepKind::Bound => ExperimentKind::BoundSweep,
            SweepKind::Mix => ExperimentKind::MixSweep,
            SweepKind::Flat => ExperimentKind::FlatSweep,
            SweepKind::Monotonic => ExperimentKind::MonotonicCompare,
            SweepKind::Growth => ExperimentKind::GrowthProbe,
            SweepKind::SAblation => ExperimentKind::SAblation,
            SweepKind::EpsTanh => ExperimentKind::EpsTanhCompare,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ShiftType {
    Horizontal,
    Vertical,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    ClusterTokens,
    ParitySeq,
}

#[derive(Args)]
struct GenDataArgs {
    /// JSON config; its `base.dataset` generation spec is the starting point.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "derfkit-data")]
    out_dir: PathBuf,
    #[arg(long, value_enum)]
    kind: Option<DataKind>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config with optional `base`, `grid` and `repeats` keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "derfkit-out")]
    out_dir: PathBuf,
    /// Directory holding `train.dfk` and `val.dfk`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Generate missing dataset files in `--data-dir` from the config.
    #[arg(long)]
    gen: bool,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    eval_batches: Option<usize>,
    /// Normalization slot for `train`.
    #[arg(long)]
    slot: Option<String>,
    /// Per-trial progress on stderr.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Suppress the ranking table.
    #[arg(short, long)]
    quiet: bool,
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CliConfig {
    base: TrainSpec,
    grid: Grid,
    repeats: Option<usize>,
}

fn read_config(path: Option<&Path>) -> derfkit::Result<CliConfig> {
    let Some(path) = path else {
        return Ok(CliConfig::default());
    };
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))
}

fn parse_slot(s: &str) -> derfkit::Result<NormSlot> {
    if let Ok(slot) = serde_json::from_value::<NormSlot>(serde_json::Value::String(s.to_string())) {
        return Ok(slot);
    }
    lookup(s)?;
    Ok(NormSlot::dynamic(s, ShiftMode::Scalar))
}

fn parse_s_mode(s: &str) -> derfkit::Result<ShiftMode> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Config(vec![format!("unknown s mode `{s}` (absent, scalar, per_channel)")]))
}

fn threads_from_env() -> derfkit::Result<Option<usize>> {
    match std::env::var("DERFKIT_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(vec![format!("DERFKIT_THREADS must be a positive integer, got `{v}`")])),
        },
    }
}

impl RunArgs {
    /// Config file plus flag overrides, with the dataset source resolved.
    fn effective(&self) -> derfkit::Result<CliConfig> {
        let mut cfg = read_config(self.config.as_deref())?;
        let b = &mut cfg.base;
        if let Some(v) = self.steps {
            b.steps = v;
        }
        if let Some(v) = self.batch_size {
            b.batch_size = v;
        }
        if let Some(v) = self.lr {
            b.optimizer.lr = v;
        }
        if let Some(v) = self.warmup_steps {
            b.warmup_steps = v;
        }
        if let Some(v) = self.seed {
            b.master_seed = v;
        }
        if let Some(v) = self.depth {
            b.model.depth = v;
        }
        if let Some(v) = self.d_model {
            b.model.d_model = v;
        }
        if let Some(v) = self.eval_batches {
            b.eval_batches = Some(v);
        }
        if let Some(s) = &self.slot {
            b.model.norm_slot = parse_slot(s)?;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = Some(v);
        }
        if let Some(dir) = &self.data_dir {
            cfg.base.dataset = self.resolve_files(dir, &cfg.base)?;
        }
        Ok(cfg)
    }

    fn resolve_files(&self, dir: &Path, base: &TrainSpec) -> derfkit::Result<DatasetSource> {
        let (train, val) = (dir.join("train.dfk"), dir.join("val.dfk"));
        if !(train.exists() && val.exists()) {
            if !self.gen {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("dataset files missing in {} (pass --gen to create them)", dir.display()),
                )));
            }
            let spec = generation_spec(base);
            write_datasets(&spec, dir)?;
        }
        Ok(DatasetSource::Files { train, val })
    }
}

/// The config's generation spec, or a default one shaped to the model.
fn generation_spec(base: &TrainSpec) -> DatasetSpec {
    match &base.dataset {
        DatasetSource::Generate(d) => d.clone(),
        DatasetSource::Files { .. } => DatasetSpec {
            seq_len: base.model.seq_len,
            input_dim: base.model.input_dim,
            n_classes: base.model.n_classes,
            ..Default::default()
        },
    }
}

fn write_datasets(spec: &DatasetSpec, dir: &Path) -> derfkit::Result<(PathBuf, PathBuf)> {
    spec.validate()?;
    std::fs::create_dir_all(dir)?;
    let (train, val) = (dir.join("train.dfk"), dir.join("val.dfk"));
    make_synthetic_dataset(spec, Split::Train)?.save(&train)?;
    make_synthetic_dataset(spec, Split::Val)?.save(&val)?;
    Ok((train, val))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> derfkit::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Writes to stdout; a reader that went away (`| head`) is not an error.
fn emit(text: &str) -> derfkit::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn cmd_funcs(cmd: FuncsCmd) -> derfkit::Result<()> {
    let mut s = String::new();
    match cmd {
        FuncsCmd::List => {
            for f in catalog() {
                let _ = writeln!(s, "{:<16} {:<20} {}", f.name(), f.group().to_string(), f.formula());
            }
        }
        FuncsCmd::Eval { name, x } => {
            let f = lookup(&name)?;
            let _ = writeln!(s, "{}({x}) = {}", f.name(), f.eval(x));
            let _ = writeln!(s, "{}'({x}) = {}", f.name(), f.deriv(x));
        }
        FuncsCmd::Props { name } => {
            let r = classify(&lookup(&name)?)?;
            s = serde_json::to_string_pretty(&r)? + "\n";
        }
    }
    emit(&s)
}

fn cmd_gen_data(a: GenDataArgs) -> derfkit::Result<()> {
    let cfg = read_config(a.config.as_deref())?;
    let mut spec = generation_spec(&cfg.base);
    if let Some(k) = a.kind {
        spec.kind = match k {
            DataKind::ClusterTokens => DatasetKind::ClusterTokens,
            DataKind::ParitySeq => DatasetKind::ParitySeq,
        };
    }
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { spec.$f = v; })* };
    }
    set!(n_train, n_val, n_classes, seq_len, input_dim, margin, seed);
    let (train, val) = write_datasets(&spec, &a.out_dir)?;
    emit(&format!("wrote {} and {}\n", train.display(), val.display()))
}

#[derive(Serialize)]
struct TrainReport<'a> {
    version: &'a str,
    catalog_hash: String,
    config: &'a TrainSpec,
    result: &'a TrialResult,
}

fn cmd_train(run: RunArgs) -> derfkit::Result<()> {
    // `grid` and `repeats` only matter to experiment commands.
    let spec = run.effective()?.base;
    spec.validate()?;
    std::fs::create_dir_all(&run.out_dir)?;
    let start = Instant::now();
    let out = train(&spec)?;
    let report = TrainReport {
        version: derfkit::VERSION,
        catalog_hash: catalog_hash(),
        config: &spec,
        result: &out.result,
    };
    write_json(&run.out_dir.join("report.json"), &report)?;
    write_json(
        &run.out_dir.join("metadata.json"),
        &ReportMetadata::new(std::slice::from_ref(&out.result), start.elapsed().as_secs_f64()),
    )?;
    checkpoint::save(&out.model, &run.out_dir.join("model.dfkc"))?;
    let r = &out.result;
    if !run.quiet {
        let fmt = |v: Option<f64>| v.map_or("x".to_string(), |v| format!("{v:.4}"));
        emit(&format!(
            "{}: steps {} diverged {} val_acc {} eval_loss {}\n",
            r.label,
            r.steps_completed,
            r.diverged,
            fmt(r.val_accuracy),
            fmt(r.eval_mode_train_loss)
        ))?;
    }
    Ok(())
}

/// Runs an experiment and writes `report.json`, `report.csv`,
/// `metadata.json` and one checkpoint per trial under `ckpt_dir`.
fn run_and_report(
    run: &RunArgs,
    kind: ExperimentKind,
    cfg: CliConfig,
    ckpt_dir: &Path,
) -> derfkit::Result<(ExperimentReport, Vec<PathBuf>)> {
    let spec = ExperimentSpec {
        kind,
        base: cfg.base,
        grid: cfg.grid,
        repeats: cfg.repeats.unwrap_or(3),
    };
    let grid = spec.validate()?;
    let threads = threads_from_env()?;
    std::fs::create_dir_all(&run.out_dir)?;
    std::fs::create_dir_all(ckpt_dir)?;
    let ckpt_path = |id: usize| ckpt_dir.join(format!("trial_{id:04}.dfkc"));
    let verbose = run.verbose > 0;
    let hook = |r: &TrialResult, m: &ToyTransformer| -> derfkit::Result<()> {
        checkpoint::save(m, &ckpt_path(r.trial_id))?;
        if verbose {
            eprintln!(
                "trial {} {} repeat {}: diverged {} val_acc {:?}",
                r.trial_id, r.label, r.repeat, r.diverged, r.val_accuracy
            );
        }
        Ok(())
    };
    let start = Instant::now();
    let trials = run_experiment(&spec, threads, Some(&hook))?;
    let elapsed = start.elapsed().as_secs_f64();
    let paths = trials.iter().map(|t| ckpt_path(t.trial_id)).collect();
    let config = serde_json::to_value(&spec)?;
    let report = ExperimentReport::new(&spec, config, grid, trials);
    std::fs::write(run.out_dir.join("report.json"), report.to_json()? + "\n")?;
    std::fs::write(run.out_dir.join("report.csv"), report.to_csv())?;
    write_json(&run.out_dir.join("metadata.json"), &ReportMetadata::new(&report.trials, elapsed))?;
    if !run.quiet {
        emit(&report.ranking_table())?;
    }
    Ok((report, paths))
}

#[derive(Serialize)]
struct FitlossRow {
    slot: String,
    checkpoints: Vec<PathBuf>,
    /// Recomputed from each stored checkpoint; `None` for diverged trials.
    eval_mode_train_loss: Vec<Option<f64>>,
    mean_eval_mode_train_loss: Option<f64>,
}

fn cmd_fitloss(run: RunArgs, slots: Vec<String>, checkpoint_dir: Option<PathBuf>) -> derfkit::Result<()> {
    let mut cfg = run.effective()?;
    if !slots.is_empty() {
        cfg.grid.slots = slots.iter().map(|s| parse_slot(s)).collect::<derfkit::Result<_>>()?;
    }
    let ckpt_dir = checkpoint_dir.unwrap_or_else(|| run.out_dir.join("checkpoints"));
    let base = cfg.base.clone();
    let (report, paths) = run_and_report(&run, ExperimentKind::Fitloss, cfg, &ckpt_dir)?;
    let (train_set, _) = base.dataset.load()?;
    let mut rows = Vec::new();
    for (pi, point) in report.grid.iter().enumerate() {
        let mut row = FitlossRow {
            slot: point.label.clone(),
            checkpoints: Vec::new(),
            eval_mode_train_loss: Vec::new(),
            mean_eval_mode_train_loss: None,
        };
        for (t, p) in report.trials.iter().zip(&paths) {
            if t.trial_id / report.repeats != pi {
                continue;
            }
            let loss = if t.diverged {
                None
            } else {
                Some(eval_mode_train_loss_from_checkpoint(p, &train_set, base.batch_size, base.eval_batches)?)
            };
            row.checkpoints.push(p.clone());
            row.eval_mode_train_loss.push(loss);
        }
        let ok: Vec<f64> = row.eval_mode_train_loss.iter().flatten().copied().collect();
        row.mean_eval_mode_train_loss = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
        rows.push(row);
    }
    write_json(&run.out_dir.join("fitloss.json"), &rows)
}

fn dispatch(cmd: Command) -> derfkit::Result<()> {
    match cmd {
        Command::Funcs(c) => cmd_funcs(c),
        Command::FitEps { radius, tol } => {
            let r = fit_eps(radius, tol)?;
            emit(&(serde_json::to_string_pretty(&r)? + "\n"))
        }
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(run) => cmd_train(run),
        Command::Search { run, functions } => {
            let mut cfg = run.effective()?;
            if !functions.is_empty() {
                cfg.grid.functions = functions;
            }
            let dir = run.out_dir.join("checkpoints");
            run_and_report(&run, ExperimentKind::Search, cfg, &dir).map(|_| ())
        }
        Command::Sweep {
            run,
            kind,
            shift_type,
            lambdas,
            functions,
            s_modes,
            no_baseline,
        } => {
            let mut cfg = run.effective()?;
            if !functions.is_empty() {
                cfg.grid.functions = functions;
            }
            if !lambdas.is_empty() {
                cfg.grid.lambdas = lambdas;
            }
            if let Some(t) = shift_type {
                cfg.grid.shift_kind = Some(match t {
                    ShiftType::Horizontal => ShiftKind::Horizontal,
                    ShiftType::Vertical => ShiftKind::Vertical,
                });
            }
            if !s_modes.is_empty() {
                cfg.grid.s_modes = s_modes.iter().map(|s| parse_s_mode(s)).collect::<derfkit::Result<_>>()?;
            }
            if no_baseline {
                cfg.grid.baseline = Some(false);
            }
            let dir = run.out_dir.join("checkpoints");
            run_and_report(&run, kind.experiment(), cfg, &dir).map(|_| ())
        }
        Command::Fitloss {
            run,
            slots,
            checkpoint_dir,
        } => cmd_fitloss(run, slots, checkpoint_dir),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownFunction { .. } => EXIT_LOOKUP,
        Error::Config(_) | Error::Parameter(_) | Error::Contract(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
