//! `htnet` command-line tool.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use htnet::baselines::{MlpBaseline, MlpConfig, OracleModel, SinrBaseline};
use htnet::expressiveness::wl_check;
use htnet::graph::{read_dataset, write_dataset, DeploymentSequence};
use htnet::htl::AttentionMode;
use htnet::scenario::{dataset_stats, generate_one, DatasetStats, ScenarioConfig};
use htnet::temporal::CellActivation;
use htnet::training::{
    depth_study, evaluate, resolve_threads, split, train_with, write_history_csv, EvalReport, SavedModel, TrainConfig,
};

// Kept in step with CHECKPOINT_VERSION and CONFIG_VERSION by the CLI tests.
const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncheckpoint format: 1",
    "\ntraining config format: 1",
    "\ndataset format: JSON lines, one deployment per line"
);

#[derive(Parser)]
#[command(name = "htnet", version, long_version = LONG_VERSION, about = "Per-STA WLAN throughput prediction with HTNet")]
struct Cli {
    /// Worker threads; 0 uses every core. One thread is bit-deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset.
    Generate {
        /// Deployment setup, 1 to 6.
        #[arg(long)]
        setup: u8,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also print a summary table.
        #[arg(long)]
        stats: bool,
    },
    /// Summarize a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Train a model on the training split (validation split for model selection).
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write per-STA, per-snapshot predictions as CSV.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Train and evaluate HTNet for K = 1..=k-max HTL layers.
    DepthStudy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 12)]
        k_max: usize,
        #[command(flatten)]
        overrides: Overrides,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare 1-WL with brute-force isomorphism on linked-star graphs.
    WlCheck {
        #[arg(long, default_value_t = 10)]
        max_nodes: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Htnet,
    /// HTNet without the LSTM.
    Static,
    Sinr,
    Mlp,
    /// Analytic label oracle.
    Oracle,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Htnet)]
    model: ModelKind,
    /// Per-epoch history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Training settings; flags override the config file.
#[derive(Args)]
struct Overrides {
    /// TOML training config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// HTL layers K.
    #[arg(long)]
    layers: Option<usize>,
    /// Width of every hidden representation.
    #[arg(long)]
    width: Option<usize>,
    /// Use scores without softmax normalization.
    #[arg(long)]
    raw_attention: bool,
    /// Use tanh for the LSTM candidate and cell output.
    #[arg(long)]
    tanh_cell: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.lr {
            c.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(w) = self.width {
            let m = htnet::temporal::ModelConfig::with_width(w);
            c.model.hidden = m.hidden;
            c.model.edge_hidden = m.edge_hidden;
            c.model.embed = m.embed;
            c.model.lstm_hidden = m.lstm_hidden;
        }
        if let Some(v) = self.layers {
            c.model.layers = v;
        }
        if self.raw_attention {
            c.model.attention = AttentionMode::Raw;
        }
        if self.tanh_cell {
            c.model.cell = CellActivation::Tanh;
        }
        c.validate()?;
        Ok(c)
    }
}

fn load(path: &Path) -> Result<Vec<DeploymentSequence>> {
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn select(data: &[DeploymentSequence], s: SplitArg) -> &[DeploymentSequence] {
    let [train, val, test] = split(data);
    match s {
        SplitArg::Train => train,
        SplitArg::Val => val,
        SplitArg::Test => test,
        SplitArg::All => data,
    }
}

fn generate_parallel(config: &ScenarioConfig, count: usize, threads: usize) -> Result<Vec<DeploymentSequence>> {
    config.validate()?;
    let threads = resolve_threads(threads).clamp(1, count.max(1));
    let chunk = count.div_ceil(threads).max(1) as u64;
    let ranges: Vec<(u64, u64)> = (0..count as u64).step_by(chunk as usize).map(|s| (s, (s + chunk).min(count as u64))).collect();
    let parts = std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|&(a, b)| s.spawn(move || (a..b).map(|i| generate_one(config, i)).collect::<Result<Vec<_>, _>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("generator thread panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

fn print_stats(s: &DatasetStats) {
    println!("deployments      {}", s.deployments);
    println!("sequence length  {}", s.sequence_length);
    println!("mean throughput  {:.4} Mbps", s.mean_throughput);
    println!("std throughput   {:.4} Mbps", s.std_throughput);
    println!("labelled pairs   {}", s.labelled_pairs);
    println!("train/val/test   {}/{}/{}", s.train, s.val, s.test);
}

fn print_report(r: &EvalReport) {
    println!("model            {}", r.model);
    println!("sequences        {}", r.sequences);
    println!("pairs            {}", r.count);
    println!("RMSE             {:.6} Mbps", r.rmse);
    println!("MAE              {:.6} Mbps", r.mae);
    for (setup, m) in &r.per_setup {
        println!("  setup {setup}: RMSE {:.6}  MAE {:.6}  ({} pairs)", m.rmse, m.mae, m.count);
    }
    println!("inference        {:.3} ms/sequence", r.inference_ms_per_sequence);
    println!("parameters       {}", r.num_params);
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let data = load(&args.data)?;
    let [train, val, _] = split(&data);
    if train.is_empty() {
        bail!("{} has no training deployments", args.data.display());
    }
    let config = args.overrides.resolve()?;
    let model = match args.model {
        ModelKind::Htnet | ModelKind::Static => {
            let mut config = config;
            config.model.temporal = args.model == ModelKind::Htnet;
            let out = train_with(train, val, &config, |r| {
                let val = r.val_rmse.map_or("-".into(), |v| format!("{v:.6}"));
                eprintln!("epoch {:>4}  train {:.6}  val {val}  {:.1}s", r.epoch, r.train_rmse, r.seconds);
            })?;
            if let Some(path) = &args.history {
                let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
                write_history_csv(&mut w, &out.history)?;
                w.flush()?;
            }
            if let Some(e) = out.best_epoch {
                eprintln!("kept epoch {e} (best validation RMSE)");
            }
            SavedModel::Htnet(out.model)
        }
        ModelKind::Sinr => {
            let m = SinrBaseline::fit(train)?;
            eprintln!("gamma = {}", m.gamma);
            SavedModel::Sinr(m)
        }
        ModelKind::Mlp => {
            let mlp = MlpConfig {
                epochs: config.epochs,
                learning_rate: config.learning_rate,
                batch_size: config.batch_size,
                seed: config.seed,
                hidden: args.overrides.width.unwrap_or(MlpConfig::default().hidden),
            };
            SavedModel::Mlp(MlpBaseline::fit(train, mlp)?)
        }
        ModelKind::Oracle => SavedModel::Oracle(OracleModel),
    };
    model.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    htnet::runtime::retain_heap();
    let threads = cli.threads;
    match cli.command {
        Command::Generate {
            setup,
            count,
            seed,
            out,
            stats,
        } => {
            let config = ScenarioConfig::for_setup(setup, seed)?;
            let data = generate_parallel(&config, count, threads)?;
            write_dataset(&out, &data).with_context(|| format!("writing {}", out.display()))?;
            if stats {
                print_stats(&dataset_stats(&data));
            }
        }
        Command::Stats { data, json } => {
            let s = dataset_stats(&load(&data)?);
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                print_stats(&s);
            }
        }
        Command::Train(args) => run_train(&args)?,
        Command::Eval {
            ckpt,
            data,
            split,
            json,
        } => {
            let model = SavedModel::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let data = load(&data)?;
            let (report, _) = evaluate(&model, select(&data, split), threads)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print_report(&report);
            }
        }
        Command::Predict {
            ckpt,
            data,
            out,
            split,
        } => {
            let model = SavedModel::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let data = load(&data)?;
            let (_, preds) = evaluate(&model, select(&data, split), threads)?;
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            writeln!(w, "deployment,t,sta,y,y_hat")?;
            for p in &preds {
                let y = p.y.map_or(String::new(), |y| y.to_string());
                writeln!(w, "{},{},{},{},{}", p.deployment_id, p.t, p.sta, y, p.y_hat)?;
            }
            w.flush()?;
            eprintln!("wrote {} predictions to {}", preds.len(), out.display());
        }
        Command::DepthStudy {
            data,
            k_max,
            overrides,
            out,
        } => {
            if k_max == 0 {
                bail!("--k-max must be at least 1");
            }
            let config = overrides.resolve()?;
            let data = load(&data)?;
            let [train, val, test] = split(&data);
            let depths: Vec<usize> = (1..=k_max).collect();
            let rows = depth_study(train, val, test, &config, &depths, threads, |r| {
                eprintln!("K={:<3} test RMSE {:.6}  {:.2} ms", r.layers, r.test_rmse, r.inference_ms);
            })?;
            let mut w: Box<dyn Write> = match &out {
                Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
                None => Box::new(io::stdout().lock()),
            };
            writeln!(w, "layers,test_rmse,test_mae,inference_ms,params")?;
            for r in &rows {
                writeln!(w, "{},{},{},{},{}", r.layers, r.test_rmse, r.test_mae, r.inference_ms, r.num_params)?;
            }
            w.flush()?;
        }
        Command::WlCheck { max_nodes } => {
            let r = wl_check(max_nodes);
            println!("graphs             {}", r.graphs);
            println!("pairs              {}", r.pairs);
            println!("isomorphic pairs   {}", r.isomorphic_pairs);
            println!("max diameter       {}", r.max_diameter);
            println!("elapsed            {:.3} s", r.seconds);
            for (a, b) in &r.indistinguishable {
                println!("counterexample: {:?} vs {:?} are not isomorphic but 1-WL-equal", a.sizes, b.sizes);
            }
            for (a, b) in &r.invariance_violations {
                println!("invariance violation: {:?} vs {:?}", a.sizes, b.sizes);
            }
            if !r.passed() {
                bail!("wl-check failed");
            }
            println!("PASS");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
