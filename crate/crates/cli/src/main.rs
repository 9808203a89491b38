use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdgnn::config::RunConfig;
use hdgnn::dataset::{build_dataset, Cascade, Dataset, Split, TargetKind};
use hdgnn::encoder::write_embeddings;
use hdgnn::graph::{load_graph, write_graph};
use hdgnn::pipeline::{self, Baseline, Variant};
use hdgnn::sampler::{sample_all, NeighborSets};
use hdgnn::synth::generate_synthetic;
use hdgnn::{Error, HeteroGraph, Result};
use hdgnn_autodiff::checkpoint::{checkpoint_bytes, load_into, read_checkpoint};
use hdgnn_autodiff::ParameterStore;
use serde::Serialize;

/// Citation-impact prediction on heterogeneous academic graphs.
///
/// Exit status: 1 configuration error, 2 data error, 3 numeric failure.
/// `HDGNN_THREADS` caps the worker threads used for sampling.
#[derive(Parser, Debug)]
#[command(name = "hdgnn", version)]
struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that outputs are written to.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Directory that inputs are read from (defaults to --out).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic graph as nodes.jsonl and edges.jsonl.
    Synth,
    /// Validate a graph and write graph_summary.json.
    Ingest,
    /// Run the random walks and write neighbor_sets.bin (plus a JSONL dump).
    Sample,
    /// Skip-gram pretraining of the encoder; writes embeddings.bin and
    /// pretrained.ckpt, which later training runs start from.
    Pretrain,
    /// Train a model; writes checkpoint-<task>-<variant>.bin and
    /// history-<task>-<variant>.json.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        /// Try every learning rate of the configured grid and keep the best.
        #[arg(long)]
        lr_search: bool,
    },
    /// Score a trained model or a baseline; writes report.json.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        /// Evaluate a baseline instead of a trained model:
        /// uniform, feature_ctr or feature.
        #[arg(long, value_parser = parse_baseline)]
        baseline: Option<Baseline>,
        #[command(flatten)]
        split: SplitArg,
    },
    /// Write predictions.csv for a trained model.
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        split: SplitArg,
    },
    /// Citation CCDFs, year correlations and author productivity; writes
    /// stats.json.
    Stats {
        /// Years covered by the correlation and productivity tables.
        #[arg(long, default_value_t = 10)]
        years: usize,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// paper or author.
    #[arg(long, default_value = "paper", value_parser = parse_task)]
    task: TargetKind,
    /// full, maxp, sump, noauthor or novenue.
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    variant: Variant,
}

#[derive(Args, Debug)]
struct SplitArg {
    /// train, val or test.
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
}

fn parse_task(s: &str) -> std::result::Result<TargetKind, String> {
    TargetKind::parse(s).ok_or_else(|| format!("unknown task `{s}` (paper, author)"))
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant `{s}` (full, maxp, sump, noauthor, novenue)"))
}

fn parse_baseline(s: &str) -> std::result::Result<Baseline, String> {
    Baseline::parse(s).ok_or_else(|| format!("unknown baseline `{s}` (uniform, feature_ctr, feature)"))
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .find(|x| x.name() == s)
        .ok_or_else(|| format!("unknown split `{s}` (train, val, test)"))
}

struct Ctx {
    cfg: RunConfig,
    input: PathBuf,
    out: PathBuf,
}

impl Ctx {
    fn input(&self, p: &Path) -> PathBuf {
        RunConfig::resolve(&self.input, p)
    }

    fn output(&self, p: &Path) -> PathBuf {
        RunConfig::resolve(&self.out, p)
    }

    fn graph(&self) -> Result<HeteroGraph> {
        load_graph(&self.input(&self.cfg.paths.nodes), &self.input(&self.cfg.paths.edges))
    }

    fn sets(&self) -> Result<NeighborSets> {
        NeighborSets::load(&self.input(&self.cfg.paths.neighbor_sets), self.cfg.walk.samples_per_type)
    }

    fn dataset(&self, g: &HeteroGraph, task: TargetKind) -> Result<Dataset> {
        build_dataset(g, task, &self.cfg.observation)
    }
}

fn checkpoint_name(m: &ModelArgs) -> PathBuf {
    format!("checkpoint-{}-{}.bin", m.task.name(), m.variant.name()).into()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn read_store(path: &Path) -> Result<ParameterStore> {
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut store = ParameterStore::new();
    for (name, value) in read_checkpoint(BufReader::new(f))? {
        store.add(name, value, true)?;
    }
    Ok(store)
}

/// Rebuilds the model of `m`, loads its checkpoint and predicts counts.
fn predict(ctx: &Ctx, g: &HeteroGraph, m: &ModelArgs, eval: &[&Cascade]) -> Result<Vec<f64>> {
    let sets = ctx.sets()?;
    let (model, mut store) = pipeline::init_model(g, &m.variant.apply(&ctx.cfg.model), ctx.cfg.seed)?;
    let path = ctx.input(&checkpoint_name(m));
    let f = File::open(&path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    load_into(&mut store, BufReader::new(f))?;
    pipeline::predict_counts(&model, &store, g, &sets, eval, ctx.cfg.train.eval_chunk)
}

/// Stdout line; a closed pipe is not an error worth dying over.
fn say(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    task: &'static str,
    variant: &'static str,
    history: &'a hdgnn::cascade::History,
    lr_trials: Vec<pipeline::LrTrial>,
    warm_started: bool,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let ctx = Ctx {
        input: cli.input.clone().unwrap_or_else(|| cli.out.clone()),
        out: cli.out.clone(),
        cfg,
    };
    std::fs::create_dir_all(&ctx.out).map_err(|e| Error::io(format!("creating {}", ctx.out.display()), e))?;
    match cli.command {
        Command::Synth => {
            let g = generate_synthetic(&ctx.cfg.synth)?;
            write_graph(&g, &ctx.output(&ctx.cfg.paths.nodes), &ctx.output(&ctx.cfg.paths.edges))?;
            eprintln!("wrote {} nodes and {} edges", g.node_count(), g.edge_count());
        }
        Command::Ingest => {
            let g = ctx.graph()?;
            let summary = pipeline::summarize(&g);
            write_json(&ctx.output(Path::new("graph_summary.json")), &summary)?;
            say(&serde_json::to_string_pretty(&summary)?);
        }
        Command::Sample => {
            let g = ctx.graph()?;
            let sets = sample_all(&g, &ctx.cfg.walk)?;
            let bin = ctx.output(&ctx.cfg.paths.neighbor_sets);
            sets.save(&g, &bin, Some(&bin.with_extension("jsonl")))?;
            eprintln!("sampled neighbours of {} nodes", sets.len());
        }
        Command::Pretrain => {
            let g = ctx.graph()?;
            let sets = ctx.sets()?;
            let (store, embeddings, report) = pipeline::pretrain_encoder(&g, &sets, &ctx.cfg)?;
            let mut w = create(&ctx.output(&ctx.cfg.paths.embeddings))?;
            write_embeddings(&mut w, &embeddings)?;
            write_bytes(&ctx.output(&ctx.cfg.paths.pretrained), &checkpoint_bytes(&store))?;
            write_json(&ctx.output(Path::new("pretrain.json")), &report)?;
            if let (Some(first), Some(last)) = (report.losses.first(), report.losses.last()) {
                eprintln!("skip-gram loss {first:.4} -> {last:.4}");
            }
        }
        Command::Train { model, lr_search } => {
            let g = ctx.graph()?;
            let sets = ctx.sets()?;
            let data = ctx.dataset(&g, model.task)?;
            let pre_path = ctx.input(&ctx.cfg.paths.pretrained);
            let pretrained = if pre_path.exists() { Some(read_store(&pre_path)?) } else { None };
            let model_cfg = model.variant.apply(&ctx.cfg.model);
            let (trained, lr_trials) = if lr_search {
                pipeline::lr_search(&g, &sets, &data, &model_cfg, &ctx.cfg.train, ctx.cfg.seed, pretrained.as_ref())?
            } else {
                let t = pipeline::fit(&g, &sets, &data, &model_cfg, &ctx.cfg.train, ctx.cfg.seed, pretrained.as_ref())?;
                (t, Vec::new())
            };
            write_bytes(&ctx.output(&checkpoint_name(&model)), &checkpoint_bytes(&trained.store))?;
            let out = TrainOutput {
                task: model.task.name(),
                variant: model.variant.name(),
                history: &trained.history,
                lr_trials,
                warm_started: pretrained.is_some(),
            };
            let name = format!("history-{}-{}.json", model.task.name(), model.variant.name());
            write_json(&ctx.output(Path::new(&name)), &out)?;
            eprintln!(
                "best validation loss {:.4} at epoch {} (lr {})",
                trained.history.best_val_loss, trained.history.best_epoch, trained.history.learning_rate
            );
        }
        Command::Eval { model, baseline, split } => {
            let g = ctx.graph()?;
            let data = ctx.dataset(&g, model.task)?;
            let eval: Vec<&Cascade> = data.split(split.split);
            let preds = match baseline {
                Some(b) => pipeline::baseline_predictions(&g, &data, b, ctx.cfg.observation.t_r, &eval)?,
                None => predict(&ctx, &g, &model, &eval)?,
            };
            let report = pipeline::report(&g, &eval, &preds)?;
            let json = report.to_json();
            write_bytes(&ctx.output(Path::new("report.json")), format!("{json}\n").as_bytes())?;
            say(&format!("msle {:.4} acc {:.4} n {}", report.msle, report.acc, report.n));
        }
        Command::Predict { model, split } => {
            let g = ctx.graph()?;
            let data = ctx.dataset(&g, model.task)?;
            let eval: Vec<&Cascade> = data.split(split.split);
            let preds = predict(&ctx, &g, &model, &eval)?;
            let w = create(&ctx.output(Path::new("predictions.csv")))?;
            hdgnn::cascade::write_predictions(w, &g, &eval, &preds)?;
        }
        Command::Stats { years } => {
            let g = ctx.graph()?;
            write_json(&ctx.output(Path::new("stats.json")), &pipeline::graph_stats(&g, years)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
