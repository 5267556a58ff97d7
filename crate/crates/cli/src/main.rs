//! Command-line front end: dataset statistics, degree fits, training,
//! sweeps, checkpoint evaluation and embedding export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bhgnn::degree::{fit_all, select_model, DegreeSequence, Direction, FitResult};
use bhgnn::harness::{
    aggregate, evaluate_checkpoint, export_embeddings, kmeans_raw, load_dataset, parse_seeds,
    parse_split, sweep, train_classify, train_cluster, write_aggregate_csv, write_runs_csv,
    EpochRecord, HarnessError, LoadOptions, LoadedDataset, RelationMode, RunRecord, StoredConfig,
    SweepAxis, TrainConfig,
};
use bhgnn::metrics::MetricReport;
use bhgnn::model::{load_checkpoint, model_gradcheck, save_checkpoint, Task};
use bhgnn::tensor::gradcheck::op_suite;

/// Exit status for numerical divergence.
const EXIT_DIVERGENCE: u8 = 3;
/// Exit status for invalid input, configuration or I/O.
const EXIT_INVALID: u8 = 2;

#[derive(Parser)]
#[command(
    name = "bhgnn",
    version,
    about = "Bidirectional heterogeneous GNN with random teleport"
)]
struct Cli {
    /// Run the finite-difference gradient suite and exit.
    #[arg(long, hide = true)]
    gradcheck: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the dataset summary and write degree CCDFs and distribution fits.
    Stats {
        dir: PathBuf,
        /// Output directory; defaults to runs/<dataset>/stats.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        xmin: f64,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Fit the five degree-distribution families and select one by AIC.
    FitDegree {
        dir: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        xmin: f64,
        #[arg(long, default_value = "in")]
        direction: Direction,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Train over every configured seed.
    Train {
        dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `kmeans-raw` clusters the raw features instead of training.
        #[arg(long, value_enum, default_value_t = ModelKind::Bhgnn)]
        model: ModelKind,
        /// Output directory; defaults to runs/<dataset>/<task>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train over a grid of teleport values, depths or message components.
    Sweep {
        dir: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; defaults to runs/<dataset>/sweep_<axis>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute metrics of a checkpoint on a dataset.
    Eval {
        dir: PathBuf,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        load: LoadOverride,
    },
    /// Write final-layer embeddings of a checkpoint as CSV.
    Export {
        dir: PathBuf,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Destination CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        load: LoadOverride,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Bhgnn,
    KmeansRaw,
}

#[derive(Args)]
struct LoadArgs {
    /// Relation assignment: auto, explicit, types, classes or uniform.
    #[arg(long, default_value = "auto")]
    relations: RelationMode,
    /// Treat every edge weight as 1.
    #[arg(long)]
    unweighted: bool,
}

impl LoadArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            relations: self.relations,
            unweighted: self.unweighted,
        }
    }
}

/// Loading options that default to those stored in the checkpoint.
#[derive(Args)]
struct LoadOverride {
    /// Relation assignment; defaults to the one stored in the checkpoint.
    #[arg(long)]
    relations: Option<RelationMode>,
    /// Treat every edge weight as 1, regardless of the stored setting.
    #[arg(long)]
    unweighted: bool,
}

/// Training configuration: a `key = value` file, then flag overrides.
#[derive(Args)]
struct ConfigArgs {
    /// Task: classify or cluster. Overrides any `task` key in the config file.
    #[arg(long, default_value = "classify")]
    task: String,
    /// `key = value` configuration file, applied before the other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layer count L; the model stacks L − 1 propagation layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden width.
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Output width; defaults to the class count or 512 for clustering.
    #[arg(long)]
    output_dim: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Teleport proportion in [0, 1].
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of basis matrices; defaults to min(relations, 8).
    #[arg(long)]
    bases: Option<usize>,
    /// Train, validation and test ratios, e.g. `0.7,0.2,0.1`.
    #[arg(long)]
    split: Option<String>,
    /// Seeds as a list with ranges, e.g. `0..10` or `1,3,5..7`.
    #[arg(long)]
    seeds: Option<String>,
    /// Initial weight of the incoming term.
    #[arg(long)]
    alpha_init: Option<f64>,
    /// Initial weight of the outgoing term.
    #[arg(long)]
    beta_init: Option<f64>,
    /// Drop the self term.
    #[arg(long)]
    no_nodal: bool,
    /// Drop the outgoing term.
    #[arg(long)]
    no_outgoing: bool,
    /// Keep the incoming and outgoing weights fixed.
    #[arg(long)]
    freeze_alpha_beta: bool,
    /// Relation assignment: auto, explicit, types, classes or uniform.
    #[arg(long)]
    relations: Option<RelationMode>,
    /// Treat every edge weight as 1.
    #[arg(long)]
    unweighted: bool,
    /// K-means cluster count; defaults to the class count.
    #[arg(long)]
    clusters: Option<usize>,
    /// K-means restarts; the lowest-inertia run is kept.
    #[arg(long)]
    kmeans_restarts: Option<u64>,
}

impl ConfigArgs {
    fn build(&self) -> Result<TrainConfig> {
        let task: Task = self.task.parse()?;
        let mut cfg = TrainConfig::new(task);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
            cfg.task = task;
        }
        let c = &mut cfg;
        if let Some(v) = self.layers {
            c.layers = v;
        }
        if let Some(v) = self.hidden_dim {
            c.hidden_dim = v;
        }
        c.output_dim = self.output_dim.or(c.output_dim);
        c.lr = self.lr.or(c.lr);
        c.max_epochs = self.epochs.or(c.max_epochs);
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        c.basis_count = self.bases.or(c.basis_count);
        if let Some(s) = &self.split {
            c.split = parse_split(s)?;
        }
        if let Some(s) = &self.seeds {
            c.seeds = parse_seeds(s)?;
        }
        if self.alpha_init.is_some() || self.beta_init.is_some() {
            let (a, b) = c.alpha_beta();
            c.alpha_beta_init = Some((self.alpha_init.unwrap_or(a), self.beta_init.unwrap_or(b)));
        }
        if self.no_nodal {
            c.components.nodal = false;
        }
        if self.no_outgoing {
            c.components.outgoing = false;
        }
        if self.freeze_alpha_beta {
            c.components.train_alpha_beta = false;
        }
        if let Some(r) = self.relations {
            c.relations = r;
        }
        c.unweighted |= self.unweighted;
        c.clusters = self.clusters.or(c.clusters);
        if let Some(k) = self.kmeans_restarts {
            c.kmeans_restarts = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load(dir: &Path, options: LoadOptions) -> Result<LoadedDataset> {
    let d = load_dataset(dir, options)?;
    eprintln!("{}", d.summary);
    Ok(d)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn default_out(dataset: &str, leaf: &str) -> PathBuf {
    Path::new("runs").join(dataset).join(leaf)
}

fn fit_rows(values: &[u64], x_min: f64) -> Vec<Result<FitResult, bhgnn::degree::DegreeError>> {
    let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    fit_all(&v, x_min)
}

fn cmd_stats(dir: &Path, out: Option<PathBuf>, x_min: f64, load_args: &LoadArgs) -> Result<()> {
    let d = load(dir, load_args.options())?;
    let out = out.unwrap_or_else(|| default_out(&d.summary.name, "stats"));
    create_dir(&out)?;
    let mut fits_csv = String::from("direction,family,params,log_likelihood,aic,selected,error\n");
    for direction in [Direction::In, Direction::Out] {
        let seq = DegreeSequence::from_graph(&d.graph, direction);
        let mut ccdf = String::from("k,F\n");
        for (k, f) in seq.ccdf()? {
            ccdf.push_str(&format!("{k},{f}\n"));
        }
        write_file(&out.join(format!("ccdf_{}.csv", direction.as_str())), &ccdf)?;
        let fits = fit_rows(&seq.values, x_min);
        let selected = select_model(&fits).ok();
        println!(
            "{} degree: mean {:.4}, selected {}",
            direction.as_str(),
            seq.mean(),
            selected.map_or("none", |f| f.as_str())
        );
        for (family, fit) in bhgnn::degree::Family::ALL.iter().zip(&fits) {
            match fit {
                Ok(f) => fits_csv.push_str(&format!(
                    "{},{},{},{},{},{},\n",
                    direction.as_str(),
                    family.as_str(),
                    f.params,
                    f.log_likelihood,
                    f.aic,
                    Some(*family) == selected
                )),
                Err(e) => fits_csv.push_str(&format!(
                    "{},{},,,,false,\"{}\"\n",
                    direction.as_str(),
                    family.as_str(),
                    e
                )),
            }
        }
    }
    write_file(&out.join("fits.csv"), &fits_csv)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_fit_degree(
    dir: &Path,
    x_min: f64,
    direction: Direction,
    load_args: &LoadArgs,
) -> Result<()> {
    let d = load(dir, load_args.options())?;
    let seq = DegreeSequence::from_graph(&d.graph, direction);
    let fits = fit_rows(&seq.values, x_min);
    println!("{:<24} {:>14} {:>14}  params", "family", "log_lik", "aic");
    for (family, fit) in bhgnn::degree::Family::ALL.iter().zip(&fits) {
        match fit {
            Ok(f) => println!(
                "{:<24} {:>14.4} {:>14.4}  {}",
                family.as_str(),
                f.log_likelihood,
                f.aic,
                f.params
            ),
            Err(e) => println!("{:<24} {:>14} {:>14}  {e}", family.as_str(), "-", "-"),
        }
    }
    println!("selected: {}", select_model(&fits)?);
    Ok(())
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = format!("{}\n", EpochRecord::CSV_HEADER);
    for r in history {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn summarize(records: &[RunRecord]) {
    for (k, name) in MetricReport::COLUMNS.iter().enumerate() {
        let vals: Vec<f64> = records
            .iter()
            .filter_map(|r| r.metrics.values()[k])
            .collect();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        println!("{name}: {mean:.4} ± {std:.4} over {} runs", vals.len());
    }
}

fn cmd_train(dir: &Path, cfg: TrainConfig, model: ModelKind, out: Option<PathBuf>) -> Result<()> {
    let d = load(
        dir,
        LoadOptions {
            relations: cfg.relations,
            unweighted: cfg.unweighted,
        },
    )?;
    let name = d.summary.name.clone();
    let out = out.unwrap_or_else(|| default_out(&name, cfg.task.as_str()));
    create_dir(&out)?;
    let record = |seed: u64, metrics: MetricReport| RunRecord {
        task: cfg.task,
        dataset: name.clone(),
        seed,
        gamma: cfg.gamma,
        layers: cfg.layers,
        metrics,
        error: None,
    };
    let mut records = Vec::new();
    if model == ModelKind::KmeansRaw {
        if cfg.task != Task::Cluster {
            bail!(HarnessError::Config(
                "--model kmeans-raw needs --task cluster".into()
            ));
        }
        let (_, metrics) = kmeans_raw(&d.graph, &cfg)?;
        records.push(record(0, metrics));
    } else {
        for &seed in &cfg.seeds {
            let stored = StoredConfig {
                train: cfg.clone(),
                seed,
                dataset: name.clone(),
            };
            let (params, history, metrics) = match cfg.task {
                Task::Classify => {
                    let o = train_classify(&d.graph, &cfg, seed)?;
                    log::info!("seed {seed}: best validation epoch {}", o.best_epoch);
                    (o.params, o.history, o.test)
                }
                Task::Cluster => {
                    let o = train_cluster(&d.graph, &cfg, seed)?;
                    log::info!("seed {seed}: mi {:.4} -> {:.4}", o.initial_mi, o.final_mi);
                    (o.params, o.history, o.metrics)
                }
            };
            save_checkpoint(
                &out.join(format!("checkpoint_seed{seed}.bhgnn")),
                &params,
                &stored.to_value(),
            )?;
            write_file(
                &out.join(format!("history_seed{seed}.csv")),
                &history_csv(&history),
            )?;
            println!("seed {seed}: {}", serde_json::to_string(&metrics)?);
            records.push(record(seed, metrics));
        }
    }
    let mut csv = format!("{}\n", RunRecord::csv_header());
    for r in &records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write_file(&out.join("runs.csv"), &csv)?;
    write_file(
        &out.join("metrics.json"),
        &serde_json::to_string_pretty(&records)?,
    )?;
    summarize(&records);
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_sweep(
    dir: &Path,
    axis: SweepAxis,
    cfg: TrainConfig,
    out: Option<PathBuf>,
    workers: Option<usize>,
) -> Result<()> {
    let d = load(
        dir,
        LoadOptions {
            relations: cfg.relations,
            unweighted: cfg.unweighted,
        },
    )?;
    let name = d.summary.name.clone();
    let axis_name = format!("{axis:?}").to_lowercase();
    let out = out.unwrap_or_else(|| default_out(&name, &format!("sweep_{axis_name}")));
    create_dir(&out)?;
    let workers =
        workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rows = sweep(&d.graph, &cfg, axis, &name, workers);
    let agg = aggregate(&rows);
    write_runs_csv(&out.join("runs.csv"), &rows)?;
    write_aggregate_csv(&out.join("aggregate.csv"), &agg)?;
    let key = match cfg.task {
        Task::Classify => 0,
        Task::Cluster => 3,
    };
    for a in &agg {
        let stat =
            a.stats[key].map_or_else(|| "n/a".to_string(), |(m, s)| format!("{m:.4} ± {s:.4}"));
        println!(
            "{axis_name} = {:<18} {} {stat} ({} runs, {} failed)",
            a.point,
            MetricReport::COLUMNS[key],
            a.runs,
            a.failed
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn load_for_checkpoint(
    dir: &Path,
    stored: &StoredConfig,
    over: &LoadOverride,
) -> Result<LoadedDataset> {
    let options = LoadOptions {
        relations: over.relations.unwrap_or(stored.train.relations),
        unweighted: over.unweighted || stored.train.unweighted,
    };
    load(dir, options)
}

fn cmd_eval(dir: &Path, checkpoint: &Path, over: &LoadOverride) -> Result<()> {
    let ck =
        load_checkpoint(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let stored = StoredConfig::from_checkpoint(&ck)?;
    let d = load_for_checkpoint(dir, &stored, over)?;
    let (_, metrics) = evaluate_checkpoint(&d.graph, &ck)?;
    let record = RunRecord {
        task: ck.params.spec.task,
        dataset: d.summary.name.clone(),
        seed: stored.seed,
        gamma: ck.params.gamma(),
        layers: ck.params.spec.dims.len(),
        metrics,
        error: None,
    };
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn cmd_export(dir: &Path, checkpoint: &Path, out: &Path, over: &LoadOverride) -> Result<()> {
    let ck =
        load_checkpoint(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let stored = StoredConfig::from_checkpoint(&ck)?;
    let d = load_for_checkpoint(dir, &stored, over)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let z = export_embeddings(&ck.params, &d.graph, out)?;
    println!(
        "wrote {} rows of width {} to {}",
        z.rows(),
        z.cols(),
        out.display()
    );
    Ok(())
}

/// Runs the per-op suite over 20 seeds and the end-to-end model check.
fn cmd_gradcheck() -> Result<bool> {
    const OP_TOL: f64 = 1e-5;
    const MODEL_TOL: f64 = 1e-4;
    let mut worst: Vec<(String, f64, f64)> = Vec::new();
    let mut record = |name: &str, err: f64, tol: f64| match worst.iter_mut().find(|w| w.0 == name) {
        Some(w) => w.1 = w.1.max(err),
        None => worst.push((name.to_string(), err, tol)),
    };
    for seed in 0..20 {
        for c in op_suite(seed, OP_TOL)? {
            record(&c.name, c.max_rel_error, c.tolerance);
        }
        for c in model_gradcheck(seed, MODEL_TOL)? {
            record(&c.name, c.max_rel_error, c.tolerance);
        }
    }
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{:<24} {:>12} {:>10}  result",
        "check", "max_rel_err", "tolerance"
    )?;
    let mut ok = true;
    for (name, err, tol) in &worst {
        let pass = err <= tol;
        ok &= pass;
        writeln!(
            out,
            "{name:<24} {err:>12.3e} {tol:>10.0e}  {}",
            if pass { "PASS" } else { "FAIL" }
        )?;
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.gradcheck {
        return Ok(if cmd_gradcheck()? {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(EXIT_DIVERGENCE)
        });
    }
    let Some(command) = cli.command else {
        bail!(HarnessError::Config(
            "no subcommand given; see --help".into()
        ));
    };
    match command {
        Command::Stats {
            dir,
            out,
            xmin,
            load,
        } => cmd_stats(&dir, out, xmin, &load)?,
        Command::FitDegree {
            dir,
            xmin,
            direction,
            load,
        } => cmd_fit_degree(&dir, xmin, direction, &load)?,
        Command::Train {
            dir,
            cfg,
            model,
            out,
        } => cmd_train(&dir, cfg.build()?, model, out)?,
        Command::Sweep {
            dir,
            axis,
            cfg,
            out,
            workers,
        } => cmd_sweep(&dir, axis, cfg.build()?, out, workers)?,
        Command::Eval {
            dir,
            checkpoint,
            load,
        } => cmd_eval(&dir, &checkpoint, &load)?,
        Command::Export {
            dir,
            checkpoint,
            out,
            load,
        } => cmd_export(&dir, &checkpoint, &out, &load)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let divergence = err.chain().any(|cause| {
        cause
            .downcast_ref::<HarnessError>()
            .is_some_and(HarnessError::is_divergence)
            || cause
                .downcast_ref::<bhgnn::model::ModelError>()
                .is_some_and(|e| e.is_divergence())
    });
    if divergence {
        EXIT_DIVERGENCE
    } else {
        EXIT_INVALID
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
