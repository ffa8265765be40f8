//! `deepgd` command-line front end.

mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use deepgd::baselines::{default_pivots, pivot_mds, stress_majorization, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use deepgd::direct::{optimize_layout, DescentConfig};
use deepgd::eval::{evaluate_layout, pareto_csv, pareto_sweep, spc, DatasetMetrics, Engine};
use deepgd::graph::shortest_paths;
use deepgd::model::{infer, initial_layout, split_dataset, train, DeepGDParams, InitKind};
use deepgd::render::{pareto_svg, render_svg, SvgStyle};
use deepgd::{Criterion, Layout};
use serde::Serialize;

use config::{out_dir_override, EngineKind, RunConfig};
use io::{file_stem, read_graph, resolve, write_file};

/// Configuration problems; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<deepgd::Error> for ConfigError {
    fn from(e: deepgd::Error) -> Self {
        ConfigError(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "deepgd", version, about = "Graph layout with differentiable aesthetics")]
struct Cli {
    /// Worker threads for per-graph work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pivotmds,
    Majorization,
    Direct,
    Model,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Pivotmds,
}

impl From<InitArg> for InitKind {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::Random => InitKind::Random,
            InitArg::Pivotmds => InitKind::Pivotmds,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Lay out one graph and write `label<TAB>x<TAB>y` rows.
    Layout {
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "majorization")]
        method: Method,
        /// Starting layout for majorization, direct and model.
        #[arg(long, value_enum, default_value = "pivotmds")]
        init: InitArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// PivotMDS pivot count (default: min(n, 50)).
        #[arg(long)]
        pivots: Option<usize>,
        /// Trained model for `--method model`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// JSON descent settings for `--method direct`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Layout TSV path (default: stdout).
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Per-step CSV for `--method direct`.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Base directory for relative output paths.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train a model; writes checkpoint.json, history.csv and summary.json.
    Train { config: PathBuf },
    /// Compare two layout sets; writes metrics.json and prints SPC per criterion.
    Eval {
        /// Graph file or directory of graph files.
        dataset: PathBuf,
        /// Baseline layouts (`<graph stem>.tsv` per graph, or one TSV file).
        layouts_a: PathBuf,
        /// Candidate layouts; positive SPC means these are better.
        layouts_b: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Sweep weight settings and strategies; writes pareto.csv and pareto.svg.
    Pareto { config: PathBuf },
    /// Convert between edge-list and GraphML by file extension.
    Convert { input: PathBuf, output: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<ConfigError>().is_some()
                || matches!(
                    e.downcast_ref::<deepgd::Error>(),
                    Some(deepgd::Error::InvalidConfig(_) | deepgd::Error::InvalidCriteria(_))
                );
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Layout { graph, method, init, seed, pivots, checkpoint, config, output, svg, trajectory, out_dir } => {
            let out_dir = out_dir_override().or(out_dir);
            let args = LayoutArgs { method, init: init.into(), seed, pivots, checkpoint, config, trajectory };
            cmd_layout(&graph, &args, out_dir.as_deref(), output, svg)
        }
        Command::Train { config } => cmd_train(&config),
        Command::Eval { dataset, layouts_a, layouts_b, out_dir } => {
            let out_dir = out_dir_override().or(out_dir).unwrap_or_else(|| PathBuf::from("."));
            cmd_eval(&dataset, &layouts_a, &layouts_b, &out_dir)
        }
        Command::Pareto { config } => cmd_pareto(&config),
        Command::Convert { input, output } => {
            let g = read_graph(&input)?;
            let out = resolve(out_dir_override().as_deref(), &output);
            write_file(&out, &io::graph_text(&g, &out))
        }
    }
}

struct LayoutArgs {
    method: Method,
    init: InitKind,
    seed: u64,
    pivots: Option<usize>,
    checkpoint: Option<PathBuf>,
    config: Option<PathBuf>,
    trajectory: Option<PathBuf>,
}

fn cmd_layout(
    graph: &Path,
    args: &LayoutArgs,
    out_dir: Option<&Path>,
    output: Option<PathBuf>,
    svg: Option<PathBuf>,
) -> anyhow::Result<()> {
    // settle configuration before touching the graph
    let descent = match (&args.method, &args.config) {
        (Method::Direct, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let mut cfg: DescentConfig =
                serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            cfg.seed = args.seed;
            cfg.validate().map_err(ConfigError::from)?;
            Some(cfg)
        }
        (Method::Direct, None) => Some(DescentConfig { seed: args.seed, ..DescentConfig::default() }),
        _ => None,
    };
    let params = match (&args.method, &args.checkpoint) {
        (Method::Model, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
            Some(DeepGDParams::from_checkpoint(&text).with_context(|| format!("loading {}", path.display()))?)
        }
        (Method::Model, None) => return Err(ConfigError("--method model needs --checkpoint".into()).into()),
        _ => None,
    };

    let g = read_graph(graph)?;
    let d = shortest_paths(&g);
    let start = Instant::now();
    let pivots = || args.pivots.unwrap_or_else(|| default_pivots(g.node_count()));
    let layout: Layout = match args.method {
        Method::Pivotmds => pivot_mds(&d, pivots(), args.seed)?,
        Method::Majorization => {
            let init = start_layout(&d, args, pivots())?;
            stress_majorization(&init, &d, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)?.layout
        }
        Method::Direct => {
            let init = start_layout(&d, args, pivots())?;
            let (x, traj) = optimize_layout(&g, &init, descent.as_ref().expect("set above"))?;
            if let Some(path) = &args.trajectory {
                write_file(&resolve(out_dir, path), &traj.to_csv())?;
            }
            x
        }
        Method::Model => infer(&g, params.as_ref().expect("set above"), args.init, args.seed)?,
    };
    eprintln!("laid out {} nodes in {:.3}s", g.node_count(), start.elapsed().as_secs_f64());

    let tsv = layout.to_tsv(&g);
    match output {
        Some(path) => write_file(&resolve(out_dir, &path), &tsv)?,
        None => print!("{tsv}"),
    }
    if let Some(path) = svg {
        write_file(&resolve(out_dir, &path), &render_svg(&g, &layout, &SvgStyle::default()))?;
    }
    Ok(())
}

fn start_layout(d: &deepgd::DistanceMatrix, args: &LayoutArgs, pivots: usize) -> anyhow::Result<Layout> {
    Ok(match args.init {
        InitKind::Pivotmds => pivot_mds(d, pivots, args.seed)?,
        other => initial_layout(d, other, args.seed)?,
    })
}

#[derive(Serialize)]
struct TrainSummary {
    param_count: usize,
    train_graphs: usize,
    val_graphs: usize,
    test_graphs: usize,
    criteria: Vec<Criterion>,
    test_mean_loss: Vec<f64>,
}

fn cmd_train(path: &Path) -> anyhow::Result<()> {
    let run = RunConfig::load(path)?;
    let cfg = run.train_config()?;
    let out_dir = run.out_dir();
    let graphs = run.load_dataset()?;
    let (train_set, val_set, test_set) = split_dataset(&graphs, run.seed, run.split);
    let (params, history) = train(&train_set, &val_set, &cfg)?;
    eprintln!("trained {} parameters", params.param_count());

    let criteria = cfg.spec.criteria().to_vec();
    let mut sums = vec![0.0; criteria.len()];
    for (i, g) in test_set.iter().enumerate() {
        let x = infer(g, &params, cfg.init, run.seed.wrapping_add(i as u64))?;
        let ctx = deepgd::losses::LossContext::new(g.clone(), &criteria, cfg.perplexity)?;
        for (s, &c) in sums.iter_mut().zip(&criteria) {
            *s += ctx.value(c, &x)?;
        }
    }
    let n = test_set.len().max(1) as f64;
    let summary = TrainSummary {
        param_count: params.param_count(),
        train_graphs: train_set.len(),
        val_graphs: val_set.len(),
        test_graphs: test_set.len(),
        criteria,
        test_mean_loss: sums.iter().map(|s| s / n).collect(),
    };
    write_file(&out_dir.join("checkpoint.json"), &params.to_checkpoint()?)?;
    write_file(&out_dir.join("history.csv"), &history.to_csv())?;
    write_file(&out_dir.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(())
}

#[derive(Serialize)]
struct SpcRow {
    criterion: Criterion,
    /// `None` when some per-graph value is zero, where SPC is undefined.
    spc_percent: Option<f64>,
}

#[derive(Serialize)]
struct EvalReport {
    graphs: Vec<String>,
    a: DatasetMetrics,
    b: DatasetMetrics,
    spc: Vec<SpcRow>,
}

/// Graph files and their matching layout files, paired by file stem.
fn eval_inputs(dataset: &Path, layouts_a: &Path, layouts_b: &Path) -> anyhow::Result<Vec<(PathBuf, PathBuf, PathBuf)>> {
    if dataset.is_file() {
        return Ok(vec![(dataset.to_path_buf(), layouts_a.to_path_buf(), layouts_b.to_path_buf())]);
    }
    let graphs = config::list_graph_files(dataset)?;
    let tsvs = |dir: &Path| -> anyhow::Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("reading layout directory {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("tsv"))
            .collect();
        v.sort();
        Ok(v)
    };
    let (a, b) = (tsvs(layouts_a)?, tsvs(layouts_b)?);
    for (name, set) in [("A", &a), ("B", &b)] {
        if set.len() != graphs.len() {
            bail!(deepgd::Error::LengthMismatch { left: graphs.len(), right: set.len() });
        }
        for (g, l) in graphs.iter().zip(set.iter()) {
            if file_stem(g) != file_stem(l) {
                bail!("layout set {name} has {} where {}.tsv was expected", l.display(), file_stem(g));
            }
        }
    }
    Ok(graphs.into_iter().zip(a).zip(b).map(|((g, a), b)| (g, a, b)).collect())
}

fn cmd_eval(dataset: &Path, layouts_a: &Path, layouts_b: &Path, out_dir: &Path) -> anyhow::Result<()> {
    let inputs = eval_inputs(dataset, layouts_a, layouts_b)?;
    let mut names = Vec::new();
    let (mut ra, mut rb) = (Vec::new(), Vec::new());
    for (gp, ap, bp) in &inputs {
        let g = read_graph(gp)?;
        let load = |p: &Path| -> anyhow::Result<Layout> {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading layout {}", p.display()))?;
            Layout::from_tsv(&text, &g).with_context(|| format!("parsing layout {}", p.display()))
        };
        ra.push(evaluate_layout(&g, &load(ap)?)?);
        rb.push(evaluate_layout(&g, &load(bp)?)?);
        names.push(file_stem(gp));
    }
    let mut rows = Vec::new();
    for c in Criterion::ALL {
        let va: Vec<f64> = ra.iter().map(|r| r.get(c)).collect();
        let vb: Vec<f64> = rb.iter().map(|r| r.get(c)).collect();
        let value = match spc(&va, &vb) {
            Ok(v) => Some(v),
            Err(deepgd::Error::NonPositiveValue { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        rows.push(SpcRow { criterion: c, spc_percent: value });
    }
    println!("criterion\tspc_percent");
    for r in &rows {
        match r.spc_percent {
            Some(v) => println!("{}\t{v}", r.criterion),
            None => println!("{}\tundefined", r.criterion),
        }
    }
    let report = EvalReport { graphs: names, a: DatasetMetrics::new(ra), b: DatasetMetrics::new(rb), spc: rows };
    write_file(&out_dir.join("metrics.json"), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn cmd_pareto(path: &Path) -> anyhow::Result<()> {
    let run = RunConfig::load(path)?;
    let section = run.pareto.clone().ok_or_else(|| ConfigError("config has no pareto section".into()))?;
    let strategies = section.strategies.iter().map(|s| s.resolve()).collect::<anyhow::Result<Vec<_>>>()?;
    let engine = match section.engine {
        EngineKind::Direct => Engine::Direct(run.descent_config()?),
        EngineKind::Model => Engine::Model(run.train_config()?),
    };
    let graphs = run.load_dataset()?;
    let points = pareto_sweep(&graphs, section.pair, &strategies, &section.grid, &engine).map_err(|e| match e {
        deepgd::Error::InvalidConfig(m) => anyhow!(ConfigError(m)),
        other => anyhow!(other),
    })?;
    let out_dir = run.out_dir();
    write_file(&out_dir.join("pareto.csv"), &pareto_csv(&points))?;
    write_file(&out_dir.join("pareto.svg"), &pareto_svg(&points, section.pair.0.name(), section.pair.1.name()))
}
