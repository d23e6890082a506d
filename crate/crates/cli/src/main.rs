use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dtbm::baseline::hosvd_baseline;
use dtbm::experiment::{run_experiment, ExperimentConfig, Method};
use dtbm::io;
use dtbm::metrics::mode_average;
use dtbm::refine::summarize_clustering;
use dtbm::select::{select_r, SelectOptions};
use dtbm::simgen::{sample_observation, CoreStrength, DegreeFamily, SimSpec, DEFAULT_CORE_ROW_NORM};
use dtbm::{init_clustering, oracle_refine, rng, DtbmError, InitOptions, Observation, RefineOptions};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(name = "dtbm", version, about = "Degree-corrected tensor block model clustering")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic tensor and write it with its ground truth.
    Simulate(SimulateArgs),
    /// Cluster a tensor file.
    Fit(FitArgs),
    /// Choose the number of clusters by BIC.
    SelectR(SelectArgs),
    /// Run a Monte-Carlo grid and write per-replicate and aggregate CSVs.
    Sweep(SweepArgs),
    /// Convert a hyperedge list into a binary adjacency tensor.
    HypergraphToTensor(HypergraphArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ObservationArg {
    Gaussian,
    Bernoulli,
}

impl From<ObservationArg> for Observation {
    fn from(o: ObservationArg) -> Self {
        match o {
            ObservationArg::Gaussian => Observation::Gaussian,
            ObservationArg::Bernoulli => Observation::Bernoulli,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MethodArg {
    DtbmInit,
    DtbmFull,
    Oracle,
    Hosvd,
    HosvdPlus,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::DtbmInit => Method::DtbmInit,
            MethodArg::DtbmFull => Method::DtbmFull,
            MethodArg::Oracle => Method::Oracle,
            MethodArg::Hosvd => Method::Hosvd,
            MethodArg::HosvdPlus => Method::HosvdPlus,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum DegreeArg {
    Constant,
    AbsNormal,
    Pareto,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON simulation spec; overrides the individual flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 3)]
    r: usize,
    /// Signal exponent used to calibrate the core.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "alpha")]
    gamma: Option<f64>,
    /// Fixed diagonal-to-off-diagonal ratio of the core.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = DegreeArg::AbsNormal)]
    degree: DegreeArg,
    /// Pareto shape parameter.
    #[arg(long, default_value_t = 3.0)]
    shape: f64,
    #[arg(long, value_enum, default_value_t = ObservationArg::Gaussian)]
    observation: ObservationArg,
    #[arg(long, default_value_t = DEFAULT_CORE_ROW_NORM)]
    core_row_norm: f64,
    /// Independent clusterings and degrees on every mode.
    #[arg(long)]
    asymmetric: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Tensor file in DTENSOR format.
    tensor: PathBuf,
    /// Cluster numbers per mode; a single value applies to every mode.
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ObservationArg::Gaussian)]
    observation: ObservationArg,
    #[arg(long, value_enum, default_value_t = MethodArg::DtbmFull)]
    method: MethodArg,
    /// Ground-truth clustering; required by `oracle`, used for metrics otherwise.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    tensor: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    candidates: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ObservationArg::Gaussian)]
    observation: ObservationArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV table of scores.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Row CSV; defaults to the config's `output`. The aggregate is written
    /// next to it with an `_aggregate` suffix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct HypergraphArgs {
    /// Edge list: whitespace-separated 1-based node ids per line.
    edges: PathBuf,
    /// Number of nodes (default: largest id).
    #[arg(long)]
    nodes: Option<usize>,
    /// Edge order (default: length of the first edge).
    #[arg(long)]
    order: Option<usize>,
    /// Only set the listed ordering of each edge.
    #[arg(long)]
    directed: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl From<DtbmError> for CliError {
    fn from(e: DtbmError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn simulate(args: SimulateArgs) -> CliResult {
    let spec = match &args.config {
        Some(path) => io::read_json::<SimSpec>(path)?,
        None => {
            let strength = match (args.gamma, args.alpha) {
                (Some(g), None) => CoreStrength::Gamma(g),
                (None, Some(a)) => CoreStrength::Alpha(a),
                _ => return Err(CliError::Usage("give exactly one of --gamma or --alpha".into())),
            };
            let degree = match args.degree {
                DegreeArg::Constant => DegreeFamily::Constant,
                DegreeArg::AbsNormal => DegreeFamily::AbsNormal,
                DegreeArg::Pareto => DegreeFamily::Pareto { shape: args.shape },
            };
            SimSpec {
                p: args.p,
                order: args.order,
                r: args.r,
                strength,
                sigma: args.sigma,
                degree,
                observation: args.observation.into(),
                core_row_norm: args.core_row_norm,
                symmetric: !args.asymmetric,
                seed: args.seed,
            }
        }
    };
    let sim = sample_observation(&spec)?;
    create_dir(&args.out)?;
    io::write_tensor(args.out.join("tensor.dtensor"), &sim.y)?;
    io::write_tensor(args.out.join("mean.dtensor"), &sim.mean)?;
    io::write_clustering(args.out.join("truth.clustering"), &sim.params.z)?;
    io::write_json(args.out.join("params.json"), &sim.params)?;
    io::write_json(args.out.join("spec.json"), &spec)?;
    io::write_json(args.out.join("diagnostics.json"), &sim.diagnostics)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn expand_ranks(ranks: &[usize], order: usize) -> CliResult<Vec<usize>> {
    match ranks.len() {
        1 => Ok(vec![ranks[0]; order]),
        n if n == order => Ok(ranks.to_vec()),
        n => Err(CliError::Usage(format!("{n} ranks for an order-{order} tensor"))),
    }
}

fn fit(args: FitArgs) -> CliResult {
    let y = io::read_tensor(&args.tensor)?;
    let ranks = expand_ranks(&args.ranks, y.order())?;
    let truth = args.truth.as_ref().map(io::read_clustering).transpose()?;
    let method: Method = args.method.into();
    let seed = args.seed;
    let refine = RefineOptions::for_dims(y.dims());
    let init = InitOptions::with_observation(args.observation.into());
    let result = match method {
        Method::DtbmInit => summarize_clustering(&y, &init_clustering(&y, &ranks, &init, rng::derive_seed(seed, &[0]))?)?,
        Method::DtbmFull => dtbm::fit_dtbm(&y, &ranks, &init, &refine, seed)?,
        Method::Oracle => {
            let z = truth
                .as_ref()
                .ok_or_else(|| CliError::Usage("method oracle needs --truth".into()))?;
            oracle_refine(&y, z, &refine.with_seed(rng::derive_seed(seed, &[2])))?
        }
        Method::Hosvd | Method::HosvdPlus => {
            let z = hosvd_baseline(&y, &ranks, method == Method::HosvdPlus, rng::derive_seed(seed, &[3]))?;
            summarize_clustering(&y, &z)?
        }
    };
    create_dir(&args.out)?;
    io::write_clustering(args.out.join("clustering.txt"), &result.z_hat)?;
    io::write_json(args.out.join("fit.json"), &result)?;
    println!("method {method}, {} refinement sweeps", result.iterations_run);
    if let Some(z) = &truth {
        let m = mode_average(&result.z_hat, z)?;
        println!("ell {:.6} cer {:.6}", m.ell, m.cer);
    }
    Ok(())
}

#[derive(Serialize)]
struct BicRow {
    r: usize,
    score: f64,
    rss: f64,
    penalty: f64,
    selected: bool,
}

fn select(args: SelectArgs) -> CliResult {
    let y = io::read_tensor(&args.tensor)?;
    let opts = SelectOptions {
        init: InitOptions::with_observation(args.observation.into()),
        refine: None,
    };
    let sel = select_r(&y, &args.candidates, &opts, args.seed)?;
    let rows: Vec<BicRow> = sel
        .scores
        .iter()
        .map(|s| BicRow {
            r: s.ranks[0],
            score: s.score,
            rss: s.rss,
            penalty: s.penalty,
            selected: s.ranks[0] == sel.r_hat,
        })
        .collect();
    println!("{:>4} {:>18} {:>14}", "r", "bic", "rss");
    for row in &rows {
        println!("{:>4} {:>18.6} {:>14.6e}{}", row.r, row.score, row.rss, if row.selected { " *" } else { "" });
    }
    println!("selected r = {}", sel.r_hat);
    if let Some(out) = &args.out {
        let mut w = csv::Writer::from_path(out)?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn aggregate_path(rows: &Path) -> PathBuf {
    let stem = rows.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let ext = rows.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    rows.with_file_name(format!("{stem}_aggregate.{ext}"))
}

fn sweep(args: SweepArgs) -> CliResult {
    let mut config: ExperimentConfig = io::read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    config.validate()?;
    let out = args
        .out
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("no output path: pass --out or set `output` in the config".into()))?;
    let result = run_experiment(&config)?;
    let mut w = csv::Writer::from_path(&out)?;
    for row in &result.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let agg = aggregate_path(&out);
    let mut w = csv::Writer::from_path(&agg)?;
    for row in &result.aggregates {
        w.serialize(row)?;
    }
    w.flush()?;
    let failures = result.rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} rows to {}, {} aggregates to {}, {failures} failed",
        result.rows.len(),
        out.display(),
        result.aggregates.len(),
        agg.display()
    );
    Ok(())
}

fn hypergraph(args: HypergraphArgs) -> CliResult {
    let edges = io::read_edge_list(&args.edges, args.nodes, args.order)?;
    let t = io::hypergraph_to_tensor(&edges, !args.directed)?;
    io::write_tensor(&args.out, &t)?;
    println!("{} edges over {} nodes to {}", edges.edges.len(), edges.num_nodes, args.out.display());
    Ok(())
}

fn configure_threads(jobs: Option<usize>) -> CliResult {
    let Some(jobs) = jobs else { return Ok(()) };
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads(cli.jobs)?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::SelectR(a) => select(a),
        Command::Sweep(a) => sweep(a),
        Command::HypergraphToTensor(a) => hypergraph(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
