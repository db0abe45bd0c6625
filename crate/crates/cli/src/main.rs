use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use topoprior::data::{self, DatasetConfig, DegradeConfig, Split};
use topoprior::gridio;
use topoprior::model::TinyNet;
use topoprior::oracle::betti_curve;
use topoprior::persistence::{compute_barcode_with, format_real};
use topoprior::topograd::{topo_grad_beta1, topo_grad_general};
use topoprior::trainer::{self, Postprocess, RefineConfig, TrainConfig};
use topoprior::{build_complex, GradientMap, PairingMethod, Placement, TopoGradConfig, TopologyPrior};

#[derive(Parser)]
#[command(name = "topoprior", version, about = "Persistent homology and topological priors for 2D probability maps")]
struct Cli {
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "TOPOPRIOR_OUTPUT_DIR", default_value = ".")]
    output_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the persistence barcode of a grid.
    Barcode(BarcodeArgs),
    /// Print Betti numbers at every distinct threshold.
    Bettis(BettisArgs),
    /// Compute the pixelwise topological gradient.
    Topograd(TopogradArgs),
    /// Refine a probability map toward a topology prior.
    Refine(RefineArgs),
    /// Generate a synthetic annulus dataset.
    Synth(SynthArgs),
    /// Simulate k-space undersampling of an image.
    Degrade(DegradeArgs),
    /// Train a segmentation network.
    Train(TrainArgs),
    /// Evaluate a trained network on a dataset split.
    Eval(EvalArgs),
}

#[derive(Args)]
struct BarcodeArgs {
    /// Input grid (.csv or .pgm).
    #[arg(long = "in")]
    input: PathBuf,
    /// Barcode JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Optional `dim,birth,death` table for plotting.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::UnionFind)]
    method: Method,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    UnionFind,
    BoundaryMatrix,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    /// Count bars alive at each threshold.
    Barcode,
    /// Threshold and count components and holes directly.
    Oracle,
}

#[derive(Args)]
struct BettisArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Source::Barcode)]
    source: Source,
}

#[derive(Args)]
struct TopoArgs {
    /// Iterations of the gradient procedure.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Bar ends within this distance of 0 or 1 are left alone.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = PlacementArg::Paired)]
    placement: PlacementArg,
}

impl TopoArgs {
    fn config(&self) -> Result<TopoGradConfig> {
        let placement = match self.placement {
            PlacementArg::Paired => Placement::PairedCell,
            PlacementArg::ValueMatch => Placement::ValueMatch,
        };
        Ok(TopoGradConfig::new(self.k, self.eps)?.with_placement(placement))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Paired,
    ValueMatch,
}

#[derive(Args)]
struct TopogradArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Gradient output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    topo: TopoArgs,
    /// Desired Betti numbers `b0,b1`; defaults to a single loop.
    #[arg(long)]
    prior: Option<String>,
    /// Also shorten bars beyond the desired counts.
    #[arg(long)]
    penalize_extra: bool,
    /// Write `row,col,value` for nonzero entries instead of a dense grid.
    #[arg(long)]
    sparse: bool,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    topo: TopoArgs,
    #[arg(long, default_value = "1,1")]
    prior: String,
    /// Shorten bars beyond the desired counts (on by default).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    penalize_extra: bool,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for images, labels and manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    n_labeled: usize,
    #[arg(long, default_value_t = 50)]
    n_unlabeled: usize,
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    /// Side length of the square images.
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    band: usize,
    #[arg(long, default_value_t = 0.75)]
    p_remove: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Supervised,
    Semisupervised,
    Pseudolabel,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest or directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Semisupervised)]
    mode: Mode,
    /// Checkpoint output.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Per-epoch history CSV.
    #[arg(long, default_value = "history.csv")]
    history: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-item work.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Labeled,
    Unlabeled,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "1,1")]
    prior: String,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Close the thresholded masks with a disk of this radius first.
    #[arg(long)]
    closure: Option<usize>,
    /// Writes `<report>.json` and `<report>.csv`.
    #[arg(long, default_value = "eval")]
    report: String,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 3 for missing or unreadable files, 4 for malformed input, 5 for invalid
/// parameters, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    use topoprior::Error as E;
    match err.downcast_ref::<topoprior::Error>() {
        Some(E::Io { .. }) => 3,
        Some(E::Parse { .. } | E::Json(_) | E::OutOfRange { .. } | E::ShapeMismatch { .. }) => 4,
        Some(E::InvalidConfig(_) | E::EmptyGrid { .. }) => 5,
        _ if err.downcast_ref::<std::io::Error>().is_some() => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let out_dir = cli.output_dir;
    let resolve = |p: &Path| -> Result<PathBuf> {
        let path = if p.is_absolute() { p.to_path_buf() } else { out_dir.join(p) };
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(path)
    };
    match cli.command {
        Command::Barcode(a) => {
            let grid = gridio::read_grid(&a.input)?;
            let method = match a.method {
                Method::UnionFind => PairingMethod::UnionFind,
                Method::BoundaryMatrix => PairingMethod::BoundaryMatrix,
            };
            let barcode = compute_barcode_with(&build_complex(&grid)?, method)?;
            write(&resolve(&a.out)?, &barcode.to_json())?;
            if let Some(csv) = a.csv {
                write(&resolve(&csv)?, &barcode.to_csv())?;
            }
        }
        Command::Bettis(a) => {
            let grid = gridio::read_grid(&a.input)?;
            println!("p,beta0,beta1");
            let curve = betti_curve(&grid);
            match a.source {
                Source::Oracle => {
                    for pt in curve {
                        println!("{},{},{}", format_real(pt.p), pt.beta0, pt.beta1);
                    }
                }
                Source::Barcode => {
                    let barcode = topoprior::compute_barcode(&build_complex(&grid)?)?;
                    for pt in curve {
                        let (b0, b1) = (barcode.betti_at(pt.p, 0), barcode.betti_at(pt.p, 1));
                        println!("{},{b0},{b1}", format_real(pt.p));
                    }
                }
            }
        }
        Command::Topograd(a) => {
            let grid = gridio::read_grid(&a.input)?;
            let cfg = a.topo.config()?;
            let g = match &a.prior {
                None if !a.penalize_extra => topo_grad_beta1(&grid, &cfg)?,
                prior => {
                    let prior = TopologyPrior::parse_betti(prior.as_deref().unwrap_or(",1"), a.penalize_extra)?;
                    topo_grad_general(&grid, &prior, &cfg)?
                }
            };
            let text = if a.sparse { sparse_csv(&g) } else { dense_csv(&g) };
            match a.out {
                Some(out) => write(&resolve(&out)?, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Refine(a) => {
            let grid = gridio::read_grid(&a.input)?;
            let prior = TopologyPrior::parse_betti(&a.prior, a.penalize_extra)?;
            let cfg = RefineConfig {
                eta: a.eta,
                mu: a.mu,
                lambda: a.lambda,
                max_iters: a.max_iters,
            };
            let refined = trainer::refine_mask(&grid, &prior, &a.topo.config()?, &cfg)?;
            gridio::write_grid(&resolve(&a.out)?, &refined.grid)?;
            eprintln!(
                "{} iterations, {}",
                refined.iterations,
                if refined.converged { "converged" } else { "iteration cap reached" }
            );
        }
        Command::Synth(a) => {
            if a.size == 0 || a.size % 2 != 0 {
                bail!(topoprior::Error::InvalidConfig(format!(
                    "size must be a positive even number, got {}",
                    a.size
                )));
            }
            let cfg = DatasetConfig {
                n_labeled: a.n_labeled,
                n_unlabeled: a.n_unlabeled,
                n_test: a.n_test,
                seed: a.seed,
                ..DatasetConfig::for_size(a.size)
            };
            let dataset = data::generate_dataset(&cfg)?;
            let dir = resolve(&a.out)?;
            let manifest = data::write_dataset(&dataset, &dir)?;
            eprintln!("wrote {} items to {}", manifest.items.len(), dir.display());
        }
        Command::Degrade(a) => {
            let grid = gridio::read_grid(&a.input)?;
            let cfg = DegradeConfig {
                band: a.band,
                p_remove: a.p_remove,
                seed: a.seed,
            };
            gridio::write_grid(&resolve(&a.out)?, &data::degrade_kspace(&grid, &cfg)?)?;
        }
        Command::Train(a) => {
            let mut cfg = match &a.config {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| topoprior::Error::Io { path: path.clone(), source: e })?;
                    TrainConfig::from_json(&text).map_err(|e| match e {
                        topoprior::Error::Json(j) => topoprior::Error::Parse {
                            kind: "training config",
                            path: path.clone(),
                            reason: j.to_string(),
                        },
                        other => other,
                    })?
                }
                None => TrainConfig::default(),
            };
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            if let Some(jobs) = a.jobs {
                cfg.jobs = jobs;
            }
            cfg.validate()?;
            let dataset = data::load_dataset(&a.data)?;
            let trained = match a.mode {
                Mode::Supervised => trainer::train_supervised(&cfg, &dataset)?,
                Mode::Semisupervised => trainer::train_semisupervised(&cfg, &dataset)?,
                Mode::Pseudolabel => trainer::train_pseudolabel_ssl(&cfg, &dataset)?,
            };
            trained.net.save(&resolve(&a.out)?)?;
            trained.history.write_csv(&resolve(&a.history)?)?;
            if let Some(last) = trained.history.epochs.last() {
                eprintln!("final supervised loss {}", last.supervised_loss);
            }
        }
        Command::Eval(a) => {
            let net = TinyNet::load(&a.model)?;
            let dataset = data::load_dataset(&a.data)?;
            let prior = TopologyPrior::parse_betti(&a.prior, false)?;
            let split = match a.split {
                SplitArg::Labeled => Split::Labeled,
                SplitArg::Unlabeled => Split::Unlabeled,
                SplitArg::Test => Split::Test,
            };
            let samples: Vec<_> = dataset.split(split).collect();
            if samples.is_empty() {
                bail!(topoprior::Error::InvalidConfig(format!("dataset has no {split:?} items")));
            }
            let post = a.closure.map_or(Postprocess::None, Postprocess::Closure);
            let report = trainer::evaluate_with(&net, &samples, &prior, post, a.jobs.max(1))?;
            let stem = resolve(Path::new(&a.report))?;
            let (dir, name) = (
                stem.parent().unwrap_or(Path::new(".")).to_path_buf(),
                stem.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            );
            report.write(&dir, &name)?;
            println!(
                "mean_dice={} topology_correct={}",
                report.mean_dice, report.topology_correct_fraction
            );
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| topoprior::Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

fn sparse_csv(g: &GradientMap) -> String {
    let mut out = String::from("row,col,value\n");
    for (i, j, v) in g.nonzero() {
        out.push_str(&format!("{i},{j},{v}\n"));
    }
    out
}

fn dense_csv(g: &GradientMap) -> String {
    let (h, w) = g.shape();
    let mut out = String::new();
    for i in 0..h {
        let row: Vec<String> = (0..w).map(|j| g.get(i, j).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
