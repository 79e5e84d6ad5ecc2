use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use codesign_core::area::{area_breakdown, sm_area, total_area};
use codesign_core::calibration::{fit_linear, load_samples, MemoryType};
use codesign_core::config::RunConfig;
use codesign_core::explorer::{compare_baselines, pareto_frontier, reference_baselines, DesignPoint, Explorer};
use codesign_core::report;
use codesign_core::workload::standard_kernels;
use codesign_core::{
    optimize_tiles, AreaCoefficients, Error, HardwareConfig, MachineConstants, ProblemSize, ReferenceModel,
    ResultsStore, SearchOptions, StencilKernel, TileSearchBounds, WorkloadSpec,
};

const STORE_FILE: &str = "store.ndjson";

#[derive(Parser)]
#[command(name = "codesign", version, about = "Joint accelerator/tiling design-space exploration for stencils")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a linear area model to `size_kB,area_mm2` samples.
    Calibrate {
        #[arg(long, value_parser = parse_memory_type)]
        memory_type: MemoryType,
        #[arg(long)]
        input: PathBuf,
    },
    /// Chip area and its breakdown for one hardware configuration.
    Area(AreaArgs),
    /// Optimal tiling of one kernel instance on one hardware point.
    OptimizeTiles(OptimizeArgs),
    /// Evaluate every in-budget hardware point and write the frontier.
    Explore(RunArgs),
    /// Rebuild the frontier from a populated store.
    Pareto(RunArgs),
    /// Best design per single-kernel workload, from the store only.
    Sensitivity {
        #[command(flatten)]
        run: RunArgs,
        /// Restrict to one kernel; all kernels otherwise.
        #[arg(long)]
        kernel: Option<String>,
    },
    /// Area shares of the frontier designs, from the store only.
    Resources {
        #[command(flatten)]
        run: RunArgs,
        /// Report every feasible design instead of the frontier.
        #[arg(long)]
        all: bool,
    },
}

#[derive(Args, Clone)]
struct HwArgs {
    #[arg(long = "n-sm")]
    n_sm: Option<u32>,
    #[arg(long = "n-v")]
    n_v: Option<u32>,
    /// Shared memory per SM, kB.
    #[arg(long = "m-sm")]
    m_sm: Option<f64>,
    /// Register file per vector unit, kB.
    #[arg(long = "r-vu", default_value_t = 2.0)]
    r_vu: f64,
    /// L1 per SM pair, kB.
    #[arg(long, default_value_t = 0.0)]
    l1: f64,
    /// Total L2, kB.
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    /// Start from a known chip: gtx980 or titanx. Explicit flags override it.
    #[arg(long)]
    preset: Option<String>,
}

impl HwArgs {
    fn resolve(&self) -> Result<HardwareConfig> {
        let mut hw = match self.preset.as_deref() {
            Some("gtx980") => HardwareConfig::gtx980(),
            Some("titanx") => HardwareConfig::titan_x(),
            Some(other) => bail!("unknown preset '{other}' (expected gtx980 or titanx)"),
            None => HardwareConfig {
                n_sm: self.n_sm.context("--n-sm is required without --preset")?,
                n_v: self.n_v.context("--n-v is required without --preset")?,
                m_sm_kb: self.m_sm.context("--m-sm is required without --preset")?,
                r_vu_kb: self.r_vu,
                l1_smpair_kb: self.l1,
                l2_kb: self.l2,
            },
        };
        if self.preset.is_some() {
            if let Some(v) = self.n_sm {
                hw.n_sm = v;
            }
            if let Some(v) = self.n_v {
                hw.n_v = v;
            }
            if let Some(v) = self.m_sm {
                hw.m_sm_kb = v;
            }
        }
        hw.validate()?;
        Ok(hw)
    }
}

#[derive(Args)]
struct AreaArgs {
    #[command(flatten)]
    hw: HwArgs,
    /// Coefficient JSON; the Maxwell set when absent.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Clone, Default)]
struct MachineArgs {
    #[arg(long)]
    warp_size: Option<u32>,
    #[arg(long)]
    mtb_sm: Option<u32>,
    #[arg(long)]
    block_shmem_kb: Option<f64>,
    #[arg(long)]
    bandwidth_gbps: Option<f64>,
}

impl MachineArgs {
    fn apply(&self, mc: &mut MachineConstants) -> Result<()> {
        if let Some(v) = self.warp_size {
            mc.warp_size = v;
        }
        if let Some(v) = self.mtb_sm {
            mc.mtb_sm = v;
        }
        if let Some(v) = self.block_shmem_kb {
            mc.m_block_kb = v;
        }
        if let Some(v) = self.bandwidth_gbps {
            mc.bandwidth_gbps = v;
        }
        mc.validate()?;
        Ok(())
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    hw: HwArgs,
    #[command(flatten)]
    machine: MachineArgs,
    /// Kernel name, looked up in --workload or among the standard kernels.
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    workload: Option<PathBuf>,
    /// c_iter for the standard kernels, seconds.
    #[arg(long, default_value_t = 1e-9)]
    c_iter: f64,
    #[arg(long)]
    s1: u64,
    #[arg(long)]
    s2: Option<u64>,
    #[arg(long)]
    s3: Option<u64>,
    #[arg(long)]
    t: u64,
    /// Tile search bounds as JSON (same schema as the config `bounds` field).
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Disable pruning (exhaustive grid scan).
    #[arg(long)]
    no_prune: bool,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config file.
    #[arg(long, env = "CODESIGN_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Area window `lo,hi` in mm²; overrides the config file.
    #[arg(long, value_parser = parse_budget)]
    budget: Option<(f64, f64)>,
    #[command(flatten)]
    machine: MachineArgs,
}

fn parse_memory_type(s: &str) -> Result<MemoryType, String> {
    s.parse::<MemoryType>().map_err(|e| e.to_string())
}

fn parse_budget(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

/// A loaded run: config, workload and an explorer over the on-disk store.
struct Session {
    config: RunConfig,
    workload: WorkloadSpec,
    explorer: Explorer,
    out_dir: PathBuf,
}

impl Session {
    fn open(args: &RunArgs) -> Result<Self> {
        let mut config = RunConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
        if let Some(b) = args.budget {
            config.hardware.budget = b;
        }
        if let Some(j) = args.jobs {
            config.jobs = j;
        }
        args.machine.apply(&mut config.machine)?;
        config.validate()?;
        let out_dir = args
            .output_dir
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("codesign-out"));
        std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let workload = config.load_workload().with_context(|| format!("loading {}", config.workload.display()))?;
        let coeffs = config.load_coefficients()?;
        let store = Arc::new(ResultsStore::open(&out_dir.join(STORE_FILE))?);
        let explorer = Explorer::new(Arc::new(ReferenceModel), store)
            .with_coefficients(coeffs)
            .with_machine(config.machine)
            .with_bounds(config.bounds);
        Ok(Session { config, workload, explorer, out_dir })
    }

    fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.config.jobs).build()?;
        Ok(pool.install(f))
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir.join(name);
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }

    fn points_from_store(&self) -> Result<Vec<DesignPoint>> {
        Ok(self.in_pool(|| self.explorer.reevaluate(&self.config.hardware, &self.workload))??)
    }
}

fn cmd_calibrate(memory_type: MemoryType, input: &Path) -> Result<()> {
    let samples = load_samples(input).with_context(|| format!("reading {}", input.display()))?;
    let fit = fit_linear(&samples)?;
    let out = serde_json::json!({
        "memory_type": memory_type,
        "beta": fit.beta,
        "alpha": fit.alpha,
        "r_squared": fit.r_squared,
    });
    writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&out)?)?;
    Ok(())
}

fn cmd_area(args: &AreaArgs) -> Result<()> {
    let hw = args.hw.resolve()?;
    let coeffs = match &args.coefficients {
        Some(p) => AreaCoefficients::load(p)?,
        None => AreaCoefficients::default(),
    };
    let total = total_area(&hw, &coeffs);
    let b = area_breakdown(&hw, &coeffs);
    if args.json {
        let out = serde_json::json!({ "hw": hw, "total_mm2": total, "sm_mm2": sm_area(&hw, &coeffs), "breakdown": b });
        writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&out)?)?;
        return Ok(());
    }
    writeln!(std::io::stdout(), "total_mm2     {}", report::sig6(total))?;
    writeln!(std::io::stdout(), "sm_mm2        {}", report::sig6(sm_area(&hw, &coeffs)))?;
    for (name, v) in [
        ("vector_logic", b.vector_logic),
        ("registers", b.registers),
        ("shared", b.shared),
        ("l1", b.l1),
        ("l2", b.l2),
        ("overhead", b.overhead),
    ] {
        writeln!(std::io::stdout(), "{name:<13} {}", report::sig6(v))?;
    }
    Ok(())
}

fn cmd_optimize_tiles(args: &OptimizeArgs) -> Result<()> {
    let hw = args.hw.resolve()?;
    let mut mc = MachineConstants::default();
    args.machine.apply(&mut mc)?;
    let kernels: Vec<StencilKernel> = match &args.workload {
        Some(p) => WorkloadSpec::load(p)?.kernels,
        None => standard_kernels(args.c_iter),
    };
    let Some(kern) = kernels.iter().find(|k| k.name == args.kernel) else {
        bail!("unknown kernel '{}'", args.kernel);
    };
    let s2 = args.s2.unwrap_or(args.s1);
    let s3 = if kern.is_3d() { Some(args.s3.unwrap_or(args.s1)) } else { None };
    let size = ProblemSize { s1: args.s1, s2, s3, t: args.t };
    let bounds = match &args.bounds {
        Some(p) => serde_json::from_str::<TileSearchBounds>(&std::fs::read_to_string(p)?)?,
        None => TileSearchBounds::default(),
    };
    let sol = optimize_tiles(kern, &size, &hw, &mc, &bounds, &ReferenceModel, SearchOptions { prune: !args.no_prune })?;
    writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&sol)?)?;
    Ok(())
}

fn cmd_explore(args: &RunArgs) -> Result<()> {
    let s = Session::open(args)?;
    let started = Instant::now();
    let points = s.in_pool(|| s.explorer.explore(&s.config.hardware, &s.workload))??;
    let frontier = pareto_frontier(&points);
    report::write_points(s.create("points.csv")?, &points, &frontier)?;
    report::write_frontier(s.create("frontier.csv")?, &frontier)?;
    let baselines = s.in_pool(|| compare_baselines(&s.explorer, &s.workload, &frontier, &reference_baselines()))??;
    report::write_baselines(s.create("baselines.csv")?, &baselines)?;
    s.explorer.store().flush()?;
    let feasible = points.iter().filter(|p| p.feasible).count();
    eprintln!(
        "explored {} designs ({} feasible), frontier {}, new solves {}, {:.1}s -> {}",
        points.len(),
        feasible,
        frontier.len(),
        s.explorer.store().solve_count(),
        started.elapsed().as_secs_f64(),
        s.out_dir.display()
    );
    Ok(())
}

fn cmd_pareto(args: &RunArgs) -> Result<()> {
    let s = Session::open(args)?;
    let points = s.points_from_store()?;
    let frontier = pareto_frontier(&points);
    report::write_frontier(s.create("frontier.csv")?, &frontier)?;
    eprintln!("frontier {} of {} designs", frontier.len(), points.len());
    Ok(())
}

fn cmd_sensitivity(args: &RunArgs, kernel: Option<&str>) -> Result<()> {
    let s = Session::open(args)?;
    let names: Vec<String> = match kernel {
        Some(k) => vec![k.to_string()],
        None => s.workload.kernels.iter().map(|k| k.name.clone()).collect(),
    };
    let mut rows = Vec::new();
    for name in names {
        let best = s.in_pool(|| s.explorer.sensitivity(&s.config.hardware, &s.workload, &name))??;
        rows.push((name, best));
    }
    report::write_sensitivity(s.create("sensitivity.csv")?, &rows)?;
    eprintln!("sensitivity for {} kernels, new solves {}", rows.len(), s.explorer.store().solve_count());
    Ok(())
}

fn cmd_resources(args: &RunArgs, all: bool) -> Result<()> {
    let s = Session::open(args)?;
    let points = s.points_from_store()?;
    let selected = if all { points.into_iter().filter(|p| p.feasible).collect() } else { pareto_frontier(&points) };
    report::write_resources(s.create("resources.csv")?, &selected, &s.explorer.coeffs)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate { memory_type, input } => cmd_calibrate(memory_type, &input),
        Command::Area(a) => cmd_area(&a),
        Command::OptimizeTiles(a) => cmd_optimize_tiles(&a),
        Command::Explore(a) => cmd_explore(&a),
        Command::Pareto(a) => cmd_pareto(&a),
        Command::Sensitivity { run, kernel } => cmd_sensitivity(&run, kernel.as_deref()),
        Command::Resources { run, all } => cmd_resources(&run, all),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(e.downcast_ref::<Error>(), Some(Error::DegenerateSamples(_))) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
