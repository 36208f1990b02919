//! `synth` — pipelined datapath generation from expression kernels.
//!
//! The default invocation takes one IR file and writes Verilog:
//!
//! ```text
//! synth kernel.ir --clock-mhz 450 --solver exact -o kernel.v
//! ```
//!
//! Subcommands expose the intermediate artifacts: `dot` renders the
//! saturated e-graph, `paths` lists the chaining constraints, `export-lp`
//! writes the joint selection/scheduling model in LP format, and `bench`
//! emits reproducible random kernels.
//!
//! Diagnostics go to stderr as `LEVEL: message` lines; generated
//! artifacts are byte-identical across runs unless `--stamp` is given.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use synth_core::library::{load_library, ImplLibrary};
use synth_core::model::{build_model, export_lp};
use synth_core::pipeline::{
    egraph_to_dot, prepare, run_pipeline, PipelineError, PipelineOptions, SolverKind,
};
use synth_core::rules::SaturationLimits;
use synth_core::suite::{generate_kernel, GenSpec};
use synth_core::timing::mhz_to_ns;

#[derive(Parser)]
#[command(
    name = "synth",
    version,
    about = "Schedule expression kernels onto pipelined hardware and emit Verilog"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Option<Cmd>,

    /// IR source file (the default build flow)
    input: Option<PathBuf>,

    #[command(flatten)]
    flow: FlowArgs,

    /// output file for the generated Verilog (default: stdout)
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// also write the schedule table to this file
    #[arg(long)]
    report: Option<PathBuf>,

    /// prepend a generation timestamp comment (breaks byte-for-byte
    /// reproducibility, therefore off by default)
    #[arg(long)]
    stamp: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render the saturated e-graph as Graphviz
    Dot {
        input: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// List the register-cut path constraints
    Paths {
        input: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
        /// keep rows whose paths already fit in one cycle
        #[arg(long)]
        all_rows: bool,
    },
    /// Write the joint selection/scheduling model in CPLEX LP format
    ExportLp {
        input: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Generate reproducible random kernels
    Bench {
        /// operator count per kernel
        #[arg(long, default_value_t = 20)]
        ops: usize,
        /// generate floating-point kernels
        #[arg(long)]
        float: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// how many kernels (seeds seed..seed+count)
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// operand reuse probability
        #[arg(long, default_value_t = 0.10)]
        reconvergence: f64,
        /// output directory (default: stdout, single kernel only)
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct FlowArgs {
    /// target clock frequency in MHz
    #[arg(long, conflicts_with = "clock_ns")]
    clock_mhz: Option<f64>,

    /// target clock period in ns
    #[arg(long)]
    clock_ns: Option<f64>,

    /// implementation library JSON (default: the bundled sample library)
    #[arg(long)]
    lib: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = SolverArg::Asap)]
    solver: SolverArg,

    /// long paths kept per source/destination pair
    #[arg(long, default_value_t = 3)]
    top_k: usize,

    /// combinational hop limit during path enumeration
    #[arg(long, default_value_t = 20)]
    depth_limit: usize,

    /// disable algebraic rewriting and multi-operator implementations
    #[arg(long)]
    per_op_rules: bool,

    /// saturation iteration limit
    #[arg(long, default_value_t = 30)]
    max_iters: usize,

    /// saturation e-node limit
    #[arg(long, default_value_t = 200_000)]
    node_limit: usize,

    /// exact solver wall-clock budget in seconds (0 disables)
    #[arg(long, default_value_t = 60.0)]
    timeout_s: f64,

    /// exact solver state budget
    #[arg(long, default_value_t = 4_000_000)]
    max_states: u64,

    /// Verilog module name (default: derived from the input file name)
    #[arg(long)]
    module: Option<String>,

    /// worker threads for saturation and path enumeration
    /// (0 keeps the library default)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Asap,
    Exact,
}

fn module_name_from(input: &Path, explicit: &Option<String>) -> String {
    if let Some(m) = explicit {
        return m.clone();
    }
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("kernel");
    let mut name: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if name.is_empty() || name.chars().next().unwrap().is_ascii_digit() {
        name.insert(0, 'k');
    }
    name
}

fn load_lib(flow: &FlowArgs) -> anyhow::Result<ImplLibrary> {
    match &flow.lib {
        None => Ok(ImplLibrary::sample()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("cannot read library {}: {e}", path.display()))?;
            Ok(load_library(&text)?)
        }
    }
}

fn options(flow: &FlowArgs, input: &Path) -> PipelineOptions {
    let t_clk = match (flow.clock_mhz, flow.clock_ns) {
        (Some(mhz), _) => mhz_to_ns(mhz),
        (None, Some(ns)) => ns,
        (None, None) => mhz_to_ns(200.0),
    };
    let mut opts = PipelineOptions {
        t_clk,
        solver: match flow.solver {
            SolverArg::Asap => SolverKind::Asap,
            SolverArg::Exact => SolverKind::Exact,
        },
        top_k: flow.top_k,
        depth_limit: flow.depth_limit,
        per_op_rules: flow.per_op_rules,
        module_name: module_name_from(input, &flow.module),
        ..PipelineOptions::default()
    };
    opts.sat_limits = SaturationLimits {
        max_iterations: flow.max_iters,
        max_nodes: flow.node_limit,
        ..SaturationLimits::default()
    };
    opts.exact.max_states = flow.max_states;
    opts.exact.timeout = if flow.timeout_s > 0.0 {
        Some(std::time::Duration::from_secs_f64(flow.timeout_s))
    } else {
        None
    };
    opts
}

fn configure_jobs(flow: &FlowArgs) {
    #[cfg(feature = "parallel")]
    if flow.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(flow.jobs).build_global() {
            eprintln!("WARN: thread pool already initialized: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if flow.jobs > 1 {
        eprintln!("WARN: this build is single-threaded; --jobs has no effect");
    }
}

fn write_out(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            std::fs::write(path, text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fail(err: &PipelineError) -> ExitCode {
    eprintln!("ERROR: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ERROR: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        None => {
            let input = match cli.input {
                Some(p) => p,
                None => anyhow::bail!("no input file; see `synth --help`"),
            };
            build(&input, &cli.flow, &cli.out, &cli.report, cli.stamp)
        }
        Some(Cmd::Dot { input, flow, out }) => {
            configure_jobs(&flow);
            let lib = load_lib(&flow)?;
            let src = std::fs::read_to_string(&input)?;
            match prepare(&src, &lib, &options(&flow, &input)) {
                Ok(prep) => {
                    write_out(&out, &egraph_to_dot(&prep.egraph, &lib))?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => Ok(fail(&e)),
            }
        }
        Some(Cmd::Paths { input, flow, all_rows }) => {
            configure_jobs(&flow);
            let lib = load_lib(&flow)?;
            let src = std::fs::read_to_string(&input)?;
            let opts = options(&flow, &input);
            match prepare(&src, &lib, &opts) {
                Ok(mut prep) => {
                    if all_rows {
                        prep.paths = synth_core::timing::enumerate_top_k_paths(
                            &prep.catalog,
                            opts.top_k,
                            opts.depth_limit,
                            true,
                        );
                    }
                    let mut text = String::new();
                    use std::fmt::Write as _;
                    let _ = writeln!(
                        text,
                        "{} constraint rows (k = {}, clock {:.3} ns)",
                        prep.paths.rows.len(),
                        prep.paths.k,
                        opts.t_clk
                    );
                    for row in &prep.paths.rows {
                        let _ = writeln!(
                            text,
                            "{:?} -> node {} : delay {:.3} ns, {} register(s), {} hop(s)",
                            row.src,
                            row.dst,
                            row.delay,
                            row.cuts,
                            row.hops.len()
                        );
                    }
                    if !prep.paths.truncated_pairs.is_empty() {
                        let _ = writeln!(
                            text,
                            "WARN: {} pair(s) hit the enumeration budget",
                            prep.paths.truncated_pairs.len()
                        );
                    }
                    print!("{text}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => Ok(fail(&e)),
            }
        }
        Some(Cmd::ExportLp { input, flow, out }) => {
            configure_jobs(&flow);
            let lib = load_lib(&flow)?;
            let src = std::fs::read_to_string(&input)?;
            match prepare(&src, &lib, &options(&flow, &input)) {
                Ok(prep) => {
                    let model = build_model(&prep.catalog, &prep.paths);
                    write_out(&out, &export_lp(&model.lp))?;
                    eprintln!(
                        "INFO: {} variables, {} constraints, {} candidate implementations",
                        model.lp.binaries.len() + model.lp.generals.len(),
                        model.lp.constraints.len(),
                        model.impls.len()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => Ok(fail(&e)),
            }
        }
        Some(Cmd::Bench { ops, float, seed, count, reconvergence, out }) => {
            if out.is_none() && count > 1 {
                anyhow::bail!("--count > 1 needs --out DIR");
            }
            for i in 0..count {
                let spec = GenSpec {
                    ops,
                    float,
                    seed: seed + i,
                    reconvergence,
                    ..GenSpec::default()
                };
                let text = generate_kernel(&spec);
                match &out {
                    None => print!("{text}"),
                    Some(dir) => {
                        std::fs::create_dir_all(dir)?;
                        let kind = if float { "f32" } else { "int" };
                        let path =
                            dir.join(format!("bench_{kind}_{ops}ops_s{}.ir", seed + i));
                        std::fs::write(&path, &text)?;
                        eprintln!("INFO: wrote {}", path.display());
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn build(
    input: &Path,
    flow: &FlowArgs,
    out: &Option<PathBuf>,
    report: &Option<PathBuf>,
    stamp: bool,
) -> anyhow::Result<ExitCode> {
    configure_jobs(flow);
    let lib = load_lib(flow)?;
    let src = std::fs::read_to_string(input)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", input.display()))?;
    let opts = options(flow, input);
    let result = match run_pipeline(&src, &lib, &opts) {
        Ok(r) => r,
        Err(e) => return Ok(fail(&e)),
    };

    let sat = &result.prepared.saturation;
    eprintln!(
        "INFO: saturation {:?} after {} iteration(s): {} classes, {} nodes",
        sat.stop, sat.iterations, sat.classes, sat.nodes
    );
    eprintln!(
        "INFO: catalog keeps {} implementation node(s) ({} unusable at this clock, {} subsumed)",
        result.prepared.catalog.nodes.len(),
        result.prepared.catalog.filtered_unusable,
        result.prepared.catalog.filtered_dominated
    );
    let refined = if result.prepared.paths.k != opts.top_k {
        format!(" (rows refined to k = {})", result.prepared.paths.k)
    } else {
        String::new()
    };
    eprintln!(
        "INFO: {} chaining constraint row(s), makespan {}, module latency {}{}",
        result.prepared.paths.rows.len(),
        result.solution.makespan,
        result.netlist.latency,
        refined
    );
    if let Some(states) = result.solver_states {
        eprintln!("INFO: exact solver explored {states} state(s)");
    }
    let t = &result.prepared.timings;
    eprintln!(
        "INFO: stage times: parse {:.1?}, saturate {:.1?}, catalog {:.1?}, paths {:.1?}, solve {:.1?}, netlist {:.1?}",
        t.parse, t.saturate, t.catalog, t.paths, t.solve, t.netlist
    );

    let mut verilog = result.verilog.clone();
    if stamp {
        verilog = format!(
            "// generated {}\n{verilog}",
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs().to_string())
                .unwrap_or_else(|_| "unknown".into())
        );
    }
    write_out(out, &verilog)?;
    if let Some(path) = report {
        std::fs::write(path, result.netlist.schedule_report())?;
    }
    Ok(ExitCode::SUCCESS)
}
