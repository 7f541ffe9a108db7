//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 when a hypothesis or domain check fails, 2 on bad input.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::graph::{build_medag_with_threshold, fmt_one_indexed, parse_edge_list, Digraph, GraphError, NodeSet};
use crate::output;
use crate::scenario::{bundled, ScenarioError, ScenarioFile};
use crate::sim::{
    check_envelope, monte_carlo_mss, mss_criterion, pbar, prepare, run_prepared, sweep_mss_margin, Horizon,
    SimConfig, SimError, DEFAULT_TRIALS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "resest", version, about = "Resilient distributed state estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test strong r-robustness of a graph with respect to a source set.
    CheckRobust {
        /// Edge list, one `from to` pair per line, 1-indexed.
        #[arg(long)]
        graph: PathBuf,
        /// Comma-separated 1-indexed source nodes.
        #[arg(long)]
        sources: String,
        #[arg(long)]
        r: usize,
        /// Node count, if larger than the highest node in the file.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Build the mode-estimation DAG and print it as JSON.
    BuildMedag {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        sources: String,
        #[arg(long)]
        f: usize,
        #[arg(long)]
        nodes: Option<usize>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one simulation and write trace.csv and trace.json.
    Simulate {
        #[command(flatten)]
        input: ScenarioInput,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate the mean-square stability criterion.
    MssMargin {
        /// Spectral radius of the plant.
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        f: usize,
        #[arg(long, required_unless_present = "sweep")]
        m: Option<usize>,
        #[arg(long, required_unless_present = "sweep")]
        p: Option<f64>,
        /// Tabulate m = 3..=8 against p = 0, 0.05, ..., 1 instead.
        #[arg(long, conflicts_with_all = ["m", "p"])]
        sweep: bool,
        /// CSV destination for `--sweep`; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo mean-square error of LFSE over erasure links.
    Montecarlo {
        #[command(flatten)]
        input: ScenarioInput,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ScenarioInput {
    /// Scenario TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a bundled scenario.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Debug)]
enum Failure {
    /// Exit code 1.
    Check(String),
    /// Exit code 2.
    Input(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Input(_) => Failure::Input(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::NotRobust { .. } => Failure::Check(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

/// Parses arguments and runs, printing to the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(Failure::Check(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILED
        }
        Err(Failure::Input(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INPUT
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::CheckRobust {
            graph,
            sources,
            r,
            nodes,
        } => {
            let g = load_graph(&graph, nodes)?;
            let s = parse_sources(&sources, g.node_count())?;
            if r == 0 {
                return Err(Failure::Input("r must be at least 1".into()));
            }
            match build_medag_with_threshold(&g, &s, r) {
                Ok(_) => {
                    say(out, format_args!("strongly {r}-robust w.r.t. {}: yes", fmt_one_indexed(&s)))?;
                    Ok(EXIT_OK)
                }
                Err(GraphError::NotRobust { residual, .. }) => {
                    say(
                        out,
                        format_args!(
                            "strongly {r}-robust w.r.t. {}: no; stuck nodes {}",
                            fmt_one_indexed(&s),
                            fmt_one_indexed(&residual)
                        ),
                    )?;
                    Ok(EXIT_FAILED)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::BuildMedag {
            graph,
            sources,
            f,
            nodes,
            out: dest,
        } => {
            let g = load_graph(&graph, nodes)?;
            let s = parse_sources(&sources, g.node_count())?;
            let medag = build_medag_with_threshold(&g, &s, 2 * f + 1)?;
            let mut doc = output::medag_json(&medag);
            doc["f"] = json!(f);
            emit_json(&doc, dest.as_deref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Simulate { input, seed, out: dir } => {
            let mut cfg = load_config(&input)?;
            cfg.seed = seed;
            let prep = prepare(&cfg)?;
            let horizon = match cfg.horizon {
                Horizon::Steps { steps } => steps,
                Horizon::Envelope => crate::sim::envelope_horizon(&cfg, &prep)?,
            };
            let trace = run_prepared(&cfg, &prep, seed, horizon)?;
            let mut doc = output::trace_json(&trace);
            // The envelope only applies to some protocol/channel pairs.
            if let Ok(report) = check_envelope(&cfg, &prep, &trace) {
                doc["envelope"] = json!({
                    "checked": report.checked,
                    "violations": report.violations.len(),
                    "worst_ratio": report.worst_ratio,
                    "holds": report.holds(),
                });
            }
            create_dir(&dir)?;
            let csv_path = dir.join("trace.csv");
            let file = fs::File::create(&csv_path).map_err(|e| io_failure(&csv_path, e))?;
            output::write_trace_csv(&trace, std::io::BufWriter::new(file)).map_err(|e| io_failure(&csv_path, e))?;
            write_json(&dir.join("trace.json"), &doc)?;
            say(
                out,
                format_args!(
                    "{} steps, final max state error {:.3e}; wrote {}",
                    horizon,
                    trace.final_max_state_error(),
                    dir.display()
                ),
            )?;
            Ok(EXIT_OK)
        }
        Command::MssMargin {
            rho,
            f,
            m,
            p,
            sweep,
            out: dest,
        } => {
            if !(rho.is_finite() && rho >= 0.0) {
                return Err(Failure::Check(format!("rho must be finite and nonnegative, got {rho}")));
            }
            if sweep {
                let ms: Vec<usize> = (3..=8).collect();
                let ps: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
                let table = sweep_mss_margin(rho, f, &ms, &ps)?;
                match dest {
                    Some(path) => {
                        let file = fs::File::create(&path).map_err(|e| io_failure(&path, e))?;
                        output::write_margin_csv(&table, file).map_err(|e| io_failure(&path, e))?;
                    }
                    None => output::write_margin_csv(&table, &mut *out)
                        .map_err(|e| Failure::Input(e.to_string()))?,
                }
                return Ok(EXIT_OK);
            }
            let (m, p) = (m.expect("required by clap"), p.expect("required by clap"));
            let pb = pbar(p, m, f)?;
            let ok = mss_criterion(rho, pb);
            let doc = json!({
                "rho": rho,
                "f": f,
                "m": m,
                "p": p,
                "pbar": pb,
                "rho_sq_pbar": rho * rho * pb,
                "criterion_satisfied": ok,
            });
            emit_json(&doc, dest.as_deref(), out)?;
            Ok(if ok { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Montecarlo {
            input,
            trials,
            seed,
            out: dir,
        } => {
            let mut cfg = load_config(&input)?;
            cfg.seed = seed;
            cfg.trials = trials;
            let report = monte_carlo_mss(&cfg, trials)?;
            create_dir(&dir)?;
            let csv_path = dir.join("mss.csv");
            let file = fs::File::create(&csv_path).map_err(|e| io_failure(&csv_path, e))?;
            output::write_mss_csv(&report, std::io::BufWriter::new(file)).map_err(|e| io_failure(&csv_path, e))?;
            write_json(&dir.join("mss.json"), &output::mss_json(&report))?;
            say(
                out,
                format_args!(
                    "{} trials, rho^2 pbar = {:.4} (criterion {}); wrote {}",
                    trials,
                    report.margin,
                    if report.criterion_satisfied { "satisfied" } else { "not satisfied" },
                    dir.display()
                ),
            )?;
            Ok(EXIT_OK)
        }
    }
}

fn say(out: &mut dyn Write, args: std::fmt::Arguments) -> Result<(), Failure> {
    writeln!(out, "{args}").map_err(|e| Failure::Input(e.to_string()))
}

fn load_graph(path: &Path, nodes: Option<usize>) -> Result<Digraph, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    parse_edge_list(&text, nodes).map_err(|e| io_failure(path, e))
}

/// Parses `1,2,3` into a 0-indexed set.
fn parse_sources(text: &str, n: usize) -> Result<NodeSet, Failure> {
    let mut set = NodeSet::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let id: usize = part
            .parse()
            .map_err(|_| Failure::Input(format!("bad node id `{part}` in --sources")))?;
        if id == 0 || id > n {
            return Err(Failure::Input(format!("source {id} is outside 1..={n}")));
        }
        set.insert(id - 1);
    }
    if set.is_empty() {
        return Err(Failure::Input("--sources is empty".into()));
    }
    Ok(set)
}

fn load_config(input: &ScenarioInput) -> Result<SimConfig, Failure> {
    let file = match (&input.config, &input.scenario) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            ScenarioFile::from_toml(&text)?
        }
        (None, Some(name)) => bundled(name)?,
        (None, None) => return Err(Failure::Input("pass --config or --scenario".into())),
    };
    Ok(file.to_config()?)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_json(path: &Path, doc: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| Failure::Input(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

fn emit_json(doc: &serde_json::Value, dest: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    match dest {
        Some(path) => write_json(path, doc),
        None => {
            let text = serde_json::to_string_pretty(doc).map_err(|e| Failure::Input(e.to_string()))?;
            say(out, format_args!("{text}"))
        }
    }
}
