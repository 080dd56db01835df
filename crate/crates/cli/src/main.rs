use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use bicl::bench;
use bicl::io::{load_matrix, load_solution, save_matrix, save_solution, write_atomic, SolutionFile};
use bicl::driver::relative_gap;
use bicl::{elbow_scan, generate_planted, objective, solve, validate, PlantedSpec, SolveResult, SolverParams, Termination};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bicl", version, about = "Exact biclustering by branch-and-cut")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Human,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance to certified optimality.
    Solve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        sdp_tol: f64,
        /// Relative bound improvement below which cut rounds stop.
        #[arg(long, default_value_t = 1e-3)]
        cp_tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_sample: usize,
        #[arg(long, default_value_t = 10_000)]
        max_add: usize,
        /// Seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        node_limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
        /// Where to write the solution file.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write per-round bounds of every node as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Write a planted instance and its ground truth.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_matrix: PathBuf,
        #[arg(long)]
        out_solution: Option<PathBuf>,
    },
    /// Root bounds for a range of k, as CSV.
    Elbow {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k_min: usize,
        #[arg(long)]
        k_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a solution file against a matrix and recompute its objective.
    Verify {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Run the planted benchmark grid.
    Bench {
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Seconds per instance.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long, default_value_t = bench::DEFAULT_SEED)]
        seed: u64,
        /// Only run instances with this noise level.
        #[arg(long)]
        sigma: Option<f64>,
        /// Add a wall-time column (makes the output run-dependent).
        #[arg(long)]
        with_time: bool,
    },
}

fn seconds(t: Option<f64>) -> Result<Option<Duration>, String> {
    match t {
        None => Ok(None),
        Some(s) if s.is_finite() && s >= 0.0 => Ok(Some(Duration::from_secs_f64(s))),
        Some(s) => Err(format!("invalid time limit {s}")),
    }
}

/// One line per relaxation solve: the bound it certified and the incumbent
/// after rounding it.
fn trace_csv(r: &SolveResult) -> String {
    let mut out = format!("# schema_version={}\nnode,parent,depth,round,ub,lb,gap_pct,cuts,sdp_iterations\n", bench::SCHEMA_VERSION);
    for node in &r.trace {
        let parent = node.parent.map_or(String::new(), |p| p.to_string());
        for (i, round) in node.rounds.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.9},{:.9},{:.6},{},{}",
                node.id,
                parent,
                node.depth,
                i,
                round.ub,
                round.lb,
                100.0 * relative_gap(round.lb, round.ub),
                round.cuts,
                round.sdp_iterations
            );
        }
    }
    out
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let err = |e: bicl::Error| e.to_string();
    match cli.command {
        Command::Solve {
            input,
            k,
            eps,
            sdp_tol,
            cp_tol,
            max_sample,
            max_add,
            time_limit,
            node_limit,
            seed,
            format,
            output,
            trace,
        } => {
            let a = load_matrix(&input).map_err(err)?;
            let params = SolverParams {
                eps,
                sdp_tol,
                cp_rel_tol: cp_tol,
                max_sample,
                max_add,
                time_limit: seconds(time_limit)?,
                node_limit,
                seed,
                ..SolverParams::default()
            };
            let r = solve(&a, k, &params).map_err(err)?;
            if let Some(path) = output {
                save_solution(&path, &SolutionFile::new(&r.best, r.lb)).map_err(err)?;
            }
            if let Some(path) = trace {
                write_atomic(&path, trace_csv(&r).as_bytes()).map_err(err)?;
            }
            let time = r.wall_time.as_secs_f64();
            let gap_pct = 100.0 * r.gap;
            let status = r.termination.as_str();
            match format {
                Format::Human => println!(
                    "lb {:.9}  ub {:.9}  gap {:.4}%  nodes {}  cp {}  time {:.2}s  status {}",
                    r.lb, r.ub, gap_pct, r.nodes, r.cp_rounds_root, time, status
                ),
                Format::Csv => {
                    println!("# schema_version={}", bench::SCHEMA_VERSION);
                    println!("lb,ub,gap_pct,nodes,cp,time_s,status");
                    println!(
                        "{:.9},{:.9},{:.6},{},{},{:.3},{}",
                        r.lb, r.ub, gap_pct, r.nodes, r.cp_rounds_root, time, status
                    );
                }
                Format::Json => {
                    let v = serde_json::json!({
                        "schema_version": bench::SCHEMA_VERSION,
                        "lb": r.lb,
                        "ub": r.ub,
                        "gap_pct": gap_pct,
                        "nodes": r.nodes,
                        "cp": r.cp_rounds_root,
                        "time_s": time,
                        "status": status,
                        "row_labels": r.best.row_labels,
                        "col_labels": r.best.col_labels,
                    });
                    println!("{v}");
                }
            }
            Ok(if r.termination == Termination::Optimal && r.gap < eps {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Generate {
            n,
            m,
            k,
            sigma,
            seed,
            out_matrix,
            out_solution,
        } => {
            let spec = PlantedSpec { n, m, k, sigma, seed };
            let (a, truth) = generate_planted(&spec).map_err(err)?;
            save_matrix(&out_matrix, &a).map_err(err)?;
            if let Some(path) = out_solution {
                let value = objective(&a, &truth).map_err(err)?;
                save_solution(&path, &SolutionFile::new(&truth, value)).map_err(err)?;
            }
            eprintln!("wrote {}", spec.name());
            Ok(ExitCode::SUCCESS)
        }
        Command::Elbow { input, k_min, k_max, seed } => {
            let a = load_matrix(&input).map_err(err)?;
            let params = SolverParams { seed, ..SolverParams::default() };
            let rows = elbow_scan(&a, k_min, k_max, &params).map_err(err)?;
            println!("k,lb,ub");
            for r in rows {
                println!("{},{:.9},{:.9}", r.k, r.lb, r.ub);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { matrix, solution } => {
            let a = load_matrix(&matrix).map_err(err)?;
            let s = load_solution(&solution).map_err(err)?;
            let b = s.biclustering();
            if let Err(violations) = validate(&b, a.n(), a.m(), s.k) {
                for v in &violations {
                    eprintln!("invalid: {v}");
                }
                return Ok(ExitCode::from(1));
            }
            let value = objective(&a, &b).map_err(err)?;
            println!("objective {value:.12}  stored {:.12}  diff {:.3e}", s.objective, (value - s.objective).abs());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            out_csv,
            time_limit,
            seed,
            sigma,
            with_time,
        } => {
            let params = SolverParams {
                time_limit: seconds(time_limit)?,
                ..SolverParams::default()
            };
            let specs: Vec<PlantedSpec> = bench::grid(seed)
                .into_iter()
                .filter(|s| sigma.is_none_or(|x| (s.sigma - x).abs() < 1e-12))
                .collect();
            let rows = bench::run(&specs, &params, |r| {
                eprintln!(
                    "{:<14} cp {:>2}  nodes {:>3}  gap {:.4}%  {:.2}s  {}",
                    r.spec.name(),
                    r.cp,
                    r.nodes,
                    r.gap_pct,
                    r.time.as_secs_f64(),
                    r.status
                );
            })
            .map_err(err)?;
            let csv = bench::to_csv(&rows, with_time);
            match out_csv {
                Some(path) => write_atomic(&path, csv.as_bytes()).map_err(err)?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
