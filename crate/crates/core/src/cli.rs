//! Command-line front end.
//!
//! [`run`] takes the argument list and explicit streams so it can be driven from tests.

use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::clusters::find_common_clusters;
use crate::forest::{apply_sequence, CherryPickingSequence, SearchState};
use crate::gen::{generate_instance, instance_text, GenParams};
use crate::network::{displays, Display};
use crate::newick::{parse_instance, parse_network, write_network};
use crate::oracle::brute_force_htc;
use crate::search::{solve, SolveError, SolveOptions};
use crate::tree::Instance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NO_SOLUTION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_TIME_LIMIT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "treechild", version, about = "Exact tree-child hybridization number solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Find a minimum tree-child network for the trees in INPUT.
    Solve {
        #[command(flatten)]
        solve: SolveArgs,
        /// Newick file, one tree per line, or '-' for standard input.
        #[arg(default_value = "-")]
        input: String,
        /// Write the result here instead of standard output.
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Write random trees displayed by a random tree-child network.
    Generate {
        /// Number of leaves.
        #[arg(short = 'n', long)]
        taxa: usize,
        /// Target number of reticulations.
        #[arg(short = 'k', long)]
        reticulations: usize,
        /// Maximum number of distinct trees.
        #[arg(short = 't', long)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the instance here instead of standard output.
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Check a sequence or a network against the trees in INPUT.
    Verify {
        #[arg(default_value = "-")]
        input: String,
        /// File with one "(x,y)" per line.
        #[arg(long, conflicts_with = "network", required_unless_present = "network")]
        sequence: Option<PathBuf>,
        /// File with one eNewick network.
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Run the exhaustive reference search.
    Oracle {
        #[arg(default_value = "-")]
        input: String,
        #[arg(long, default_value_t = 6)]
        max_k: u32,
    },
    /// Print instance statistics.
    Stats {
        #[arg(default_value = "-")]
        input: String,
    },
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    /// Worker threads.
    #[arg(short = 'p', long, default_value_t = 1)]
    pub workers: usize,
    /// Search iterations between checks for work requests and the deadline.
    #[arg(short = 'w', long, default_value_t = 100)]
    pub poll_interval: u64,
    /// Disable redundant-branch elimination.
    #[arg(long)]
    pub no_rbe: bool,
    /// Disable cluster reduction.
    #[arg(long)]
    pub no_clusters: bool,
    /// Give up above this weight (exit status 1).
    #[arg(long)]
    pub max_k: Option<u32>,
    /// Wall-clock limit in seconds (exit status 3).
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Accepted for symmetry with generate; the solver is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SolveArgs {
    pub fn options(&self) -> Result<SolveOptions, String> {
        if self.workers == 0 {
            return Err("--workers must be at least 1".into());
        }
        if self.poll_interval == 0 {
            return Err("--poll-interval must be at least 1".into());
        }
        let time_limit = match self.time_limit {
            None => None,
            Some(s) if s >= 0.0 => {
                Some(Duration::try_from_secs_f64(s).map_err(|e| format!("invalid --time-limit {s}: {e}"))?)
            }
            Some(s) => return Err(format!("invalid --time-limit {s}")),
        };
        Ok(SolveOptions {
            max_k: self.max_k,
            use_rbe: !self.no_rbe,
            use_clusters: !self.no_clusters,
            workers: self.workers,
            poll_interval: self.poll_interval,
            time_limit,
            ..SolveOptions::default()
        })
    }
}

struct Io<'a> {
    stdin: &'a mut dyn Read,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

struct Failure(i32, String);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(EXIT_INPUT, e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

/// Parse `args` (including the program name) and execute the command.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ =
                if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let mut io = Io { stdin, out, err };
    match execute(cli.command, &mut io) {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            let _ = writeln!(io.err, "{msg}");
            code
        }
    }
}

fn read_source(path: &str, stdin: &mut dyn Read) -> Result<String, Failure> {
    if path == "-" {
        let mut s = String::new();
        stdin.read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| Failure(EXIT_INPUT, format!("{path}: {e}")))
    }
}

fn read_instance(path: &str, stdin: &mut dyn Read) -> Result<Instance, Failure> {
    let text = read_source(path, stdin)?;
    parse_instance(&text).map_err(|e| Failure(EXIT_INPUT, format!("{path}: {e}")))
}

fn emit(text: &str, output: Option<&PathBuf>, out: &mut dyn Write) -> Result<(), Failure> {
    match output {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", path.display())))
        }
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn execute(command: Command, io: &mut Io) -> CmdResult {
    match command {
        Command::Solve { solve: args, input, output } => {
            let opts = args.options().map_err(|m| Failure(EXIT_INPUT, m))?;
            let inst = read_instance(&input, io.stdin)?;
            let sol = match solve(&inst, &opts) {
                Ok(sol) => sol,
                Err(e @ SolveError::NoSolution(_)) => return Err(Failure(EXIT_NO_SOLUTION, e.to_string())),
                Err(e @ SolveError::TimeLimit) => return Err(Failure(EXIT_TIME_LIMIT, e.to_string())),
                Err(e) => return Err(Failure(EXIT_NO_SOLUTION, e.to_string())),
            };
            log::info!(
                "recursive calls {}, pruned by redundancy {}, transfers {}, time {:?}",
                sol.stats.recursive_calls,
                sol.stats.branches_pruned_rbe,
                sol.stats.work_transfers,
                sol.stats.wall_time
            );
            let mut text = format!("h_tc: {}\n", sol.weight);
            for line in sol.sequence.to_lines(&inst.taxa) {
                text.push_str(&line);
                text.push('\n');
            }
            text.push_str(&format!("network: {}\n", write_network(&sol.network, &inst.taxa)));
            emit(&text, output.as_ref(), io.out)?;
            Ok(EXIT_OK)
        }
        Command::Generate { taxa, reticulations, trees, seed, output } => {
            let params = GenParams { n: taxa, k: reticulations, t: trees, seed };
            let (inst, net) = generate_instance(&params).map_err(|e| Failure(EXIT_INPUT, e.to_string()))?;
            emit(&instance_text(&inst, net.reticulation_number()), output.as_ref(), io.out)?;
            Ok(EXIT_OK)
        }
        Command::Verify { input, sequence, network } => {
            let inst = read_instance(&input, io.stdin)?;
            if let Some(path) = sequence {
                let text = read_source(&path.to_string_lossy(), io.stdin)?;
                let seq = CherryPickingSequence::parse(&text, &inst.taxa)
                    .map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", path.display())))?;
                let report = apply_sequence(&inst, &seq);
                if report.is_valid_tree_child_cps() {
                    writeln!(io.out, "valid tree-child sequence, weight {}", report.weight)?;
                    Ok(EXIT_OK)
                } else {
                    let why = report.problem.unwrap_or_else(|| "not tree-child".into());
                    Err(Failure(EXIT_NO_SOLUTION, format!("invalid sequence: {why}")))
                }
            } else {
                let path = network.expect("clap requires one of the two");
                let text = read_source(&path.to_string_lossy(), io.stdin)?;
                let net = parse_network(&text, &inst.taxa)
                    .map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", path.display())))?;
                writeln!(
                    io.out,
                    "reticulation number {}, tree-child {}",
                    net.reticulation_number(),
                    net.is_tree_child()
                )?;
                let mut code = EXIT_OK;
                for (i, tree) in inst.trees.iter().enumerate() {
                    let verdict = match displays(&net, tree) {
                        Display::Displayed => "displayed".to_string(),
                        Display::NotDisplayed => {
                            code = EXIT_NO_SOLUTION;
                            "not displayed".to_string()
                        }
                        Display::Unverifiable { combinations } => {
                            code = EXIT_NO_SOLUTION;
                            format!("unverifiable ({combinations} combinations)")
                        }
                    };
                    writeln!(io.out, "tree {}: {verdict}", i + 1)?;
                }
                Ok(code)
            }
        }
        Command::Oracle { input, max_k } => {
            let inst = read_instance(&input, io.stdin)?;
            let r = brute_force_htc(&inst, max_k);
            match (r.min_weight, r.witness) {
                (Some(w), Some(seq)) => {
                    writeln!(io.out, "h_tc: {w}")?;
                    for line in seq.to_lines(&inst.taxa) {
                        writeln!(io.out, "{line}")?;
                    }
                    writeln!(io.err, "explored {}", r.explored)?;
                    Ok(EXIT_OK)
                }
                _ => Err(Failure(EXIT_NO_SOLUTION, format!("no tree-child solution with k <= {max_k}"))),
            }
        }
        Command::Stats { input } => {
            let inst = read_instance(&input, io.stdin)?;
            let state = SearchState::new(&inst);
            let sizes = find_common_clusters(&inst).subinstance_sizes();
            writeln!(io.out, "n: {}", inst.num_taxa())?;
            writeln!(io.out, "t: {}", inst.num_trees())?;
            writeln!(io.out, "unique cherries: {}", state.num_unique_cherries())?;
            writeln!(io.out, "trivial cherries: {}", state.trivial_cherries().len())?;
            let sizes: Vec<String> = sizes.iter().map(usize::to_string).collect();
            writeln!(io.out, "cluster sizes: {}", sizes.join(" "))?;
            Ok(EXIT_OK)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str], stdin: &str) -> (i32, String, String) {
        let mut input = stdin.as_bytes();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let argv = std::iter::once("treechild").chain(args.iter().copied());
        let code = run(argv, &mut input, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    const FOUR_TREES: &str =
        "(((a,b),e),(c,d));\n(((a,b),(c,e)),d);\n((a,(e,(b,c))),d);\n((a,(e,b)),(c,d));\n";

    #[test]
    fn solve_from_stdin() {
        let (code, out, _) = call(&["solve"], FOUR_TREES);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "h_tc: 3");
        assert!(lines.last().unwrap().starts_with("network: "));
        assert!(lines[lines.len() - 2].ends_with(",-)"));
    }

    #[test]
    fn max_k_failure() {
        let (code, out, err) = call(&["solve", "--max-k", "2"], FOUR_TREES);
        assert_eq!(code, 1);
        assert!(out.is_empty());
        assert_eq!(err.trim(), "no tree-child solution with k <= 2");
    }

    #[test]
    fn bad_input() {
        assert_eq!(call(&["solve"], "((a,b),c").0, 2);
        assert_eq!(call(&["solve", "--bogus"], FOUR_TREES).0, 2);
        assert_eq!(call(&["solve", "-p", "0"], FOUR_TREES).0, 2);
    }

    #[test]
    fn stats_lines() {
        let (code, out, _) = call(&["stats"], "(((a,b),c),(d,e)); (((a,c),b),(d,e));");
        assert_eq!(code, 0);
        assert!(out.starts_with("n: 5\nt: 2\n"));
    }
}
