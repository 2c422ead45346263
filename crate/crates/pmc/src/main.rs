//! Command-line front-end. Exit codes: 0 the property holds (or the
//! command succeeded), 1 it does not hold, 2 usage or input error, 3 a
//! resource cap was exceeded. Stdout carries the machine-readable result;
//! everything else goes to stderr.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pmc::engine::{self, EngineError, Policy};
use pmc::fgraph::{self, FormulaGraph};
use pmc::lts::{self, Label, Lts};
use pmc::mucalc::{parse_formula, Formula};
use pmc::network::{self, Network};
use pmc::simplify::{self, SimplifyError};

#[derive(Parser)]
#[command(name = "pmc", version, about = "Compositional mu-calculus checker for networks of LTSs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Order {
    Smart,
    Fixed,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a formula on a network; prints TRUE or FALSE.
    Check {
        /// Network file (.net).
        #[arg(long)]
        net: PathBuf,
        /// Formula file (.mcl).
        #[arg(long)]
        formula: PathBuf,
        /// Build the flat product and evaluate on it directly.
        #[arg(long, conflicts_with = "partial")]
        global: bool,
        /// Quotient the formula component by component (the default).
        #[arg(long)]
        partial: bool,
        /// Which component the partial route folds in next.
        #[arg(long, value_enum, default_value_t = Order::Smart)]
        order: Order,
        /// Also print one size row per quotient step.
        #[arg(long)]
        verbose: bool,
    },
    /// Write the flat product of a network as an .aut file.
    Product {
        #[arg(long)]
        net: PathBuf,
        /// Output path.
        #[arg(short)]
        o: PathBuf,
    },
    /// Quotient a formula by one component and write the graph as .aut.
    Quotient {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        formula: PathBuf,
        /// 1-based component index.
        #[arg(long)]
        component: usize,
        /// Output path.
        #[arg(short)]
        o: PathBuf,
    },
    /// Simplify a formula graph stored as .aut.
    Simplify {
        #[arg(long)]
        graph: PathBuf,
        /// Output path.
        #[arg(short)]
        o: PathBuf,
        /// Print the per-step size table.
        #[arg(long)]
        report: bool,
    },
    /// Reduce an LTS and print it as .aut on stdout.
    Reduce {
        #[arg(long)]
        aut: PathBuf,
        /// Reduce modulo strong bisimilarity.
        #[arg(long, conflicts_with = "tau_a")]
        strong: bool,
        /// Reduce modulo tau*.a, treating the listed labels as internal.
        #[arg(long = "tau-a", value_name = "l1,l2,...")]
        tau_a: Option<String>,
    },
    /// Print the sub-network that models one component's environment.
    Subnet {
        #[arg(long)]
        net: PathBuf,
        /// 1-based component index.
        #[arg(long)]
        component: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure { code: 2, message: message.into() }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Failure {
        let code = match e {
            EngineError::ProductTooLarge(_) => 3,
            EngineError::Simplify(SimplifyError::Diverged(_)) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<SimplifyError> for Failure {
    fn from(e: SimplifyError) -> Failure {
        let code = match e {
            SimplifyError::Diverged(_) => 3,
            SimplifyError::Alternation(_) => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_network(path: &Path) -> Result<Network, Failure> {
    network::load_net(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_formula(path: &Path) -> Result<Formula, Failure> {
    parse_formula(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_lts(path: &Path) -> Result<Lts, Failure> {
    lts::parse_aut(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Converts a 1-based CLI component index.
fn component_index(i: usize, n: &Network) -> Result<usize, Failure> {
    if i == 0 || i > n.size() {
        return Err(Failure::usage(format!(
            "component index {i} out of range 1..={}",
            n.size()
        )));
    }
    Ok(i - 1)
}

fn step_table(steps: &[engine::Step]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>6} {:>12}", "step", "states", "transitions");
    for s in steps {
        let _ = writeln!(
            out,
            "{:<24} {:>6} {:>12}",
            format!("quotient {}", s.component),
            s.after_quotient.0,
            s.after_quotient.1
        );
        let _ = writeln!(
            out,
            "{:<24} {:>6} {:>12}",
            "simplify", s.after_simplify.0, s.after_simplify.1
        );
    }
    out
}

fn run(cmd: Cmd) -> Result<u8, Failure> {
    match cmd {
        Cmd::Check { net, formula, global, order, verbose, .. } => {
            let n = load_network(&net)?;
            let f = load_formula(&formula)?;
            let value = if global {
                engine::check_global(&n, &f, engine::DEFAULT_CAP)?
            } else {
                let policy = match order {
                    Order::Smart => Policy::Smart,
                    Order::Fixed => Policy::Fixed,
                };
                let verdict = engine::check_partial(&n, &f, policy)?;
                println!("{}", if verdict.value { "TRUE" } else { "FALSE" });
                if verbose {
                    print!("{}", step_table(&verdict.steps));
                    if verdict.stopped_early {
                        println!("stopped early");
                    }
                }
                return Ok(u8::from(!verdict.value));
            };
            println!("{}", if value { "TRUE" } else { "FALSE" });
            Ok(u8::from(!value))
        }
        Cmd::Product { net, o } => {
            let n = load_network(&net)?;
            let flat = network::product_capped(&n, engine::DEFAULT_CAP)
                .ok_or_else(|| EngineError::ProductTooLarge(engine::DEFAULT_CAP))?;
            write_file(&o, &lts::write_aut(&flat))?;
            Ok(0)
        }
        Cmd::Quotient { net, formula, component, o } => {
            let n = load_network(&net)?;
            let f = load_formula(&formula)?;
            let i = component_index(component, &n)?;
            let g = engine::prepare(&n, &f)?;
            let quotiented = if n.size() == 1 {
                let qnet = fgraph::build_quotient_network(&g, &n, i)
                    .map_err(EngineError::from)?;
                network::product(&qnet)
            } else {
                let (q, _) = fgraph::quotient(&g, &n, i).map_err(EngineError::from)?;
                q.into_lts()
            };
            write_file(&o, &lts::write_aut(&quotiented))?;
            Ok(0)
        }
        Cmd::Simplify { graph, o, report } => {
            let g = FormulaGraph::new(load_lts(&graph)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", graph.display())))?;
            let (out, rep) = simplify::simplify_pipeline(&g)?;
            if report {
                print!("{}", rep.table());
            }
            write_file(&o, &lts::write_aut(out.lts()))?;
            Ok(0)
        }
        Cmd::Reduce { aut, strong, tau_a } => {
            let l = load_lts(&aut)?;
            let reduced = match (strong, tau_a) {
                (true, None) => lts::strong_bisim_reduce(&l),
                (false, Some(list)) => {
                    let mut internal: BTreeSet<Label> = BTreeSet::new();
                    for part in list.split(',').map(str::trim) {
                        if part.is_empty() || part == "-" {
                            return Err(Failure::usage(format!(
                                "--tau-a got the invalid label {part:?}"
                            )));
                        }
                        internal.insert(Label::new(part));
                    }
                    if internal.is_empty() {
                        return Err(Failure::usage("--tau-a needs at least one label"));
                    }
                    lts::tau_star_a_reduce(&l, &internal)
                }
                _ => return Err(Failure::usage("pick exactly one of --strong or --tau-a")),
            };
            print!("{}", lts::write_aut(&reduced));
            Ok(0)
        }
        Cmd::Subnet { net, component } => {
            let n = load_network(&net)?;
            let i = component_index(component, &n)?;
            let (sub, _) = network::extract_subnetwork(&n, i)
                .map_err(|e| Failure::usage(e.to_string()))?;
            print!("{}", network::write_net(&sub));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("pmc: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
