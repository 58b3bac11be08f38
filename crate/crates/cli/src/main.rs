mod audit;
mod builder;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gdnn_core::admissibility::{Calculus, CountOptions, Enumeration, Mode};
use gdnn_core::binprod::{run_binprod_experiment, ArchKind, TrainConfig};
use gdnn_core::named::{shared, NAMES};
use gdnn_core::{Architecture, ArchitectureSpec, Error};

#[derive(Parser)]
#[command(name = "gdnn", version, about = "Admissible invariant ReLU networks over signed permutation groups")]
struct Cli {
    /// Worker threads for counting and training (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the command's output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Named groups.
    #[command(subcommand)]
    Groups(GroupsCmd),
    /// Pair classes of a group with their canonical ids.
    Pairs {
        #[arg(long)]
        group: String,
    },
    /// Admissible and total architecture counts per depth, as CSV.
    Count {
        #[arg(long)]
        group: String,
        #[arg(long, default_value = "gdnn")]
        mode: Mode,
        #[arg(long, default_value_t = 9)]
        max_depth: usize,
        #[arg(long, default_value = "weighted", value_parser = parse_enumeration)]
        enumeration: Enumeration,
    },
    /// Weight-sharing pattern of one pair class against the input representation, as JSON.
    Pattern {
        #[arg(long)]
        group: String,
        #[arg(long)]
        pair: usize,
    },
    /// Validate a spec file, or build one layer by layer from stdin.
    Build(builder::BuildArgs),
    /// Training experiments.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Property checks on a compiled spec; exits 1 when any check fails.
    Audit(audit::AuditArgs),
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Idle time in seconds after which sessions are dropped.
        #[arg(long, default_value_t = 24 * 3600)]
        session_ttl: u64,
    },
}

#[derive(Subcommand)]
enum GroupsCmd {
    /// Name, order, degree and subgroup count of every named group, as CSV.
    List,
    /// Details of one group, as JSON.
    Show { name: String },
}

#[derive(Subcommand)]
enum TrainCmd {
    /// The binary product task; prints one CSV row per architecture.
    Binprod(BinprodArgs),
}

#[derive(Args)]
struct BinprodArgs {
    /// Comma-separated architectures, or `all`.
    #[arg(long, default_value = "all")]
    arch: String,
    #[arg(long, default_value_t = 24)]
    seeds: u64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Input width (a power of two).
    #[arg(long, default_value_t = 16)]
    m: usize,
    /// Also print every seed's evaluation history as JSON lines on stderr.
    #[arg(long)]
    verbose: bool,
}

fn parse_enumeration(s: &str) -> Result<Enumeration, String> {
    match s {
        "weighted" => Ok(Enumeration::Weighted),
        "classes" => Ok(Enumeration::Classes),
        "pairs" => Ok(Enumeration::Pairs),
        o => Err(format!("unknown enumeration {o} (weighted, classes, pairs)")),
    }
}

/// A failure with its exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = if matches!(e, Error::UnknownName(_)) { 2 } else { 1 };
        Failure { code, message: format!("{e:?}: {e}") }
    }
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Failure {
        Failure { code, message: message.into() }
    }
}

/// Output text and exit code.
pub type CmdResult = Result<(String, u8), Failure>;

pub fn done(text: String) -> CmdResult {
    Ok((text, 0))
}

pub fn calc(group: &str) -> Result<Calculus, Failure> {
    Ok(Calculus::new(shared(group)?))
}

fn groups_list() -> CmdResult {
    let mut out = String::from("name,order,degree,subgroups\n");
    for name in NAMES {
        let g = shared(name)?;
        out.push_str(&format!("{},{},{},{}\n", g.name(), g.order(), g.degree(), g.subgroups().len()));
    }
    done(out)
}

fn groups_show(name: &str) -> CmdResult {
    let g = shared(name)?;
    let v = json!({
        "name": g.name(),
        "order": g.order(),
        "degree": g.degree(),
        "generators": g
            .generators()
            .iter()
            .map(|&x| {
                let e = g.element(x);
                json!({
                    "images": (0..e.degree()).map(|i| e.image(i)).collect::<Vec<_>>(),
                    "signs": (0..e.degree()).map(|i| e.sign(i)).collect::<Vec<_>>(),
                })
            })
            .collect::<Vec<_>>(),
        "subgroups": g.subgroups().len(),
        "pair_classes": g.pair_classes().len(),
    });
    done(serde_json::to_string_pretty(&v).unwrap() + "\n")
}

fn pairs(group: &str) -> CmdResult {
    let g = shared(group)?;
    let mut out = String::from("id,h_order,k_order,degree,type,weight\n");
    for (i, c) in g.pair_classes().iter().enumerate() {
        let m = c.k_multiplicity();
        out.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            c.rep.h.len(),
            c.rep.k.len(),
            g.order() / c.rep.h.len(),
            c.rep.index(),
            m * m
        ));
    }
    done(out)
}

fn count(group: &str, mode: Mode, max_depth: usize, enumeration: Enumeration) -> CmdResult {
    if max_depth < 2 {
        return Err(Failure::new(2, "--max-depth must be at least 2"));
    }
    let c = calc(group)?;
    let mut opts = CountOptions::new(mode, max_depth);
    opts.enumeration = enumeration;
    let table = c.count(opts)?;
    c.persist()?;
    done(table.to_csv())
}

fn pattern(group: &str, pair: usize) -> CmdResult {
    let g = shared(group)?;
    let class = g.pair_classes().get(pair).ok_or_else(|| Failure::new(2, format!("unknown pair id {pair}")))?;
    let rep = gdnn_core::reps::Irrep::new(&g, class.rep)?;
    let gens = g.generators();
    let rho: Vec<_> = gens.iter().map(|&x| rep.evaluate(x).clone()).collect();
    let pi: Vec<_> = gens.iter().map(|&x| g.element(x).clone()).collect();
    let basis = gdnn_core::basis::build_basis(&rho, &pi, rep.degree(), g.degree())?;
    let triplets: Vec<[i64; 4]> = basis.entries().map(|(r, c, b, s)| [r as i64, c as i64, b as i64, i64::from(s)]).collect();
    let v = json!({
        "id": pair,
        "h": class.rep.h.to_vec(),
        "k": class.rep.k.to_vec(),
        "degree": rep.degree(),
        "type": class.rep.index(),
        "rows": rep.degree(),
        "cols": g.degree(),
        "bases": basis.len(),
        "triplets": triplets,
    });
    done(serde_json::to_string(&v).unwrap() + "\n")
}

fn train_binprod(a: &BinprodArgs) -> CmdResult {
    let kinds: Vec<ArchKind> = if a.arch == "all" {
        ArchKind::ALL.to_vec()
    } else {
        a.arch.split(',').map(|s| s.trim().parse::<ArchKind>()).collect::<Result<_, _>>().map_err(|e: gdnn_core::Error| Failure::new(2, e.to_string()))?
    };
    let mut cfg = TrainConfig { epochs: a.epochs, batch_size: a.batch_size, ..Default::default() };
    cfg.adam.lr = a.lr;
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let (rows, csv) = run_binprod_experiment(a.m, &cfg, &kinds, &seeds)?;
    let gap = rows.iter().flat_map(|r| &r.runs).fold(0.0f64, |m, r| m.max(r.max_gap()));
    eprintln!("max |train - val| loss gap over all evaluations: {gap:.3e}");
    if a.verbose {
        for r in rows.iter().flat_map(|r| r.runs.iter().map(move |s| (&r.architecture, s))) {
            eprintln!("{}", json!({ "architecture": r.0, "seed": r.1.seed, "steps": r.1.steps, "history": r.1.history }));
        }
    }
    done(csv)
}

fn serve(port: u16, ttl: u64, threads: Option<usize>) -> CmdResult {
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    rt.enable_all();
    if let Some(n) = threads {
        rt.worker_threads(n.max(1));
    }
    let rt = rt.build().map_err(|e| Failure::new(1, e.to_string()))?;
    let mut config = gdnn_service::Config { session_ttl: std::time::Duration::from_secs(ttl), ..Default::default() };
    if let Some(n) = threads {
        config.count_workers = n.max(1);
    }
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
    eprintln!("listening on http://{addr}");
    rt.block_on(gdnn_service::serve(addr, config)).map_err(|e| Failure::new(1, e.to_string()))?;
    done(String::new())
}

/// Parses and resolves a spec file.
pub fn load_spec(path: &PathBuf) -> Result<(ArchitectureSpec, Architecture), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
    let spec: ArchitectureSpec =
        serde_json::from_str(&text).map_err(|e| Failure::new(1, format!("malformed spec: {e}")))?;
    let arch = Architecture::resolve(&spec)?;
    Ok((spec, arch))
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Groups(GroupsCmd::List) => groups_list(),
        Command::Groups(GroupsCmd::Show { name }) => groups_show(&name),
        Command::Pairs { group } => pairs(&group),
        Command::Count { group, mode, max_depth, enumeration } => count(&group, mode, max_depth, enumeration),
        Command::Pattern { group, pair } => pattern(&group, pair),
        Command::Build(args) => builder::run(&args),
        Command::Train(TrainCmd::Binprod(args)) => train_binprod(&args),
        Command::Audit(args) => audit::run(&args),
        Command::Serve { port, session_ttl } => serve(port, session_ttl, cli.threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: {e}");
        }
    }
    let out = cli.out.clone();
    let (text, code) = match run(cli) {
        Ok(r) => r,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return ExitCode::from(f.code);
        }
    };
    let written = match &out {
        Some(path) => std::fs::write(path, &text),
        None => std::io::stdout().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
