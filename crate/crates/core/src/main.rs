use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use qpe_core::datasets::{
    self, load_csv, load_pairs, parse_dag_csv, read_bundle, write_bundle, Effect, Family, GenConfig, GraphModel,
};
use qpe_core::{
    decide_direction, evaluate_corpus, fico_order, order_divergence, selftest, BasisSpec, DirectionOptions,
    FicoOptions, SteinOptions,
};

#[derive(Parser, Debug)]
#[command(name = "qpe", version, about = "Cause-effect direction and causal ordering from quantile partial effects")]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = "QPE_OUT_DIR", default_value = "qpe-out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset bundle (data.csv, dag.csv, config.txt).
    Gen(GenArgs),
    /// Decide the causal direction of one pair or a pair corpus.
    Direction(DirectionArgs),
    /// Estimate a causal order with Fisher-information leaf removal.
    Order(OrderArgs),
    /// Run the built-in estimator checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value = "lingam")]
    family: Family,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value = "er")]
    graph: GraphModel,
    #[arg(long, default_value_t = 4.0)]
    edge_factor: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.25)]
    beta: f64,
    /// Skip per-variable standardization during generation.
    #[arg(long)]
    no_iscm: bool,
}

#[derive(Args, Debug)]
struct DirectionArgs {
    /// Pair corpus: a directory with manifest.csv, or the manifest itself.
    #[arg(long, conflicts_with_all = ["csv", "cols", "truth"], required_unless_present = "csv")]
    pairs: Option<PathBuf>,
    /// A single CSV file holding the pair.
    #[arg(long, requires = "cols")]
    csv: Option<PathBuf>,
    /// Two column names or zero-based indices, cause candidate first.
    #[arg(long, value_delimiter = ',')]
    cols: Vec<String>,
    /// Ground truth for a single pair: `x->y` or `y->x`.
    #[arg(long)]
    truth: Option<String>,
    #[arg(long, default_value = "affine")]
    basis: BasisSpec,
    /// Pair ids to leave out of a corpus.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
}

#[derive(Args, Debug)]
struct OrderArgs {
    /// Bundle directory written by `gen`.
    #[arg(long, required_unless_present = "csv", conflicts_with = "csv")]
    bundle: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Ground-truth adjacency CSV for `--csv` input.
    #[arg(long, requires = "csv")]
    dag: Option<PathBuf>,
    /// Ignore any ground truth and emit the order only.
    #[arg(long)]
    no_truth: bool,
    /// Write the per-step Fisher information trace.
    #[arg(long)]
    trace: bool,
    /// Standardize all columns once before ordering.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Run only these suites (repeatable).
    #[arg(long)]
    suite: Vec<String>,
    /// Append a failing suite; exercises the failure path.
    #[arg(long, hide = true)]
    inject_failure: bool,
}

type CmdResult = Result<(), String>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            if !usage {
                return ExitCode::SUCCESS;
            }
            println!("status=error");
            return ExitCode::from(2);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    let started = Instant::now();
    let name = match cli.command {
        Command::Gen(_) => "gen",
        Command::Direction(_) => "direction",
        Command::Order(_) => "order",
        Command::Selftest(_) => "selftest",
    };
    let result = fs::create_dir_all(&cli.out)
        .map_err(|e| format!("cannot create {}: {e}", cli.out.display()))
        .and_then(|_| match &cli.command {
            Command::Gen(a) => cmd_gen(&cli, a),
            Command::Direction(a) => cmd_direction(&cli, a),
            Command::Order(a) => cmd_order(&cli, a),
            Command::Selftest(a) => cmd_selftest(&cli, a),
        });
    if cli.verbose > 0 {
        eprintln!("{name} finished in {:.3}s", started.elapsed().as_secs_f64());
    }
    match result {
        Ok(()) => {
            println!("status=ok");
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            println!("status=error");
            ExitCode::FAILURE
        }
    }
}

fn write(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> CmdResult {
    let cfg = GenConfig {
        family: a.family,
        graph: a.graph,
        d: a.d,
        n: a.n,
        edge_factor: a.edge_factor,
        alpha: a.alpha,
        beta: a.beta,
        iscm: !a.no_iscm,
        seed: cli.seed,
    };
    let (samples, dag) = datasets::generate(&cfg).map_err(|e| e.to_string())?;
    write_bundle(&cli.out, &samples, Some(&dag), &cfg.to_key_values()).map_err(|e| e.to_string())?;
    println!("family={} d={} n={} edges={}", cfg.family, cfg.d, cfg.n, dag.edge_count());
    println!("bundle={}", cli.out.display());
    Ok(())
}

fn parse_truth(s: &str) -> Result<Effect, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "x->y" | "xy" | "1" => Ok(Effect::Y),
        "y->x" | "yx" | "-1" => Ok(Effect::X),
        other => Err(format!("truth must be `x->y` or `y->x`, got `{other}`")),
    }
}

fn resolve_column(names: &[String], key: &str) -> Result<usize, String> {
    if let Some(i) = names.iter().position(|n| n == key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => Err(format!("no column `{key}` among {}", names.join(", "))),
    }
}

fn summary_csv(spec: &BasisSpec, pairs: usize, decided: usize, accuracy: Option<f64>, audrc: Option<f64>) -> String {
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
    format!(
        "basis,k,pairs,decided,accuracy,audrc\n{spec},{},{pairs},{decided},{},{}\n",
        spec.k(),
        na(accuracy),
        na(audrc)
    )
}

fn cmd_direction(cli: &Cli, a: &DirectionArgs) -> CmdResult {
    a.basis.validate().map_err(|e| e.to_string())?;
    let opts = DirectionOptions { seed: cli.seed, ..Default::default() };
    let decisions_path = cli.out.join("decisions.csv");
    let summary_path = cli.out.join("direction_summary.csv");
    if let Some(dir) = &a.pairs {
        let corpus = load_pairs(dir, &a.exclude).map_err(|e| e.to_string())?;
        let report = evaluate_corpus(&corpus, &a.basis, &opts).map_err(|e| e.to_string())?;
        write(&decisions_path, &report.to_csv())?;
        let decided = report.outcomes.len() - report.undecided().count();
        let summary = summary_csv(&a.basis, report.outcomes.len(), decided, report.accuracy, report.audrc);
        write(&summary_path, &summary)?;
        for o in report.undecided() {
            if let Err(msg) = &o.decision {
                eprintln!("warning: pair {} undecided: {msg}", o.id);
            }
        }
        print_table(&summary);
        return Ok(());
    }
    let path = a.csv.as_ref().expect("clap requires --csv or --pairs");
    if a.cols.len() != 2 {
        return Err(format!("--cols takes exactly two columns, got {}", a.cols.len()));
    }
    let truth = a.truth.as_deref().map(parse_truth).transpose()?;
    let samples = load_csv(path).map_err(|e| e.to_string())?;
    let cols = a
        .cols
        .iter()
        .map(|c| resolve_column(samples.names(), c))
        .collect::<Result<Vec<_>, _>>()?;
    let pair = samples.select(&cols).map_err(|e| e.to_string())?;
    let id = path.file_stem().map_or_else(|| "pair".to_string(), |s| s.to_string_lossy().into_owned());
    let outcome = decide_direction(&pair, &a.basis, &opts);
    let mut csv = String::from("pair_id,eps_xy,eps_yx,decision,margin,truth,correct\n");
    let truth_s = truth.map_or_else(|| "NA".to_string(), |t| t.to_string());
    let (decided, accuracy) = match &outcome {
        Ok(d) => {
            let correct = truth.map(|t| t == d.effect);
            let _ = writeln!(
                csv,
                "{id},{},{},{},{},{truth_s},{}",
                d.eps_xy,
                d.eps_yx,
                d.effect,
                d.margin,
                correct.map_or_else(|| "NA".to_string(), |c| c.to_string())
            );
            let verdict = correct.map_or_else(String::new, |c| format!(" correct={c}"));
            println!(
                "{id}: {} -> {} eps_xy={:.6} eps_yx={:.6} margin={:.6}{verdict}",
                pair.names()[0],
                pair.names()[1],
                d.eps_xy,
                d.eps_yx,
                d.margin
            );
            println!("decision={}", d.effect);
            (1, correct.map(|c| if c { 1.0 } else { 0.0 }))
        }
        Err(e) => {
            let _ = writeln!(csv, "{id},NA,NA,undecided,NA,{truth_s},NA");
            eprintln!("warning: pair {id} undecided: {e}");
            (0, None)
        }
    };
    write(&decisions_path, &csv)?;
    let summary = summary_csv(&a.basis, 1, decided, accuracy, accuracy);
    write(&summary_path, &summary)?;
    print_table(&summary);
    Ok(())
}

/// Prints a two-row CSV as aligned `key value` lines.
fn print_table(csv: &str) {
    let mut lines = csv.lines();
    let (Some(head), Some(row)) = (lines.next(), lines.next()) else {
        return;
    };
    let keys: Vec<&str> = head.split(',').collect();
    let width = keys.iter().map(|k| k.len()).max().unwrap_or(0);
    for (k, v) in keys.iter().zip(row.split(',')) {
        println!("{k:<width$}  {v}");
    }
}

fn cmd_order(cli: &Cli, a: &OrderArgs) -> CmdResult {
    let (samples, dag) = if let Some(dir) = &a.bundle {
        let b = read_bundle(dir).map_err(|e| e.to_string())?;
        (b.samples, b.dag)
    } else {
        let path = a.csv.as_ref().expect("clap requires --csv or --bundle");
        let samples = load_csv(path).map_err(|e| e.to_string())?;
        let dag = match &a.dag {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                Some(parse_dag_csv(&text).map_err(|e| e.to_string())?)
            }
            None => None,
        };
        (samples, dag)
    };
    let dag = if a.no_truth { None } else { dag };
    let opts = FicoOptions {
        stein: SteinOptions { seed: cli.seed, ..Default::default() },
        standardize: a.standardize,
    };
    let result = fico_order(&samples, &opts).map_err(|e| e.to_string())?;
    let names = samples.names();
    write(&cli.out.join("order.csv"), &result.order.to_csv(names))?;
    if a.trace {
        write(&cli.out.join("trace.csv"), &result.trace_csv(names))?;
    }
    let ordered: Vec<&str> = result.order.order().iter().map(|&v| names[v].as_str()).collect();
    println!("order={}", ordered.join(","));
    if let Some(dag) = dag {
        if dag.d() != samples.d() {
            return Err(format!("dag has {} variables but data has {}", dag.d(), samples.d()));
        }
        let score = order_divergence(&result.order, &dag).map_err(|e| e.to_string())?;
        let text = format!("od,odr,edges\n{},{:.6},{}\n", score.od, score.odr, score.total_edges);
        write(&cli.out.join("order_score.csv"), &text)?;
        println!("od={} odr={:.6} edges={}", score.od, score.odr, score.total_edges);
    }
    Ok(())
}

fn cmd_selftest(cli: &Cli, a: &SelftestArgs) -> CmdResult {
    let results = selftest::run(&a.suite, a.inject_failure)?;
    let mut csv = String::from("suite,status,message\n");
    let mut failed = 0;
    for r in &results {
        let (status, msg) = match &r.outcome {
            Ok(()) => ("pass", String::new()),
            Err(m) => {
                failed += 1;
                ("fail", m.replace([',', '\n'], ";"))
            }
        };
        let _ = writeln!(csv, "{},{status},{msg}", r.name);
        println!("{:<10} {:<4} {:>8.3}s {msg}", r.name, status.to_uppercase(), r.seconds);
    }
    write(&cli.out.join("selftest.csv"), &csv)?;
    if failed > 0 {
        return Err(format!("{failed} of {} suites failed", results.len()));
    }
    Ok(())
}
