use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use confirm_lsh::data::generate;
use confirm_lsh::error::{Error, Result};
use confirm_lsh::experiment::{bench_table, run_bench, BenchMatrix, ExperimentConfig, Prepared, Structure};
use confirm_lsh::verify::{run_suites, Suite};

/// Exact nearest-neighbor search with LSH: build, query, verify and benchmark.
#[derive(Parser)]
#[command(name = "confirm-lsh", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for query runs; 1 keeps runs bit-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance directory.
    Generate,
    /// Build a forest or ensemble and write it to --out.
    Build,
    /// Run the configured queries and write a JSON-lines report.
    Query {
        /// A structure written by `build`; built in memory when absent.
        #[arg(long)]
        structure: Option<PathBuf>,
    },
    /// Run acceptance suites; exits with 2 when a check fails.
    Verify {
        /// Suites to run (all when none are given).
        suites: Vec<String>,
    },
    /// Sweep algorithms, instances and sizes from a matrix config.
    Bench,
}

enum Failure {
    Operational(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Operational(e)
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, common)?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ExperimentConfig, common: &Common) -> Result<()> {
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    Ok(())
}

fn require_out(common: &Common) -> Result<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --out".into()))
}

fn cmd_generate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let out = require_out(common)?;
    let inst = generate(&cfg.instance)?;
    inst.save(out)?;
    println!(
        "wrote {} instance: n = {}, dim = {}, {} queries to {}",
        cfg.instance.kind,
        inst.dataset.len(),
        inst.dataset.dim(),
        inst.queries.len(),
        out.display()
    );
    Ok(())
}

fn cmd_build(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let out = require_out(common)?;
    let mut prepared = Prepared::new(&cfg)?;
    let structure = prepared.structures.swap_remove(0);
    let bytes = structure.to_bytes()?;
    fs::write(out, &bytes)?;
    println!("{}; {} bytes written to {}", structure.describe(), bytes.len(), out.display());
    Ok(())
}

fn cmd_query(common: &Common, structure: Option<&Path>) -> Result<()> {
    let cfg = load_config(common)?;
    let prepared = match structure {
        Some(path) => {
            let instance = match &cfg.instance_dir {
                Some(dir) => confirm_lsh::data::Instance::load(dir)?,
                None => generate(&cfg.instance)?,
            };
            let s = Structure::from_bytes(&fs::read(path)?, instance.dataset.clone())?;
            Prepared::with_structure(&cfg, instance, s)?
        }
        None => Prepared::new(&cfg)?,
    };
    let report = prepared.run()?;
    match &common.out {
        Some(path) => {
            let mut w = io::BufWriter::new(fs::File::create(path)?);
            report.write_jsonl(&mut w)?;
            w.flush()?;
        }
        None => report.write_jsonl(&mut io::stdout().lock())?,
    }
    eprintln!("{}", report.headline());
    Ok(())
}

fn cmd_verify(common: &Common, names: &[String]) -> std::result::Result<(), Failure> {
    let suites: Vec<Suite> = if names.is_empty() || names.iter().any(|n| n == "all") {
        Suite::ALL.to_vec()
    } else {
        names.iter().map(|n| n.parse()).collect::<Result<_>>()?
    };
    let seed = match (&common.config, common.seed) {
        (_, Some(seed)) => seed,
        (Some(_), None) => load_config(common)?.seed,
        (None, None) => 42,
    };
    let mut log: Option<fs::File> = common.out.as_deref().map(fs::File::create).transpose().map_err(Error::from)?;
    let reports = run_suites(&suites, seed, |rep| {
        let mut text = String::new();
        for c in &rep.checks {
            text.push_str(&format!("  {c}\n"));
        }
        text.push_str(&rep.headline());
        text.push('\n');
        print!("{text}");
        if let Some(f) = log.as_mut() {
            let _ = f.write_all(text.as_bytes());
        }
    })?;
    if reports.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn cmd_bench(common: &Common) -> Result<()> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path)?,
        None => String::new(),
    };
    let mut matrix = BenchMatrix::from_text(&text)?;
    apply_overrides(&mut matrix.base, common)?;
    let cells = run_bench(&matrix);
    let table = bench_table(&cells);
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
        for c in &cells {
            if let Ok(report) = &c.result {
                let name = format!("{}-{}-{}.jsonl", c.config.instance.kind, c.config.instance.n, c.config.algorithm);
                fs::write(dir.join(name), report.to_jsonl())?;
            }
        }
        fs::write(dir.join("summary.tsv"), &table)?;
    }
    print!("{table}");
    let failed = cells.iter().filter(|c| c.result.is_err()).count();
    if failed > 0 {
        return Err(Error::Config(format!("{failed} of {} cells failed", cells.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = &cli.common;
    let outcome = match &cli.command {
        Command::Generate => cmd_generate(common).map_err(Failure::from),
        Command::Build => cmd_build(common).map_err(Failure::from),
        Command::Query { structure } => cmd_query(common, structure.as_deref()).map_err(Failure::from),
        Command::Verify { suites } => cmd_verify(common, suites),
        Command::Bench => cmd_bench(common).map_err(Failure::from),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Operational(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
    }
}
