//! Configure an experiment from text, run it and sweep a small matrix.
//!
//! Run with `cargo run --release --example bench`.

use confirm_lsh::experiment::{bench_table, run, run_bench, BenchMatrix, ExperimentConfig};

fn main() -> confirm_lsh::error::Result<()> {
    let cfg = ExperimentConfig::from_text(
        "instance = planted-nn\nn = 512\nqueries = 50\nalgorithm = forest-adaptive\nseed = 3\n",
    )?;
    let report = run(&cfg)?;
    println!("{}", report.headline());
    let first_row = String::from_utf8(report.to_jsonl()).expect("JSON is UTF-8");
    println!("second report line: {}", first_row.lines().nth(1).unwrap_or(""));

    let matrix = BenchMatrix::from_text(
        "algorithms = brute, table-cs, natural, forest-adaptive\ninstances = planted-nn, uniform\nsizes = 256, 1024\nqueries = 30\n",
    )?;
    print!("{}", bench_table(&run_bench(&matrix)));
    Ok(())
}
