use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iotledger_cli::bench::{run_bench, write_csv, BenchParams, Suite};
use iotledger_cli::query::cmd_query;
use iotledger_cli::simulate::cmd_simulate;
use iotledger_cli::Failure;

#[derive(Parser)]
#[command(name = "iotledger", version, about = "Ledger-backed IoT log storage with encrypted range search")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write chain.bin, cloud.bin, events.jsonl and keys.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a range query against a chain.
    Query {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        keys: PathBuf,
        /// Hit records as JSON lines; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cloud store; defaults to cloud.bin next to the chain.
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Time one benchmark suite and write CSV.
    Bench {
        /// kdtree-build, kdtree-encrypt, imt-build, trapdoor or search
        #[arg(long)]
        suite: String,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1024,4096,16384")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Simulate { config, out } => {
            let s = cmd_simulate(&config, &out)?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
        }
        Cmd::Query { chain, query, keys, out, cloud } => {
            let o = cmd_query(&chain, &query, &keys, cloud.as_deref(), out.as_deref())?;
            if out.is_none() {
                for r in &o.records {
                    println!("{}", serde_json::to_string(r).expect("record serializes"));
                }
            }
            println!("{}", serde_json::to_string(&o.summary).expect("summary serializes"));
        }
        Cmd::Bench { suite, dims, sizes, trials, seed, out } => {
            let params = BenchParams { suite: suite.parse::<Suite>()?, dims, sizes, trials, seed };
            let rows = run_bench(&params)?;
            match out {
                Some(p) => {
                    let f = std::fs::File::create(&p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
                    write_csv(&rows, f)?;
                }
                None => write_csv(&rows, std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
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
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
