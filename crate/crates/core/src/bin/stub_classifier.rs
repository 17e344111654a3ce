//! Reference server for the external-classifier protocol.
//!
//! Answers each request with a fixed confidence, or with the mean tensor
//! intensity under `--mean`. `--batch K` buffers K requests and answers them
//! in reverse order; `--drop ID` never answers that id and exits after the
//! batch containing it; `--exit-code N` exits with status N on the first request.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use borex::harness::external::{Request, Response};
use clap::Parser;

#[derive(Parser)]
#[command(name = "borex-stub-classifier", about = "JSON Lines classifier stub")]
struct Args {
    #[arg(long, default_value_t = 0.5)]
    confidence: f64,
    #[arg(long)]
    mean: bool,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long)]
    drop: Option<u64>,
    #[arg(long)]
    exit_code: Option<u8>,
}

fn answer(args: &Args, req: &Request) -> io::Result<f64> {
    if !args.mean {
        return Ok(args.confidence);
    }
    let values = req
        .values()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    Ok(values.iter().map(|v| f64::from(*v)).sum::<f64>() / values.len().max(1) as f64)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    let mut pending: Vec<Request> = Vec::new();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(code) = args.exit_code {
            return ExitCode::from(code);
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("stub: bad request: {e}");
                return ExitCode::from(2);
            }
        };
        pending.push(req);
        if pending.len() < args.batch.max(1) {
            continue;
        }
        let mut dropped = false;
        for req in pending.drain(..).rev() {
            if Some(req.id) == args.drop {
                dropped = true;
                continue;
            }
            let confidence = match answer(&args, &req) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("stub: {e}");
                    return ExitCode::from(2);
                }
            };
            let resp = serde_json::to_string(&Response {
                id: req.id,
                confidence,
            })
            .unwrap();
            if writeln!(stdout, "{resp}")
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return ExitCode::SUCCESS;
            }
        }
        if dropped {
            return ExitCode::SUCCESS;
        }
    }
    ExitCode::SUCCESS
}
