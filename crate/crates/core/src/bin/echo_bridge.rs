//! Test double for the embedder bridge: answers each request with the first
//! `dim` samples of the window, zero-padded. Flags make it misbehave on
//! purpose so the client's failure handling can be exercised.

use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;
use std::time::Duration;

use apa_core::embed::protocol::{read_frame, write_frame, ErrorHeader, Frame, Hello};
use clap::Parser;

#[derive(Parser, Debug)]
#[command(version, about = "Echo embedder speaking the bridge protocol")]
struct Args {
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 48_000)]
    rate: u32,
    #[arg(long, default_value = "echo-test")]
    id: String,
    /// Reply with ids that do not match the requests.
    #[arg(long)]
    swap_ids: bool,
    /// Exit without replying once this many requests have been answered.
    #[arg(long)]
    die_after: Option<u64>,
    /// Stop replying (but stay alive) once this many requests have been answered.
    #[arg(long)]
    stall_after: Option<u64>,
    /// Reply with one value more than the handshake declares.
    #[arg(long)]
    wrong_dim: bool,
    /// Reject every request with an error frame.
    #[arg(long)]
    reject: bool,
    /// Reply with all-zero vectors.
    #[arg(long)]
    zeros: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match serve(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("echo bridge: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve(args: &Args) -> Result<(), Box<dyn std::error::Error>> {
    let mut input = BufReader::new(io::stdin().lock());
    let mut out = BufWriter::new(io::stdout().lock());
    let hello = Hello {
        embedder_id: args.id.clone(),
        dim: args.dim,
        input_rate: args.rate,
    };
    write_frame(&mut out, &Frame::Hello(hello))?;
    out.flush()?;

    let mut answered = 0u64;
    while let Some(frame) = read_frame(&mut input)? {
        let Frame::Request { id, samples, .. } = frame else {
            return Err("expected a request frame".into());
        };
        if args.die_after == Some(answered) {
            std::process::exit(1);
        }
        if args.stall_after == Some(answered) {
            loop {
                std::thread::sleep(Duration::from_secs(3600));
            }
        }
        let reply = if args.reject {
            Frame::Error(ErrorHeader {
                id,
                message: "rejected on request".into(),
            })
        } else {
            let n = args.dim + usize::from(args.wrong_dim);
            let keep = if args.zeros { 0 } else { n };
            let mut vector: Vec<f32> = samples.into_iter().take(keep).collect();
            vector.resize(n, 0.0);
            let id = if args.swap_ids { id + 1 } else { id };
            Frame::Response { id, vector }
        };
        write_frame(&mut out, &reply)?;
        out.flush()?;
        answered += 1;
    }
    Ok(())
}
