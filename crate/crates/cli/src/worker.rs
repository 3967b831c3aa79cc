//! Serves a built-in SUT over the JSONL adapter protocol on stdin/stdout.

use std::io::{self, BufRead, Write};

use boundex_core::sut::SutRegistry;
use serde::{Deserialize, Serialize};

#[derive(Deserialize)]
struct Request {
    id: u64,
    input: Vec<i64>,
}

#[derive(Serialize)]
struct Response<'a> {
    id: u64,
    status: &'a str,
    output: &'a str,
}

/// Answers one request per line until EOF. Malformed lines are fatal.
pub fn run(sut_id: &str) -> Result<(), String> {
    let sut = SutRegistry::new()
        .resolve(sut_id)
        .map_err(|e| e.to_string())?;
    let stdin = io::stdin().lock();
    let mut stdout = io::stdout().lock();
    for line in stdin.lines() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request =
            serde_json::from_str(&line).map_err(|e| format!("bad request line: {e}"))?;
        let x = sut
            .descriptor()
            .point(req.input)
            .map_err(|e| e.to_string())?;
        let out = sut.eval(&x).map_err(|e| e.to_string())?;
        let resp = Response {
            id: req.id,
            status: out.status.as_str(),
            output: &out.text,
        };
        serde_json::to_writer(&mut stdout, &resp).map_err(|e| e.to_string())?;
        stdout
            .write_all(b"\n")
            .and_then(|_| stdout.flush())
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}
