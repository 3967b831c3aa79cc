//! `boundex` command line.
//!
//! Exit codes: 0 success, 1 engine failure, 2 usage or unknown SUT/entrance,
//! 3 search exhausted, 4 range end or truncated scan, 5 cell budget exceeded.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use boundex_core::api::{
    self, ApiError, DetectRequest, DistanceKind, Engine, EntranceSpec, GridRequest, OutputSpec,
    RefineRequest, RunConfig, ScanRequest, SCHEMA_VERSION,
};
use boundex_core::detect::{BdOutcome, OutlierRule};
use boundex_core::distance::CodecKind;
use boundex_core::explore::{Axis, Region};
use boundex_core::sut::{Direction, ExternalConfig, SutRegistry};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;
pub const EXIT_RANGE_END: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "boundex",
    version,
    about = "Boundary exploration via output diversity"
)]
pub struct Cli {
    /// Command line of an external SUT worker speaking the JSONL protocol.
    #[arg(long, global = true, value_name = "CMD")]
    worker: Option<String>,
    /// Dimension names of the external SUT, comma separated.
    #[arg(long, global = true, value_delimiter = ',', requires = "worker")]
    dims: Vec<String>,
    /// SUT id under which the external worker is registered.
    #[arg(long, global = true, default_value = "external")]
    worker_id: String,
    /// Number of worker processes.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for a boundary candidate from an entrance.
    Detect {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        entrance: EntranceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record the output distance of every consecutive pair along a walk.
    Scan {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        entrance: EntranceArgs,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute wall boundariness over a lattice region.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        region: RegionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zoom a region around a focus point.
    Refine {
        #[command(flatten)]
        region: RegionArgs,
        /// Focus coordinate, repeatable: `name=value`.
        #[arg(long, value_parser = parse_fix, required = true)]
        focus: Vec<(String, i64)>,
        #[arg(long)]
        zoom: f64,
    },
    /// List the available SUTs.
    Suts,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Serve a built-in SUT over the worker protocol on stdin/stdout.
    Worker {
        #[arg(long)]
        sut: String,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    sut: String,
    #[arg(long, value_enum, default_value_t = DistanceArg::Ncd)]
    distance: DistanceArg,
    #[arg(long, value_enum, default_value_t = CodecArg::Bzip2)]
    codec: CodecArg,
    #[arg(long, default_value_t = 9)]
    level: u32,
    #[arg(long, default_value_t = OutlierRule::default().k)]
    k: f64,
    #[arg(long, default_value_t = OutlierRule::default().warmup)]
    warmup: usize,
    #[arg(long, default_value_t = OutlierRule::default().epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = boundex_core::detect::DEFAULT_MAX_STEPS)]
    max_steps: usize,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            sut: self.sut.clone(),
            distance: match self.distance {
                DistanceArg::Ncd => DistanceKind::Ncd,
                DistanceArg::Abs => DistanceKind::Abs,
                DistanceArg::Edit => DistanceKind::Edit,
            },
            codec: match self.codec {
                CodecArg::Bzip2 => CodecKind::Bzip2,
                CodecArg::Zlib => CodecKind::Zlib,
            },
            level: self.level,
            rule: OutlierRule {
                k: self.k,
                warmup: self.warmup,
                epsilon: self.epsilon,
            },
            max_steps: self.max_steps,
            output: None,
        }
    }
}

#[derive(Args, Debug)]
struct EntranceArgs {
    /// Named entrance; defaults to the SUT's first one.
    #[arg(long, conflicts_with = "from")]
    entrance: Option<String>,
    /// Explicit start point, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        requires = "direction"
    )]
    from: Vec<i64>,
    #[arg(long)]
    direction: Option<Direction>,
}

#[derive(Args, Debug)]
struct RegionArgs {
    /// Fixed coordinate, repeatable: `name=value`.
    #[arg(long, value_parser = parse_fix)]
    fix: Vec<(String, i64)>,
    /// Swept axis, repeatable: `name=lo:hi[:stride]`.
    #[arg(long, value_parser = parse_sweep, required = true)]
    sweep: Vec<Axis>,
}

impl RegionArgs {
    fn region(&self) -> Region {
        Region {
            sweep: self.sweep.clone(),
            fixed: self.fix.iter().cloned().collect::<BTreeMap<_, _>>(),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DistanceArg {
    Ncd,
    Abs,
    Edit,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CodecArg {
    Bzip2,
    Zlib,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn parse_fix(s: &str) -> Result<(String, i64), String> {
    let (name, v) = s.split_once('=').ok_or("expected name=value")?;
    let v = v.trim().parse().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((name.trim().to_string(), v))
}

fn parse_sweep(s: &str) -> Result<Axis, String> {
    let (name, range) = s.split_once('=').ok_or("expected name=lo:hi[:stride]")?;
    let parts: Vec<i64> = range
        .split(':')
        .map(|p| p.trim().parse::<i64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let (lo, hi, stride) = match parts[..] {
        [lo, hi] => (lo, hi, 1),
        [lo, hi, stride] => (lo, hi, stride),
        _ => return Err("expected name=lo:hi[:stride]".into()),
    };
    Ok(Axis {
        name: name.trim().to_string(),
        lo,
        hi,
        stride,
    })
}

fn entrance_spec(
    args: &EntranceArgs,
    engine: &Engine,
    sut: &str,
) -> Result<EntranceSpec, ApiError> {
    if let Some(dir) = args.direction {
        if args.from.is_empty() {
            return Err(ApiError::BadRequest("--direction needs --from".into()));
        }
        return Ok(EntranceSpec::Explicit {
            from: args.from.clone(),
            direction: dir,
        });
    }
    if let Some(name) = &args.entrance {
        return Ok(EntranceSpec::Named(name.clone()));
    }
    let s = engine.registry().resolve(sut)?;
    let first = s
        .descriptor()
        .entrances
        .first()
        .ok_or_else(|| ApiError::UnknownEntrance(format!("sut {sut:?} has no entrances")))?;
    Ok(EntranceSpec::Named(first.name.clone()))
}

fn with_output(mut config: RunConfig, format: &str, out: &Option<PathBuf>) -> RunConfig {
    if out.is_some() || format != "json" {
        config.output = Some(OutputSpec {
            format: format.to_string(),
            path: out.as_ref().map(|p| p.display().to_string()),
        });
    }
    config
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), ApiError> {
    let res = match out {
        Some(p) => std::fs::write(p, bytes),
        None => {
            let mut o = std::io::stdout().lock();
            o.write_all(bytes).and_then(|_| o.flush())
        }
    };
    res.map_err(|e| ApiError::Engine(format!("writing output: {e}")))
}

fn build_engine(cli: &Cli) -> Result<Engine, ApiError> {
    let mut registry = SutRegistry::new();
    if let Some(cmd) = &cli.worker {
        let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
        if argv.is_empty() || cli.dims.is_empty() {
            return Err(ApiError::BadRequest(
                "--worker needs a command and --dims".into(),
            ));
        }
        let mut cfg = ExternalConfig::new(cli.worker_id.clone(), argv, cli.dims.clone());
        if let Some(n) = cli.workers {
            cfg.workers = n.max(1);
        }
        registry = registry.with_external(cfg)?;
    }
    Ok(Engine::new(registry, Engine::budget_from_env()?))
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32, ApiError> {
    if let Command::Worker { sut } = &cli.command {
        return match crate::worker::run(sut) {
            Ok(()) => Ok(EXIT_OK),
            Err(e) => Err(ApiError::Engine(e)),
        };
    }
    let engine = build_engine(&cli)?;
    match &cli.command {
        Command::Detect { run, entrance, out } => {
            let config = with_output(run.config(), "json", out);
            let req = DetectRequest {
                v: SCHEMA_VERSION,
                entrance: entrance_spec(entrance, &engine, &config.sut)?,
                config,
            };
            let resp = engine.detect(&req)?;
            emit(out, api::to_json(&resp).as_bytes())?;
            Ok(match resp.report.outcome {
                BdOutcome::Candidate(_) => EXIT_OK,
                BdOutcome::Exhausted { .. } => EXIT_EXHAUSTED,
                BdOutcome::RangeEnd { .. } => EXIT_RANGE_END,
            })
        }
        Command::Scan {
            run,
            entrance,
            steps,
            format,
            out,
        } => {
            let fmt = if *format == Format::Csv {
                "csv"
            } else {
                "json"
            };
            let config = with_output(run.config(), fmt, out);
            let req = ScanRequest {
                v: SCHEMA_VERSION,
                entrance: entrance_spec(entrance, &engine, &config.sut)?,
                steps: *steps as usize,
                config,
            };
            let resp = engine.scan(&req)?;
            let bytes = match format {
                Format::Json => api::to_json(&resp).into_bytes(),
                Format::Csv => {
                    let header = serde_json::to_string(&resp.config).expect("config serializes");
                    let mut buf = Vec::new();
                    resp.trace
                        .write_csv(&mut buf, Some(&header))
                        .map_err(|e| ApiError::Engine(e.to_string()))?;
                    buf
                }
            };
            emit(out, &bytes)?;
            Ok(if resp.trace.truncated.is_some() {
                EXIT_RANGE_END
            } else {
                EXIT_OK
            })
        }
        Command::Grid { run, region, out } => {
            let req = GridRequest {
                v: SCHEMA_VERSION,
                config: with_output(run.config(), "json", out),
                region: region.region(),
                stream: false,
            };
            let resp = engine.grid(&req, None)?;
            emit(out, api::to_json(&resp).as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Refine {
            region,
            focus,
            zoom,
        } => {
            let req = RefineRequest {
                v: SCHEMA_VERSION,
                region: region.region(),
                focus: focus.iter().cloned().collect(),
                zoom: *zoom,
            };
            emit(&None, api::to_json(&engine.refine(&req)?).as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Suts => {
            emit(&None, api::to_json(&engine.suts()).as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Serve { port, host } => {
            let addr = SocketAddr::new(*host, *port);
            crate::server::serve_blocking(engine, addr)
                .map_err(|e| ApiError::Engine(format!("server: {e}")))?;
            Ok(EXIT_OK)
        }
        Command::Worker { .. } => unreachable!("handled above"),
    }
}

/// Parses `std::env::args`, runs, and reports errors on stderr.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("boundex: {e}");
            eprint!("{}", e.to_json());
            e.exit_code()
        }
    }
}
