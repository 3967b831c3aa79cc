//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use boundex_core::api::{self, DetectRequest, EntranceSpec, RunConfig};
use boundex_core::detect::{bd_search, BdOutcome, BdReport, OutlierRule, DEFAULT_MAX_STEPS};
use boundex_core::distance::{ncd, ByteBlob, DistanceFunction};
use boundex_core::explore::{compute_walls, Axis, Region, DEFAULT_CELL_BUDGET};
use boundex_core::sut::date::{construct, rata_to_ymd, totaldays};
use boundex_core::sut::{Direction, Entrance, JuliaDate, Status, StepSut, StepperKind, Sut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "date-golden-rows",
            limit: Some(Duration::from_secs(1)),
            run: date_golden_rows,
        },
        Criterion {
            name: "bd-typemax",
            limit: Some(Duration::from_secs(1)),
            run: bd_typemax,
        },
        Criterion {
            name: "bd-typemin",
            limit: Some(Duration::from_secs(1)),
            run: bd_typemin,
        },
        Criterion {
            name: "corrected-extremes",
            limit: None,
            run: corrected_extremes,
        },
        Criterion {
            name: "step-sut-oracle",
            limit: Some(Duration::from_secs(10)),
            run: step_sut_oracle,
        },
        Criterion {
            name: "round-trip-brute-force",
            limit: Some(Duration::from_secs(60)),
            run: round_trip,
        },
        Criterion {
            name: "month-end-contour",
            limit: Some(Duration::from_secs(30)),
            run: month_end_contour,
        },
        Criterion {
            name: "ncd-properties",
            limit: Some(Duration::from_secs(30)),
            run: ncd_properties,
        },
        Criterion {
            name: "codec-recorded-peaks-substitute",
            limit: None,
            run: codec_recorded,
        },
        Criterion {
            name: "cli-http-parity",
            limit: None,
            run: cli_http_parity,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let t = Instant::now();
        let mut res = (c.run)();
        let took = t.elapsed();
        if let (Ok(detail), Some(limit)) = (&res, c.limit) {
            if took > limit {
                res = Err(format!("{detail}; took {took:.2?}, limit {limit:?}"));
            }
        }
        match res {
            Ok(detail) => println!("PASS {} ({took:.2?}): {detail}", c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} ({took:.2?}): {detail}", c.name);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

const TYPEMAX_YEAR: i64 = 252522163911149;

fn check(failures: &mut Vec<String>, ok: bool, what: impl FnOnce() -> String) {
    if !ok {
        failures.push(what());
    }
}

fn verdict(failures: Vec<String>, pass: String) -> Outcome {
    if failures.is_empty() {
        Ok(pass)
    } else {
        Err(failures.join("; "))
    }
}

fn date_golden_rows() -> Outcome {
    let ok_rows: [(usize, [i64; 3], &str); 10] = [
        (1, [TYPEMAX_YEAR, 12, 31], "252522163911149-12-31"),
        (2, [252522163911150, 1, 1], "252522163911150-01-01"),
        (
            3,
            [252522163911150, 12, 31],
            "-252522163911150-6028347736506387-28",
        ),
        (4, [252522163911151, 10, 7], "252522163911151-10-07"),
        (
            5,
            [252522163911151, 10, 8],
            "-252522163911150-6028347736506385-06",
        ),
        (6, [-252522163911150, 1, 1], "-252522163911150-01-01"),
        (7, [-252522163911151, 12, 31], "-252522163911151-12-31"),
        (8, [-252522163911151, 7, 25], "-252522163911151-07-25"),
        (
            9,
            [-252522163911151, 7, 24],
            "252522163911150--6028347736506379--07",
        ),
        (
            12,
            [i64::MAX, 1, 1],
            "63131837319416-12056695473012772--7378697629483820630",
        ),
    ];
    let err_rows: [(usize, [i64; 3], &str); 2] = [
        (10, [2020, 12, 32], "Day: 32 out of range (1:31)"),
        (11, [2020, 0, 31], "Month: 0 out of range (1:12)"),
    ];
    let mut failures = Vec::new();
    for (row, [y, m, d], want) in ok_rows {
        let got = construct(y, m, d);
        check(
            &mut failures,
            got.status == Status::Ok && got.text == want,
            || {
                format!(
                    "row {row} ({y},{m},{d}): want ok {want:?}, got {} {:?}",
                    got.status.as_str(),
                    got.text
                )
            },
        );
    }
    for (row, [y, m, d], want) in err_rows {
        let got = construct(y, m, d);
        check(
            &mut failures,
            got.status == Status::Error && got.text == want,
            || {
                format!(
                    "row {row}: want error {want:?}, got {} {:?}",
                    got.status.as_str(),
                    got.text
                )
            },
        );
    }
    verdict(failures, "12/12 rows match".into())
}

fn date_bd(entrance: &str) -> BdReport {
    let sut = JuliaDate::new();
    let e = sut
        .descriptor()
        .entrance(entrance)
        .expect("builtin entrance")
        .clone();
    let stepper = sut.descriptor().stepper(e.direction);
    bd_search(
        &sut,
        &stepper,
        DistanceFunction::default(),
        &e,
        &OutlierRule::default(),
        DEFAULT_MAX_STEPS,
    )
    .expect("search runs")
}

fn check_bd(
    entrance: &str,
    want_pair: [[i64; 3]; 2],
    want_steps: usize,
    want_texts: [&str; 2],
) -> Outcome {
    let report = date_bd(entrance);
    let BdOutcome::Candidate(c) = &report.outcome else {
        return Err(format!("no candidate: {:?}", report.outcome));
    };
    let pair = [c.pair.0.coords().to_vec(), c.pair.1.coords().to_vec()];
    let mut failures = Vec::new();
    check(
        &mut failures,
        pair[0] == want_pair[0] && pair[1] == want_pair[1],
        || {
            format!(
                "pair {:?},{:?} != expected {:?},{:?}",
                pair[0], pair[1], want_pair[0], want_pair[1]
            )
        },
    );
    check(&mut failures, c.steps_taken == want_steps, || {
        format!("steps {} != {want_steps}", c.steps_taken)
    });
    let texts = [c.outputs.0.text.as_str(), c.outputs.1.text.as_str()];
    check(&mut failures, texts == want_texts, || {
        format!("outputs {texts:?} != {want_texts:?}")
    });
    check(
        &mut failures,
        report.sut_evaluations <= want_steps + 2,
        || format!("{} SUT calls > {}", report.sut_evaluations, want_steps + 2),
    );
    verdict(
        failures,
        format!(
            "pair {:?},{:?} after {} steps, {} SUT calls",
            pair[0], pair[1], c.steps_taken, report.sut_evaluations
        ),
    )
}

fn bd_typemax() -> Outcome {
    check_bd(
        "typemax",
        [[252522163911151, 10, 7], [252522163911151, 10, 8]],
        281,
        [
            "252522163911151-10-07",
            "-252522163911150-6028347736506385-06",
        ],
    )
}

fn bd_typemin() -> Outcome {
    check_bd(
        "typemin",
        [[-252522163911151, 7, 25], [-252522163911151, 7, 24]],
        162,
        [
            "-252522163911151-07-25",
            "252522163911150--6028347736506379--07",
        ],
    )
}

fn corrected_extremes() -> Outcome {
    let valid_end = |entrance: &str| -> Result<String, String> {
        let report = date_bd(entrance);
        let c = report
            .outcome
            .candidate()
            .ok_or_else(|| format!("{entrance}: no candidate"))?;
        // The valid side of the pair is the one whose output renders its input.
        let found = [(&c.pair.0, &c.outputs.0), (&c.pair.1, &c.outputs.1)]
            .into_iter()
            .find(|(x, o)| {
                let [y, m, d] = x.coords() else { return false };
                o.is_ok() && o.text == boundex_core::sut::date::render_date(*y, *m, *d)
            })
            .map(|(_, o)| o.text.clone())
            .ok_or_else(|| format!("{entrance}: neither endpoint is faithful"));
        found
    };
    let max = valid_end("typemax")?;
    let min = valid_end("typemin")?;
    if max == "252522163911150-10-07" && min == "-252522163911151-07-24" {
        Ok(format!("actual extremes {min} / {max}"))
    } else {
        Err(format!("got {min} / {max}"))
    }
}

fn step_sut_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let rule = OutlierRule::default();
    for _ in 0..100 {
        let t: i64 = rng.gen_range(40..=100_000);
        let sut = StepSut::new(t);
        let d = sut.descriptor();
        let e = Entrance::from_start(
            "origin",
            d.point(vec![0]).unwrap(),
            StepperKind::Integer { axis: 0 },
            Direction::Next,
        )
        .unwrap();
        let report = bd_search(
            &sut,
            &d.stepper(Direction::Next),
            DistanceFunction::default(),
            &e,
            &rule,
            DEFAULT_MAX_STEPS,
        )
        .map_err(|e| e.to_string())?;
        match report.outcome.candidate() {
            Some(c) if c.pair.0.coords() == [t - 1] && c.pair.1.coords() == [t] => {}
            other => return Err(format!("T={t}: got {other:?}")),
        }
    }
    Ok("100/100 thresholds give (T-1, T)".into())
}

/// Days since 1970-01-01, computed by era arithmetic rather than month tables.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

fn oracle_days_in_month(y: i64, m: i64) -> i64 {
    match m {
        4 | 6 | 9 | 11 => 30,
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        _ => 31,
    }
}

fn round_trip() -> Outcome {
    // Rata die 1 is 0001-01-01, which is 719162 days before the Unix epoch.
    const EPOCH_RD: i64 = 719163;
    let mut expected_rd = 1;
    let mut checked = 0u64;
    let mut mismatches = Vec::new();
    for y in 1..=9999 {
        for m in 1..=12 {
            for d in 1..=oracle_days_in_month(y, m) {
                let rd = totaldays(y, m, d);
                let oracle = days_from_civil(y, m, d) + EPOCH_RD;
                let bad = oracle != expected_rd
                    || rd != Some(expected_rd)
                    || rata_to_ymd(expected_rd) != (y, m, d);
                if bad && mismatches.len() < 5 {
                    mismatches.push(format!(
                        "({y},{m},{d}) rd={rd:?} oracle={oracle} seq={expected_rd}"
                    ));
                }
                expected_rd += 1;
                checked += 1;
            }
        }
    }
    if mismatches.is_empty() {
        Ok(format!("{checked} dates, zero mismatches"))
    } else {
        Err(mismatches.join("; "))
    }
}

fn month_end_contour() -> Outcome {
    let region = Region {
        sweep: vec![
            Axis {
                name: "month".into(),
                lo: 1,
                hi: 12,
                stride: 1,
            },
            Axis {
                name: "day".into(),
                lo: 1,
                hi: 32,
                stride: 1,
            },
        ],
        fixed: [("year".to_string(), 2019)].into(),
    };
    let grid = compute_walls(
        &JuliaDate::new(),
        &region,
        DistanceFunction::default(),
        DEFAULT_CELL_BUDGET,
        None,
    )
    .map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    for m in 1..=12 {
        let n = oracle_days_in_month(2019, m);
        let column: Vec<_> = grid
            .walls
            .iter()
            .filter(|w| w.axis == "day" && w.a.coord("month") == Some(m))
            .collect();
        let Some(frontier) = column.iter().find(|w| w.a.coord("day") == Some(n)) else {
            failures.push(format!("month {m}: no frontier wall"));
            continue;
        };
        let interior = column
            .iter()
            .filter(|w| w.sa == Status::Ok && w.sb == Status::Ok)
            .map(|w| w.boundariness)
            .fold(f64::NEG_INFINITY, f64::max);
        check(&mut failures, frontier.boundariness > interior, || {
            format!(
                "month {m}: frontier {} <= interior max {interior}",
                frontier.boundariness
            )
        });
    }
    verdict(
        failures,
        format!("12/12 month-end walls dominate, {} walls", grid.walls.len()),
    )
}

fn random_blob(rng: &mut ChaCha8Rng, len: usize) -> ByteBlob {
    let mut v = vec![0u8; len];
    rng.fill(&mut v[..]);
    ByteBlob::new(v)
}

fn ncd_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_190_101);
    let mut failures = Vec::new();
    let log_len = |rng: &mut ChaCha8Rng| (10f64 * 1000f64.powf(rng.gen::<f64>())).round() as usize;

    let mut worst_self = 0f64;
    let mut worst_self_len = 0;
    for _ in 0..200 {
        let len = log_len(&mut rng);
        let a = random_blob(&mut rng, len);
        let s = ncd(&a, &a).map_err(|e| e.to_string())?;
        check(&mut failures, s >= 0.0, || {
            format!("ncd(a,a) = {s} < 0 at len {len}")
        });
        if s > worst_self {
            worst_self = s;
            worst_self_len = len;
        }
    }
    check(&mut failures, worst_self <= 0.25, || {
        format!(
            "self-distance floor: ncd(a,a) reaches {worst_self:.4} > 0.25 (len {worst_self_len})"
        )
    });

    let mut worst_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst_asym = 0f64;
    for _ in 0..200 {
        let (la, lb) = (log_len(&mut rng), log_len(&mut rng));
        let a = random_blob(&mut rng, la);
        // Half the pairs share a prefix so the range check also sees similar blobs.
        let b = if rng.gen_bool(0.5) {
            let mut v = a.as_bytes().to_vec();
            let tail = random_blob(&mut rng, lb);
            v.extend_from_slice(&tail.as_bytes()[..lb.min(tail.len()) / 4]);
            ByteBlob::new(v)
        } else {
            random_blob(&mut rng, lb)
        };
        let ab = ncd(&a, &b).map_err(|e| e.to_string())?;
        let ba = ncd(&b, &a).map_err(|e| e.to_string())?;
        worst_range = (worst_range.0.min(ab).min(ba), worst_range.1.max(ab).max(ba));
        worst_asym = worst_asym.max((ab - ba).abs());
    }
    check(
        &mut failures,
        worst_range.0 >= 0.0 && worst_range.1 <= 1.25,
        || {
            format!(
                "range [{:.4}, {:.4}] outside [0, 1.25]",
                worst_range.0, worst_range.1
            )
        },
    );
    check(&mut failures, worst_asym <= 0.05, || {
        format!("asymmetry {worst_asym:.4} > 0.05")
    });

    let mut separated = 0;
    for _ in 0..1000 {
        let (la, lb) = (rng.gen_range(100..=2000), rng.gen_range(100..=2000));
        let a = random_blob(&mut rng, la);
        let b = random_blob(&mut rng, lb);
        if a == b {
            continue;
        }
        if ncd(&a, &a).map_err(|e| e.to_string())? < ncd(&a, &b).map_err(|e| e.to_string())? {
            separated += 1;
        }
    }
    check(&mut failures, separated == 1000, || {
        format!("separation held in {separated}/1000 trials")
    });

    verdict(
        failures,
        format!(
            "max ncd(a,a) {worst_self:.4}, range [{:.4}, {:.4}], max asymmetry {worst_asym:.4}, separation 1000/1000",
            worst_range.0, worst_range.1
        ),
    )
}

/// Absolute diversity magnitudes depend on the compressor, so results must
/// name it, and the peak locations stand in for the magnitudes.
fn codec_recorded() -> Outcome {
    let engine = api::Engine::new(Default::default(), DEFAULT_CELL_BUDGET);
    let req = DetectRequest {
        v: api::SCHEMA_VERSION,
        config: RunConfig::new("julia-date"),
        entrance: EntranceSpec::Named("typemax".into()),
    };
    let body: serde_json::Value = serde_json::from_str(&api::to_json(
        &engine.detect(&req).map_err(|e| e.to_string())?,
    ))
    .map_err(|e| e.to_string())?;
    if body["config"]["codec"] != "bzip2" || body["config"]["level"] != 9 {
        return Err(format!("codec missing from config: {}", body["config"]));
    }
    let sut = JuliaDate::new();
    let mut peaks = Vec::new();
    for name in ["typemax", "typemin"] {
        let e = sut.descriptor().entrance(name).unwrap().clone();
        let trace = boundex_core::detect::scan(
            &sut,
            &sut.descriptor().stepper(e.direction),
            DistanceFunction::default(),
            Default::default(),
            &e,
            400,
        )
        .map_err(|e| e.to_string())?;
        peaks.push(trace.argmax().unwrap_or(0));
    }
    if peaks == [281, 162] {
        Ok("codec bzip2-9 recorded; 400-step scans peak at 281 and 162".into())
    } else {
        Err(format!("scan peaks {peaks:?}, expected [281, 162]"))
    }
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_post(addr: &str, path: &str, body: &str) -> Result<(u16, String), String> {
    let mut s = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    s.set_read_timeout(Some(Duration::from_secs(30))).ok();
    write!(
        s,
        "POST {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .map_err(|e| e.to_string())?;
    let mut raw = String::new();
    s.read_to_string(&mut raw).map_err(|e| e.to_string())?;
    let (head, payload) = raw.split_once("\r\n\r\n").ok_or("no header terminator")?;
    let status = head
        .split_whitespace()
        .nth(1)
        .and_then(|c| c.parse().ok())
        .ok_or("bad status line")?;
    if head
        .to_ascii_lowercase()
        .contains("transfer-encoding: chunked")
    {
        return Err("unexpected chunked body".into());
    }
    Ok((status, payload.to_string()))
}

fn cli_http_parity() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_boundex");
    let cli = Command::new(bin)
        .args(["detect", "--sut", "julia-date", "--entrance", "typemax"])
        .env_remove("BOUNDEX_BUDGET")
        .output()
        .map_err(|e| e.to_string())?;
    if cli.status.code() != Some(0) {
        return Err(format!("cli exited {:?}", cli.status.code()));
    }
    let cli_body = String::from_utf8(cli.stdout).map_err(|e| e.to_string())?;

    let child = Command::new(bin)
        .args(["serve", "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut server = Server(child);
    let mut line = String::new();
    BufReader::new(server.0.stdout.take().unwrap())
        .read_line(&mut line)
        .map_err(|e| e.to_string())?;
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .ok_or(format!("unexpected banner {line:?}"))?;

    let req = DetectRequest {
        v: api::SCHEMA_VERSION,
        config: RunConfig::new("julia-date"),
        entrance: EntranceSpec::Named("typemax".into()),
    };
    let (status, http_body) = http_post(addr, "/detect", &api::to_json(&req))?;
    if status != 200 {
        return Err(format!("POST /detect returned {status}: {http_body}"));
    }
    if http_body == cli_body {
        Ok(format!("{} identical bytes", cli_body.len()))
    } else {
        Err(format!("bodies differ:\ncli:  {cli_body}http: {http_body}"))
    }
}
