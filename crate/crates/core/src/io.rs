//! Dataset, report and CSV files.
//!
//! Dataset layout (plain text):
//!
//! ```text
//! ECLIPSEWATCH-DATASET 1
//! p 100
//! q 5
//! n 1000
//! rows_used 4
//! snr inf
//! seed 7
//! attack true
//! tau 600
//! victims 0
//! attackers 98,99
//! data
//! 0100...   (one snapshot per line, rows_used * p characters, row-major)
//! ```
//!
//! `seed` may be `none`, `attack` may be `unknown` (no truth block), `tau`
//! may be `-`, and victim/attacker lists may be `-` when empty.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frechet::StatisticCurve;
use crate::graph::{AdjacencyMatrix, GraphSequence, GroundTruth, Snr};

pub const DATASET_MAGIC: &str = "ECLIPSEWATCH-DATASET";
pub const DATASET_VERSION: u32 = 1;

fn list(values: &[usize]) -> String {
    if values.is_empty() {
        "-".to_string()
    } else {
        values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub fn write_dataset<W: Write>(seq: &GraphSequence, mut out: W) -> Result<()> {
    let mut head = String::new();
    let _ = writeln!(head, "{DATASET_MAGIC} {DATASET_VERSION}");
    let _ = writeln!(head, "p {}", seq.p());
    let _ = writeln!(head, "q {}", seq.q());
    let _ = writeln!(head, "n {}", seq.len());
    let _ = writeln!(head, "rows_used {}", seq.rows_used());
    let _ = writeln!(head, "snr {}", seq.snr());
    match seq.seed() {
        Some(s) => writeln!(head, "seed {s}"),
        None => writeln!(head, "seed none"),
    }
    .ok();
    match seq.truth() {
        Some(t) => {
            let _ = writeln!(head, "attack {}", t.attack);
            let _ = match t.tau {
                Some(tau) => writeln!(head, "tau {tau}"),
                None => writeln!(head, "tau -"),
            };
            let _ = writeln!(head, "victims {}", list(&t.victims));
            let _ = writeln!(head, "attackers {}", list(&t.attackers));
        }
        None => {
            let _ = writeln!(head, "attack unknown");
        }
    }
    head.push_str("data\n");
    out.write_all(head.as_bytes())?;
    let mut line = Vec::with_capacity(seq.dim() + 1);
    for snap in seq.snapshots() {
        line.clear();
        line.extend(snap.entries().iter().map(|&b| b'0' + b));
        line.push(b'\n');
        out.write_all(&line)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(seq: &GraphSequence, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_dataset(seq, std::io::BufWriter::new(file))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| parse_err(line, format!("bad value '{value}' for {key}")))
}

fn parse_list(value: &str, line: usize, key: &str) -> Result<Vec<usize>> {
    if value == "-" || value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse_num(v.trim(), line, key))
        .collect()
}

#[derive(Default)]
struct Header {
    p: Option<usize>,
    q: Option<usize>,
    n: Option<usize>,
    rows_used: Option<usize>,
    snr: Option<Snr>,
    seed: Option<Option<u64>>,
    attack: Option<Option<bool>>,
    tau: Option<usize>,
    victims: Vec<usize>,
    attackers: Vec<usize>,
}

pub fn read_dataset<R: Read>(input: R) -> Result<GraphSequence> {
    let mut lines = BufReader::new(input).lines();
    let mut next = || -> Result<Option<String>> {
        Ok(lines.next().transpose()?.map(|l| l.trim_end().to_string()))
    };

    let magic = next()?.ok_or_else(|| parse_err(1, "empty file"))?;
    let expected = format!("{DATASET_MAGIC} {DATASET_VERSION}");
    if magic != expected {
        return Err(parse_err(1, format!("expected '{expected}', found '{magic}'")));
    }

    let mut h = Header::default();
    let mut line_no = 1;
    loop {
        line_no += 1;
        let line = next()?.ok_or_else(|| parse_err(line_no, "missing 'data' line"))?;
        if line == "data" {
            break;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .map(|(k, v)| (k, v.trim()))
            .ok_or_else(|| parse_err(line_no, format!("expected 'key value', found '{line}'")))?;
        match key {
            "p" => h.p = Some(parse_num(value, line_no, key)?),
            "q" => h.q = Some(parse_num(value, line_no, key)?),
            "n" => h.n = Some(parse_num(value, line_no, key)?),
            "rows_used" => h.rows_used = Some(parse_num(value, line_no, key)?),
            "snr" => {
                h.snr = Some(
                    value
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad snr '{value}'")))?,
                )
            }
            "seed" => {
                h.seed = Some(match value {
                    "none" => None,
                    v => Some(parse_num(v, line_no, key)?),
                })
            }
            "attack" => {
                h.attack = Some(match value {
                    "true" => Some(true),
                    "false" => Some(false),
                    "unknown" => None,
                    v => return Err(parse_err(line_no, format!("bad attack flag '{v}'"))),
                })
            }
            "tau" => {
                h.tau = match value {
                    "-" => None,
                    v => Some(parse_num(v, line_no, key)?),
                }
            }
            "victims" => h.victims = parse_list(value, line_no, key)?,
            "attackers" => h.attackers = parse_list(value, line_no, key)?,
            other => return Err(parse_err(line_no, format!("unknown key '{other}'"))),
        }
    }

    let missing = |k: &str| parse_err(line_no, format!("header is missing '{k}'"));
    let p = h.p.ok_or_else(|| missing("p"))?;
    let q = h.q.ok_or_else(|| missing("q"))?;
    let n = h.n.ok_or_else(|| missing("n"))?;
    let rows = h.rows_used.ok_or_else(|| missing("rows_used"))?;
    let width = rows * p;

    let mut snapshots = Vec::with_capacity(n);
    while let Some(line) = next()? {
        line_no += 1;
        if line.is_empty() {
            continue;
        }
        if snapshots.len() == n {
            return Err(parse_err(line_no, format!("more than n={n} snapshot lines")));
        }
        if line.len() != width {
            return Err(parse_err(
                line_no,
                format!("snapshot line has {} characters, expected {width}", line.len()),
            ));
        }
        let entries = line
            .bytes()
            .map(|b| match b {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(parse_err(line_no, format!("invalid character '{}'", b as char))),
            })
            .collect::<Result<Vec<u8>>>()?;
        snapshots.push(AdjacencyMatrix::from_entries(rows, p, entries)?);
    }
    if snapshots.len() != n {
        return Err(parse_err(
            line_no,
            format!("header says n={n} but found {} snapshots", snapshots.len()),
        ));
    }

    let truth = match h.attack.unwrap_or(None) {
        Some(attack) => Some(GroundTruth {
            attack,
            tau: h.tau,
            victims: h.victims,
            attackers: h.attackers,
        }),
        None => None,
    };
    let seq = GraphSequence::new(snapshots, q, h.seed.unwrap_or(None), truth)?;
    Ok(seq.with_snr(h.snr.unwrap_or(Snr::CLEAN)))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<GraphSequence> {
    read_dataset(fs::File::open(path)?)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(value)? + "\n")?;
    Ok(())
}

/// `n,t,S,T` rows for every admissible split.
pub fn curve_csv(curve: &StatisticCurve) -> String {
    let mut s = String::from("n,t,S,T\n");
    for ((&n, &v), &sc) in curve.splits.iter().zip(&curve.values).zip(&curve.scaled) {
        let _ = writeln!(s, "{n},{},{v},{sc}", n as f64 / curve.n_total as f64);
    }
    s
}

pub fn write_curve_csv(curve: &StatisticCurve, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, curve_csv(curve))?;
    Ok(())
}
