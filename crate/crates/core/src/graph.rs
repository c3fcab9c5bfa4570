//! Snapshot types for the blockchain communication network and the
//! Frobenius metric on graph space.
//!
//! Entry `(i, j)` of an adjacency matrix is 1 when vertex `j` pulls from
//! (has an outgoing edge to) vertex `i`, so column `j` lists the neighbours
//! chosen by `j`. A matrix may keep only its first `rows_used` rows; the
//! truncated slab is then treated as the object itself.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 0/1 adjacency matrix, possibly restricted to its leading rows.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AdjacencyMatrix {
    rows_used: usize,
    p: usize,
    entries: Vec<u8>,
}

impl AdjacencyMatrix {
    pub fn zeros(rows_used: usize, p: usize) -> Result<Self> {
        check_shape(rows_used, p)?;
        Ok(Self {
            rows_used,
            p,
            entries: vec![0; rows_used * p],
        })
    }

    /// Builds a matrix from row-major entries, rejecting anything but 0/1.
    pub fn from_entries(rows_used: usize, p: usize, entries: Vec<u8>) -> Result<Self> {
        check_shape(rows_used, p)?;
        if entries.len() != rows_used * p {
            return Err(Error::dims(rows_used * p, entries.len()));
        }
        if let Some(bad) = entries.iter().find(|&&e| e > 1) {
            return Err(Error::InvalidMatrix(format!("entry {bad} is not binary")));
        }
        Ok(Self {
            rows_used,
            p,
            entries,
        })
    }

    /// Convenience constructor from nested rows; `p` is the row length.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let p = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut entries = Vec::with_capacity(rows.len() * p);
        for row in rows {
            let row = row.as_ref();
            if row.len() != p {
                return Err(Error::dims(p, row.len()));
            }
            entries.extend_from_slice(row);
        }
        Self::from_entries(rows.len(), p, entries)
    }

    pub fn rows_used(&self) -> usize {
        self.rows_used
    }

    /// Vertex count.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.p + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, value: u8) {
        self.entries[i * self.p + j] = value;
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [u8] {
        &mut self.entries
    }

    pub fn column_sum(&self, j: usize) -> usize {
        (0..self.rows_used).map(|i| self.get(i, j) as usize).sum()
    }

    /// Number of ones, i.e. the squared distance to the zero matrix.
    pub fn count_ones(&self) -> usize {
        self.entries.iter().map(|&e| e as usize).sum()
    }

    /// Keeps only the first `rows` rows.
    pub fn restrict_rows(&self, rows: usize) -> Result<Self> {
        if rows == 0 || rows > self.rows_used {
            return Err(Error::InvalidMatrix(format!(
                "cannot restrict {} rows to {rows}",
                self.rows_used
            )));
        }
        Ok(Self {
            rows_used: rows,
            p: self.p,
            entries: self.entries[..rows * self.p].to_vec(),
        })
    }

    /// Row-major flattening into a real vector.
    pub fn vectorize(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| e as f64).collect()
    }
}

impl fmt::Display for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.entries.chunks(self.p) {
            for &e in row {
                f.write_str(if e == 1 { "1" } else { "0" })?;
            }
            f.write_str("\n")?;
        }
        Ok(())
    }
}

fn check_shape(rows_used: usize, p: usize) -> Result<()> {
    if p == 0 || rows_used == 0 || rows_used > p {
        return Err(Error::InvalidMatrix(format!(
            "rows_used={rows_used} must lie in 1..={p} and p must be positive"
        )));
    }
    Ok(())
}

/// Frobenius distance between two snapshots.
///
/// Entries are binary, so the squared distance is an exact integer count of
/// differing entries; the square root is taken once at the end.
pub fn frobenius_distance(a: &AdjacencyMatrix, b: &AdjacencyMatrix) -> Result<f64> {
    Ok((squared_frobenius_distance(a, b)? as f64).sqrt())
}

pub fn squared_frobenius_distance(a: &AdjacencyMatrix, b: &AdjacencyMatrix) -> Result<u64> {
    if a.rows_used != b.rows_used || a.p != b.p {
        return Err(Error::dims(
            format!("{}x{}", a.rows_used, a.p),
            format!("{}x{}", b.rows_used, b.p),
        ));
    }
    Ok(a
        .entries
        .iter()
        .zip(&b.entries)
        .filter(|(x, y)| x != y)
        .count() as u64)
}

pub fn vectorize(a: &AdjacencyMatrix) -> Vec<f64> {
    a.vectorize()
}

/// Observation signal-to-noise ratio; `Snr::CLEAN` is the noise-free case.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Snr(f64);

impl Snr {
    pub const CLEAN: Snr = Snr(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 1.0 {
            return Err(Error::InvalidSnr(value));
        }
        Ok(Snr(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_clean(self) -> bool {
        self.0.is_infinite()
    }

    /// Probability that an existing edge survives observation.
    pub fn survival_probability(self) -> f64 {
        1.0 - 1.0 / self.0
    }
}

impl Default for Snr {
    fn default() -> Self {
        Snr::CLEAN
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_clean() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Snr::CLEAN);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParameters(format!("cannot parse SNR '{s}'")))?;
        Snr::new(v)
    }
}

// JSON has no infinity, so the clean case is written as the string "inf".
impl Serialize for Snr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_clean() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Snr::new(v).map_err(serde::de::Error::custom),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// What the simulator knows about a generated sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub attack: bool,
    /// 1-based index of the first attacked snapshot.
    pub tau: Option<usize>,
    pub victims: Vec<usize>,
    pub attackers: Vec<usize>,
}

/// Ordered batch of snapshots sharing one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSequence {
    snapshots: Vec<AdjacencyMatrix>,
    q: usize,
    snr: Snr,
    seed: Option<u64>,
    truth: Option<GroundTruth>,
}

impl GraphSequence {
    pub fn new(
        snapshots: Vec<AdjacencyMatrix>,
        q: usize,
        seed: Option<u64>,
        truth: Option<GroundTruth>,
    ) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(Error::InvalidParameters(format!(
                "a sequence needs at least 2 snapshots, got {}",
                snapshots.len()
            )));
        }
        let (rows, p) = (snapshots[0].rows_used, snapshots[0].p);
        if let Some(bad) = snapshots
            .iter()
            .find(|s| s.rows_used != rows || s.p != p)
        {
            return Err(Error::dims(
                format!("{rows}x{p}"),
                format!("{}x{}", bad.rows_used, bad.p),
            ));
        }
        if let Some(GroundTruth { tau: Some(tau), .. }) = &truth {
            if *tau == 0 || *tau > snapshots.len() {
                return Err(Error::InvalidParameters(format!(
                    "onset {tau} outside 1..={}",
                    snapshots.len()
                )));
            }
        }
        Ok(Self {
            snapshots,
            q,
            snr: Snr::CLEAN,
            seed,
            truth,
        })
    }

    pub fn with_snr(mut self, snr: Snr) -> Self {
        self.snr = snr;
        self
    }

    pub fn snapshots(&self) -> &[AdjacencyMatrix] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn p(&self) -> usize {
        self.snapshots[0].p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn rows_used(&self) -> usize {
        self.snapshots[0].rows_used
    }

    /// Length of a vectorized snapshot.
    pub fn dim(&self) -> usize {
        self.rows_used() * self.p()
    }

    pub fn snr(&self) -> Snr {
        self.snr
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn truth(&self) -> Option<&GroundTruth> {
        self.truth.as_ref()
    }

    pub(crate) fn replace_snapshots(&self, snapshots: Vec<AdjacencyMatrix>) -> Self {
        Self {
            snapshots,
            q: self.q,
            snr: self.snr,
            seed: self.seed,
            truth: self.truth.clone(),
        }
    }
}
