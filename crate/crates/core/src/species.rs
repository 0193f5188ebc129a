//! Species bookkeeping: each found design is keyed by its D-efficiency
//! rounded to four decimals, and the ledger tracks the frequency of
//! frequencies `(l_1, ..., l_n)`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factorial::{Design, DesignProblem};

#[derive(Debug, Error, PartialEq)]
pub enum SpeciesError {
    #[error("the ledger is empty")]
    Empty,
    #[error("cannot parse species key {0:?}")]
    BadKey(String),
    #[error("efficiency {0} cannot be keyed")]
    BadEfficiency(f64),
    #[error("line {line}: {msg}")]
    BadCounts { line: usize, msg: String },
    #[error("frequency vector must describe at least one observation")]
    NoObservations,
}

/// D-efficiency rounded half-to-even to four decimals, stored in units of
/// 10^-4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SpeciesKey(u64);

impl SpeciesKey {
    /// Rounds on the shortest decimal representation of `eff`, so that a
    /// literal such as `82.31615` is treated as an exact tie.
    pub fn try_from_efficiency(eff: f64) -> Result<Self, SpeciesError> {
        if !eff.is_finite() || eff < 0.0 {
            return Err(SpeciesError::BadEfficiency(eff));
        }
        let text = eff.to_string();
        let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
        let int: u64 = int_part.parse().map_err(|_| SpeciesError::BadEfficiency(eff))?;
        let mut kept = [0u8; 4];
        for (k, b) in frac_part.bytes().take(4).enumerate() {
            kept[k] = b - b'0';
        }
        let kept_val = kept.iter().fold(0u64, |a, &d| a * 10 + d as u64);
        let rest = frac_part.get(4..).unwrap_or("");
        let mut value = int * 10_000 + kept_val;
        let round_up = match rest.as_bytes().first() {
            None => false,
            Some(&b) if b > b'5' => true,
            Some(&b) if b < b'5' => false,
            // leading 5: a tie only if nothing nonzero follows
            Some(_) => rest[1..].bytes().any(|b| b != b'0') || value % 2 == 1,
        };
        if round_up {
            value += 1;
        }
        Ok(SpeciesKey(value))
    }

    /// As [`try_from_efficiency`](Self::try_from_efficiency); panics on NaN,
    /// infinite or negative input, which D-efficiencies never are.
    pub fn from_efficiency(eff: f64) -> Self {
        Self::try_from_efficiency(eff).expect("finite nonnegative efficiency")
    }

    pub fn of_design(design: &Design) -> Self {
        Self::from_efficiency(design.efficiency())
    }

    pub fn ten_thousandths(&self) -> u64 {
        self.0
    }

    pub fn value(&self) -> f64 {
        self.0 as f64 / 10_000.0
    }
}

/// Species of a design with `p` runs.
pub fn classify(design: &Design, p: usize) -> SpeciesKey {
    SpeciesKey::from_efficiency(crate::factorial::d_efficiency(design.d_value(), p))
}

impl fmt::Display for SpeciesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:04}", self.0 / 10_000, self.0 % 10_000)
    }
}

impl FromStr for SpeciesKey {
    type Err = SpeciesError;

    /// Accepts exactly four fractional digits, e.g. `"82.3162"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SpeciesError::BadKey(s.to_string());
        let (i, f) = s.trim().split_once('.').ok_or_else(bad)?;
        if f.len() != 4 || !f.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let i: u64 = i.parse().map_err(|_| bad())?;
        let f: u64 = f.parse().map_err(|_| bad())?;
        Ok(SpeciesKey(i * 10_000 + f))
    }
}

impl From<SpeciesKey> for String {
    fn from(k: SpeciesKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for SpeciesKey {
    type Error = SpeciesError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// The design kept for a species: its candidate indices and D.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub points: Vec<usize>,
    pub d_value: f64,
}

impl From<&Design> for Representative {
    fn from(d: &Design) -> Self {
        Self {
            points: d.points().to_vec(),
            d_value: d.d_value(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesEntry {
    pub count: u64,
    pub representative: Option<Representative>,
    pub first_seen_iteration: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpeciesLedger {
    entries: BTreeMap<SpeciesKey, SpeciesEntry>,
    n: u64,
}

impl SpeciesLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one observation of `key`; returns true if the species is new.
    /// Only the first design seen for a species is kept.
    pub fn record(&mut self, key: SpeciesKey, design: &Design, iteration: u64) -> bool {
        self.record_inner(key, Some(Representative::from(design)), iteration)
    }

    /// Records a bare key with no design attached.
    pub fn record_key(&mut self, key: SpeciesKey, iteration: u64) -> bool {
        self.record_inner(key, None, iteration)
    }

    fn record_inner(&mut self, key: SpeciesKey, rep: Option<Representative>, iteration: u64) -> bool {
        self.n += 1;
        match self.entries.get_mut(&key) {
            Some(e) => {
                e.count += 1;
                false
            }
            None => {
                self.entries.insert(
                    key,
                    SpeciesEntry {
                        count: 1,
                        representative: rep,
                        first_seen_iteration: iteration,
                    },
                );
                true
            }
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn j(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn entries(&self) -> impl DoubleEndedIterator<Item = (&SpeciesKey, &SpeciesEntry)> {
        self.entries.iter()
    }

    pub fn get(&self, key: &SpeciesKey) -> Option<&SpeciesEntry> {
        self.entries.get(key)
    }

    pub fn frequency_vector(&self) -> Result<FrequencyVector, SpeciesError> {
        if self.n == 0 {
            return Err(SpeciesError::Empty);
        }
        let mut ell = vec![0u64; self.n as usize];
        for e in self.entries.values() {
            ell[e.count as usize - 1] += 1;
        }
        Ok(FrequencyVector { ell })
    }

    /// Tab-separated species table, one row per species in descending
    /// efficiency: key, count, first iteration, D, and the representative's
    /// rows (levels joined by `,`, rows by `;`).
    pub fn write_species_table<W: Write>(&self, problem: &DesignProblem, mut w: W) -> io::Result<()> {
        writeln!(w, "key\tcount\tfirst_seen_iteration\td_value\tdesign")?;
        for (key, e) in self.entries.iter().rev() {
            let (d, rows) = match &e.representative {
                Some(r) => (format!("{:e}", r.d_value), design_rows_inline(problem, &r.points)),
                None => (String::new(), String::new()),
            };
            writeln!(w, "{key}\t{}\t{}\t{d}\t{rows}", e.count, e.first_seen_iteration)?;
        }
        Ok(())
    }
}

fn design_rows_inline(problem: &DesignProblem, points: &[usize]) -> String {
    points
        .iter()
        .map(|&i| {
            problem.candidates()[i]
                .iter()
                .map(|z| z.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Frequency of frequencies: `ell[r - 1]` is the number of species seen
/// exactly `r` times. The vector has length `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyVector {
    ell: Vec<u64>,
}

impl FrequencyVector {
    /// Builds from `(r, l_r)` pairs; pairs with `l_r = 0` are ignored and a
    /// repeated `r` accumulates.
    pub fn from_pairs(pairs: &[(u64, u64)]) -> Result<Self, SpeciesError> {
        let n: u64 = pairs.iter().map(|&(r, l)| r * l).sum();
        if n == 0 {
            return Err(SpeciesError::NoObservations);
        }
        let mut ell = vec![0u64; n as usize];
        for &(r, l) in pairs {
            if r == 0 && l > 0 {
                return Err(SpeciesError::BadCounts {
                    line: 0,
                    msg: "frequency r must be at least 1".into(),
                });
            }
            if l > 0 {
                ell[r as usize - 1] += l;
            }
        }
        Ok(Self { ell })
    }

    /// Parses `r,l_r` lines; blank lines, `#` comments, and a non-numeric
    /// header line are skipped.
    pub fn parse_pairs(text: &str) -> Result<Self, SpeciesError> {
        let mut pairs = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| SpeciesError::BadCounts {
                line: no + 1,
                msg: msg.to_string(),
            };
            let (a, b) = line.split_once(',').ok_or_else(|| err("expected \"r,l_r\""))?;
            match (a.trim().parse::<u64>(), b.trim().parse::<u64>()) {
                (Ok(r), Ok(l)) => {
                    if r == 0 {
                        return Err(err("frequency r must be at least 1"));
                    }
                    pairs.push((r, l));
                }
                _ if no == 0 && pairs.is_empty() => continue,
                _ => return Err(err("expected two nonnegative integers")),
            }
        }
        Self::from_pairs(&pairs)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.ell
    }

    /// `l_r`, zero outside `1..=n`.
    pub fn get(&self, r: u64) -> u64 {
        if r == 0 {
            return 0;
        }
        self.ell.get(r as usize - 1).copied().unwrap_or(0)
    }

    pub fn n(&self) -> u64 {
        self.ell
            .iter()
            .enumerate()
            .map(|(i, &l)| (i as u64 + 1) * l)
            .sum()
    }

    pub fn j(&self) -> u64 {
        self.ell.iter().sum()
    }

    /// Nonzero `(r, l_r)` pairs in increasing `r`.
    pub fn nonzero(&self) -> Vec<(u64, u64)> {
        self.ell
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0)
            .map(|(i, &l)| (i as u64 + 1, l))
            .collect()
    }
}

impl fmt::Display for FrequencyVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, l) in self.nonzero() {
            writeln!(f, "{r},{l}")?;
        }
        Ok(())
    }
}

/// The frequency table of the 29-run, 2^7 main-effects-plus-two-factor
/// interactions exchange experiment: 493 searches, 103 species.
pub const REFERENCE_TABLE: [(u64, u64); 18] = [
    (1, 47),
    (2, 18),
    (3, 7),
    (4, 10),
    (5, 2),
    (6, 4),
    (9, 2),
    (11, 1),
    (12, 1),
    (14, 2),
    (15, 1),
    (16, 1),
    (17, 2),
    (20, 1),
    (36, 1),
    (39, 1),
    (40, 1),
    (46, 1),
];
