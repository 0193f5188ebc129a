//! Randomized exchange and Fedorov searches for saturated D-optimal designs.
//!
//! Each pass of either search makes at most one swap. The exchange search
//! adds the point of largest prediction variance and drops the point that
//! then matters least; Fedorov takes the best swap over all (row, candidate)
//! pairs.
//!
//! For a square model matrix `X` with inverse `X^-1`, replacing row `i` by the
//! candidate row `f` multiplies `det X` by `f' X^-1 e_i`. Both searches score
//! swaps with this ratio and keep `X^-1` current with a Sherman-Morrison
//! update; the inverse and D are refactorized after every pass, and the fast
//! path is checked against a full factorization every
//! [`CROSS_CHECK_INTERVAL`] evaluations.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factorial::{d_criterion, Design, DesignProblem, FactorialError};
use crate::linalg::{Lu, Matrix};
use crate::species::SpeciesKey;

/// Number of redraws of a singular initial design before handing it to the
/// improvement pass anyway.
pub const MAX_INITIAL_DRAWS: usize = 1000;
pub const CROSS_CHECK_INTERVAL: u64 = 1000;
/// Largest number of subsets the brute-force oracle will enumerate.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("candidate set has {candidates} points but the model needs {p}")]
    TooFewCandidates { candidates: usize, p: usize },
    #[error("invalid search configuration: {0}")]
    BadConfig(String),
    #[error("brute force would enumerate {0} subsets")]
    TooManySubsets(u128),
    #[error(transparent)]
    Factorial(#[from] FactorialError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Exchange,
    Fedorov,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Exchange => "exchange",
            Algorithm::Fedorov => "fedorov",
        })
    }
}

impl FromStr for Algorithm {
    type Err = SearchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exchange" => Ok(Algorithm::Exchange),
            "fedorov" => Ok(Algorithm::Fedorov),
            other => Err(SearchError::BadConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    pub tries: usize,
    pub seed: u64,
    pub max_passes: usize,
    pub improvement_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Exchange,
            tries: 10,
            seed: 0,
            max_passes: 100,
            improvement_tol: 1e-10,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.tries == 0 {
            return Err(SearchError::BadConfig("tries must be at least 1".into()));
        }
        if self.max_passes == 0 {
            return Err(SearchError::BadConfig("max passes must be at least 1".into()));
        }
        if !(self.improvement_tol >= 0.0) {
            return Err(SearchError::BadConfig("improvement tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// One finished local search.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub design: Design,
    pub initial_d: f64,
    pub passes: usize,
    /// D after each pass, starting with the initial design.
    pub d_trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: Design,
    /// Every try's design and D-efficiency, in try order.
    pub all_tries: Vec<(Design, f64)>,
    /// Passes summed over all tries.
    pub passes_used: usize,
}

pub fn try_rng(seed: u64, try_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ try_index as u64)
}

/// Draws `p` distinct candidates uniformly, redrawing singular designs up to
/// [`MAX_INITIAL_DRAWS`] times.
pub fn random_saturated_design<R: Rng + ?Sized>(
    problem: &DesignProblem,
    rng: &mut R,
) -> Result<Design, SearchError> {
    let (n, p) = (problem.candidate_count(), problem.p());
    if n < p {
        return Err(SearchError::TooFewCandidates { candidates: n, p });
    }
    let mut design = Design::from_points(problem, index::sample(rng, n, p).into_vec())?;
    for _ in 1..MAX_INITIAL_DRAWS {
        if design.d_value() > 0.0 {
            break;
        }
        design = Design::from_points(problem, index::sample(rng, n, p).into_vec())?;
    }
    Ok(design)
}

pub fn exchange_search<R: Rng + ?Sized>(
    problem: &DesignProblem,
    config: &SearchConfig,
    rng: &mut R,
) -> Result<Design, SearchError> {
    let start = random_saturated_design(problem, rng)?;
    Ok(improve(problem, start, Algorithm::Exchange, config).design)
}

pub fn fedorov_search<R: Rng + ?Sized>(
    problem: &DesignProblem,
    config: &SearchConfig,
    rng: &mut R,
) -> Result<Design, SearchError> {
    let start = random_saturated_design(problem, rng)?;
    Ok(improve(problem, start, Algorithm::Fedorov, config).design)
}

/// Runs `config.tries` independent searches; try `t` uses the substream
/// `config.seed ^ t`. The best design is the first one with maximal D.
pub fn run_algorithm(problem: &DesignProblem, config: &SearchConfig) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let seed = config.seed;
    let mut all_tries = Vec::with_capacity(config.tries);
    let mut passes_used = 0;
    for t in 0..config.tries {
        let mut rng = try_rng(seed, t);
        let start = random_saturated_design(problem, &mut rng)?;
        let outcome = improve(problem, start, config.algorithm, config);
        passes_used += outcome.passes;
        let eff = outcome.design.efficiency();
        all_tries.push((outcome.design, eff));
    }
    let best_idx = all_tries
        .iter()
        .enumerate()
        .fold(0, |best, (i, (d, _))| {
            if d.d_value() > all_tries[best].0.d_value() {
                i
            } else {
                best
            }
        });
    Ok(SearchResult {
        best: all_tries[best_idx].0.clone(),
        all_tries,
        passes_used,
    })
}

/// Improves `start` until a pass gains no more than the relative tolerance or
/// `max_passes` is reached. D never decreases.
pub fn improve(
    problem: &DesignProblem,
    start: Design,
    algorithm: Algorithm,
    config: &SearchConfig,
) -> SearchOutcome {
    let initial_d = start.d_value();
    let mut state = SwapState::new(problem, &start);
    let mut d_trace = vec![state.d];
    let mut passes = 0;
    let threshold = 1.0 + config.improvement_tol;

    while passes < config.max_passes && state.inv.is_none() {
        passes += 1;
        if !state.repair_step() {
            break;
        }
        d_trace.push(state.d);
    }

    while passes < config.max_passes && state.inv.is_some() {
        passes += 1;
        let before = state.d;
        let moved = match algorithm {
            Algorithm::Exchange => state.simple_exchange_step(threshold),
            Algorithm::Fedorov => state.fedorov_step(threshold),
        };
        state.refresh();
        debug_assert!(state.d >= before * (1.0 - 1e-9), "D decreased in a pass");
        d_trace.push(state.d);
        if !moved || state.d <= before * threshold {
            break;
        }
    }

    let design = Design::from_points(problem, state.points).expect("points stay valid");
    SearchOutcome {
        design,
        initial_d,
        passes,
        d_trace,
    }
}

struct SwapState<'a> {
    problem: &'a DesignProblem,
    points: Vec<usize>,
    x: Matrix,
    inv: Option<Matrix>,
    d: f64,
    evaluations: u64,
}

impl<'a> SwapState<'a> {
    fn new(problem: &'a DesignProblem, design: &Design) -> Self {
        let mut s = Self {
            problem,
            points: design.points().to_vec(),
            x: design.matrix().clone(),
            inv: None,
            d: 0.0,
            evaluations: 0,
        };
        s.refresh();
        s
    }

    /// Recomputes D and the inverse from a fresh factorization.
    fn refresh(&mut self) {
        self.d = d_criterion(&self.x);
        self.inv = if self.d > 0.0 {
            Lu::factor(&self.x).inverse()
        } else {
            None
        };
    }

    fn d_with_row(&self, row: usize, cand: usize) -> f64 {
        let mut x = self.x.clone();
        x.set_row(row, self.problem.candidate_row(cand));
        d_criterion(&x)
    }

    /// det ratio of replacing `row` by candidate `cand`.
    fn ratio(&mut self, row: usize, cand: usize) -> f64 {
        let Some(inv) = self.inv.as_ref() else {
            return 0.0;
        };
        let f = self.problem.candidate_row(cand);
        let r: f64 = f.iter().enumerate().map(|(k, v)| v * inv[(k, row)]).sum();
        self.evaluations += 1;
        if self.evaluations.is_multiple_of(CROSS_CHECK_INTERVAL) {
            let slow = self.d_with_row(row, cand);
            let fast = self.d * r * r;
            let scale = slow.max(fast).max(self.d * 1e-12);
            if (slow - fast).abs() > 1e-6 * scale {
                // drifted inverse: refactor and rescore
                self.refresh();
                return self.ratio(row, cand);
            }
        }
        r
    }

    fn apply(&mut self, row: usize, cand: usize, ratio: f64) {
        let p = self.x.nrows();
        let inv = self.inv.as_mut().expect("nonsingular state");
        let f = self.problem.candidate_row(cand);
        let v: Vec<f64> = f.iter().zip(self.x.row(row)).map(|(a, b)| a - b).collect();
        // w = v' X^-1
        let mut w = vec![0.0; p];
        for (k, vk) in v.iter().enumerate() {
            if *vk != 0.0 {
                for (wj, ij) in w.iter_mut().zip(inv.row(k)) {
                    *wj += vk * ij;
                }
            }
        }
        let u: Vec<f64> = (0..p).map(|k| inv[(k, row)]).collect();
        for a in 0..p {
            let ua = u[a] / ratio;
            if ua != 0.0 {
                for (b, wb) in w.iter().enumerate() {
                    inv[(a, b)] -= ua * wb;
                }
            }
        }
        self.x.set_row(row, f);
        self.points[row] = cand;
        self.d *= ratio * ratio;
    }

    /// Simple exchange: add the candidate with the largest prediction
    /// variance `f' (X'X)^-1 f`, then drop the row whose removal loses the
    /// least. For a saturated design the variance is the sum of squared swap
    /// ratios over rows, and the row to drop is the one with the largest
    /// ratio against the added candidate.
    fn simple_exchange_step(&mut self, threshold: f64) -> bool {
        let p = self.points.len();
        let mut add = (0usize, f64::NEG_INFINITY);
        for cand in 0..self.problem.candidate_count() {
            let var: f64 = (0..p)
                .map(|row| {
                    let r = self.ratio(row, cand);
                    r * r
                })
                .sum();
            if var > add.1 {
                add = (cand, var);
            }
        }
        let cand = add.0;
        let mut drop = (0usize, 0.0f64);
        for row in 0..p {
            let r = self.ratio(row, cand);
            if r.abs() > drop.1.abs() {
                drop = (row, r);
            }
        }
        if drop.1 * drop.1 > threshold {
            self.apply(drop.0, cand, drop.1);
            true
        } else {
            false
        }
    }

    /// Applies the single best swap over all (row, candidate) pairs.
    fn fedorov_step(&mut self, threshold: f64) -> bool {
        let mut best = (0usize, 0usize, 0.0f64);
        for row in 0..self.points.len() {
            for cand in 0..self.problem.candidate_count() {
                let r = self.ratio(row, cand);
                if r.abs() > best.2.abs() {
                    best = (row, cand, r);
                }
            }
        }
        if best.2 * best.2 > threshold {
            self.apply(best.0, best.1, best.2);
            true
        } else {
            false
        }
    }

    /// For a singular start: applies the (row, candidate) swap with the
    /// largest D computed by full factorization.
    fn repair_step(&mut self) -> bool {
        let mut best = (0usize, 0usize, 0.0f64);
        for row in 0..self.points.len() {
            for cand in 0..self.problem.candidate_count() {
                let d = self.d_with_row(row, cand);
                if d > best.2 {
                    best = (row, cand, d);
                }
            }
        }
        if best.2 <= 0.0 {
            return false;
        }
        self.x.set_row(best.0, self.problem.candidate_row(best.1));
        self.points[best.0] = best.1;
        self.refresh();
        true
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k as u128).fold(1u128, |acc, i| {
        acc.saturating_mul(n as u128 - i) / (i + 1)
    })
}

#[derive(Clone, Debug)]
pub struct BruteForce {
    pub max_d: f64,
    pub best_points: Vec<usize>,
    /// Rounded efficiencies of all nonsingular saturated subsets.
    pub species: BTreeSet<SpeciesKey>,
    pub subsets: u128,
}

/// Enumerates every saturated subset of the candidate set.
pub fn brute_force_optimum(problem: &DesignProblem) -> Result<BruteForce, SearchError> {
    let (n, p) = (problem.candidate_count(), problem.p());
    if n < p {
        return Err(SearchError::TooFewCandidates { candidates: n, p });
    }
    let subsets = binomial(n, p);
    if subsets > BRUTE_FORCE_CAP {
        return Err(SearchError::TooManySubsets(subsets));
    }
    let mut max_d = 0.0;
    let mut best_points = (0..p).collect();
    let mut species = BTreeSet::new();
    let mut x = Matrix::zeros(p, p);
    for combo in (0..n).combinations(p) {
        for (r, &c) in combo.iter().enumerate() {
            x.set_row(r, problem.candidate_row(c));
        }
        let d = d_criterion(&x);
        if d > 0.0 {
            species.insert(SpeciesKey::from_efficiency(crate::factorial::d_efficiency(d, p)));
        }
        if d > max_d {
            max_d = d;
            best_points = combo;
        }
    }
    Ok(BruteForce {
        max_d,
        best_points,
        species,
        subsets,
    })
}
