//! The outer loop: one optimal design per iteration, species bookkeeping,
//! a refit of the discovery model, and a stop once the estimated chance of
//! a new species falls below `p_star` or the iteration cap is hit.
//!
//! The whole loop state lives in a JSON file rewritten after every
//! iteration, so a run can be stopped at any point and resumed.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::discovery::{fit_py_with, DiscoveryError, FitConfig, PYEstimate, PYParams};
use crate::factorial::{Design, DesignProblem, FactorSpace, FactorialError, ModelSpec};
use crate::optimizer::{run_algorithm, SearchConfig, SearchError};
use crate::species::{classify, SpeciesError, SpeciesKey, SpeciesLedger};

pub const STATE_VERSION: u32 = 1;
pub const STATE_FILE: &str = "state.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed state file: {source}")]
    StateFormat { path: PathBuf, source: serde_json::Error },
    #[error("state file version {found} is not supported (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("state fingerprint {found} does not match its problem ({expected})")]
    FingerprintMismatch { expected: String, found: String },
    #[error("invalid run configuration: {0}")]
    BadConfig(String),
    #[error("no discovery estimate is available yet")]
    Unfitted,
    #[error(transparent)]
    Factorial(#[from] FactorialError),
    #[error("iteration {iteration}: {source}")]
    Search { iteration: u64, source: SearchError },
    #[error(transparent)]
    Species(#[from] SpeciesError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub space: FactorSpace,
    pub model: ModelSpec,
    /// `search.seed` is the master seed; each iteration derives its own.
    pub search: SearchConfig,
    pub p_star: f64,
    pub m_star: u64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.p_star > 0.0 && self.p_star < 1.0) {
            return Err(RunError::BadConfig(format!("p_star must lie in (0, 1), got {}", self.p_star)));
        }
        if self.m_star == 0 {
            return Err(RunError::BadConfig("m_star must be at least 1".into()));
        }
        self.search
            .validate()
            .map_err(|e| RunError::BadConfig(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Running,
    ThresholdReached,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: u64,
    pub n: u64,
    pub j: u64,
    pub sigma: f64,
    pub theta: f64,
    pub u_now: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationFailure {
    pub iteration: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestDesign {
    pub points: Vec<usize>,
    pub d_value: f64,
    pub efficiency: f64,
    pub iteration: u64,
}

/// Everything needed to continue a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub fingerprint: String,
    pub version: u32,
    pub space: FactorSpace,
    pub model: ModelSpec,
    pub search: SearchConfig,
    pub p_star: f64,
    pub iteration_cap: u64,
    /// Number of completed iterations.
    pub iteration: u64,
    pub stop_reason: StopReason,
    pub ledger: SpeciesLedger,
    pub trajectory: Vec<TrajectoryPoint>,
    pub failures: Vec<IterationFailure>,
    pub best: Option<BestDesign>,
}

/// Hash of the problem and algorithm; a state only continues the run it
/// came from.
pub fn fingerprint(space: &FactorSpace, model: &ModelSpec, search: &SearchConfig) -> String {
    let terms: Vec<String> = model.terms().iter().map(|t| t.to_string()).collect();
    let text = format!(
        "levels={}|model={}|algorithm={}",
        space,
        terms.join("+"),
        search.algorithm
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Seed of iteration `s` (1-based), a function of the master seed and `s`
/// only, so a resumed run draws exactly what an uninterrupted one would.
pub fn iteration_seed(master: u64, s: u64) -> u64 {
    let mut z = master ^ s.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RunState {
    pub fn new(config: &RunConfig) -> Result<Self, RunError> {
        config.validate()?;
        Ok(Self {
            fingerprint: fingerprint(&config.space, &config.model, &config.search),
            version: STATE_VERSION,
            space: config.space.clone(),
            model: config.model.clone(),
            search: config.search.clone(),
            p_star: config.p_star,
            iteration_cap: config.m_star,
            iteration: 0,
            stop_reason: StopReason::Running,
            ledger: SpeciesLedger::new(),
            trajectory: Vec::new(),
            failures: Vec::new(),
            best: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let state: Self = serde_json::from_str(&text).map_err(|source| RunError::StateFormat {
            path: path.to_path_buf(),
            source,
        })?;
        if state.version != STATE_VERSION {
            return Err(RunError::UnsupportedVersion {
                found: state.version,
                expected: STATE_VERSION,
            });
        }
        state.check_fingerprint()?;
        Ok(state)
    }

    /// Writes to a sibling temp file and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn check_fingerprint(&self) -> Result<(), RunError> {
        let expected = fingerprint(&self.space, &self.model, &self.search);
        if expected != self.fingerprint {
            return Err(RunError::FingerprintMismatch {
                expected,
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn problem(&self) -> Result<DesignProblem, RunError> {
        Ok(DesignProblem::new(self.space.clone(), self.model.clone())?)
    }

    pub fn latest_fit(&self) -> Option<&TrajectoryPoint> {
        self.trajectory.last()
    }

    /// Discovery probability after `m` more observations, from the latest fit.
    pub fn forecast(&self, m: u64) -> Result<f64, RunError> {
        let t = self.latest_fit().ok_or(RunError::Unfitted)?;
        let params = PYParams::new(t.sigma, t.theta)?;
        Ok(crate::discovery::discovery_future(params, t.n, t.j, m))
    }

    fn push_fit(&mut self, iteration: u64, est: &PYEstimate) {
        self.trajectory.push(TrajectoryPoint {
            iteration,
            n: est.n,
            j: est.j,
            sigma: est.params.sigma,
            theta: est.params.theta,
            u_now: est.u_now,
        });
    }
}

/// What one iteration produced.
#[derive(Clone, Debug)]
pub struct IterationReport {
    pub iteration: u64,
    pub key: SpeciesKey,
    pub new_species: bool,
    /// `None` while fewer than two observations exist.
    pub u_now: Option<f64>,
    pub stop_reason: StopReason,
}

pub struct Runner {
    problem: DesignProblem,
    state: RunState,
    fit: FitConfig,
}

impl Runner {
    pub fn new(config: &RunConfig) -> Result<Self, RunError> {
        Self::from_state(RunState::new(config)?)
    }

    pub fn from_state(state: RunState) -> Result<Self, RunError> {
        state.check_fingerprint()?;
        Ok(Self {
            problem: state.problem()?,
            state,
            fit: FitConfig::default(),
        })
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn into_state(self) -> RunState {
        self.state
    }

    pub fn problem(&self) -> &DesignProblem {
        &self.problem
    }

    pub fn is_done(&self) -> bool {
        self.state.stop_reason != StopReason::Running
    }

    /// Runs iteration `s = completed + 1`. A search failure is recorded in
    /// the state and returned without consuming `s`; a failed fit is
    /// recorded and only skips the threshold test.
    pub fn iterate(&mut self) -> Result<IterationReport, RunError> {
        let s = self.state.iteration + 1;
        let search = SearchConfig {
            seed: iteration_seed(self.state.search.seed, s),
            ..self.state.search.clone()
        };
        let result = match run_algorithm(&self.problem, &search) {
            Ok(r) => r,
            Err(source) => {
                self.state.failures.push(IterationFailure {
                    iteration: s,
                    message: source.to_string(),
                });
                return Err(RunError::Search { iteration: s, source });
            }
        };
        let design = result.best;
        let key = classify(&design, self.problem.p());
        let new_species = self.state.ledger.record(key, &design, s);
        self.update_best(&design, s);
        self.state.iteration = s;

        let fv = self.state.ledger.frequency_vector()?;
        let mut u_now = None;
        match fit_py_with(&fv, &self.fit) {
            Ok(est) => {
                self.state.push_fit(s, &est);
                u_now = Some(est.u_now);
                if est.u_now < self.state.p_star {
                    self.state.stop_reason = StopReason::ThresholdReached;
                }
            }
            Err(DiscoveryError::InsufficientData { .. }) => {}
            Err(e) => self.state.failures.push(IterationFailure {
                iteration: s,
                message: e.to_string(),
            }),
        }
        if self.state.stop_reason == StopReason::Running && s + 1 > self.state.iteration_cap {
            self.state.stop_reason = StopReason::MaxIterations;
        }
        Ok(IterationReport {
            iteration: s,
            key,
            new_species,
            u_now,
            stop_reason: self.state.stop_reason,
        })
    }

    fn update_best(&mut self, design: &Design, s: u64) {
        if self.state.best.as_ref().is_some_and(|b| b.d_value >= design.d_value()) {
            return;
        }
        self.state.best = Some(BestDesign {
            points: design.points().to_vec(),
            d_value: design.d_value(),
            efficiency: design.efficiency(),
            iteration: s,
        });
    }

    /// Iterates until a stop condition holds, saving the state after every
    /// iteration when `state_path` is given.
    pub fn run<F>(&mut self, state_path: Option<&Path>, mut observe: F) -> Result<StopReason, RunError>
    where
        F: FnMut(&IterationReport),
    {
        while !self.is_done() {
            let step = self.iterate();
            if let Some(path) = state_path {
                self.state.save(path)?;
            }
            observe(&step?);
        }
        Ok(self.state.stop_reason)
    }
}

/// Fresh run in `config.out_dir`; writes the state file and the report.
pub fn run_to_completion(config: &RunConfig) -> Result<RunState, RunError> {
    run_to_completion_with(config, |_| {})
}

pub fn run_to_completion_with<F>(config: &RunConfig, observe: F) -> Result<RunState, RunError>
where
    F: FnMut(&IterationReport),
{
    let mut runner = Runner::new(config)?;
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let path = config.out_dir.join(STATE_FILE);
    runner.state.save(&path)?;
    runner.run(Some(&path), observe)?;
    write_report(runner.state(), runner.problem(), &config.out_dir)?;
    Ok(runner.into_state())
}

/// Continues a saved run with a new threshold and at most `m_star` more
/// iterations. The report is rewritten next to the state file.
pub fn resume(state_path: &Path, p_star: f64, m_star: u64) -> Result<RunState, RunError> {
    resume_with(state_path, p_star, m_star, |_| {})
}

pub fn resume_with<F>(state_path: &Path, p_star: f64, m_star: u64, observe: F) -> Result<RunState, RunError>
where
    F: FnMut(&IterationReport),
{
    let mut state = RunState::load(state_path)?;
    if !(p_star > 0.0 && p_star < 1.0) {
        return Err(RunError::BadConfig(format!("p_star must lie in (0, 1), got {p_star}")));
    }
    if m_star == 0 {
        return Err(RunError::BadConfig("m_star must be at least 1".into()));
    }
    state.p_star = p_star;
    state.iteration_cap = state.iteration + m_star;
    state.stop_reason = StopReason::Running;
    let mut runner = Runner::from_state(state)?;
    runner.run(Some(state_path), observe)?;
    write_report(runner.state(), runner.problem(), report_dir(state_path))?;
    Ok(runner.into_state())
}

/// Directory holding the state file; reports go there.
pub fn report_dir(state_path: &Path) -> &Path {
    match state_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// `(m, U(n+m))` for each `m`, from the latest fit in the state.
pub fn forecast(state: &RunState, ms: &[u64]) -> Result<Vec<(u64, f64)>, RunError> {
    ms.iter().map(|&m| Ok((m, state.forecast(m)?))).collect()
}

#[derive(Clone, Debug)]
pub struct ReportPaths {
    pub species: PathBuf,
    pub frequencies: PathBuf,
    pub trajectory: PathBuf,
    pub best_design: PathBuf,
    pub summary: PathBuf,
}

/// Writes `species.tsv`, `frequencies.csv` (`r,l_r` lines), `trajectory.csv`,
/// `best_design.csv` (one point per line) and `summary.txt` into `dir`.
pub fn write_report(state: &RunState, problem: &DesignProblem, dir: &Path) -> Result<ReportPaths, RunError> {
    let paths = ReportPaths {
        species: dir.join("species.tsv"),
        frequencies: dir.join("frequencies.csv"),
        trajectory: dir.join("trajectory.csv"),
        best_design: dir.join("best_design.csv"),
        summary: dir.join("summary.txt"),
    };
    write_with(&paths.species, |w| state.ledger.write_species_table(problem, w))?;
    let fv = state.ledger.frequency_vector()?;
    write_with(&paths.frequencies, |w| write!(w, "{fv}"))?;
    write_with(&paths.trajectory, |w| {
        writeln!(w, "iteration,n,j,sigma,theta,u_now")?;
        for t in &state.trajectory {
            writeln!(w, "{},{},{},{},{},{}", t.iteration, t.n, t.j, t.sigma, t.theta, t.u_now)?;
        }
        Ok(())
    })?;
    write_with(&paths.best_design, |w| {
        if let Some(best) = &state.best {
            for &idx in &best.points {
                let row: Vec<String> = problem.candidates()[idx].iter().map(|l| l.to_string()).collect();
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    })?;
    write_with(&paths.summary, |w| write_summary(state, w))?;
    Ok(paths)
}

pub fn write_summary<W: Write>(state: &RunState, mut w: W) -> io::Result<()> {
    writeln!(w, "factors: {}", state.space)?;
    writeln!(w, "degrees of freedom: {}", state.model.degrees_of_freedom(&state.space))?;
    writeln!(w, "algorithm: {}", state.search.algorithm)?;
    writeln!(w, "stop reason: {}", stop_label(state.stop_reason))?;
    writeln!(w, "iterations: {}", state.iteration)?;
    writeln!(w, "observations n: {}", state.ledger.n())?;
    writeln!(w, "species j: {}", state.ledger.j())?;
    if let Some(t) = state.latest_fit() {
        writeln!(w, "sigma: {:.6}", t.sigma)?;
        writeln!(w, "theta: {:.6}", t.theta)?;
        writeln!(w, "discovery probability: {:.6}", t.u_now)?;
    }
    if let Some(b) = &state.best {
        writeln!(w, "best D: {:e}", b.d_value)?;
        writeln!(w, "best efficiency: {:.4}", b.efficiency)?;
    }
    if !state.failures.is_empty() {
        writeln!(w, "failed iterations: {}", state.failures.len())?;
    }
    Ok(())
}

pub fn stop_label(reason: StopReason) -> &'static str {
    match reason {
        StopReason::Running => "running",
        StopReason::ThresholdReached => "threshold reached",
        StopReason::MaxIterations => "maximum iterations",
    }
}

fn write_with<F>(path: &Path, f: F) -> Result<(), RunError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}
