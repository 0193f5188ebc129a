//! Multistart maximization of the penalized likelihood over `R`.
//!
//! Starts are a randomly shifted Halton point set over `R`; each is refined
//! by a bounded Nelder-Mead simplex in coordinates scaled to the unit
//! square. The winner is then polished on the feasible set alone in
//! `(σ, ln(θ + σ))` coordinates, which lets the simplex approach the
//! boundary `θ = -σ` when the likelihood is maximized there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::{in_region, is_feasible, log_likelihood, penalized_objective, projection};
use super::{
    discovery_now, DiscoveryError, PYEstimate, PYParams, PartitionCounts, DELTA, EPSILON, THETA_MAX,
};
use crate::species::FrequencyVector;

/// Smallest `θ + σ` the feasible polish will reach.
const MIN_GAP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            starts: 64,
            seed: 0x5eed_0f_d15c,
            max_evals: 2000,
            x_tol: 1e-10,
            f_tol: 1e-13,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub sigma: f64,
    pub theta: f64,
    pub objective: f64,
}

fn to_region(u: [f64; 2]) -> (f64, f64) {
    (
        (DELTA + u[0] * (1.0 - 2.0 * DELTA)).clamp(DELTA, 1.0 - DELTA),
        (-(1.0 - DELTA) + u[1] * (THETA_MAX + 1.0 - DELTA)).clamp(-(1.0 - DELTA), THETA_MAX),
    )
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

/// Halton points in bases 2 and 3, shifted modulo 1.
fn start_points(count: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 2] = [rng.random(), rng.random()];
    (1..=count as u64)
        .map(|k| {
            [
                (radical_inverse(k, 2) + shift[0]).fract(),
                (radical_inverse(k, 3) + shift[1]).fract(),
            ]
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Minimum {
    x: [f64; 2],
    f: f64,
}

/// Nelder-Mead on a box; trial points are clamped to `[lo, hi]`.
fn nelder_mead<F: FnMut([f64; 2]) -> f64>(
    mut f: F,
    x0: [f64; 2],
    step: [f64; 2],
    lo: [f64; 2],
    hi: [f64; 2],
    cfg: &FitConfig,
) -> Minimum {
    let clamp = |x: [f64; 2]| [x[0].clamp(lo[0], hi[0]), x[1].clamp(lo[1], hi[1])];
    let mut simplex: Vec<([f64; 2], f64)> = Vec::with_capacity(3);
    let x0 = clamp(x0);
    simplex.push((x0, f(x0)));
    for k in 0..2 {
        let mut x = x0;
        x[k] = if x0[k] + step[k] <= hi[k] { x0[k] + step[k] } else { x0[k] - step[k] };
        let x = clamp(x);
        simplex.push((x, f(x)));
    }
    let mut evals = 3;
    let ord = |a: &([f64; 2], f64), b: &([f64; 2], f64)| a.1.total_cmp(&b.1);

    while evals < cfg.max_evals {
        simplex.sort_by(ord);
        let (best, worst) = (simplex[0], simplex[2]);
        let span = ((simplex[1].0[0] - best.0[0]).abs())
            .max((simplex[1].0[1] - best.0[1]).abs())
            .max((worst.0[0] - best.0[0]).abs())
            .max((worst.0[1] - best.0[1]).abs());
        let fspread = if worst.1.is_finite() { worst.1 - best.1 } else { f64::INFINITY };
        if span <= cfg.x_tol && fspread <= cfg.f_tol * (1.0 + best.1.abs()) {
            break;
        }
        if span <= cfg.x_tol * 1e-3 {
            break;
        }
        let c = [
            0.5 * (simplex[0].0[0] + simplex[1].0[0]),
            0.5 * (simplex[0].0[1] + simplex[1].0[1]),
        ];
        let along = |t: f64| clamp([c[0] + t * (worst.0[0] - c[0]), c[1] + t * (worst.0[1] - c[1])]);

        let xr = along(-1.0);
        let fr = f(xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(xe);
            evals += 1;
            simplex[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[1].1 {
            simplex[2] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = along(-0.5);
            (x, f(x))
        } else {
            let x = along(0.5);
            (x, f(x))
        };
        evals += 1;
        if fc < worst.1.min(fr) {
            simplex[2] = (xc, fc);
            continue;
        }
        let b = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            let x = clamp([b[0] + 0.5 * (v.0[0] - b[0]), b[1] + 0.5 * (v.0[1] - b[1])]);
            *v = (x, f(x));
            evals += 1;
        }
    }
    simplex.sort_by(ord);
    Minimum {
        x: simplex[0].0,
        f: simplex[0].1,
    }
}

/// Feasible-only maximization of the log-likelihood starting near
/// `(sigma, theta)`, in coordinates `(σ, ln(θ + σ))`.
fn polish(sigma: f64, theta: f64, counts: &PartitionCounts, cfg: &FitConfig) -> (f64, f64, f64) {
    let objective = |v: [f64; 2]| -> f64 {
        let s = v[0];
        let t = v[1].exp() - s;
        if !in_region(s, t) || !is_feasible(s, t) {
            return f64::INFINITY;
        }
        log_likelihood(s, t, counts).map_or(f64::INFINITY, |l| -l)
    };
    let lo = [DELTA, MIN_GAP.ln()];
    let hi = [1.0 - DELTA, (THETA_MAX + 1.0).ln()];
    let mut x = [sigma, (theta + sigma).max(MIN_GAP).ln()];
    let mut best = objective(x);
    // restart until a full simplex run no longer improves
    for _ in 0..8 {
        let step = [0.05_f64.min(0.5 * (hi[0] - lo[0])), 0.5];
        let m = nelder_mead(objective, x, step, lo, hi, cfg);
        if m.f < best - cfg.f_tol * (1.0 + best.abs()) || (best.is_infinite() && m.f.is_finite()) {
            best = m.f;
            x = m.x;
        } else {
            if m.f < best {
                best = m.f;
                x = m.x;
            }
            break;
        }
    }
    (x[0], x[1].exp() - x[0], -best)
}

/// Fits `(σ, θ)` with the default configuration.
pub fn fit_py(fv: &FrequencyVector) -> Result<PYEstimate, DiscoveryError> {
    fit_py_with(fv, &FitConfig::default())
}

pub fn fit_py_with(fv: &FrequencyVector, cfg: &FitConfig) -> Result<PYEstimate, DiscoveryError> {
    let counts = PartitionCounts::from(fv);
    if counts.n < 2 {
        return Err(DiscoveryError::InsufficientData { n: counts.n });
    }
    let objective = |u: [f64; 2]| -> f64 {
        let (s, t) = to_region(u);
        penalized_objective(s, t, &counts).map_or(f64::INFINITY, |v| -v)
    };

    let mut trace = Vec::with_capacity(cfg.starts);
    let mut best: Option<Minimum> = None;
    for u0 in start_points(cfg.starts.max(1), cfg.seed) {
        let m = nelder_mead(objective, u0, [0.05, 0.05], [0.0, 0.0], [1.0, 1.0], cfg);
        let (sigma, theta) = to_region(m.x);
        trace.push(TracePoint {
            sigma,
            theta,
            objective: -m.f,
        });
        if best.is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let best = best.expect("at least one start");
    let (mut sigma, mut theta) = to_region(best.x);
    if !is_feasible(sigma, theta) {
        let (ps, pt) = projection(sigma, theta);
        sigma = ps.clamp(DELTA, 1.0 - DELTA);
        theta = pt.clamp(-(1.0 - DELTA), THETA_MAX);
        if theta + sigma <= 0.0 {
            theta = -sigma + EPSILON;
        }
    }
    let (sigma, theta, log_lik) = polish(sigma, theta, &counts, cfg);
    let params = PYParams::new(sigma, theta)?;
    Ok(PYEstimate {
        params,
        log_lik,
        u_now: discovery_now(params, counts.n, counts.j),
        n: counts.n,
        j: counts.j,
        trace,
    })
}
