//! Log-likelihood of the two-parameter Poisson-Dirichlet partition and its
//! penalized extension to the infeasible triangle `theta <= -sigma`.
//!
//! With `j` species among `n` observations and `l_r` species seen `r` times,
//! up to terms free of `(sigma, theta)`:
//!
//! ```text
//! f(σ,θ) = Σ_{i=1}^{j-1} ln(θ + iσ)                        (f1)
//!        - ln Γ(θ+n) + ln Γ(θ+1) + Σ_r l_r ln Γ(r-σ) - j ln Γ(1-σ)   (f2)
//! ```
//!
//! Inside the region `R = [δ, 1-δ] × [-(1-δ), T_M]`, a point where
//! `θ + iσ <= 0` replaces the `i`-th term of f1 by `(1 + b_i) ln ε`, where
//! `b_i = |iσ + θ - ε| / √2` is the distance from `(iσ, θ)` to its projection
//! onto the line `θ + σ = ε`. When `θ + σ <= 0`, f2 is scaled by `1 + b_1`
//! if it is nonpositive and by `1 - b_1` otherwise.

use std::f64::consts::SQRT_2;

use super::gamma::log_asc_factorial;
use super::{DiscoveryError, PartitionCounts, DELTA, EPSILON, THETA_MAX};

pub fn in_region(sigma: f64, theta: f64) -> bool {
    (DELTA..=1.0 - DELTA).contains(&sigma) && (-(1.0 - DELTA)..=THETA_MAX).contains(&theta)
}

pub fn is_feasible(sigma: f64, theta: f64) -> bool {
    sigma > 0.0 && sigma < 1.0 && theta + sigma > 0.0
}

/// Closest point to `(sigma, theta)` on the line `θ + σ = ε`.
pub fn projection(sigma: f64, theta: f64) -> (f64, f64) {
    (0.5 * (sigma - theta + EPSILON), 0.5 * (theta - sigma + EPSILON))
}

/// Distance `b_i` from `(i σ, θ)` to its projection.
pub fn penalty_distance(sigma: f64, theta: f64, i: u64) -> f64 {
    (i as f64 * sigma + theta - EPSILON).abs() / SQRT_2
}

fn f2(sigma: f64, theta: f64, counts: &PartitionCounts) -> Result<f64, DiscoveryError> {
    let mut v = -log_asc_factorial(theta + 1.0, counts.n - 1)?;
    for &(r, l) in &counts.pairs {
        v += l as f64 * log_asc_factorial(1.0 - sigma, r - 1)?;
    }
    Ok(v)
}

/// Unpenalized log-likelihood; errors outside the feasible set.
pub fn log_likelihood(sigma: f64, theta: f64, counts: &PartitionCounts) -> Result<f64, DiscoveryError> {
    if !is_feasible(sigma, theta) {
        return Err(DiscoveryError::Infeasible { sigma, theta });
    }
    // Σ_{i<j} ln(θ + iσ) = (j-1) ln σ + ln (θ/σ + 1)_{j-1}
    let f1 = if counts.j > 1 {
        (counts.j - 1) as f64 * sigma.ln() + log_asc_factorial(theta / sigma + 1.0, counts.j - 1)?
    } else {
        0.0
    };
    Ok(f1 + f2(sigma, theta, counts)?)
}

/// Penalized objective on `R`; equal to [`log_likelihood`] wherever that is
/// defined.
pub fn penalized_objective(
    sigma: f64,
    theta: f64,
    counts: &PartitionCounts,
) -> Result<f64, DiscoveryError> {
    if !in_region(sigma, theta) {
        return Err(DiscoveryError::OutsideRegion { sigma, theta });
    }
    if is_feasible(sigma, theta) {
        return log_likelihood(sigma, theta, counts);
    }
    let ln_eps = EPSILON.ln();
    let mut f1 = 0.0;
    for i in 1..counts.j {
        let arg = theta + i as f64 * sigma;
        f1 += if arg > 0.0 {
            arg.ln()
        } else {
            (1.0 + penalty_distance(sigma, theta, i)) * ln_eps
        };
    }
    let raw = f2(sigma, theta, counts)?;
    let b1 = penalty_distance(sigma, theta, 1);
    let scaled = if raw <= 0.0 {
        (1.0 + b1) * raw
    } else {
        (1.0 - b1) * raw
    };
    Ok(f1 + scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::species::FrequencyVector;
    use approx::assert_relative_eq;

    fn counts(pairs: &[(u64, u64)]) -> PartitionCounts {
        PartitionCounts::from(&FrequencyVector::from_pairs(pairs).unwrap())
    }

    #[test]
    fn single_observation_is_flat() {
        let c = counts(&[(1, 1)]);
        for &(s, t) in &[(0.5, 1.0), (0.01, 900.0), (0.9, -0.8), (0.3, 0.0)] {
            assert_eq!(log_likelihood(s, t, &c).unwrap(), 0.0);
        }
    }

    #[test]
    fn matches_term_by_term_sum() {
        let c = counts(&[(1, 3), (2, 2), (5, 1)]);
        let (s, t) = (0.37, 2.5);
        let mut want = 0.0;
        for i in 1..c.j {
            want += (t + i as f64 * s).ln();
        }
        want += -super::super::gamma::ln_gamma(t + c.n as f64) + super::super::gamma::ln_gamma(t + 1.0);
        for &(r, l) in &c.pairs {
            want += l as f64 * super::super::gamma::ln_gamma(r as f64 - s);
        }
        want -= c.j as f64 * super::super::gamma::ln_gamma(1.0 - s);
        assert_relative_eq!(log_likelihood(s, t, &c).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn infeasible_point_is_rejected() {
        let c = counts(&[(1, 2)]);
        assert!(matches!(
            log_likelihood(0.2, -0.5, &c),
            Err(DiscoveryError::Infeasible { .. })
        ));
        assert!(matches!(
            penalized_objective(0.2, -1.5, &c),
            Err(DiscoveryError::OutsideRegion { .. })
        ));
        assert!(penalized_objective(0.005, 1.0, &c).is_err());
        assert!(penalized_objective(0.5, 1000.5, &c).is_err());
    }

    #[test]
    fn feasible_points_are_not_penalized() {
        let c = counts(&[(1, 4), (3, 2)]);
        assert_eq!(
            penalized_objective(0.5, 1.0, &c).unwrap(),
            log_likelihood(0.5, 1.0, &c).unwrap()
        );
    }

    #[test]
    fn projection_and_distance_example() {
        let (ps, pt) = projection(0.2, -0.5);
        assert_relative_eq!(ps, 0.3505, epsilon = 1e-12);
        assert_relative_eq!(pt, -0.3495, epsilon = 1e-12);
        assert_relative_eq!(ps + pt, EPSILON, epsilon = 1e-15);
        let b1 = penalty_distance(0.2, -0.5, 1);
        assert_relative_eq!(b1, 0.301 / SQRT_2, epsilon = 1e-15);
        assert!((b1 - 0.21284).abs() < 5e-6);
        // distance to the projection equals b1
        let d = ((0.2 - ps).powi(2) + (-0.5 - pt).powi(2)).sqrt();
        assert_relative_eq!(d, b1, epsilon = 1e-12);
    }

    #[test]
    fn penalized_value_by_hand() {
        // j = 3, n = 4; at (0.2, -0.5): i = 1, 2 both infeasible
        let c = counts(&[(1, 2), (2, 1)]);
        let (s, t) = (0.2, -0.5);
        let ln_eps = EPSILON.ln();
        let f1 = (1.0 + penalty_distance(s, t, 1)) * ln_eps + (1.0 + penalty_distance(s, t, 2)) * ln_eps;
        let raw = f2(s, t, &c).unwrap();
        let b1 = penalty_distance(s, t, 1);
        let want = f1 + if raw <= 0.0 { (1.0 + b1) * raw } else { (1.0 - b1) * raw };
        assert_relative_eq!(penalized_objective(s, t, &c).unwrap(), want, max_relative = 1e-14);
        assert!(want.is_finite());
    }

    #[test]
    fn mixed_feasibility_terms() {
        // θ + σ <= 0 but θ + 3σ > 0: only terms 1 and 2 are penalized
        let c = counts(&[(1, 5)]);
        let (s, t) = (0.3, -0.7);
        let ln_eps = EPSILON.ln();
        let mut f1 = 0.0;
        for i in 1..5u64 {
            let a = t + i as f64 * s;
            f1 += if a > 0.0 { a.ln() } else { (1.0 + penalty_distance(s, t, i)) * ln_eps };
        }
        let raw = f2(s, t, &c).unwrap();
        let b1 = penalty_distance(s, t, 1);
        let want = f1 + if raw <= 0.0 { (1.0 + b1) * raw } else { (1.0 - b1) * raw };
        assert_relative_eq!(penalized_objective(s, t, &c).unwrap(), want, max_relative = 1e-14);
    }
}
