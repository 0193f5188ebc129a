pub use statrs::function::gamma::ln_gamma;

use super::DiscoveryError;

/// `ln (a)_m` where `(a)_m = a (a+1) ... (a+m-1)` and `(a)_0 = 1`.
pub fn log_asc_factorial(a: f64, m: u64) -> Result<f64, DiscoveryError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(DiscoveryError::NonPositiveArgument(a));
    }
    if m == 0 {
        return Ok(0.0);
    }
    Ok(ln_gamma(a + m as f64) - ln_gamma(a))
}
