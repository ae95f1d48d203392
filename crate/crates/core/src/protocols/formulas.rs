//! Closed-form success probabilities and bounds.

/// Rounds the adaptive protocol can afford with `k` uses: `⌊(k+1)/d⌋`.
pub fn affordable_rounds(d: usize, k: usize) -> usize {
    (k + 1) / d
}

/// `1 − (1 − 1/d²)^{⌊(k+1)/d⌋}`.
pub fn theorem1_probability(d: usize, k: usize) -> f64 {
    let q = 1.0 - 1.0 / (d * d) as f64;
    1.0 - q.powi(affordable_rounds(d, k) as i32)
}

/// Upper bound on parallel inversion, `1 − (d+1)/(k+d²−1)`, clamped at 0.
pub fn theorem2_parallel_bound(d: usize, k: usize) -> f64 {
    let denom = (k + d * d - 1) as f64;
    (1.0 - (d + 1) as f64 / denom).max(0.0)
}

/// Optimal parallel transposition probability `1 − (d²−1)/(k+d²−1)`.
pub fn transposition_parallel_optimum(d: usize, k: usize) -> f64 {
    let dd = (d * d - 1) as f64;
    1.0 - dd / (k as f64 + dd)
}

/// Whether `k` uses reach the minimum `d − 1` needed for any nonzero
/// success probability.
pub fn min_uses_ok(d: usize, k: usize) -> bool {
    k + 1 >= d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert!((theorem1_probability(2, 1) - 0.25).abs() < 1e-15);
        assert_eq!(theorem1_probability(3, 1), 0.0);
        assert!((theorem1_probability(2, 101) - (1.0 - 0.75f64.powi(51))).abs() < 1e-15);
        assert!((theorem1_probability(3, 2) - 1.0 / 9.0).abs() < 1e-15);
        assert!((theorem2_parallel_bound(2, 1) - 0.25).abs() < 1e-15);
        assert!((theorem2_parallel_bound(2, 2) - 0.4).abs() < 1e-15);
        assert!((theorem2_parallel_bound(2, 3) - 0.5).abs() < 1e-15);
        assert!((transposition_parallel_optimum(2, 1) - 0.25).abs() < 1e-15);
        assert!((transposition_parallel_optimum(2, 3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn min_uses() {
        assert!(min_uses_ok(2, 1));
        assert!(!min_uses_ok(3, 1));
        assert!(min_uses_ok(3, 2));
        assert!(!min_uses_ok(2, 0));
    }
}
