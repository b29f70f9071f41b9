//! Order statistics shared by the reporting code.

/// Nearest-rank percentile of an ascending slice: the value at 1-based rank
/// `ceil(p / 100 * n)`, clamped to `[1, n]`. `None` for empty input.
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    // tolerate p * n landing a hair above an integer from rounding
    let rank = ((p / 100.0 * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Some(sorted[rank - 1])
}

/// Ascending copy with NaNs rejected.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Fraction of `values` that are `<= threshold`.
pub fn fraction_at_most(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v <= threshold).count() as f64 / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_small_cases() {
        let v = [0.1, 0.2, 0.3];
        assert_eq!(percentile_nearest_rank(&v, 50.0), Some(0.2));
        assert_eq!(percentile_nearest_rank(&v, 95.0), Some(0.3));
        assert_eq!(percentile_nearest_rank(&v, 0.0), Some(0.1));
        assert_eq!(percentile_nearest_rank(&v, 100.0), Some(0.3));
        assert_eq!(percentile_nearest_rank(&[], 50.0), None);
        // 20 items: p95 -> rank 19 exactly
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile_nearest_rank(&v, 95.0), Some(19.0));
        assert_eq!(percentile_nearest_rank(&v, 50.0), Some(10.0));
    }
}
