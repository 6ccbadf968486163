/// Exponentially weighted moving average with `x̂₁ = x₁` and
/// `x̂ₜ = β·x̂ₜ₋₁ + (1 − β)·xₜ`. Apply per unit so state never crosses
/// unit boundaries.
pub fn ewma_smooth(series: &[f64], beta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut prev = match series.first() {
        Some(&x) => x,
        None => return out,
    };
    out.push(prev);
    for &x in &series[1..] {
        prev = beta * prev + (1.0 - beta) * x;
        out.push(prev);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_fixed_point() {
        assert!(ewma_smooth(&[3.5; 50], 0.98).iter().all(|&v| v == 3.5));
    }

    #[test]
    fn two_points() {
        let out = ewma_smooth(&[0.0, 1.0], 0.98);
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn empty_series() {
        assert!(ewma_smooth(&[], 0.98).is_empty());
    }
}
