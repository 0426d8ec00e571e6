//! Order-fixed reductions used wherever results must not depend on scheduling.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Pairwise (cascade) summation over the slice in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and normal-approximation 95% half-width. A single sample has
/// zero half-width.
pub fn mean_and_halfwidth(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    if !mean.is_finite() {
        return (mean, f64::INFINITY);
    }
    let mut sq = alloc::vec::Vec::with_capacity(n);
    for v in values {
        let d = v - mean;
        sq.push(d * d);
    }
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, Z95 * libm::sqrt(var / n as f64))
}

/// Ordinary least-squares line through `(x, y)`; returns `(slope, intercept, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let r = yi - (intercept + slope * xi);
        ss_res += r * r;
    }
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn halfwidth_of_constant_sample_is_zero() {
        let (m, h) = mean_and_halfwidth(&[2.0; 10]);
        assert_eq!(m, 2.0);
        assert_eq!(h, 0.0);
    }

    #[test]
    fn exact_line_has_unit_r2() {
        let x: Vec<f64> = (20..=100).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|k| 3.5 * k).collect();
        let (s, _, r2) = linear_fit(&x, &y);
        assert!((s - 3.5).abs() < 1e-12);
        assert_eq!(r2, 1.0);
    }
}
