//! Order statistics and regression helpers for the Monte Carlo summaries.

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" rule). NaNs sort last.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `(1/n) Σ min(|y_i|, c)^power` with `c` the empirical `q`-quantile of `|y|`.
pub fn winsorized_moment(y: &[f64], power: f64, q: f64) -> f64 {
    let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let cap = quantile(&abs, q);
    mean(&abs.iter().map(|a| a.min(cap).powf(power)).collect::<Vec<_>>())
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols_slope(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.99) - 3.97).abs() < 1e-12);
    }

    #[test]
    fn winsorized_moment_caps_large_values() {
        let y = [1.0, -1.0, 1.0, 100.0];
        // cap at the 0.5-quantile of |y| = 1
        assert_eq!(winsorized_moment(&y, 2.0, 0.5), 1.0);
        assert_eq!(winsorized_moment(&y, 2.0, 1.0), (3.0 + 1e4) / 4.0);
    }

    #[test]
    fn power_law_slope() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
