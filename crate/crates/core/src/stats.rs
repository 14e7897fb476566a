//! Order-fixed reductions used by every ensemble estimate.

/// Neumaier-compensated sum; the result depends only on the input order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Bootstrap standard error of the mean with resampling indices drawn from
/// the counter generator, so the value is reproducible.
pub fn bootstrap_se(values: &[f64], resamples: usize, seed: u64) -> f64 {
    use crate::noise::{CounterRng, StreamTag};
    let n = values.len();
    if n < 2 || resamples < 2 {
        return 0.0;
    }
    let rng = CounterRng::new(seed);
    let means: Vec<f64> = (0..resamples)
        .map(|b| {
            let s = compensated_sum((0..n).map(|j| {
                let u = rng.uniform(b as u64, 0, StreamTag::Bootstrap, j as u64);
                values[((u * n as f64) as usize).min(n - 1)]
            }));
            s / n as f64
        })
        .collect();
    let (_, se) = mean_se(&means);
    se * (resamples as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn slope_and_median() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        assert!((ls_slope(&x, &y) - 2.0).abs() < 1e-14);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn bootstrap_matches_analytic_se() {
        let values: Vec<f64> = (0..400).map(|i| ((i * 37) % 101) as f64).collect();
        let (_, se) = mean_se(&values);
        let b = bootstrap_se(&values, 400, 3);
        assert!((b / se - 1.0).abs() < 0.2);
    }
}
