//! Small summary statistics. Sums run over sorted copies so results do not
//! depend on the order replications finished in.

use serde::Serialize;

/// z quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Summary {
    pub fn half_width(&self) -> f64 {
        Z95 * self.stderr
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    pub fn overlaps(&self, other: &Summary) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(values: &[f64]) -> f64 {
    sorted(values).iter().sum::<f64>() / values.len() as f64
}

/// Mean with a normal-approximation 95% interval; `n ≥ 2` for a finite one.
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    let v = sorted(values);
    let m = v.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        let mut dev: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
        dev.sort_by(f64::total_cmp);
        dev.iter().sum::<f64>() / (n - 1) as f64
    } else {
        f64::NAN
    };
    let stderr = (var / n as f64).sqrt();
    Summary {
        n,
        mean: m,
        stderr,
        ci_low: m - Z95 * stderr,
        ci_high: m + Z95 * stderr,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    /// Wilson score interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn wilson(successes: u64, trials: u64) -> Proportion {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Proportion {
        successes,
        trials,
        estimate: p,
        // the interval ends exactly at 0 or 1 when the estimate does
        ci_low: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
        ci_high: if successes == trials { 1.0 } else { (center + half).min(1.0) },
    }
}

/// Least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_values() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((s.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!((s.half_width() - 1.96 * s.stderr).abs() < 1e-15);
    }

    #[test]
    fn order_does_not_matter() {
        let v = [0.1, 1e10, -3.3, 7.0, 1e-7, 2.2];
        let mut w = v;
        w.reverse();
        assert_eq!(summarize(&v), summarize(&w));
    }

    #[test]
    fn wilson_at_zero_and_one() {
        let p = wilson(0, 100);
        assert_eq!(p.ci_low, 0.0);
        assert!(p.ci_high > 0.0 && p.ci_high < 0.05);
        let p = wilson(100, 100);
        assert_eq!(p.ci_high, 1.0);
    }

    #[test]
    fn slope_of_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        assert!((slope(&x, &y) - 2.0).abs() < 1e-15);
    }
}
