//! Small statistics helpers shared by the Monte Carlo experiments.

use statrs::function::erf::erfc;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of `max_{t<=1} W_t` for standard Brownian motion (reflection principle).
pub fn brownian_max_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 * normal_cdf(x) - 1.0
    }
}

/// One-sample Kolmogorov–Smirnov distance `sup |F_n - F|`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        // ties: step the empirical CDF over the whole block at once
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        let below = i as f64 / n;
        let above = (j + 1) as f64 / n;
        d = d.max((f - below).abs()).max((above - f).abs());
        i = j + 1;
    }
    d
}

/// Dvoretzky–Kiefer–Wolfowitz half-width at confidence `1 - alpha`.
pub fn dkw_band(samples: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * samples as f64)).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample variance, from the empirical fourth moment.
pub fn variance_standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2).max(0.0) / n).sqrt()
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Least-squares line `y = intercept + slope x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// `-sum p log p` with `0 log 0 = 0`.
pub fn shannon(masses: &[f64]) -> f64 {
    masses
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Numerically stable running `log sum exp`.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSumExp {
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.scaled += other.scaled * (other.max - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_cdf_reference_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-10);
        assert_relative_eq!(normal_cdf(-1.0), 0.15865525393145707, epsilon = 1e-10);
    }

    #[test]
    fn ks_of_uniform_grid() {
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert_relative_eq!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn ks_handles_ties() {
        // all mass at 0.5 vs uniform: sup is 0.5
        let xs = vec![0.5; 8];
        assert_relative_eq!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [0.3, -2.0, 5.5, 1.0, 5.5];
        let mut acc = LogSumExp::default();
        for &x in &xs {
            acc.push(x);
        }
        let direct = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(acc.value(), direct, epsilon = 1e-14);

        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        for &x in &xs[..2] {
            a.push(x);
        }
        for &x in &xs[2..] {
            b.push(x);
        }
        a.merge(&b);
        assert_relative_eq!(a.value(), direct, epsilon = 1e-14);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (a, b) = linear_fit(&xs, &ys);
        assert_relative_eq!(a, 2.0, epsilon = 1e-12);
        assert_relative_eq!(b, -0.5, epsilon = 1e-12);
    }
}
