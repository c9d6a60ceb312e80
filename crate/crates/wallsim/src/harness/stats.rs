//! Sample statistics used by the experiments.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("samples have different lengths ({0} and {1})")]
    Length(usize, usize),
    #[error("sample has zero variance")]
    Degenerate,
    #[error("sample contains NaN")]
    NotANumber,
}

/// Sorted samples with an empirical distribution function.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::Empty);
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(StatsError::NotANumber);
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Fraction of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.samples.partition_point(|&v| v <= x) as f64 / self.samples.len() as f64
    }

    /// Type-7 quantile (linear interpolation between order statistics).
    pub fn quantile(&self, p: f64) -> f64 {
        let h = (self.samples.len() - 1) as f64 * p.clamp(0.0, 1.0);
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        self.samples[lo] + (h - lo as f64) * (self.samples[hi] - self.samples[lo])
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }
}

pub fn ecdf(samples: &[f64], x: f64) -> Result<f64, StatsError> {
    Ok(EmpiricalDistribution::new(samples.to_vec())?.cdf(x))
}

/// Two-sample Kolmogorov–Smirnov distance, exact over the pooled points.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let a = EmpiricalDistribution::new(a.to_vec())?;
    let b = EmpiricalDistribution::new(b.to_vec())?;
    Ok(ks_between(&a, &b))
}

pub fn ks_between(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    a.samples().iter().chain(b.samples()).map(|&x| (a.cdf(x) - b.cdf(x)).abs()).fold(0.0, f64::max)
}

/// One-sample KS distance against a continuous CDF.
pub fn ks_against(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, StatsError> {
    let e = EmpiricalDistribution::new(samples.to_vec())?;
    let n = e.len() as f64;
    Ok(e.samples()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max))
}

/// Asymptotic one-sample KS critical value at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// DKW half-width of a uniform `1 - delta` band.
pub fn dkw_halfwidth(n: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

pub fn mean(a: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(a.iter().sum::<f64>() / a.len() as f64)
}

/// Unbiased sample variance.
pub fn variance(a: &[f64]) -> Result<f64, StatsError> {
    let m = mean(a)?;
    if a.len() < 2 {
        return Ok(0.0);
    }
    Ok(a.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (a.len() - 1) as f64)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Length(a.len(), b.len()));
    }
    let (ma, mb) = (mean(a)?, mean(b)?);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok(sab / (saa * sbb).sqrt())
}

pub fn se_bernoulli(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::Length(xs.len(), ys.len()));
    }
    let (mx, my) = (mean(xs)?, mean(ys)?);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx)
}

/// `sup_{s,t} |F_joint(s,t) - F_a(s) F_b(t)|` over all pairs of sample
/// coordinates.
pub fn joint_product_distance(pairs: &[(f64, f64)]) -> Result<f64, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = pairs.len();
    let rank = |key: fn(&(f64, f64)) -> f64| {
        let mut values: Vec<f64> = pairs.iter().map(key).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let ranks: Vec<usize> = pairs.iter().map(|p| values.partition_point(|&v| v < key(p))).collect();
        (values.len(), ranks)
    };
    let (na, ra) = rank(|p| p.0);
    let (nb, rb) = rank(|p| p.1);
    let mut by_a: Vec<Vec<usize>> = vec![Vec::new(); na];
    for i in 0..n {
        by_a[ra[i]].push(rb[i]);
    }
    let mut marginal_b = vec![0usize; nb];
    for &r in &rb {
        marginal_b[r] += 1;
    }
    let mut cum_b = vec![0usize; nb];
    let mut acc = 0;
    for (j, c) in marginal_b.iter().enumerate() {
        acc += c;
        cum_b[j] = acc;
    }
    let mut column = vec![0usize; nb];
    let mut below_a = 0usize;
    let mut worst: f64 = 0.0;
    let nf = n as f64;
    for group in &by_a {
        for &j in group {
            column[j] += 1;
        }
        below_a += group.len();
        let fa = below_a as f64 / nf;
        let mut joint = 0usize;
        for j in 0..nb {
            joint += column[j];
            let d = (joint as f64 / nf - fa * cum_b[j] as f64 / nf).abs();
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_values() {
        let x = [0.3, -1.0, 2.5, 2.5];
        assert_eq!(ks_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ks_distance(&[], &[1.0]), Err(StatsError::Empty));
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 2.0]), Err(StatsError::Degenerate));
    }

    #[test]
    fn ecdf_is_right_continuous() {
        let s = [1.0, 2.0, 2.0, 3.0];
        assert_eq!(ecdf(&s, 0.5).unwrap(), 0.0);
        assert_eq!(ecdf(&s, 2.0).unwrap(), 0.75);
        assert_eq!(ecdf(&s, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn ks_brute_force() {
        let a = [0.1, 0.4, 0.4, 0.9, 1.3];
        let b = [0.2, 0.4, 1.0];
        let grid = (-10..=20).map(|k| k as f64 * 0.1 + 0.05);
        let brute = grid
            .chain(a.iter().chain(&b).copied())
            .map(|x| (ecdf(&a, x).unwrap() - ecdf(&b, x).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!((ks_distance(&a, &b).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn quantiles_type_seven() {
        let e = EmpiricalDistribution::new(vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(e.quantile(0.0), 1.0);
        assert_eq!(e.quantile(1.0), 4.0);
        assert_eq!(e.median(), 2.5);
        assert_eq!(e.quantile(0.25), 1.75);
        assert_eq!(e.iqr(), 1.5);
    }

    #[test]
    fn dkw_and_critical_values() {
        assert!((dkw_halfwidth(1000, 0.01) - ((200f64).ln() / 2000.0).sqrt()).abs() < 1e-15);
        assert!((ks_critical(10_000, 0.01) - 0.016276).abs() < 1e-5);
    }

    #[test]
    fn slope_of_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 2.0).collect();
        assert!((ls_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn joint_product_brute_force() {
        let pairs = [(0.1, 2.0), (0.5, 1.0), (0.3, 3.0), (0.5, 0.5), (0.9, 2.0)];
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mut brute: f64 = 0.0;
        for &s in &xs {
            for &t in &ys {
                let joint = pairs.iter().filter(|p| p.0 <= s && p.1 <= t).count() as f64 / 5.0;
                let prod = ecdf(&xs, s).unwrap() * ecdf(&ys, t).unwrap();
                brute = brute.max((joint - prod).abs());
            }
        }
        assert!((joint_product_distance(&pairs).unwrap() - brute).abs() < 1e-15);
    }
}
