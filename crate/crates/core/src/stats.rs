//! Empirical distributions, Kolmogorov-Smirnov distances and Monte Carlo
//! error estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values with optional nonnegative weights (uniform when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite value {v}")));
        }
        Ok(Self {
            values,
            weights: None,
        })
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut sample = Self::new(values)?;
        if weights.len() != sample.values.len() {
            return Err(Error::InvalidSample(format!(
                "{} weights for {} values",
                weights.len(),
                sample.values.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidSample("weights must be finite and nonnegative".into()));
        }
        if !sample.values.is_empty() && weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidSample("weights must have positive total".into()));
        }
        sample.weights = Some(weights);
        Ok(sample)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    fn total_weight(&self) -> f64 {
        self.weights
            .as_ref()
            .map_or(self.values.len() as f64, |w| w.iter().sum())
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.values.is_empty() {
            Err(Error::EmptySample)
        } else {
            Ok(())
        }
    }

    /// Distinct values in increasing order with the normalised mass at each.
    fn atoms(&self) -> Vec<(f64, f64)> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        let total = self.total_weight();
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for i in idx {
            let (v, w) = (self.values[i], self.weight(i) / total);
            match atoms.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => atoms.push((v, w)),
            }
        }
        atoms
    }
}

/// Weighted fraction of values `<= x`.
pub fn ecdf(sample: &Sample, x: f64) -> Result<f64> {
    sample.require_nonempty()?;
    let below: f64 = (0..sample.len())
        .filter(|&i| sample.values[i] <= x)
        .map(|i| sample.weight(i))
        .sum();
    Ok((below / sample.total_weight()).min(1.0))
}

/// `sup_x |F_n(x) - F(x)|`, attained at a jump of the (weighted) ECDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &Sample, cdf: F) -> Result<f64> {
    sample.require_nonempty()?;
    let mut before = 0.0;
    let mut d: f64 = 0.0;
    for (v, w) in sample.atoms() {
        let f = cdf(v);
        let after = (before + w).min(1.0);
        d = d.max((f - before).abs()).max((after - f).abs());
        before = after;
    }
    Ok(d)
}

/// Sample mean (the exponential MLE) with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub mean: f64,
    pub ci95: (f64, f64),
}

pub fn exp_mean_fit(sample: &Sample) -> Result<ExpFit> {
    if let Some(v) = sample.values.iter().find(|v| **v <= 0.0) {
        return Err(Error::InvalidSample(format!("nonpositive value {v} in exponential fit")));
    }
    let (mean, se) = mc_mean_se(sample)?;
    Ok(ExpFit {
        mean,
        ci95: (mean - 1.96 * se, mean + 1.96 * se),
    })
}

/// Mean and standard error `sd / sqrt(n)` of the (unweighted) values.
pub fn mc_mean_se(sample: &Sample) -> Result<(f64, f64)> {
    sample.require_nonempty()?;
    let n = sample.len() as f64;
    let mean = sample.values.iter().sum::<f64>() / n;
    if sample.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = sample.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn integral(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

/// Equal-width histogram over `[lo, hi]`, normalised to integrate to 1.
/// Values outside the range are dropped before normalising.
pub fn histogram_on(sample: &Sample, bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    sample.require_nonempty()?;
    if bins < 1 {
        return Err(Error::InvalidSample("need at least one bin".into()));
    }
    if !(lo < hi) {
        return Err(Error::InvalidSample(format!("empty range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for i in 0..sample.len() {
        let v = sample.values[i];
        if v < lo || v > hi {
            continue;
        }
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += sample.weight(i);
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidSample("no mass inside the histogram range".into()));
    }
    let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let density = counts.iter().map(|c| c / (total * width)).collect();
    Ok(Histogram {
        edges,
        density,
        counts,
    })
}

/// Histogram over the sample range.
pub fn histogram_density(sample: &Sample, bins: usize) -> Result<Histogram> {
    sample.require_nonempty()?;
    let lo = sample.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        histogram_on(sample, bins, lo - 0.5, hi + 0.5)
    } else {
        histogram_on(sample, bins, lo, hi)
    }
}

/// Empirical `p`-quantile (lower interpolation-free order statistic).
pub fn quantile(sample: &Sample, p: f64) -> Result<f64> {
    sample.require_nonempty()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidSample(format!("quantile level {p} outside [0, 1]")));
    }
    let mut acc = 0.0;
    let atoms = sample.atoms();
    for &(v, w) in &atoms {
        acc += w;
        if acc >= p - 1e-15 {
            return Ok(v);
        }
    }
    Ok(atoms.last().expect("nonempty").0)
}

/// Spearman rank correlation of paired samples (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidSample("paired samples differ in length".into()));
    }
    if xs.len() < 2 {
        return Err(Error::EmptySample);
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    Ok(pearson(&rx, &ry))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use proptest::prelude::*;

    fn sample(v: &[f64]) -> Sample {
        Sample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ecdf_values() {
        let s = sample(&[1.0, 2.0, 3.0]);
        assert!((ecdf(&s, 2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ecdf(&s, 0.5).unwrap(), 0.0);
        assert_eq!(ecdf(&s, 3.5).unwrap(), 1.0);
        let w = Sample::weighted(vec![1.0, 2.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(ecdf(&w, 1.5).unwrap(), 0.25);
        assert_eq!(ecdf(&sample(&[]), 1.0), Err(Error::EmptySample));
    }

    #[test]
    fn weighted_sample_validation() {
        assert!(Sample::weighted(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(Sample::weighted(vec![1.0], vec![-1.0]).is_err());
        assert!(Sample::weighted(vec![1.0, 2.0], vec![0.0, 0.0]).is_err());
        assert!(Sample::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn ks_at_quantiles() {
        let n = 50;
        let values: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        let d = ks_statistic(&sample(&values), |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d <= 1.0 / (n + 1) as f64 + 1e-12, "{d}");
    }

    #[test]
    fn ks_against_own_ecdf() {
        let s = sample(&[0.3, 1.2, 1.9, 4.0, 5.5, 7.0]);
        let d = ks_statistic(&s, |x| ecdf(&s, x).unwrap()).unwrap();
        assert!(d <= 1.0 / s.len() as f64 + 1e-15);
    }

    #[test]
    fn ks_exponential_draws() {
        let mut rng = StreamRng::new(20_261_014);
        let v: Vec<f64> = (0..10_000).map(|_| rng.exp1()).collect();
        let d = ks_statistic(&sample(&v), |x| 1.0 - (-x.max(0.0)).exp()).unwrap();
        assert!(d < 0.025, "{d}");
    }

    #[test]
    fn weighted_ks_matches_replicated_sample() {
        let w = Sample::weighted(vec![0.2, 0.5, 0.9], vec![1.0, 2.0, 1.0]).unwrap();
        let r = sample(&[0.2, 0.5, 0.5, 0.9]);
        let f = |x: f64| x.clamp(0.0, 1.0);
        assert!((ks_statistic(&w, f).unwrap() - ks_statistic(&r, f).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn exp_fit_values() {
        let fit = exp_mean_fit(&sample(&[2.5; 10])).unwrap();
        assert_eq!(fit.mean, 2.5);
        assert_eq!(fit.ci95, (2.5, 2.5));
        assert_eq!(exp_mean_fit(&sample(&[1.0, 3.0])).unwrap().mean, 2.0);
        assert!(exp_mean_fit(&sample(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn exp_fit_width_scales_as_inverse_root_n() {
        let mut rng = StreamRng::new(7);
        let big: Vec<f64> = (0..40_000).map(|_| rng.exp1()).collect();
        let width = |v: &[f64]| {
            let f = exp_mean_fit(&sample(v)).unwrap();
            f.ci95.1 - f.ci95.0
        };
        let ratio = width(&big[..10_000]) / width(&big);
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn mean_se_values() {
        assert_eq!(mc_mean_se(&sample(&[2.0, 2.0, 2.0])).unwrap(), (2.0, 0.0));
        let mut rng = StreamRng::new(11);
        let v: Vec<f64> = (0..10_000).map(|_| rng.normal()).collect();
        let (_, se) = mc_mean_se(&sample(&v)).unwrap();
        assert!((se * 100.0 - 1.0).abs() < 0.2);
        let fit = exp_mean_fit(&sample(&[0.5, 1.5, 4.0])).unwrap();
        assert_eq!(fit.mean, mc_mean_se(&sample(&[0.5, 1.5, 4.0])).unwrap().0);
    }

    #[test]
    fn histogram_normalisation() {
        let mut rng = StreamRng::new(3);
        let v: Vec<f64> = (0..5000).map(|_| rng.normal()).collect();
        let h = histogram_density(&sample(&v), 37).unwrap();
        assert!((h.integral() - 1.0).abs() < 1e-12);
        let h = histogram_density(&sample(&[1.0, 1.0]), 4).unwrap();
        assert!((h.integral() - 1.0).abs() < 1e-12);
        assert!(histogram_density(&sample(&[1.0]), 0).is_err());
        assert!(histogram_density(&sample(&[]), 3).is_err());
    }

    #[test]
    fn quantiles_and_ranks() {
        let s = sample(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!(quantile(&s, 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&s, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&s, 1.0).unwrap(), 5.0);
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 100.0]).unwrap();
        assert!((rho - 1.0).abs() < 1e-15);
        let rho = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((rho + 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn ecdf_is_monotone(v in prop::collection::vec(-10.0f64..10.0, 1..50), a in -12.0f64..12.0, b in -12.0f64..12.0) {
            let s = Sample::new(v).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(ecdf(&s, lo).unwrap() <= ecdf(&s, hi).unwrap());
            prop_assert_eq!(ecdf(&s, -20.0).unwrap(), 0.0);
            prop_assert_eq!(ecdf(&s, 20.0).unwrap(), 1.0);
        }

        #[test]
        fn ks_invariant_under_increasing_maps(v in prop::collection::vec(0.01f64..5.0, 1..60)) {
            let f = |x: f64| 1.0 - (-x.max(0.0)).exp();
            let d1 = ks_statistic(&Sample::new(v.clone()).unwrap(), f).unwrap();
            // Apply g(x) = x^3 + x to the sample and g^{-1} inside the cdf.
            let g = |x: f64| x * x * x + x;
            let g_inv = |y: f64| {
                let (mut lo, mut hi) = (0.0f64, 6.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) < y { lo = mid } else { hi = mid }
                }
                0.5 * (lo + hi)
            };
            let mapped: Vec<f64> = v.iter().map(|&x| g(x)).collect();
            let d2 = ks_statistic(&Sample::new(mapped).unwrap(), |y| f(g_inv(y))).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-9);
        }
    }
}
