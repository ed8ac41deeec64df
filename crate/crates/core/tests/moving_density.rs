//! The leading-order density of a Brownian particle killed at the origin
//! and at the moving curve, against a direct simulation of such particles.

use bbm_core::heatkernel::{moving_density_q, BoundaryQuery};
use bbm_core::rng::StreamRng;
use bbm_core::CriticalCurve;

/// Surviving end positions of driftless Brownian paths from `x` at time 0,
/// killed on `0` and on the curve with bridge corrections on each step.
fn killed_paths(curve: &CriticalCurve, x: f64, s: f64, h: f64, n: usize, seed: u64) -> Vec<f64> {
    let steps = (s / h).round() as usize;
    let h = s / steps as f64;
    let sd = h.sqrt();
    let mut out = Vec::new();
    'paths: for i in 0..n {
        let mut rng = StreamRng::new(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        let mut pos = x;
        for k in 0..steps {
            let b0 = curve.level_raw(k as f64 * h);
            let b1 = curve.level_raw((k + 1) as f64 * h);
            let next = pos + sd * rng.normal();
            if next <= 0.0 || next >= b1 {
                continue 'paths;
            }
            let low = (-2.0 * pos * next / h).exp();
            let high = (-2.0 * (b0 - pos) * (b1 - next) / h).exp();
            if rng.uniform() < low || rng.uniform() < high {
                continue 'paths;
            }
            pos = next;
        }
        out.push(pos);
    }
    out
}

#[test]
fn histogram_matches_leading_order_density() {
    let (t, offset, s) = (1000.0, 1.0, 200.0);
    let curve = CriticalCurve::new(t, offset).unwrap();
    let x = curve.level_raw(0.0) / 2.0;
    let n = 100_000;
    let ends = killed_paths(&curve, x, s, 0.25, n, 3);
    let ls = curve.level_raw(s);

    let bins = 10;
    let width = ls / bins as f64;
    let mut counts = vec![0usize; bins];
    for &y in &ends {
        counts[((y / width) as usize).min(bins - 1)] += 1;
    }

    // The leading-order density carries a factor e^{O((t-s)^{-1/3})}.
    let band = (2.0 * (t - s).powf(-1.0 / 3.0)).exp();
    let density = |y: f64| {
        moving_density_q(&BoundaryQuery { t, offset, r: 0.0, s, x, y }).unwrap()
    };
    for (b, &count) in counts.iter().enumerate().skip(1).take(bins - 2) {
        let lo = b as f64 * width;
        let predicted = (0..20)
            .map(|j| density(lo + (j as f64 + 0.5) * width / 20.0))
            .sum::<f64>()
            * width
            / 20.0;
        let observed = count as f64 / n as f64;
        let se = (observed / n as f64).sqrt();
        assert!(
            observed <= predicted * band + 4.0 * se && observed >= predicted / band - 4.0 * se,
            "bin {b}: {observed} vs {predicted}"
        );
    }
}
