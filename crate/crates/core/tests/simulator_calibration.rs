//! Monte Carlo checks of the simulator against closed-form expectations.

use bbm_core::model::observable_v;
use bbm_core::simulator::{map_runs, survival_probability};
use bbm_core::{run_batch, OffspringLaw, ParticleConfiguration, SimConfig};

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Far from the origin the population grows like `e^{beta (m-1) s} = e^{s/2}`.
#[test]
fn unabsorbed_population_mean_grows_at_rate_one_half() {
    let law = OffspringLaw::binary();
    let initial = ParticleConfiguration::single(60.0).unwrap();
    let sim = SimConfig::new(1e-2, 11, 2.0).with_snapshots(vec![1.0, 2.0]);
    let counts: Vec<(f64, f64)> = map_runs(&initial, &sim, &law, 0..40_000, 1, |_, r| {
        let r = r.unwrap();
        (r.snapshots[0].len() as f64, r.snapshots[1].len() as f64)
    });
    for (k, s) in [(0usize, 1.0f64), (1, 2.0)] {
        let v: Vec<f64> = counts.iter().map(|c| if k == 0 { c.0 } else { c.1 }).collect();
        let (m, se) = mean_se(&v);
        let want = (s / 2.0).exp();
        assert!((m - want).abs() < 4.0 * se, "s = {s}: {m} +- {se} vs {want}");
    }
}

/// `V = sum x e^x` is a martingale for the absorbed process.
#[test]
fn weighted_sum_is_a_martingale() {
    let law = OffspringLaw::binary();
    let x0 = 2.0f64;
    let initial = ParticleConfiguration::single(x0).unwrap();
    let sim = SimConfig::new(1e-3, 5, 3.0).with_snapshots(vec![1.0, 3.0]);
    let runs = run_batch(&initial, &sim, &law, 20_000, 1).unwrap();
    let v0 = x0 * x0.exp();
    for k in 0..2 {
        let v: Vec<f64> = runs.iter().map(|r| observable_v(&r.snapshots[k])).collect();
        let (m, se) = mean_se(&v);
        assert!((m - v0).abs() < 4.0 * se, "snapshot {k}: {m} +- {se} vs {v0}");
    }
}

/// Survival estimates at `dt` and `dt / 2` agree within their errors.
#[test]
fn survival_is_stable_under_step_refinement() {
    let law = OffspringLaw::binary();
    let initial = ParticleConfiguration::single(2.0).unwrap();
    let coarse = SimConfig::new(1e-2, 21, 8.0);
    let fine = SimConfig::new(5e-3, 22, 8.0);
    let (p1, s1) = survival_probability(&initial, &coarse, &law, 20_000, 1).unwrap();
    let (p2, s2) = survival_probability(&initial, &fine, &law, 20_000, 1).unwrap();
    assert!(p1 > 0.05 && p2 > 0.05);
    assert!((p1 - p2).abs() < 4.0 * (s1 * s1 + s2 * s2).sqrt(), "{p1} vs {p2}");
}

#[test]
fn batches_do_not_depend_on_worker_count() {
    let law = OffspringLaw::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
    let initial = ParticleConfiguration::new(0.0, vec![1.0, 3.0, 4.5]).unwrap();
    let sim = SimConfig::new(1e-2, 99, 10.0).with_snapshots(vec![5.0]);
    let one = run_batch(&initial, &sim, &law, 64, 1).unwrap();
    let eight = run_batch(&initial, &sim, &law, 64, 8).unwrap();
    assert_eq!(one, eight);
}
