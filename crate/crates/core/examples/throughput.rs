//! Measures simulator throughput in particle-steps per second.

use std::time::Instant;

use bbm_core::{run, OffspringLaw, ParticleConfiguration, SimConfig};

fn main() {
    let law = OffspringLaw::binary();
    let init = ParticleConfiguration::new(0.0, vec![3.0; 200]).unwrap();
    let sim = SimConfig::new(0.01, 7, 100.0);
    let start = Instant::now();
    let mut steps = 0u64;
    for seed in 0..20 {
        steps += run(&init, &sim.clone().with_seed(seed), &law).unwrap().particle_steps;
    }
    let secs = start.elapsed().as_secs_f64();
    println!("{steps} particle-steps in {secs:.2} s: {:.3e} per second", steps as f64 / secs);
}
