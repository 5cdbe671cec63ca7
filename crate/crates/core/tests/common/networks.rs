//! Random radial test networks with optional single-phase laterals.

use dlc_core::netmodel::{DlcEvent, Network};
use dlc_core::testing;
use nalgebra::Matrix3;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_network(rng: &mut ChaCha8Rng, n: usize) -> Network {
    let parents: Vec<usize> = (0..n - 1).map(|k| rng.gen_range(0..=k)).collect();
    let z: Vec<_> = (0..n - 1)
        .map(|_| {
            testing::coupled(
                rng.gen_range(0.05..0.6),
                rng.gen_range(0.05..0.5),
                rng.gen_range(0.0..0.4),
            )
        })
        .collect();
    let mut parts = testing::feeder(&parents, &z, 1);
    for k in 0..n - 1 {
        let up = parts.buses[parents[k]].1;
        let mut phases = up;
        if rng.gen_bool(0.3) {
            let keep = rng.gen_range(0..3);
            phases = [false; 3];
            phases[keep] = up[keep];
            if !phases.iter().any(|p| *p) {
                phases = up;
            }
        }
        parts.buses[k + 1].1 = phases;
        let mask = Matrix3::from_fn(|i, j| if phases[i] && phases[j] { 1.0 } else { 0.0 });
        parts.lines[k].r = parts.lines[k].r.component_mul(&mask);
        parts.lines[k].x = parts.lines[k].x.component_mul(&mask);
    }
    testing::scenario(parts, vec![], DlcEvent::none(1))
        .network
        .to_per_unit()
        .unwrap()
}

pub fn random_loads(rng: &mut ChaCha8Rng, net: &Network, scale: f64) -> Vec<[Complex64; 3]> {
    net.buses
        .iter()
        .enumerate()
        .map(|(b, bus)| {
            std::array::from_fn(|ph| {
                if b == 0 || !bus.phases[ph] {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(
                        rng.gen_range(-0.3..1.0) * scale,
                        rng.gen_range(-0.3..0.6) * scale,
                    )
                }
            })
        })
        .collect()
}
