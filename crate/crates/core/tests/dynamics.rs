use copresence_core::simdyn::*;
use copresence_core::spatial::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn excited_ring(seed: u64) -> (RingTopology, SimState) {
    let topo = RingTopology::default();
    let mut s = build_ring(&topo, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in s.velocities.iter_mut() {
        *v = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.2;
    }
    (topo, s)
}

/// Secular drift: mean energy over the last window against the first. The
/// bounded oscillation of a symplectic step is reported separately.
fn drift(seed: u64) -> (f64, f64) {
    let (topo, mut s) = excited_ring(seed);
    let ip = IntegratorParams { dt: topo.stability_bound() / 10.0, friction: 0.0, temperature: 0.0, seed: 0 };
    let mut energies = vec![total_energy(&s, &topo, &[])];
    for _ in 0..10_000 {
        s = step(&s, &topo, &[], &ip).unwrap();
        energies.push(total_energy(&s, &topo, &[]));
    }
    let e0 = energies[0];
    let w = 1000;
    let head = energies[..w].iter().sum::<f64>() / w as f64;
    let tail = energies[energies.len() - w..].iter().sum::<f64>() / w as f64;
    let swing = energies.iter().map(|e| ((e - e0) / e0).abs()).fold(0.0, f64::max);
    (((tail - head) / e0).abs(), swing)
}

#[test]
fn energy_is_conserved_without_thermostat() {
    for seed in [1, 2, 3] {
        let (d, swing) = drift(seed);
        assert!(d < 1e-4, "seed {seed}: drift {d}");
        assert!(swing < 1e-2, "seed {seed}: swing {swing}");
    }
}

#[test]
fn thermostatted_runs_replay_bitwise() {
    let run = || {
        let (topo, mut s) = excited_ring(4);
        let ip = IntegratorParams { seed: 77, ..Default::default() };
        let pull = InteractionForce { owner: 1, target_bead: 3, anchor: Vec3::new(0.5, 1.5, 0.0), stiffness: 50.0, max_force: 5.0 };
        for i in 0..2000 {
            let its = if (500..1500).contains(&i) { vec![pull] } else { vec![] };
            s = step(&s, &topo, &its, &ip).unwrap();
        }
        s
    };
    let (a, b) = (run(), run());
    let bits = |s: &SimState| -> Vec<u64> {
        s.positions.iter().chain(&s.velocities).flat_map(|v| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn grabbed_bead_follows_anchor() {
    let topo = RingTopology::default();
    let mut s = build_ring(&topo, None).unwrap();
    let anchor = s.positions[0] + Vec3::new(0.0, 0.3, 0.0);
    let pull = InteractionForce { owner: 1, target_bead: 0, anchor, stiffness: 50.0, max_force: 5.0 };
    let ip = IntegratorParams { temperature: 0.0, ..Default::default() };
    let start = s.positions[0].distance(anchor);
    for _ in 0..3000 {
        s = step(&s, &topo, &[pull], &ip).unwrap();
    }
    assert!(s.positions[0].distance(anchor) < start / 2.0);
}
