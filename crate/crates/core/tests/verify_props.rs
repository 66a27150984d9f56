//! Oracle-suite properties on synthesized and random coupling pairs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syncnet_core::corpus;
use syncnet_core::numerics::{kron, spectral_norm};
use syncnet_core::synthesis::{synthesize, SynthesisOptions};
use syncnet_core::topology::Topology;
use syncnet_core::verify::{
    chain_sums, check_partition_identities, check_transition_limit, lemma2_alpha,
    projection_product_norm,
};

#[test]
fn partition_identities_hold_on_synthesized_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(701);
    let opts = SynthesisOptions::default();
    let mut checked = 0;
    while checked < 8 {
        let (n, unit_dim, m) = corpus::random_system_dims(&mut rng);
        if !(1..=6).contains(&unit_dim) {
            continue;
        }
        let sample = corpus::random_neutrally_stable_system::<f64, _>(&mut rng, n, unit_dim, m);
        let result = synthesize(&sample.system, &opts).unwrap();
        let report =
            check_partition_identities(&result.rotation, &result.measurement, 10, 701 + checked);
        assert!(report.pass(), "{report:?}");
        checked += 1;
    }
}

#[test]
fn alpha_equals_the_zero_pick_norm_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(709);
    for _ in 0..10 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=n.min(3));
        let (q, h) = corpus::random_coupling_pair::<f64, _>(&mut rng, n, m);
        let alpha = lemma2_alpha(&q, &h).unwrap();
        assert!(alpha < 1.0);
        let family = chain_sums(&q, &h, n);
        assert!((alpha - spectral_norm(&family[0])).abs() <= 1e-14);
        assert!((alpha - projection_product_norm(&q, &h, n)).abs() <= 1e-14);
    }
}

/// For a doubly stochastic topology the stacked rotated recursion is a
/// contraction: the norm of the rotated stacked state never increases.
#[test]
fn doubly_stochastic_recursion_never_expands() {
    let mut rng = ChaCha8Rng::seed_from_u64(719);
    let p = 4;
    // Symmetric circulant mixing: doubly stochastic and connected.
    let mut lambda = DMatrix::zeros(p, p);
    for i in 0..p {
        lambda[(i, i)] = 0.5;
        lambda[(i, (i + 1) % p)] = 0.25;
        lambda[(i, (i + p - 1) % p)] = 0.25;
    }
    let topo = Topology::new(lambda).unwrap();
    assert!(topo.is_doubly_stochastic());

    for _ in 0..5 {
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(1..=n);
        let (q, h) = corpus::random_coupling_pair::<f64, _>(&mut rng, n, m);
        let identity_p = DMatrix::identity(p, p);
        let mut w = DVector::from_fn(p * n, |_, _| rng.gen_range(-1.0f64..1.0));
        let mut rotated = h.clone();
        let mut previous = w.norm();
        for _ in 0..200 {
            let proj = rotated.transpose() * &rotated;
            let comp = DMatrix::identity(n, n) - &proj;
            let factor = kron(&identity_p, &comp) + kron(topo.matrix(), &proj);
            w = factor * w;
            let current = w.norm();
            assert!(current <= previous * (1.0 + 1e-12));
            previous = current;
            rotated = &rotated * &q;
        }
    }
}

#[test]
fn transition_products_settle_on_random_scenarios() {
    let mut rng = ChaCha8Rng::seed_from_u64(727);
    for _ in 0..4 {
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(1..=n);
        let (q, h) = corpus::random_contracting_pair::<f64, _>(&mut rng, n, m, 0.85);
        let p = rng.gen_range(2..=4);
        let topo = corpus::random_mixing_topology::<f64, _>(&mut rng, p, 0.5, 0.9);
        let report = check_transition_limit(&q, &h, &topo, 1000).unwrap();
        assert!(
            report.pass(1e-6),
            "final deviation {}",
            report.final_deviation
        );
    }
}
