//! The whole pipeline instantiates at `f32` as well as `f64`; single
//! precision gets correspondingly looser tolerances.

use syncnet_core::nalgebra::DMatrix;
use syncnet_core::numerics::{kron, projector_from_range, rotation, spectral_norm};
use syncnet_core::simulate::{run, Coupling, InitialCondition, Scenario};
use syncnet_core::synthesis::{synthesize, SynthesisOptions};
use syncnet_core::sysmodel::{check_neutral_stability, LinearSystem};
use syncnet_core::topology::Topology;

#[test]
fn primitives_work_in_single_precision() {
    let a = rotation(0.5f32);
    assert!((spectral_norm(&a) - 1.0).abs() < 1e-5);
    let k = kron(&a, &DMatrix::<f32>::identity(2, 2));
    assert_eq!(k.nrows(), 4);
    let (p, h) =
        projector_from_range(&DMatrix::<f32>::from_row_slice(2, 1, &[1.0, 0.0]), 1e-5).unwrap();
    assert!((p.matrix()[(0, 0)] - 1.0).abs() < 1e-6);
    assert_eq!(h.nrows(), 1);
}

#[test]
fn synthesis_and_simulation_work_in_single_precision() {
    let sys =
        LinearSystem::<f32>::new(rotation(0.5f32), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))
            .unwrap();
    assert!(check_neutral_stability(&sys, 1e-4f32).neutrally_stable);

    let opts = SynthesisOptions::<f32> {
        unit_tol: 1e-4,
        invariant_tol: 1e-5,
        rank_tol: 1e-5,
        ..Default::default()
    };
    let result = synthesize(&sys, &opts).unwrap();
    assert!((result.gain[(0, 0)] - 0.5f32.cos()).abs() < 1e-5);
    assert!((result.gain[(1, 0)] - 0.5f32.sin()).abs() < 1e-5);

    let ring = Topology::<f32>::new(DMatrix::from_row_slice(
        3,
        3,
        &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5],
    ))
    .unwrap();
    let mut scenario = Scenario::new(
        Coupling::OutputFeedback {
            system: sys,
            gain: result.gain,
        },
        ring,
        InitialCondition::Uniform { seed: 12 },
        400,
    );
    scenario.sync_threshold = 1e-3;
    let trace = run(&scenario).unwrap();
    let errors = trace.sync_error.as_ref().unwrap();
    assert!(errors[400] < 1e-3, "final error {}", errors[400]);
}
