//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them). Corpora are seeded
//! and fixed; convergence corpora admit members through a short-horizon
//! decay gate and then assert the full-horizon bound at the pinned
//! tolerance.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syncnet_core::corpus;
use syncnet_core::nalgebra::DMatrix;
use syncnet_core::numerics::spectral_norm;
use syncnet_core::simulate::{run, Coupling, InitialCondition, Scenario};
use syncnet_core::synthesis::{
    solve_invariant_form, synthesize, synthesize_dual, SynthesisOptions, DEFAULT_INVARIANT_MAX_ITER,
};
use syncnet_core::verify::{
    chain_sums, check_partition_identities, enumerate_chain_sum, lemma2_alpha,
    projection_product_norm,
};

fn report(name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance [{}] {}: {}",
        if pass { "PASS" } else { "FAIL" },
        name,
        detail
    );
    assert!(pass, "acceptance criterion failed: {name} ({detail})");
}

fn syncnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_syncnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

/// Criterion 1: construction invariants over a 100-system corpus with mixed
/// unit/stable spectra, inside the runtime budget.
#[test]
fn gain_construction_invariants() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE01);
    let opts = SynthesisOptions::default();
    let mut worst_form = 0.0f64;
    let mut worst_rotation = 0.0f64;
    let mut worst_measurement = 0.0f64;
    let mut worst_identity = 0.0f64;
    for _ in 0..100 {
        let (n, unit_dim, m) = corpus::random_system_dims(&mut rng);
        let sample = corpus::random_neutrally_stable_system::<f64, _>(&mut rng, n, unit_dim, m);
        let result = synthesize(&sample.system, &opts).expect("corpus synthesis succeeds");
        if result.unit_dim() == 0 {
            continue;
        }
        worst_form = worst_form.max(result.residuals.invariant_form);
        worst_rotation = worst_rotation.max(result.residuals.rotation_orthogonality);
        worst_measurement = worst_measurement.max(result.residuals.measurement_orthonormality);
        worst_identity = worst_identity.max(result.residuals.gain_identity);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_form <= 1e-10
        && worst_rotation <= 1e-9
        && worst_measurement <= 1e-10
        && worst_identity <= 1e-8
        && elapsed < 10.0;
    report(
        "gain construction invariants (100 systems)",
        pass,
        &format!(
            "form {worst_form:.2e} <= 1e-10, rotation {worst_rotation:.2e} <= 1e-9, \
             measurement {worst_measurement:.2e} <= 1e-10, identity {worst_identity:.2e} <= 1e-8, \
             {elapsed:.1}s < 10s"
        ),
    );
}

/// Draw a system whose synthesized transformed pair has a contraction
/// margin, so fixed-horizon assertions are meaningful.
fn margined_system(
    rng: &mut ChaCha8Rng,
) -> (
    syncnet_core::sysmodel::LinearSystem<f64>,
    syncnet_core::synthesis::GainSynthesis<f64>,
) {
    let opts = SynthesisOptions::default();
    loop {
        let n = rng.gen_range(2..=6);
        let unit_dim = rng.gen_range(1..=n);
        let m = rng.gen_range(1..=unit_dim.min(3));
        let sample = corpus::random_neutrally_stable_system::<f64, _>(rng, n, unit_dim, m);
        let result = synthesize(&sample.system, &opts).expect("corpus synthesis succeeds");
        let alpha = projection_product_norm(&result.rotation, &result.measurement, unit_dim);
        if alpha <= 0.85 {
            return (sample.system, result);
        }
    }
}

/// Run one scenario, gate on early decay, and return the full-horizon
/// verdict; `None` means the draw was rejected by the gate.
fn gated_final_error(scenario: &Scenario<f64>, horizon: usize) -> Option<(f64, f64)> {
    let trace = run(scenario).expect("scenario runs");
    let errors = trace.sync_error.as_ref().expect("connected topology");
    let scale = errors[0].max(1.0);
    if errors[horizon * 3 / 10] > 1e-2 * scale {
        return None;
    }
    Some((errors[horizon], scale))
}

/// Criterion 2: output-feedback loops synchronize to the propagated
/// stationary-weighted average on 25 system/topology combinations.
#[test]
fn output_feedback_synchronization() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE02);
    let horizon = 1000;
    let mut done = 0;
    let mut worst = 0.0f64;
    let mut asymmetric_seen = false;
    let mut unbalanced_seen = false;
    while done < 25 {
        let p = [3, 5, 8][done % 3];
        let (system, synth) = margined_system(&mut rng);
        let topo = corpus::random_mixing_topology::<f64, _>(&mut rng, p, 0.5, 0.9);
        let lambda = topo.matrix().clone();
        let scenario = Scenario::new(
            Coupling::OutputFeedback {
                system,
                gain: synth.gain,
            },
            topo,
            InitialCondition::Uniform {
                seed: 0xACCE02 + done as u64,
            },
            horizon,
        );
        let Some((final_error, scale)) = gated_final_error(&scenario, horizon) else {
            continue;
        };
        worst = worst.max(final_error / (1e-6 * scale));
        asymmetric_seen |= spectral_norm(&(&lambda - lambda.transpose())) > 1e-6;
        unbalanced_seen |= (0..p).any(|j| {
            let col: f64 = lambda.column(j).iter().sum();
            (col - 1.0).abs() > 1e-6
        });
        done += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 1.0 && asymmetric_seen && unbalanced_seen && elapsed < 30.0;
    report(
        "output-feedback synchronization (25 combinations)",
        pass,
        &format!(
            "worst e(1000)/bound {worst:.3e} <= 1, asymmetric {asymmetric_seen}, \
             unbalanced {unbalanced_seen}, {elapsed:.1}s < 30s"
        ),
    );
}

/// Criterion 3: the orthogonal loop synchronizes to the rotating weighted
/// average and conserves the rotated stationary-weighted mean to 1e-10.
#[test]
fn orthogonal_synchronization_and_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE03);
    let horizon = 1000;
    let mut done = 0;
    let mut worst = 0.0f64;
    let mut worst_drift = 0.0f64;
    while done < 10 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=n.min(3));
        let (q, h) = corpus::random_contracting_pair::<f64, _>(&mut rng, n, m, 0.85);
        let p = rng.gen_range(3..=8);
        let topo = corpus::random_mixing_topology::<f64, _>(&mut rng, p, 0.5, 0.9);
        let scenario = Scenario::new(
            Coupling::Orthogonal {
                rotation: q,
                measurement: h,
            },
            topo,
            InitialCondition::Uniform {
                seed: 0xACCE03 + done as u64,
            },
            horizon,
        );
        let trace = run(&scenario).expect("scenario runs");
        let errors = trace.sync_error.as_ref().unwrap();
        let scale = errors[0].max(1.0);
        if errors[horizon * 3 / 10] > 1e-2 * scale {
            continue;
        }
        worst = worst.max(errors[horizon] / (1e-6 * scale));
        worst_drift = worst_drift.max(trace.conservation_residual.unwrap());
        done += 1;
    }
    let pass = worst <= 1.0 && worst_drift <= 1e-10;
    report(
        "orthogonal-loop synchronization and conservation (10 scenarios)",
        pass,
        &format!(
            "worst e(1000)/bound {worst:.3e} <= 1, conservation drift {worst_drift:.2e} <= 1e-10"
        ),
    );
}

/// Criterion 4: the dual full-state loop synchronizes to the transposed
/// propagated average.
#[test]
fn dual_synchronization() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE04);
    let horizon = 1000;
    let mut done = 0;
    let mut worst = 0.0f64;
    while done < 10 {
        let (system, _) = margined_system(&mut rng);
        let (a_t, c_t) = system.dual();
        let dual = synthesize_dual(&a_t, &c_t, &SynthesisOptions::default())
            .expect("dual synthesis succeeds");
        let p = rng.gen_range(3..=8);
        let topo = corpus::random_mixing_topology::<f64, _>(&mut rng, p, 0.5, 0.9);
        let scenario = Scenario::new(
            Coupling::DualFullState {
                state_matrix: a_t,
                input_map: c_t,
                gain: dual.gain,
            },
            topo,
            InitialCondition::Uniform {
                seed: 0xACCE04 + done as u64,
            },
            horizon,
        );
        let Some((final_error, scale)) = gated_final_error(&scenario, horizon) else {
            continue;
        };
        worst = worst.max(final_error / (1e-6 * scale));
        done += 1;
    }
    let pass = worst <= 1.0;
    report(
        "dual-loop synchronization (10 scenarios)",
        pass,
        &format!("worst e(1000)/bound {worst:.3e} <= 1"),
    );
}

/// Criterion 5: the complement-product contraction constant is below 1 for
/// every observable pair, and exactly 1 for the unobservable control.
#[test]
fn contraction_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE05);
    let opts = SynthesisOptions::default();
    let mut worst_alpha = 0.0f64;
    // Pairs produced by the construction.
    let mut synthesized = 0;
    while synthesized < 15 {
        let (n, unit_dim, m) = corpus::random_system_dims(&mut rng);
        if unit_dim == 0 {
            continue;
        }
        let sample = corpus::random_neutrally_stable_system::<f64, _>(&mut rng, n, unit_dim, m);
        let result = synthesize(&sample.system, &opts).expect("corpus synthesis succeeds");
        let alpha = lemma2_alpha(&result.rotation, &result.measurement).expect("pair is valid");
        worst_alpha = worst_alpha.max(alpha);
        synthesized += 1;
    }
    // Raw random observable pairs.
    for _ in 0..15 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=n.min(3));
        let (q, h) = corpus::random_coupling_pair::<f64, _>(&mut rng, n, m);
        let alpha = lemma2_alpha(&q, &h).expect("pair is valid");
        worst_alpha = worst_alpha.max(alpha);
    }
    // Negative control: identity dynamics with a partial measurement never
    // contract.
    let control = projection_product_norm(
        &DMatrix::<f64>::identity(2, 2),
        &DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        2,
    );
    let pass = worst_alpha < 1.0 && (control - 1.0).abs() <= 1e-12;
    report(
        "contraction constants (30 observable pairs + negative control)",
        pass,
        &format!("worst alpha {worst_alpha:.6} < 1, unobservable control {control}"),
    );
}

/// Criterion 6: partition identities of the chain-sum family, recurrence
/// against enumeration, and the enumeration cardinality, for lengths up to
/// 10 on pairs with up to 6 states.
#[test]
fn chain_sum_partition_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE06);
    let mut worst_sum = 0.0f64;
    let mut worst_norm = 0.0f64;
    let mut worst_unit = 0.0f64;
    let mut worst_gap = 0.0f64;
    for case in 0..6 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=n.min(3));
        let (q, h) = corpus::random_coupling_pair::<f64, _>(&mut rng, n, m);
        for len in [1usize, 4, 7, 10] {
            let partition = check_partition_identities(&q, &h, len, 0xACCE06 + case);
            worst_sum = worst_sum.max(partition.sum_defect);
            worst_norm = worst_norm.max(partition.max_product_norm);
            worst_unit = worst_unit.max(partition.worst_unit_vector_defect);
            // Enumeration doubles as the cardinality check: it errors if the
            // number of products differs from the binomial coefficient.
            let family = chain_sums(&q, &h, len);
            for picks in 0..=len {
                let enumerated =
                    enumerate_chain_sum(&q, &h, picks, len).expect("cardinality matches");
                worst_gap = worst_gap.max(spectral_norm(&(&family[picks] - enumerated)));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_sum <= 1e-10
        && worst_norm <= 1.0 + 1e-12
        && worst_unit <= 1e-10
        && worst_gap <= 1e-12
        && elapsed < 60.0;
    report(
        "chain-sum partition identities (lengths to 10)",
        pass,
        &format!(
            "sum defect {worst_sum:.2e} <= 1e-10, max norm {worst_norm:.12} <= 1+1e-12, \
             unit-vector defect {worst_unit:.2e} <= 1e-10, recurrence gap {worst_gap:.2e} <= 1e-12, \
             {elapsed:.1}s < 60s"
        ),
    );
}

/// Independent oracle for the invariant form: assemble the invariance
/// operator entrywise over the symmetric basis and take its smallest
/// singular direction, normalized to trace n.
fn invariant_form_oracle(f: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f.nrows();
    let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
    let mut basis = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            if i == j {
                e[(i, i)] = 1.0;
            } else {
                e[(i, j)] = inv_sqrt2;
                e[(j, i)] = inv_sqrt2;
            }
            basis.push(e);
        }
    }
    let dim = basis.len();
    let mut op = DMatrix::zeros(n * n, dim);
    for (s, e) in basis.iter().enumerate() {
        for a in 0..n {
            for b in 0..n {
                let mut image = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        image += f[(k, a)] * e[(k, l)] * f[(l, b)];
                    }
                }
                op[(b * n + a, s)] = image - e[(a, b)];
            }
        }
    }
    let svd = op.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let (mut idx, mut min) = (0, f64::INFINITY);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < min {
            min = s;
            idx = i;
        }
    }
    let coeffs = v_t.row(idx).transpose();
    let mut r = DMatrix::zeros(n, n);
    for (s, e) in basis.iter().enumerate() {
        r += e * coeffs[s];
    }
    if r.trace() < 0.0 {
        r.neg_mut();
    }
    let scale = n as f64 / r.trace();
    r * scale
}

/// Criterion 7: the averaging solver agrees with the independent null-space
/// oracle, after normalizing both to trace n, on 50 single-block
/// unit-spectrum matrices (whose invariant form is unique up to scale).
#[test]
fn invariant_form_cross_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE07);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let f = corpus::random_unit_spectrum_block::<f64, _>(&mut rng);
        let n = f.nrows();
        let solved = solve_invariant_form(&f, 1e-12, DEFAULT_INVARIANT_MAX_ITER)
            .expect("solver converges on unit-spectrum blocks");
        let normalized = &solved * (n as f64 / solved.trace());
        let oracle = invariant_form_oracle(&f);
        worst = worst.max(spectral_norm(&(normalized - oracle)));
    }
    let pass = worst <= 1e-8;
    report(
        "invariant-form cross-validation (50 instances)",
        pass,
        &format!("worst normalized gap {worst:.2e} <= 1e-8"),
    );
}

/// Criterion 8: negative controls through the CLI: a disconnected topology
/// keeps its disagreement, and a defective state matrix is rejected by the
/// check command with exit 1.
#[test]
fn negative_controls() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("jordan.json"),
        r#"{
          "a": { "rows": 2, "cols": 2, "data": [1.0, 1.0, 0.0, 1.0] },
          "c": { "rows": 1, "cols": 2, "data": [1.0, 0.0] }
        }"#,
    )
    .unwrap();
    let check = syncnet(dir.path(), &["check", "jordan.json"]);
    let jordan_rejected = check.status.code() == Some(1);

    fs::write(
        dir.path().join("scenario.json"),
        r#"{
          "mode": "orthogonal",
          "topology": { "rows": 3, "cols": 3,
                        "data": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] },
          "q": { "rows": 2, "cols": 2,
                 "data": [0.5403023058681398, -0.8414709848078965, 0.8414709848078965, 0.5403023058681398] },
          "h": { "rows": 1, "cols": 2, "data": [1.0, 0.0] },
          "initial": { "seed": 8 },
          "horizon": 1000
        }"#,
    )
    .unwrap();
    let rejected = syncnet(dir.path(), &["simulate", "scenario.json", "neg"]);
    let gate_works = rejected.status.code() == Some(2);
    let allowed = syncnet(
        dir.path(),
        &["simulate", "scenario.json", "neg", "--allow-disconnected"],
    );
    let ran = allowed.status.code() == Some(0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("neg.summary.json")).unwrap())
            .unwrap();
    let disagreement = summary["final_disagreement"].as_f64().unwrap();
    let pass = jordan_rejected && gate_works && ran && disagreement > 1e-2;
    report(
        "negative controls (disconnected topology, defective state matrix)",
        pass,
        &format!(
            "defective rejected {jordan_rejected}, validation gate {gate_works}, \
             disagreement after 1000 uncoupled steps {disagreement:.3}"
        ),
    );
}

/// Criterion 9: a fixed seed reproduces the trace byte for byte.
#[test]
fn trace_determinism() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("scenario.json"),
        r#"{
          "mode": "output_coupled",
          "system": {
            "a": { "rows": 2, "cols": 2,
                   "data": [0.8775825618903728, -0.479425538604203, 0.479425538604203, 0.8775825618903728] },
            "c": { "rows": 1, "cols": 2, "data": [1.0, 0.0] }
          },
          "topology": { "rows": 3, "cols": 3,
                        "data": [0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5] },
          "gain": "synthesize",
          "initial": { "seed": 2718 },
          "horizon": 500,
          "record_states": true
        }"#,
    )
    .unwrap();
    let first = syncnet(dir.path(), &["simulate", "scenario.json", "first"]);
    let second = syncnet(dir.path(), &["simulate", "scenario.json", "second"]);
    let ok = first.status.code() == Some(0) && second.status.code() == Some(0);
    let a = fs::read(dir.path().join("first.csv")).unwrap();
    let b = fs::read(dir.path().join("second.csv")).unwrap();
    let pass = ok && a == b;
    report(
        "trace determinism (fixed seed, byte-identical CSV)",
        pass,
        &format!("runs ok {ok}, identical bytes {}", a == b),
    );
}
