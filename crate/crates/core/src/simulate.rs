//! Exact discrete-time simulation of the three coupled-network families —
//! output feedback, orthogonal coupling, and the dual full-state loop — with
//! per-step comparison against the predicted synchronization trajectory.
//!
//! A single run is sequential; independent scenarios share nothing and can
//! run concurrently.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{from_f64, to_f64, Scalar};
use crate::sysmodel::LinearSystem;
use crate::topology::Topology;

/// Default bound on the largest state entry before a run aborts.
pub const DEFAULT_OVERFLOW_BOUND: f64 = 1e12;
/// Default synchronization-error threshold reported in summaries.
pub const DEFAULT_SYNC_THRESHOLD: f64 = 1e-6;

/// States of all agents at one time index.
#[derive(Clone, Debug)]
pub struct NetworkState<T: Scalar = f64> {
    pub k: usize,
    pub states: Vec<DVector<T>>,
}

/// Which closed-loop family drives the network.
#[derive(Clone, Debug)]
pub enum Coupling<T: Scalar = f64> {
    /// `x_i⁺ = A x_i + L Σ_j λ_ij C (x_j − x_i)`.
    OutputFeedback {
        system: LinearSystem<T>,
        gain: DMatrix<T>,
    },
    /// `ξ_i⁺ = Q ξ_i + Q Hᵀ H Σ_j λ_ij (ξ_j − ξ_i)`.
    Orthogonal {
        rotation: DMatrix<T>,
        measurement: DMatrix<T>,
    },
    /// `x_i⁺ = Aᵀ x_i + Cᵀ K Σ_j λ_ij (x_j − x_i)`.
    DualFullState {
        state_matrix: DMatrix<T>,
        input_map: DMatrix<T>,
        gain: DMatrix<T>,
    },
}

impl<T: Scalar> Coupling<T> {
    /// Agent state dimension.
    pub fn state_dim(&self) -> usize {
        match self {
            Coupling::OutputFeedback { system, .. } => system.state_dim(),
            Coupling::Orthogonal { rotation, .. } => rotation.nrows(),
            Coupling::DualFullState { state_matrix, .. } => state_matrix.nrows(),
        }
    }

    /// Matrix evolving the synchronized trajectory: the state matrix of one
    /// uncoupled agent.
    pub fn evolution_matrix(&self) -> DMatrix<T> {
        match self {
            Coupling::OutputFeedback { system, .. } => system.a().clone(),
            Coupling::Orthogonal { rotation, .. } => rotation.clone(),
            Coupling::DualFullState { state_matrix, .. } => state_matrix.clone(),
        }
    }

    /// Matrix multiplying the per-agent aggregated disagreement.
    fn disagreement_map(&self) -> DMatrix<T> {
        match self {
            Coupling::OutputFeedback { system, gain } => gain * system.c(),
            Coupling::Orthogonal {
                rotation,
                measurement,
            } => rotation * measurement.transpose() * measurement,
            Coupling::DualFullState {
                input_map, gain, ..
            } => input_map * gain,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let check = |rows: usize, cols: usize, what: &str| {
            if rows != n || cols != n {
                Err(Error::Dimension(format!(
                    "{what} must be {n}x{n}, got {rows}x{cols}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            Coupling::OutputFeedback { system, gain } => {
                if gain.nrows() != n || gain.ncols() != system.output_dim() {
                    return Err(Error::Dimension(format!(
                        "gain must be {}x{}, got {}x{}",
                        n,
                        system.output_dim(),
                        gain.nrows(),
                        gain.ncols()
                    )));
                }
            }
            Coupling::Orthogonal {
                rotation,
                measurement,
            } => {
                check(rotation.nrows(), rotation.ncols(), "rotation")?;
                if measurement.ncols() != n {
                    return Err(Error::Dimension(format!(
                        "measurement must have {} columns, got {}",
                        n,
                        measurement.ncols()
                    )));
                }
            }
            Coupling::DualFullState {
                state_matrix,
                input_map,
                gain,
            } => {
                check(state_matrix.nrows(), state_matrix.ncols(), "state matrix")?;
                if input_map.nrows() != n || gain.ncols() != n || input_map.ncols() != gain.nrows()
                {
                    return Err(Error::Dimension(format!(
                        "input map {}x{} and gain {}x{} do not compose to {n}x{n}",
                        input_map.nrows(),
                        input_map.ncols(),
                        gain.nrows(),
                        gain.ncols()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-agent aggregated neighbor disagreement `Σ_j λ_ij (v_j − v_i)`.
fn aggregate_disagreements<T: Scalar>(
    topo: &Topology<T>,
    vectors: &[DVector<T>],
) -> Vec<DVector<T>> {
    let lambda = topo.matrix();
    let p = topo.agents();
    (0..p)
        .map(|i| {
            let mut z = DVector::zeros(vectors[i].nrows());
            for j in 0..p {
                if j != i && lambda[(i, j)] > T::zero() {
                    z += (&vectors[j] - &vectors[i]) * lambda[(i, j)];
                }
            }
            z
        })
        .collect()
}

/// One step of the output-coupled loop, agent by agent.
pub fn step_output_coupled<T: Scalar>(
    sys: &LinearSystem<T>,
    gain: &DMatrix<T>,
    topo: &Topology<T>,
    state: &NetworkState<T>,
) -> NetworkState<T> {
    let outputs: Vec<DVector<T>> = state.states.iter().map(|x| sys.c() * x).collect();
    let aggregated = aggregate_disagreements(topo, &outputs);
    let states = state
        .states
        .iter()
        .zip(aggregated)
        .map(|(x, z)| sys.a() * x + gain * z)
        .collect();
    NetworkState {
        k: state.k + 1,
        states,
    }
}

/// One step of the orthogonal loop.
pub fn step_orthogonal<T: Scalar>(
    rotation: &DMatrix<T>,
    measurement: &DMatrix<T>,
    topo: &Topology<T>,
    state: &NetworkState<T>,
) -> NetworkState<T> {
    let coupling = rotation * measurement.transpose() * measurement;
    let aggregated = aggregate_disagreements(topo, &state.states);
    let states = state
        .states
        .iter()
        .zip(aggregated)
        .map(|(x, z)| rotation * x + &coupling * z)
        .collect();
    NetworkState {
        k: state.k + 1,
        states,
    }
}

/// One step of the dual full-state loop.
pub fn step_dual<T: Scalar>(
    state_matrix: &DMatrix<T>,
    input_map: &DMatrix<T>,
    gain: &DMatrix<T>,
    topo: &Topology<T>,
    state: &NetworkState<T>,
) -> NetworkState<T> {
    let through = input_map * gain;
    let aggregated = aggregate_disagreements(topo, &state.states);
    let states = state
        .states
        .iter()
        .zip(aggregated)
        .map(|(x, z)| state_matrix * x + &through * z)
        .collect();
    NetworkState {
        k: state.k + 1,
        states,
    }
}

/// Stacked closed-loop matrix `I_p ⊗ A + (Λ − I_p) ⊗ M` where `M` is the
/// disagreement map of the coupling; the stacked step must agree with the
/// agent-wise steppers.
pub fn closed_loop_matrix<T: Scalar>(coupling: &Coupling<T>, topo: &Topology<T>) -> DMatrix<T> {
    let p = topo.agents();
    let map = coupling.disagreement_map();
    let evolution = coupling.evolution_matrix();
    let centered = topo.matrix() - DMatrix::identity(p, p);
    crate::numerics::kron(&DMatrix::identity(p, p), &evolution)
        + crate::numerics::kron(&centered, &map)
}

/// The synchronized trajectory `k` steps in: the stationary-weighted average
/// of the initial states propagated through the evolution matrix one step at
/// a time.
pub fn predicted_trajectory<T: Scalar>(
    evolution: &DMatrix<T>,
    topo: &Topology<T>,
    initial: &[DVector<T>],
    k: usize,
) -> Result<DVector<T>> {
    let r = topo.stationary_vector()?;
    let mut avg = DVector::zeros(evolution.nrows());
    for (i, x) in initial.iter().enumerate() {
        avg += x * r[i];
    }
    for _ in 0..k {
        avg = evolution * avg;
    }
    Ok(avg)
}

/// How the initial network state is chosen.
#[derive(Clone, Debug)]
pub enum InitialCondition<T: Scalar = f64> {
    Explicit(Vec<DVector<T>>),
    /// Entries drawn uniformly from `[-1, 1]`, agent by agent, from a
    /// deterministic stream.
    Uniform {
        seed: u64,
    },
}

/// A complete simulation request.
#[derive(Clone, Debug)]
pub struct Scenario<T: Scalar = f64> {
    pub coupling: Coupling<T>,
    pub topology: Topology<T>,
    pub initial: InitialCondition<T>,
    pub horizon: usize,
    /// Keep a full state snapshot every this many steps (the final state is
    /// always kept).
    pub snapshot_stride: usize,
    pub overflow_bound: T,
    pub sync_threshold: T,
}

impl<T: Scalar> Scenario<T> {
    pub fn new(
        coupling: Coupling<T>,
        topology: Topology<T>,
        initial: InitialCondition<T>,
        horizon: usize,
    ) -> Self {
        Self {
            coupling,
            topology,
            initial,
            horizon,
            snapshot_stride: 1,
            overflow_bound: from_f64(DEFAULT_OVERFLOW_BOUND),
            sync_threshold: from_f64(DEFAULT_SYNC_THRESHOLD),
        }
    }

    fn materialize_initial(&self) -> Result<Vec<DVector<T>>> {
        let p = self.topology.agents();
        let n = self.coupling.state_dim();
        match &self.initial {
            InitialCondition::Explicit(states) => {
                if states.len() != p {
                    return Err(Error::Dimension(format!(
                        "expected {} initial states, got {}",
                        p,
                        states.len()
                    )));
                }
                for x in states {
                    if x.nrows() != n {
                        return Err(Error::Dimension(format!(
                            "initial state has dimension {}, expected {}",
                            x.nrows(),
                            n
                        )));
                    }
                    if x.iter().any(|&v| !to_f64(v).is_finite()) {
                        return Err(Error::NonFinite("initial state".into()));
                    }
                }
                Ok(states.clone())
            }
            InitialCondition::Uniform { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..p)
                    .map(|_| DVector::from_fn(n, |_, _| from_f64(rng.gen_range(-1.0..1.0))))
                    .collect())
            }
        }
    }
}

/// Identifying facts about a finished run.
#[derive(Clone, Debug)]
pub struct ScenarioDigest {
    pub mode: &'static str,
    pub agents: usize,
    pub state_dim: usize,
    pub horizon: usize,
    pub snapshot_stride: usize,
    pub seed: Option<u64>,
}

/// Metrics and snapshots collected over a run.
#[derive(Clone, Debug)]
pub struct SimulationTrace<T: Scalar = f64> {
    pub digest: ScenarioDigest,
    pub snapshots: Vec<NetworkState<T>>,
    /// `max_i ‖x_i(k) − x̄(k)‖` per step; absent when the topology has no
    /// stationary vector (disconnected negative controls).
    pub sync_error: Option<Vec<T>>,
    /// `max_{i,j} ‖x_i(k) − x_j(k)‖` per step.
    pub disagreement: Vec<T>,
    /// Worst drift of the rotated stationary-weighted average, orthogonal
    /// runs only.
    pub conservation_residual: Option<T>,
    /// First step with sync error at or below the scenario threshold.
    pub first_step_below_threshold: Option<usize>,
    pub sync_threshold: f64,
}

impl<T: Scalar> SimulationTrace<T> {
    pub fn final_sync_error(&self) -> Option<T> {
        self.sync_error.as_ref().and_then(|e| e.last().copied())
    }

    pub fn final_disagreement(&self) -> T {
        *self.disagreement.last().expect("horizon >= 0")
    }
}

/// Run a scenario to its horizon, collecting synchronization metrics at
/// every step. Deterministic for a fixed scenario (including seed).
pub fn run<T: Scalar>(scenario: &Scenario<T>) -> Result<SimulationTrace<T>> {
    scenario.coupling.validate()?;
    let states = scenario.materialize_initial()?;
    let p = scenario.topology.agents();
    let horizon = scenario.horizon;
    let stride = scenario.snapshot_stride.max(1);

    let reference_available = scenario.topology.stationary_vector().is_ok();
    let evolution = scenario.coupling.evolution_matrix();
    let mut reference = if reference_available {
        Some(predicted_trajectory(
            &evolution,
            &scenario.topology,
            &states,
            0,
        )?)
    } else {
        None
    };

    // Conservation tracking for the orthogonal loop: the stationary-weighted
    // average, rotated back by the inverse rotation power, stays constant.
    let mut conservation: Option<(DMatrix<T>, DVector<T>, T)> = match &scenario.coupling {
        Coupling::Orthogonal { rotation, .. } if reference_available => {
            let r = scenario.topology.stationary_vector()?;
            let mut m0 = DVector::zeros(rotation.nrows());
            for (i, x) in states.iter().enumerate() {
                m0 += x * r[i];
            }
            Some((
                DMatrix::identity(rotation.nrows(), rotation.nrows()),
                m0,
                T::zero(),
            ))
        }
        _ => None,
    };

    let digest = ScenarioDigest {
        mode: match &scenario.coupling {
            Coupling::OutputFeedback { .. } => "output_coupled",
            Coupling::Orthogonal { .. } => "orthogonal",
            Coupling::DualFullState { .. } => "dual",
        },
        agents: p,
        state_dim: scenario.coupling.state_dim(),
        horizon,
        snapshot_stride: stride,
        seed: match &scenario.initial {
            InitialCondition::Uniform { seed } => Some(*seed),
            InitialCondition::Explicit(_) => None,
        },
    };

    let mut current = NetworkState { k: 0, states };
    let mut snapshots = Vec::new();
    let mut sync_error = reference.as_ref().map(|_| Vec::with_capacity(horizon + 1));
    let mut disagreement = Vec::with_capacity(horizon + 1);

    for k in 0..=horizon {
        let mut worst = T::zero();
        for x in &current.states {
            for &v in x.iter() {
                worst = worst.max(v.abs());
            }
        }
        if worst > scenario.overflow_bound {
            return Err(Error::DivergenceDetected {
                step: k,
                magnitude: to_f64(worst),
                bound: to_f64(scenario.overflow_bound),
            });
        }

        if let (Some(errors), Some(target)) = (sync_error.as_mut(), reference.as_ref()) {
            let e = current
                .states
                .iter()
                .map(|x| (x - target).norm())
                .fold(T::zero(), |a, b| a.max(b));
            errors.push(e);
        }
        let d = (0..p)
            .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
            .map(|(i, j)| (&current.states[i] - &current.states[j]).norm())
            .fold(T::zero(), |a, b| a.max(b));
        disagreement.push(d);

        if k % stride == 0 || k == horizon {
            snapshots.push(current.clone());
        }

        if let Some((inv_pow, m0, worst_drift)) = conservation.as_mut() {
            let r = scenario.topology.stationary_vector()?;
            let mut mk = DVector::zeros(m0.nrows());
            for (i, x) in current.states.iter().enumerate() {
                mk += &*inv_pow * x * r[i];
            }
            *worst_drift = worst_drift.max((mk - &*m0).norm());
        }

        if k < horizon {
            current = match &scenario.coupling {
                Coupling::OutputFeedback { system, gain } => {
                    step_output_coupled(system, gain, &scenario.topology, &current)
                }
                Coupling::Orthogonal {
                    rotation,
                    measurement,
                } => step_orthogonal(rotation, measurement, &scenario.topology, &current),
                Coupling::DualFullState {
                    state_matrix,
                    input_map,
                    gain,
                } => step_dual(state_matrix, input_map, gain, &scenario.topology, &current),
            };
            if let Some(target) = reference.as_mut() {
                *target = &evolution * &*target;
            }
            if let Some((inv_pow, _, _)) = conservation.as_mut() {
                if let Coupling::Orthogonal { rotation, .. } = &scenario.coupling {
                    *inv_pow = &*inv_pow * rotation.transpose();
                }
            }
        }
    }

    let first_step_below_threshold = sync_error
        .as_ref()
        .and_then(|errors| errors.iter().position(|&e| e <= scenario.sync_threshold));

    Ok(SimulationTrace {
        digest,
        snapshots,
        sync_error,
        disagreement,
        conservation_residual: conservation.map(|(_, _, drift)| drift),
        first_step_below_threshold,
        sync_threshold: to_f64(scenario.sync_threshold),
    })
}
