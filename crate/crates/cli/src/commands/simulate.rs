use std::path::{Path, PathBuf};

use clap::Args;
use syncnet_core::simulate::{
    run as run_scenario, Coupling, InitialCondition, Scenario, SimulationTrace,
    DEFAULT_OVERFLOW_BOUND, DEFAULT_SYNC_THRESHOLD,
};
use syncnet_core::synthesis::{synthesize, synthesize_dual, SynthesisOptions};
use syncnet_core::sysmodel::{check_coupling_pair, LinearSystem, DEFAULT_ORTHOGONALITY_TOL};
use syncnet_core::topology::{validate_connected, Topology};
use syncnet_core::{Col, Error};

use crate::formats::{
    base_dir, col_to_vec, core_error, read_json, write_json, CliError, CliResult, ScenarioFile,
    ScenarioMode, SimulationSummary,
};

/// Simulate a coupled-network scenario; writes `<prefix>.csv` and
/// `<prefix>.summary.json`.
#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario file (JSON).
    pub scenario: PathBuf,
    /// Output prefix for the trace CSV and summary JSON.
    pub out_prefix: String,
    /// Run a disconnected topology as a negative control instead of
    /// rejecting the scenario.
    #[arg(long)]
    pub allow_disconnected: bool,
    /// Include flattened per-agent states in the CSV (same as the scenario's
    /// `record_states` field).
    #[arg(long)]
    pub states: bool,
}

/// Seed override honored by seeded scenarios.
pub const SEED_ENV: &str = "SYNCNET_SEED";

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Err(_) => Ok(None),
        Ok(text) => text
            .parse::<u64>()
            .map(Some)
            .map_err(|e| CliError::Input(format!("{SEED_ENV}={text} is not a seed: {e}"))),
    }
}

pub fn build_scenario(
    file: &ScenarioFile,
    dir: &Path,
    allow_disconnected: bool,
) -> CliResult<Scenario<f64>> {
    let lambda = file.topology.load(dir)?;
    let connectivity = validate_connected(&lambda).map_err(core_error)?;
    let topology = if connectivity.pass() {
        Topology::new(lambda).map_err(core_error)?
    } else if allow_disconnected {
        Topology::new_allow_disconnected(lambda).map_err(|e| CliError::Input(e.to_string()))?
    } else {
        return Err(CliError::Input(format!(
            "topology validation failed: {} (use --allow-disconnected to run a negative control)",
            connectivity.violations()
        )));
    };

    let tol = &file.tolerances;
    let opts = SynthesisOptions {
        unit_tol: tol
            .unit_tol
            .unwrap_or(syncnet_core::numerics::DEFAULT_UNIT_TOL),
        invariant_tol: tol
            .invariant_tol
            .unwrap_or(syncnet_core::synthesis::DEFAULT_INVARIANT_TOL),
        rank_tol: tol
            .rank_tol
            .unwrap_or(syncnet_core::numerics::DEFAULT_RANK_TOL),
        ..SynthesisOptions::default()
    };

    let load_system = || -> CliResult<LinearSystem<f64>> {
        let sys = file.system.as_ref().ok_or_else(|| {
            CliError::Input("this mode requires a \"system\" entry with matrices a, c".into())
        })?;
        LinearSystem::new(sys.a.load(dir)?, sys.c.load(dir)?).map_err(core_error)
    };

    let coupling = match file.mode {
        ScenarioMode::OutputCoupled => {
            let system = load_system()?;
            let gain = if file.gain.is_synthesize() {
                synthesize(&system, &opts).map_err(core_error)?.gain
            } else {
                file.gain.load(dir)?
            };
            Coupling::OutputFeedback { system, gain }
        }
        ScenarioMode::Orthogonal => {
            let q = file
                .q
                .as_ref()
                .ok_or_else(|| CliError::Input("orthogonal mode requires \"q\"".into()))?
                .load(dir)?;
            let h = file
                .h
                .as_ref()
                .ok_or_else(|| CliError::Input("orthogonal mode requires \"h\"".into()))?
                .load(dir)?;
            let pair =
                check_coupling_pair(&q, &h, DEFAULT_ORTHOGONALITY_TOL).map_err(core_error)?;
            if !pair.orthogonal || !pair.rows_orthonormal {
                return Err(CliError::Input(format!(
                    "orthogonal mode needs an orthogonal q (defect {:e}) and orthonormal h rows (defect {:e})",
                    pair.orthogonality_defect, pair.row_defect
                )));
            }
            Coupling::Orthogonal {
                rotation: q,
                measurement: h,
            }
        }
        ScenarioMode::Dual => {
            let system = load_system()?;
            let (a_t, c_t) = system.dual();
            let gain = if file.gain.is_synthesize() {
                synthesize_dual(&a_t, &c_t, &opts).map_err(core_error)?.gain
            } else {
                file.gain.load(dir)?
            };
            Coupling::DualFullState {
                state_matrix: a_t,
                input_map: c_t,
                gain,
            }
        }
    };

    let initial = match (&file.initial.explicit, file.initial.seed) {
        (Some(_), Some(_)) => {
            return Err(CliError::Input(
                "initial condition must be either explicit or seeded, not both".into(),
            ))
        }
        (Some(vectors), None) => {
            InitialCondition::Explicit(vectors.iter().map(|v| Col::from_column_slice(v)).collect())
        }
        (None, Some(seed)) => {
            if let Some(dist) = &file.initial.distribution {
                if dist != "uniform" {
                    return Err(CliError::Input(format!(
                        "unknown initial distribution '{dist}' (only \"uniform\")"
                    )));
                }
            }
            let seed = env_seed()?.unwrap_or(seed);
            InitialCondition::Uniform { seed }
        }
        (None, None) => {
            return Err(CliError::Input(
                "initial condition needs \"explicit\" vectors or a \"seed\"".into(),
            ))
        }
    };

    let mut scenario = Scenario::new(coupling, topology, initial, file.horizon);
    scenario.snapshot_stride = file.snapshot_stride.max(1);
    scenario.overflow_bound = tol.overflow_bound.unwrap_or(DEFAULT_OVERFLOW_BOUND);
    scenario.sync_threshold = tol.sync_threshold.unwrap_or(DEFAULT_SYNC_THRESHOLD);
    Ok(scenario)
}

fn write_trace_csv(
    path: &Path,
    trace: &SimulationTrace<f64>,
    record_states: bool,
) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    let mut header = vec![
        "k".to_string(),
        "sync_error".to_string(),
        "disagreement".to_string(),
    ];
    if record_states {
        let first = &trace.snapshots[0];
        for (agent, state) in first.states.iter().enumerate() {
            for coord in 0..state.nrows() {
                header.push(format!("x{agent}_{coord}"));
            }
        }
    }
    writer
        .write_record(&header)
        .map_err(|e| CliError::Input(format!("csv: {e}")))?;

    for (k, &d) in trace.disagreement.iter().enumerate() {
        let mut row = vec![k.to_string()];
        match trace.sync_error.as_ref() {
            Some(errors) => row.push(format!("{:?}", errors[k])),
            None => row.push("NaN".to_string()),
        }
        row.push(format!("{d:?}"));
        if record_states {
            // Stride 1 is forced when states are recorded, so snapshot k
            // exists for every step.
            for state in &trace.snapshots[k].states {
                for &value in col_to_vec(state).iter() {
                    row.push(format!("{value:?}"));
                }
            }
        }
        writer
            .write_record(&row)
            .map_err(|e| CliError::Input(format!("csv: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Input(format!("csv: {e}")))?;
    Ok(())
}

pub fn run(args: &SimulateArgs) -> CliResult<u8> {
    let dir = base_dir(&args.scenario);
    let file: ScenarioFile = read_json(&args.scenario)?;
    let mut scenario = build_scenario(&file, &dir, args.allow_disconnected)?;
    let record_states = args.states || file.record_states;
    if record_states {
        scenario.snapshot_stride = 1;
    }

    let trace = run_scenario(&scenario).map_err(|e| match e {
        Error::DivergenceDetected { .. } => CliError::Domain(e.to_string()),
        other => core_error(other),
    })?;

    let csv_path = PathBuf::from(format!("{}.csv", args.out_prefix));
    write_trace_csv(&csv_path, &trace, record_states)?;

    let summary = SimulationSummary {
        mode: trace.digest.mode.to_string(),
        agents: trace.digest.agents,
        state_dim: trace.digest.state_dim,
        horizon: trace.digest.horizon,
        seed: trace.digest.seed,
        final_sync_error: trace.final_sync_error(),
        final_disagreement: trace.final_disagreement(),
        sync_threshold: trace.sync_threshold,
        first_step_below_threshold: trace.first_step_below_threshold,
        conservation_residual: trace.conservation_residual,
    };
    let summary_path = PathBuf::from(format!("{}.summary.json", args.out_prefix));
    write_json(&summary_path, &summary)?;
    println!(
        "wrote {} and {}",
        csv_path.display(),
        summary_path.display()
    );
    Ok(0)
}
