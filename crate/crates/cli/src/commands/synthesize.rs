use std::path::PathBuf;

use clap::Args;
use syncnet_core::numerics::{DEFAULT_RANK_TOL, DEFAULT_UNIT_TOL};
use syncnet_core::synthesis::{
    synthesize, SynthesisOptions, DEFAULT_INVARIANT_MAX_ITER, DEFAULT_INVARIANT_TOL,
};
use syncnet_core::sysmodel::LinearSystem;
use syncnet_core::verify::projection_product_norm;

use crate::formats::{
    base_dir, core_error, read_json, write_json, CliResult, MatrixFile, ResidualsJson,
    SynthesisReport, SystemFile,
};

/// Construct an output-feedback gain and write the synthesis report.
#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    /// System file: JSON with matrices "a" and "c".
    pub system: PathBuf,
    /// Output path for the synthesis report JSON.
    pub out: PathBuf,
    /// Compress a rank-deficient coupled output instead of failing.
    #[arg(long)]
    pub reduce_outputs: bool,
    #[arg(long, default_value_t = DEFAULT_UNIT_TOL)]
    pub unit_tol: f64,
    #[arg(long, default_value_t = DEFAULT_INVARIANT_TOL)]
    pub invariant_tol: f64,
    #[arg(long, default_value_t = DEFAULT_INVARIANT_MAX_ITER)]
    pub invariant_max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
}

pub fn run(args: &SynthesizeArgs) -> CliResult<u8> {
    let dir = base_dir(&args.system);
    let file: SystemFile = read_json(&args.system)?;
    let sys = LinearSystem::new(file.a.load(&dir)?, file.c.load(&dir)?).map_err(core_error)?;
    let opts = SynthesisOptions {
        unit_tol: args.unit_tol,
        invariant_tol: args.invariant_tol,
        invariant_max_iter: args.invariant_max_iter,
        rank_tol: args.rank_tol,
        reduce_outputs: args.reduce_outputs,
    };
    let result = synthesize(&sys, &opts).map_err(core_error)?;

    let alpha = (result.unit_dim() > 0)
        .then(|| projection_product_norm(&result.rotation, &result.measurement, result.unit_dim()));
    let report = SynthesisReport {
        unit_dim: result.unit_dim(),
        stable_dim: result.stable_dim(),
        gain: MatrixFile::from_mat("gain", &result.gain),
        invariant_form: MatrixFile::from_mat("invariant_form", &result.invariant_form),
        measurement: MatrixFile::from_mat("measurement", &result.measurement),
        rotation: MatrixFile::from_mat("rotation", &result.rotation),
        residuals: ResidualsJson {
            invariant_form: result.residuals.invariant_form,
            rotation_orthogonality: result.residuals.rotation_orthogonality,
            measurement_orthonormality: result.residuals.measurement_orthonormality,
            gain_identity: result.residuals.gain_identity,
        },
        alpha,
        output_reduction: result
            .output_reduction
            .as_ref()
            .map(|t| MatrixFile::from_mat("output_reduction", t)),
    };
    write_json(&args.out, &report)?;
    println!(
        "wrote {} (unit_dim={}, alpha={})",
        args.out.display(),
        result.unit_dim(),
        alpha.map_or("n/a".to_string(), |a| format!("{a:.6}")),
    );
    Ok(0)
}
