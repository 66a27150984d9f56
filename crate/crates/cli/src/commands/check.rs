use std::path::PathBuf;

use clap::Args;
use syncnet_core::numerics::DEFAULT_UNIT_TOL;
use syncnet_core::sysmodel::{check_assumptions, LinearSystem};
use syncnet_core::topology::validate_connected;

use crate::formats::{
    base_dir, core_error, print_json, read_json, CheckReport, CliResult, DetectabilityJson,
    EigenvalueReport, ModeReport, NeutralStabilityJson, SystemFile, TopologyJson,
    UnitClusterReport,
};

/// Check neutral stability and detectability of a system, and optionally the
/// connectedness of a topology.
#[derive(Args, Debug)]
pub struct CheckArgs {
    /// System file: JSON with matrices "a" and "c" (inline or by path).
    pub system: PathBuf,
    /// Topology file: a coupling-matrix JSON document.
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// Eigenvalue-magnitude classification band around 1.
    #[arg(long, default_value_t = DEFAULT_UNIT_TOL)]
    pub unit_tol: f64,
}

pub fn run(args: &CheckArgs) -> CliResult<u8> {
    let dir = base_dir(&args.system);
    let file: SystemFile = read_json(&args.system)?;
    let sys = LinearSystem::new(file.a.load(&dir)?, file.c.load(&dir)?).map_err(core_error)?;
    let report = check_assumptions(&sys, args.unit_tol);

    let topology = match &args.topology {
        None => None,
        Some(path) => {
            let lambda = crate::formats::MatrixRef::Path(path.display().to_string())
                .load(&PathBuf::from("."))?;
            let conn = validate_connected(&lambda).map_err(core_error)?;
            Some(TopologyJson {
                verdict: conn.pass(),
                positive_diagonal: conn.positive_diagonal,
                nonnegative: conn.nonnegative,
                row_stochastic: conn.row_stochastic,
                connected: conn.connected,
                violations: conn.violations(),
            })
        }
    };

    let pass = report.pass() && topology.as_ref().is_none_or(|t| t.verdict);
    let json = CheckReport {
        neutral_stability: NeutralStabilityJson {
            verdict: report.neutral_stability.neutrally_stable,
            unit_tol: report.neutral_stability.unit_tol,
            eigenvalues: report
                .neutral_stability
                .eigenvalues
                .iter()
                .map(|e| EigenvalueReport {
                    re: e.re,
                    im: e.im,
                    magnitude: e.magnitude,
                    unit_band: e.unit_band,
                    expanding: e.expanding,
                })
                .collect(),
            unit_clusters: report
                .neutral_stability
                .unit_clusters
                .iter()
                .map(|c| UnitClusterReport {
                    re: c.re,
                    im: c.im,
                    algebraic_multiplicity: c.algebraic_multiplicity,
                    geometric_multiplicity: c.geometric_multiplicity,
                    semisimple: c.semisimple,
                })
                .collect(),
        },
        detectability: DetectabilityJson {
            verdict: report.detectability.detectable,
            tested_modes: report
                .detectability
                .tested_modes
                .iter()
                .map(|m| ModeReport {
                    re: m.re,
                    im: m.im,
                    magnitude: m.magnitude,
                    observable_mode: m.observable_mode,
                })
                .collect(),
        },
        observable: report.observable,
        topology,
        pass,
    };
    print_json(&json);
    Ok(if pass { 0 } else { 1 })
}
