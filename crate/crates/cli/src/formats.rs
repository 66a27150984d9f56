//! Stable file formats: JSON for matrices, systems, scenarios, and reports;
//! CSV for step-indexed traces. Matrices serialize their entries through the
//! shortest round-trip decimal form, so every emitted file re-parses to
//! bit-identical values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use syncnet_core::{Col, Mat};

/// Input problems exit with 2, domain failures with 1.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Domain(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Domain(m) => m,
        }
    }
}

/// Map a core error onto the exit-code contract: malformed inputs are usage
/// errors, everything else is a domain failure.
pub fn core_error(e: syncnet_core::Error) -> CliError {
    use syncnet_core::Error;
    match e {
        Error::Dimension(_) | Error::NonFinite(_) => CliError::Input(e.to_string()),
        other => CliError::Domain(other.to_string()),
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Dense row-major matrix payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixFile {
    #[serde(default)]
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixFile {
    pub fn from_mat(name: &str, m: &Mat) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            name: name.to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_mat(&self) -> CliResult<Mat> {
        if self.data.len() != self.rows * self.cols {
            return Err(CliError::Input(format!(
                "matrix '{}': {} entries for a {}x{} shape",
                self.name,
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Input(format!(
                "matrix '{}' contains non-finite entries",
                self.name
            )));
        }
        Ok(Mat::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// A matrix either inline or as a path to a `MatrixFile` JSON document,
/// resolved relative to the referencing file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixRef {
    Path(String),
    Inline(MatrixFile),
}

impl MatrixRef {
    pub fn load(&self, base_dir: &Path) -> CliResult<Mat> {
        match self {
            MatrixRef::Inline(m) => m.to_mat(),
            MatrixRef::Path(p) => {
                let path = base_dir.join(p);
                let file: MatrixFile = read_json(&path)?;
                file.to_mat()
            }
        }
    }
}

/// The pair `(A, C)` of one agent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemFile {
    pub a: MatrixRef,
    pub c: MatrixRef,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    OutputCoupled,
    Orthogonal,
    Dual,
}

/// Either the literal string `"synthesize"`, a path, or an inline matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Text(String),
    Inline(MatrixFile),
}

impl GainSpec {
    pub fn is_synthesize(&self) -> bool {
        matches!(self, GainSpec::Text(s) if s == "synthesize")
    }

    pub fn load(&self, base_dir: &Path) -> CliResult<Mat> {
        match self {
            GainSpec::Text(s) if s == "synthesize" => Err(CliError::Input(
                "gain 'synthesize' has no matrix form".into(),
            )),
            GainSpec::Text(path) => MatrixRef::Path(path.clone()).load(base_dir),
            GainSpec::Inline(m) => m.to_mat(),
        }
    }
}

fn default_gain() -> GainSpec {
    GainSpec::Text("synthesize".into())
}

/// Initial network state: explicit per-agent vectors, or a seed for the
/// uniform `[-1, 1]` draw.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Only `"uniform"` is defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<String>,
}

/// Optional tolerance overrides; anything omitted keeps the library default.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overflow_bound: Option<f64>,
}

fn default_stride() -> usize {
    1
}

/// A full simulation request.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub mode: ScenarioMode,
    pub topology: MatrixRef,
    /// Required for `output_coupled` and `dual` modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemFile>,
    /// Gain for `output_coupled`/`dual`: `"synthesize"` (default), a path,
    /// or an inline matrix.
    #[serde(default = "default_gain")]
    pub gain: GainSpec,
    /// Required for `orthogonal` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<MatrixRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<MatrixRef>,
    pub initial: InitialSpec,
    pub horizon: usize,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    /// Emit flattened per-agent states into the trace CSV.
    #[serde(default)]
    pub record_states: bool,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("cannot parse {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Input(format!("cannot serialize: {e}")))?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serialization")
    );
}

/// Directory a file's relative references resolve against.
pub fn base_dir(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn col_to_vec(v: &Col) -> Vec<f64> {
    v.iter().copied().collect()
}

// ---- report payloads -------------------------------------------------

#[derive(Serialize)]
pub struct EigenvalueReport {
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
    pub unit_band: bool,
    pub expanding: bool,
}

#[derive(Serialize)]
pub struct UnitClusterReport {
    pub re: f64,
    pub im: f64,
    pub algebraic_multiplicity: usize,
    pub geometric_multiplicity: usize,
    pub semisimple: bool,
}

#[derive(Serialize)]
pub struct NeutralStabilityJson {
    pub verdict: bool,
    pub unit_tol: f64,
    pub eigenvalues: Vec<EigenvalueReport>,
    pub unit_clusters: Vec<UnitClusterReport>,
}

#[derive(Serialize)]
pub struct ModeReport {
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
    pub observable_mode: bool,
}

#[derive(Serialize)]
pub struct DetectabilityJson {
    pub verdict: bool,
    pub tested_modes: Vec<ModeReport>,
}

#[derive(Serialize)]
pub struct TopologyJson {
    pub verdict: bool,
    pub positive_diagonal: bool,
    pub nonnegative: bool,
    pub row_stochastic: bool,
    pub connected: bool,
    pub violations: String,
}

#[derive(Serialize)]
pub struct CheckReport {
    pub neutral_stability: NeutralStabilityJson,
    pub detectability: DetectabilityJson,
    pub observable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyJson>,
    pub pass: bool,
}

#[derive(Serialize)]
pub struct ResidualsJson {
    pub invariant_form: f64,
    pub rotation_orthogonality: f64,
    pub measurement_orthonormality: f64,
    pub gain_identity: f64,
}

#[derive(Serialize)]
pub struct SynthesisReport {
    pub unit_dim: usize,
    pub stable_dim: usize,
    pub gain: MatrixFile,
    pub invariant_form: MatrixFile,
    pub measurement: MatrixFile,
    pub rotation: MatrixFile,
    pub residuals: ResidualsJson,
    /// Contraction norm of the transformed loop; below 1 exactly when the
    /// pair is observable. Absent for a zero unit dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_reduction: Option<MatrixFile>,
}

#[derive(Serialize)]
pub struct SimulationSummary {
    pub mode: String,
    pub agents: usize,
    pub state_dim: usize,
    pub horizon: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_sync_error: Option<f64>,
    pub final_disagreement: f64,
    pub sync_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_step_below_threshold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservation_residual: Option<f64>,
}

#[derive(Serialize)]
pub struct VerifyCase {
    pub name: String,
    pub pass: bool,
    pub details: serde_json::Value,
}

#[derive(Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub seed: u64,
    pub cases: Vec<VerifyCase>,
    pub pass: bool,
}
