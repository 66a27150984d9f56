//! The system pair `(A, C)` of `x⁺ = A x + u`, `y = C x` together with
//! executable checkers for every assumption the synthesis relies on: neutral
//! stability, detectability, observability, stabilizability of the dual, and
//! the orthogonal-coupling conditions on a `(Q, H)` pair.
//!
//! Checkers return verdict structs with diagnostics rather than errors so a
//! caller can report every failure at once.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{
    all_finite, numerical_rank, spectral_norm, DEFAULT_RANK_TOL, DEFAULT_UNIT_TOL,
};
use crate::scalar::{from_f64, to_f64, Scalar};

/// Discrete-time linear system `x⁺ = A x + u`, `y = C x`.
#[derive(Clone, Debug)]
pub struct LinearSystem<T: Scalar = f64> {
    a: DMatrix<T>,
    c: DMatrix<T>,
}

impl<T: Scalar> LinearSystem<T> {
    pub fn new(a: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "state matrix must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if c.ncols() != a.nrows() || c.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "output matrix must be m x {} with m >= 1, got {}x{}",
                a.nrows(),
                c.nrows(),
                c.ncols()
            )));
        }
        if !all_finite(&a) || !all_finite(&c) {
            return Err(Error::NonFinite("system matrices".into()));
        }
        Ok(Self { a, c })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Output dimension `m`.
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// The dual plant `x⁺ = Aᵀ x + Cᵀ u` obtained by transposing both
    /// matrices.
    pub fn dual(&self) -> (DMatrix<T>, DMatrix<T>) {
        (self.a.transpose(), self.c.transpose())
    }
}

/// One eigenvalue of the state matrix with its classification.
#[derive(Clone, Debug)]
pub struct EigenvalueDiagnostic {
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
    /// Magnitude lies within `unit_tol` of 1.
    pub unit_band: bool,
    /// Magnitude exceeds `1 + unit_tol`.
    pub expanding: bool,
}

/// A cluster of unit-band eigenvalues with its multiplicity verdict.
#[derive(Clone, Debug)]
pub struct UnitClusterDiagnostic {
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
    pub algebraic_multiplicity: usize,
    pub geometric_multiplicity: usize,
    /// Geometric multiplicity matches algebraic multiplicity, i.e. the
    /// cluster carries no nontrivial Jordan structure.
    pub semisimple: bool,
}

/// Verdict and evidence for neutral stability.
#[derive(Clone, Debug)]
pub struct NeutralStabilityReport {
    pub neutrally_stable: bool,
    pub unit_tol: f64,
    pub eigenvalues: Vec<EigenvalueDiagnostic>,
    pub unit_clusters: Vec<UnitClusterDiagnostic>,
}

/// Rank of a complex matrix `X + iY` given as its real and imaginary parts,
/// computed on the real representation `[[X, -Y], [Y, X]]` whose rank is
/// exactly twice the complex rank.
fn complex_rank<T: Scalar>(x: &DMatrix<T>, y: &DMatrix<T>, rel_tol: T) -> usize {
    let (r, c) = (x.nrows(), x.ncols());
    let mut real_rep = DMatrix::zeros(2 * r, 2 * c);
    real_rep.view_mut((0, 0), (r, c)).copy_from(x);
    real_rep.view_mut((r, c), (r, c)).copy_from(x);
    real_rep.view_mut((0, c), (r, c)).copy_from(&(-y.clone()));
    real_rep.view_mut((r, 0), (r, c)).copy_from(y);
    numerical_rank(&real_rep, rel_tol) / 2
}

fn cluster_eigenvalues(values: &[(f64, f64)], radius: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for (i, &(re, im)) in values.iter().enumerate() {
        let found = clusters.iter_mut().find(|(cre, cim, _)| {
            let d = ((re - *cre).powi(2) + (im - *cim).powi(2)).sqrt();
            d <= radius
        });
        match found {
            Some((cre, cim, members)) => {
                members.push(i);
                let k = members.len() as f64;
                *cre += (re - *cre) / k;
                *cim += (im - *cim) / k;
            }
            None => clusters.push((re, im, vec![i])),
        }
    }
    clusters.into_iter().map(|(_, _, m)| m).collect()
}

/// Check that no eigenvalue magnitude exceeds unity (within `unit_tol`) and
/// that every unit-magnitude eigenvalue cluster is semisimple, so powers of
/// the state matrix stay bounded.
pub fn check_neutral_stability<T: Scalar>(
    sys: &LinearSystem<T>,
    unit_tol: T,
) -> NeutralStabilityReport {
    let a = sys.a();
    let n = sys.state_dim();
    let eigs = a.complex_eigenvalues();
    let tol = to_f64(unit_tol);

    let diagnostics: Vec<EigenvalueDiagnostic> = eigs
        .iter()
        .map(|l| {
            let (re, im) = (to_f64(l.re), to_f64(l.im));
            let magnitude = (re * re + im * im).sqrt();
            EigenvalueDiagnostic {
                re,
                im,
                magnitude,
                unit_band: (magnitude - 1.0).abs() <= tol,
                expanding: magnitude > 1.0 + tol,
            }
        })
        .collect();

    let any_expanding = diagnostics.iter().any(|d| d.expanding);

    // Multiplicity test per unit-band cluster: geometric multiplicity from
    // the rank of A - lambda*I, algebraic from the cluster size. Eigenvalues
    // within unit_tol of each other count as one cluster.
    let scale = to_f64(spectral_norm(a)).max(1.0);
    let unit_points: Vec<(f64, f64)> = diagnostics
        .iter()
        .filter(|d| d.unit_band)
        .map(|d| (d.re, d.im))
        .collect();
    let mut unit_clusters = Vec::new();
    for members in cluster_eigenvalues(&unit_points, tol * scale) {
        let k = members.len() as f64;
        let re = members.iter().map(|&i| unit_points[i].0).sum::<f64>() / k;
        let im = members.iter().map(|&i| unit_points[i].1).sum::<f64>() / k;
        let shift_re = a - DMatrix::from_diagonal_element(n, n, from_f64::<T>(re));
        let geometric = if im.abs() <= f64::EPSILON * scale {
            n - numerical_rank(&shift_re, unit_tol)
        } else {
            let shift_im = DMatrix::from_diagonal_element(n, n, from_f64::<T>(-im));
            n - complex_rank(&shift_re, &shift_im, unit_tol)
        };
        unit_clusters.push(UnitClusterDiagnostic {
            re,
            im,
            magnitude: (re * re + im * im).sqrt(),
            algebraic_multiplicity: members.len(),
            geometric_multiplicity: geometric,
            semisimple: geometric >= members.len(),
        });
    }

    NeutralStabilityReport {
        neutrally_stable: !any_expanding && unit_clusters.iter().all(|c| c.semisimple),
        unit_tol: tol,
        eigenvalues: diagnostics,
        unit_clusters,
    }
}

/// One marginal/unstable mode tested by the eigenvector rank test.
#[derive(Clone, Debug)]
pub struct ModeDiagnostic {
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
    pub rank: usize,
    pub required_rank: usize,
    pub observable_mode: bool,
}

/// Verdict and per-mode evidence for detectability.
#[derive(Clone, Debug)]
pub struct DetectabilityReport {
    pub detectable: bool,
    pub tested_modes: Vec<ModeDiagnostic>,
}

/// Relative rank tolerance for mode rank tests: computed eigenvalues carry
/// roughly this much error themselves.
pub const DEFAULT_MODE_RANK_TOL: f64 = 1e-8;

/// Detectability via the mode test: every eigenvalue with magnitude at least
/// `1 - unit_tol` must satisfy `rank([A - lambda I; C]) = n`.
pub fn check_detectable<T: Scalar>(sys: &LinearSystem<T>, unit_tol: T) -> DetectabilityReport {
    let a = sys.a();
    let c = sys.c();
    let n = sys.state_dim();
    let m = sys.output_dim();
    let eigs = a.complex_eigenvalues();
    let tol = to_f64(unit_tol);
    let scale = to_f64(spectral_norm(a)).max(1.0);
    let rank_tol = from_f64::<T>(DEFAULT_MODE_RANK_TOL);

    let marginal: Vec<(f64, f64)> = eigs
        .iter()
        .map(|l| (to_f64(l.re), to_f64(l.im)))
        .filter(|&(re, im)| (re * re + im * im).sqrt() >= 1.0 - tol)
        .collect();

    let mut tested_modes = Vec::new();
    for members in cluster_eigenvalues(&marginal, tol * scale) {
        let k = members.len() as f64;
        let re = members.iter().map(|&i| marginal[i].0).sum::<f64>() / k;
        let im = members.iter().map(|&i| marginal[i].1).sum::<f64>() / k;
        let mut stacked_re = DMatrix::zeros(n + m, n);
        stacked_re
            .view_mut((0, 0), (n, n))
            .copy_from(&(a - DMatrix::from_diagonal_element(n, n, from_f64::<T>(re))));
        stacked_re.view_mut((n, 0), (m, n)).copy_from(c);
        let rank = if im.abs() <= f64::EPSILON * scale {
            numerical_rank(&stacked_re, rank_tol)
        } else {
            let mut stacked_im = DMatrix::zeros(n + m, n);
            stacked_im
                .view_mut((0, 0), (n, n))
                .copy_from(&DMatrix::from_diagonal_element(n, n, from_f64::<T>(-im)));
            complex_rank(&stacked_re, &stacked_im, rank_tol)
        };
        tested_modes.push(ModeDiagnostic {
            re,
            im,
            magnitude: (re * re + im * im).sqrt(),
            rank,
            required_rank: n,
            observable_mode: rank == n,
        });
    }

    DetectabilityReport {
        detectable: tested_modes.iter().all(|d| d.observable_mode),
        tested_modes,
    }
}

/// Numerical rank of the stacked observability matrix equals the state
/// dimension.
pub fn check_observable<T: Scalar>(sys: &LinearSystem<T>) -> bool {
    let n = sys.state_dim();
    let m = sys.output_dim();
    let mut block = sys.c().clone();
    let mut obs = DMatrix::zeros(n * m, n);
    for i in 0..n {
        obs.view_mut((i * m, 0), (m, n)).copy_from(&block);
        if i + 1 < n {
            block = &block * sys.a();
        }
    }
    numerical_rank(&obs, from_f64::<T>(DEFAULT_RANK_TOL)) == n
}

/// Stabilizability of `(A, B)` is detectability of the transposed pair
/// `(Bᵀ, Aᵀ)`.
pub fn check_stabilizable<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    unit_tol: T,
) -> Result<DetectabilityReport> {
    let dual = LinearSystem::new(a.transpose(), b.transpose())?;
    Ok(check_detectable(&dual, unit_tol))
}

/// Verdicts for the orthogonal-coupling conditions on a `(Q, H)` pair:
/// `Q` orthogonal, `H Hᵀ = I`, and `(H, Q)` observable.
#[derive(Clone, Debug)]
pub struct CouplingPairReport {
    pub orthogonal: bool,
    pub orthogonality_defect: f64,
    pub rows_orthonormal: bool,
    pub row_defect: f64,
    pub observable: bool,
}

impl CouplingPairReport {
    pub fn pass(&self) -> bool {
        self.orthogonal && self.rows_orthonormal && self.observable
    }
}

/// Default defect tolerance for the orthogonality checks on `(Q, H)`.
pub const DEFAULT_ORTHOGONALITY_TOL: f64 = 1e-8;

/// Check the three orthogonal-coupling conditions on `(q, h)`; used both on
/// user-supplied pairs and on synthesis output.
pub fn check_coupling_pair<T: Scalar>(
    q: &DMatrix<T>,
    h: &DMatrix<T>,
    tol: T,
) -> Result<CouplingPairReport> {
    let n = q.nrows();
    if !q.is_square() || h.ncols() != n || h.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "expected square q and m x {} h, got q {}x{}, h {}x{}",
            n,
            q.nrows(),
            q.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    let orthogonality_defect = spectral_norm(&(q.transpose() * q - DMatrix::identity(n, n)));
    let m = h.nrows();
    let row_defect = spectral_norm(&(h * h.transpose() - DMatrix::identity(m, m)));
    let observable = check_observable(&LinearSystem::new(q.clone(), h.clone())?);
    Ok(CouplingPairReport {
        orthogonal: orthogonality_defect <= tol,
        orthogonality_defect: to_f64(orthogonality_defect),
        rows_orthonormal: row_defect <= tol,
        row_defect: to_f64(row_defect),
        observable,
    })
}

/// Combined report over the model assumptions for one system.
#[derive(Clone, Debug)]
pub struct AssumptionReport {
    pub neutral_stability: NeutralStabilityReport,
    pub detectability: DetectabilityReport,
    pub observable: bool,
}

impl AssumptionReport {
    /// Both required assumptions hold.
    pub fn pass(&self) -> bool {
        self.neutral_stability.neutrally_stable && self.detectability.detectable
    }
}

/// Run every assumption checker on `sys` with a shared unit tolerance.
pub fn check_assumptions<T: Scalar>(sys: &LinearSystem<T>, unit_tol: T) -> AssumptionReport {
    AssumptionReport {
        neutral_stability: check_neutral_stability(sys, unit_tol),
        detectability: check_detectable(sys, unit_tol),
        observable: check_observable(sys),
    }
}

/// Shared default unit tolerance for callers assembling reports.
pub fn default_unit_tol<T: Scalar>() -> T {
    from_f64(DEFAULT_UNIT_TOL)
}
