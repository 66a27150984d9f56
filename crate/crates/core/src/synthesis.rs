//! Output-feedback gain construction for neutrally stable detectable
//! systems, in four steps: split the spectrum into unit and stable parts,
//! solve for a symmetric positive definite form left invariant by the unit
//! block, orthonormalize the transformed output directions, and assemble the
//! gain. Also houses the dual (full-state coupling) construction and the
//! constructive output-rank reduction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numerics::{
    numerical_rank, projector_from_range, real_spectral_split, spectral_norm, SpectralSplit,
    DEFAULT_RANK_TOL, DEFAULT_UNIT_TOL,
};
use crate::scalar::{from_f64, to_f64, Scalar};
use crate::sysmodel::{check_assumptions, LinearSystem};

/// Default relative residual target for the invariant-form solver.
pub const DEFAULT_INVARIANT_TOL: f64 = 1e-12;
/// Default iteration budget for the invariant-form solver.
pub const DEFAULT_INVARIANT_MAX_ITER: usize = 1_000_000;
/// Relative singular-value threshold selecting the invariant null space.
const NULL_SPACE_REL_TOL: f64 = 1e-13;
/// Relative eigenvalue floor below which a candidate form is not accepted as
/// positive definite.
const SPD_MIN_EIG_REL: f64 = 1e-10;
/// Iteration counts at which the averaging loop tries the null-space
/// projection fallback.
const FALLBACK_CHECKPOINTS: [usize; 4] = [2_048, 8_192, 32_768, 131_072];

/// Tuning knobs for [`synthesize`].
#[derive(Clone, Debug)]
pub struct SynthesisOptions<T: Scalar = f64> {
    /// Eigenvalue-magnitude classification band around 1.
    pub unit_tol: T,
    /// Relative residual target for the invariant form.
    pub invariant_tol: T,
    /// Iteration budget for the invariant form.
    pub invariant_max_iter: usize,
    /// Relative rank cutoff for range and rank decisions.
    pub rank_tol: T,
    /// Reduce a rank-deficient coupled output instead of erroring.
    pub reduce_outputs: bool,
}

impl<T: Scalar> Default for SynthesisOptions<T> {
    fn default() -> Self {
        Self {
            unit_tol: from_f64(DEFAULT_UNIT_TOL),
            invariant_tol: from_f64(DEFAULT_INVARIANT_TOL),
            invariant_max_iter: DEFAULT_INVARIANT_MAX_ITER,
            rank_tol: from_f64(DEFAULT_RANK_TOL),
            reduce_outputs: false,
        }
    }
}

/// Defect norms recorded while assembling a gain, for reports and tests.
#[derive(Clone, Copy, Debug, Default)]
pub struct SynthesisResiduals {
    /// `‖Fᵀ R F − R‖ / ‖R‖`.
    pub invariant_form: f64,
    /// `‖Qᵀ Q − I‖` for the similarity-orthogonalized unit block.
    pub rotation_orthogonality: f64,
    /// `‖H Hᵀ − I‖` for the measurement rows.
    pub measurement_orthonormality: f64,
    /// `‖L C U R^{-1/2} − U F R^{-1/2} Hᵀ H‖`, the identity that reduces the
    /// output-coupled loop to the orthogonal one.
    pub gain_identity: f64,
}

/// Everything produced by the gain construction.
#[derive(Clone, Debug)]
pub struct GainSynthesis<T: Scalar = f64> {
    /// Feedback gain, `n × m`: the input is the gain times the aggregated
    /// output disagreement.
    pub gain: DMatrix<T>,
    /// Symmetric positive definite form invariant under the unit block.
    pub invariant_form: DMatrix<T>,
    /// Row-orthonormal measurement map in the transformed unit coordinates.
    pub measurement: DMatrix<T>,
    /// Orthogonal matrix `R^{1/2} F R^{-1/2}` driving the transformed loop.
    pub rotation: DMatrix<T>,
    /// The unit/stable spectral split of the state matrix.
    pub split: SpectralSplit<T>,
    pub residuals: SynthesisResiduals,
    /// Row-orthonormal output compression applied before synthesis, when the
    /// coupled output matrix was rank deficient.
    pub output_reduction: Option<DMatrix<T>>,
}

impl<T: Scalar> GainSynthesis<T> {
    pub fn unit_dim(&self) -> usize {
        self.split.unit_dim
    }

    pub fn stable_dim(&self) -> usize {
        self.split.stable_dim
    }
}

/// Symmetric positive definite square root and inverse square root.
fn spd_sqrt<T: Scalar>(r: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let n = r.nrows();
    let eig = SymmetricEigen::new(r.clone());
    let max_eig = eig.eigenvalues.iter().fold(T::zero(), |a, &x| a.max(x));
    let min_eig = eig.eigenvalues.iter().fold(max_eig, |a, &x| a.min(x));
    if min_eig <= from_f64::<T>(SPD_MIN_EIG_REL) * max_eig || max_eig <= T::zero() {
        return Err(Error::Numerical(format!(
            "form is not positive definite: eigenvalues span {:e}..{:e}",
            to_f64(min_eig),
            to_f64(max_eig)
        )));
    }
    let mut sqrt = DMatrix::zeros(n, n);
    let mut inv_sqrt = DMatrix::zeros(n, n);
    for i in 0..n {
        let root = eig.eigenvalues[i].sqrt();
        let v = eig.eigenvectors.column(i);
        sqrt += v * v.transpose() * root;
        inv_sqrt += v * v.transpose() * (T::one() / root);
    }
    Ok((sqrt, inv_sqrt))
}

/// Orthonormal basis of the symmetric matrices under the Frobenius inner
/// product, in a fixed order.
fn symmetric_basis<T: Scalar>(n: usize) -> Vec<DMatrix<T>> {
    let inv_sqrt2 = T::one() / from_f64::<T>(2.0).sqrt();
    let mut basis = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            if i == j {
                e[(i, i)] = T::one();
            } else {
                e[(i, j)] = inv_sqrt2;
                e[(j, i)] = inv_sqrt2;
            }
            basis.push(e);
        }
    }
    basis
}

/// Project `seed` onto the space of symmetric solutions of `Fᵀ R F = R` and
/// accept the result only if it is exactly invariant (within `tol`,
/// relative) and positive definite.
fn invariant_projection<T: Scalar>(
    f: &DMatrix<T>,
    seed: &DMatrix<T>,
    tol: T,
) -> Result<DMatrix<T>> {
    let n = f.nrows();
    let basis = symmetric_basis::<T>(n);
    let dim = basis.len();
    let mut op = DMatrix::zeros(n * n, dim);
    for (s, e) in basis.iter().enumerate() {
        let image = f.transpose() * e * f - e;
        op.column_mut(s)
            .copy_from(&DVector::from_column_slice(image.as_slice()));
    }
    let svd = op.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().fold(T::zero(), |a, &s| a.max(s));

    let seed_coeffs = DVector::from_iterator(dim, basis.iter().map(|e| seed.dot(e)));
    let projected_coeffs = if sigma_max <= T::default_epsilon() {
        // The whole symmetric space is invariant (orthogonal block).
        seed_coeffs
    } else {
        let threshold = from_f64::<T>(NULL_SPACE_REL_TOL) * sigma_max;
        let mut acc = DVector::zeros(dim);
        let mut found = false;
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s <= threshold {
                found = true;
                let direction = v_t.row(i).transpose();
                let weight = direction.dot(&seed_coeffs);
                acc += direction * weight;
            }
        }
        if !found {
            return Err(Error::Numerical(
                "no invariant symmetric direction found".into(),
            ));
        }
        acc
    };

    let mut candidate = DMatrix::zeros(n, n);
    for (s, e) in basis.iter().enumerate() {
        candidate += e * projected_coeffs[s];
    }
    let scale = spectral_norm(&candidate);
    if scale <= T::zero() {
        return Err(Error::Numerical(
            "invariant projection collapsed to zero".into(),
        ));
    }
    let residual = spectral_norm(&(f.transpose() * &candidate * f - &candidate));
    if residual > tol * scale {
        return Err(Error::Numerical(format!(
            "projected form residual {:e} above target",
            to_f64(residual)
        )));
    }
    let eig = SymmetricEigen::new(candidate.clone());
    let max_eig = eig.eigenvalues.iter().fold(T::zero(), |a, &x| a.max(x));
    let min_eig = eig.eigenvalues.iter().fold(max_eig, |a, &x| a.min(x));
    if min_eig <= from_f64::<T>(SPD_MIN_EIG_REL) * max_eig {
        return Err(Error::Numerical(
            "projected form not positive definite".into(),
        ));
    }
    Ok(candidate)
}

/// Symmetric positive definite `R` with `Fᵀ R F = R` for a matrix whose
/// eigenvalues all sit on the unit circle with full eigenspaces.
///
/// Runs the running average of the Gram matrices of the powers of `f`, which
/// converges to an invariant form, and stops as soon as the relative
/// residual `‖Fᵀ R F − R‖ ≤ tol·‖R‖` holds. Because that average closes in
/// only linearly, checkpoints along the way project the current average onto
/// the exactly invariant subspace (a vectorized linear solve) and return the
/// projection when it is positive definite. Exhausting `max_iter` signals a
/// defective unit eigenvalue.
pub fn solve_invariant_form<T: Scalar>(
    f: &DMatrix<T>,
    tol: T,
    max_iter: usize,
) -> Result<DMatrix<T>> {
    let n = f.nrows();
    if !f.is_square() {
        return Err(Error::Dimension(
            "invariant form needs a square matrix".into(),
        ));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let mut power = f.clone();
    let mut gram_sum: DMatrix<T> = DMatrix::zeros(n, n);
    let mut last_residual = f64::INFINITY;
    for k in 1..=max_iter.max(1) {
        gram_sum += power.transpose() * &power;
        let check = k <= 64 || k % 64 == 0 || k == max_iter;
        if check {
            let average = &gram_sum / from_f64::<T>(k as f64);
            let scale = spectral_norm(&average);
            let residual = spectral_norm(&(f.transpose() * &average * f - &average));
            last_residual = to_f64(residual / scale.max(T::default_epsilon()));
            if residual <= tol * scale {
                return Ok(average);
            }
            if FALLBACK_CHECKPOINTS.contains(&k) {
                if let Ok(projected) = invariant_projection(f, &average, tol) {
                    return Ok(projected);
                }
            }
        }
        power = f * power;
    }
    Err(Error::NoConvergence {
        residual: last_residual,
        iterations: max_iter,
    })
}

/// Compress a rank-deficient coupled output: returns the system with output
/// map `T C` and the compression `T` itself, whose orthonormal rows span the
/// column space of `C U`. Because `T` acts linearly on output differences,
/// a gain for the reduced system lifts to the original one as `gain · T`.
pub fn reduce_outputs<T: Scalar>(
    sys: &LinearSystem<T>,
    unit_basis: &DMatrix<T>,
    rank_tol: T,
) -> Result<(LinearSystem<T>, DMatrix<T>)> {
    let m = sys.output_dim();
    let coupled = sys.c() * unit_basis;
    let rank = numerical_rank(&coupled, rank_tol);
    if rank == m {
        return Ok((sys.clone(), DMatrix::identity(m, m)));
    }
    let (_, compression) = projector_from_range(&coupled, rank_tol)?;
    let reduced = LinearSystem::new(sys.a().clone(), &compression * sys.c())?;
    Ok((reduced, compression))
}

/// Construct an output-feedback gain for `sys` under the stated assumptions.
///
/// With no unit-circle eigenvalues the zero gain already synchronizes (all
/// trajectories decay), so the gain is zero and the transformed-loop pieces
/// are empty. Otherwise the four construction steps run and every invariant
/// of the result is recorded in `residuals`.
///
/// The construction needs the coupled output matrix `C U` to have full row
/// rank, which bounds the effective output count by the unit dimension.
/// More outputs than that are necessarily redundant: enable
/// `reduce_outputs` to compress them onto the range of `C U` (the reduced
/// rank never exceeds the unit dimension) instead of failing.
pub fn synthesize<T: Scalar>(
    sys: &LinearSystem<T>,
    opts: &SynthesisOptions<T>,
) -> Result<GainSynthesis<T>> {
    let report = check_assumptions(sys, opts.unit_tol);
    if !report.pass() {
        let mut reasons = Vec::new();
        if !report.neutral_stability.neutrally_stable {
            let detail: Vec<String> = report
                .neutral_stability
                .eigenvalues
                .iter()
                .map(|e| format!("{:+.6}{:+.6}i (|.|={:.6})", e.re, e.im, e.magnitude))
                .collect();
            reasons.push(format!(
                "state matrix is not neutrally stable; eigenvalues {}",
                detail.join(", ")
            ));
        }
        if !report.detectability.detectable {
            let failing: Vec<String> = report
                .detectability
                .tested_modes
                .iter()
                .filter(|m| !m.observable_mode)
                .map(|m| format!("{:+.6}{:+.6}i", m.re, m.im))
                .collect();
            reasons.push(format!(
                "system is not detectable; unobservable marginal modes at {}",
                failing.join(", ")
            ));
        }
        return Err(Error::AssumptionViolated(reasons.join("; ")));
    }

    let split = real_spectral_split(sys.a(), opts.unit_tol)?;
    synthesize_from_split(sys, split, opts)
}

/// The construction steps after the spectral split, exposed separately so a
/// caller can supply any valid split (the result does not depend on which
/// invariant-subspace basis was chosen).
pub fn synthesize_from_split<T: Scalar>(
    sys: &LinearSystem<T>,
    split: SpectralSplit<T>,
    opts: &SynthesisOptions<T>,
) -> Result<GainSynthesis<T>> {
    let n = sys.state_dim();
    let m = sys.output_dim();
    if split.unit_dim == 0 {
        return Ok(GainSynthesis {
            gain: DMatrix::zeros(n, m),
            invariant_form: DMatrix::zeros(0, 0),
            measurement: DMatrix::zeros(m, 0),
            rotation: DMatrix::zeros(0, 0),
            split,
            residuals: SynthesisResiduals::default(),
            output_reduction: None,
        });
    }

    let coupled = sys.c() * &split.unit_basis;
    let rank = numerical_rank(&coupled, opts.rank_tol);
    if rank < m {
        if !opts.reduce_outputs {
            return Err(Error::RankDeficientCU { rank, outputs: m });
        }
        let (reduced, compression) = reduce_outputs(sys, &split.unit_basis, opts.rank_tol)?;
        let inner = synthesize(&reduced, opts)?;
        let lifted = &inner.gain * &compression;
        return Ok(GainSynthesis {
            gain: lifted,
            output_reduction: Some(compression),
            ..inner
        });
    }

    let invariant_form = solve_invariant_form(
        &split.unit_block,
        opts.invariant_tol,
        opts.invariant_max_iter,
    )?;
    let (form_sqrt, form_inv_sqrt) = spd_sqrt(&invariant_form)?;

    let range_source = &form_inv_sqrt * split.unit_basis.transpose() * sys.c().transpose();
    let (_, measurement) = projector_from_range(&range_source, opts.rank_tol)?;
    if measurement.nrows() != m {
        return Err(Error::Numerical(format!(
            "measurement rows {} do not match output dimension {}",
            measurement.nrows(),
            m
        )));
    }

    let coupling = &coupled * &form_inv_sqrt * measurement.transpose();
    let coupling_inv = coupling
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("transformed output coupling is not invertible".into()))?;
    let gain: DMatrix<T> = &split.unit_basis
        * &split.unit_block
        * &form_inv_sqrt
        * measurement.transpose()
        * coupling_inv;
    let rotation: DMatrix<T> = &form_sqrt * &split.unit_block * &form_inv_sqrt;

    let n1 = split.unit_dim;
    let residuals = SynthesisResiduals {
        invariant_form: to_f64(
            spectral_norm(
                &(split.unit_block.transpose() * &invariant_form * &split.unit_block
                    - &invariant_form),
            ) / spectral_norm(&invariant_form),
        ),
        rotation_orthogonality: to_f64(spectral_norm(
            &(rotation.transpose() * &rotation - DMatrix::identity(n1, n1)),
        )),
        measurement_orthonormality: to_f64(spectral_norm(
            &(&measurement * measurement.transpose() - DMatrix::identity(m, m)),
        )),
        gain_identity: to_f64(spectral_norm(
            &(&gain * sys.c() * &split.unit_basis * &form_inv_sqrt
                - &split.unit_basis
                    * &split.unit_block
                    * &form_inv_sqrt
                    * measurement.transpose()
                    * &measurement),
        )),
    };

    Ok(GainSynthesis {
        gain,
        invariant_form,
        measurement,
        rotation,
        split,
        residuals,
        output_reduction: None,
    })
}

/// Gain for the dual network `x⁺ = Aᵀ x + Cᵀ u` with full-state coupling.
#[derive(Clone, Debug)]
pub struct DualGain<T: Scalar = f64> {
    /// `m × n` gain applied to the aggregated state disagreement.
    pub gain: DMatrix<T>,
    /// The primal synthesis it was transposed from.
    pub primal: GainSynthesis<T>,
}

/// Solve the dual problem: given the dual plant matrices `Aᵀ` and `Cᵀ`
/// (stabilizable by duality with the primal detectability), construct the
/// primal gain and transpose it.
pub fn synthesize_dual<T: Scalar>(
    a_t: &DMatrix<T>,
    c_t: &DMatrix<T>,
    opts: &SynthesisOptions<T>,
) -> Result<DualGain<T>> {
    let sys = LinearSystem::new(a_t.transpose(), c_t.transpose())?;
    let primal = synthesize(&sys, opts)?;
    Ok(DualGain {
        gain: primal.gain.transpose(),
        primal,
    })
}
