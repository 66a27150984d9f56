//! Dense real-matrix primitives shared by every other module: Kronecker
//! products, orthogonal projectors, orthonormal range bases, spectral norms,
//! and the real invariant-subspace split of a square matrix into its
//! unit-magnitude and strictly stable parts.
//!
//! All functions are pure; none hold shared state.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::scalar::{from_f64, to_f64, Scalar};

/// Relative band around magnitude 1 used to classify eigenvalues as
/// unit-magnitude versus strictly stable.
pub const DEFAULT_UNIT_TOL: f64 = 1e-8;
/// Relative singular-value cutoff for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Symmetry/idempotency tolerance for validated orthogonal projectors.
pub const DEFAULT_PROJECTOR_TOL: f64 = 1e-10;
/// A Sylvester operator whose singular values span more than this ratio is
/// treated as singular.
pub const SYLVESTER_SINGULARITY_RATIO: f64 = 1e-12;

/// True when every entry of `m` is finite.
pub fn all_finite<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.iter().all(|&x| to_f64(x).is_finite())
}

/// Kronecker product with the standard block layout: entry `(i, j)` of `a`
/// scales a full copy of `b`.
pub fn kron<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

/// Largest singular value (operator 2-norm). Zero-sized matrices have norm 0.
///
/// Computed by SVD rather than power iteration so repeated calls on the same
/// input are deterministic.
pub fn spectral_norm<T: Scalar>(a: &DMatrix<T>) -> T {
    if a.nrows() == 0 || a.ncols() == 0 {
        return T::zero();
    }
    a.singular_values()
        .iter()
        .fold(T::zero(), |acc, &s| acc.max(s))
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank<T: Scalar>(a: &DMatrix<T>, rel_tol: T) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.singular_values();
    let sigma_max = sv.iter().fold(T::zero(), |acc, &s| acc.max(s));
    if sigma_max <= T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * sigma_max).count()
}

/// A validated orthogonal projector: symmetric and idempotent within
/// tolerance.
#[derive(Clone, Debug)]
pub struct OrthoProjector<T: Scalar = f64> {
    dim: usize,
    matrix: DMatrix<T>,
}

impl<T: Scalar> OrthoProjector<T> {
    /// Validate `matrix` as an orthogonal projector with the default
    /// tolerance on both the symmetry and idempotency defects.
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        let tol = from_f64(DEFAULT_PROJECTOR_TOL);
        Self::with_tols(matrix, tol, tol)
    }

    /// Validate with explicit tolerances: `‖P − Pᵀ‖ ≤ tol_sym` and
    /// `‖P² − P‖ ≤ tol_idem` in the 2-norm.
    pub fn with_tols(matrix: DMatrix<T>, tol_sym: T, tol_idem: T) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "projector must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !all_finite(&matrix) {
            return Err(Error::NonFinite("projector matrix".into()));
        }
        let sym_defect = spectral_norm(&(&matrix - matrix.transpose()));
        if sym_defect > tol_sym {
            return Err(Error::Numerical(format!(
                "projector not symmetric: defect {:e}",
                to_f64(sym_defect)
            )));
        }
        let idem_defect = spectral_norm(&(&matrix * &matrix - &matrix));
        if idem_defect > tol_idem {
            return Err(Error::Numerical(format!(
                "projector not idempotent: defect {:e}",
                to_f64(idem_defect)
            )));
        }
        Ok(Self {
            dim: matrix.nrows(),
            matrix,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    /// The complementary projector `I − P`, orthogonal onto the orthogonal
    /// complement of this projector's range.
    pub fn complement(&self) -> Self {
        Self {
            dim: self.dim,
            matrix: DMatrix::identity(self.dim, self.dim) - &self.matrix,
        }
    }
}

/// Orthogonal projector onto the column space of `basis_source`, together
/// with a row-orthonormal matrix `h` (rank × n) whose transposed rows span
/// that same space, so `h hᵀ = I` and `p = hᵀ h`.
///
/// Rank is decided by singular values above `rank_tol` times the largest.
/// Rows of `h` are sign-normalized (largest-magnitude entry positive) and
/// sorted lexicographically so identical inputs give identical outputs.
pub fn projector_from_range<T: Scalar>(
    basis_source: &DMatrix<T>,
    rank_tol: T,
) -> Result<(OrthoProjector<T>, DMatrix<T>)> {
    let n = basis_source.nrows();
    if n == 0 || basis_source.ncols() == 0 {
        return Err(Error::ZeroRange);
    }
    if !all_finite(basis_source) {
        return Err(Error::NonFinite("range basis source".into()));
    }
    let svd = basis_source.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().fold(T::zero(), |acc, &s| acc.max(s));
    if sigma_max <= T::zero() {
        return Err(Error::ZeroRange);
    }
    let threshold = rank_tol * sigma_max;
    let mut rows: Vec<DVector<T>> = Vec::new();
    for (j, &s) in sigma.iter().enumerate() {
        if s > threshold {
            let mut row = DVector::from_iterator(n, u.column(j).iter().copied());
            // Sign convention: largest-magnitude entry positive.
            let lead =
                row.iter().cloned().fold(
                    T::zero(),
                    |acc: T, x| if x.abs() > acc.abs() { x } else { acc },
                );
            if lead < T::zero() {
                row.neg_mut();
            }
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let rank = rows.len();
    let mut h = DMatrix::zeros(rank, n);
    for (i, row) in rows.iter().enumerate() {
        h.row_mut(i).copy_from(&row.transpose());
    }
    let p = h.transpose() * &h;
    let proj = OrthoProjector::new(p)?;
    Ok((proj, h))
}

/// Real similarity `[U W]⁻¹ A [U W] = blkdiag(F, G)` separating the
/// unit-magnitude spectrum (`F`) from the strictly stable spectrum (`G`).
///
/// `unit_basis` and `stable_basis` hold the invariant-subspace bases as
/// columns; the left inverses satisfy `U† U = I`, `W† W = I`, `U† W = 0`,
/// `W† U = 0`.
#[derive(Clone, Debug)]
pub struct SpectralSplit<T: Scalar = f64> {
    pub unit_basis: DMatrix<T>,
    pub stable_basis: DMatrix<T>,
    pub unit_block: DMatrix<T>,
    pub stable_block: DMatrix<T>,
    pub unit_left_inverse: DMatrix<T>,
    pub stable_left_inverse: DMatrix<T>,
    pub unit_dim: usize,
    pub stable_dim: usize,
}

impl<T: Scalar> SpectralSplit<T> {
    /// The full change-of-basis matrix `[U W]`.
    pub fn basis(&self) -> DMatrix<T> {
        let n = self.unit_basis.nrows();
        let mut b = DMatrix::zeros(n, n);
        b.view_mut((0, 0), (n, self.unit_dim))
            .copy_from(&self.unit_basis);
        b.view_mut((0, self.unit_dim), (n, self.stable_dim))
            .copy_from(&self.stable_basis);
        b
    }

    /// Rebuild the original matrix: `U F U† + W G W†`.
    pub fn reassemble(&self) -> DMatrix<T> {
        let unit_part = &self.unit_basis * &self.unit_block * &self.unit_left_inverse;
        if self.stable_dim == 0 {
            unit_part
        } else {
            unit_part + &self.stable_basis * &self.stable_block * &self.stable_left_inverse
        }
    }
}

/// Eigenvalue magnitudes of one 1×1 or 2×2 diagonal block.
fn block_magnitudes<T: Scalar>(t: &DMatrix<T>, start: usize, size: usize) -> Vec<T> {
    if size == 1 {
        vec![t[(start, start)].abs()]
    } else {
        let a = t[(start, start)];
        let b = t[(start, start + 1)];
        let c = t[(start + 1, start)];
        let d = t[(start + 1, start + 1)];
        let tr = a + d;
        let det = a * d - b * c;
        let half = from_f64::<T>(0.5);
        let disc = tr * tr * half * half - det;
        if disc >= T::zero() {
            let root = disc.sqrt();
            vec![(tr * half + root).abs(), (tr * half - root).abs()]
        } else {
            // Complex pair: both magnitudes equal sqrt(det).
            let m = det.abs().sqrt();
            vec![m, m]
        }
    }
}

/// Partition the quasi-triangular `t` into 1×1 and 2×2 diagonal blocks.
fn scan_blocks<T: Scalar>(t: &DMatrix<T>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let negligible = T::default_epsilon() * t.norm().max(T::one());
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > negligible {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Rotate a 2×2 diagonal block with real eigenvalues into triangular form so
/// every remaining 2×2 block carries a complex pair.
fn triangularize_real_block<T: Scalar>(t: &mut DMatrix<T>, q: &mut DMatrix<T>, start: usize) {
    let a = t[(start, start)];
    let b = t[(start, start + 1)];
    let c = t[(start + 1, start)];
    let d = t[(start + 1, start + 1)];
    let half = from_f64::<T>(0.5);
    let tr = a + d;
    let disc = tr * tr * half * half - (a * d - b * c);
    if disc < T::zero() {
        return;
    }
    let lambda = tr * half + disc.sqrt();
    // Eigenvector of the block for `lambda`; pick the better-conditioned row.
    let (mut v0, mut v1) = if b.abs() + (lambda - a).abs() >= c.abs() + (lambda - d).abs() {
        (b, lambda - a)
    } else {
        (lambda - d, c)
    };
    let norm = (v0 * v0 + v1 * v1).sqrt();
    if norm <= T::default_epsilon() {
        return; // Already triangular enough; caller zeroes the subdiagonal.
    }
    v0 /= norm;
    v1 /= norm;
    let n = t.nrows();
    let mut g = DMatrix::identity(n, n);
    g[(start, start)] = v0;
    g[(start + 1, start)] = v1;
    g[(start, start + 1)] = -v1;
    g[(start + 1, start + 1)] = v0;
    *t = g.transpose() * &*t * &g;
    *q *= g;
    t[(start + 1, start)] = T::zero();
}

/// Swap two adjacent diagonal blocks of the real Schur form via an orthogonal
/// similarity, preserving quasi-triangularity. `q` accumulates the
/// transformation.
fn swap_adjacent_blocks<T: Scalar>(
    t: &mut DMatrix<T>,
    q: &mut DMatrix<T>,
    start: usize,
    size_first: usize,
    size_second: usize,
) -> Result<()> {
    let n = t.nrows();
    let (p, r) = (size_first, size_second);
    let t11 = t.view((start, start), (p, p)).into_owned();
    let t12 = t.view((start, start + p), (p, r)).into_owned();
    let t22 = t.view((start + p, start + p), (r, r)).into_owned();
    let x = sylvester_decouple(&t11, &t12, &t22).map_err(|e| match e {
        Error::NearSingular { smallest, largest } => Error::SplitFailed {
            detail: format!(
                "block swap failed: spectra too close (singular values {:e}/{:e})",
                smallest, largest
            ),
            magnitudes: block_magnitudes(t, start, p)
                .into_iter()
                .chain(block_magnitudes(t, start + p, r))
                .map(to_f64)
                .collect(),
        },
        other => other,
    })?;
    // Columns of [X; I_r] span the invariant subspace of the trailing block;
    // extend with [I_p; 0] and orthonormalize to get the swap similarity.
    let m = p + r;
    let mut stacked = DMatrix::zeros(m, m);
    stacked.view_mut((0, 0), (p, r)).copy_from(&x);
    stacked
        .view_mut((p, 0), (r, r))
        .copy_from(&DMatrix::identity(r, r));
    stacked
        .view_mut((0, r), (p, p))
        .copy_from(&DMatrix::identity(p, p));
    let g_window = stacked.qr().q();
    let mut g = DMatrix::identity(n, n);
    g.view_mut((start, start), (m, m)).copy_from(&g_window);
    *t = g.transpose() * &*t * &g;
    *q *= &g;
    // The similarity produces an exact zero block up to roundoff; measure it
    // before writing the zeros.
    let defect = t.view((start + r, start), (p, r)).norm();
    let scale = t.norm().max(T::one());
    if defect > from_f64::<T>(1e-7) * scale {
        return Err(Error::SplitFailed {
            detail: format!("block swap residual {:e} too large", to_f64(defect)),
            magnitudes: vec![],
        });
    }
    for i in 0..p {
        for j in 0..r {
            t[(start + r + i, start + j)] = T::zero();
        }
    }
    Ok(())
}

/// Classification of a diagonal block's spectrum.
#[derive(Clone, Copy, PartialEq, Eq)]
enum BlockClass {
    Unit,
    Stable,
}

/// Split a square matrix into its unit-magnitude and strictly stable spectral
/// parts over the reals.
///
/// Eigenvalues with magnitude in `[1 − unit_tol, 1 + unit_tol]` go to the
/// unit block; magnitudes below `1 − unit_tol` go to the stable block;
/// magnitudes above `1 + unit_tol` cannot be classified and produce
/// [`Error::SplitFailed`] listing the offenders.
pub fn real_spectral_split<T: Scalar>(a: &DMatrix<T>, unit_tol: T) -> Result<SpectralSplit<T>> {
    let n = a.nrows();
    if !a.is_square() || n == 0 {
        return Err(Error::Dimension(format!(
            "spectral split needs a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(Error::NonFinite("split input".into()));
    }
    let schur = Schur::try_new(a.clone(), T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numerical("real Schur iteration did not converge".into()))?;
    let (mut q, mut t) = schur.unpack();

    // Force real-eigenvalue 2x2 blocks into triangular form first.
    for (start, size) in scan_blocks(&t) {
        if size == 2 {
            let mags = block_magnitudes(&t, start, 2);
            let a0 = t[(start, start)];
            let d0 = t[(start + 1, start + 1)];
            let half = from_f64::<T>(0.5);
            let tr = a0 + d0;
            let det = a0 * d0 - t[(start, start + 1)] * t[(start + 1, start)];
            if tr * tr * half * half - det >= T::zero() && mags[0] != mags[1] {
                triangularize_real_block(&mut t, &mut q, start);
            }
        }
    }

    let classify = |t: &DMatrix<T>, start: usize, size: usize| -> Result<BlockClass> {
        let lower = T::one() - unit_tol;
        let upper = T::one() + unit_tol;
        let mags = block_magnitudes(t, start, size);
        let offenders: Vec<f64> = mags
            .iter()
            .filter(|&&m| m > upper)
            .map(|&m| to_f64(m))
            .collect();
        if !offenders.is_empty() {
            return Err(Error::SplitFailed {
                detail: "eigenvalue magnitude exceeds the unit classification band".into(),
                magnitudes: offenders,
            });
        }
        if mags.iter().all(|&m| m >= lower) {
            Ok(BlockClass::Unit)
        } else if mags.iter().all(|&m| m < lower) {
            Ok(BlockClass::Stable)
        } else {
            Err(Error::SplitFailed {
                detail: "2x2 block straddles the unit classification band".into(),
                magnitudes: mags.iter().map(|&m| to_f64(m)).collect(),
            })
        }
    };

    // Bubble unit blocks above stable blocks.
    loop {
        let blocks = scan_blocks(&t);
        let mut classes = Vec::with_capacity(blocks.len());
        for &(start, size) in &blocks {
            classes.push(classify(&t, start, size)?);
        }
        let swap_at = (0..blocks.len().saturating_sub(1))
            .find(|&i| classes[i] == BlockClass::Stable && classes[i + 1] == BlockClass::Unit);
        match swap_at {
            None => break,
            Some(i) => {
                let (start, p) = blocks[i];
                let (_, r) = blocks[i + 1];
                swap_adjacent_blocks(&mut t, &mut q, start, p, r)?;
            }
        }
    }

    let mut unit_dim = 0;
    for (start, size) in scan_blocks(&t) {
        if classify(&t, start, size)? == BlockClass::Unit {
            unit_dim += size;
        }
    }
    let stable_dim = n - unit_dim;

    let t11 = t.view((0, 0), (unit_dim, unit_dim)).into_owned();
    let t12 = t.view((0, unit_dim), (unit_dim, stable_dim)).into_owned();
    let t22 = t
        .view((unit_dim, unit_dim), (stable_dim, stable_dim))
        .into_owned();
    let y = if unit_dim > 0 && stable_dim > 0 {
        sylvester_decouple(&t11, &t12, &t22)?
    } else {
        DMatrix::zeros(unit_dim, stable_dim)
    };
    let q1 = q.columns(0, unit_dim).into_owned();
    let q2 = q.columns(unit_dim, stable_dim).into_owned();
    let split = SpectralSplit {
        unit_basis: q1.clone(),
        stable_basis: &q1 * &y + &q2,
        unit_block: t11,
        stable_block: t22,
        unit_left_inverse: q1.transpose() - &y * q2.transpose(),
        stable_left_inverse: q2.transpose(),
        unit_dim,
        stable_dim,
    };

    let residual = spectral_norm(&(split.reassemble() - a));
    let scale = spectral_norm(a).max(T::one());
    if residual > from_f64::<T>(1e-6) * scale {
        return Err(Error::Numerical(format!(
            "spectral split reconstruction residual {:e} too large",
            to_f64(residual)
        )));
    }
    Ok(split)
}

/// Solve `t11 Y − Y t22 = −t12` so that `[I Y; 0 I]` block-diagonalizes the
/// quasi-triangular matrix `[t11 t12; 0 t22]`.
///
/// Solved by vectorizing into a dense linear system; errors when the
/// Sylvester operator's singular values span worse than
/// [`SYLVESTER_SINGULARITY_RATIO`].
pub fn sylvester_decouple<T: Scalar>(
    t11: &DMatrix<T>,
    t12: &DMatrix<T>,
    t22: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let p = t11.nrows();
    let r = t22.nrows();
    if !t11.is_square() || !t22.is_square() || t12.nrows() != p || t12.ncols() != r {
        return Err(Error::Dimension(
            "sylvester blocks must be (p,p), (p,r), (r,r)".into(),
        ));
    }
    if p == 0 || r == 0 {
        return Ok(DMatrix::zeros(p, r));
    }
    // Column-major vectorization: (I_r ⊗ t11 − t22ᵀ ⊗ I_p) vec(Y) = −vec(t12).
    let op = kron(&DMatrix::identity(r, r), t11) - kron(&t22.transpose(), &DMatrix::identity(p, p));
    let svd = op.svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(T::zero(), |a, &s| a.max(s));
    let sigma_min = svd.singular_values.iter().fold(sigma_max, |a, &s| a.min(s));
    if sigma_max <= T::zero() || sigma_min < from_f64::<T>(SYLVESTER_SINGULARITY_RATIO) * sigma_max
    {
        return Err(Error::NearSingular {
            smallest: to_f64(sigma_min),
            largest: to_f64(sigma_max),
        });
    }
    let rhs = DVector::from_iterator(p * r, t12.iter().map(|&x| -x));
    let sol = svd
        .solve(&rhs, T::default_epsilon())
        .map_err(|e| Error::Numerical(format!("sylvester solve failed: {e}")))?;
    Ok(DMatrix::from_column_slice(p, r, sol.as_slice()))
}

/// 2×2 rotation by `theta`; used throughout the tests and generators.
pub fn rotation<T: Scalar>(theta: T) -> DMatrix<T> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}
