//! Seeded random generators for test and verification corpora: neutrally
//! stable detectable systems with a prescribed unit/stable spectrum split,
//! connected row-stochastic topologies, and orthogonal coupling pairs.
//!
//! Everything draws from a caller-supplied RNG so corpora are reproducible
//! from a single seed.

use nalgebra::DMatrix;
use rand::Rng;

use crate::numerics::{numerical_rank, rotation, DEFAULT_RANK_TOL, DEFAULT_UNIT_TOL};
use crate::scalar::{from_f64, Scalar};
use crate::sysmodel::{check_detectable, LinearSystem};
use crate::topology::Topology;

/// Matrix with entries uniform on `[-1, 1]`.
pub fn random_matrix<T: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |_, _| from_f64(rng.gen_range(-1.0..1.0)))
}

/// Random orthogonal matrix from the QR factorization of a random matrix,
/// with the sign convention that makes the factorization unique.
pub fn random_orthogonal<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> DMatrix<T> {
    loop {
        let qr = random_matrix::<T, R>(rng, n, n).qr();
        let r = qr.r();
        if (0..n).any(|i| r[(i, i)].abs() < from_f64(1e-3)) {
            continue;
        }
        let mut q = qr.q();
        for i in 0..n {
            if r[(i, i)] < T::zero() {
                q.column_mut(i).neg_mut();
            }
        }
        return q;
    }
}

/// Draw rotation angles that keep unit eigenvalues pairwise separated, so
/// invariant-subspace computations stay well conditioned.
fn draw_angles<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    let mut angles: Vec<f64> = Vec::with_capacity(count);
    while angles.len() < count {
        let theta = rng.gen_range(0.25..2.9);
        let separated = angles.iter().all(|&a: &f64| (a - theta).abs() >= 0.15)
            && (theta - std::f64::consts::PI).abs() >= 0.15;
        if separated {
            angles.push(theta);
        }
    }
    angles
}

/// Orthogonal block-diagonal matrix with every eigenvalue on the unit
/// circle: plane rotations with separated angles plus one `±1` when the
/// dimension is odd.
pub fn random_unit_orthogonal_block<T: Scalar, R: Rng>(rng: &mut R, dim: usize) -> DMatrix<T> {
    let mut b = DMatrix::identity(dim, dim);
    let pairs = dim / 2;
    for (k, theta) in draw_angles(rng, pairs).into_iter().enumerate() {
        b.view_mut((2 * k, 2 * k), (2, 2))
            .copy_from(&rotation(from_f64::<T>(theta)));
    }
    if dim % 2 == 1 {
        b[(dim - 1, dim - 1)] = if rng.gen_bool(0.5) {
            T::one()
        } else {
            -T::one()
        };
    }
    b
}

/// Well-conditioned random similarity `S = Q₁ D Q₂ᵀ` with its exact-form
/// inverse and condition number.
pub fn random_similarity<T: Scalar, R: Rng>(
    rng: &mut R,
    n: usize,
) -> (DMatrix<T>, DMatrix<T>, f64) {
    let q1 = random_orthogonal::<T, R>(rng, n);
    let q2 = random_orthogonal::<T, R>(rng, n);
    let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.6..1.6)).collect();
    let cond =
        d.iter().cloned().fold(f64::MIN, f64::max) / d.iter().cloned().fold(f64::MAX, f64::min);
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        d.iter().map(|&x| from_f64::<T>(x)),
    ));
    let diag_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        d.iter().map(|&x| from_f64::<T>(1.0 / x)),
    ));
    let s = &q1 * diag * q2.transpose();
    let s_inv = &q2 * diag_inv * q1.transpose();
    (s, s_inv, cond)
}

/// A generated system together with the construction data tests can use as
/// an oracle.
#[derive(Clone, Debug)]
pub struct SystemSample<T: Scalar = f64> {
    pub system: LinearSystem<T>,
    pub unit_dim: usize,
    pub stable_dim: usize,
    /// Similarity used to hide the block structure; its leading `unit_dim`
    /// columns span the unit-eigenvalue invariant subspace.
    pub basis: DMatrix<T>,
    pub basis_cond: f64,
}

/// Neutrally stable system with `unit_dim` unit-circle eigenvalues,
/// `n - unit_dim` strictly stable ones, and a detectable random output map.
///
/// Requires `m <= unit_dim` when `unit_dim > 0` so the coupled output matrix
/// can have full row rank.
pub fn random_neutrally_stable_system<T: Scalar, R: Rng>(
    rng: &mut R,
    n: usize,
    unit_dim: usize,
    m: usize,
) -> SystemSample<T> {
    assert!(n >= 1 && unit_dim <= n);
    assert!(
        unit_dim == 0 || m <= unit_dim,
        "need m <= unit_dim for a full-rank coupled output"
    );
    let stable_dim = n - unit_dim;
    let mut block = DMatrix::zeros(n, n);
    block
        .view_mut((0, 0), (unit_dim, unit_dim))
        .copy_from(&random_unit_orthogonal_block(rng, unit_dim));
    // Stable part: upper triangular with eigenvalues in ±[0.2, 0.85] and
    // mild non-normal coupling, keeping power transients small.
    for i in 0..stable_dim {
        let mag = rng.gen_range(0.2..0.85);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        block[(unit_dim + i, unit_dim + i)] = from_f64(sign * mag);
        for j in (i + 1)..stable_dim {
            block[(unit_dim + i, unit_dim + j)] = from_f64(rng.gen_range(-0.1..0.1));
        }
    }
    let (s, s_inv, basis_cond) = random_similarity::<T, R>(rng, n);
    let a: DMatrix<T> = &s * block * &s_inv;
    let unit_basis = s.columns(0, unit_dim).into_owned();

    let unit_tol = from_f64::<T>(DEFAULT_UNIT_TOL);
    let rank_tol = from_f64::<T>(DEFAULT_RANK_TOL);
    for _ in 0..200 {
        let c = random_matrix::<T, R>(rng, m, n);
        let system = LinearSystem::new(a.clone(), c.clone()).expect("valid dimensions");
        if !check_detectable(&system, unit_tol).detectable {
            continue;
        }
        if unit_dim > 0 && numerical_rank(&(&c * &unit_basis), rank_tol) < m {
            continue;
        }
        return SystemSample {
            system,
            unit_dim,
            stable_dim,
            basis: s,
            basis_cond,
        };
    }
    unreachable!("random output maps are detectable with overwhelming probability")
}

/// Dimension sampler for mixed corpora: `n <= 8`, `m <= 3`, unit dimension
/// anywhere from zero (fully stable) to `n`.
pub fn random_system_dims<R: Rng>(rng: &mut R) -> (usize, usize, usize) {
    let n = rng.gen_range(1..=8);
    let unit_dim = if rng.gen_bool(0.1) {
        0
    } else {
        rng.gen_range(1..=n)
    };
    let m = if unit_dim == 0 {
        rng.gen_range(1..=3)
    } else {
        rng.gen_range(1..=unit_dim.min(3))
    };
    (n, unit_dim, m)
}

/// Connected row-stochastic topology: self-loops everywhere, extra arcs with
/// probability `arc_prob`, random weights, rows normalized; resampled until
/// connected. Generally neither symmetric nor balanced.
pub fn random_connected_topology<T: Scalar, R: Rng>(
    rng: &mut R,
    p: usize,
    arc_prob: f64,
) -> Topology<T> {
    loop {
        let mut lambda = DMatrix::zeros(p, p);
        for i in 0..p {
            lambda[(i, i)] = from_f64::<T>(rng.gen_range(0.2..1.0));
            for j in 0..p {
                if j != i && rng.gen_bool(arc_prob) {
                    lambda[(i, j)] = from_f64::<T>(rng.gen_range(0.2..1.0));
                }
            }
            let sum = lambda.row(i).iter().fold(T::zero(), |a, &x| a + x);
            for j in 0..p {
                lambda[(i, j)] /= sum;
            }
        }
        if let Ok(topology) = Topology::new(lambda) {
            return topology;
        }
    }
}

/// Orthogonal `q` and row-orthonormal `h` with `(h, q)` observable.
pub fn random_coupling_pair<T: Scalar, R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
) -> (DMatrix<T>, DMatrix<T>) {
    assert!(m <= n);
    let q = random_orthogonal::<T, R>(rng, n);
    for _ in 0..200 {
        let tall = random_matrix::<T, R>(rng, n, m);
        let qr = tall.qr();
        if (0..m).any(|i| qr.r()[(i, i)].abs() < from_f64(1e-3)) {
            continue;
        }
        let h = qr.q().transpose();
        let sys = LinearSystem::new(q.clone(), h.clone()).expect("valid dimensions");
        if crate::sysmodel::check_observable(&sys) {
            return (q, h);
        }
    }
    unreachable!("random row spans are observable with overwhelming probability")
}

/// Like [`random_connected_topology`], rejecting topologies whose
/// second-largest eigenvalue modulus exceeds `slem_max`, so fixed-horizon
/// decay assertions are not starved by a slow-mixing draw.
pub fn random_mixing_topology<T: Scalar, R: Rng>(
    rng: &mut R,
    p: usize,
    arc_prob: f64,
    slem_max: f64,
) -> Topology<T> {
    loop {
        let topology = random_connected_topology::<T, R>(rng, p, arc_prob);
        // A draw mixing too slowly for the stationary cross-check is exactly
        // what this filter rejects.
        match topology.decay_constants(0) {
            Ok((_, slem)) if crate::scalar::to_f64(slem) <= slem_max => return topology,
            _ => continue,
        }
    }
}

/// An orthogonal matrix whose eigenvalue angles are pairwise separated,
/// hidden under an orthogonal change of basis.
pub fn random_spread_rotation<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> DMatrix<T> {
    let block = random_unit_orthogonal_block::<T, R>(rng, n);
    let basis = random_orthogonal::<T, R>(rng, n);
    &basis * block * basis.transpose()
}

/// Coupling pair for fixed-horizon decay assertions: the rotation has
/// pairwise separated eigenvalue angles (no near-resonant planes that a
/// single output would take arbitrarily long to tell apart) and the
/// complement-product contraction constant is at most `alpha_max`.
///
/// Observability alone guarantees contraction at no uniform rate, so suites
/// that assert a fixed decay after a fixed horizon draw from this margined
/// distribution instead of [`random_coupling_pair`].
pub fn random_contracting_pair<T: Scalar, R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
    alpha_max: f64,
) -> (DMatrix<T>, DMatrix<T>) {
    loop {
        let q = random_spread_rotation::<T, R>(rng, n);
        let h = loop {
            let tall = random_matrix::<T, R>(rng, n, m);
            let qr = tall.qr();
            if (0..m).all(|i| qr.r()[(i, i)].abs() >= from_f64(1e-3)) {
                break qr.q().transpose();
            }
        };
        let alpha = crate::verify::projection_product_norm(&q, &h, n);
        if crate::scalar::to_f64(alpha) <= alpha_max {
            return (q, h);
        }
    }
}

/// A matrix with all eigenvalues on the unit circle forming a single
/// invariant block (one plane rotation or one `±1`), hidden under a random
/// similarity. The invariant quadratic form for such a block is unique up to
/// scale, which makes cross-validation against a null-space solve
/// well-posed.
pub fn random_unit_spectrum_block<T: Scalar, R: Rng>(rng: &mut R) -> DMatrix<T> {
    if rng.gen_bool(0.2) {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        DMatrix::from_row_slice(1, 1, &[from_f64(sign)])
    } else {
        let theta = draw_angles(rng, 1)[0];
        let (s, s_inv, _) = random_similarity::<T, R>(rng, 2);
        &s * rotation(from_f64::<T>(theta)) * &s_inv
    }
}
