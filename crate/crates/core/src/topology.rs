//! Row-stochastic coupling topologies: the discrete-time connectedness
//! conditions, the stationary left vector `r` with `rᵀΛ = rᵀ`, and empirical
//! geometric-decay constants for `‖Λᵏ − 1rᵀ‖`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{all_finite, spectral_norm};
use crate::scalar::{from_f64, to_f64, Scalar};

/// Row sums must match 1 within this absolute tolerance.
pub const DEFAULT_ROW_SUM_TOL: f64 = 1e-12;
/// Stationary-vector entries below this are clipped to zero; anything more
/// negative is a failure.
pub const STATIONARY_CLIP: f64 = 1e-12;
/// Power used to cross-validate the stationary vector against `Λᵏ` rows.
pub const STATIONARY_CROSS_CHECK_POWER: u32 = 512;
/// Agreement required between the null-space and matrix-power methods.
pub const STATIONARY_CROSS_CHECK_TOL: f64 = 1e-8;
/// Residual allowed on the fixed-point identity `rᵀΛ = rᵀ`.
pub const STATIONARY_FIXED_POINT_TOL: f64 = 1e-10;

/// Per-condition verdicts for the connectedness definition.
#[derive(Clone, Debug)]
pub struct ConnectivityReport {
    /// Condition: strictly positive diagonal entries.
    pub positive_diagonal: bool,
    pub offending_diagonal: Vec<usize>,
    /// Condition: no negative entries anywhere.
    pub nonnegative: bool,
    pub offending_entries: Vec<(usize, usize)>,
    /// Condition: each row sums to one.
    pub row_stochastic: bool,
    pub offending_rows: Vec<(usize, f64)>,
    /// Condition: some node is reachable by a directed path from every other.
    pub connected: bool,
    /// A witness node reachable from every other node, when one exists.
    pub sink: Option<usize>,
}

impl ConnectivityReport {
    pub fn pass(&self) -> bool {
        self.positive_diagonal && self.nonnegative && self.row_stochastic && self.connected
    }

    /// Human-readable list of the violated conditions.
    pub fn violations(&self) -> String {
        let mut out = Vec::new();
        if !self.positive_diagonal {
            out.push(format!(
                "non-positive diagonal at {:?}",
                self.offending_diagonal
            ));
        }
        if !self.nonnegative {
            out.push(format!("negative entries at {:?}", self.offending_entries));
        }
        if !self.row_stochastic {
            out.push(format!(
                "row sums differ from 1 at {:?}",
                self.offending_rows
            ));
        }
        if !self.connected {
            out.push("graph has no node reachable from every other node".into());
        }
        out.join("; ")
    }
}

/// Check the three connectedness conditions on a square coupling matrix.
///
/// The graph has an arc `i -> j` exactly when the `(i, j)` entry is strictly
/// positive; connectivity asks for a node to which a directed path exists
/// from every other node, found here by breadth-first search over reversed
/// arcs from each candidate.
pub fn validate_connected<T: Scalar>(lambda: &DMatrix<T>) -> Result<ConnectivityReport> {
    if !lambda.is_square() || lambda.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "coupling matrix must be square and nonempty, got {}x{}",
            lambda.nrows(),
            lambda.ncols()
        )));
    }
    if !all_finite(lambda) {
        return Err(Error::NonFinite("coupling matrix".into()));
    }
    let p = lambda.nrows();

    let offending_diagonal: Vec<usize> = (0..p).filter(|&i| lambda[(i, i)] <= T::zero()).collect();
    let mut offending_entries = Vec::new();
    for i in 0..p {
        for j in 0..p {
            if lambda[(i, j)] < T::zero() {
                offending_entries.push((i, j));
            }
        }
    }
    let row_tol = from_f64::<T>(DEFAULT_ROW_SUM_TOL);
    let mut offending_rows = Vec::new();
    for i in 0..p {
        let sum = lambda.row(i).iter().fold(T::zero(), |acc, &x| acc + x);
        if (sum - T::one()).abs() > row_tol {
            offending_rows.push((i, to_f64(sum)));
        }
    }

    // Incoming-arc adjacency: incoming[j] lists i with an arc i -> j.
    let mut incoming = vec![Vec::new(); p];
    for i in 0..p {
        for j in 0..p {
            if i != j && lambda[(i, j)] > T::zero() {
                incoming[j].push(i);
            }
        }
    }
    let reaches_all = |sink: usize| -> bool {
        let mut seen = vec![false; p];
        let mut queue = vec![sink];
        seen[sink] = true;
        while let Some(node) = queue.pop() {
            for &prev in &incoming[node] {
                if !seen[prev] {
                    seen[prev] = true;
                    queue.push(prev);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    let sink = (0..p).find(|&v| reaches_all(v));

    Ok(ConnectivityReport {
        positive_diagonal: offending_diagonal.is_empty(),
        offending_diagonal,
        nonnegative: offending_entries.is_empty(),
        offending_entries,
        row_stochastic: offending_rows.is_empty(),
        offending_rows,
        connected: sink.is_some(),
        sink,
    })
}

/// A validated coupling topology. The stationary vector is computed once on
/// first use and shared across threads.
#[derive(Clone, Debug)]
pub struct Topology<T: Scalar = f64> {
    matrix: DMatrix<T>,
    connected: bool,
    stationary: OnceLock<Result<DVector<T>>>,
}

impl<T: Scalar> Topology<T> {
    /// Validate all connectedness conditions and build the topology.
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        let report = validate_connected(&matrix)?;
        if !report.pass() {
            return Err(Error::AssumptionViolated(format!(
                "coupling matrix is not connected: {}",
                report.violations()
            )));
        }
        Ok(Self {
            matrix,
            connected: true,
            stationary: OnceLock::new(),
        })
    }

    /// Build a topology whose graph may be disconnected, for negative-control
    /// simulations. Diffusive-coupling conditions (nonnegativity, positive
    /// diagonal, unit row sums) are still enforced.
    pub fn new_allow_disconnected(matrix: DMatrix<T>) -> Result<Self> {
        let report = validate_connected(&matrix)?;
        if !report.positive_diagonal || !report.nonnegative || !report.row_stochastic {
            return Err(Error::AssumptionViolated(format!(
                "coupling matrix is not diffusive: {}",
                report.violations()
            )));
        }
        Ok(Self {
            matrix,
            connected: report.connected,
            stationary: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    /// Number of coupled agents.
    pub fn agents(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn connected(&self) -> bool {
        self.connected
    }

    /// Column sums also equal one (within the row-sum tolerance).
    pub fn is_doubly_stochastic(&self) -> bool {
        let tol = from_f64::<T>(DEFAULT_ROW_SUM_TOL);
        (0..self.agents()).all(|j| {
            let sum = self.matrix.column(j).iter().fold(T::zero(), |a, &x| a + x);
            (sum - T::one()).abs() <= tol
        })
    }

    /// The nonnegative left fixed vector `r` with `rᵀΛ = rᵀ` and entries
    /// summing to one.
    ///
    /// Computed from the null space of `Λᵀ − I` and cross-validated against
    /// the rows of a large matrix power; the two methods must agree within
    /// [`STATIONARY_CROSS_CHECK_TOL`].
    pub fn stationary_vector(&self) -> Result<&DVector<T>> {
        self.stationary
            .get_or_init(|| self.compute_stationary())
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn compute_stationary(&self) -> Result<DVector<T>> {
        if !self.connected {
            return Err(Error::ConvergenceFailure(
                "stationary vector undefined for a disconnected topology".into(),
            ));
        }
        let p = self.agents();
        let shifted = self.matrix.transpose() - DMatrix::identity(p, p);
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
        let (mut min_idx, mut min_sigma) = (0, svd.singular_values[0]);
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s < min_sigma {
                min_sigma = s;
                min_idx = i;
            }
        }
        let mut r = v_t.row(min_idx).transpose().into_owned();
        let sum = r.iter().fold(T::zero(), |a, &x| a + x);
        if sum < T::zero() {
            r.neg_mut();
        } else if sum == T::zero() {
            return Err(Error::ConvergenceFailure(
                "null-space vector has zero entry sum".into(),
            ));
        }
        // Tolerances are floored at a multiple of the working precision so
        // the same contract holds for narrower scalars.
        let precision_floor = T::default_epsilon() * from_f64::<T>(100.0);
        let clip = from_f64::<T>(STATIONARY_CLIP).max(precision_floor);
        for x in r.iter_mut() {
            if *x < -clip {
                return Err(Error::ConvergenceFailure(format!(
                    "stationary vector has a negative entry {:e}",
                    to_f64(*x)
                )));
            }
            if *x < T::zero() {
                *x = T::zero();
            }
        }
        let total = r.iter().fold(T::zero(), |a, &x| a + x);
        r /= total;

        let residual = spectral_norm(&DMatrix::from_rows(&[(r.transpose() * &self.matrix
            - r.transpose())
        .row(0)
        .into_owned()]));
        if residual > from_f64::<T>(STATIONARY_FIXED_POINT_TOL).max(precision_floor) {
            return Err(Error::ConvergenceFailure(format!(
                "fixed-point residual {:e} too large",
                to_f64(residual)
            )));
        }

        // Cross-validation: every row of a large power must approach rᵀ.
        let pk = matrix_power(&self.matrix, STATIONARY_CROSS_CHECK_POWER);
        let tol = from_f64::<T>(STATIONARY_CROSS_CHECK_TOL).max(precision_floor);
        for i in 0..p {
            for j in 0..p {
                let dev = (pk[(i, j)] - r[j]).abs();
                if dev > tol {
                    return Err(Error::ConvergenceFailure(format!(
                        "matrix-power cross-check deviates by {:e} at row {}, column {}",
                        to_f64(dev),
                        i,
                        j
                    )));
                }
            }
        }
        Ok(r)
    }

    /// Empirical constants `(c, sigma)` with `‖Λᵏ − 1rᵀ‖ ≤ c·sigmaᵏ` for all
    /// `k` up to `horizon`: `sigma` is the second-largest eigenvalue modulus
    /// (plus a small slack), `c` the observed worst ratio, floored at one.
    pub fn decay_constants(&self, horizon: usize) -> Result<(T, T)> {
        let r = self.stationary_vector()?.clone();
        let p = self.agents();
        let eigs = self.matrix.complex_eigenvalues();
        let mut moduli: Vec<f64> = eigs
            .iter()
            .map(|l| (to_f64(l.re).powi(2) + to_f64(l.im).powi(2)).sqrt())
            .collect();
        moduli.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let slem = if p >= 2 { moduli[1] } else { 0.0 };
        let sigma = from_f64::<T>(slem + 1e-12);

        let limit = DVector::from_element(p, T::one()) * r.transpose();
        // Deviations at the rounding floor are indistinguishable from zero
        // and would blow up the ratio once sigma^k underflows past them.
        let noise_floor = from_f64::<T>(50.0 * p as f64) * T::default_epsilon();
        let mut c = T::one();
        let mut power = DMatrix::identity(p, p);
        let mut sigma_k = T::one();
        for _ in 0..=horizon {
            let dev = spectral_norm(&(&power - &limit));
            if dev > noise_floor && sigma_k > T::zero() {
                c = c.max(dev / sigma_k);
            }
            power *= &self.matrix;
            sigma_k *= sigma;
        }
        Ok((c, sigma))
    }
}

/// `base` raised to `exp` by repeated squaring.
pub fn matrix_power<T: Scalar>(base: &DMatrix<T>, exp: u32) -> DMatrix<T> {
    let n = base.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut square = base.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            result *= &square;
        }
        square = &square * &square;
        e >>= 1;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5])
    }

    #[test]
    fn identity_topology_is_disconnected() {
        let report = validate_connected(&DMatrix::<f64>::identity(2, 2)).unwrap();
        assert!(report.positive_diagonal && report.nonnegative && report.row_stochastic);
        assert!(!report.connected);
        assert!(!report.pass());
    }

    #[test]
    fn complete_mixing_is_connected() {
        let lambda = DMatrix::from_element(2, 2, 0.5);
        assert!(validate_connected(&lambda).unwrap().pass());
    }

    #[test]
    fn directed_ring_is_connected() {
        assert!(validate_connected(&ring3()).unwrap().pass());
    }

    #[test]
    fn stationary_of_doubly_stochastic_is_uniform() {
        let topo = Topology::new(DMatrix::from_element(4, 4, 0.25)).unwrap();
        let r = topo.stationary_vector().unwrap();
        for &x in r.iter() {
            assert_relative_eq!(x, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn stationary_concentrates_on_absorbing_node() {
        let lambda = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let topo = Topology::new(lambda).unwrap();
        let r: &DVector<f64> = topo.stationary_vector().unwrap();
        assert_relative_eq!(r[0], 1.0, epsilon = 1e-9);
        assert!(r[1].abs() <= 1e-9);
    }

    #[test]
    fn stationary_of_ring_is_uniform() {
        let topo = Topology::new(ring3()).unwrap();
        let r = topo.stationary_vector().unwrap();
        for &x in r.iter() {
            assert_relative_eq!(x, 1.0 / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn decay_constants_for_rank_one_mixing() {
        let p = 3;
        let topo = Topology::new(DMatrix::from_element(p, p, 1.0 / p as f64)).unwrap();
        let (c, sigma) = topo.decay_constants(50).unwrap();
        assert!(sigma < 1e-6, "rank-one mixing has near-zero decay rate");
        // One step lands exactly on the limit, so the worst ratio is k = 0.
        assert_relative_eq!(c, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn decay_rate_of_ring_is_half() {
        let topo = Topology::new(ring3()).unwrap();
        let (_, sigma) = topo.decay_constants(100).unwrap();
        assert_relative_eq!(sigma, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn decay_bound_holds_over_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let p = 6;
        // Dense positive rows are connected by construction.
        let mut lambda = DMatrix::from_fn(p, p, |_, _| rng.gen_range(0.05..1.0));
        for i in 0..p {
            let sum: f64 = lambda.row(i).iter().sum();
            for j in 0..p {
                lambda[(i, j)] /= sum;
            }
        }
        let topo = Topology::new_allow_disconnected(lambda).unwrap();
        assert!(topo.connected());
        let horizon = 200;
        let (c, sigma) = topo.decay_constants(horizon).unwrap();
        let r = topo.stationary_vector().unwrap().clone();
        let limit = DVector::from_element(p, 1.0) * r.transpose();
        let mut power = DMatrix::identity(p, p);
        let mut bound = c;
        for _ in 0..=horizon {
            let dev = spectral_norm(&(&power - &limit));
            assert!(dev <= bound * (1.0 + 1e-9) + 1e-12);
            power *= topo.matrix();
            bound *= sigma;
        }
    }

    #[test]
    fn long_powers_settle_to_stationary() {
        for lambda in [ring3(), DMatrix::from_element(3, 3, 1.0 / 3.0)] {
            let topo = Topology::new(lambda).unwrap();
            let r = topo.stationary_vector().unwrap().clone();
            let limit = DVector::from_element(3, 1.0) * r.transpose();
            let p200 = matrix_power(topo.matrix(), 200);
            assert!(spectral_norm(&(p200 - limit)) <= 1e-6);
            let residual = (r.transpose() * topo.matrix() - r.transpose()).norm();
            assert!(residual <= 1e-10);
        }
    }

    /// Exhaustive comparison against a transitive-closure oracle on every
    /// digraph with up to 4 nodes (self-loops always present, uniform
    /// weights).
    #[test]
    fn connectivity_matches_transitive_closure_oracle() {
        for p in 1..=4usize {
            let arcs: Vec<(usize, usize)> = (0..p)
                .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
                .collect();
            for mask in 0..(1u32 << arcs.len()) {
                let mut adjacency = vec![vec![false; p]; p];
                for (i, row) in adjacency.iter_mut().enumerate() {
                    row[i] = true;
                }
                for (bit, &(i, j)) in arcs.iter().enumerate() {
                    if mask >> bit & 1 == 1 {
                        adjacency[i][j] = true;
                    }
                }
                let mut lambda = DMatrix::zeros(p, p);
                for i in 0..p {
                    let degree = adjacency[i].iter().filter(|&&a| a).count() as f64;
                    for j in 0..p {
                        if adjacency[i][j] {
                            lambda[(i, j)] = 1.0 / degree;
                        }
                    }
                }
                // Floyd-Warshall closure.
                let mut closure = adjacency.clone();
                for k in 0..p {
                    for i in 0..p {
                        for j in 0..p {
                            closure[i][j] |= closure[i][k] && closure[k][j];
                        }
                    }
                }
                let oracle = (0..p).any(|j| (0..p).all(|i| closure[i][j]));
                let report = validate_connected(&lambda).unwrap();
                assert_eq!(report.connected, oracle, "mask {mask} p {p}");
            }
        }
    }
}
