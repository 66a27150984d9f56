//! Brute-force oracles for the projector-product algebra behind the
//! synchronization proof: the contraction norm of the rotated-complement
//! product, the family of chain sums over projector/complement choices, the
//! partition identities they satisfy, and the limit of the network
//! transition product.
//!
//! The recurrence construction is the production path; exhaustive
//! enumeration is the independent oracle, capped at a desk-scale length.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{kron, spectral_norm, OrthoProjector};
use crate::scalar::{from_f64, to_f64, Scalar};
use crate::sysmodel::{check_coupling_pair, DEFAULT_ORTHOGONALITY_TOL};
use crate::topology::Topology;

/// Exhaustive enumeration is limited to `2^14` products.
pub const ENUMERATION_BOUND: usize = 14;
/// Tolerance on the partition identities.
pub const PARTITION_TOL: f64 = 1e-10;
/// Slack allowed above 1 for the chain-sum norms.
pub const NORM_SLACK: f64 = 1e-12;

/// The projectors `P_i = Q^{iT} Hᵀ H Q^i` onto the rotated measurement
/// subspaces, with their complements `V_i = I − P_i`, for `i < len`.
#[derive(Clone, Debug)]
pub struct ProjectionSequence<T: Scalar = f64> {
    pub projectors: Vec<OrthoProjector<T>>,
    pub complements: Vec<OrthoProjector<T>>,
}

/// Build and validate the projection sequence. Every element must pass the
/// orthogonal-projector invariants, and each projector must annihilate its
/// complement.
pub fn projection_sequence<T: Scalar>(
    q: &DMatrix<T>,
    h: &DMatrix<T>,
    len: usize,
) -> Result<ProjectionSequence<T>> {
    let (raw_p, raw_v) = raw_projection_matrices(q, h, len);
    let mut projectors = Vec::with_capacity(len);
    let mut complements = Vec::with_capacity(len);
    let cross_tol = from_f64::<T>(1e-12);
    for (p, v) in raw_p.into_iter().zip(raw_v) {
        let cross = spectral_norm(&(&p * &v));
        if cross > cross_tol {
            return Err(Error::Numerical(format!(
                "projector and complement do not annihilate: {:e}",
                to_f64(cross)
            )));
        }
        projectors.push(OrthoProjector::new(p)?);
        complements.push(OrthoProjector::new(v)?);
    }
    Ok(ProjectionSequence {
        projectors,
        complements,
    })
}

/// Unvalidated projector/complement matrices, built incrementally from
/// `H Q^i`.
fn raw_projection_matrices<T: Scalar>(
    q: &DMatrix<T>,
    h: &DMatrix<T>,
    len: usize,
) -> (Vec<DMatrix<T>>, Vec<DMatrix<T>>) {
    let n = q.nrows();
    let identity = DMatrix::identity(n, n);
    let mut rotated = h.clone();
    let mut projectors = Vec::with_capacity(len);
    let mut complements = Vec::with_capacity(len);
    for _ in 0..len {
        let p = rotated.transpose() * &rotated;
        complements.push(&identity - &p);
        projectors.push(p);
        rotated = &rotated * q;
    }
    (projectors, complements)
}

/// Norm of the product of the first `len` complements,
/// `‖V_{len−1} ··· V_0‖`. No preconditions; a value of 1 signals an
/// unobservable direction surviving every complement.
pub fn projection_product_norm<T: Scalar>(q: &DMatrix<T>, h: &DMatrix<T>, len: usize) -> T {
    let (_, complements) = raw_projection_matrices(q, h, len);
    let n = q.nrows();
    let mut product = DMatrix::identity(n, n);
    for v in &complements {
        product = v * product;
    }
    spectral_norm(&product)
}

/// The contraction constant `α = ‖V_{n−1} ··· V_0‖` of an orthogonal
/// coupling pair, guaranteed below 1 by observability.
///
/// Errors when the pair fails any of the orthogonality/observability
/// conditions; use [`projection_product_norm`] to evaluate the raw product
/// norm of a failing pair (the unobservable negative control yields exactly
/// 1).
pub fn lemma2_alpha<T: Scalar>(q: &DMatrix<T>, h: &DMatrix<T>) -> Result<T> {
    let report = check_coupling_pair(q, h, from_f64(DEFAULT_ORTHOGONALITY_TOL))?;
    if !report.pass() {
        return Err(Error::AssumptionViolated(format!(
            "coupling pair conditions failed: orthogonal={} rows_orthonormal={} observable={}",
            report.orthogonal, report.rows_orthonormal, report.observable
        )));
    }
    Ok(projection_product_norm(q, h, q.nrows()))
}

/// All chain sums of length `len` by the recurrence: entry `picks` sums the
/// products `L_{len−1} ··· L_0` over all choices with exactly `picks`
/// projectors (the rest complements). This is the production path; the
/// enumeration below is its oracle.
pub fn chain_sums<T: Scalar>(q: &DMatrix<T>, h: &DMatrix<T>, len: usize) -> Vec<DMatrix<T>> {
    let n = q.nrows();
    let (projectors, complements) = raw_projection_matrices(q, h, len);
    let mut family = vec![DMatrix::identity(n, n)];
    for k in 0..len {
        let p = &projectors[k];
        let v = &complements[k];
        let mut next = Vec::with_capacity(family.len() + 1);
        next.push(v * &family[0]);
        for l in 1..=k {
            next.push(v * &family[l] + p * &family[l - 1]);
        }
        next.push(p * &family[k]);
        family = next;
    }
    family
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u64 = 1;
    for i in 0..k {
        out = out * (n - i) as u64 / (i + 1) as u64;
    }
    out
}

/// Sum of all ordered products `L_{len−1} ··· L_0` with exactly `picks`
/// projector factors, by exhaustive enumeration over the `2^len` choices.
///
/// The number of summed products is cross-checked against the binomial
/// coefficient. Lengths beyond [`ENUMERATION_BOUND`] are refused.
pub fn enumerate_chain_sum<T: Scalar>(
    q: &DMatrix<T>,
    h: &DMatrix<T>,
    picks: usize,
    len: usize,
) -> Result<DMatrix<T>> {
    if len > ENUMERATION_BOUND {
        return Err(Error::TooLarge {
            len,
            max: ENUMERATION_BOUND,
        });
    }
    if picks > len {
        return Err(Error::Dimension(format!(
            "cannot pick {picks} projectors out of {len} factors"
        )));
    }
    let n = q.nrows();
    let (projectors, complements) = raw_projection_matrices(q, h, len);
    let mut sum = DMatrix::zeros(n, n);
    let mut count: u64 = 0;
    for mask in 0u32..(1u32 << len) {
        if mask.count_ones() as usize != picks {
            continue;
        }
        count += 1;
        let mut product = DMatrix::identity(n, n);
        for i in 0..len {
            let factor = if mask >> i & 1 == 1 {
                &projectors[i]
            } else {
                &complements[i]
            };
            product = factor * product;
        }
        sum += product;
    }
    let expected = binomial(len, picks);
    if count != expected {
        return Err(Error::Numerical(format!(
            "enumerated {count} products, expected {expected}"
        )));
    }
    Ok(sum)
}

/// Verdicts for the three partition identities of the chain-sum family.
#[derive(Clone, Debug)]
pub struct PartitionReport {
    pub len: usize,
    /// `‖Σ_picks M − I‖`.
    pub sum_defect: f64,
    /// `max_picks ‖M‖`.
    pub max_product_norm: f64,
    /// Worst deviation of `Σ_picks ‖M v‖²` from 1 over random unit vectors.
    pub worst_unit_vector_defect: f64,
    pub sum_identity_ok: bool,
    pub norms_bounded: bool,
    pub unit_vectors_ok: bool,
}

impl PartitionReport {
    pub fn pass(&self) -> bool {
        self.sum_identity_ok && self.norms_bounded && self.unit_vectors_ok
    }
}

/// Check the partition identities on the chain-sum family of length `len`:
/// the sums telescope to the identity, every sum has norm at most 1, and the
/// squared image norms of any unit vector add to 1 (checked on 20 seeded
/// random directions).
pub fn check_partition_identities<T: Scalar>(
    q: &DMatrix<T>,
    h: &DMatrix<T>,
    len: usize,
    seed: u64,
) -> PartitionReport {
    let n = q.nrows();
    let family = chain_sums(q, h, len);

    let total = family.iter().fold(DMatrix::zeros(n, n), |acc, m| acc + m);
    let sum_defect = to_f64(spectral_norm(&(total - DMatrix::identity(n, n))));

    let max_product_norm = family
        .iter()
        .map(|m| to_f64(spectral_norm(m)))
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_unit_vector_defect = 0.0f64;
    for _ in 0..20 {
        let mut v: DVector<T> = DVector::from_fn(n, |_, _| from_f64(rng.gen_range(-1.0..1.0)));
        let norm = v.norm();
        if norm <= T::default_epsilon() {
            continue;
        }
        v /= norm;
        let mut total = T::zero();
        for m in &family {
            let image = m * &v;
            total += image.dot(&image);
        }
        worst_unit_vector_defect = worst_unit_vector_defect.max((to_f64(total) - 1.0).abs());
    }

    PartitionReport {
        len,
        sum_defect,
        max_product_norm,
        worst_unit_vector_defect,
        sum_identity_ok: sum_defect <= PARTITION_TOL,
        norms_bounded: max_product_norm <= 1.0 + NORM_SLACK,
        unit_vectors_ok: worst_unit_vector_defect <= PARTITION_TOL,
    }
}

/// Deviation of the network transition product from its rank-one limit.
#[derive(Clone, Debug)]
pub struct TransitionLimitReport {
    pub k_max: usize,
    /// `‖Φ(k, 0) − 1rᵀ ⊗ I‖` at selected steps (powers of two and the end).
    pub deviations: Vec<(usize, f64)>,
    pub final_deviation: f64,
}

impl TransitionLimitReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.final_deviation <= tol
    }
}

/// Iterate the stacked transition product
/// `Φ(k, 0) = Π_{τ<k} (I_p ⊗ V_τ + Λ ⊗ P_τ)` and measure its distance to
/// the rank-one limit `1rᵀ ⊗ I`.
pub fn check_transition_limit<T: Scalar>(
    q: &DMatrix<T>,
    h: &DMatrix<T>,
    topo: &Topology<T>,
    k_max: usize,
) -> Result<TransitionLimitReport> {
    let n = q.nrows();
    let p = topo.agents();
    let r = topo.stationary_vector()?;
    let ones = DMatrix::from_element(p, 1, T::one());
    let r_row = DMatrix::from_fn(1, p, |_, j| r[j]);
    let limit = kron(&(&ones * r_row), &DMatrix::identity(n, n));

    let identity_p = DMatrix::identity(p, p);
    let mut phi = DMatrix::identity(p * n, p * n);
    let mut rotated = h.clone();
    let mut deviations = Vec::new();
    for k in 0..=k_max {
        if k.is_power_of_two() || k == k_max || k == 0 {
            let dev = to_f64(spectral_norm(&(&phi - &limit)));
            deviations.push((k, dev));
        }
        if k < k_max {
            let proj = rotated.transpose() * &rotated;
            let comp = DMatrix::identity(n, n) - &proj;
            let factor = kron(&identity_p, &comp) + kron(topo.matrix(), &proj);
            phi = factor * phi;
            rotated = &rotated * q;
        }
    }
    let final_deviation = deviations.last().expect("at least one sample").1;
    Ok(TransitionLimitReport {
        k_max,
        deviations,
        final_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rotation;
    use approx::assert_relative_eq;

    fn position_pair() -> (DMatrix<f64>, DMatrix<f64>) {
        (rotation(1.0), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))
    }

    #[test]
    fn observable_pair_contracts() {
        let (q, h) = position_pair();
        let alpha = lemma2_alpha(&q, &h).unwrap();
        assert!(alpha < 1.0, "alpha = {alpha}");
        assert!(alpha > 0.0);
    }

    #[test]
    fn unobservable_pair_does_not_contract() {
        let q = DMatrix::identity(2, 2);
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            lemma2_alpha(&q, &h),
            Err(Error::AssumptionViolated(_))
        ));
        let norm = projection_product_norm(&q, &h, 2);
        assert_relative_eq!(norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn full_measurement_contracts_in_one_shot() {
        let q = rotation(0.4);
        let h = DMatrix::identity(2, 2);
        let alpha = lemma2_alpha(&q, &h).unwrap();
        assert!(alpha <= 1e-14);
    }

    #[test]
    fn alpha_is_the_zero_pick_chain_norm() {
        let (q, h) = position_pair();
        let alpha = lemma2_alpha(&q, &h).unwrap();
        let family = chain_sums(&q, &h, 2);
        assert_relative_eq!(alpha, spectral_norm(&family[0]), epsilon = 1e-15);
    }

    #[test]
    fn projection_sequence_is_valid() {
        let (q, h) = position_pair();
        let seq = projection_sequence(&q, &h, 6).unwrap();
        assert_eq!(seq.projectors.len(), 6);
        assert_eq!(seq.complements.len(), 6);
    }

    #[test]
    fn zero_picks_is_the_complement_product() {
        let (q, h) = position_pair();
        let enumerated = enumerate_chain_sum(&q, &h, 0, 4).unwrap();
        let (_, complements) = raw_projection_matrices(&q, &h, 4);
        let mut product = DMatrix::identity(2, 2);
        for v in &complements {
            product = v * product;
        }
        assert_relative_eq!(enumerated, product, epsilon = 1e-14);
    }

    #[test]
    fn all_picks_is_the_projector_product() {
        let (q, h) = position_pair();
        let enumerated = enumerate_chain_sum(&q, &h, 2, 2).unwrap();
        let (projectors, _) = raw_projection_matrices(&q, &h, 2);
        let expected = &projectors[1] * &projectors[0];
        assert_relative_eq!(enumerated, expected, epsilon = 1e-14);
    }

    #[test]
    fn two_picks_of_four_matches_the_explicit_six_products() {
        let (q, h) = position_pair();
        let (p, v) = raw_projection_matrices(&q, &h, 4);
        let explicit = &v[3] * &v[2] * &p[1] * &p[0]
            + &v[3] * &p[2] * &v[1] * &p[0]
            + &p[3] * &v[2] * &v[1] * &p[0]
            + &v[3] * &p[2] * &p[1] * &v[0]
            + &p[3] * &v[2] * &p[1] * &v[0]
            + &p[3] * &p[2] * &v[1] * &v[0];
        let enumerated = enumerate_chain_sum(&q, &h, 2, 4).unwrap();
        assert_relative_eq!(enumerated, explicit, epsilon = 1e-13);
    }

    #[test]
    fn enumeration_refuses_oversized_requests() {
        let (q, h) = position_pair();
        assert!(matches!(
            enumerate_chain_sum(&q, &h, 1, 15),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn length_one_sums_are_complementary_projectors() {
        let (q, h) = position_pair();
        let family = chain_sums(&q, &h, 1);
        let total = &family[0] + &family[1];
        assert_relative_eq!(total, DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn recurrence_matches_enumeration() {
        let (q, h) = position_pair();
        for len in 1..=6 {
            let family = chain_sums(&q, &h, len);
            for picks in 0..=len {
                let enumerated = enumerate_chain_sum(&q, &h, picks, len).unwrap();
                let defect = spectral_norm(&(&family[picks] - enumerated));
                assert!(defect <= 1e-12, "len {len} picks {picks}: {defect}");
            }
        }
    }

    #[test]
    fn partition_identities_hold_for_the_position_pair() {
        let (q, h) = position_pair();
        for len in [1usize, 4, 8] {
            let report = check_partition_identities(&q, &h, len, 42);
            assert!(report.pass(), "len {len}: {report:?}");
        }
    }

    #[test]
    fn single_agent_transition_is_identity() {
        let (q, h) = position_pair();
        let topo = Topology::new(DMatrix::from_row_slice(1, 1, &[1.0])).unwrap();
        let report = check_transition_limit(&q, &h, &topo, 16).unwrap();
        assert!(report.final_deviation <= 1e-13);
    }

    #[test]
    fn full_measurement_transition_is_the_topology_power() {
        let q = rotation(0.9);
        let h = DMatrix::identity(2, 2);
        let lambda = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5]);
        let topo = Topology::new(lambda.clone()).unwrap();
        // With every projector equal to the identity the product collapses
        // to powers of the coupling matrix.
        let k = 12;
        let report = check_transition_limit(&q, &h, &topo, k).unwrap();
        let power = crate::topology::matrix_power(&lambda, k as u32);
        let r = topo.stationary_vector().unwrap();
        let ones = DMatrix::from_element(3, 1, 1.0);
        let r_row = DMatrix::from_fn(1, 3, |_, j| r[j]);
        let expected = spectral_norm(&(power - ones * r_row));
        assert_relative_eq!(report.final_deviation, expected, epsilon = 1e-12);
    }

    #[test]
    fn ring_transition_settles() {
        let (q, h) = position_pair();
        let lambda = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5]);
        let topo = Topology::new(lambda).unwrap();
        let report = check_transition_limit(&q, &h, &topo, 1000).unwrap();
        assert!(report.pass(1e-6), "final {}", report.final_deviation);
        // Roughly monotone decay across the sampled checkpoints.
        let devs = &report.deviations;
        assert!(devs.last().unwrap().1 <= devs[1].1);
    }
}
