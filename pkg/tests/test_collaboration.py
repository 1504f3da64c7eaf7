import numpy as np
import pytest

from collabsgd.collaboration import (
    Criterion,
    NoAdmissibleCollaborator,
    compute_weights,
    estimate_ratios,
    exact_ratios,
    similarity_ratio,
    step_size_ratio_bounds,
)
from collabsgd.objectives import QuadraticObjective, make_population
from collabsgd.streams import RngStream


def random_instance(rng, n_max=50):
    """Random (ratios, sigmas, criterion) with the focal ratio pinned to 1."""
    n = int(rng.integers(1, n_max + 1))
    ratios = rng.uniform(0.0, 1.0, n)
    focal = int(rng.integers(n))
    ratios[focal] = 1.0
    sigmas = np.exp(rng.uniform(-2.0, 2.0, n))
    if rng.random() < 0.5:
        crit = Criterion(kind="binary", lam=float(rng.uniform(0.05, 1.0)))
    else:
        crit = Criterion(kind="continuous")
    return ratios, sigmas, crit, focal


class TestCriterion:
    def test_binary_thresholding(self):
        crit = Criterion(kind="binary", lam=0.4)
        assert np.allclose(crit.phi([0.0, 0.39, 0.4, 1.0]), [0.0, 0.0, 0.4, 0.4])
        assert np.allclose(crit.psi([0.5]), [0.2])

    def test_continuous_is_identity(self):
        crit = Criterion(kind="continuous")
        x = np.linspace(0, 1, 5)
        assert (crit.phi(x) == x).all()
        assert np.allclose(crit.psi(x), x**2)

    def test_contract_phi_below_identity_nondecreasing(self):
        x = np.linspace(0, 1, 101)
        for crit in (Criterion("binary", 0.3), Criterion("continuous")):
            y = crit.phi(x)
            assert (y <= x + 1e-12).all()
            assert (np.diff(y) >= -1e-12).all()
            assert crit.phi(0.0) == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            Criterion(kind="quadratic")
        with pytest.raises(ValueError):
            Criterion(kind="binary", lam=0.0)


class TestSimilarityRatio:
    def test_identical_gradients(self):
        g = np.array([1.0, -2.0])
        assert similarity_ratio(g, g) == 1.0

    def test_hand_values(self):
        assert similarity_ratio(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == 0.0
        assert similarity_ratio(np.array([2.0, 0.0]), np.array([2.0, 1.0])) == 0.75

    def test_clipping(self):
        # opposite gradients: 1 - 4 = -3, clipped to 0
        g = np.array([1.0, 1.0])
        assert similarity_ratio(g, -g) == 0.0

    def test_zero_gradient_conventions(self):
        z = np.zeros(2)
        assert similarity_ratio(z, z) == 1.0
        assert similarity_ratio(z, np.array([1.0, 0.0])) == 0.0

    def test_exact_ratios_matches_pairwise(self):
        rng = np.random.default_rng(0)
        grads = rng.standard_normal((6, 3))
        r = exact_ratios(grads, focal=2)
        expected = [similarity_ratio(grads[2], g) for g in grads]
        assert np.allclose(r, expected)
        assert r[2] == 1.0


class TestComputeWeights:
    def test_single_client(self):
        st = compute_weights(np.array([1.0]), np.array([1.0]),
                             Criterion("continuous"))
        assert np.allclose(st.alpha, [1.0])
        assert st.sigma_eff_sq == 1.0

    def test_symmetric_pair(self):
        st = compute_weights(np.array([1.0, 1.0]), np.array([1.0, 1.0]),
                             Criterion("continuous"))
        assert np.allclose(st.alpha, [0.5, 0.5])
        assert st.sigma_eff_sq == 0.5

    def test_hand_example(self):
        st = compute_weights(np.array([1.0, 0.5]), np.array([1.0, 1.0]),
                             Criterion("continuous"))
        assert np.isclose(st.sigma_eff_sq, 0.8)
        assert np.allclose(st.alpha, [0.8, 0.4])

    def test_no_admissible_collaborator(self):
        with pytest.raises(NoAdmissibleCollaborator):
            compute_weights(np.array([0.1, 0.2]), np.ones(2),
                            Criterion("binary", lam=0.5))

    def test_binary_activation_at_threshold(self):
        crit = Criterion("binary", lam=0.5)
        below = compute_weights(np.array([1.0, 0.49]), np.ones(2), crit)
        at = compute_weights(np.array([1.0, 0.5]), np.ones(2), crit)
        assert below.alpha[1] == 0.0
        assert at.alpha[1] > 0.0
        assert at.active_set.tolist() == [0, 1]

    def test_input_validation(self):
        crit = Criterion("continuous")
        with pytest.raises(ValueError):
            compute_weights(np.array([1.0, 2.0]), np.ones(2), crit)
        with pytest.raises(ValueError):
            compute_weights(np.array([1.0]), np.array([0.0]), crit)
        with pytest.raises(ValueError):
            compute_weights(np.ones(2), np.ones(3), crit)

    def test_scaling_invariance(self):
        # alpha depends only on relative sigmas up to the scale of sigma_eff^2
        rng = np.random.default_rng(3)
        ratios, sigmas, crit, _ = random_instance(rng)
        a = compute_weights(ratios, sigmas, crit)
        b = compute_weights(ratios, 3.0 * sigmas, crit)
        assert np.allclose(a.alpha, b.alpha)
        assert np.isclose(b.sigma_eff_sq, 9.0 * a.sigma_eff_sq)

    def test_monotone_in_ratio_continuous(self):
        crit = Criterion("continuous")
        sigmas = np.ones(3)
        lo = compute_weights(np.array([1.0, 0.2, 0.5]), sigmas, crit)
        hi = compute_weights(np.array([1.0, 0.6, 0.5]), sigmas, crit)
        # raising r of client 1 raises its weight relative to client 2
        assert hi.alpha[1] / hi.alpha[2] > lo.alpha[1] / lo.alpha[2]


class TestWeightIdentities:
    """Bulk invariants over random instances (acceptance runs 1,000; these are
    the fast smoke versions)."""

    def test_cancellation_and_contraction(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            ratios, sigmas, crit, focal = random_instance(rng)
            try:
                st = compute_weights(ratios, sigmas, crit)
            except NoAdmissibleCollaborator:
                continue
            gi_sq = float(np.exp(rng.uniform(-2, 2)))
            diffs_sq = np.where(ratios > 0, (1.0 - ratios) * gi_sq,
                                gi_sq * (1.0 + rng.uniform(0, 3, ratios.size)))
            # cancellation: sum_k alpha_k (||diff||^2 - ||g_i||^2) = -||g_i||^2
            # holds whenever every *active* ratio is exact (diff^2=(1-r) g^2)
            lhs = float(st.alpha @ (diffs_sq - gi_sq))
            assert abs(lhs + gi_sq) <= 1e-10 * gi_sq
            # variance contraction: sum alpha^2 sigma^2 <= sigma_eff^2
            assert float(st.alpha**2 @ sigmas**2) <= st.sigma_eff_sq * (1 + 1e-12)

    def test_weight_sum_identity(self):
        # sum_k alpha_k = (sum phi/sigma^2) / (sum psi/sigma^2) = 1/step_ratio,
        # and psi <= phi makes the mass at least 1; the realized step
        # eta <= step_ratio/beta therefore satisfies eta * sum(alpha) <= 1/beta
        rng = np.random.default_rng(12)
        for _ in range(100):
            ratios, sigmas, crit, focal = random_instance(rng)
            try:
                st = compute_weights(ratios, sigmas, crit)
            except NoAdmissibleCollaborator:
                continue
            assert np.isclose(st.weight_sum, 1.0 / st.step_ratio)
            assert st.weight_sum >= 1 - 1e-12


class TestStepSizeRatioBounds:
    def test_binary_bound(self):
        rng = np.random.default_rng(5)
        crit = Criterion("binary", lam=0.2)
        for _ in range(50):
            ratios = rng.uniform(0, 1, 10)
            focal = 0
            ratios[focal] = 1.0
            st = compute_weights(ratios, np.ones(10), crit)
            lo, hi = step_size_ratio_bounds(st, crit, np.ones(10), focal)
            assert lo == 0.2 and hi == 1.0
            assert lo - 1e-12 <= st.step_ratio <= hi + 1e-12

    def test_continuous_single_client(self):
        crit = Criterion("continuous")
        st = compute_weights(np.array([1.0]), np.array([1.0]), crit)
        assert st.step_ratio == 1.0

    def test_continuous_equal_sigma_bound(self):
        rng = np.random.default_rng(6)
        crit = Criterion("continuous")
        for _ in range(50):
            ratios = rng.uniform(0, 1, 20)
            ratios[3] = 1.0
            st = compute_weights(ratios, np.ones(20), crit)
            lo, hi = step_size_ratio_bounds(st, crit, np.ones(20), 3)
            assert np.isclose(lo, 1.0 / 20.0)
            assert lo - 1e-12 <= st.step_ratio <= hi + 1e-12


class TestEstimateRatios:
    def _pair(self, noise):
        objs = [
            QuadraticObjective(A=np.eye(2), xi=np.zeros(2), noise_sigma=noise),
            QuadraticObjective(A=np.eye(2), xi=np.array([0.5, 0.0]),
                               noise_sigma=noise),
        ]
        return make_population(objs)

    def test_zero_noise_is_exact(self):
        pop = self._pair(0.0)
        theta = np.array([2.0, 1.0])
        for b_alpha in (1, 8):
            r_hat = estimate_ratios(pop, 0, theta, b_alpha,
                                    RngStream(0, purpose="est"))
            r = exact_ratios(pop.exact_gradients(theta), 0)
            assert np.allclose(r_hat, r)

    def test_focal_ratio_is_one(self):
        pop = self._pair(1.0)
        r_hat = estimate_ratios(pop, 1, np.array([1.0, 1.0]), 4,
                                RngStream(7, purpose="est"))
        assert r_hat[1] == 1.0

    def test_opposite_gradient_gives_zero(self):
        objs = [
            QuadraticObjective(A=np.eye(2), xi=np.zeros(2)),
            QuadraticObjective(A=np.eye(2), xi=np.array([-2.0, -2.0])),
        ]
        pop = make_population(objs)
        # at theta = (1,1): grad_0 = (2,2), grad_1 = 2*(1-2, 1-2) = (-2,-2)
        r_hat = estimate_ratios(pop, 0, np.array([1.0, 1.0]), 1, RngStream(0))
        assert r_hat[0] == 1.0 and r_hat[1] == 0.0

    def test_zero_gradient_estimate_flagged(self):
        pop = self._pair(0.0)
        flags = {}
        r_hat = estimate_ratios(pop, 0, np.zeros(2), 2,
                                RngStream(0, purpose="est"), flags=flags)
        assert flags["zero_gradient_estimates"] == 1
        assert r_hat[0] == 1.0 and r_hat[1] == 0.0

    def test_bad_b_alpha(self):
        with pytest.raises(ValueError):
            estimate_ratios(self._pair(0.0), 0, np.zeros(2), 0, RngStream(0))

    def test_consistency_smoke(self):
        # |r_hat - r| shrinks with b_alpha (full check in the acceptance suite)
        pop = self._pair(0.1)
        theta = np.array([2.0, 1.0])
        r = exact_ratios(pop.exact_gradients(theta), 0)[1]
        stream = RngStream(42, purpose="cons")
        errs = {}
        for b_alpha in (4, 1024):
            trials = [
                abs(estimate_ratios(pop, 0, theta, b_alpha, stream)[1] - r)
                for _ in range(30)
            ]
            errs[b_alpha] = np.mean(trials)
        assert errs[1024] < errs[4]
