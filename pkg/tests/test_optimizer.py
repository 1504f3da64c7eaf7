import numpy as np
import pytest

from collabsgd.collaboration import Criterion
from collabsgd.objectives import (
    QuadraticObjective,
    make_population,
    two_cluster_lsr,
)
from collabsgd.optimizer import (
    AlgorithmSpec,
    DivergenceError,
    StepSchedule,
    run_experiment,
)
from collabsgd.streams import RngStream


def quad_population(xis, noise=0.0, a=1.0):
    d = len(xis[0])
    objs = [QuadraticObjective(A=a * np.eye(d), xi=np.asarray(xi, dtype=float),
                               noise_sigma=noise) for xi in xis]
    return make_population(objs)


def gd_trajectory(obj, theta0, eta, T):
    theta = np.asarray(theta0, dtype=float)
    out = []
    for _ in range(T):
        theta = theta - eta * obj.exact_gradient(theta)
        out.append(obj.loss(theta))
    return np.array(out)


class TestAlgorithmSpec:
    def test_defaults_and_validation(self):
        spec = AlgorithmSpec(kind="local")
        assert spec.name == "local"
        with pytest.raises(ValueError):
            AlgorithmSpec(kind="momentum")
        with pytest.raises(ValueError):
            AlgorithmSpec(kind="all_for_one")  # criterion required
        with pytest.raises(ValueError):
            AlgorithmSpec(kind="all_for_one", criterion=Criterion(), b_alpha=0)
        with pytest.raises(ValueError):
            AlgorithmSpec(kind="fedavg", local_steps=0)


class TestStepSchedule:
    def test_constant_validation(self):
        StepSchedule(kind="constant", eta=0.4, mu=2.0)
        with pytest.raises(ValueError):
            StepSchedule(kind="constant", eta=0.6, mu=2.0)  # eta > 1/mu
        with pytest.raises(ValueError):
            StepSchedule(kind="constant", eta=-1.0)

    def test_decreasing_schedule(self):
        s = StepSchedule(kind="decreasing", C=2.0, mu=4.0)
        assert np.isclose(s.base_eta(1), 0.5)
        assert np.isclose(s.base_eta(10), 0.05)
        with pytest.raises(ValueError):
            StepSchedule(kind="decreasing", C=1.0, mu=4.0)

    def test_horizon_dependent_schedule(self):
        s = StepSchedule(kind="horizon_dependent", mu=1.0, beta=1.0, T=100,
                         eps0=10.0, sigma_suf_sq=1.0)
        expected = np.log(2 * 100 * 10.0) / 100.0
        assert np.isclose(s.base_eta(50), min(expected, 1.0))
        with pytest.raises(ValueError):
            StepSchedule(kind="horizon_dependent", mu=1.0, beta=1.0, T=1,
                         eps0=0.1, sigma_suf_sq=1.0)

    def test_realized_step_cap(self):
        s = StepSchedule(kind="constant", eta=0.4, beta=2.0)
        assert s.realized_eta(1, step_ratio=1.0) == 0.4
        # a small realized ratio tightens the cap to ratio / beta
        assert np.isclose(s.realized_eta(1, step_ratio=0.2), 0.1)


class TestAllForOne:
    def test_single_client_zero_noise_is_gd(self):
        pop = quad_population([[1.0, -2.0]])
        algo = AlgorithmSpec(kind="all_for_one", criterion=Criterion(),
                             estimation="exact")
        sched = StepSchedule(kind="constant", eta=0.1, beta=2.0, mu=2.0)
        rec = run_experiment(algo, pop, sched, T=20, log_every=1, seed=0)
        expected = gd_trajectory(pop.objectives[0], np.zeros(2), 0.1, 20)
        assert np.allclose(rec.column("excess_loss", client=0), expected,
                           atol=1e-12)

    def test_identical_clients_zero_noise_match_gd(self):
        pop = quad_population([[1.0, 1.0]] * 2)
        algo = AlgorithmSpec(kind="all_for_one", criterion=Criterion(),
                             estimation="exact")
        sched = StepSchedule(kind="constant", eta=0.1, beta=2.0, mu=2.0)
        rec = run_experiment(algo, pop, sched, T=15, log_every=1, seed=0)
        expected = gd_trajectory(pop.objectives[0], np.zeros(2), 0.1, 15)
        for i in (0, 1):
            assert np.allclose(rec.column("excess_loss", client=i), expected,
                               atol=1e-12)

    def test_identical_noisy_clients_variance_halved(self):
        # aggregated gradient estimate alpha=(.5,.5) has half the variance
        pop = quad_population([[0.0, 0.0]] * 2, noise=1.0)
        theta = np.array([1.0, 1.0])
        stream = RngStream(3, purpose="var")
        draws = pop.stochastic_gradients(theta, stream, draws=100_000)
        single = draws[:, 0, :]
        paired = 0.5 * draws[:, 0, :] + 0.5 * draws[:, 1, :]
        v_single = single.var(axis=0).sum()
        v_paired = paired.var(axis=0).sum()
        assert abs(v_paired / v_single - 0.5) < 0.02

    def test_determinism(self):
        objs, clusters = two_cluster_lsr(6, 2, batch_size=2,
                                         stream=RngStream(5, purpose="obj"))
        pop = make_population(objs)
        algo = AlgorithmSpec(kind="all_for_one", criterion=Criterion(),
                             b_alpha=2)
        sched = StepSchedule(kind="constant", eta=0.05, beta=2.0, mu=2.0)
        a = run_experiment(algo, pop, sched, T=30, log_every=5, seed=9,
                          clusters=clusters)
        b = run_experiment(algo, pop, sched, T=30, log_every=5, seed=9,
                          clusters=clusters)
        assert a.rows == b.rows

    def test_zero_gradient_estimates_flagged(self):
        # starting every client exactly at a shared interpolation optimum,
        # the estimator sees all-zero focal draws and records the degenerate
        # estimate; the run still proceeds on self-weights only
        objs = [
            # LsrObjective-style interpolation via zero-noise quadratics with
            # a common minimizer at the origin
            QuadraticObjective(A=np.eye(2), xi=np.zeros(2), noise_sigma=0.0)
            for _ in range(2)
        ]
        pop = make_population(objs)
        algo = AlgorithmSpec(kind="all_for_one", criterion=Criterion(),
                             b_alpha=1)
        sched = StepSchedule(kind="constant", eta=0.1, beta=2.0, mu=2.0)
        rec = run_experiment(algo, pop, sched, T=3, log_every=1, seed=1)
        assert rec.metadata["zero_gradient_estimates"] == 3 * 2
        assert rec.metadata["fallback_steps"] == 0
        assert (rec.column("excess_loss") == 0.0).all()

    def test_inner_iterations_reuse_weights(self):
        objs, clusters = two_cluster_lsr(4, 2, batch_size=2,
                                         stream=RngStream(8, purpose="obj"))
        pop = make_population(objs)
        sched = StepSchedule(kind="constant", eta=0.05, beta=2.0, mu=2.0)
        every = AlgorithmSpec(kind="all_for_one", criterion=Criterion(),
                              b_alpha=1, inner_iterations=1)
        reuse = AlgorithmSpec(kind="all_for_one", criterion=Criterion(),
                              b_alpha=1, inner_iterations=5)
        rec_e = run_experiment(every, pop, sched, T=20, log_every=20, seed=2,
                               clusters=clusters)
        rec_r = run_experiment(reuse, pop, sched, T=20, log_every=20, seed=2,
                               clusters=clusters)
        # re-estimating every step costs 5x the estimation gradient draws
        evals_e = rec_e.column("grad_evals_total", client=0)[-1]
        evals_r = rec_r.column("grad_evals_total", client=0)[-1]
        assert evals_e > evals_r

    def test_grad_eval_accounting_local(self):
        pop = quad_population([[1.0, 0.0]] * 3, noise=0.5)
        rec = run_experiment(AlgorithmSpec(kind="local"), pop,
                             StepSchedule(kind="constant", eta=0.1),
                             T=10, log_every=10, seed=0)
        assert (rec.column("grad_evals_total") == 10).all()


class TestLocal:
    def test_zero_noise_monotone_decrease(self):
        pop = quad_population([[2.0, -1.0], [0.5, 0.5]])
        sched = StepSchedule(kind="constant", eta=0.2, beta=2.0, mu=2.0)
        rec = run_experiment(AlgorithmSpec(kind="local"), pop, sched,
                             T=25, log_every=1, seed=0)
        for i in (0, 1):
            losses = rec.column("excess_loss", client=i)
            assert (np.diff(losses) < 0).all() or losses[-1] == 0.0

    def test_matches_gd_zero_noise(self):
        pop = quad_population([[1.0, 2.0]])
        sched = StepSchedule(kind="constant", eta=0.1, beta=2.0, mu=2.0)
        rec = run_experiment(AlgorithmSpec(kind="local"), pop, sched,
                             T=10, log_every=1, seed=0)
        expected = gd_trajectory(pop.objectives[0], np.zeros(2), 0.1, 10)
        assert np.allclose(rec.column("excess_loss", client=0), expected)


class TestFedAvg:
    def test_identical_clients_match_centralized_gd(self):
        pop = quad_population([[1.0, -1.0]] * 4)
        sched = StepSchedule(kind="constant", eta=0.1, beta=2.0, mu=2.0)
        rec = run_experiment(AlgorithmSpec(kind="fedavg"), pop, sched,
                             T=12, log_every=1, seed=0)
        expected = gd_trajectory(pop.objectives[0], np.zeros(2), 0.1, 12)
        assert np.allclose(rec.column("excess_loss", client=0), expected,
                           atol=1e-12)

    def test_symmetric_clusters_stuck_at_midpoint(self):
        # optima at +/- theta*: the average model converges to the midpoint 0
        # and per-cluster loss stays bounded away from zero
        pop = quad_population([[1.0, 0.0], [-1.0, 0.0]] * 2)
        sched = StepSchedule(kind="constant", eta=0.2, beta=2.0, mu=2.0)
        rec = run_experiment(AlgorithmSpec(kind="fedavg"), pop, sched,
                             T=200, log_every=200, seed=0)
        final = rec.column("excess_loss")
        # each client's loss at the midpoint theta=0 is xi^T xi = 1
        assert np.allclose(final, 1.0, atol=1e-6)

    def test_one_local_step_is_gd_on_average_loss(self):
        xis = [[1.0, 0.0], [0.0, 1.0], [-1.0, 1.0]]
        pop = quad_population(xis)
        sched = StepSchedule(kind="constant", eta=0.1, beta=2.0, mu=2.0)
        rec = run_experiment(AlgorithmSpec(kind="fedavg"), pop, sched,
                             T=8, log_every=1, seed=0)
        # average loss has curvature I and minimizer -mean(xi)
        avg = QuadraticObjective(A=np.eye(2),
                                 xi=np.mean(np.asarray(xis), axis=0))
        theta = np.zeros(2)
        for t in range(8):
            theta = theta - 0.1 * avg.exact_gradient(theta)
            logged = rec.column("excess_loss", client=0)[t]
            assert np.isclose(logged, pop.objectives[0].loss(theta))

    def test_multiple_local_steps_run(self):
        pop = quad_population([[1.0, 0.0], [-1.0, 0.0]], noise=0.2)
        sched = StepSchedule(kind="constant", eta=0.05, beta=2.0, mu=2.0)
        rec = run_experiment(AlgorithmSpec(kind="fedavg", local_steps=3), pop,
                             sched, T=10, log_every=5, seed=0)
        assert rec.column("grad_evals_total", client=0)[-1] == 30


class TestOracle:
    def test_singleton_clusters_match_local(self):
        pop = quad_population([[1.0, 0.0], [0.0, 1.0]], noise=0.0)
        sched = StepSchedule(kind="constant", eta=0.1, beta=2.0, mu=2.0)
        oracle = run_experiment(AlgorithmSpec(kind="oracle_all_for_one"), pop,
                                sched, T=15, log_every=1, seed=0,
                                clusters=[0, 1])
        local = run_experiment(AlgorithmSpec(kind="local"), pop, sched,
                               T=15, log_every=1, seed=0)
        for i in (0, 1):
            assert np.allclose(oracle.column("excess_loss", client=i),
                               local.column("excess_loss", client=i))

    def test_requires_clusters(self):
        pop = quad_population([[1.0, 0.0]])
        sched = StepSchedule(kind="constant", eta=0.1)
        with pytest.raises(ValueError):
            run_experiment(AlgorithmSpec(kind="oracle_all_for_one"), pop,
                           sched, T=5, log_every=1, seed=0)

    def test_uniform_weights_within_cluster(self):
        objs, clusters = two_cluster_lsr(6, 2, batch_size=1,
                                         stream=RngStream(2, purpose="obj"))
        pop = make_population(objs)
        sched = StepSchedule(kind="constant", eta=0.05, beta=2.0, mu=2.0)
        rec = run_experiment(AlgorithmSpec(kind="oracle_all_for_one"), pop,
                             sched, T=4, log_every=4, seed=0,
                             clusters=clusters)
        assert (rec.column("active_set_size") == 3).all()
        assert np.allclose(rec.column("weight_mass"), 1.0)
        assert (rec.column("out_cluster_weight") == 0.0).all()


class TestDivergence:
    def test_unstable_step_raises(self):
        pop = quad_population([[1.0, 0.0]], a=5.0)  # beta = 10
        sched = StepSchedule(kind="constant", eta=0.5)  # way past 2/beta
        with pytest.raises(DivergenceError) as exc:
            run_experiment(AlgorithmSpec(kind="local"), pop, sched,
                           T=500, log_every=1, seed=0,
                           theta0=np.array([10.0, 0.0]))
        assert exc.value.loss > 1e12

    def test_run_validation(self):
        pop = quad_population([[1.0, 0.0]])
        sched = StepSchedule(kind="constant", eta=0.1)
        with pytest.raises(ValueError):
            run_experiment(AlgorithmSpec(kind="local"), pop, sched,
                           T=0, log_every=1, seed=0)


class TestInterpolationConvergence:
    def test_collaboration_beats_local_on_lsr(self):
        # two-cluster least-squares in the interpolation regime: adaptive
        # weighting over the 10-client cluster multiplies the per-step
        # contraction, so the continuous variant lands far below local SGD
        objs, clusters = two_cluster_lsr(20, 2, batch_size=2,
                                         stream=RngStream(127, purpose="obj"))
        pop = make_population(objs)
        sched = StepSchedule(kind="constant", eta=0.125, beta=2.0, mu=2.0)
        cont = AlgorithmSpec(kind="all_for_one", criterion=Criterion(),
                             b_alpha=1)
        rec_c = run_experiment(cont, pop, sched, T=60, log_every=60, seed=127,
                               clusters=clusters)
        rec_l = run_experiment(AlgorithmSpec(kind="local"), pop, sched,
                               T=60, log_every=60, seed=127)
        assert rec_c.column("excess_loss").mean() < \
            1e-3 * rec_l.column("excess_loss").mean()
