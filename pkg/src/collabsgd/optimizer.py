"""Training loops: adaptive weighted-gradient aggregation, its oracle variant
with known clusters, local SGD, and FedAvg, under a synchronous round model.

Within a round every client reads the previous iterates before anyone writes;
all of a focal client's peer gradients are evaluated at the focal parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collaboration import (
    CollaborationState,
    Criterion,
    NoAdmissibleCollaborator,
    compute_weights,
    estimate_ratios,
    exact_ratios,
)
from .streams import RngStream

__all__ = [
    "AlgorithmSpec",
    "StepSchedule",
    "RunRecord",
    "DivergenceError",
    "run_experiment",
]

DIVERGENCE_LIMIT = 1e12


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, client: int, loss: float):
        super().__init__(
            f"loss diverged at iteration {iteration}, client {client}: {loss:.3e}"
        )
        self.iteration = iteration
        self.client = client
        self.loss = loss


@dataclass(frozen=True)
class AlgorithmSpec:
    """Which update rule to run.

    kind: all_for_one | oracle_all_for_one | local | fedavg
    criterion/estimation/b_alpha/inner_iterations apply to all_for_one;
    local_steps applies to fedavg.  `name` is the label written to outputs.
    """

    kind: str
    name: str | None = None
    criterion: Criterion | None = None
    estimation: str = "stochastic"  # or "exact"
    b_alpha: int = 1
    inner_iterations: int = 1
    local_steps: int = 1

    def __post_init__(self):
        if self.kind not in ("all_for_one", "oracle_all_for_one", "local", "fedavg"):
            raise ValueError(f"unknown algorithm kind {self.kind!r}")
        if self.kind == "all_for_one":
            if self.criterion is None:
                raise ValueError("all_for_one requires a criterion")
            if self.estimation not in ("exact", "stochastic"):
                raise ValueError("estimation must be 'exact' or 'stochastic'")
            if self.b_alpha < 1 or self.inner_iterations < 1:
                raise ValueError("b_alpha and inner_iterations must be >= 1")
        if self.kind == "fedavg" and self.local_steps < 1:
            raise ValueError("local_steps must be >= 1")
        if self.name is None:
            object.__setattr__(self, "name", self.kind)


@dataclass(frozen=True)
class StepSchedule:
    """Step-size schedule with a per-step safety cap.

    constant:          eta_t = eta (requires eta <= 1/mu when mu is known)
    decreasing:        eta_t = C / (mu t), C > 1
    horizon_dependent: eta_t = ln(2 T mu^2 eps0 / (beta sigma_suf_sq)) / (mu T)

    Every realized step is additionally capped at ratio / beta where ratio is
    the per-step (sigma_phi / sigma_eff)^2 of the focal client (1 for the
    baselines), whenever beta is known.
    """

    kind: str
    eta: float | None = None
    C: float | None = None
    mu: float | None = None
    beta: float | None = None
    T: int | None = None
    eps0: float | None = None
    sigma_suf_sq: float | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.eta is None or self.eta <= 0:
                raise ValueError("constant schedule needs eta > 0")
            if self.mu is not None and self.mu > 0 and self.eta > 1.0 / self.mu + 1e-15:
                raise ValueError("constant schedule requires eta <= 1/mu")
        elif self.kind == "decreasing":
            if self.C is None or self.C <= 1.0:
                raise ValueError("decreasing schedule needs C > 1")
            if self.mu is None or self.mu <= 0:
                raise ValueError("decreasing schedule needs mu > 0")
        elif self.kind == "horizon_dependent":
            for name in ("mu", "beta", "T", "eps0", "sigma_suf_sq"):
                if getattr(self, name) is None:
                    raise ValueError(f"horizon-dependent schedule needs {name}")
            if self._horizon_log_arg() <= 1.0:
                raise ValueError(
                    "horizon-dependent schedule needs 2 T mu^2 eps0 / "
                    "(beta sigma_suf_sq) > 1"
                )
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def _horizon_log_arg(self) -> float:
        return 2.0 * self.T * self.mu**2 * self.eps0 / (self.beta * self.sigma_suf_sq)

    def base_eta(self, t: int) -> float:
        if self.kind == "constant":
            return self.eta
        if self.kind == "decreasing":
            return self.C / (self.mu * t)
        eta = np.log(self._horizon_log_arg()) / (self.mu * self.T)
        return min(eta, 1.0 / self.mu)

    def realized_eta(self, t: int, step_ratio: float = 1.0) -> float:
        eta = self.base_eta(t)
        if self.beta is not None:
            eta = min(eta, step_ratio / self.beta)
        return eta


@dataclass
class RunRecord:
    """Per-iteration metrics plus run metadata.

    rows: one dict per (logged iteration, client) with the keys
    iter, client, excess_loss, test_loss, grad_sq_norm, active_set_size,
    weight_mass, sigma_eff_sq, in_cluster_weight, out_cluster_weight,
    grad_evals_total.
    """

    algo: str
    seed: int
    metadata: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    # per-step capture (only when requested): active sets and excess losses
    active_sets: list | None = None
    step_excess: list | None = None

    def column(self, key: str, client: int | None = None) -> np.ndarray:
        rows = self.rows if client is None else [
            r for r in self.rows if r["client"] == client
        ]
        return np.array([r[key] for r in rows])


def _log_rows(record, pop, thetas, t, states, evals, clusters, sigmas):
    losses = pop.losses(thetas)
    if np.max(losses) > DIVERGENCE_LIMIT or not np.all(np.isfinite(losses)):
        raise DivergenceError(t, int(np.argmax(losses)), float(np.max(losses)))
    n = pop.n_clients
    labels = np.asarray(clusters) if clusters is not None else np.zeros(n, dtype=int)
    for i in range(n):
        g = pop.objectives[i].exact_gradient(thetas[i])
        st = states[i]
        if st is not None:
            alpha = st.alpha
            active = st.active_set.size
            sigma_eff_sq = st.sigma_eff_sq
        else:
            alpha = np.zeros(n)
            alpha[i] = 1.0
            active = 1
            sigma_eff_sq = float(sigmas[i]) ** 2
        same = labels == labels[i]
        record.rows.append(
            dict(
                iter=t,
                client=i,
                excess_loss=float(losses[i]),
                test_loss=float(losses[i]),
                grad_sq_norm=float(g @ g),
                active_set_size=int(active),
                weight_mass=float(alpha.sum()),
                sigma_eff_sq=float(sigma_eff_sq),
                in_cluster_weight=float(alpha[same].mean()),
                out_cluster_weight=float(alpha[~same].mean()) if (~same).any() else 0.0,
                grad_evals_total=int(evals[i]),
            )
        )


def _uniform_cluster_states(clusters, sigmas):
    """Fixed oracle weights: 1/c over the focal client's ground-truth cluster."""
    labels = np.asarray(clusters)
    n = labels.size
    states = []
    for i in range(n):
        mask = labels == labels[i]
        c = int(mask.sum())
        alpha = np.where(mask, 1.0 / c, 0.0)
        states.append(
            CollaborationState(
                alpha=alpha,
                sigma_eff_sq=float((alpha**2) @ (np.asarray(sigmas) ** 2)),
                sigma_phi_sq=float((alpha**2) @ (np.asarray(sigmas) ** 2)),
                active_set=np.flatnonzero(mask),
            )
        )
    return states


def run_experiment(
    algo: AlgorithmSpec,
    population,
    schedule: StepSchedule,
    T: int,
    log_every: int,
    seed: int,
    sigmas: np.ndarray | None = None,
    clusters: list[int] | None = None,
    theta0: np.ndarray | None = None,
    capture_steps: bool = False,
) -> RunRecord:
    """Run all clients for T synchronous rounds and record metrics.

    sigmas are the per-client gradient-noise scales used by the weight rule
    (default: all ones).  clusters are ground-truth labels, required by the
    oracle algorithm and used for the in/out-cluster weight columns.
    Deterministic given (algo, schedule, seed).
    """
    if T < 1 or log_every < 1:
        raise ValueError("T and log_every must be >= 1")
    n, d = population.n_clients, population.dim
    sigmas = np.ones(n) if sigmas is None else np.asarray(sigmas, dtype=float)
    theta0 = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float)
    record = RunRecord(algo=algo.name, seed=seed,
                       metadata=dict(kind=algo.kind, T=T, log_every=log_every,
                                     schedule=schedule.kind, fallback_steps=0,
                                     zero_gradient_estimates=0))
    if capture_steps:
        record.active_sets = [[] for _ in range(n)]
        record.step_excess = [[] for _ in range(n)]

    if algo.kind == "fedavg":
        return _run_fedavg(algo, population, schedule, T, log_every, seed,
                           sigmas, clusters, theta0, record)
    if algo.kind == "local":
        return _run_local(algo, population, schedule, T, log_every, seed,
                          sigmas, clusters, theta0, record, capture_steps)

    thetas = np.tile(theta0, (n, 1))
    evals = np.zeros(n, dtype=np.int64)
    grad_streams = [RngStream(seed, client=i, purpose="grad") for i in range(n)]
    est_streams = [RngStream(seed, client=i, purpose="estimate") for i in range(n)]
    states: list[CollaborationState | None] = [None] * n

    if algo.kind == "oracle_all_for_one":
        if clusters is None:
            raise ValueError("oracle_all_for_one requires cluster labels")
        states = _uniform_cluster_states(clusters, sigmas)

    for t in range(1, T + 1):
        new_thetas = thetas.copy()
        for i in range(n):
            if algo.kind == "all_for_one" and (t - 1) % algo.inner_iterations == 0:
                if algo.estimation == "exact":
                    ratios = exact_ratios(population.exact_gradients(thetas[i]), i)
                else:
                    ratios = estimate_ratios(population, i, thetas[i],
                                             algo.b_alpha, est_streams[i],
                                             flags=record.metadata)
                    evals[i] += n * algo.b_alpha
                try:
                    states[i] = compute_weights(ratios, sigmas, algo.criterion)
                except NoAdmissibleCollaborator:
                    states[i] = None
                    record.metadata["fallback_steps"] += 1

            st = states[i]
            g = population.stochastic_gradients(thetas[i], grad_streams[i])[0]
            if st is None:
                # no admissible collaborator: pure local step
                eta = schedule.realized_eta(t)
                new_thetas[i] = thetas[i] - eta * g[i]
                evals[i] += 1
            else:
                eta = schedule.realized_eta(t, st.step_ratio)
                new_thetas[i] = thetas[i] - eta * (st.alpha @ g)
                evals[i] += st.active_set.size
            if capture_steps:
                active = (set(st.active_set.tolist()) if st is not None else {i})
                record.active_sets[i].append(active)
        thetas = new_thetas
        if capture_steps:
            for i, loss in enumerate(population.losses(thetas)):
                record.step_excess[i].append(float(loss))
        if t % log_every == 0:
            _log_rows(record, population, thetas, t, states, evals, clusters, sigmas)
    return record


def _run_local(algo, population, schedule, T, log_every, seed, sigmas,
               clusters, theta0, record, capture_steps):
    """Independent SGD: each client steps on its own stochastic gradient."""
    n = population.n_clients
    stream = RngStream(seed, purpose="local")
    thetas = np.tile(theta0, (n, 1))
    evals = np.zeros(n, dtype=np.int64)
    states = [None] * n
    for t in range(1, T + 1):
        eta = schedule.realized_eta(t)
        g = population.stochastic_gradients_each(thetas, stream)
        thetas = thetas - eta * g
        evals += 1
        if capture_steps:
            for i, loss in enumerate(population.losses(thetas)):
                record.active_sets[i].append({i})
                record.step_excess[i].append(float(loss))
        if t % log_every == 0:
            _log_rows(record, population, thetas, t, states, evals, clusters, sigmas)
    return record


def _run_fedavg(algo, population, schedule, T, log_every, seed, sigmas,
                clusters, theta0, record):
    """Single global model: per round, every client takes local_steps SGD
    steps from the global iterate and the results are averaged uniformly."""
    n = population.n_clients
    stream = RngStream(seed, purpose="fedavg")
    theta = theta0.copy()
    evals = np.zeros(n, dtype=np.int64)
    states = [None] * n
    for t in range(1, T + 1):
        eta = schedule.realized_eta(t)
        local = np.tile(theta, (n, 1))
        for _ in range(algo.local_steps):
            g = population.stochastic_gradients_each(local, stream)
            local -= eta * g
            evals += 1
        theta = local.mean(axis=0)
        if t % log_every == 0:
            thetas = np.tile(theta, (n, 1))
            _log_rows(record, population, thetas, t, states, evals, clusters, sigmas)
    return record
