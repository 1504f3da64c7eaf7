"""Experiment configuration: YAML ingestion, validation, and builders that
turn a config into populations, algorithm specs, and schedules."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .collaboration import Criterion
from .objectives import (
    QuadraticObjective,
    QuadraticPopulation,
    make_population,
    shifted_optima_quadratics,
    two_cluster_lsr,
)
from .optimizer import AlgorithmSpec, StepSchedule
from .streams import RngStream

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "estimate_sigmas"]

OBJECTIVE_KINDS = ("lsr_two_cluster", "quadratic_shifted", "quadratic_single")
ALGO_KINDS = ("all_for_one", "oracle_all_for_one", "local", "fedavg")


class ConfigError(ValueError):
    """Invalid configuration; `errors` lists field-level diagnostics."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; `raw` is the normalized dict that
    the content hash and serialized round-trips are computed from."""

    raw: dict

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def seeds(self) -> list[int]:
        return list(self.raw["seeds"])

    @property
    def T(self) -> int:
        return self.raw["T"]

    @property
    def log_every(self) -> int:
        return self.raw["log_every"]

    @property
    def threshold_exponent(self) -> int:
        return self.raw.get("threshold_exponent", 2)

    @property
    def algorithms(self) -> list[dict]:
        return self.raw["algorithms"]

    def content_hash(self) -> str:
        payload = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    # -- builders ----------------------------------------------------------

    def build_objectives(self, seed: int):
        """Instantiate the client objectives for one run seed.

        Returns (objectives, cluster_labels).  The problem instance depends
        only on the seed, so every algorithm sees the same data for a seed.
        """
        spec = self.raw["objective"]
        stream = RngStream(seed, purpose="objective")
        kind = spec["kind"]
        if kind == "lsr_two_cluster":
            return two_cluster_lsr(
                n_clients=spec["N"],
                d=spec["d"],
                batch_size=spec.get("batch_size", 1),
                stream=stream,
                optima_scale=spec.get("optima_scale", 1.0),
            )
        if kind == "quadratic_shifted":
            objs = shifted_optima_quadratics(
                n_clients=spec["N"],
                d=spec["d"],
                v=spec["v"],
                stream=stream,
                noise_sigma=spec.get("noise_sigma", 1.0),
            )
            return objs, [0] * spec["N"]
        # quadratic_single: one client, curvature a * I
        a = spec.get("curvature", 1.0)
        d = spec["d"]
        xi = -spec.get("theta_star_scale", 1.0) * stream.standard_normal(d)
        obj = QuadraticObjective(A=a * np.eye(d), xi=xi,
                                 noise_sigma=spec.get("noise_sigma", 1.0))
        return [obj], [0]

    def build_population(self, seed: int):
        objs, labels = self.build_objectives(seed)
        return make_population(objs), labels

    def smoothness_beta(self, population) -> float:
        mats = population.A if isinstance(population, QuadraticPopulation) else population.H
        return 2.0 * max(float(np.linalg.eigvalsh(m)[-1]) for m in mats)

    def strong_convexity_mu(self, population) -> float:
        mats = population.A if isinstance(population, QuadraticPopulation) else population.H
        return 2.0 * min(float(np.linalg.eigvalsh(m)[0]) for m in mats)

    def build_schedule(self, population) -> StepSchedule:
        spec = self.raw["schedule"]
        beta = self.smoothness_beta(population)
        mu = self.strong_convexity_mu(population)
        kind = spec["kind"]
        if kind == "constant":
            eta = spec.get("eta")
            if eta is None:
                eta = spec["eta_beta_scale"] / beta
            return StepSchedule(kind="constant", eta=eta, beta=beta,
                                mu=mu if mu > 0 else None)
        if kind == "decreasing":
            return StepSchedule(kind="decreasing", C=spec["C"], mu=mu, beta=beta)
        raise ConfigError([f"schedule.kind: unsupported in run configs: {kind!r}"])

    def build_algorithm(self, algo_raw: dict) -> AlgorithmSpec:
        kind = algo_raw["kind"]
        crit = None
        if kind == "all_for_one":
            crit = Criterion(kind=algo_raw.get("criterion", "continuous"),
                             lam=algo_raw.get("lambda", 0.5))
        return AlgorithmSpec(
            kind=kind,
            name=algo_raw.get("name", kind),
            criterion=crit,
            estimation=algo_raw.get("estimation", "stochastic"),
            b_alpha=algo_raw.get("b_alpha", 1),
            inner_iterations=algo_raw.get("inner_iterations", 1),
            local_steps=algo_raw.get("local_steps", 1),
        )


def estimate_sigmas(population, stream: RngStream, draws: int = 4000,
                    theta0: np.ndarray | None = None) -> np.ndarray:
    """Empirical per-client noise scale: 99th percentile of ||g - grad R||
    over probe draws at theta0 (default: origin)."""
    theta0 = np.zeros(population.dim) if theta0 is None else theta0
    exact = population.exact_gradients(theta0)
    g = population.stochastic_gradients(theta0, stream, draws=draws)
    devs = np.linalg.norm(g - exact[None], axis=2)  # (draws, N)
    return np.percentile(devs, 99, axis=0)


def run_sigmas(config: ExperimentConfig, population, seed: int) -> np.ndarray:
    """Noise scales handed to the weight rule for one run."""
    spec = config.raw["objective"]
    if spec["kind"] == "lsr_two_cluster":
        stream = RngStream(seed, purpose="sigma-probe")
        return estimate_sigmas(population, stream,
                               draws=config.raw.get("sigma_probe_draws", 4000))
    noise = np.array([o.noise_sigma for o in population.objectives])
    if (noise > 0).all():
        return noise
    return np.ones(population.n_clients)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _validate(raw: dict) -> list[str]:
    errs = []

    def need(cond, msg):
        if not cond:
            errs.append(msg)

    need(isinstance(raw, dict), "config must be a mapping")
    if not isinstance(raw, dict):
        return errs
    need(isinstance(raw.get("name"), str) and raw.get("name"),
         "name: required non-empty string")
    seeds = raw.get("seeds")
    need(isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds),
         "seeds: required non-empty list of integers")
    need(isinstance(raw.get("T"), int) and raw.get("T", 0) >= 1, "T: integer >= 1")
    need(isinstance(raw.get("log_every"), int) and raw.get("log_every", 0) >= 1,
         "log_every: integer >= 1")
    te = raw.get("threshold_exponent", 2)
    need(te in (1, 2), "threshold_exponent: must be 1 or 2")

    obj = raw.get("objective")
    if not isinstance(obj, dict):
        errs.append("objective: required mapping")
    else:
        kind = obj.get("kind")
        need(kind in OBJECTIVE_KINDS, f"objective.kind: one of {OBJECTIVE_KINDS}")
        need(isinstance(obj.get("d"), int) and obj.get("d", 0) >= 1,
             "objective.d: integer >= 1")
        if kind in ("lsr_two_cluster", "quadratic_shifted"):
            need(isinstance(obj.get("N"), int) and obj.get("N", 0) >= 1,
                 "objective.N: integer >= 1")
        if kind == "lsr_two_cluster":
            need(obj.get("batch_size", 1) >= 1, "objective.batch_size: >= 1")
        if kind == "quadratic_shifted":
            need(isinstance(obj.get("v"), (int, float)) and obj.get("v", -1) >= 0,
                 "objective.v: number >= 0")
        if obj.get("noise_sigma") is not None:
            need(obj["noise_sigma"] >= 0, "objective.noise_sigma: >= 0")

    sched = raw.get("schedule")
    if not isinstance(sched, dict):
        errs.append("schedule: required mapping")
    else:
        kind = sched.get("kind")
        need(kind in ("constant", "decreasing"),
             "schedule.kind: 'constant' or 'decreasing'")
        if kind == "constant":
            need(("eta" in sched) != ("eta_beta_scale" in sched),
                 "schedule: give exactly one of eta / eta_beta_scale")
            if "eta" in sched:
                need(sched["eta"] > 0, "schedule.eta: > 0")
            if "eta_beta_scale" in sched:
                need(sched["eta_beta_scale"] > 0, "schedule.eta_beta_scale: > 0")
        if kind == "decreasing":
            need(sched.get("C", 0) > 1, "schedule.C: > 1")

    algos = raw.get("algorithms")
    if not isinstance(algos, list) or not algos:
        errs.append("algorithms: required non-empty list")
    else:
        names = set()
        for idx, a in enumerate(algos):
            where = f"algorithms[{idx}]"
            if not isinstance(a, dict):
                errs.append(f"{where}: must be a mapping")
                continue
            need(a.get("kind") in ALGO_KINDS, f"{where}.kind: one of {ALGO_KINDS}")
            name = a.get("name", a.get("kind"))
            need(name not in names, f"{where}.name: duplicate name {name!r}")
            names.add(name)
            if a.get("kind") == "all_for_one":
                need(a.get("criterion", "continuous") in ("binary", "continuous"),
                     f"{where}.criterion: 'binary' or 'continuous'")
                lam = a.get("lambda", 0.5)
                need(0 < lam <= 1, f"{where}.lambda: in (0, 1]")
                need(a.get("b_alpha", 1) >= 1, f"{where}.b_alpha: >= 1")
                need(a.get("inner_iterations", 1) >= 1,
                     f"{where}.inner_iterations: >= 1")
                need(a.get("estimation", "stochastic") in ("exact", "stochastic"),
                     f"{where}.estimation: 'exact' or 'stochastic'")
            if a.get("kind") == "fedavg":
                need(a.get("local_steps", 1) >= 1, f"{where}.local_steps: >= 1")
            if a.get("kind") == "oracle_all_for_one":
                need(raw.get("objective", {}).get("kind") == "lsr_two_cluster",
                     f"{where}: oracle needs ground-truth clusters "
                     "(lsr_two_cluster objective)")
    return errs


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a YAML run config; raises ConfigError on problems."""
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"])
    except yaml.YAMLError as e:
        raise ConfigError([f"malformed YAML: {e}"])
    errs = _validate(raw)
    if errs:
        raise ConfigError(errs)
    # round-trip check: the normalized form must serialize losslessly
    rt = yaml.safe_load(yaml.safe_dump(raw))
    if rt != raw:
        raise ConfigError(["config does not round-trip through serialization"])
    return ExperimentConfig(raw=raw)
