"""Command-line interface: experiment runs, sufficient-cluster sweeps,
bound tables, and config validation.

Exit codes: 0 success, 2 invalid config, 3 divergence.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from .collaboration import Criterion
from .config import ConfigError, ExperimentConfig, load_config, run_sigmas
from .objectives import heterogeneity_bounds, make_population, shifted_optima_quadratics
from .optimizer import DivergenceError, run_experiment
from .streams import RngStream
from .theory import sample_complexity, sufficient_cluster, table1_bound

CSV_HEADER = (
    "run_id,config_hash,algo,seed,iter,client,excess_loss,test_loss,"
    "grad_sq_norm,active_set_size,weight_mass,sigma_eff_sq,"
    "in_cluster_weight,out_cluster_weight,grad_evals_total"
)
FIG1_HEADER = "v,epsilon,cluster_size,sigma_suf_sq"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path: str, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def record_to_csv(record, run_id: str, config_hash: str) -> str:
    lines = [CSV_HEADER]
    for r in record.rows:
        lines.append(
            ",".join(
                [
                    run_id,
                    config_hash,
                    record.algo,
                    str(record.seed),
                    str(r["iter"]),
                    str(r["client"]),
                    _fmt(r["excess_loss"]),
                    _fmt(r["test_loss"]),
                    _fmt(r["grad_sq_norm"]),
                    str(r["active_set_size"]),
                    _fmt(r["weight_mass"]),
                    _fmt(r["sigma_eff_sq"]),
                    _fmt(r["in_cluster_weight"]),
                    _fmt(r["out_cluster_weight"]),
                    str(r["grad_evals_total"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def execute_run(raw_config: dict, algo_index: int, seed: int, out_dir: str) -> dict:
    """Run one (algorithm, seed) pair and write its CSV; returns a manifest
    entry.  Module-level so process pools can pickle it."""
    config = ExperimentConfig(raw=raw_config)
    chash = config.content_hash()
    population, clusters = config.build_population(seed)
    sigmas = run_sigmas(config, population, seed)
    schedule = config.build_schedule(population)
    algo = config.build_algorithm(config.algorithms[algo_index])
    record = run_experiment(
        algo, population, schedule, config.T, config.log_every, seed,
        sigmas=sigmas, clusters=clusters,
    )
    run_id = f"{algo.name}-s{seed}-{chash}"
    fname = f"{run_id}.csv"
    path = os.path.join(out_dir, fname)
    _atomic_write(path, record_to_csv(record, run_id, chash))
    return dict(
        run_id=run_id,
        algo=algo.name,
        seed=seed,
        file=fname,
        sha256=_sha256(path),
        metadata=dict(record.metadata,
                      sigmas=[float(s) for s in sigmas]),
    )


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    seeds = [args.seed_override] if args.seed_override is not None else config.seeds
    os.makedirs(args.out, exist_ok=True)
    jobs = [(i, s) for i in range(len(config.algorithms)) for s in seeds]
    entries = []
    try:
        if args.jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as ex:
                futures = [
                    ex.submit(execute_run, config.raw, i, s, args.out)
                    for i, s in jobs
                ]
                for fut in futures:
                    entries.append(fut.result())
        else:
            for i, s in jobs:
                entries.append(execute_run(config.raw, i, s, args.out))
    except DivergenceError as e:
        diag_path = os.path.join(args.out, "divergence.json")
        _atomic_write(
            diag_path,
            json.dumps(
                dict(error=str(e), iteration=e.iteration, client=e.client,
                     loss=e.loss, config_hash=config.content_hash()),
                indent=2,
            ),
        )
        print(f"divergence: {e} (diagnostic at {diag_path})", file=sys.stderr)
        return EXIT_DIVERGENCE
    manifest = dict(
        kind="convergence",
        name=config.name,
        config_hash=config.content_hash(),
        config=config.raw,
        csv_schema=CSV_HEADER,
        runs=sorted(entries, key=lambda e: e["run_id"]),
    )
    _atomic_write(os.path.join(args.out, "manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(entries)} runs to {args.out}")
    return EXIT_OK


def sufficient_cluster_sweep(
    v_values, n_clients, d, noise_sigma, eps_grid, lam, seed,
    threshold_exponent=2, focal=0,
):
    """Cluster-size curves: for each heterogeneity level v, sample client
    optima, derive (b, c) from the quadratic closed forms, and sweep eps.

    Yields (v, eps, cluster_size, sigma_suf_sq) rows for the focal client.
    """
    crit = Criterion(kind="binary", lam=lam)
    rows = []
    for v in v_values:
        stream = RngStream(seed, purpose=f"fig1-v{v}")
        objs = shifted_optima_quadratics(n_clients, d, v, stream,
                                         noise_sigma=noise_sigma)
        hm = heterogeneity_bounds(objs)
        mu = 2.0  # identity curvature
        sigmas = np.full(n_clients, noise_sigma if noise_sigma > 0 else 1.0)
        for eps in eps_grid:
            rep = sufficient_cluster(focal, float(eps), hm, mu, sigmas, crit,
                                     threshold_exponent)
            rows.append((float(v), float(eps), rep.size, rep.sigma_suf_sq))
    return rows


def cmd_sufficient_cluster(args) -> int:
    if args.config:
        try:
            import yaml

            with open(args.config) as f:
                raw = yaml.safe_load(f)
        except Exception as e:  # noqa: BLE001
            print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        sweep = raw.get("sweep", {})
        v_values = sweep.get("v", [1.0, 0.1, 0.01, 0.001])
        n_clients = sweep.get("N", 20)
        d = sweep.get("d", 2)
        noise_sigma = sweep.get("noise_sigma", 1.0)
        lam = sweep.get("lambda", 0.5)
        seed = sweep.get("seed", 127)
        te = sweep.get("threshold_exponent", 2)
        eps_min = sweep.get("eps_min", 1e-8)
        eps_max = sweep.get("eps_max", 1e2)
        points = sweep.get("points", 50)
        name = raw.get("name", "sufficient-cluster")
    else:
        v_values = [float(x) for x in args.v.split(",")]
        n_clients, d = args.n_clients, args.d
        noise_sigma, lam, seed, te = args.noise_sigma, args.lam, args.seed, 2
        eps_min, eps_max, points = args.eps_min, args.eps_max, args.points
        name = "sufficient-cluster"
    if any(v < 0 for v in v_values) or eps_min <= 0 or eps_max <= eps_min:
        print("config error: need v >= 0 and 0 < eps_min < eps_max",
              file=sys.stderr)
        return EXIT_CONFIG
    eps_grid = np.logspace(np.log10(eps_min), np.log10(eps_max), points)
    rows = sufficient_cluster_sweep(v_values, n_clients, d, noise_sigma,
                                    eps_grid, lam, seed, te)
    os.makedirs(args.out, exist_ok=True)
    lines = [FIG1_HEADER]
    for v, eps, size, suf in rows:
        suf_txt = "inf" if np.isinf(suf) else _fmt(suf)
        lines.append(f"{_fmt(v)},{_fmt(eps)},{size},{suf_txt}")
    fname = "sufficient_cluster.csv"
    path = os.path.join(args.out, fname)
    _atomic_write(path, "\n".join(lines) + "\n")
    manifest = dict(
        kind="sufficient_cluster",
        name=name,
        csv_schema=FIG1_HEADER,
        params=dict(v=list(map(float, v_values)), N=n_clients, d=d,
                    noise_sigma=noise_sigma, **{"lambda": lam}, seed=seed,
                    threshold_exponent=te),
        files=[dict(file=fname, sha256=_sha256(path))],
    )
    _atomic_write(os.path.join(args.out, "manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote sweep ({len(rows)} rows) to {path}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    t_grid = np.unique(np.logspace(0, np.log10(args.t_max), args.points).astype(int))
    eta_or_C = args.eta if args.regime == "constant" else args.C
    lines = ["T,bound"]
    try:
        for T in t_grid:
            ev = table1_bound(args.regime, args.beta, args.mu, args.eps0,
                              args.sigma_suf_sq, int(T), eta_or_C)
            lines.append(f"{T},{_fmt(ev.bound_at_T)}")
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print("\n".join(lines))
    if args.eps is not None:
        n = sample_complexity(args.eps, args.beta, args.mu, args.sigma_suf_sq,
                              args.C if args.C else 2.0)
        print(f"sample_complexity({args.eps}) = {n}")
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        _atomic_write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {config.name} (hash {config.content_hash()})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="collabsgd",
                                description="Personalized decentralized SGD "
                                            "with adaptive collaboration")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a run config across algorithms and seeds")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--seed-override", type=int, default=None)
    run.set_defaults(func=cmd_run)

    sc = sub.add_parser("sufficient-cluster",
                        help="cluster-size vs precision sweep")
    sc.add_argument("--config", default=None)
    sc.add_argument("--out", required=True)
    sc.add_argument("--v", default="1,0.1,0.01,0.001",
                    help="comma-separated heterogeneity levels")
    sc.add_argument("--n-clients", type=int, default=20)
    sc.add_argument("--d", type=int, default=2)
    sc.add_argument("--noise-sigma", type=float, default=1.0)
    sc.add_argument("--lam", type=float, default=0.5)
    sc.add_argument("--seed", type=int, default=127)
    sc.add_argument("--eps-min", type=float, default=1e-8)
    sc.add_argument("--eps-max", type=float, default=1e2)
    sc.add_argument("--points", type=int, default=50)
    sc.set_defaults(func=cmd_sufficient_cluster)

    b = sub.add_parser("bounds", help="evaluate excess-loss bound curves")
    b.add_argument("--regime", required=True,
                   choices=["constant", "horizon_dependent", "decreasing"])
    b.add_argument("--beta", type=float, required=True)
    b.add_argument("--mu", type=float, required=True)
    b.add_argument("--eps0", type=float, required=True)
    b.add_argument("--sigma-suf-sq", type=float, required=True)
    b.add_argument("--eta", type=float, default=None)
    b.add_argument("--C", type=float, default=None)
    b.add_argument("--t-max", type=float, default=1e5)
    b.add_argument("--points", type=int, default=50)
    b.add_argument("--eps", type=float, default=None,
                   help="also print the sample complexity at this precision")
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("validate-config", help="check a config file")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
