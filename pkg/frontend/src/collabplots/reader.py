"""Manifest and CSV ingestion with strict schema checks.

The expected file formats are pinned here, independently of whoever produced
them; any drift is a named error rather than a best-effort parse.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

CONVERGENCE_SCHEMA = (
    "run_id,config_hash,algo,seed,iter,client,excess_loss,test_loss,"
    "grad_sq_norm,active_set_size,weight_mass,sigma_eff_sq,"
    "in_cluster_weight,out_cluster_weight,grad_evals_total"
)
SUFFICIENT_CLUSTER_SCHEMA = "v,epsilon,cluster_size,sigma_suf_sq"


class ManifestError(ValueError):
    """Manifest missing, unparsable, or referencing absent run files."""


class SchemaDriftError(ValueError):
    """A CSV header does not match the pinned schema."""


class EmptyDataError(ValueError):
    """A CSV parsed but contains no data rows."""


class IntegrityError(ValueError):
    """A run file does not match the digest recorded in the manifest."""


@dataclass(frozen=True)
class ConvergenceRun:
    run_id: str
    algo: str
    seed: int
    iters: np.ndarray      # unique logged iterations, sorted
    mean_loss: np.ndarray  # test loss averaged over clients, per iteration


@dataclass(frozen=True)
class ClusterCurve:
    v: float
    eps: np.ndarray
    size: np.ndarray


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_manifest(path: str, expected_kind: str) -> dict:
    if not os.path.isfile(path):
        raise ManifestError(f"manifest not found: {path}")
    try:
        with open(path) as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest is not valid JSON: {e}")
    kind = manifest.get("kind")
    if kind != expected_kind:
        raise ManifestError(
            f"manifest kind {kind!r} does not match expected {expected_kind!r}"
        )
    return manifest


def _read_rows(path: str, schema: str) -> list[dict]:
    with open(path, newline="") as f:
        header = f.readline().rstrip("\n")
        if header != schema:
            raise SchemaDriftError(
                f"{os.path.basename(path)}: header does not match the pinned "
                f"schema (got {header!r})"
            )
        rows = list(csv.DictReader(f, fieldnames=schema.split(",")))
    if not rows:
        raise EmptyDataError(f"{os.path.basename(path)}: no data rows")
    return rows


def _check_digest(path: str, recorded: str | None) -> None:
    if recorded and _sha256(path) != recorded:
        raise IntegrityError(
            f"{os.path.basename(path)}: contents do not match the digest "
            "recorded in the manifest"
        )


def load_convergence(manifest_path: str) -> list[ConvergenceRun]:
    """All runs of a convergence manifest, one loss curve per (algo, seed)."""
    manifest = _load_manifest(manifest_path, "convergence")
    if manifest.get("csv_schema") != CONVERGENCE_SCHEMA:
        raise SchemaDriftError("manifest csv_schema does not match the pinned schema")
    base = os.path.dirname(os.path.abspath(manifest_path))
    entries = manifest.get("runs", [])
    if not entries:
        raise ManifestError("manifest lists no runs")
    runs = []
    for entry in entries:
        path = os.path.join(base, entry["file"])
        if not os.path.isfile(path):
            raise ManifestError(f"run {entry['run_id']}: file {entry['file']} missing")
        _check_digest(path, entry.get("sha256"))
        rows = _read_rows(path, CONVERGENCE_SCHEMA)
        iters = np.array(sorted({int(r["iter"]) for r in rows}))
        losses = np.full(iters.size, np.nan)
        for j, t in enumerate(iters):
            vals = [float(r["test_loss"]) for r in rows if int(r["iter"]) == t]
            losses[j] = float(np.mean(vals))
        runs.append(ConvergenceRun(run_id=entry["run_id"], algo=rows[0]["algo"],
                                   seed=int(rows[0]["seed"]), iters=iters,
                                   mean_loss=losses))
    return runs


def load_sufficient_cluster(manifest_path: str) -> list[ClusterCurve]:
    """Cluster-size curves, one per heterogeneity level v."""
    manifest = _load_manifest(manifest_path, "sufficient_cluster")
    if manifest.get("csv_schema") != SUFFICIENT_CLUSTER_SCHEMA:
        raise SchemaDriftError("manifest csv_schema does not match the pinned schema")
    base = os.path.dirname(os.path.abspath(manifest_path))
    files = manifest.get("files", [])
    if not files:
        raise ManifestError("manifest lists no files")
    curves: dict[float, list[tuple[float, int]]] = {}
    for entry in files:
        path = os.path.join(base, entry["file"])
        if not os.path.isfile(path):
            raise ManifestError(f"file {entry['file']} missing")
        _check_digest(path, entry.get("sha256"))
        for r in _read_rows(path, SUFFICIENT_CLUSTER_SCHEMA):
            curves.setdefault(float(r["v"]), []).append(
                (float(r["epsilon"]), int(r["cluster_size"]))
            )
    out = []
    for v in sorted(curves, reverse=True):
        pts = sorted(curves[v])
        out.append(ClusterCurve(v=v, eps=np.array([e for e, _ in pts]),
                                size=np.array([s for _, s in pts])))
    return out
