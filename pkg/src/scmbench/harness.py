"""Reproducible benchmark sweep: DAGs x confounder levels x methods.

Every random draw derives from (master_seed, dag_id, purpose tag, level), so
any execution order, worker count, or subset of cells reproduces identical
numbers. Both methods in a cell consume the same sampled batches; a digest
check guards against one method mutating them for the other.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .icp import IcpConfig, icp_identify
from .identifier import TrainConfig, identify_parents
from .scm import (Environment, GenConfig, Intervention, LinearGaussianScm,
                  SampleBatch, add_confounders, parents, random_scm, sample)

CSV_HEADER = "dag_id,method,confounders,z,pa0,js,violated,wall_time"
KNOWN_METHODS = ("iid", "icp")

# purpose tags for seed derivation
_TAG_SCM = 1
_TAG_CONFOUND = 2
_TAG_ENV = 3
_TAG_SAMPLE = 4
_TAG_IID = 5
_TAG_ICP = 6


@dataclass(frozen=True)
class ExperimentConfig:
    num_dags: int = 50
    samples_per_env: int = 2000
    confounder_levels: tuple[int, ...] = (0, 1, 2)
    methods: tuple[str, ...] = ("iid", "icp")
    master_seed: int = 0
    include_observational: bool = False
    gen: GenConfig = field(default_factory=GenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)
    fixed_scm: LinearGaussianScm | None = None

    def __post_init__(self) -> None:
        if self.num_dags < 1:
            raise ValueError("num_dags must be >= 1")
        if self.samples_per_env < 10:
            raise ValueError("samples_per_env must be >= 10")
        if not self.confounder_levels or len(set(self.confounder_levels)) != len(self.confounder_levels):
            raise ValueError("confounder_levels must be non-empty and unique")
        if any(lvl < 0 for lvl in self.confounder_levels):
            raise ValueError("confounder levels must be >= 0")
        if not self.methods or len(set(self.methods)) != len(self.methods):
            raise ValueError("methods must be non-empty and unique")
        unknown = set(self.methods) - set(KNOWN_METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.master_seed < 0:
            raise ValueError("master_seed must be >= 0")


@dataclass(frozen=True)
class RunRecord:
    dag_id: int
    method: str
    confounders: int
    z: frozenset[int]
    pa0: frozenset[int]
    js: float
    violated: bool
    wall_time: float


@dataclass(frozen=True, eq=False)
class Report:
    records: tuple[RunRecord, ...]
    cells: dict
    errors: tuple[dict, ...]
    config: dict
    master_seed: int
    config_hash: str
    timestamp: str


def jaccard(z: frozenset[int] | set[int], pa0: frozenset[int] | set[int]) -> float:
    """|intersection| / |union|, with two empty sets scoring 1.0."""
    z = frozenset(z)
    pa0 = frozenset(pa0)
    if not z and not pa0:
        return 1.0
    return len(z & pa0) / len(z | pa0)


def fwer(records: list[RunRecord]) -> float:
    """Fraction of records whose estimate is not a subset of the truth."""
    if not records:
        raise ValueError("need at least one record")
    return sum(r.violated for r in records) / len(records)


def _rng(master_seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, *keys)))


def environments_for(scm: LinearGaussianScm, gen: GenConfig,
                     rng: np.random.Generator,
                     include_observational: bool = False) -> list[Environment]:
    """One clamp environment per candidate (env id = clamped node), each with
    a value drawn once from the intervention range; optionally an
    unintervened environment with id 0 in front."""
    envs: list[Environment] = []
    if include_observational:
        envs.append(Environment(id=0, interventions=()))
    for j in range(1, scm.num_observed):
        value = float(rng.uniform(gen.intervention_value_min, gen.intervention_value_max))
        envs.append(Environment(id=j, interventions=(Intervention(node=j, value=value),)))
    return envs


def _batches_digest(batches: list[SampleBatch]) -> str:
    digest = hashlib.sha256()
    for b in batches:
        digest.update(str(b.env).encode())
        digest.update(np.ascontiguousarray(b.data).tobytes())
    return digest.hexdigest()


def _run_method(method: str, batches: list[SampleBatch], cfg: ExperimentConfig,
                dag_id: int, level: int) -> frozenset[int]:
    if method == "iid":
        rng = _rng(cfg.master_seed, dag_id, _TAG_IID, level)
        return identify_parents(batches, cfg.train, rng).estimated_set
    icp_seed = int(_rng(cfg.master_seed, dag_id, _TAG_ICP, level).integers(0, 2 ** 32))
    return icp_identify(batches, cfg.icp, seed=icp_seed).estimated_set


def _dag_task(args: tuple[ExperimentConfig, int]) -> tuple[list[RunRecord], list[dict]]:
    cfg, dag_id = args
    records: list[RunRecord] = []
    errors: list[dict] = []

    def fail(level: int, methods: tuple[str, ...], message: str) -> None:
        for method in methods:
            errors.append({"dag_id": dag_id, "method": method,
                           "confounders": level, "error": message})

    try:
        if cfg.fixed_scm is not None:
            base = cfg.fixed_scm
        else:
            base = random_scm(cfg.gen, _rng(cfg.master_seed, dag_id, _TAG_SCM))
    except Exception as exc:  # noqa: BLE001 - cell failures must not kill the sweep
        for level in cfg.confounder_levels:
            fail(level, cfg.methods, f"generation: {exc}")
        return records, errors

    for level in cfg.confounder_levels:
        try:
            scm_l = add_confounders(base, level,
                                    _rng(cfg.master_seed, dag_id, _TAG_CONFOUND, level),
                                    cfg.gen)
            envs = environments_for(scm_l, cfg.gen,
                                    _rng(cfg.master_seed, dag_id, _TAG_ENV, level),
                                    cfg.include_observational)
            sample_rng = _rng(cfg.master_seed, dag_id, _TAG_SAMPLE, level)
            batches = [sample(scm_l, env, cfg.samples_per_env, sample_rng)
                       for env in envs]
            pa0 = parents(scm_l, 0)
            digest = _batches_digest(batches)
        except Exception as exc:  # noqa: BLE001
            fail(level, cfg.methods, f"setup: {exc}")
            continue
        for method in cfg.methods:
            start = time.perf_counter()
            try:
                z = _run_method(method, batches, cfg, dag_id, level)
            except Exception as exc:  # noqa: BLE001
                errors.append({"dag_id": dag_id, "method": method,
                               "confounders": level, "error": str(exc)})
                continue
            wall = time.perf_counter() - start
            if _batches_digest(batches) != digest:
                errors.append({"dag_id": dag_id, "method": method,
                               "confounders": level,
                               "error": "shared batches were mutated"})
                continue
            records.append(RunRecord(
                dag_id=dag_id, method=method, confounders=level,
                z=z, pa0=pa0, js=jaccard(z, pa0),
                violated=not z <= pa0, wall_time=wall))
    return records, errors


def aggregate_cells(records: list[RunRecord] | tuple[RunRecord, ...],
                    methods: tuple[str, ...] | None = None,
                    levels: tuple[int, ...] | None = None) -> dict:
    """Per-(method, level) mean_js, sd_js (ddof=1), fwer, and record count."""
    if methods is None:
        methods = tuple(dict.fromkeys(r.method for r in records))
    if levels is None:
        levels = tuple(sorted({r.confounders for r in records}))
    cells: dict = {}
    for method in methods:
        cells[method] = {}
        for level in levels:
            cell = [r for r in records if r.method == method and r.confounders == level]
            if not cell:
                cells[method][level] = {"mean_js": None, "sd_js": None,
                                        "fwer": None, "n": 0}
                continue
            js = np.array([r.js for r in cell])
            sd = float(js.std(ddof=1)) if js.size > 1 else 0.0
            cells[method][level] = {
                "mean_js": float(js.mean()),
                "sd_js": sd,
                "fwer": fwer(cell),
                "n": len(cell),
            }
    return cells


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = {
        "num_dags": cfg.num_dags,
        "samples_per_env": cfg.samples_per_env,
        "confounder_levels": list(cfg.confounder_levels),
        "methods": list(cfg.methods),
        "master_seed": cfg.master_seed,
        "include_observational": cfg.include_observational,
        "generation": dataclasses.asdict(cfg.gen),
        "train": dataclasses.asdict(cfg.train),
        "icp": dataclasses.asdict(cfg.icp),
        "fixed_scm": None if cfg.fixed_scm is None else {
            "num_observed": cfg.fixed_scm.num_observed,
            "num_latent": cfg.fixed_scm.num_latent,
        },
    }
    return echo


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Run the full sweep; cell failures land in Report.errors instead of
    aborting. ``threads`` sets the worker-process count and never changes the
    numbers."""
    if threads < 1:
        raise ValueError("threads must be >= 1")
    tasks = [(cfg, dag_id) for dag_id in range(cfg.num_dags)]
    if threads == 1 or cfg.num_dags == 1:
        outcomes = [_dag_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_dag_task, tasks))

    records: list[RunRecord] = []
    errors: list[dict] = []
    for recs, errs in outcomes:
        records.extend(recs)
        errors.extend(errs)
    level_index = {lvl: i for i, lvl in enumerate(cfg.confounder_levels)}
    method_index = {m: i for i, m in enumerate(cfg.methods)}
    records.sort(key=lambda r: (r.dag_id, level_index[r.confounders], method_index[r.method]))
    errors.sort(key=lambda e: (e["dag_id"], level_index[e["confounders"]], method_index[e["method"]]))

    echo = _config_echo(cfg)
    config_hash = hashlib.sha256(
        json.dumps(echo, sort_keys=True).encode()).hexdigest()
    timestamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return Report(
        records=tuple(records),
        cells=aggregate_cells(records, cfg.methods, cfg.confounder_levels),
        errors=tuple(errors),
        config=echo,
        master_seed=cfg.master_seed,
        config_hash=config_hash,
        timestamp=timestamp,
    )


def _format_set(nodes: frozenset[int]) -> str:
    return "|".join(str(v) for v in sorted(nodes))


def _parse_set(text: str) -> frozenset[int]:
    if not text:
        return frozenset()
    return frozenset(int(v) for v in text.split("|"))


def write_records_csv(records, path) -> None:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([
            str(r.dag_id), r.method, str(r.confounders),
            _format_set(r.z), _format_set(r.pa0),
            repr(float(r.js)), "true" if r.violated else "false",
            repr(float(r.wall_time)),
        ]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_records_csv(path) -> list[RunRecord]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError("empty CSV: expected a header line")
    if lines[0] != CSV_HEADER:
        got = lines[0].split(",")
        want = CSV_HEADER.split(",")
        for i, name in enumerate(want):
            if i >= len(got) or got[i] != name:
                found = got[i] if i < len(got) else "nothing"
                raise ValueError(
                    f"header column {i} should be '{name}', found '{found}'")
        raise ValueError(f"header has {len(got)} columns, expected {len(want)}")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 8:
            raise ValueError(f"malformed record line: {ln!r}")
        records.append(RunRecord(
            dag_id=int(parts[0]), method=parts[1], confounders=int(parts[2]),
            z=_parse_set(parts[3]), pa0=_parse_set(parts[4]),
            js=float(parts[5]), violated=parts[6] == "true",
            wall_time=float(parts[7])))
    return records


def report_to_dict(report: Report) -> dict:
    return {
        "master_seed": report.master_seed,
        "config_hash": report.config_hash,
        "config": report.config,
        "cells": {method: {str(level): stats for level, stats in by_level.items()}
                  for method, by_level in report.cells.items()},
        "errors": list(report.errors),
        "timestamp": report.timestamp,
    }


def write_report_json(report: Report, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")
