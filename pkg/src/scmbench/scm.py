"""Linear Gaussian structural causal models with hard do-interventions.

A model over p = num_observed + num_latent nodes encodes the assignments

    x_j = sum_i weights[j, i] * x_i + noise_j,   noise_j ~ N(noise_means[j], noise_stds[j]^2)

where ``weights`` is strictly lower triangular under ``topo_order``. Node 0 is
the outcome. Latent nodes (indices >= num_observed) are root causes and are
marginalized out of every sampled batch and every analytic moment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

_MAX_RETRIES = 64


class GenerationError(RuntimeError):
    """Random graph constraints could not be met within the retry budget."""


@dataclass(frozen=True)
class GenConfig:
    """Knobs for random model generation.

    ``edge_prob`` doubles as the probability that a candidate node is drawn as
    a direct parent of the outcome in the first pass; of the candidates left
    over, at most two form a descendant chain hanging off the outcome and the
    rest become further parents. Every candidate is therefore causally tied to
    node 0, so each intervention environment carries signal about its target.
    ``min_parents`` (capped at the candidate count) is enforced on the first
    pass by resampling with bounded retries.
    """

    nodes_min: int = 8
    nodes_max: int = 12
    edge_prob: float = 0.3
    weight_min: float = 0.5
    weight_max: float = 2.0
    sign_flip_prob: float = 0.5
    noise_std_min: float = 0.7
    noise_std_max: float = 1.5
    intervention_value_min: float = 3.0
    intervention_value_max: float = 7.0
    min_parents: int = 2
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.nodes_min < 2 or self.nodes_max < self.nodes_min:
            raise ValueError("need 2 <= nodes_min <= nodes_max")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError("edge_prob must lie in [0, 1]")
        if not 0.0 < self.weight_min <= self.weight_max:
            raise ValueError("need 0 < weight_min <= weight_max")
        if not 0.0 <= self.sign_flip_prob <= 1.0:
            raise ValueError("sign_flip_prob must lie in [0, 1]")
        if not 0.0 < self.noise_std_min <= self.noise_std_max:
            raise ValueError("need 0 < noise_std_min <= noise_std_max")
        if self.intervention_value_min > self.intervention_value_max:
            raise ValueError("intervention value range is empty")
        if self.min_parents < 1:
            raise ValueError("min_parents must be >= 1")


@dataclass(frozen=True)
class Intervention:
    """Hard clamp do(x_node = value)."""

    node: int
    value: float


@dataclass(frozen=True)
class Environment:
    """A labelled experimental regime: a set of simultaneous clamps."""

    id: int
    interventions: tuple[Intervention, ...] = ()


@dataclass(frozen=True, eq=False)
class LinearGaussianScm:
    num_observed: int
    num_latent: int
    weights: np.ndarray
    noise_means: np.ndarray
    noise_stds: np.ndarray
    topo_order: tuple[int, ...]

    def __post_init__(self) -> None:
        p = self.p
        if self.num_observed < 1 or self.num_latent < 0:
            raise ValueError("need num_observed >= 1 and num_latent >= 0")
        if self.weights.shape != (p, p):
            raise ValueError("weights must be (p, p)")
        if self.noise_means.shape != (p,) or self.noise_stds.shape != (p,):
            raise ValueError("noise vectors must have length p")
        if not (np.all(np.isfinite(self.weights))
                and np.all(np.isfinite(self.noise_means))
                and np.all(np.isfinite(self.noise_stds))):
            raise ValueError("parameters must be finite")
        # zero std encodes a clamped node; generation always draws > 0
        if np.any(self.noise_stds < 0):
            raise ValueError("noise stds must be nonnegative")
        if np.any(np.diag(self.weights) != 0.0):
            raise ValueError("self-loops are not allowed")
        if sorted(self.topo_order) != list(range(p)):
            raise ValueError("topo_order must be a permutation of all nodes")
        pos = np.empty(p, dtype=np.int64)
        pos[list(self.topo_order)] = np.arange(p)
        rows, cols = np.nonzero(self.weights)
        if np.any(pos[cols] >= pos[rows]):
            raise ValueError("weights contain an edge violating topo_order")
        # latents are root causes: no incoming edges at all
        if self.num_latent and np.any(self.weights[self.num_observed:, :] != 0.0):
            raise ValueError("latent nodes cannot have parents")

    @property
    def p(self) -> int:
        return self.num_observed + self.num_latent

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinearGaussianScm):
            return NotImplemented
        return (self.num_observed == other.num_observed
                and self.num_latent == other.num_latent
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.noise_means, other.noise_means)
                and np.array_equal(self.noise_stds, other.noise_stds)
                and self.topo_order == other.topo_order)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Rows drawn from one environment; column i holds x_i, latents excluded."""

    env: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError("data must be 2-D with at least one row")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("data must be finite")

    @property
    def n(self) -> int:
        return self.data.shape[0]


def _draw_weight(rng: np.random.Generator, cfg: GenConfig) -> float:
    w = rng.uniform(cfg.weight_min, cfg.weight_max)
    if rng.random() < cfg.sign_flip_prob:
        w = -w
    return float(w)


def random_scm(cfg: GenConfig, rng: np.random.Generator | None = None) -> LinearGaussianScm:
    """Draw a random DAG model in which every candidate matters for node 0.

    Candidates (nodes 1..m-1) are drawn as direct parents of the outcome with
    probability ``edge_prob`` each (at least ``min_parents`` of them, enforced
    by bounded resampling). Of the leftover candidates, one or two form a
    descendant chain below the outcome (node 0 -> d1 -> d2, each link the sole
    incoming edge of its head) and any remaining candidates become additional
    direct parents.

    Parents are mutually unconnected root nodes and descendants never fan out
    or take edges from parents. Both choices keep identification well posed:
    a chain concentrates each descendant's information about node 0 in the
    current chain head (parallel copies would be mutually redundant, and the
    clamp on any single copy nearly undetectable), and root parents keep every
    node's marginal identical across the environments that do not clamp it,
    so dropping one candidate from consideration never disturbs how the
    remaining ones are judged.

    Raises GenerationError when the parent-count floor cannot be met within
    the retry budget (e.g. edge_prob = 0).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    m = int(rng.integers(cfg.nodes_min, cfg.nodes_max + 1))
    n_cand = m - 1
    need = min(cfg.min_parents, n_cand)
    for _ in range(_MAX_RETRIES):
        drawn_parent = rng.random(n_cand) < cfg.edge_prob
        if int(drawn_parent.sum()) >= need:
            break
    else:
        raise GenerationError(
            f"could not draw >= {need} outcome parents in {_MAX_RETRIES} tries")

    candidates = np.arange(1, m)
    leftover = [int(v) for v in rng.permutation(candidates[~drawn_parent])]
    chain_len = min(len(leftover), 1 + int(rng.random() < 0.5))
    desc_ids = leftover[:chain_len]
    parents_ids = [int(v) for v in candidates[drawn_parent]] + leftover[chain_len:]
    parents_ids = [int(v) for v in rng.permutation(parents_ids)]

    weights = np.zeros((m, m))
    for pa in parents_ids:
        weights[0, pa] = _draw_weight(rng, cfg)
    for k, d in enumerate(desc_ids):
        src = 0 if k == 0 else desc_ids[k - 1]
        weights[d, src] = _draw_weight(rng, cfg)

    stds = rng.uniform(cfg.noise_std_min, cfg.noise_std_max, size=m)
    topo = tuple(parents_ids) + (0,) + tuple(desc_ids)
    return LinearGaussianScm(
        num_observed=m,
        num_latent=0,
        weights=weights,
        noise_means=np.zeros(m),
        noise_stds=stds,
        topo_order=topo,
    )


def intervene(scm: LinearGaussianScm, env: Environment) -> LinearGaussianScm:
    """Return a copy with every clamp applied: incoming weights zeroed, noise
    mean set to the clamp value, noise std set to zero.

    Rejects clamps on node 0, on latent nodes, on unknown nodes, and duplicate
    targets within one environment.
    """
    if not env.interventions:
        return scm
    weights = scm.weights.copy()
    means = scm.noise_means.copy()
    stds = scm.noise_stds.copy()
    seen: set[int] = set()
    for iv in env.interventions:
        j = iv.node
        if not 0 <= j < scm.p:
            raise ValueError(f"intervention target {j} is not a node")
        if j == 0:
            raise ValueError("cannot intervene on the outcome node")
        if j >= scm.num_observed:
            raise ValueError("cannot intervene on a latent node")
        if j in seen:
            raise ValueError(f"duplicate intervention target {j}")
        if not np.isfinite(iv.value):
            raise ValueError("intervention value must be finite")
        seen.add(j)
        weights[j, :] = 0.0
        means[j] = float(iv.value)
        stds[j] = 0.0
    return replace(scm, weights=weights, noise_means=means, noise_stds=stds)


def sample(scm: LinearGaussianScm, env: Environment, n: int,
           rng: np.random.Generator) -> SampleBatch:
    """Draw n rows by ancestral sampling in topological order.

    Clamped columns are exactly constant (their noise scale is zero). Latent
    columns are dropped from the returned batch.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    applied = intervene(scm, env)
    p = applied.p
    noise = rng.normal(applied.noise_means, applied.noise_stds, size=(n, p))
    values = np.zeros((n, p))
    for j in applied.topo_order:
        values[:, j] = values @ applied.weights[j] + noise[:, j]
    return SampleBatch(env=env.id, data=values[:, :scm.num_observed].copy())


def analytic_moments(scm: LinearGaussianScm,
                     env: Environment) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean vector and covariance matrix of the observed nodes.

    Solves (I - B) m = noise_means and (I - B) S (I - B)^T = diag(noise_stds^2)
    by forward substitution along ``topo_order``; a node untouched by the
    clamps (a non-descendant) therefore reproduces bit-identical moments.
    Singularity of (I - B) cannot occur for a validated DAG.
    """
    applied = intervene(scm, env)
    p = applied.p
    mean = np.zeros(p)
    cov = np.zeros((p, p))
    var = applied.noise_stds ** 2
    for j in applied.topo_order:
        row = applied.weights[j]
        mean[j] = applied.noise_means[j] + row @ mean
        c = cov @ row
        cov[j, :] = c
        cov[:, j] = c
        cov[j, j] = row @ c + var[j]
    k = scm.num_observed
    return mean[:k].copy(), cov[:k, :k].copy()


def add_confounders(scm: LinearGaussianScm, count: int, rng: np.random.Generator,
                    gen: GenConfig | None = None) -> LinearGaussianScm:
    """Append ``count`` latent root causes, each pointing at node 0 and at one
    uniformly chosen other observed node.

    Edge weights are drawn like regular weights (ranges from ``gen``, defaults
    to GenConfig()); latent noise is standard normal. count = 0 returns the
    model unchanged.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return scm
    if scm.num_observed < 2:
        raise ValueError("need at least two observed nodes to confound")
    if gen is None:
        gen = GenConfig()
    p_old = scm.p
    p_new = p_old + count
    weights = np.zeros((p_new, p_new))
    weights[:p_old, :p_old] = scm.weights
    means = np.concatenate([scm.noise_means, np.zeros(count)])
    stds = np.concatenate([scm.noise_stds, np.ones(count)])
    for t in range(count):
        lat = p_old + t
        other = int(rng.integers(1, scm.num_observed))
        weights[0, lat] = _draw_weight(rng, gen)
        weights[other, lat] = _draw_weight(rng, gen)
    topo = tuple(range(p_old, p_new)) + scm.topo_order
    return LinearGaussianScm(
        num_observed=scm.num_observed,
        num_latent=scm.num_latent + count,
        weights=weights,
        noise_means=means,
        noise_stds=stds,
        topo_order=topo,
    )


def parents(scm: LinearGaussianScm, node: int) -> frozenset[int]:
    """Observed nodes with a nonzero weight into ``node``; latents excluded."""
    if not 0 <= node < scm.p:
        raise ValueError(f"{node} is not a node")
    row = scm.weights[node, :scm.num_observed]
    return frozenset(int(i) for i in np.nonzero(row)[0])


def batch_to_csv(batch: SampleBatch, path) -> None:
    """Write one batch as CSV with header env,x0,x1,..."""
    width = batch.data.shape[1]
    header = ["env"] + [f"x{i}" for i in range(width)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in batch.data:
            writer.writerow([batch.env] + [repr(float(v)) for v in row])


def four_node_demo_scm() -> LinearGaussianScm:
    """Fixed model x0 = 2*x1 - 1.5*x2 + d0, x3 = x0 + d3, unit noise.

    PA(0) = {1, 2}; x3 is a child of the outcome, so candidate 3 must be
    rejected by any sound identifier.
    """
    weights = np.zeros((4, 4))
    weights[0, 1] = 2.0
    weights[0, 2] = -1.5
    weights[3, 0] = 1.0
    return LinearGaussianScm(
        num_observed=4,
        num_latent=0,
        weights=weights,
        noise_means=np.zeros(4),
        noise_stds=np.ones(4),
        topo_order=(1, 2, 0, 3),
    )
