"""Parent identification by invariance of interventional residuals.

Candidates x_1..x_l each own one environment that clamps them. A small
regressor predicts x_0 from the masked candidates; per round, each active
candidate j is scored by the Frechet distance between Gaussian fits of its
own-environment holdout residual magnitudes and everyone else's. Clamping a
true parent leaves the residual law unchanged, while a candidate the regressor
leans on for other reasons (a descendant of the outcome, or a confounded
proxy) distorts residuals exactly in its own environment. The worst offender
is masked out and the regressor is retrained, which lets proxy chains fall
round by round; survivors are the estimated parents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distmetrics import EmpiricalSample, fit_gaussian, frechet_gaussian1d
from .scm import SampleBatch


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during gradient descent."""


@dataclass(frozen=True)
class TrainConfig:
    """Settings for one training call and for the penalty loop.

    ``epochs_per_round`` counts mini-batch updates. ``rounds`` of None means
    one round per candidate. With ``tau_auto`` the threshold is recalibrated
    each round from label-permuted null scores: tau = max(tau_multiplier *
    95th percentile, max) over ``calibration_permutations`` null draws;
    otherwise the absolute ``tau`` applies.
    """

    hidden_width: int = 16
    learning_rate: float = 1e-2
    epochs_per_round: int = 600
    batch_size: int = 256
    rounds: int | None = None
    holdout_fraction: float = 0.3
    tau: float = 0.0
    tau_auto: bool = True
    tau_multiplier: float = 3.0
    calibration_permutations: int = 64

    def __post_init__(self) -> None:
        if self.hidden_width < 1 or self.epochs_per_round < 1 or self.batch_size < 1:
            raise ValueError("hidden_width, epochs_per_round, batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.rounds is not None and self.rounds < 1:
            raise ValueError("rounds must be >= 1 when given")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.tau_multiplier <= 0:
            raise ValueError("tau_multiplier must be positive")
        if self.calibration_permutations < 1:
            raise ValueError("calibration_permutations must be >= 1")


class PenaltyWeights:
    """Binary mask over candidates x_1..x_l; entries only ever flip 1 -> 0."""

    def __init__(self, mask: np.ndarray):
        mask = np.asarray(mask)
        if mask.ndim != 1 or not np.all(np.isin(mask, (0, 1))):
            raise ValueError("mask must be a 1-D binary vector")
        self._mask = mask.astype(np.int8)

    @classmethod
    def all_active(cls, length: int) -> "PenaltyWeights":
        if length < 1:
            raise ValueError("need at least one candidate")
        return cls(np.ones(length, dtype=np.int8))

    @property
    def mask(self) -> np.ndarray:
        return self._mask.copy()

    def as_vector(self) -> np.ndarray:
        return self._mask.astype(float)

    def active_candidates(self) -> list[int]:
        """Candidate node ids (1-based) still carrying weight 1."""
        return [int(i) + 1 for i in np.nonzero(self._mask)[0]]

    def deactivate(self, candidate: int) -> None:
        idx = candidate - 1
        if not 0 <= idx < self._mask.size:
            raise ValueError(f"candidate {candidate} out of range")
        if self._mask[idx] == 0:
            raise ValueError(f"candidate {candidate} is already inactive")
        self._mask[idx] = 0

    def __len__(self) -> int:
        return int(self._mask.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PenaltyWeights):
            return NotImplemented
        return np.array_equal(self._mask, other._mask)


@dataclass(frozen=True, eq=False)
class Regressor:
    """One-hidden-layer network with a parallel linear path, in raw units.

    Predicts x ws + tanh(x W1 + b1) W2 + b2. The linear path can represent an
    affine mechanism exactly, so for such targets the fit error is not limited
    by tanh saturation on far-displaced (clamped) inputs; the hidden path
    picks up whatever the linear part cannot.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    ws: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.w1.shape[0]:
            raise ValueError("input width does not match the regressor")
        return x @ self.ws + np.tanh(x @ self.w1 + self.b1) @ self.w2 + self.b2


def train_regressor(batches: list[SampleBatch], weights: PenaltyWeights,
                    cfg: TrainConfig, rng: np.random.Generator) -> Regressor:
    """Fit the masked regressor to pooled rows by mini-batch gradient descent.

    Inputs and target are standardized on the pooled rows and the affine maps
    are folded back into the returned parameters, so ``predict`` works in raw
    units. Updates use Adam-style per-parameter step scaling at
    ``learning_rate``; the step size stays flat for the first 70 percent of
    updates and then decays linearly to 2 percent so the parameters settle at
    the optimum instead of hovering around it (leftover hover noise on a
    coefficient shows up as a spurious residual shift in whichever environment
    clamps that input far from its pooled mean). Raises TrainingDivergedError
    on non-finite loss.
    """
    if not batches:
        raise ValueError("need at least one batch")
    data = np.vstack([b.data for b in batches])
    if data.shape[1] != len(weights) + 1:
        raise ValueError("batch width does not match the number of candidates")
    mask = weights.as_vector()
    x_raw = data[:, 1:] * mask
    y_raw = data[:, 0]
    n, l = x_raw.shape
    h = cfg.hidden_width

    x_mu = x_raw.mean(axis=0)
    x_sd = x_raw.std(axis=0)
    x_sd[x_sd < 1e-12] = 1.0
    y_mu = float(y_raw.mean())
    y_sd = float(y_raw.std())
    if y_sd < 1e-12:
        y_sd = 1.0
    x = (x_raw - x_mu) / x_sd
    y = (y_raw - y_mu) / y_sd

    w1 = rng.normal(0.0, 1.0 / np.sqrt(max(l, 1)), size=(l, h))
    b1 = np.zeros(h)
    w2 = rng.normal(0.0, 0.1 / np.sqrt(h), size=h)
    b2 = 0.0
    # start the linear path at the pooled least-squares solution over active
    # columns; gradient descent then fine-tunes instead of dragging the
    # coefficients from zero, which would leave a transient deficit that
    # masquerades as a residual shift in the strongly clamped environments
    ws = np.zeros(l)
    act = np.nonzero(mask)[0]
    if act.size:
        xa = x[:, act]
        gram = xa.T @ xa + 1e-8 * n * np.eye(act.size)
        ws[act] = np.linalg.solve(gram, xa.T @ y)
    params = [w1, b1, w2, np.array(b2), ws]
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    total = cfg.epochs_per_round
    flat = int(0.7 * total)
    for step in range(1, total + 1):
        if step <= flat or total == flat:
            lr = cfg.learning_rate
        else:
            frac = (step - flat) / (total - flat)
            lr = cfg.learning_rate * (1.0 - 0.98 * frac)
        idx = rng.integers(0, n, size=cfg.batch_size)
        xb = x[idx]
        yb = y[idx]
        hidden = np.tanh(xb @ params[0] + params[1])
        pred = xb @ params[4] + hidden @ params[2] + params[3]
        err = pred - yb
        loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at step {step}")
        d_pred = 2.0 * err / err.size
        g_ws = xb.T @ d_pred
        g_w2 = hidden.T @ d_pred
        g_b2 = np.array(d_pred.sum())
        d_hidden = np.outer(d_pred, params[2]) * (1.0 - hidden ** 2)
        g_w1 = xb.T @ d_hidden
        g_b1 = d_hidden.sum(axis=0)
        grads = (g_w1, g_b1, g_w2, g_b2, g_ws)
        for p, m, v, g in zip(params, m_state, v_state, grads):
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g ** 2
            m_hat = m / (1 - beta1 ** step)
            v_hat = v / (1 - beta2 ** step)
            p -= lr * m_hat / (np.sqrt(v_hat) + eps)

    # fold standardization into the parameters: raw units in, raw units out
    w1_fold = params[0] / x_sd[:, None]
    b1_fold = params[1] - (x_mu / x_sd) @ params[0]
    w2_fold = params[2] * y_sd
    ws_fold = params[4] / x_sd * y_sd
    b2_fold = (float(params[3]) - (x_mu / x_sd) @ params[4]) * y_sd + y_mu
    return Regressor(w1=w1_fold, b1=b1_fold, w2=w2_fold, b2=b2_fold, ws=ws_fold)


def residual_scores(reg: Regressor, weights: PenaltyWeights,
                    batch: SampleBatch) -> EmpiricalSample:
    """|prediction - x_0| on the masked candidates of one batch."""
    if batch.data.shape[1] != len(weights) + 1:
        raise ValueError("batch width does not match the number of candidates")
    x = batch.data[:, 1:] * weights.as_vector()
    res = np.abs(reg.predict(x) - batch.data[:, 0])
    return EmpiricalSample(values=res, label=batch.env)


def penalty_step(per_candidate_fids: list[tuple[int, float]],
                 tau: float) -> int | None:
    """Candidate with the largest score if it exceeds tau, else None.

    Ties break toward the smallest candidate index.
    """
    if not per_candidate_fids:
        raise ValueError("need at least one candidate score")
    best_j, best_fid = None, -np.inf
    for j, fid in sorted(per_candidate_fids):
        if fid > best_fid:
            best_j, best_fid = j, fid
    return best_j if best_fid > tau else None


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    estimated_set: frozenset[int]
    final_weights: PenaltyWeights
    fid_trace: np.ndarray
    tau_trace: np.ndarray
    rounds_run: int


def _null_tau(pooled: np.ndarray, own_size: int, cfg: TrainConfig,
              rng: np.random.Generator) -> float:
    """Threshold from label-permuted splits of the pooled holdout residuals.

    Under a perfect fit every candidate's observed score is itself one draw
    from this null, so thresholding at the plain null maximum would evict a
    true parent about once per calibration_permutations rounds. Inflating a
    robust upper quantile by tau_multiplier pushes that probability to the
    permille range while staying far below genuine distortion scores.
    """
    n = pooled.size
    fids = np.empty(cfg.calibration_permutations)
    for t in range(cfg.calibration_permutations):
        perm = rng.permutation(n)
        own = pooled[perm[:own_size]]
        rest = pooled[perm[own_size:]]
        fids[t] = ((own.mean() - rest.mean()) ** 2
                   + (own.std() - rest.std()) ** 2)
    return float(max(cfg.tau_multiplier * np.quantile(fids, 0.95), fids.max()))


def identify_parents(batches: list[SampleBatch], cfg: TrainConfig,
                     rng: np.random.Generator) -> IdentificationResult:
    """Run the penalty loop and return the surviving candidate set.

    ``batches`` must cover each candidate's clamp environment exactly once
    (env id j belongs to the environment clamping x_j); an extra env id 0
    batch (no clamps) may be present and then contributes training rows and
    complement residuals only. Rows are split head/tail into train/holdout by
    ``holdout_fraction``; scores always come from holdout rows.

    When a candidate is eliminated its environment leaves the pool for later
    rounds: with the candidate masked the regressor can no longer condition on
    it, so that environment's residual law is distorted by construction, and
    keeping its rows would poison every complement and the null calibration.
    Each round therefore runs the same procedure on the reduced problem over
    the still-active candidates and their environments.
    """
    if not batches:
        raise ValueError("need at least one batch")
    widths = {b.data.shape[1] for b in batches}
    if len(widths) != 1:
        raise ValueError("all batches must have the same width")
    l = widths.pop() - 1
    if l < 2:
        raise ValueError("need at least two candidates: a single environment has no complement")
    ids = [b.env for b in batches]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate environment ids")
    required = set(range(1, l + 1))
    extra = set(ids) - required
    if set(ids) & required != required or extra - {0}:
        raise ValueError(f"environment ids must cover 1..{l} exactly once (plus optional 0)")

    train_batches: list[SampleBatch] = []
    holdout: dict[int, SampleBatch] = {}
    for b in batches:
        n_hold = int(round(b.n * cfg.holdout_fraction))
        n_hold = min(max(n_hold, 2), b.n - 1)
        if b.n < 3:
            raise ValueError("each batch needs at least 3 rows for a train/holdout split")
        train_batches.append(SampleBatch(env=b.env, data=b.data[:b.n - n_hold]))
        holdout[b.env] = SampleBatch(env=b.env, data=b.data[b.n - n_hold:])

    weights = PenaltyWeights.all_active(l)
    max_rounds = cfg.rounds if cfg.rounds is not None else l
    fid_rows: list[np.ndarray] = []
    taus: list[float] = []
    rounds_run = 0
    for _ in range(max_rounds):
        active = weights.active_candidates()
        if not active:
            break
        if len(holdout) < 2:
            # a lone environment has no complement to compare against
            break
        rng_train, rng_cal = rng.spawn(2)
        reg = train_regressor(train_batches, weights, cfg, rng_train)
        residuals = {env: residual_scores(reg, weights, hb).values
                     for env, hb in holdout.items()}
        fids: list[tuple[int, float]] = []
        for j in active:
            own = residuals[j]
            rest = np.concatenate([v for e, v in residuals.items() if e != j])
            fid = frechet_gaussian1d(
                fit_gaussian(EmpiricalSample(own, label=j)),
                fit_gaussian(EmpiricalSample(rest, label=-1)))
            fids.append((j, fid))
        if cfg.tau_auto:
            pooled = np.concatenate(list(residuals.values()))
            own_size = min(residuals[j].size for j in active)
            tau = _null_tau(pooled, own_size, cfg, rng_cal)
        else:
            tau = cfg.tau
        row = np.full(l, np.nan)
        for j, fid in fids:
            row[j - 1] = fid
        fid_rows.append(row)
        taus.append(tau)
        rounds_run += 1
        victim = penalty_step(fids, tau)
        if victim is None:
            break
        weights.deactivate(victim)
        train_batches = [b for b in train_batches if b.env != victim]
        del holdout[victim]

    trace = np.vstack(fid_rows) if fid_rows else np.empty((0, l))
    return IdentificationResult(
        estimated_set=frozenset(weights.active_candidates()),
        final_weights=weights,
        fid_trace=trace,
        tau_trace=np.asarray(taus),
        rounds_run=rounds_run,
    )
